"""Destination feedback broadcast (decentralized) and the global controller.

Decentralized mode: after every transmission phase each destination
broadcasts, to the relays in its neighbourhood, the delivered fraction per
source plus the set of alive relays still able to serve that source.  A
relay that cannot serve the covered source discards the message.

Centralized baseline: a controller with global knowledge activates one
relay per source, chosen by delivered-packet history, and commands the
greedy move; every relay pays a per-step synchronization charge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .agent import Action
from .channel import LinkGeometry, outage_probability
from .errors import TopologyError
from .world import WorldState, link_geometry


@dataclass(frozen=True)
class FeedbackMessage:
    destination: str
    # source id -> (delivered fraction this phase, alive relays able to serve it)
    per_source: dict[str, tuple[float, frozenset[str]]]


def build_feedback(dest_id: str, phase_delivered: dict[str, float],
                   world: WorldState) -> FeedbackMessage:
    """One message per destination, covering every source that reports to it."""
    topo = world.topology
    in_dest = topo.dest_neighbors.get(dest_id, set())
    per_source = {}
    for source_id, delivered in phase_delivered.items():
        if topo.dest_of_source.get(source_id) != dest_id:
            continue
        potential = frozenset(
            rid for rid in topo.sensor_neighbors.get(source_id, set())
            if rid in in_dest and world.relay_by_id(rid).alive)
        per_source[source_id] = (delivered, potential)
    return FeedbackMessage(destination=dest_id, per_source=per_source)


def receive_feedback(relay_id: str, source_assignment: str | None,
                     msg: FeedbackMessage) -> tuple[float, int] | None:
    """Extract (delivered fraction, redundant count) or discard.

    Discards when the relay serves no source, its source is not covered by
    this destination, or the relay cannot actually serve that source.  A
    receiving relay is alive and in the destination's neighbourhood, so
    membership in the potential set is equivalent to membership in the
    source's neighbourhood.
    """
    if source_assignment is None or source_assignment not in msg.per_source:
        return None
    delivered, potential = msg.per_source[source_assignment]
    if relay_id not in potential:
        return None
    return delivered, len(potential) - 1


@dataclass
class ControllerState:
    """Delivery history and current activation of the centralized baseline."""

    ema_weight: float = 0.3
    delivery_history: dict[str, float] = field(default_factory=dict)
    current_active: dict[str, str] = field(default_factory=dict)

    def record(self, relay_id: str, delivered: float) -> None:
        old = self.delivery_history.get(relay_id)
        if old is None:
            self.delivery_history[relay_id] = delivered
        else:
            w = self.ema_weight
            self.delivery_history[relay_id] = w * delivered + (1.0 - w) * old


def _predicted_delivery(world: WorldState, relay_id: str, source_id: str) -> float:
    source = world.sensor_by_id(source_id)
    dest_id = world.topology.dest_of_source[source_id]
    geom = link_geometry(world, relay_id, source_id, dest_id)
    relay = world.relay_by_id(relay_id)
    extra = world.channel.step_delta if world.delta_mode == "literal" else 0.0
    return 1.0 - outage_probability(source.tx_power, relay.tx_power, geom,
                                    world.channel, extra)


def centralized_select(ctrl: ControllerState, source_id: str,
                       candidates: list[str], world: WorldState) -> str:
    """Pick the best relay for a source: history EMA, probe estimate if unseen."""
    if not candidates:
        raise TopologyError(f"no candidate relay for source {source_id}")
    best_id, best_score = None, -1.0
    for rid in sorted(candidates):
        score = ctrl.delivery_history.get(rid)
        if score is None:
            score = _predicted_delivery(world, rid, source_id)
        if score > best_score:
            best_id, best_score = rid, score
    return best_id


def centralized_policy(world: WorldState, relay_id: str, source_id: str) -> Action:
    """One-step greedy descent: the transmit move with lower predicted outage."""
    source = world.sensor_by_id(source_id)
    dest_id = world.topology.dest_of_source[source_id]
    relay = world.relay_by_id(relay_id)
    extra = world.channel.step_delta if world.delta_mode == "literal" else 0.0
    base = LinkGeometry(
        d_sensor_relay=max(0.1, world.base_sensor_dist[(relay_id, source_id)]),
        d_relay_dest=max(0.1, world.base_dest_dist[(relay_id, dest_id)]),
    )
    delta = world.channel.step_delta
    bound = relay.mobility_bound
    outcomes = []
    for action, direction in ((Action.MOVE_CLOSER_TX, 1), (Action.MOVE_FARTHER_TX, -1)):
        d = relay.displacement + direction * delta
        d = -bound if d < -bound else (bound if d > bound else d)
        geom = LinkGeometry(
            d_sensor_relay=max(0.1, base.d_sensor_relay + d),
            d_relay_dest=max(0.1, base.d_relay_dest - d),
        )
        p_out = outage_probability(source.tx_power, relay.tx_power, geom,
                                   world.channel, extra)
        outcomes.append((p_out, action))
    # ties fall to MOVE_CLOSER_TX because it is listed first
    return min(outcomes, key=lambda t: t[0])[1]
