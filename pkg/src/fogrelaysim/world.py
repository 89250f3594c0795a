"""Network topology, node state, mobility and energy accounting.

A world holds randomly deployed IoT sensors, battery-powered mobile relays
spawned on the sensor->destination segments, and one or more destination
nodes.  Relays move in 1-D along their own sensor->destination axis; the
neighbourhood graph is fixed at spawn time.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from importlib import resources

from .agent import Action
from .channel import (DISTANCE_FLOOR, ChannelParams, LinkGeometry,
                      effective_distances, outage_probability)
from .errors import ConfigurationError, StateError, TopologyError

MAX_SENSOR_DEGREE = 6           # max sensor neighbours per relay
REFERENCE_TX_POWER = 0.3        # watts; transmit-cost scale anchor


@dataclass
class SensorNode:
    id: str
    position: tuple[float, float]
    tx_power: float               # P_I, watts


@dataclass
class RelayNode:
    id: str
    home_position: tuple[float, float]
    tx_power: float               # P_R, watts
    battery: float
    battery_capacity: float
    displacement: float = 0.0     # metres along its sensor->destination axis
    mobility_bound: float = 30.0
    alive: bool = True

    @property
    def consumed_fraction(self) -> float:
        return (self.battery_capacity - self.battery) / self.battery_capacity


@dataclass
class DestinationNode:
    id: str
    position: tuple[float, float]


@dataclass
class Topology:
    sensor_neighbors: dict[str, set[str]]   # source id -> relay ids in range
    dest_neighbors: dict[str, set[str]]     # destination id -> relay ids in range
    assignment: dict[str, str | None]       # relay id -> source served this phase
    dest_of_source: dict[str, str]          # source id -> destination it reports to


@dataclass
class EnergyModel:
    cost_move_tx: float = 1.0    # at the reference relay power; split 50/50 move/tx
    cost_idle: float = 0.0
    cost_sync: float = 0.2       # per step per relay, centralized mode only
    capacity: float = 5000.0

    def transmit_cost(self, tx_power: float) -> float:
        return self.cost_move_tx * (0.5 + 0.5 * tx_power / REFERENCE_TX_POWER)


@dataclass
class WorldState:
    sensors: list[SensorNode]
    relays: list[RelayNode]
    destinations: list[DestinationNode]
    topology: Topology
    channel: ChannelParams
    energy: EnergyModel
    rng: random.Random
    space_size: float = 80.0
    # base link distances keyed by (relay id, other node id)
    base_sensor_dist: dict[tuple[str, str], float] = field(default_factory=dict)
    base_dest_dist: dict[tuple[str, str], float] = field(default_factory=dict)
    reset_jitter: float = 2.0
    delta_mode: str = "effective"

    def __post_init__(self):
        self._relay_index = {r.id: r for r in self.relays}
        self._sensor_index = {s.id: s for s in self.sensors}

    def relay_by_id(self, rid: str) -> RelayNode:
        try:
            return self._relay_index[rid]
        except KeyError:
            raise TopologyError(f"unknown relay {rid!r}") from None

    def sensor_by_id(self, sid: str) -> SensorNode:
        try:
            return self._sensor_index[sid]
        except KeyError:
            raise TopologyError(f"unknown sensor {sid!r}") from None

    def serialized(self) -> str:
        """Canonical JSON of the full state, for determinism checks."""
        doc = {
            "sensors": [[s.id, list(s.position), s.tx_power] for s in self.sensors],
            "relays": [[r.id, list(r.home_position), r.tx_power, r.battery,
                        r.battery_capacity, r.displacement, r.mobility_bound,
                        r.alive] for r in self.relays],
            "destinations": [[d.id, list(d.position)] for d in self.destinations],
            "sensor_neighbors": {k: sorted(v) for k, v in
                                 sorted(self.topology.sensor_neighbors.items())},
            "dest_neighbors": {k: sorted(v) for k, v in
                               sorted(self.topology.dest_neighbors.items())},
            "assignment": dict(sorted(self.topology.assignment.items())),
            "dest_of_source": dict(sorted(self.topology.dest_of_source.items())),
            "base_sensor_dist": sorted(
                [[list(k), v] for k, v in self.base_sensor_dist.items()]),
            "base_dest_dist": sorted(
                [[list(k), v] for k, v in self.base_dest_dist.items()]),
            "rng": repr(self.rng.getstate()),
        }
        return json.dumps(doc, sort_keys=True)


def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def apply_move(relay: RelayNode, direction: int, channel: ChannelParams) -> RelayNode:
    """Shift the relay by direction*delta along its axis, clamped to the bound."""
    if not relay.alive:
        raise StateError(f"relay {relay.id} is dead and cannot move")
    d = relay.displacement + direction * channel.step_delta
    bound = relay.mobility_bound
    relay.displacement = -bound if d < -bound else (bound if d > bound else d)
    return relay


def charge_energy(relay: RelayNode, action: Action, mode: str,
                  model: EnergyModel) -> RelayNode:
    """Debit the battery for one step; death is a battery floor at zero."""
    if not relay.alive:
        raise StateError(f"relay {relay.id} is dead and cannot be charged")
    cost = model.transmit_cost(relay.tx_power) if action.transmits else model.cost_idle
    if mode == "centralized":
        cost += model.cost_sync
    relay.battery = max(0.0, relay.battery - cost)
    relay.alive = relay.battery > 0.0
    return relay


def link_geometry(world: WorldState, relay_id: str, source_id: str,
                  dest_id: str) -> LinkGeometry:
    """Effective hop distances for a relay serving a source toward a destination."""
    neighbors = world.topology.sensor_neighbors.get(source_id)
    if neighbors is None or relay_id not in neighbors:
        raise TopologyError(f"relay {relay_id} is not a neighbour of {source_id}")
    relay = world.relay_by_id(relay_id)
    base = LinkGeometry(
        d_sensor_relay=max(DISTANCE_FLOOR, world.base_sensor_dist[(relay_id, source_id)]),
        d_relay_dest=max(DISTANCE_FLOOR, world.base_dest_dist[(relay_id, dest_id)]),
    )
    return effective_distances(base, relay.displacement)


def best_link_quality(p_sensor: float, p_relay: float, span: float,
                      params: ChannelParams) -> float:
    """Best achievable delivered fraction on a segment of length `span`.

    Dense scan of relay positions plus local refinement; no shape
    assumption, since the closed form misbehaves as psi approaches 1.
    """
    lo, hi = DISTANCE_FLOOR, span - DISTANCE_FLOOR
    if hi <= lo:
        return 1.0

    def quality(a: float) -> float:
        geom = LinkGeometry(d_sensor_relay=max(DISTANCE_FLOOR, a),
                            d_relay_dest=max(DISTANCE_FLOOR, span - a))
        return 1.0 - outage_probability(p_sensor, p_relay, geom, params)

    best_a, best_q = lo, quality(lo)
    steps = 64
    for i in range(1, steps + 1):
        a = lo + (hi - lo) * i / steps
        q = quality(a)
        if q > best_q:
            best_a, best_q = a, q
    width = (hi - lo) / steps
    a_lo, a_hi = max(lo, best_a - width), min(hi, best_a + width)
    for _ in range(40):
        m1 = a_lo + (a_hi - a_lo) / 3.0
        m2 = a_hi - (a_hi - a_lo) / 3.0
        if quality(m1) < quality(m2):
            a_lo = m1
        else:
            a_hi = m2
    return max(best_q, quality(0.5 * (a_lo + a_hi)))


# Local-area deployments: the server sits within a few tens of metres of
# the sensor cluster.  The cap also keeps relay-destination distances on
# the physical branch of the outage curve (psi well below 1), where the
# closed form would otherwise spuriously report near-zero outage.
MAX_PLACEMENT_SPAN = 33.0


def max_serviceable_range(p_sensor: float, p_relay: float, params: ChannelParams,
                          threshold: float, hi_limit: float = MAX_PLACEMENT_SPAN) -> float:
    """Largest sensor->destination span still coverable at `threshold` quality."""
    lo = 4.0 * DISTANCE_FLOOR
    if best_link_quality(p_sensor, p_relay, lo, params) < threshold:
        return lo
    hi = hi_limit
    if best_link_quality(p_sensor, p_relay, hi, params) >= threshold:
        return hi
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        if best_link_quality(p_sensor, p_relay, mid, params) >= threshold:
            lo = mid
        else:
            hi = mid
    return lo


def goal_band(p_sensor: float, p_relay: float, span: float, params: ChannelParams,
              threshold: float, samples: int = 160) -> tuple[float, float] | None:
    """Interval of relay positions meeting `threshold` quality, or None."""
    lo, hi = DISTANCE_FLOOR, span - DISTANCE_FLOOR
    if hi <= lo:
        return (lo, hi) if hi > 0 else None
    a_lo = a_hi = None
    for i in range(samples + 1):
        a = lo + (hi - lo) * i / samples
        geom = LinkGeometry(d_sensor_relay=max(DISTANCE_FLOOR, a),
                            d_relay_dest=max(DISTANCE_FLOOR, span - a))
        if 1.0 - outage_probability(p_sensor, p_relay, geom, params) >= threshold:
            if a_lo is None:
                a_lo = a
            a_hi = a
    if a_lo is None:
        return None
    return a_lo, a_hi


def _spawn_overlap(p_sensor, p_relay, span, params, threshold,
                   spawn_low, spawn_high) -> float:
    """Fraction of the relay spawn band that already meets the goal quality."""
    band = goal_band(p_sensor, p_relay, span, params, threshold)
    if band is None:
        return 0.0
    w_lo, w_hi = spawn_low * span, spawn_high * span
    inter = min(band[1], w_hi) - max(band[0], w_lo)
    width = w_hi - w_lo
    return max(0.0, inter) / width if width > 0 else 1.0


def span_for_overlap(p_sensor: float, p_relay: float, params: ChannelParams,
                     threshold: float, target_overlap: float,
                     spawn_low: float, spawn_high: float) -> float:
    """Sensor->destination span whose goal band covers `target_overlap` of
    the relay spawn band.

    Small spans make the whole spawn band serviceable (overlap 1); growing
    the span shrinks and shifts the goal band until the overlap vanishes.
    Bisecting that monotone trade-off pins per-deployment hardness.
    """
    lo = 4.0 * DISTANCE_FLOOR
    hi = MAX_PLACEMENT_SPAN
    if _spawn_overlap(p_sensor, p_relay, hi, params, threshold,
                      spawn_low, spawn_high) >= target_overlap:
        return hi
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _spawn_overlap(p_sensor, p_relay, mid, params, threshold,
                          spawn_low, spawn_high) >= target_overlap:
            lo = mid
        else:
            hi = mid
    return lo


def _build_topology(sensors, relays, destinations, primary, r_comm):
    if r_comm <= 0:
        raise ConfigurationError(f"communication radius must be positive, got {r_comm}")
    sensor_neighbors: dict[str, set[str]] = {s.id: set() for s in sensors}
    relay_sources: dict[str, list[tuple[float, str]]] = {r.id: [] for r in relays}
    for r in relays:
        for s in sensors:
            d = _dist(r.home_position, s.position)
            if d <= r_comm:
                relay_sources[r.id].append((d, s.id))
    # enforce the relay degree cap, keeping the nearest sources
    for r in relays:
        nearest = sorted(relay_sources[r.id])[:MAX_SENSOR_DEGREE]
        for _, sid in nearest:
            sensor_neighbors[sid].add(r.id)
    dest_neighbors = {
        d.id: {r.id for r in relays if _dist(r.home_position, d.position) <= r_comm}
        for d in destinations
    }
    uncovered = [sid for sid, nb in sensor_neighbors.items() if not nb]
    if uncovered:
        raise ConfigurationError(
            f"no relay within {r_comm} m of source(s) {', '.join(sorted(uncovered))}; "
            f"increase relay count or communication radius")
    assignment: dict[str, str | None] = {}
    for r in relays:
        pref = primary.get(r.id)
        if pref is not None and r.id in sensor_neighbors.get(pref, set()):
            assignment[r.id] = pref
        else:
            mine = sorted((d, sid) for d, sid in relay_sources[r.id]
                          if r.id in sensor_neighbors[sid])
            assignment[r.id] = mine[0][1] if mine else None
    dest_of_source = {
        s.id: min(destinations, key=lambda d: _dist(s.position, d.position)).id
        for s in sensors
    }
    return Topology(sensor_neighbors=sensor_neighbors, dest_neighbors=dest_neighbors,
                    assignment=assignment, dest_of_source=dest_of_source)


def _load_scenario(ref: str) -> dict:
    if ref.endswith(".json"):
        with open(ref, "r", encoding="utf-8") as fh:
            return json.load(fh)
    path = resources.files("fogrelaysim").joinpath(f"scenarios/{ref}.json")
    if not path.is_file():
        raise ConfigurationError(f"unknown scenario {ref!r} (no file and no builtin)")
    return json.loads(path.read_text(encoding="utf-8"))


def _world_from_scenario(doc: dict, config, rng: random.Random) -> WorldState:
    channel = config.channel_params()
    energy = config.energy_model()
    try:
        sensors = [SensorNode(id=s["id"], position=tuple(s["position"]),
                              tx_power=float(s.get("tx_power", config.p_i_max)))
                   for s in doc["sensors"]]
        relays = [RelayNode(id=r["id"], home_position=tuple(r["position"]),
                            tx_power=float(r.get("tx_power", config.p_r)),
                            battery=energy.capacity, battery_capacity=energy.capacity,
                            mobility_bound=config.mobility_bound)
                  for r in doc["relays"]]
        destinations = [DestinationNode(id=d["id"], position=tuple(d["position"]))
                        for d in doc["destinations"]]
        primary = {r["id"]: r.get("primary_source") for r in doc["relays"]}
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed scenario file: {exc}") from exc

    if "sensor_neighbors" in doc:
        sensor_neighbors = {sid: set(v) for sid, v in doc["sensor_neighbors"].items()}
        dest_neighbors = {did: set(v) for did, v in doc["dest_neighbors"].items()}
        assignment = {}
        for r in relays:
            pref = primary.get(r.id)
            if pref is not None and r.id in sensor_neighbors.get(pref, set()):
                assignment[r.id] = pref
            else:
                mine = sorted(sid for sid, nb in sensor_neighbors.items() if r.id in nb)
                assignment[r.id] = mine[0] if mine else None
        dest_of_source = {
            s.id: min(destinations, key=lambda d: _dist(s.position, d.position)).id
            for s in sensors
        }
        topology = Topology(sensor_neighbors, dest_neighbors, assignment, dest_of_source)
        uncovered = [sid for sid, nb in sensor_neighbors.items() if not nb]
        if uncovered:
            raise ConfigurationError(f"scenario leaves source(s) uncovered: {uncovered}")
    else:
        topology = _build_topology(sensors, relays, destinations, primary, config.r_comm)

    world = WorldState(sensors=sensors, relays=relays, destinations=destinations,
                       topology=topology, channel=channel, energy=energy, rng=rng,
                       space_size=config.space_size, reset_jitter=config.reset_jitter,
                       delta_mode=config.delta_mode)
    _fill_base_distances(world)
    return world


def _fill_base_distances(world: WorldState) -> None:
    for r in world.relays:
        for s in world.sensors:
            world.base_sensor_dist[(r.id, s.id)] = _dist(r.home_position, s.position)
        for d in world.destinations:
            world.base_dest_dist[(r.id, d.id)] = _dist(r.home_position, d.position)


def init_world(config, seed: int) -> WorldState:
    """Deterministically build a world from (config, seed)."""
    rng = random.Random(f"{seed}:world")
    if config.scenario:
        return _world_from_scenario(_load_scenario(config.scenario), config, rng)

    channel = config.channel_params()
    energy = config.energy_model()
    space = config.space_size
    sensors = []
    for i in range(config.sensor_count):
        pos = (rng.uniform(0.0, space), rng.uniform(0.0, space))
        p_i = rng.uniform(config.p_i_min, config.p_i_max)
        sensors.append(SensorNode(id=f"S{i:02d}", position=pos, tx_power=p_i))

    # The destination (local server) is placed at a random bearing from the
    # sensor centroid, at a span chosen so that a target fraction of the
    # relay spawn band already meets the goal quality.  Deployments stay
    # serviceable (the premise of relaying) with per-seed hardness drawn
    # uniformly between the configured overlap bounds.
    cx = sum(s.position[0] for s in sensors) / len(sensors)
    cy = sum(s.position[1] for s in sensors) / len(sensors)
    weakest = min(s.tx_power for s in sensors)
    target = rng.uniform(config.overlap_low, config.overlap_high)
    span = span_for_overlap(weakest, config.p_r, channel, config.goal_threshold,
                            target, config.relay_spawn_low, config.relay_spawn_high)
    dest_pos = None
    for _ in range(256):
        theta = rng.uniform(0.0, 2.0 * math.pi)
        cand = (cx + span * math.cos(theta), cy + span * math.sin(theta))
        if 0.0 <= cand[0] <= space and 0.0 <= cand[1] <= space:
            dest_pos = cand
            break
    if dest_pos is None:
        dest_pos = (min(space, max(0.0, cx + span)), min(space, max(0.0, cy)))
    destinations = [DestinationNode(id="D00", position=dest_pos)]

    relays = []
    primary = {}
    for i in range(config.relay_count):
        src = sensors[i % len(sensors)]
        dst = destinations[i % len(destinations)]
        f = rng.uniform(config.relay_spawn_low, config.relay_spawn_high)
        home = (src.position[0] + f * (dst.position[0] - src.position[0]),
                src.position[1] + f * (dst.position[1] - src.position[1]))
        rid = f"R{i:02d}"
        relays.append(RelayNode(id=rid, home_position=home, tx_power=config.p_r,
                                battery=energy.capacity, battery_capacity=energy.capacity,
                                mobility_bound=config.mobility_bound))
        primary[rid] = src.id

    topology = _build_topology(sensors, relays, destinations, primary, config.r_comm)
    world = WorldState(sensors=sensors, relays=relays, destinations=destinations,
                       topology=topology, channel=channel, energy=energy, rng=rng,
                       space_size=space, reset_jitter=config.reset_jitter,
                       delta_mode=config.delta_mode)
    _fill_base_distances(world)
    return world


def reset_episode(world: WorldState) -> None:
    """Refill batteries and re-jitter relay positions for a fresh episode."""
    j = world.reset_jitter
    for r in world.relays:
        r.battery = r.battery_capacity
        r.alive = True
        d = world.rng.uniform(-j, j) if j > 0 else 0.0
        bound = r.mobility_bound
        r.displacement = -bound if d < -bound else (bound if d > bound else d)
