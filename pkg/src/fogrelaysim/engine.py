"""Step loop, episode loop and batch orchestration.

One step is one transmission phase: every alive relay acts (its own
epsilon-greedy policy in decentralized mode, the controller's command in
centralized mode), outage is evaluated on the moved geometry, energy is
charged, the destination broadcasts feedback, and decentralized agents
apply one temporal-difference update each.

An episode ends when every source was served at goal quality in the same
step, when some source has no alive relay left, or at the step cap.
"""

from __future__ import annotations

import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from math import exp as _exp, log as _log

from .agent import (Action, LearningParams, Observation, QTable, discretize,
                    epsilon)
from .config import SimConfig
from .coordination import (ControllerState, build_feedback, centralized_policy,
                           centralized_select, receive_feedback)
from .errors import ConfigurationError
from .world import WorldState, init_world, reset_episode

GOAL = "Goal"
DEATH = "Death"
MAX_STEP = "MaxStep"

# Nominal cost of one agent-step, used for the deterministic time column in
# the episodes CSV.  Measured wall-clock is reported separately (timings
# sidecar) because it can never be byte-reproducible.
AGENT_STEP_MS = 0.002


@dataclass
class StepOutcome:
    step_index: int
    per_relay: dict[str, dict]               # action, outage, energy, states, reward
    per_source: dict[str, tuple[float, bool]]  # delivered fraction, goal flag
    clamped_events: int = 0


@dataclass
class EpisodeRecord:
    episode: int
    termination: str
    steps: int
    per_relay_reward: dict[str, float]
    per_relay_consumed: dict[str, float]
    per_relay_actions: dict[str, list[int]]    # [closer, farther, nothing]
    per_relay_transmits: dict[str, int]
    per_source_delivered: dict[str, float]
    time_ms: float                             # modeled, deterministic
    wall_ms: float                             # measured, informational only
    clamped_events: int = 0

    @property
    def reward_sum(self) -> float:
        return sum(self.per_relay_reward.values())


@dataclass
class RunResult:
    mode: str
    relay_count: int
    seed: int
    records: list[EpisodeRecord]
    wall_ms: float
    clamped_events: int
    config_fingerprint: str
    qtables: dict[str, QTable] = field(default_factory=dict, repr=False)


@dataclass
class BatchResult:
    runs: list[RunResult]
    config_fingerprint: str


class SimulationRun:
    """Owns one world plus its agents/controller for a full experiment run."""

    def __init__(self, config: SimConfig, seed: int, mode: str):
        if mode not in ("decentralized", "centralized"):
            raise ConfigurationError(f"unknown mode {mode!r}")
        self.config = config
        self.seed = seed
        self.mode = mode
        self.world: WorldState = init_world(config, seed)
        self.params = LearningParams(
            alpha=config.alpha, gamma=config.gamma,
            epsilon_coefficient=config.epsilon_coefficient,
            episodes=config.episodes, max_steps=config.max_steps,
            goal_threshold=config.goal_threshold, reward_goal=config.reward_goal)
        self.rng = random.Random(f"{seed}:{mode}:policy")
        self.agents: dict[str, QTable] = {}
        if mode == "decentralized":
            self.agents = {r.id: QTable(self.params) for r in self.world.relays}
        self.controller = ControllerState(ema_weight=config.ema_weight)
        self._pending_history: dict[str, float] = {}
        self.episode_index = 0
        self.step_index = 0
        self.agent_steps: dict[str, int] = {r.id: 0 for r in self.world.relays}
        self.observations: dict[str, Observation] = {}
        self._states: dict[str, object] = {}
        self.clamped_events = 0
        self._extra_delta = (config.delta * 1.0
                             if config.delta_mode == "literal" else 0.0)
        self._order = sorted(r.id for r in self.world.relays)
        self._build_fast_context()

    def _build_fast_context(self) -> None:
        """Per-relay caches for the hot loop; semantics match the world ops."""
        world, topo = self.world, self.world.topology
        self._ctx = []
        for rid in self._order:
            relay = world.relay_by_id(rid)
            sid = topo.assignment.get(rid)
            if sid is not None:
                src = world.sensor_by_id(sid)
                dest_id = topo.dest_of_source[sid]
                base_di = max(0.1, world.base_sensor_dist[(rid, sid)])
                base_ds = max(0.1, world.base_dest_dist[(rid, dest_id)])
                p_i = src.tx_power
            else:
                base_di = base_ds = p_i = 0.0
            self._ctx.append((rid, relay, sid, p_i, base_di, base_ds,
                              world.energy.transmit_cost(relay.tx_power)))
        ch = world.channel
        self._n0k = ch.noise_power * ch.snr_threshold
        self._sigma = ch.path_loss_exponent
        self._delta = ch.step_delta
        self._in_dest = {
            rid: any(rid in topo.dest_neighbors.get(d.id, set())
                     for d in world.destinations)
            for rid in self._order
        }

    def _outage_raw(self, p_i: float, p_r: float, d_i: float, d_s: float) -> float:
        """Inline of the channel closed form (identical arithmetic)."""
        d_i += self._extra_delta
        d_s += self._extra_delta
        n0k, sigma = self._n0k, self._sigma
        if sigma == 3.0:
            u = n0k * (d_s * d_s * d_s) / p_r
            x = n0k * (d_i * d_i * d_i) / p_i
        else:
            u = n0k * d_s ** sigma / p_r
            x = n0k * d_i ** sigma / p_i
        return 1.0 - (1.0 + u * _log(u)) * _exp(-x)

    # -- observation plumbing -------------------------------------------------

    def _initial_redundancy(self, rid: str) -> int:
        topo = self.world.topology
        sid = topo.assignment.get(rid)
        if sid is None:
            return 0
        dest = topo.dest_of_source[sid]
        potential = {
            other for other in topo.sensor_neighbors.get(sid, set())
            if other in topo.dest_neighbors.get(dest, set())
            and self.world.relay_by_id(other).alive
        }
        return len(potential - {rid})

    def reset_observations(self) -> None:
        # No transmission has happened yet, so the outage observation starts
        # pessimistic (how the idle branch reports it) and energy at zero.
        self.observations = {
            r.id: Observation(outage_fraction=1.0, energy_consumed_fraction=0.0,
                              redundant_relays=self._initial_redundancy(r.id))
            for r in self.world.relays
        }
        self._states = {rid: discretize(obs) for rid, obs in self.observations.items()}

    # -- a single transmission phase -----------------------------------------

    def current_epsilon(self, rid: str) -> float:
        # The floor keeps exploration alive so that a stale action ordering
        # cannot freeze a wrong policy once the schedule has decayed.
        if self.config.epsilon_schedule == "episode":
            e = epsilon(self.episode_index, self.params)
        else:
            e = epsilon(self.agent_steps[rid], self.params)
        floor = self.config.epsilon_floor
        return e if e > floor else floor

    def _centralized_assign(self) -> None:
        """(Re)select one relay per source from delivery history."""
        world, topo = self.world, self.world.topology
        taken: set[str] = set()
        chosen: dict[str, str] = {}
        for sensor in world.sensors:
            candidates = [rid for rid in topo.sensor_neighbors.get(sensor.id, set())
                          if world.relay_by_id(rid).alive and rid not in taken]
            if not candidates:
                continue
            pick = centralized_select(self.controller, sensor.id, candidates, world)
            taken.add(pick)
            chosen[sensor.id] = pick
        self.controller.current_active = chosen

    def run_step(self) -> StepOutcome:
        world = self.world
        topo = world.topology
        self.step_index += 1
        per_relay: dict[str, dict] = {}
        decentralized = self.mode == "decentralized"
        cost_idle = world.energy.cost_idle
        cost_sync = world.energy.cost_sync if not decentralized else 0.0
        delivered: dict[str, float] = {s.id: 0.0 for s in world.sensors}
        clamped_now = 0

        active: dict[str, str] = {}
        if not decentralized:
            # Selection is re-evaluated per synchronization round (one per
            # episode) and immediately after an active relay dies; between
            # rounds the controller's choice is held.
            stale = any(not world.relay_by_id(rid).alive
                        for rid in self.controller.current_active.values())
            if not self.controller.current_active or stale:
                self._centralized_assign()
            active = {rid: sid for sid, rid in self.controller.current_active.items()}

        for rid, relay, sid, p_i, base_di, base_ds, tx_cost in self._ctx:
            if not relay.alive:
                continue
            self.agent_steps[rid] += 1
            serve = sid
            if decentralized:
                s_before = self._states[rid]
                eps = self.current_epsilon(rid)
                action = self.agents[rid].select_action(s_before, eps, self.rng)
            else:
                s_before = None
                serve = active.get(rid)
                action = (centralized_policy(world, rid, serve)
                          if serve is not None else Action.DO_NOTHING)

            outage_obs = 1.0
            if action.transmits:
                # move first (clamped at the mobility bound), transmit after
                d = relay.displacement + action.direction * self._delta
                bound = relay.mobility_bound
                relay.displacement = -bound if d < -bound else (bound if d > bound else d)
                if serve is not None:
                    disp = relay.displacement
                    if not decentralized:
                        src = world.sensor_by_id(serve)
                        p_eff = src.tx_power
                        di0 = max(0.1, world.base_sensor_dist[(rid, serve)])
                        ds0 = max(0.1, world.base_dest_dist[
                            (rid, topo.dest_of_source[serve])])
                    else:
                        p_eff, di0, ds0 = p_i, base_di, base_ds
                    d_i = di0 + disp
                    if d_i < 0.1:
                        d_i = 0.1
                    d_s = ds0 - disp
                    if d_s < 0.1:
                        d_s = 0.1
                    raw = self._outage_raw(p_eff, relay.tx_power, d_i, d_s)
                    if raw < 0.0 or raw > 1.0:
                        clamped_now += 1
                        raw = 0.0 if raw < 0.0 else 1.0
                    outage_obs = raw
                    quality = 1.0 - raw
                    if self.config.stochastic_packets:
                        m = self.config.packets_per_phase
                        hits = sum(1 for _ in range(m) if self.rng.random() < quality)
                        quality = hits / m
                    if quality > delivered[serve]:
                        delivered[serve] = quality
                cost = tx_cost + cost_sync
            else:
                cost = cost_idle + cost_sync
            battery_before = relay.battery
            battery = battery_before - cost
            if battery <= 0.0:
                battery = 0.0
                relay.alive = False
            relay.battery = battery
            per_relay[rid] = {
                "action": action,
                "outage": outage_obs,
                "energy": battery_before - battery,
                "s_before": s_before,
                "s_after": None,
                "reward": 0.0,
                "serve": serve,
            }
        self.clamped_events += clamped_now

        goal_threshold = self.params.goal_threshold
        per_source = {s: (d, d >= goal_threshold) for s, d in delivered.items()}

        if decentralized:
            messages = {d.id: build_feedback(d.id, delivered, world)
                        for d in world.destinations}
            for rid, info in per_relay.items():
                relay = world.relay_by_id(rid)
                redundancy = self.observations[rid].redundant_relays
                if self._in_dest[rid]:
                    for dest in world.destinations:
                        if rid not in topo.dest_neighbors.get(dest.id, set()):
                            continue
                        fragment = receive_feedback(rid, topo.assignment.get(rid),
                                                    messages[dest.id])
                        if fragment is not None:
                            redundancy = fragment[1]
                obs = Observation(
                    outage_fraction=info["outage"],
                    energy_consumed_fraction=min(1.0, relay.consumed_fraction),
                    redundant_relays=redundancy)
                self.observations[rid] = obs
                self._states[rid] = discretize(obs)
                info["s_after"] = self._states[rid]
        else:
            # The controller's history tracks episode outcomes: remember the
            # latest phase result per active relay and fold it into the EMA
            # when the episode closes (run_episode), one record per sync round.
            for rid, info in per_relay.items():
                if info["serve"] is not None and info["action"].transmits:
                    self._pending_history[rid] = delivered[info["serve"]]

        reward_goal = self.params.reward_goal
        for rid, info in per_relay.items():
            relay = world.relay_by_id(rid)
            serve = topo.assignment.get(rid)
            goal_here = (serve is not None and per_source[serve][1] and relay.alive)
            r = reward_goal if goal_here else 0.0
            info["reward"] = r
            if decentralized:
                self.agents[rid].update(info["s_before"], info["action"], r,
                                        info["s_after"])

        return StepOutcome(step_index=self.step_index, per_relay=per_relay,
                           per_source=per_source, clamped_events=clamped_now)

    # -- episode and run loops -------------------------------------------------

    def _termination(self, outcome: StepOutcome, steps: int) -> str | None:
        if outcome.per_source and all(goal for _, goal in outcome.per_source.values()):
            return GOAL
        topo = self.world.topology
        for sensor in self.world.sensors:
            neighbors = topo.sensor_neighbors.get(sensor.id, set())
            if not any(self.world.relay_by_id(rid).alive for rid in neighbors):
                return DEATH
        if steps >= self.params.max_steps:
            return MAX_STEP
        return None

    def run_episode(self, episode: int) -> EpisodeRecord:
        self.episode_index = episode
        reset_episode(self.world)
        self.reset_observations()
        self.controller.current_active = {}
        self._pending_history = {}
        self.step_index = 0
        t0 = time.perf_counter()
        rewards = {rid: 0.0 for rid in self._order}
        histogram = {rid: [0, 0, 0] for rid in self._order}
        transmits = {rid: 0 for rid in self._order}
        final_delivered = {s.id: 0.0 for s in self.world.sensors}
        agent_step_count = 0
        clamp0 = self.clamped_events
        steps = 0
        while True:
            outcome = self.run_step()
            steps += 1
            agent_step_count += len(outcome.per_relay)
            for rid, info in outcome.per_relay.items():
                rewards[rid] += info["reward"]
                histogram[rid][int(info["action"])] += 1
                if info["action"].transmits:
                    transmits[rid] += 1
            for sid, (d, _) in outcome.per_source.items():
                final_delivered[sid] = d
            cause = self._termination(outcome, steps)
            if cause is not None:
                break
        wall_ms = (time.perf_counter() - t0) * 1e3
        for rid, outcome_quality in self._pending_history.items():
            self.controller.record(rid, outcome_quality)
        consumed = {r.id: r.consumed_fraction for r in self.world.relays}
        return EpisodeRecord(
            episode=episode, termination=cause, steps=steps,
            per_relay_reward=rewards, per_relay_consumed=consumed,
            per_relay_actions=histogram, per_relay_transmits=transmits,
            per_source_delivered=final_delivered,
            time_ms=AGENT_STEP_MS * agent_step_count, wall_ms=wall_ms,
            clamped_events=self.clamped_events - clamp0)

    def run(self) -> RunResult:
        t0 = time.perf_counter()
        records = [self.run_episode(ep) for ep in range(self.config.episodes)]
        wall_ms = (time.perf_counter() - t0) * 1e3
        return RunResult(mode=self.mode, relay_count=self.config.relay_count,
                         seed=self.seed, records=records, wall_ms=wall_ms,
                         clamped_events=self.clamped_events,
                         config_fingerprint=self.config.fingerprint(),
                         qtables=self.agents)


def run_step(run: SimulationRun) -> StepOutcome:
    return run.run_step()


def run_episode(run: SimulationRun, episode: int) -> EpisodeRecord:
    return run.run_episode(episode)


def run_experiment(config: SimConfig, seed: int, mode: str) -> RunResult:
    return SimulationRun(config, seed, mode).run()


def _batch_task(args):
    config, seed, mode = args
    return run_experiment(config, seed, mode)


def run_batch(config: SimConfig, base_seed: int, runs: int,
              modes: tuple[str, ...] = ("decentralized", "centralized"),
              relay_counts: tuple[int, ...] = (1, 2, 3, 4, 5),
              workers: int = 1, progress=None) -> BatchResult:
    """Cartesian sweep over modes x relay counts x run seeds.

    Runs are independent; any worker count produces the same merged result,
    ordered by (mode, relay_count, run index).
    """
    if runs < 1:
        raise ConfigurationError(f"runs must be >= 1, got {runs}")
    tasks = []
    for mode in modes:
        for k in relay_counts:
            for idx in range(runs):
                cfg = replace(config, relay_count=k, mode=mode)
                tasks.append((cfg, base_seed + idx, mode))
    results: list[RunResult] = []
    if workers <= 1:
        for i, task in enumerate(tasks):
            results.append(_batch_task(task))
            if progress:
                progress(i + 1, len(tasks), results[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, res in enumerate(pool.map(_batch_task, tasks, chunksize=1)):
                results.append(res)
                if progress:
                    progress(i + 1, len(tasks), res)
    order = {(mode, k): i for i, (mode, k) in
             enumerate((m, k) for m in modes for k in relay_counts)}
    results.sort(key=lambda r: (order[(r.mode, r.relay_count)], r.seed))
    return BatchResult(runs=results, config_fingerprint=config.fingerprint())
