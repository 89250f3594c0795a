"""Tabular Q-learning brain of a single mobile fog relay.

State is the discretized triple (outage cost, energy consumed, redundant
neighbours), 3 bins each -> 27 states.  Three actions: move toward the
destination and transmit, move away and transmit, or stay passive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ChannelDomainError, StateError

N_STATES = 27
N_ACTIONS = 3


class Action(IntEnum):
    MOVE_CLOSER_TX = 0    # displacement +delta (toward destination), then transmit
    MOVE_FARTHER_TX = 1   # displacement -delta (toward sensor), then transmit
    DO_NOTHING = 2

    @property
    def transmits(self) -> bool:
        return self is not Action.DO_NOTHING

    @property
    def direction(self) -> int:
        """Signed unit move along the sensor->destination axis."""
        if self is Action.MOVE_CLOSER_TX:
            return 1
        if self is Action.MOVE_FARTHER_TX:
            return -1
        return 0


@dataclass(frozen=True)
class Observation:
    outage_fraction: float          # last observed outage cost in [0, 1]
    energy_consumed_fraction: float  # (capacity - battery) / capacity in [0, 1]
    redundant_relays: int            # other alive relays able to serve the same source


@dataclass(frozen=True)
class StateIndex:
    outage_bin: int
    energy_bin: int
    redundancy_bin: int

    @property
    def flat(self) -> int:
        return self.outage_bin * 9 + self.energy_bin * 3 + self.redundancy_bin


@dataclass(frozen=True)
class LearningParams:
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon_coefficient: float = 0.0015
    episodes: int = 100
    max_steps: int = 100_000
    goal_threshold: float = 0.95
    reward_goal: float = 100.0


def _fraction_bin(x: float) -> int:
    # left-closed thirds: [0,1/3) -> 0, [1/3,2/3) -> 1, [2/3,1] -> 2
    if x < 1.0 / 3.0:
        return 0
    if x < 2.0 / 3.0:
        return 1
    return 2


def discretize(obs: Observation) -> StateIndex:
    """Map a raw observation onto the 27-cell state grid."""
    for name, v in (("outage_fraction", obs.outage_fraction),
                    ("energy_consumed_fraction", obs.energy_consumed_fraction)):
        if not (math.isfinite(v) and 0.0 <= v <= 1.0):
            raise ChannelDomainError(f"{name} out of [0,1]: {v!r}")
    if obs.redundant_relays < 0:
        raise ChannelDomainError(f"redundant_relays must be >= 0, got {obs.redundant_relays}")
    redundancy = obs.redundant_relays if obs.redundant_relays < 2 else 2
    return StateIndex(
        outage_bin=_fraction_bin(obs.outage_fraction),
        energy_bin=_fraction_bin(obs.energy_consumed_fraction),
        redundancy_bin=redundancy,
    )


def epsilon(n: int, params: LearningParams) -> float:
    """Exploration rate e^(-c*n); n counts learning progress (see engine)."""
    return math.exp(-params.epsilon_coefficient * n)


def reward(goal_reached: bool, params: LearningParams = LearningParams()) -> float:
    """Binary reward: `reward_goal` when the goal predicate held, else 0."""
    return params.reward_goal if goal_reached else 0.0


class QTable:
    """27x3 action-value table with visit counters for diagnostics."""

    def __init__(self, params: LearningParams = LearningParams()):
        self.params = params
        self.values = np.zeros((N_STATES, N_ACTIONS))
        self.visit_counts = np.zeros((N_STATES, N_ACTIONS), dtype=np.int64)
        # With zero init and rewards in {0, R}, values stay in [0, R/(1-gamma)].
        self._bound = params.reward_goal / (1.0 - params.gamma) + 1e-9

    def select_action(self, s: StateIndex, eps: float, rng) -> Action:
        """epsilon-greedy over the state's row; exact ties broken uniformly."""
        if eps > 0.0 and rng.random() < eps:
            return Action(rng.randrange(N_ACTIONS))
        row = self.values[s.flat]
        best = row[0]
        if row[1] > best:
            best = row[1]
        if row[2] > best:
            best = row[2]
        ties = [a for a in range(N_ACTIONS) if row[a] == best]
        if len(ties) == 1:
            return Action(ties[0])
        return Action(ties[rng.randrange(len(ties))])

    def update(self, s: StateIndex, a: Action, r: float, s_next: StateIndex) -> None:
        """One temporal-difference backup; touches exactly cell (s, a)."""
        i, j = s.flat, int(a)
        q = self.values[i, j]
        target = r + self.params.gamma * self.values[s_next.flat].max()
        new = q + self.params.alpha * (target - q)
        if not (-1e-9 <= new <= self._bound):
            raise StateError(f"Q-value {new} escaped [0, {self._bound}] at ({s}, {a})")
        self.values[i, j] = new
        self.visit_counts[i, j] += 1

    def dump(self) -> str:
        """Plain-text matrix with (outage, energy, redundancy) row labels."""
        lines = ["# state (outage_bin,energy_bin,redundancy_bin)  "
                 "closer_tx  farther_tx  do_nothing  [visits]"]
        for o in range(3):
            for e in range(3):
                for r_ in range(3):
                    s = StateIndex(o, e, r_)
                    row = self.values[s.flat]
                    visits = self.visit_counts[s.flat]
                    lines.append(
                        f"({o},{e},{r_})  {row[0]: .6f}  {row[1]: .6f}  {row[2]: .6f}"
                        f"  [{visits[0]} {visits[1]} {visits[2]}]")
        return "\n".join(lines) + "\n"


def select_action(q: QTable, s: StateIndex, eps: float, rng) -> Action:
    return q.select_action(s, eps, rng)


def update(q: QTable, s: StateIndex, a: Action, r: float, s_next: StateIndex) -> None:
    q.update(s, a, r, s_next)
