"""DQN agent pieces: junction featurization, reward, policy, replay, targets.

The agent sees one junction at a time.  Its three actions request which axis
to serve (or an all-red clearance); the safety interlock in ``controllers``
turns those requests into legal signal transitions, so yellow never appears as
a raw agent action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qnet
from .qnet import QNetwork

GREEN, YELLOW, RED = "green", "yellow", "red"

#: Agent actions in index order; request names match controllers.REQUESTS.
ACTIONS = ("serve_a", "serve_b", "all_red")

#: Saturation constants for the normalized state components.
WAIT_CAP = 300.0  # s of summed per-lane halt time
PHASE_TIME_CAP = 60.0  # s in current phase

REWARD_MODES = ("literal", "balanced")


@dataclass(frozen=True)
class JunctionView:
    """Snapshot of one junction's incoming lanes (axis A lanes, then axis B).

    Per lane: vehicle count, capacity, halted count, summed accumulated halt
    time of the vehicles currently on it, and its displayed signal color.
    """

    lane_counts: tuple[int, ...]
    lane_capacities: tuple[int, ...]
    lane_halted: tuple[int, ...]
    lane_waits: tuple[float, ...]
    lane_colors: tuple[str, ...]
    phase_onehot: tuple[float, float, float]
    time_in_phase: float


def state_dim(n_lanes: int) -> int:
    """Three features per incoming lane plus phase one-hot and phase time."""
    return 3 * n_lanes + 4


def featurize(view: JunctionView) -> np.ndarray:
    """Normalized state vector; every component lands in [0, 1]."""
    parts = []
    for count, cap, halted, wait in zip(
        view.lane_counts, view.lane_capacities, view.lane_halted, view.lane_waits
    ):
        parts.append(min(1.0, count / cap))
        parts.append(min(1.0, halted / cap))
        parts.append(min(wait, WAIT_CAP) / WAIT_CAP)
    parts.extend(view.phase_onehot)
    parts.append(min(view.time_in_phase, PHASE_TIME_CAP) / PHASE_TIME_CAP)
    return np.asarray(parts, dtype=np.float64)


def waiting_penalty(mean_wait: float) -> float:
    """Coarse waiting term: 0 when idle-free, -0.5 for light, -1 for heavy."""
    if mean_wait == 0.0:
        return 0.0
    if mean_wait < 5.0:
        return -0.5
    return -1.0


def reward_from_counts(greens: int, reds: int, mean_wait: float, mode: str = "balanced") -> float:
    """Reward from signal counts and the mean per-lane waiting time.

    ``balanced`` (the default) penalizes green/red imbalance and waiting.
    ``literal`` is the square-root variant 0.2*sqrt((greens-reds)^2 + W); it
    rewards imbalance instead, and its radicand is clamped at 0 where a
    negative waiting term would otherwise make it undefined.  Kept behind a
    flag for comparison experiments.
    """
    if mode not in REWARD_MODES:
        raise ValueError(f"unknown reward mode {mode!r}")
    diff = greens - reds
    w = waiting_penalty(mean_wait)
    if mode == "literal":
        return 0.2 * math.sqrt(max(0.0, diff * diff + w))
    return -0.2 * abs(diff) + w


def reward(view: JunctionView, action: int, mode: str = "balanced") -> float:
    """Reward for the junction state reached after taking ``action``.

    The action itself does not enter the formula; it is part of the interface
    because the reward is attributed to the (state, action) pair.
    """
    greens = sum(1 for c in view.lane_colors if c == GREEN)
    reds = sum(1 for c in view.lane_colors if c == RED)
    mean_wait = sum(view.lane_waits) / len(view.lane_waits)
    return reward_from_counts(greens, reds, mean_wait, mode)


def select_action(q_values, epsilon: float, rng) -> int:
    """Epsilon-greedy over the q-values; greedy ties break to the lowest index."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, len(q_values)))
    return int(np.argmax(q_values))


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions; uniform sampling with replacement."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition  # FIFO eviction
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng) -> list[Transition]:
        if batch_size > len(self._items):
            raise ValueError(f"cannot sample {batch_size} from a buffer of size {len(self._items)}")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def contents(self) -> list[Transition]:
        """Buffer contents oldest-first (test and inspection helper)."""
        return self._items[self._next :] + self._items[: self._next]


def td_target(transition: Transition, target_net: QNetwork, gamma: float) -> float:
    """Bootstrapped target: r, plus the discounted best target-net value."""
    if transition.terminal:
        return transition.reward
    return transition.reward + gamma * float(np.max(qnet.forward(target_net, transition.next_state)))


def td_targets_batch(batch: list[Transition], target_net: QNetwork, gamma: float) -> np.ndarray:
    next_states = np.stack([t.next_state for t in batch])
    best = qnet.forward_batch(target_net, next_states).max(axis=1)
    rewards = np.array([t.reward for t in batch])
    nonterminal = np.array([0.0 if t.terminal else 1.0 for t in batch])
    return rewards + gamma * best * nonterminal


def sync_target(online: QNetwork) -> QNetwork:
    """Frozen deep copy of the online network."""
    return qnet.clone(online)


class EpsilonSchedule:
    """Linear decay from start to final over the first ``fraction`` of steps."""

    def __init__(self, start: float, final: float, total_steps: int, fraction: float):
        self.start = start
        self.final = final
        self.decay_steps = max(1.0, fraction * total_steps)

    def value(self, step: int) -> float:
        frac = min(1.0, step / self.decay_steps)
        return self.start + (self.final - self.start) * frac


class GreedyPolicy:
    """Evaluation-time controller: argmax actions, recomputed on a cadence."""

    def __init__(self, nets: dict[str, QNetwork], interval: float):
        self.nets = nets
        self.interval = interval
        self._current: dict[str, str] = {jid: ACTIONS[0] for jid in nets}
        self._next_decision = 0.0

    def decide(self, clock: float, make_views) -> dict[str, str]:
        if clock >= self._next_decision:
            views = make_views()
            for jid, net in self.nets.items():
                q = qnet.forward(net, featurize(views[jid]))
                self._current[jid] = ACTIONS[select_action(q, 0.0, None)]
            self._next_decision = clock + self.interval
        return dict(self._current)
