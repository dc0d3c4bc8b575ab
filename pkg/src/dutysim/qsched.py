"""Tabular Q-learning for duty-cycle selection.

State is a discrete scheduling period (hour of day by default), actions are
activation intervals in seconds. The table stores float32 values with all
update arithmetic done in float64, plus a visit counter per cell. Learning
follows the one-step update

    Q(s, a) <- Q(s, a) + alpha * (r + gamma * max_a' Q(s', a') - Q(s, a))

with epsilon-greedy selection and per-episode epsilon decay
epsilon <- max(eps_min, epsilon * eps_decay).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import QTableFormatError

__all__ = [
    "ActionSpace",
    "DEFAULT_ACTIONS",
    "Hyperparameters",
    "QTable",
    "RewardInputs",
    "reward",
    "q_update",
    "select_action",
    "decay_epsilon",
    "init_from_distribution",
    "save_qtable",
    "load_qtable",
]

DEFAULT_ACTIONS = (3.0, 5.0, 60.0, 300.0, 1800.0)

_MAGIC = b"QTBL"
_VERSION = 1


@dataclass(frozen=True)
class ActionSpace:
    """Strictly increasing activation intervals, seconds."""

    intervals: tuple[float, ...] = DEFAULT_ACTIONS

    def __post_init__(self):
        if len(self.intervals) < 2:
            raise ValueError("action space needs at least 2 intervals")
        if any(v <= 0 for v in self.intervals):
            raise ValueError("intervals must be positive")
        if any(b <= a for a, b in zip(self.intervals, self.intervals[1:])):
            raise ValueError("intervals must be strictly increasing")

    def __len__(self) -> int:
        return len(self.intervals)

    def __getitem__(self, idx: int) -> float:
        return self.intervals[idx]


@dataclass(frozen=True)
class Hyperparameters:
    gamma: float = 0.9
    alpha: float = 0.1
    eps_max: float = 0.3
    eps_min: float = 0.1
    eps_decay: float = 0.99
    # beta is carried for completeness; nothing consumes it.
    beta: float = 1e-5
    w1: float = 0.1

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0 <= self.eps_min <= self.eps_max <= 1:
            raise ValueError("need 0 <= eps_min <= eps_max <= 1")
        if not 0 < self.eps_decay <= 1:
            raise ValueError(f"eps_decay must be in (0, 1], got {self.eps_decay}")


@dataclass
class QTable:
    """Action-value table: values[s, a] float32, visits[s, a] uint32.

    Single writer; reads during an update see either the old or new value of
    the one touched cell.
    """

    values: np.ndarray
    visits: np.ndarray
    period_length: float = 3600.0

    @classmethod
    def zeros(cls, n_states: int, n_actions: int, period_length: float = 3600.0) -> "QTable":
        if n_states < 1 or n_actions < 1:
            raise ValueError("table dimensions must be >= 1")
        return cls(
            values=np.zeros((n_states, n_actions), dtype=np.float32),
            visits=np.zeros((n_states, n_actions), dtype=np.uint32),
            period_length=period_length,
        )

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    @property
    def n_actions(self) -> int:
        return self.values.shape[1]

    def greedy_action(self, state: int) -> int:
        """Lowest-index argmax over the state's row."""
        return int(np.argmax(self.values[state]))

    def greedy_policy(self) -> np.ndarray:
        return np.argmax(self.values, axis=1).astype(np.int64)

    def copy(self) -> "QTable":
        return QTable(
            values=self.values.copy(),
            visits=self.visits.copy(),
            period_length=self.period_length,
        )


@dataclass(frozen=True)
class RewardInputs:
    n_pos: int
    n_neg: int

    def __post_init__(self):
        if self.n_pos < 0 or self.n_neg < 0:
            raise ValueError("activation counts must be >= 0")


def reward(inputs: RewardInputs, w1: float) -> float:
    """Per-period reward: positives minus w1-weighted negatives."""
    return inputs.n_pos - w1 * inputs.n_neg


def q_update(
    table: QTable,
    state: int,
    action: int,
    r: float,
    next_state: int,
    hp: Hyperparameters,
) -> QTable:
    """One-step in-place update of the (state, action) cell.

    Arithmetic runs in float64; the result is stored back as float32. The
    visit counter for the cell increments by one.
    """
    if not np.isfinite(r):
        raise ValueError(f"reward must be finite, got {r}")
    q = float(table.values[state, action])
    best_next = float(table.values[next_state].max())
    updated = q + hp.alpha * (r + hp.gamma * best_next - q)
    if not np.isfinite(updated):
        raise ValueError("q_update produced a non-finite value")
    table.values[state, action] = np.float32(updated)
    table.visits[state, action] += 1
    return table


def select_action(
    table: QTable, state: int, epsilon: float, rng: np.random.Generator
) -> int:
    """Epsilon-greedy pick; greedy ties break to the lowest action index.

    With epsilon == 0 no random draw happens, so the call is a pure function
    of the table.
    """
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(table.n_actions))
    return table.greedy_action(state)


def decay_epsilon(epsilon: float, hp: Hyperparameters) -> float:
    return max(hp.eps_min, epsilon * hp.eps_decay)


def init_from_distribution(
    event_prob: np.ndarray | list[float],
    scale: float,
    n_actions: int,
    period_length: float = 3600.0,
) -> QTable:
    """Seed a table from per-period event probabilities.

    Q(s, a) = scale * event_prob[s] * rank_weight(a), with rank_weight linear
    in action rank from 1 at the most frequent activation down to 0 at the
    least. Periods with higher event probability get proportionally stronger
    preference for frequent activation; zero-probability rows stay zero.
    """
    probs = np.asarray(event_prob, dtype=np.float64)
    if probs.ndim != 1 or probs.size < 1:
        raise ValueError("event_prob must be a non-empty 1D sequence")
    if ((probs < 0) | (probs > 1)).any():
        raise ValueError("event probabilities must lie in [0, 1]")
    if n_actions < 2:
        raise ValueError("need at least 2 actions")
    rank_weight = (n_actions - 1 - np.arange(n_actions)) / (n_actions - 1)
    values = (scale * np.outer(probs, rank_weight)).astype(np.float32)
    return QTable(
        values=values,
        visits=np.zeros_like(values, dtype=np.uint32),
        period_length=period_length,
    )


# -- serialization ----------------------------------------------------------
#
# Layout, little-endian: magic "QTBL", version u8, n_states u16, n_actions
# u16, then n_states*n_actions float32 values row-major, then the same count
# of uint32 visit counters.


def save_qtable(table: QTable) -> bytes:
    header = _MAGIC + struct.pack("<BHH", _VERSION, table.n_states, table.n_actions)
    values = np.ascontiguousarray(table.values, dtype="<f4").tobytes()
    visits = np.ascontiguousarray(table.visits, dtype="<u4").tobytes()
    return header + values + visits


def load_qtable(data: bytes, period_length: float = 3600.0) -> QTable:
    head_len = len(_MAGIC) + struct.calcsize("<BHH")
    if len(data) < head_len:
        raise QTableFormatError("payload shorter than header")
    if data[:4] != _MAGIC:
        raise QTableFormatError(f"bad magic {data[:4]!r}")
    version, n_states, n_actions = struct.unpack("<BHH", data[4:head_len])
    if version != _VERSION:
        raise QTableFormatError(f"unsupported version {version}")
    if n_states < 1 or n_actions < 1:
        raise QTableFormatError(f"bad dimensions {n_states}x{n_actions}")
    count = n_states * n_actions
    expected = head_len + count * 4 + count * 4
    if len(data) != expected:
        raise QTableFormatError(
            f"expected {expected} bytes for {n_states}x{n_actions}, got {len(data)}"
        )
    values = np.frombuffer(data, dtype="<f4", count=count, offset=head_len)
    visits = np.frombuffer(data, dtype="<u4", count=count, offset=head_len + count * 4)
    return QTable(
        values=values.reshape(n_states, n_actions).astype(np.float32),
        visits=visits.reshape(n_states, n_actions).astype(np.uint32),
        period_length=period_length,
    )
