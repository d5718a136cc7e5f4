"""Per-slot bookkeeping and the recorded regret trace."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def geometric_grid(T: int, ratio: float = 1.1) -> np.ndarray:
    """Recording times ``round(ratio**k)`` for k = 0, 1, ... up to ``T``, plus ``T``."""
    if T < 1:
        return np.zeros(0, dtype=np.int64)
    if ratio <= 1.0:
        raise ValueError("grid ratio must exceed 1")
    kmax = int(np.ceil(np.log(T) / np.log(ratio))) + 1
    pts = np.rint(ratio ** np.arange(kmax + 1)).astype(np.int64)
    pts = pts[(pts >= 1) & (pts <= T)]
    return np.unique(np.append(pts, T))


def linear_grid(T: int, step: int) -> np.ndarray:
    if step < 1:
        raise ValueError("grid step must be >= 1")
    pts = np.arange(step, T + 1, step, dtype=np.int64)
    return np.unique(np.append(pts, T)) if T >= 1 else pts


class SlotLog:
    """Raw per-slot arrays filled by a simulation engine."""

    def __init__(self, T: int):
        self.T = T
        self.reward = np.zeros(T)
        self.expected = np.zeros(T)
        self.cost = np.zeros(T)
        self.recompute = np.zeros(T, dtype=np.int64)
        self.collisions = np.zeros(T, dtype=np.int64)
        self.eta = np.zeros(T, dtype=np.int64)

    def charge(self, slot: int, cost: float) -> None:
        self.recompute[slot] += 1
        self.cost[slot] += cost

    def to_trace(self, grid: np.ndarray, mu_star: float, regret_kind: str, **extra) -> "RegretTrace":
        idx = np.asarray(grid, dtype=np.int64) - 1
        t = idx + 1
        reward = np.cumsum(self.reward)[idx]
        expected = np.cumsum(self.expected)[idx]
        cost = np.cumsum(self.cost)[idx]
        realized = t * mu_star - reward + cost
        pseudo = t * mu_star - expected + cost
        return RegretTrace(
            t=t,
            reward=reward,
            expected_reward=expected,
            cost=cost,
            regret=pseudo if regret_kind == "pseudo" else realized,
            regret_realized=realized,
            regret_pseudo=pseudo,
            m=np.cumsum(self.recompute)[idx],
            collisions=np.cumsum(self.collisions)[idx],
            eta=self.eta[idx],
            mu_star=mu_star,
            regret_kind=regret_kind,
            **extra,
        )


@dataclass
class RegretTrace:
    """Cumulative quantities of one run at the recorded times ``t``.

    ``regret`` is the pseudo-regret (expected reward of the plays) for i.i.d.
    single-player runs and the realized-reward regret otherwise; both variants are
    always kept. ``cost`` is the accumulated computation/communication charge.
    """

    t: np.ndarray
    reward: np.ndarray
    expected_reward: np.ndarray
    cost: np.ndarray
    regret: np.ndarray
    regret_realized: np.ndarray
    regret_pseudo: np.ndarray
    m: np.ndarray
    collisions: np.ndarray
    eta: np.ndarray
    mu_star: float
    regret_kind: str
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    recompute_times: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    choices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def final_regret(self) -> float:
        return float(self.regret[-1])
