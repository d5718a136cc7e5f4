"""Single-player index policies with computation cost.

``run_ucb1_L`` recomputes the classical UCB1 index every ``L`` slots.
``run_ucb4`` recomputes only at doubling epochs (1, 2, 4, ... ticks after the last
change of the best arm) and charges a cost per recomputation. It handles i.i.d.
and rested Markov arms, exact or finite-precision indices, and known or
schedule-driven exploration coefficients.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .arms import IidArm, MarkovArm, pair_stream
from .trace import RegretTrace, SlotLog, geometric_grid

INDEX_COEFFICIENTS = {"ucb1": 2.0, "ucb4": 3.0}


class PreconditionError(ValueError):
    """An operation was called outside its documented domain."""


@dataclass(frozen=True)
class Schedule:
    """Time-varying parameter.

    kinds
        ``constant``      value
        ``eps_decay``     value / ln(e + t)                (decreases to 0)
        ``kappa_growth``  min(t, value * ln(e + t))        (grows, never above t)
        ``frame_growth``  ceil(value + ln(1 + t))          (grows without bound)
    """

    kind: str = "constant"
    value: float = 1.0

    KINDS = ("constant", "eps_decay", "kappa_growth", "frame_growth")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {self.KINDS}")

    def __call__(self, t: float) -> float:
        if self.kind == "constant":
            return float(self.value)
        if self.kind == "eps_decay":
            return self.value / math.log(math.e + t)
        if self.kind == "kappa_growth":
            return min(float(t), self.value * math.log(math.e + t))
        return float(math.ceil(self.value + math.log1p(t)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


def schedule_value(schedule: Schedule | float, t: float) -> float:
    if isinstance(schedule, Schedule):
        return schedule(t)
    return float(schedule)


@dataclass(frozen=True)
class CostModel:
    """Cost of one index recomputation (or one decision frame).

    ``C(eps) = c0 + c1 * ceil(log2(1/eps))`` for ``eps > 0`` and ``C(0) = c0``;
    the logarithmic term is clamped at 0 for ``eps >= 1``.
    """

    c0: float = 0.0
    c1: float = 0.0

    def __post_init__(self):
        if self.c0 < 0 or self.c1 < 0:
            raise ValueError("cost coefficients must be nonnegative")

    def __call__(self, eps: float = 0.0) -> float:
        if eps < 0:
            raise ValueError("precision must be nonnegative")
        if eps == 0.0 or self.c1 == 0.0:
            return float(self.c0)
        bits = max(0, math.ceil(math.log2(1.0 / eps)))
        return self.c0 + self.c1 * bits

    @classmethod
    def coerce(cls, cost) -> "CostModel":
        if isinstance(cost, CostModel):
            return cost
        return cls(c0=float(cost))

    def to_dict(self) -> dict:
        return {"c0": self.c0, "c1": self.c1}


@dataclass(frozen=True)
class IndexSpec:
    """Which index to compute.

    kind
        ``ucb1`` (bonus coefficient 2), ``ucb4`` (3) or ``kappa`` (``kappa``, a
        constant or a :class:`Schedule`). ``coefficient`` overrides the table,
        which the decentralized policy uses for its ``M + 2`` coefficient.
    eps
        Index precision; 0 means exact. May be a :class:`Schedule`.
    time_source
        ``global`` uses the slot clock in the log term; ``own`` uses the
        player's own number of successful plays.
    """

    kind: str = "ucb4"
    kappa: float | Schedule | None = None
    eps: float | Schedule = 0.0
    time_source: str = "global"
    coefficient_override: float | None = None

    def __post_init__(self):
        if self.kind not in ("ucb1", "ucb4", "kappa"):
            raise ValueError(f"unknown index kind {self.kind!r}")
        if self.kind == "kappa" and self.kappa is None:
            raise ValueError("kappa index needs a kappa value or schedule")
        if self.time_source not in ("global", "own"):
            raise ValueError(f"unknown time source {self.time_source!r}")
        if not isinstance(self.eps, Schedule) and self.eps < 0:
            raise ValueError("index precision must be nonnegative")

    def coefficient(self, t: float) -> float:
        if self.coefficient_override is not None:
            return float(self.coefficient_override)
        if self.kind == "kappa":
            return schedule_value(self.kappa, t)
        return INDEX_COEFFICIENTS[self.kind]

    def precision(self, t: float) -> float:
        return schedule_value(self.eps, t)


def quantize(x, eps: float):
    """Map ``x`` to its resolution cell ``(k*eps, (k+1)*eps] -> k*eps``.

    Values closer than ``eps`` that share a cell are indistinguishable; the
    result is always within ``eps`` below ``x``. ``eps == 0`` is the identity.
    """
    if eps == 0:
        return x
    q = (np.ceil(np.asarray(x, dtype=float) / eps) - 1.0) * eps
    return q if np.ndim(q) else float(q)


def epsilon_argmax(indices: Sequence[float], eps: float = 0.0) -> int:
    """Lowest arm id among arms whose quantized index equals the largest one."""
    g = np.asarray(indices, dtype=float)
    if g.size == 0:
        raise PreconditionError("epsilon_argmax needs at least one index")
    q = quantize(g, eps) if eps > 0 else g
    return int(np.flatnonzero(q == q.max())[0])


class PlayerStats:
    """Running per-arm counts and sums for one player."""

    def __init__(self, n_arms: int):
        self.counts = np.zeros(n_arms, dtype=np.int64)
        self.sums = np.zeros(n_arms)
        self.n = 0
        self.eta = 1
        self.last_arm: int | None = None
        self.m = 0
        self.m1 = 0
        self.m2 = 0
        self.index = np.full(n_arms, np.nan)

    @property
    def means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), 0.0)

    def update(self, arm: int, rewards) -> None:
        r = np.atleast_1d(rewards)
        self.counts[arm] += r.size
        self.sums[arm] += float(r.sum())
        self.n += int(r.size)


def _bonus(coef: float, clock: float, n_j) -> np.ndarray:
    log_t = math.log(clock) if clock > 1 else 0.0
    return np.sqrt(coef * log_t / n_j)


def compute_index(stats: PlayerStats, spec: IndexSpec, j: int, t: float) -> float:
    """Index of arm ``j`` at time ``t``: mean + sqrt(coef * ln(clock) / n_j), quantized.

    The clock is ``t`` for ``time_source == 'global'`` and the player's own play
    count otherwise.
    """
    if stats.counts[j] < 1:
        raise PreconditionError(f"arm {j} has not been played; its index is undefined")
    if t < 1:
        raise PreconditionError("time must be >= 1")
    clock = t if spec.time_source == "global" else stats.n
    g = stats.sums[j] / stats.counts[j] + float(_bonus(spec.coefficient(t), clock, stats.counts[j]))
    return quantize(g, spec.precision(t))


def index_vector(stats: PlayerStats, spec: IndexSpec, t: float, quantized: bool = False) -> np.ndarray:
    if np.any(stats.counts < 1):
        raise PreconditionError("every arm must be played before indices are computed")
    clock = t if spec.time_source == "global" else stats.n
    g = stats.sums / stats.counts + _bonus(spec.coefficient(t), clock, stats.counts)
    return quantize(g, spec.precision(t)) if quantized else g


def _is_pow2(k: int) -> bool:
    return k >= 1 and k & (k - 1) == 0


def _next_pow2_above(k: int) -> int:
    return 1 << k.bit_length()


def _optimal_arm(means: np.ndarray) -> int:
    return int(np.argmax(means))


def _setup(arms, T: int, seed: int):
    arms = [copy.deepcopy(a) for a in arms]
    means = np.array([a.mean for a in arms])
    streams = [pair_stream(seed, 0, j) for j in range(len(arms))]
    return arms, means, streams


def _regret_kind(arms) -> str:
    return "realized" if any(isinstance(a, MarkovArm) for a in arms) else "pseudo"


class _Player:
    """Single-player plumbing shared by both engines."""

    def __init__(self, arms, T, seed):
        self.arms, self.means, self.streams = _setup(arms, T, seed)
        self.stats = PlayerStats(len(self.arms))
        self.log = SlotLog(T)
        self.t = 0

    def play(self, arm: int, n: int, eta_start: int) -> None:
        r = self.arms[arm].sample(self.streams[arm], n)
        s = slice(self.t, self.t + n)
        self.log.reward[s] = r
        self.log.expected[s] = self.means[arm]
        self.log.eta[s] = np.arange(eta_start, eta_start + n)
        self.stats.update(arm, r)
        self.stats.last_arm = arm
        self.t += n


def run_ucb1_L(
    arms: Sequence[IidArm],
    L: int,
    T: int,
    seed: int = 0,
    cost: CostModel | float = 0.0,
    grid: np.ndarray | None = None,
) -> RegretTrace:
    """UCB1 whose index is recomputed once every ``L`` slots.

    Each arm is played once first; afterwards the argmax of the UCB1 index is
    played for the next ``L`` slots (lowest arm id on ties).
    """
    N = len(arms)
    if N < 2 or L < 1 or T < N * L:
        raise PreconditionError("need N >= 2 arms, L >= 1 and T >= N*L")
    cost = CostModel.coerce(cost)
    spec = IndexSpec("ucb1")
    p = _Player(arms, T, seed)
    for j in range(N):
        p.play(j, 1, 1)
    recomputes, choices = [], []
    opt = _optimal_arm(p.means)
    while p.t < T:
        g = index_vector(p.stats, spec, p.t)
        best = epsilon_argmax(g)
        p.stats.index = g
        p.stats.m += 1
        if best == opt:
            p.stats.m1 += 1
        else:
            p.stats.m2 += 1
        p.log.charge(p.t, cost(0.0))
        recomputes.append(p.t + 1)
        choices.append(best)
        p.play(best, min(L, T - p.t), 1)
    grid = geometric_grid(T) if grid is None else grid
    return p.log.to_trace(
        grid,
        float(p.means.max()),
        _regret_kind(p.arms),
        counts=p.stats.counts.copy(),
        recompute_times=np.array(recomputes, dtype=np.int64),
        choices=np.array(choices, dtype=np.int64),
        info={"m1": p.stats.m1, "m2": p.stats.m2, "means": p.means.tolist()},
    )


def run_ucb4(
    arms: Sequence[IidArm | MarkovArm],
    spec: IndexSpec | None = None,
    cost: CostModel | float = 0.0,
    T: int = 1000,
    seed: int = 0,
    grid: np.ndarray | None = None,
) -> RegretTrace:
    """Doubling-epoch index policy with a charge per index recomputation.

    After one initial play per arm the epoch counter is 1. Whenever the counter
    is a power of two the indices are recomputed (cost ``C(eps_t)``) and the
    best arm selected; a change of best arm resets the counter to 1. The
    counter grows by one per slot, so without changes the recomputations are
    1, 2, 4, 8, ... slots apart.
    """
    N = len(arms)
    if N < 2 or T < N:
        raise PreconditionError("need N >= 2 arms and T >= N")
    spec = spec or IndexSpec("ucb4")
    cost = CostModel.coerce(cost)
    p = _Player(arms, T, seed)
    for j in range(N):
        p.play(j, 1, 1)
    st = p.stats
    current = N - 1
    st.eta = 1
    recomputes, choices = [], []
    opt = _optimal_arm(p.means)
    while p.t < T:
        if _is_pow2(st.eta):
            tick = p.t + 1
            eps = spec.precision(tick)
            g = index_vector(st, spec, p.t)
            st.index = g
            best = epsilon_argmax(g, eps)
            st.m += 1
            if best == opt:
                st.m1 += 1
            else:
                st.m2 += 1
            p.log.charge(p.t, cost(eps))
            recomputes.append(tick)
            choices.append(best)
            if best != current:
                st.eta = 1
                current = best
        hold = _next_pow2_above(st.eta) - st.eta
        n = min(hold, T - p.t)
        p.play(current, n, st.eta)
        st.eta += n
    grid = geometric_grid(T) if grid is None else grid
    return p.log.to_trace(
        grid,
        float(p.means.max()),
        _regret_kind(p.arms),
        counts=st.counts.copy(),
        recompute_times=np.array(recomputes, dtype=np.int64),
        choices=np.array(choices, dtype=np.int64),
        info={"m1": st.m1, "m2": st.m2, "means": p.means.tolist()},
    )
