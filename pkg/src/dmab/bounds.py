"""Closed-form regret upper bounds and the model constants they need.

All logarithms are natural. Each ``bound_t*`` is a pure function of its
arguments; ``*_curve`` helpers evaluate a bound on a grid of horizons.

Bound map (single player unless noted):

========  ============================================================
t1        UCB1 recomputed every L slots
t2        UCB4 with cost C per recomputation
t3        UCB4 with eps-precise indices (known gap / eps schedule)
t4        UCB4, rested Markov arms
t5        UCB4, rested Markov arms, eps-precise indices
t6        dUCB4, i.i.d. rewards (M players, N arms, frame length L)
t7        dUCB4, rested Markov rewards
========  ============================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .arms import MarkovArm
from .matching import all_matchings, brute_force_matching
from .policy import CostModel, Schedule, schedule_value

PI2_3 = math.pi ** 2 / 3.0
T0_SEARCH_LIMIT = 1 << 62


class UndefinedBound(ValueError):
    """The bound is not defined for these parameters (zero gap, pole, threshold)."""


@dataclass(frozen=True)
class GapStats:
    """Gaps of the suboptimal arms (single player) or matchings (multi-player)."""

    gaps: np.ndarray  # one entry per suboptimal arm / matching
    delta_min: float
    delta_max: float
    mu_star: float
    optimum: tuple  # best arm (as a 1-tuple) or best matching

    @property
    def suboptimal(self) -> np.ndarray:
        return self.gaps


@dataclass(frozen=True)
class MarkovConstants:
    K: float  # K_{X,P}: sum over arms (or player-arm pairs) of sum_x x / pi_min of that chain
    D: float  # |X|_max / pi_min
    rho_min: float
    rho_max: float
    x_card_max: int
    pi_min: float
    kappa_threshold: float


def gap_stats(means) -> GapStats:
    """Gaps from a mean vector (single player) or an M x N mean matrix."""
    mu = np.asarray(means, dtype=float)
    if mu.ndim == 1:
        best = int(np.argmax(mu))
        gaps = np.delete(mu[best] - mu, best)
        mu_star = float(mu[best])
        optimum = (best,)
        dmax = float(np.max(mu[best] - mu))
    elif mu.ndim == 2:
        M, N = mu.shape
        k_star, mu_star = brute_force_matching(mu)
        vals = np.array([sum(mu[i, k[i]] for i in range(M)) for k in all_matchings(M, N)])
        d = mu_star - vals
        # drop exactly one copy of the optimum; remaining zeros mean a tie for first place
        gaps = np.delete(d, int(np.argmin(d)))
        optimum = tuple(int(a) for a in k_star)
        dmax = float(d.max())
    else:
        raise ValueError("means must be a vector or a matrix")
    if gaps.size == 0:
        raise UndefinedBound("need at least one suboptimal arm or matching")
    dmin = float(gaps.min())
    if dmin <= 0:
        raise UndefinedBound("minimum gap is zero: the optimum is not unique")
    return GapStats(gaps=gaps, delta_min=dmin, delta_max=dmax, mu_star=float(mu_star), optimum=optimum)


def markov_constants(chains, M: int | None = None) -> MarkovConstants:
    """Constants for a list (single player) or grid (player x arm) of chains.

    ``kappa_threshold`` is 168 |X|^2_max / rho_min for one player and
    (112 + 56 M) |X|^2_max / rho_min for ``M`` players.
    """
    flat: list[MarkovArm] = []
    if chains and isinstance(chains[0], (list, tuple)):
        for row in chains:
            flat.extend(row)
        M = len(chains) if M is None else M
    else:
        flat = list(chains)
    stats = [c.stats for c in flat]
    K = sum(float(c.states.sum()) / s.pi_min for c, s in zip(flat, stats))
    card = max(s.cardinality for s in stats)
    pi_min = min(s.pi_min for s in stats)
    rho_min = min(s.rho for s in stats)
    rho_max = max(s.rho for s in stats)
    factor = 168.0 if M is None else 112.0 + 56.0 * M
    return MarkovConstants(
        K=K,
        D=card / pi_min,
        rho_min=rho_min,
        rho_max=rho_max,
        x_card_max=card,
        pi_min=pi_min,
        kappa_threshold=factor * card ** 2 / rho_min,
    )


def _gaps(gaps) -> tuple[np.ndarray, float]:
    if isinstance(gaps, GapStats):
        return gaps.gaps, gaps.delta_max
    g = np.atleast_1d(np.asarray(gaps, dtype=float))
    return g, float(g.max())


def _log(T: float) -> float:
    if T < 1:
        raise UndefinedBound("horizon must be >= 1")
    return math.log(T)


def _check_positive(g: np.ndarray) -> None:
    if g.size == 0 or np.any(g <= 0):
        raise UndefinedBound("every suboptimal gap must be positive")


def bound_t1(gaps, L: int, T: float) -> float:
    """sum_j 8 L ln T / D_j + L (1 + pi^2/3) sum_j D_j."""
    g, _ = _gaps(gaps)
    _check_positive(g)
    lt = _log(T)
    return float(np.sum(8.0 * L * lt / g) + L * (1.0 + PI2_3) * np.sum(g))


def bound_t2(gaps, C: float, N: int, T: float) -> float:
    """(D_max + C (1 + ln T)) (sum_j 12 ln T / D_j^2 + 2 N)."""
    g, dmax = _gaps(gaps)
    _check_positive(g)
    lt = _log(T)
    return float((dmax + C * (1.0 + lt)) * (np.sum(12.0 * lt / g ** 2) + 2.0 * N))


def first_time_below(seq: Callable[[float], float], level: float, start: int = 1) -> int:
    """Smallest integer t >= start with seq(t) < level, for nonincreasing ``seq``."""
    if seq(start) < level:
        return start
    hi = start * 2
    while seq(hi) >= level:
        hi *= 2
        if hi > T0_SEARCH_LIMIT:
            raise UndefinedBound("sequence never drops below the required level")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if seq(mid) < level:
            hi = mid
        else:
            lo = mid
    return hi


def bound_t3(gaps, cost, eps, N: int, T: float) -> float:
    """UCB4 with eps-precise indices.

    With a number ``eps`` (gap known, ``0 <= eps < D_min``)::

        (D_max + C(eps)(1 + ln T)) (sum_j 12 ln T / (D_j - eps)^2 + 2 N)

    With a :class:`Schedule` (gap unknown) and ``eps_min = D_min / 2``, ``t0`` the
    first t with ``eps_t < eps_min``::

        (D_max + C(eps_min)) t0 + (D_max + C(eps_T)(1 + ln T)) (sum_j 12 ln T / (D_j - eps_min)^2 + 2 N)

    and the linear term alone ``(D_max + C(eps_min)) T`` while ``T <= t0``.
    """
    g, dmax = _gaps(gaps)
    _check_positive(g)
    cost = CostModel.coerce(cost)
    lt = _log(T)
    if isinstance(eps, Schedule):
        eps_min = float(g.min()) / 2.0
        t0 = first_time_below(eps, eps_min)
        prefix = (dmax + cost(eps_min)) * min(T, t0)
        if T <= t0:
            return float(prefix)
        tail = (dmax + cost(eps(T)) * (1.0 + lt)) * (np.sum(12.0 * lt / (g - eps_min) ** 2) + 2.0 * N)
        return float(prefix + tail)
    if eps < 0 or eps >= g.min():
        raise UndefinedBound(f"precision {eps} must satisfy 0 <= eps < D_min = {g.min()}")
    return float((dmax + cost(eps) * (1.0 + lt)) * (np.sum(12.0 * lt / (g - eps) ** 2) + 2.0 * N))


def _check_kappa(kappa: float, consts: MarkovConstants, known: bool) -> None:
    if known and not kappa > consts.kappa_threshold:
        raise UndefinedBound(f"kappa = {kappa} must exceed {consts.kappa_threshold}")


def bound_t4(gaps, consts: MarkovConstants, kappa: float, C: float, N: int, T: float, known: bool = True) -> float:
    """(D_max + C (1 + ln T)) (sum_j 4 kappa ln T / D_j^2 + N (2 D + 1)) + K."""
    g, dmax = _gaps(gaps)
    _check_positive(g)
    _check_kappa(kappa, consts, known)
    lt = _log(T)
    return float(
        (dmax + C * (1.0 + lt)) * (np.sum(4.0 * kappa * lt / g ** 2) + N * (2.0 * consts.D + 1.0)) + consts.K
    )


def bound_t5(gaps, consts: MarkovConstants, kappa: float, eps: float, C_eps: float, N: int, T: float,
             known: bool = True) -> float:
    """(D_max + C(eps)(1 + ln T)) (sum_j 4 kappa ln T / (D_j - eps)^2 + N (2 D + 1)) + K."""
    g, dmax = _gaps(gaps)
    _check_positive(g)
    _check_kappa(kappa, consts, known)
    if eps < 0 or eps >= g.min():
        raise UndefinedBound(f"precision {eps} must satisfy 0 <= eps < D_min = {g.min()}")
    lt = _log(T)
    return float(
        (dmax + C_eps * (1.0 + lt)) * (np.sum(4.0 * kappa * lt / (g - eps) ** 2) + N * (2.0 * consts.D + 1.0))
        + consts.K
    )


def _multi_gaps(gaps) -> tuple[float, float]:
    if isinstance(gaps, GapStats):
        return gaps.delta_min, gaps.delta_max
    dmin, dmax = gaps
    return float(dmin), float(dmax)


def bound_t6(gaps, M: int, N: int, eps, L, cost, T: float,
             precision_of: Callable[[float], float] | None = None) -> float:
    """dUCB4 with i.i.d. rewards.

    Known gap (``eps`` a number with ``(M+1) eps < D_min``, ``L`` a number)::

        (L D_max + C(eps)(1 + ln T)) (4 M^3 (M+2) N ln T / (D_min - (M+1) eps)^2 + N M (2M + 1))

    Unknown gap: pass ``L`` as a :class:`Schedule` and ``precision_of`` mapping a
    frame length to its precision. With ``eps_min = D_min / (2 (M+1))`` and ``t0``
    the first t with ``f(L_t) < eps_min`` the bound is::

        (L_t0 D_max + C(f(L_t0))) t0
          + (L_T D_max + C(f(L_T))(1 + ln T)) (4 M^3 (M+2) N ln T / (D_min - eps_min)^2 + N M (2M + 1))
    """
    dmin, dmax = _multi_gaps(gaps)
    cost = CostModel.coerce(cost)
    lt = _log(T)
    tail_const = N * M * (2.0 * M + 1.0)
    if isinstance(L, Schedule):
        if precision_of is None:
            raise ValueError("a frame-length schedule needs precision_of")
        eps_min = dmin / (2.0 * (M + 1))
        t0 = first_time_below(lambda t: precision_of(L(t)), eps_min)
        L0 = L(t0)
        prefix = (L0 * dmax + cost(precision_of(L0))) * min(T, t0)
        if T <= t0:
            return float(prefix)
        LT = L(T)
        lead = LT * dmax + cost(precision_of(LT)) * (1.0 + lt)
        return float(prefix + lead * (4.0 * M ** 3 * (M + 2) * N * lt / (dmin - eps_min) ** 2 + tail_const))
    if eps < 0 or (M + 1) * eps >= dmin:
        raise UndefinedBound(f"need (M+1) eps < D_min, got eps = {eps}, D_min = {dmin}")
    lead = L * dmax + cost(eps) * (1.0 + lt)
    return float(lead * (4.0 * M ** 3 * (M + 2) * N * lt / (dmin - (M + 1) * eps) ** 2 + tail_const))


def bound_t7(gaps, M: int, N: int, eps: float, L: float, kappa: float, consts: MarkovConstants, cost,
             T: float, known: bool = True) -> float:
    """(L D_max + C(eps)(1 + ln T)) (4 M^3 kappa N ln T / (D_min - (M+1) eps)^2 + (2 M D + 1) M N) + K~."""
    dmin, dmax = _multi_gaps(gaps)
    cost = CostModel.coerce(cost)
    _check_kappa(kappa, consts, known)
    if eps < 0 or (M + 1) * eps >= dmin:
        raise UndefinedBound(f"need (M+1) eps < D_min, got eps = {eps}, D_min = {dmin}")
    lt = _log(T)
    lead = L * dmax + cost(eps) * (1.0 + lt)
    body = 4.0 * M ** 3 * kappa * N * lt / (dmin - (M + 1) * eps) ** 2 + (2.0 * M * consts.D + 1.0) * M * N
    return float(lead * body + consts.K)


def curve(bound: Callable[[float], float], times: Sequence[int]) -> np.ndarray:
    """Evaluate ``bound(T)`` at every recorded time."""
    return np.array([bound(float(t)) for t in times])
