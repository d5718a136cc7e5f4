"""Reward-generating arm models.

Two families are supported:

* :class:`IidArm` -- i.i.d. rewards from a Bernoulli or finite discrete law on [0, 1].
* :class:`MarkovArm` -- a rested, finite, irreducible, aperiodic, reversible chain.
  The chain only moves when :meth:`MarkovArm.step` is called.

All sampling is driven by uniforms drawn from a ``numpy.random.Generator`` so that
drawing ``n`` rewards in one call consumes the stream exactly like ``n`` single calls.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12
REVERSIBILITY_TOL = 1e-10


class ArmError(ValueError):
    """Raised when an arm definition violates its invariants."""


def pair_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, key...) pair.

    Streams are derived from ``SeedSequence(seed, spawn_key=key)`` so that the
    stream of, e.g., player ``i`` on arm ``j`` does not depend on play order.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


class IidArm:
    """I.i.d. arm with a Bernoulli or finite discrete reward law on [0, 1]."""

    def __init__(self, values: Sequence[float], probs: Sequence[float], kind: str = "discrete"):
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
            raise ArmError("values and probs must be non-empty 1-D sequences of equal length")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ArmError(f"reward values must lie in [0, 1], got {values.tolist()}")
        if np.any(probs < 0.0):
            raise ArmError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ArmError(f"probabilities sum to {probs.sum()!r}, expected 1")
        self.kind = kind
        self.values = values
        self.probs = probs
        self.mean = float(values @ probs)
        self._cdf = np.cumsum(probs)
        self._cdf[-1] = 1.0

    @classmethod
    def bernoulli(cls, p: float) -> "IidArm":
        if not 0.0 <= p <= 1.0:
            raise ArmError(f"Bernoulli parameter must lie in [0, 1], got {p}")
        arm = cls([0.0, 1.0], [1.0 - p, p], kind="bernoulli")
        arm.p = float(p)
        return arm

    def sample(self, rng: np.random.Generator, n: int | None = None):
        """Draw one reward (``n is None``) or an array of ``n`` rewards."""
        u = rng.random(n)
        if self.kind == "bernoulli":
            out = np.asarray(u < self.p, dtype=float)
        else:
            out = self.values[np.searchsorted(self._cdf, u, side="right")]
        return float(out) if n is None else out

    def __repr__(self) -> str:
        if self.kind == "bernoulli":
            return f"IidArm.bernoulli({self.p})"
        return f"IidArm(values={self.values.tolist()}, probs={self.probs.tolist()})"


@dataclass(frozen=True)
class ChainStats:
    """Exact statistics of a reversible chain (see :func:`chain_stats`)."""

    pi: np.ndarray
    mean: float
    rho: float
    lambda2: float
    pi_min: float
    x_max: float
    x_min: float
    pi_hat: np.ndarray
    pi_hat_max: float
    cardinality: int


class MarkovArm:
    """Rested Markov arm.

    Parameters
    ----------
    states : sequence of float
        Reward value attached to each state. Distinct states may share a value.
    transition : (S, S) array_like
        Row-stochastic transition matrix.
    initial_distribution : sequence of float, optional
        Law of the state before the first play. Defaults to the stationary law.
    allow_zero_reward : bool
        Permit reward 0 (needed to reproduce the {0, 1} chains of the experiments).
        Otherwise rewards must lie in (0, 1].
    """

    def __init__(
        self,
        states: Sequence[float],
        transition,
        initial_distribution: Sequence[float] | None = None,
        allow_zero_reward: bool = False,
    ):
        x = np.asarray(states, dtype=float)
        P = np.asarray(transition, dtype=float)
        S = x.size
        if x.ndim != 1 or S == 0:
            raise ArmError("states must be a non-empty 1-D sequence")
        if P.shape != (S, S):
            raise ArmError(f"transition matrix must be {S}x{S}, got {P.shape}")
        lo_ok = np.all(x >= 0.0) if allow_zero_reward else np.all(x > 0.0)
        if not lo_ok or np.any(x > 1.0):
            interval = "[0, 1]" if allow_zero_reward else "(0, 1]"
            raise ArmError(f"reward values must lie in {interval}, got {x.tolist()}")
        if np.any(P < 0.0) or np.any(np.abs(P.sum(axis=1) - 1.0) > PROB_TOL):
            raise ArmError("transition matrix must be row-stochastic")
        if not _is_primitive(P):
            raise ArmError("chain must be irreducible and aperiodic")
        self.states = x
        self.P = P
        self.allow_zero_reward = allow_zero_reward
        self._stats = _compute_stats(x, P)
        pi = self._stats.pi
        flux = pi[:, None] * P
        if np.max(np.abs(flux - flux.T)) > REVERSIBILITY_TOL:
            raise ArmError("chain is not reversible with respect to its stationary law")
        if initial_distribution is None:
            lam = pi.copy()
        else:
            lam = np.asarray(initial_distribution, dtype=float)
            if lam.shape != (S,) or np.any(lam < 0.0) or abs(lam.sum() - 1.0) > PROB_TOL:
                raise ArmError("initial distribution must be a probability vector over the states")
        self.initial_distribution = lam
        self.current_state: int | None = None
        self._cum_rows = [list(np.cumsum(row)) for row in P]
        for row in self._cum_rows:
            row[-1] = 1.0
        self._cum_init = list(np.cumsum(lam))
        self._cum_init[-1] = 1.0
        self._values = x.tolist()

    @classmethod
    def two_state(cls, p01: float, p10: float, rewards=(0.0, 1.0), **kw) -> "MarkovArm":
        """Chain on two states with switching probabilities ``p01`` (0->1) and ``p10`` (1->0)."""
        P = [[1.0 - p01, p01], [p10, 1.0 - p10]]
        kw.setdefault("allow_zero_reward", min(rewards) == 0.0)
        return cls(rewards, P, **kw)

    @property
    def stats(self) -> ChainStats:
        return self._stats

    @property
    def mean(self) -> float:
        return self._stats.mean

    def reset(self, rng: np.random.Generator) -> None:
        """Draw the pre-play state from the initial distribution."""
        self.current_state = bisect_right(self._cum_init, rng.random())

    def step(self, rng: np.random.Generator) -> float:
        """Advance one transition and return the reward of the new state."""
        return float(self.steps(rng, 1)[0])

    def steps(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Advance ``n`` transitions; return the rewards of the visited states."""
        if self.current_state is None:
            self.reset(rng)
        s = self.current_state
        cum = self._cum_rows
        vals = self._values
        out = [0.0] * n
        for k, u in enumerate(rng.random(n).tolist()):
            s = bisect_right(cum[s], u)
            out[k] = vals[s]
        self.current_state = s
        return np.asarray(out)

    def state_path(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Like :meth:`steps` but return state indices instead of rewards."""
        if self.current_state is None:
            self.reset(rng)
        s = self.current_state
        cum = self._cum_rows
        out = np.empty(n, dtype=np.int64)
        for k, u in enumerate(rng.random(n).tolist()):
            s = bisect_right(cum[s], u)
            out[k] = s
        self.current_state = s
        return out

    # same call shape as IidArm for engines that do not care about the arm family
    def sample(self, rng: np.random.Generator, n: int | None = None):
        return self.step(rng) if n is None else self.steps(rng, n)

    def __repr__(self) -> str:
        return f"MarkovArm(states={self.states.tolist()}, P={self.P.tolist()})"


def sample_paths(arm: MarkovArm, rng: np.random.Generator, n_paths: int, t: int) -> np.ndarray:
    """``n_paths`` independent length-``t`` state paths, started from the initial law.

    The first column is the state after the first transition. Uses the same
    inverse-cdf rule as :meth:`MarkovArm.steps` but advances all paths at once;
    the arm's own state is not touched.
    """
    cum = np.cumsum(arm.P, axis=1)
    cum[:, -1] = 1.0
    init = np.cumsum(arm.initial_distribution)
    init[-1] = 1.0
    s = np.searchsorted(init, rng.random(n_paths), side="right")
    out = np.empty((n_paths, t), dtype=np.int64)
    for k in range(t):
        u = rng.random(n_paths)
        s = (u[:, None] >= cum[s]).sum(axis=1)
        out[:, k] = s
    return out


def _is_primitive(P: np.ndarray) -> bool:
    S = P.shape[0]
    A = (P > 0).astype(np.int64)
    Q = A.copy()
    for _ in range(S * S):
        if np.all(Q > 0):
            return True
        Q = np.minimum((Q @ A), 1)
    return bool(np.all(Q > 0))


def _stationary(P: np.ndarray) -> np.ndarray:
    S = P.shape[0]
    A = np.vstack([P.T - np.eye(S), np.ones((1, S))])
    b = np.zeros(S + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _compute_stats(x: np.ndarray, P: np.ndarray) -> ChainStats:
    pi = _stationary(P)
    if np.any(pi <= 0.0) or np.max(np.abs(pi @ P - pi)) > 1e-10:
        raise ArmError("could not compute a positive stationary distribution")
    # D^{1/2} P^2 D^{-1/2} is symmetric for reversible P
    d = np.sqrt(pi)
    P2 = P @ P
    sym = d[:, None] * P2 / d[None, :]
    sym = 0.5 * (sym + sym.T)
    try:
        eig = np.linalg.eigvalsh(sym)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - valid input never gets here
        raise ArmError(f"eigen-solver failed: {exc}") from exc
    lam2 = float(eig[-2]) if eig.size > 1 else 0.0
    lam2 = min(max(lam2, 0.0), 1.0)
    pi_hat = np.maximum(pi, 1.0 - pi)
    return ChainStats(
        pi=pi,
        mean=float(x @ pi),
        rho=1.0 - lam2,
        lambda2=lam2,
        pi_min=float(pi.min()),
        x_max=float(x.max()),
        x_min=float(x.min()),
        pi_hat=pi_hat,
        pi_hat_max=float(pi_hat.max()),
        cardinality=int(x.size),
    )


def sample_iid(arm: IidArm, rng: np.random.Generator) -> float:
    return arm.sample(rng)


def step_markov(arm: MarkovArm, rng: np.random.Generator) -> float:
    return arm.step(rng)


def chain_stats(arm: MarkovArm) -> ChainStats:
    return arm.stats


def markov_grid_chains() -> list[list[MarkovArm]]:
    """The 2x2 grid of two-state chains used in the Markovian experiment.

    Entry ``[i][j]`` is the chain player ``i`` sees on channel ``j``; state 1
    pays 1 and state 0 pays 0.
    """
    params = [[(0.3, 0.5), (0.2, 0.6)], [(0.6, 0.3), (0.7, 0.2)]]
    return [[MarkovArm.two_state(p01, p10) for p01, p10 in row] for row in params]


def initial_law_prefactor(arm: MarkovArm) -> float:
    """Euclidean norm of ``lambda / pi`` for the arm's initial law."""
    return float(np.linalg.norm(arm.initial_distribution / arm.stats.pi))
