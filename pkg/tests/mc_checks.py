"""Monte Carlo tail checks shared by the concentration and acceptance suites."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dmab.arms import IidArm, MarkovArm, sample_paths, markov_grid_chains

TRIALS = 10_000
HOEFFDING_T = (10, 100, 1000)
HOEFFDING_C = (0.5, 1.0, 1.5)  # a = c * sqrt(t)
MARKOV_T = (100, 1000)
MARKOV_GAMMA = (0.1, 0.2)


@dataclass(frozen=True)
class TailCheck:
    label: str
    freq: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.freq <= self.bound


def hoeffding_checks(p: float, seed: int = 0, trials: int = TRIALS) -> list[TailCheck]:
    """Upper tail of a Bernoulli sum against exp(-2 a^2 / t)."""
    arm = IidArm.bernoulli(p)
    rng = np.random.default_rng(seed)
    out = []
    for t in HOEFFDING_T:
        sums = arm.sample(rng, trials * t).reshape(trials, t).sum(axis=1)
        for c in HOEFFDING_C:
            a = c * math.sqrt(t)
            freq = float(np.mean(sums >= t * p + a))
            out.append(TailCheck(f"p={p} t={t} a={a:.3f}", freq, math.exp(-2 * a * a / t)))
    return out


def centered_unit(arm: MarkovArm) -> np.ndarray:
    """State function with zero stationary mean and sup-norm one."""
    f = arm.states - arm.mean
    return f / np.max(np.abs(f))


def markov_checks(arm: MarkovArm, seed: int = 0, trials: int = TRIALS, label: str = "") -> list[TailCheck]:
    """Upper tail of a centered additive functional against N * exp(-t rho g^2 / 28)."""
    st = arm.stats
    f = centered_unit(arm)
    n_lam = float(np.linalg.norm(arm.initial_distribution / st.pi))
    rng = np.random.default_rng(seed)
    paths = sample_paths(arm, rng, trials, max(MARKOV_T))
    csum = np.cumsum(f[paths], axis=1)
    out = []
    for t in MARKOV_T:
        avg = csum[:, t - 1] / t
        for g in MARKOV_GAMMA:
            freq = float(np.mean(avg >= g))
            out.append(TailCheck(f"{label} t={t} gamma={g}", freq, n_lam * math.exp(-t * st.rho * g * g / 28)))
    return out


def markov_arms() -> list[tuple[str, MarkovArm]]:
    """Every experiment chain from stationarity and from a point mass, plus a slow chain."""
    arms = []
    for i, row in enumerate(markov_grid_chains()):
        for j, ch in enumerate(row):
            arms.append((f"chain[{i}][{j}] pi", ch))
            point = MarkovArm(ch.states, ch.P, initial_distribution=[1.0, 0.0], allow_zero_reward=True)
            arms.append((f"chain[{i}][{j}] delta0", point))
    slow = MarkovArm.two_state(0.02, 0.03, rewards=(0.2, 1.0), initial_distribution=[0.0, 1.0])
    arms.append(("slow delta1", slow))
    return arms


def all_checks(seed: int = 0) -> list[TailCheck]:
    out = []
    for p in (0.5, 0.8):
        out += hoeffding_checks(p, seed)
    for k, (label, arm) in enumerate(markov_arms()):
        out += markov_checks(arm, seed + k, label=label)
    return out
