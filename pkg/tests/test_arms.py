import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmab.arms import (
    ArmError,
    IidArm,
    MarkovArm,
    chain_stats,
    initial_law_prefactor,
    pair_stream,
    sample_iid,
    sample_paths,
    step_markov,
    markov_grid_chains,
)

probs = st.floats(min_value=0.01, max_value=0.99)


def birth_death(n=3):
    # reversible by construction (tridiagonal)
    P = np.zeros((n, n))
    for i in range(n):
        if i > 0:
            P[i, i - 1] = 0.3
        if i < n - 1:
            P[i, i + 1] = 0.2
        P[i, i] = 1.0 - P[i].sum()
    return P


class TestIidArm:
    def test_bernoulli_one_is_always_one(self, rng):
        arm = IidArm.bernoulli(1.0)
        assert all(sample_iid(arm, rng) == 1.0 for _ in range(200))

    def test_point_mass(self, rng):
        arm = IidArm([0.5], [1.0])
        assert np.all(arm.sample(rng, 1000) == 0.5)
        assert arm.mean == 0.5

    def test_bernoulli_sample_mean(self, rng):
        x = IidArm.bernoulli(0.8).sample(rng, 10**6)
        assert abs(x.mean() - 0.8) < 0.002

    def test_discrete_mean_matches_analytic(self):
        arm = IidArm([0.0, 0.25, 1.0], [0.2, 0.3, 0.5])
        assert arm.mean == pytest.approx(0.575, abs=1e-12)

    def test_discrete_frequencies(self, rng):
        arm = IidArm([0.0, 0.25, 1.0], [0.2, 0.3, 0.5])
        x = arm.sample(rng, 200_000)
        for v, p in zip(arm.values, arm.probs):
            assert abs(np.mean(x == v) - p) < 0.005

    @pytest.mark.parametrize(
        "values, probs",
        [([1.5], [1.0]), ([-0.1, 0.5], [0.5, 0.5]), ([0.1, 0.2], [0.5, 0.4]), ([0.1], [-1.0]), ([], [])],
    )
    def test_rejects_invalid(self, values, probs):
        with pytest.raises(ArmError):
            IidArm(values, probs)

    def test_rejects_bad_bernoulli(self):
        with pytest.raises(ArmError):
            IidArm.bernoulli(1.2)

    def test_batch_equals_sequential(self):
        arm = IidArm([0.0, 0.3, 1.0], [0.2, 0.3, 0.5])
        a = arm.sample(pair_stream(7, 0, 1), 100)
        r = pair_stream(7, 0, 1)
        b = np.array([arm.sample(r) for _ in range(100)])
        np.testing.assert_array_equal(a, b)


class TestStreams:
    def test_pair_streams_are_distinct_and_reproducible(self):
        a = pair_stream(3, 0, 1).random(5)
        assert np.array_equal(a, pair_stream(3, 0, 1).random(5))
        assert not np.array_equal(a, pair_stream(3, 1, 0).random(5))
        assert not np.array_equal(a, pair_stream(4, 0, 1).random(5))


class TestMarkovConstruction:
    def test_identity_rejected(self):
        with pytest.raises(ArmError, match="irreducible"):
            MarkovArm([0.5, 1.0], np.eye(2))

    def test_periodic_rejected(self):
        with pytest.raises(ArmError, match="aperiodic"):
            MarkovArm([0.5, 1.0], [[0.0, 1.0], [1.0, 0.0]])

    def test_non_stochastic_rejected(self):
        with pytest.raises(ArmError, match="stochastic"):
            MarkovArm([0.5, 1.0], [[0.5, 0.6], [0.5, 0.5]])

    def test_non_reversible_rejected(self):
        # biased 3-cycle: stationary law uniform but probability flux circulates
        P = [[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]]
        with pytest.raises(ArmError, match="reversible"):
            MarkovArm([0.2, 0.5, 1.0], P)

    def test_zero_reward_needs_flag(self):
        P = [[0.7, 0.3], [0.5, 0.5]]
        with pytest.raises(ArmError, match=r"\(0, 1\]"):
            MarkovArm([0.0, 1.0], P)
        assert MarkovArm([0.0, 1.0], P, allow_zero_reward=True).mean == pytest.approx(0.375)

    def test_bad_initial_distribution(self):
        with pytest.raises(ArmError):
            MarkovArm([0.5, 1.0], [[0.7, 0.3], [0.5, 0.5]], initial_distribution=[0.5, 0.6])


class TestMarkovDynamics:
    def test_frozen_when_not_played(self, rng):
        arm = MarkovArm.two_state(0.3, 0.5)
        arm.step(rng)
        s = arm.current_state
        for _ in range(100):
            rng.random()  # time passes, other arms draw
        assert arm.current_state == s

    def test_reward_is_new_state_value(self, rng):
        arm = MarkovArm([0.25, 1.0], [[0.6, 0.4], [0.1, 0.9]])
        for _ in range(50):
            r = step_markov(arm, rng)
            assert r == arm.states[arm.current_state]

    def test_two_state_frequency(self, rng):
        arm = MarkovArm.two_state(0.3, 0.5)
        path = arm.state_path(rng, 10**6)
        assert abs(path.mean() - 0.375) < 0.002

    def test_empirical_frequencies_converge(self):
        arm = MarkovArm([0.2, 0.6, 1.0], birth_death(3))
        for seed in range(3):
            for n in (10**4, 10**5):
                a = MarkovArm([0.2, 0.6, 1.0], birth_death(3))
                path = a.state_path(pair_stream(seed, 9), n)
                freq = np.bincount(path, minlength=3) / n
                assert np.max(np.abs(freq - arm.stats.pi)) <= 5 * math.sqrt(math.log(n) / n)

    def test_batch_steps_equal_single_steps(self):
        a, b = MarkovArm.two_state(0.3, 0.5), MarkovArm.two_state(0.3, 0.5)
        ra, rb = pair_stream(1, 2), pair_stream(1, 2)
        x = a.steps(ra, 300)
        y = np.array([b.step(rb) for _ in range(300)])
        np.testing.assert_array_equal(x, y)
        assert a.current_state == b.current_state

    def test_rested_interleaving_matches_isolation(self):
        # per-arm streams: the trajectory of an arm depends only on how often it was played
        def make():
            return [MarkovArm.two_state(0.3, 0.5), MarkovArm.two_state(0.2, 0.6)]

        iso = make()
        iso_paths = [iso[j].steps(pair_stream(0, 0, j), 400) for j in range(2)]
        inter = make()
        streams = [pair_stream(0, 0, j) for j in range(2)]
        order = np.random.default_rng(3).integers(0, 2, size=800)
        got = [[], []]
        for j in order:
            if len(got[j]) < 400:
                got[j].append(inter[j].step(streams[j]))
        for j in range(2):
            np.testing.assert_array_equal(got[j], iso_paths[j][: len(got[j])])

    def test_sample_paths_matches_single_path(self):
        arm = MarkovArm([0.2, 0.6, 1.0], birth_death(3))
        p = sample_paths(arm, np.random.default_rng(4), 1, 200)[0]
        other = MarkovArm([0.2, 0.6, 1.0], birth_death(3))
        np.testing.assert_array_equal(other.state_path(np.random.default_rng(4), 200), p)


class TestChainStats:
    def test_two_state_example(self):
        s = chain_stats(MarkovArm.two_state(0.3, 0.5))
        np.testing.assert_allclose(s.pi, [0.625, 0.375], atol=1e-12)
        assert s.rho == pytest.approx(0.96, abs=1e-12)
        assert s.lambda2 == pytest.approx(0.04, abs=1e-12)
        assert s.mean == pytest.approx(0.375, abs=1e-12)

    def test_markov_grid_entry(self):
        s = chain_stats(MarkovArm.two_state(0.7, 0.2))
        assert s.pi[1] == pytest.approx(0.7 / 0.9, abs=1e-12)

    def test_symmetric_chain(self):
        s = chain_stats(MarkovArm([0.5, 1.0], [[0.5, 0.5], [0.5, 0.5]]))
        np.testing.assert_allclose(s.pi, [0.5, 0.5], atol=1e-12)
        assert s.rho == pytest.approx(1.0, abs=1e-12)

    @given(p01=probs, p10=probs)
    @settings(max_examples=60, deadline=None)
    def test_two_state_closed_form(self, p01, p10):
        s = MarkovArm.two_state(p01, p10).stats
        assert s.pi[1] == pytest.approx(p01 / (p01 + p10), abs=1e-12)
        lam = 1.0 - p01 - p10
        assert s.lambda2 == pytest.approx(lam * lam, abs=1e-12)
        assert 0 < s.rho <= 1
        np.testing.assert_allclose(s.pi_hat, np.maximum(s.pi, 1 - s.pi))

    @given(st.integers(min_value=2, max_value=6), st.integers(min_value=0, max_value=10**6))
    @settings(max_examples=40, deadline=None)
    def test_random_reversible_chains(self, S, seed):
        # random symmetric weights give a reversible chain with pi proportional to row sums
        g = np.random.default_rng(seed)
        W = g.uniform(0.05, 1.0, size=(S, S))
        W = W + W.T
        P = W / W.sum(axis=1, keepdims=True)
        arm = MarkovArm(g.uniform(0.1, 1.0, size=S), P)
        s = arm.stats
        np.testing.assert_allclose(s.pi, W.sum(axis=1) / W.sum(), atol=1e-10)
        np.testing.assert_allclose(s.pi @ P, s.pi, atol=1e-10)
        assert s.pi.sum() == pytest.approx(1.0, abs=1e-12)
        # independent oracle: eigenvalues of P^2 are squares of those of P
        ev = np.sort(np.abs(np.linalg.eigvals(P).real) ** 2)
        assert s.lambda2 == pytest.approx(ev[-2], abs=1e-9)
        assert 0 < s.rho <= 1 + 1e-12
        assert s.cardinality == S

    def test_markov_grid_means(self, chains):
        means = [[c.mean for c in row] for row in chains]
        np.testing.assert_allclose(means, [[0.375, 0.25], [2 / 3, 7 / 9]], atol=1e-12)
        rho = [[c.stats.rho for c in row] for row in chains]
        np.testing.assert_allclose(rho, [[0.96, 0.96], [0.99, 0.99]], atol=1e-12)

    def test_prefactor(self):
        arm = MarkovArm.two_state(0.3, 0.5)
        assert initial_law_prefactor(arm) == pytest.approx(math.sqrt(2))
        point = MarkovArm.two_state(0.3, 0.5, initial_distribution=[1.0, 0.0])
        assert initial_law_prefactor(point) == pytest.approx(1 / 0.625)
