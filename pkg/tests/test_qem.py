"""Cluster model: interaction, weights, normalizer, likelihood, fitting."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnclust.datamodel import RegionMeta
from cnclust.errors import InconsistentAlpha, ZeroDistance
from cnclust.qem import (
    ClusterParams,
    FitConfig,
    cluster_loglik,
    distance_weights,
    enumerate_states,
    f_interaction,
    fit_cluster,
    gamma_rescale,
    log_normalizer,
    state_distribution,
    uniform_weights,
)
from helpers import enum_loglik, enum_penalized, fd_gradient


class TestFInteraction:
    def test_matching_pairs(self):
        assert f_interaction(1, 1) == 1
        assert f_interaction(-1, -1) == 1
        assert f_interaction(0, 0) == 0

    def test_mismatches_score_minus_one(self):
        assert f_interaction(1, -1) == -1
        assert f_interaction(0, 1) == -1
        assert f_interaction(-1, 0) == -1

    def test_rejects_non_ternary(self):
        with pytest.raises(ValueError):
            f_interaction(2, 0)


class TestEnumerateStates:
    def test_little_endian_order(self):
        states = enumerate_states(2)
        assert states.shape == (9, 2)
        # region 0 varies fastest
        assert list(states[0]) == [-1, -1]
        assert list(states[1]) == [0, -1]
        assert list(states[3]) == [-1, 0]

    def test_covers_all_states(self):
        states = enumerate_states(3)
        assert len({tuple(s) for s in states}) == 27


class TestDistanceWeights:
    def meta3(self):
        return [RegionMeta(1, 0, 0), RegionMeta(1, 100_000, 100_000),
                RegionMeta(1, 300_000, 300_000)]

    def test_q_zero_gives_unit_weights(self):
        dw = distance_weights(self.meta3(), q=0.0)
        off = dw.w[np.triu_indices(3, 1)]
        assert np.all(off == 1.0)

    def test_two_regions_self_normalize(self):
        dw = distance_weights(self.meta3()[:2], q=1.0)
        assert dw.w[0, 1] == 1.0

    def test_three_region_example(self):
        # midpoint distances 1e5, 3e5, 2e5 at q=1 -> weights 1, 1/3, 1/2
        dw = distance_weights(self.meta3(), q=1.0)
        assert dw.w[0, 1] == pytest.approx(1.0, abs=0)
        assert dw.w[0, 2] == pytest.approx(1 / 3, rel=1e-15)
        assert dw.w[1, 2] == pytest.approx(1 / 2, rel=1e-15)

    def test_symmetry_and_range(self):
        dw = distance_weights(self.meta3(), q=2.0)
        assert np.array_equal(dw.w, dw.w.T)
        off = dw.w[np.triu_indices(3, 1)]
        assert off.max() == 1.0
        assert (off > 0).all() and (off <= 1).all()

    def test_zero_distance_rejected(self):
        meta = [RegionMeta(1, 0, 100), RegionMeta(1, 10, 90)]  # same midpoint
        with pytest.raises(ZeroDistance):
            distance_weights(meta, q=1.0)

    def test_probe_basis_adjacent_distance_one(self):
        meta = [RegionMeta(1, 0, 0, probe_count=5), RegionMeta(1, 10, 10, probe_count=3),
                RegionMeta(1, 20, 20, probe_count=7)]
        dw = distance_weights(meta, q=1.0, basis="probes")
        # adjacent pairs: 0 probes between, distance 1 -> weight 1
        assert dw.w[0, 1] == 1.0 and dw.w[1, 2] == 1.0
        # regions 0 and 2: 3 probes between, distance 4 -> weight 1/4
        assert dw.w[0, 2] == pytest.approx(0.25)

    def test_mixed_chromosomes_rejected(self):
        with pytest.raises(ValueError):
            distance_weights([RegionMeta(1, 0, 0), RegionMeta(2, 0, 0)], q=1.0)


class TestLogNormalizer:
    def test_single_region_uniform(self):
        assert log_normalizer([0.0], 0.0, uniform_weights(1)) == pytest.approx(math.log(3))

    def test_pair_independent(self):
        assert log_normalizer([0.0, 0.0], 0.0, uniform_weights(2)) == pytest.approx(math.log(9))

    def test_pair_with_interaction_brute_force(self):
        # enumerate the 9 states: f=0 once, f=1 twice, f=-1 six times
        expected = math.log(sum(
            math.exp(1.0 * (a * b if a == b else -1))
            for a in (-1, 0, 1) for b in (-1, 0, 1)
        ))
        assert expected == pytest.approx(math.log(1 + 2 * math.e + 6 / math.e))
        got = log_normalizer([0.0, 0.0], 1.0, uniform_weights(2))
        assert got == pytest.approx(expected, rel=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 4))
    def test_matches_enumeration_oracle(self, seed, m):
        rng = np.random.default_rng(seed)
        beta = rng.normal(size=m)
        gamma = float(rng.normal())
        w = np.zeros((m, m))
        ij = np.triu_indices(m, 1)
        w[ij] = rng.random(len(ij[0]))
        w += w.T
        block = rng.integers(-1, 2, size=(m, 3)).astype(np.int8)
        lz = log_normalizer(beta, gamma, w)
        # enum_loglik computes  sum_i (energy_i - logz)
        expected = enum_loglik(block, beta, gamma, w)
        alpha = -lz
        got = cluster_loglik(block, ClusterParams(beta, gamma, alpha), w)
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-10)


class TestClusterLoglik:
    def test_uniform_single_region(self):
        block = np.array([[-1, 0, 1]], dtype=np.int8)
        params = ClusterParams(np.zeros(1), 0.0, -math.log(3))
        value = cluster_loglik(block, params, uniform_weights(1))
        assert value == pytest.approx(3 * -math.log(3))

    def test_inconsistent_alpha_rejected(self):
        block = np.array([[-1, 0, 1]], dtype=np.int8)
        params = ClusterParams(np.zeros(1), 0.0, -math.log(3) + 0.01)
        with pytest.raises(InconsistentAlpha):
            cluster_loglik(block, params, uniform_weights(1))

    def test_gamma_zero_factorizes(self):
        rng = np.random.default_rng(8)
        block = rng.integers(-1, 2, size=(2, 40)).astype(np.int8)
        beta = rng.normal(size=2)
        joint = ClusterParams(beta, 0.0, -log_normalizer(beta, 0.0, uniform_weights(2)))
        value = cluster_loglik(block, joint, uniform_weights(2))
        parts = 0.0
        for j in range(2):
            single = ClusterParams(beta[j:j + 1], 0.0,
                                   -log_normalizer(beta[j:j + 1], 0.0, uniform_weights(1)))
            parts += cluster_loglik(block[j:j + 1], single, uniform_weights(1))
        assert value == pytest.approx(parts, rel=1e-12)

    def test_mle_beats_perturbations(self):
        rng = np.random.default_rng(9)
        block = rng.integers(-1, 2, size=(3, 60)).astype(np.int8)
        w = uniform_weights(3)
        config = FitConfig(ridge=1e-9)  # near-pure MLE for this comparison
        fit = fit_cluster(block, w, config)
        best = cluster_loglik(block, fit.params, w)
        for _ in range(100):
            beta = fit.params.beta + rng.normal(scale=0.05, size=3)
            gamma = fit.params.gamma + float(rng.normal(scale=0.05))
            alt = ClusterParams(beta, gamma, -log_normalizer(beta, gamma, w))
            assert cluster_loglik(block, alt, w) <= best + 1e-9


class TestFitCluster:
    def test_symmetric_counts_give_zero_beta(self):
        block = np.array([[-1] * 5 + [0] * 5 + [1] * 5], dtype=np.int8)
        fit = fit_cluster(block, uniform_weights(1), FitConfig())
        assert abs(fit.params.beta[0]) < 1e-6
        assert fit.converged

    def test_recovers_known_parameters(self):
        # sample m=2 from the exact enumerated distribution
        rng = np.random.default_rng(10)
        beta_true = np.array([0.3, -0.2])
        gamma_true = 0.8
        probs = state_distribution(beta_true, gamma_true, uniform_weights(2))
        draws = rng.choice(9, size=10_000, p=probs)
        block = enumerate_states(2)[draws].T
        fit = fit_cluster(block, uniform_weights(2), FitConfig())
        assert np.abs(fit.params.beta - beta_true).max() < 0.1
        assert abs(fit.params.gamma - gamma_true) < 0.1

    @pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
    def test_gradient_zero_and_fd_match_at_optimum(self, m):
        rng = np.random.default_rng(100 + m)
        block = rng.integers(-1, 2, size=(m, 50)).astype(np.int8)
        w = np.zeros((m, m))
        ij = np.triu_indices(m, 1)
        w[ij] = rng.random(len(ij[0])) * 0.9 + 0.1
        w += w.T
        config = FitConfig()
        fit = fit_cluster(block, w, config)
        assert fit.converged
        theta = np.append(fit.params.beta, fit.params.gamma)
        lam = config.ridge * block.shape[1]

        def objective(t):
            return enum_penalized(block, t, w, lam)

        grad_fd = fd_gradient(objective, theta, step=1e-5)
        assert np.abs(grad_fd).max() < 1e-4  # optimum of the enumerated objective too

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_fd_gradient_matches_at_random_points(self, m):
        # the analytic gradient identity: d/dtheta loglik = T_obs - n E[T] - 2 lam theta
        rng = np.random.default_rng(200 + m)
        block = rng.integers(-1, 2, size=(m, 30)).astype(np.int8)
        w = uniform_weights(m).w
        lam = 0.03
        from cnclust.qem import enumerate_states as enum, observed_suffstats, pair_scores

        sx, sg, n = observed_suffstats(block, w)
        t_obs = np.append(sx, sg)
        states = enum(m)
        suff = np.column_stack([states.astype(float), pair_scores(w, states)])
        for _ in range(5):
            theta = rng.normal(scale=0.7, size=m + 1)
            logits = suff @ theta
            p = np.exp(logits - logits.max())
            p /= p.sum()
            analytic = t_obs - n * (p @ suff) - 2 * lam * theta
            fd = fd_gradient(lambda t: enum_penalized(block, t, w, lam), theta)
            assert np.abs(analytic - fd).max() < 1e-4 * max(1.0, np.abs(analytic).max())

    def test_normalization_sums_to_one(self):
        rng = np.random.default_rng(11)
        for m in (1, 2, 3, 4):
            block = rng.integers(-1, 2, size=(m, 25)).astype(np.int8)
            fit = fit_cluster(block, uniform_weights(m), FitConfig())
            probs = state_distribution(fit.params.beta, fit.params.gamma, uniform_weights(m))
            assert abs(probs.sum() - 1.0) < 1e-10

    def test_concavity_probe(self):
        rng = np.random.default_rng(12)
        m = 3
        block = rng.integers(-1, 2, size=(m, 40)).astype(np.int8)
        w = uniform_weights(m).w
        lam = 0.04
        for _ in range(25):
            t1 = rng.normal(scale=1.0, size=m + 1)
            t2 = rng.normal(scale=1.0, size=m + 1)
            t = float(rng.random())
            mid = enum_penalized(block, t * t1 + (1 - t) * t2, w, lam)
            ends = t * enum_penalized(block, t1, w, lam) + (1 - t) * enum_penalized(block, t2, w, lam)
            assert mid >= ends - 1e-9

    def test_degenerate_block_stays_finite(self):
        # a state never observed: unpenalized MLE diverges, ridge keeps it finite
        block = np.ones((2, 30), dtype=np.int8)
        fit = fit_cluster(block, uniform_weights(2), FitConfig())
        assert fit.converged
        assert np.isfinite(fit.params.beta).all() and math.isfinite(fit.params.gamma)


class TestGammaRescale:
    def test_zero_maps_to_zero(self):
        assert gamma_rescale(0.0) == 0.0

    def test_odd_function(self):
        rng = np.random.default_rng(13)
        for g in rng.normal(scale=3, size=20):
            assert gamma_rescale(-g) == pytest.approx(-gamma_rescale(g), rel=1e-14)

    def test_range_and_monotonicity(self):
        values = [gamma_rescale(g) for g in np.linspace(-30, 30, 101)]
        assert all(-1 < v < 1 for v in values)
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_reported_scale_values_are_reachable(self):
        # rescaled coefficients like 0.4653 and 0.7999 must be legal outputs
        for target in (0.4653, 0.7999):
            g = 2 * math.atanh(target)
            assert gamma_rescale(g) == pytest.approx(target, abs=1e-12)
