import math

import numpy as np
import pytest

from qnes import (
    EvalCounter,
    Generation,
    NumericalAbort,
    csa_update,
    chi_mean,
    default_params,
    hees_iteration,
    init_state,
    make_benchmark,
    matrix_update,
    rank_offspring,
    recombine_mean,
    sample_generation,
    with_pairs,
)
from qnes import StrategyParams
from qnes.hees import EsState


def uniform_weight_params(dim, pairs, csa_exponent="grouped"):
    # mirror-symmetric weights have no defined selection mass; build directly
    return StrategyParams(
        dim=dim,
        pairs=pairs,
        n_batches=math.ceil(pairs / dim),
        trunc_ratio=1e3,
        matrix_lr=0.5,
        c_sigma=0.3,
        d_sigma=1.3,
        weights=np.full(2 * pairs, 1.0 / (2 * pairs)),
        mu_eff=1.0,
        csa_exponent=csa_exponent,
    )


def make_generation(dirs, x_minus, x_plus, f_minus, f_plus):
    dirs = np.asarray(dirs, float)
    f_minus = np.asarray(f_minus, float)
    f_plus = np.asarray(f_plus, float)
    ranks_minus, ranks_plus = rank_offspring(f_minus, f_plus)
    return Generation(
        batches=dirs[None, :, :],
        dirs=dirs,
        x_minus=np.asarray(x_minus, float),
        x_plus=np.asarray(x_plus, float),
        f_minus=f_minus,
        f_plus=f_plus,
        ranks_minus=ranks_minus,
        ranks_plus=ranks_plus,
    )


class TestDefaultParams:
    def test_qnes_pair_count_is_dimension(self):
        params = default_params(5, "qnes")
        assert params.pairs == 5
        assert params.n_batches == 1

    def test_qnes_dimension_twenty(self):
        params = default_params(20, "qnes")
        assert params.pairs == 20
        # one plain iteration costs 2 * pairs + 1 evaluations
        assert 2 * params.pairs + 1 == 41

    def test_hees_population_heuristic(self):
        assert default_params(5, "hees").pairs == 4
        assert default_params(1, "hees").pairs == 2

    @pytest.mark.parametrize("dim", [1, 2, 5, 20, 40])
    @pytest.mark.parametrize("mode", ["hees", "qnes"])
    def test_weights_sum_to_one(self, dim, mode):
        params = default_params(dim, mode)
        assert abs(params.weights.sum() - 1.0) <= 1e-12
        assert np.all(np.diff(params.weights) <= 0.0)
        assert params.weights.shape == (2 * params.pairs,)

    def test_mu_eff_matches_mirrored_identity(self):
        params = default_params(7, "qnes")
        w = params.weights
        pairs = params.pairs
        diffs = [w[j] - w[2 * pairs - 1 - j] for j in range(pairs)]
        assert params.mu_eff == pytest.approx(1.0 / sum(d * d for d in diffs), rel=1e-12)

    def test_qnes_requires_multiple_of_dim(self):
        with pytest.raises(ValueError, match="multiple"):
            default_params(5, "qnes", pairs=7)
        assert default_params(5, "qnes", pairs=15).n_batches == 3

    def test_with_pairs_doubles_batches(self):
        params = default_params(5, "qnes")
        doubled = with_pairs(params, 10)
        assert doubled.pairs == 10
        assert doubled.n_batches == 2
        assert abs(doubled.weights.sum() - 1.0) <= 1e-12
        assert doubled.trunc_ratio == params.trunc_ratio

    def test_rejects_bad_ranges(self):
        with pytest.raises(ValueError):
            default_params(5, "qnes", trunc_ratio=1.0)
        with pytest.raises(ValueError):
            default_params(5, "qnes", matrix_lr=0.0)
        with pytest.raises(ValueError):
            default_params(5, "nosuch")


class TestMatrixUpdate:
    def test_concave_measurements_give_neutral_update(self):
        params = default_params(2, "qnes")
        # f concave along every direction: second differences negative
        update = matrix_update(np.eye(2), 1.0, np.array([0.5, 0.3]), np.array([0.4, 0.2]),
                               1.0, params)
        np.testing.assert_array_equal(update.matrix, np.eye(2))
        assert update.mean_log_curv is None

    def test_worked_axis_aligned_example(self):
        # f(x) = x1^2 + 4 x2^2 measured along e1 and e2 at sigma = 1, mean = 0
        params = default_params(2, "qnes", matrix_lr=1.0)
        update = matrix_update(np.eye(2), 0.0, np.array([1.0, 4.0]), np.array([1.0, 4.0]),
                               1.0, params)
        root2 = math.sqrt(2.0)
        np.testing.assert_allclose(update.matrix, np.diag([root2, 1.0 / root2]), rtol=1e-12)
        assert update.mean_log_curv == pytest.approx(math.log(4.0), rel=1e-12)
        # transform.T @ transform equals the det-normalized inverse Hessian
        cov = update.matrix.T @ update.matrix
        h_inv = np.diag([0.5, 0.125])
        normalized = h_inv / np.linalg.det(h_inv) ** 0.5
        np.testing.assert_allclose(cov, normalized, rtol=1e-12)
        assert abs(np.linalg.det(update.matrix) - 1.0) <= 1e-10

    def test_equal_curvatures_give_identity(self):
        # sphere: curvature 2 along every direction, whatever the batch
        rng = np.random.default_rng(8)
        from qnes import sample_orthogonal

        dirs = sample_orthogonal(rng, 4)
        sq = np.sum(dirs * dirs, axis=1)
        f_pm = sq  # f(x) = ||x||^2 at mean 0: f(+/- b) = ||b||^2
        params = default_params(4, "qnes")
        update = matrix_update(dirs, 0.0, f_pm, f_pm, 1.0, params)
        np.testing.assert_allclose(update.matrix, np.eye(4), atol=1e-12)
        assert update.mean_log_curv == pytest.approx(math.log(2.0), rel=1e-12)

    def test_truncation_caps_measurement_spread(self):
        # curvatures 2 and 2e8 with cap ratio 100: after clipping the spread is
        # exactly 100, so the update eigenvalue ratio is 100 ** (lr / 2) = 10
        params = default_params(2, "qnes", trunc_ratio=100.0, matrix_lr=1.0)
        update = matrix_update(np.eye(2), 0.0, np.array([1.0, 1e8]), np.array([1.0, 1e8]),
                               1.0, params)
        eigs = np.sort(np.linalg.eigvalsh(update.matrix))
        np.testing.assert_allclose(eigs[-1] / eigs[0], 10.0, rtol=1e-10)
        assert abs(np.linalg.det(update.matrix) - 1.0) <= 1e-10

    def test_non_finite_values_abort(self):
        params = default_params(2, "qnes")
        with pytest.raises(NumericalAbort):
            matrix_update(np.eye(2), 0.0, np.array([1.0, np.nan]), np.array([1.0, 1.0]),
                          1.0, params)


class TestRankOffspring:
    def test_ranks_are_a_permutation(self):
        rng = np.random.default_rng(9)
        f_minus, f_plus = rng.standard_normal(6), rng.standard_normal(6)
        rm, rp = rank_offspring(f_minus, f_plus)
        assert sorted(np.concatenate([rm, rp])) == list(range(1, 13))

    def test_ties_break_by_evaluation_order(self):
        rm, rp = rank_offspring(np.array([1.0, 1.0]), np.array([1.0, 1.0]))
        # order of evaluation: minus then plus within a pair, pairs in order
        assert list(rm) == [1, 3]
        assert list(rp) == [2, 4]


class TestRecombineMean:
    def test_all_weight_on_best(self):
        params = default_params(2, "qnes",
                                weights=np.array([1.0, 0.0, 0.0, 0.0]))
        gen = make_generation(
            np.eye(2),
            x_minus=[[0.0, 1.0], [2.0, 0.0]],
            x_plus=[[0.0, -1.0], [-2.0, 0.0]],
            f_minus=[5.0, 1.0],
            f_plus=[4.0, 3.0],
        )
        np.testing.assert_array_equal(recombine_mean(gen, params), [2.0, 0.0])

    def test_uniform_weights_fix_the_mean(self):
        # mirrored pairs cancel: the offspring average equals the mean
        dim, pairs = 3, 3
        params = uniform_weight_params(dim, pairs)
        rng = np.random.default_rng(10)
        from qnes import sample_orthogonal

        dirs = sample_orthogonal(rng, dim)
        mean = np.zeros(dim)
        gen = make_generation(dirs, x_minus=mean - dirs, x_plus=mean + dirs,
                              f_minus=rng.standard_normal(pairs),
                              f_plus=rng.standard_normal(pairs))
        np.testing.assert_array_equal(recombine_mean(gen, params), mean)

        mean = rng.standard_normal(dim)
        gen = make_generation(dirs, x_minus=mean - dirs, x_plus=mean + dirs,
                              f_minus=rng.standard_normal(pairs),
                              f_plus=rng.standard_normal(pairs))
        np.testing.assert_allclose(recombine_mean(gen, params), mean, rtol=1e-14, atol=1e-15)

    def test_one_dimensional_best_offspring(self):
        params = default_params(1, "qnes", weights=np.array([1.0, 0.0]))
        gen = make_generation(np.array([[1.5]]), x_minus=[[-1.5]], x_plus=[[1.5]],
                              f_minus=[0.5], f_plus=[2.0])
        np.testing.assert_array_equal(recombine_mean(gen, params), [-1.5])


class TestCsaUpdate:
    @staticmethod
    def state_with(dim, p_sigma, g_sigma, sigma=1.0):
        return EsState(np.zeros(dim), sigma, np.eye(dim), np.asarray(p_sigma, float),
                       g_sigma, 0, 0.0)

    def test_variance_accumulator_from_zero(self):
        params = default_params(2, "qnes")
        gen = make_generation(np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)),
                              [1.0, 2.0], [3.0, 4.0])
        _, g_new, _ = csa_update(self.state_with(2, [0.0, 0.0], 0.0), gen, params)
        c = params.c_sigma
        assert g_new == pytest.approx(c * (2.0 - c), rel=1e-15)

    def test_symmetric_selection_decays_path(self):
        # uniform weights make every mirrored difference vanish
        params = uniform_weight_params(2, 2)
        gen = make_generation(np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)),
                              [1.0, 2.0], [3.0, 4.0])
        p0 = np.array([0.4, -0.7])
        path, _, _ = csa_update(self.state_with(2, p0, 0.5), gen, params)
        np.testing.assert_array_equal(path, (1.0 - params.c_sigma) * p0)

    def test_stationary_point_of_grouped_exponent(self):
        # g = 1 is a fixed point; a path of length chi_d leaves sigma unchanged
        dim = 3
        params = uniform_weight_params(dim, 3)
        gen = make_generation(np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)),
                              [1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
        p0 = np.zeros(dim)
        p0[0] = chi_mean(dim) / (1.0 - params.c_sigma)
        path, g_new, sigma_new = csa_update(self.state_with(dim, p0, 1.0, sigma=2.0), gen, params)
        assert g_new == pytest.approx(1.0, rel=1e-15)
        assert np.linalg.norm(path) == pytest.approx(chi_mean(dim), rel=1e-14)
        assert sigma_new == pytest.approx(2.0, rel=1e-12)

    def test_ungrouped_exponent_has_no_stationary_point(self):
        dim = 3
        params = uniform_weight_params(dim, 3, csa_exponent="ungrouped")
        gen = make_generation(np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)),
                              [1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
        p0 = np.zeros(dim)
        p0[0] = chi_mean(dim) / (1.0 - params.c_sigma)
        _, _, sigma_new = csa_update(self.state_with(dim, p0, 1.0, sigma=2.0), gen, params)
        expected = 2.0 * math.exp(params.c_sigma / params.d_sigma - 1.0)
        assert sigma_new == pytest.approx(expected, rel=1e-12)
        assert sigma_new < 1.2  # decays hard at the would-be fixed point


class TestHeesIteration:
    def test_sphere_progress_and_accounting(self):
        obj = make_benchmark("sphere", 5)
        params = default_params(5, "hees")
        counter = EvalCounter()
        rng = np.random.default_rng(13)
        state = init_state(obj, counter, np.ones(5), 1.0)
        start_f = state.f_mean
        assert counter.count == 1
        for _ in range(50):
            before = counter.count
            state, gen, update = hees_iteration(state, obj, counter, params, rng)
            assert counter.count - before == 2 * params.pairs + 1
            assert abs(np.linalg.det(state.transform) - 1.0) <= 1e-6
        assert state.f_mean < start_f

    def test_long_run_determinant_stability(self):
        # the one-norm keeps the update churning on anisotropic, non-smooth
        # measurements without ever stalling the iteration loop
        obj = make_benchmark("one-norm", 5)
        params = default_params(5, "hees")
        counter = EvalCounter()
        rng = np.random.default_rng(14)
        state = init_state(obj, counter, rng.uniform(-4, 4, 5), 2.0)
        worst = 0.0
        for _ in range(1500):
            state, _, _ = hees_iteration(state, obj, counter, params, rng)
            worst = max(worst, abs(np.linalg.det(state.transform) - 1.0))
        assert worst <= 1e-6

    def test_rank_invariance_of_selection(self):
        # a strictly increasing transform of the offspring values leaves
        # recombination and CSA bit-identical
        obj = make_benchmark("ellipsoid", 4)
        params = default_params(4, "qnes")
        counter = EvalCounter()
        rng = np.random.default_rng(15)
        state = init_state(obj, counter, rng.uniform(-4, 4, 4), 2.0)
        gen = sample_generation(state, obj, counter, params, rng)

        increasing = lambda v: v ** 3 + v
        rm, rp = rank_offspring(increasing(gen.f_minus), increasing(gen.f_plus))
        gen_t = Generation(gen.batches, gen.dirs, gen.x_minus, gen.x_plus,
                           increasing(gen.f_minus), increasing(gen.f_plus), rm, rp)
        assert np.array_equal(gen.ranks_minus, gen_t.ranks_minus)
        assert np.array_equal(gen.ranks_plus, gen_t.ranks_plus)
        assert np.array_equal(recombine_mean(gen, params), recombine_mean(gen_t, params))
        p1, g1, s1 = csa_update(state, gen, params)
        p2, g2, s2 = csa_update(state, gen_t, params)
        assert np.array_equal(p1, p2) and g1 == g2 and s1 == s2

    def test_quadratic_recovery_small(self):
        # after converging on a diagonal quadratic the learned covariance is a
        # multiple of the inverse Hessian
        from qnes import Objective, StoppingCriteria, run

        H = np.diag([1.0, 10.0, 100.0])
        obj = Objective("diag-quadratic", 3, lambda x: 0.5 * float(x @ (H @ x)),
                        0.0, np.zeros(3))
        params = default_params(3, "hees")
        log = run("hees", obj, params, StoppingCriteria(max_evals=200_000, target_gap=1e-14), 2)
        assert log.reason == "target-reached"
        state = log.final[0]
        product = state.transform.T @ state.transform @ H
        assert np.linalg.cond(product) <= 1.1
