import math

import numpy as np
import pytest

from qnes import BENCHMARK_NAMES, EvalCounter, evaluate_counted, make_benchmark


def unit_vector(dim, index=0):
    e = np.zeros(dim)
    e[index] = 1.0
    return e


class TestMakeBenchmark:
    def test_sphere_unit_vector(self):
        obj = make_benchmark("sphere", 4)
        assert obj(unit_vector(4)) == 1.0

    def test_rosenbrock_optimum_at_origin(self):
        for d in (2, 5, 10):
            obj = make_benchmark("rosenbrock", d)
            assert obj(np.zeros(d)) == 0.0
            assert obj.f_star == 0.0

    def test_ellipsoid_two_dimensional(self):
        obj = make_benchmark("ellipsoid", 2)
        np.testing.assert_allclose(obj(np.ones(2)), 1.0 + 1e6, rtol=1e-15)

    def test_happycat_minimum(self):
        obj = make_benchmark("happycat", 5)
        assert obj(-np.ones(5)) == pytest.approx(0.0, abs=1e-15)

    def test_log_sphere_unit_vector(self):
        obj = make_benchmark("log-sphere", 5)
        assert obj(unit_vector(5)) == 0.0

    def test_log_sphere_gap_is_sphere_value(self):
        obj = make_benchmark("log-sphere", 3)
        x = np.array([0.3, -0.2, 0.1])
        np.testing.assert_allclose(obj.gap(obj(x)), float(x @ x), rtol=1e-12)

    def test_discus_and_cigar(self):
        discus = make_benchmark("discus", 3)
        cigar = make_benchmark("cigar", 3)
        x = np.array([1.0, 1.0, 1.0])
        assert discus(x) == 1e6 + 2.0
        assert cigar(x) == 1.0 + 2e6

    def test_sum_of_different_powers(self):
        obj = make_benchmark("sum-of-different-powers", 2)
        # exponents 2 and 6
        np.testing.assert_allclose(obj(np.array([2.0, 2.0])), math.sqrt(4.0 + 64.0), rtol=1e-15)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown benchmark"):
            make_benchmark("nosuch", 5)

    def test_dimension_minimums(self):
        for name in ("ellipsoid", "discus", "cigar", "rosenbrock",
                     "sum-of-different-powers", "happycat"):
            with pytest.raises(ValueError, match="dimension"):
                make_benchmark(name, 1)
        for name in ("sphere", "log-sphere", "one-norm"):
            assert make_benchmark(name, 1).dim == 1


class TestLocalMinimality:
    @pytest.mark.parametrize("name", BENCHMARK_NAMES)
    def test_optimum_is_local_minimum(self, name):
        obj = make_benchmark(name, 5)
        rng = np.random.default_rng(11)
        f_at_star = obj(obj.x_star)
        if name == "log-sphere":
            assert f_at_star == -math.inf
        else:
            assert f_at_star == pytest.approx(obj.f_star, abs=1e-15)
        for _ in range(100):
            u = rng.standard_normal(5)
            u /= np.linalg.norm(u)
            assert obj(obj.x_star + 1e-3 * u) > f_at_star


class TestConditioning:
    @pytest.mark.parametrize("name", ["ellipsoid", "discus", "cigar"])
    def test_quadratic_condition_number(self, name):
        # diagonal quadratics: the coefficient of x_i^2 is f(e_i)
        obj = make_benchmark(name, 5)
        coeffs = np.array([obj(unit_vector(5, i)) for i in range(5)])
        np.testing.assert_allclose(coeffs.max() / coeffs.min(), 1e6, rtol=1e-12)


class TestLevelSets:
    def test_log_sphere_ranks_like_sphere(self):
        sphere = make_benchmark("sphere", 6)
        log_sphere = make_benchmark("log-sphere", 6)
        rng = np.random.default_rng(12)
        xs = rng.uniform(-3.0, 3.0, (40, 6))
        sphere_rank = np.argsort([sphere(x) for x in xs])
        log_rank = np.argsort([log_sphere(x) for x in xs])
        assert np.array_equal(sphere_rank, log_rank)


class TestEvaluateCounted:
    def test_counts_once_per_call(self):
        obj = make_benchmark("sphere", 3)
        counter = EvalCounter()
        assert evaluate_counted(obj, counter, np.zeros(3)) == 0.0
        assert counter.count == 1
        evaluate_counted(obj, counter, np.ones(3))
        assert counter.count == 2

    def test_log_sphere_substitution(self):
        obj = make_benchmark("log-sphere", 4)
        counter = EvalCounter()
        assert evaluate_counted(obj, counter, unit_vector(4)) == 0.0

    def test_dimension_mismatch(self):
        obj = make_benchmark("sphere", 3)
        with pytest.raises(ValueError, match="dimension"):
            evaluate_counted(obj, EvalCounter(), np.zeros(4))
