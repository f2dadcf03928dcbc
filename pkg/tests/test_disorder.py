import numpy as np
import pytest

from conftest import fundamental_matrix
from she_martin.disorder import (lambda_exact_white, lambda_quadrature,
                                 neumann_second_moment_bound,
                                 second_moment_bound_pair, weak_disorder_margin)
from she_martin.errors import WeakDisorderError
from she_martin.geometry import GraphSpace, build_regular_tree
from she_martin.heat import build_generator, green_function, make_cache
from she_martin.noise import build_covariance


class TestExactWhite:
    def test_path3_closed_form(self, gen_path3):
        # integral of e^{-2t}: the killed kernel on one vertex is e^{-t}
        assert lambda_exact_white(green_function(gen_path3)).value == \
            pytest.approx(0.5, abs=1e-12)

    def test_path5_fundamental_matrix_oracle(self, path5, gen_path5):
        oracle = fundamental_matrix(path5).max() / 2.0
        rep = lambda_exact_white(green_function(gen_path5))
        assert rep.value == pytest.approx(oracle, abs=1e-12)
        assert rep.value == pytest.approx(1.0, abs=1e-12)
        assert rep.arg_sup == (2, 2)  # center diagonal

    def test_tree_limit_is_one(self):
        # infinite q=2 tree: expected visits 1/(1 - 1/q) = 2, so the constant
        # tends to 1; extrapolate the geometric truncation error in the radius
        values = []
        for r in (3, 4, 5, 6):
            gen = build_generator(build_regular_tree(2, r))
            values.append(lambda_exact_white(green_function(gen)).value)
        values = np.array(values)
        assert np.all(np.diff(values) > 0)
        ratio = (values[2] - values[1]) / (values[1] - values[0])
        extrapolated = values[2] + (values[3] - values[2]) / (1 - ratio)
        assert extrapolated == pytest.approx(1.0, abs=0.02)


class TestQuadrature:
    def test_path3_t20(self, gen_path3, path3):
        cache = make_cache(gen_path3, 0.01)
        k = build_covariance(path3, "white")
        rep = lambda_quadrature(cache, k, 20.0, 1e-4)
        assert rep.tail_bound <= 1e-8
        assert abs(rep.value - 0.5) <= rep.tail_bound + 1e-8

    def test_agreement_on_q2_r4_tree(self):
        g = build_regular_tree(2, 4)
        gen = build_generator(g)
        cache = make_cache(gen, 0.01)
        k = build_covariance(g, "white")
        quad = lambda_quadrature(cache, k)
        exact = lambda_exact_white(green_function(gen))
        assert abs(quad.value - exact.value) <= quad.tail_bound + 1e-6

    def test_zero_kernel(self, path5, gen_path5):
        k = build_covariance(path5, "explicit", matrix=np.zeros((3, 3)))
        cache = make_cache(gen_path5, 0.01)
        rep = lambda_quadrature(cache, k, 5.0, 1e-3)
        assert rep.value == 0.0

    def test_unkilled_generator_diverges(self):
        w = np.zeros((4, 4))
        for i in range(4):
            w[i, (i + 1) % 4] = w[(i + 1) % 4, i] = 1.0
        g = GraphSpace(w, [True] * 4)
        gen = build_generator(g)
        cache = make_cache(gen, 0.01)
        k = build_covariance(g, "white")
        with pytest.raises(ValueError, match="diverges"):
            lambda_quadrature(cache, k, 5.0, 1e-3)

    def test_monotone_in_kernel(self, path5, gen_path5):
        cache = make_cache(gen_path5, 0.01)
        small = build_covariance(path5, "explicit", matrix=0.5 * np.eye(3))
        big = build_covariance(path5, "distance_decay", alpha=2.0, c=1.0)
        v_small = lambda_quadrature(cache, small).value
        v_big = lambda_quadrature(cache, big).value
        assert v_small < v_big

    def test_dt_must_divide(self, gen_path3, path3):
        cache = make_cache(gen_path3, 0.01)
        k = build_covariance(path3, "white")
        with pytest.raises(ValueError, match="divide"):
            lambda_quadrature(cache, k, 1.0, 0.3)


class TestMarginAndBounds:
    def test_margin_beta_zero(self):
        assert weak_disorder_margin(0.0, 1.0, 10.0) == 1.0

    def test_margin_half(self):
        assert weak_disorder_margin(1.0, 1.0, 0.5) == 0.5
        assert weak_disorder_margin(np.sqrt(0.5), 1.0, 1.0) == pytest.approx(0.5)

    def test_neumann_geometric_sum(self):
        assert neumann_second_moment_bound(1.0, 0.0, 1.0, 0.5) == 1.0
        assert neumann_second_moment_bound(1.0, 1.0, 1.0, 0.5) == pytest.approx(2.0)
        assert neumann_second_moment_bound(3.0, 0.0, 1.0, 0.5) == 3.0

    def test_neumann_outside_weak_disorder(self):
        with pytest.raises(WeakDisorderError, match="outside weak disorder"):
            neumann_second_moment_bound(1.0, 2.0, 1.0, 0.5)

    def test_bound_pair_reports_both_and_tests_larger(self):
        pair = second_moment_bound_pair(2.0, 1.0, 1.0, 0.25)
        assert pair["bound_linear_u0"] == pytest.approx(2.0 / 0.75)
        assert pair["bound_squared_u0"] == pytest.approx(4.0 / 0.75)
        assert pair["bound"] == pair["bound_squared_u0"]
        small = second_moment_bound_pair(0.5, 1.0, 1.0, 0.25)
        assert small["bound"] == small["bound_linear_u0"]
