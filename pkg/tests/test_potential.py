import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fundamental_matrix, jump_chain
from she_martin.geometry import tree_automorphism
from she_martin.heat import green_function
from she_martin.potential import (harmonic_measure, harmonic_residual,
                                  martin_kernel, martin_representation,
                                  pushforward_harmonic, pushforward_measure,
                                  solve_dirichlet)


class TestDirichlet:
    def test_path5_gamblers_ruin(self, path5):
        h = solve_dirichlet(path5, [0.0, 1.0])
        assert np.abs(h.values - np.array([0, 0.25, 0.5, 0.75, 1.0])).max() <= 1e-12

    def test_constant_data(self, tree23):
        h = solve_dirichlet(tree23, np.full(12, 3.5))
        assert np.abs(h.values - 3.5).max() <= 1e-12

    def test_indicator_interior_values_in_unit_interval(self, tree22):
        data = np.zeros(6)
        data[0] = 1.0
        h = solve_dirichlet(tree22, data)
        inner = h.values[tree22.interior]
        assert np.all(inner > 0) and np.all(inner < 1)

    @given(st.lists(st.floats(0.0, 10.0), min_size=12, max_size=12))
    @settings(max_examples=25, deadline=None)
    def test_maximum_principle_and_residual(self, tree23, data):
        h = solve_dirichlet(tree23, np.array(data))
        assert h.residual <= 1e-10
        assert h.values.min() >= min(data) - 1e-10
        assert h.values.max() <= max(data) + 1e-10

    def test_boundary_agreement(self, tree23):
        data = np.linspace(0, 1, 12)
        h = solve_dirichlet(tree23, data)
        assert np.array_equal(h.values[tree23.boundary], data)

    def test_bad_data_shape(self, path5):
        with pytest.raises(ValueError, match="length"):
            solve_dirichlet(path5, [1.0])


class TestHarmonicMeasure:
    def test_full_boundary_is_one(self, tree23):
        h = harmonic_measure(tree23, tree23.boundary)
        assert np.abs(h.values - 1.0).max() <= 1e-12

    def test_path5_right_endpoint(self, path5):
        h = harmonic_measure(path5, [4])
        for k in range(5):
            assert h.values[k] == pytest.approx(k / 4.0, abs=1e-12)

    def test_tree_root_subtree_is_one_third(self, tree23):
        # boundary of one root subtree: certain absorption + 3-fold symmetry
        subtree_leaves = [v for v in tree23.boundary
                          if tree23.distance(1, int(v)) == 2]
        h = harmonic_measure(tree23, subtree_leaves)
        assert h.values[0] == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_empty_arc_warns(self, path5):
        with pytest.warns(UserWarning, match="empty arc"):
            h = harmonic_measure(path5, [])
        assert np.array_equal(h.values, np.zeros(5))

    def test_non_boundary_vertex_rejected(self, path5):
        with pytest.raises(ValueError, match="not a boundary vertex"):
            harmonic_measure(path5, [2])


class TestMartinKernel:
    def test_normalised_at_base_point(self, tree23, gen_tree23):
        kern = martin_kernel(green_function(gen_tree23), tree23)
        o_row = int(np.flatnonzero(gen_tree23.interior == kern.base_point)[0])
        assert np.abs(kern.matrix[o_row] - 1.0).max() <= 1e-12

    def test_path3_kernel_is_one(self, path3, gen_path3):
        kern = martin_kernel(green_function(gen_path3), path3)
        assert np.abs(kern.matrix - 1.0).max() <= 1e-12

    def test_path5_green_ratio(self, path5, gen_path5):
        # oracle: last-interior-vertex Green ratio from the fundamental matrix
        oracle = fundamental_matrix(path5)
        expected = oracle[0, 0] / oracle[1, 0]   # G(x1,x1)/G(o,x1), o = center
        kern = martin_kernel(green_function(gen_path5), path5)
        assert expected == pytest.approx(1.5, abs=1e-12)
        assert kern.matrix[0, 0] == pytest.approx(1.5, abs=1e-10)

    def test_positive_entries(self, tree23, gen_tree23):
        kern = martin_kernel(green_function(gen_tree23), tree23)
        assert kern.matrix.min() > 0

    def test_no_inflow_weighting_on_trees(self, tree23, gen_tree23):
        kern = martin_kernel(green_function(gen_tree23), tree23)
        assert not kern.inflow_weighted.any()


class TestRepresentation:
    def test_kernel_column_gives_point_mass(self, tree23, gen_tree23):
        kern = martin_kernel(green_function(gen_tree23), tree23)
        xi = 3  # column index into the boundary list
        data = np.zeros(len(tree23.boundary))
        data[xi] = 1.0 / kern.base_mass[xi]
        h = solve_dirichlet(tree23, data, gen=gen_tree23)
        assert np.abs(h.interior_values - kern.matrix[:, xi]).max() <= 1e-10
        nu = martin_representation(h, kern)
        expected = np.zeros(len(tree23.boundary))
        expected[xi] = 1.0
        assert np.abs(nu.weights - expected).max() <= 1e-9

    def test_constant_one_gives_harmonic_measure(self, tree23, gen_tree23):
        kern = martin_kernel(green_function(gen_tree23), tree23)
        h = solve_dirichlet(tree23, np.ones(12), gen=gen_tree23)
        nu = martin_representation(h, kern)
        assert np.abs(nu.weights - kern.base_mass).max() <= 1e-12
        assert nu.total_mass == pytest.approx(1.0, abs=1e-10)

    def test_path5_ramp_supported_on_right(self, path5, gen_path5):
        h = solve_dirichlet(path5, [0.0, 1.0], gen=gen_path5)
        kern = martin_kernel(green_function(gen_path5), path5)
        nu = martin_representation(h, kern)
        assert nu.weights[0] == 0.0
        assert nu.weights[1] > 0
        recon = kern.matrix @ nu.weights
        assert np.abs(recon - h.interior_values).max() <= 1e-12

    def test_roundtrip_100_random_draws(self, tree23, gen_tree23):
        kern = martin_kernel(green_function(gen_tree23), tree23)
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(100):
            data = rng.uniform(0.0, 5.0, size=12)
            h = solve_dirichlet(tree23, data, gen=gen_tree23)
            nu = martin_representation(h, kern)
            recon = kern.matrix @ nu.weights
            worst = max(worst, float(np.abs(recon - h.interior_values).max()))
        assert worst <= 1e-8

    def test_negative_data_rejected(self, tree23, gen_tree23):
        kern = martin_kernel(green_function(gen_tree23), tree23)
        data = np.zeros(12)
        data[0] = -1.0
        h = solve_dirichlet(tree23, data, gen=gen_tree23)
        with pytest.raises(ValueError, match="positive cone"):
            martin_representation(h, kern)


class TestPushforward:
    def test_identity(self, tree22):
        a = tree_automorphism(tree22, (1, 1))
        h = solve_dirichlet(tree22, np.linspace(0, 1, 6))
        moved = pushforward_harmonic(h, a)
        assert np.array_equal(moved.values, h.values)

    def test_constant_invariant(self, tree22):
        a = tree_automorphism(tree22, (0, 1))
        h = solve_dirichlet(tree22, np.ones(6))
        moved = pushforward_harmonic(h, a)
        assert np.abs(moved.values - h.values).max() <= 1e-14

    def test_subtree_measure_swap(self, tree22, gen_tree23):
        # pushing the harmonic measure of subtree 0 gives that of subtree 1
        a = tree_automorphism(tree22, (0, 1))
        top = sorted(tree22.neighbors(0))
        arcs = []
        for child in top[:2]:
            arcs.append([v for v in tree22.boundary
                         if tree22.distance(int(child), int(v)) == 1])
        h0 = harmonic_measure(tree22, arcs[0])
        h1 = harmonic_measure(tree22, arcs[1])
        moved = pushforward_harmonic(h0, a)
        assert np.abs(moved.values - h1.values).max() <= 1e-12

    def test_measure_equivariance(self, tree22):
        from she_martin.heat import build_generator
        gen = build_generator(tree22)
        kern = martin_kernel(green_function(gen), tree22)
        a = tree_automorphism(tree22, (0, 1))
        data = np.array([1.0, 2.0, 0.5, 0.25, 3.0, 1.5])
        h = solve_dirichlet(tree22, data, gen=gen)
        nu = martin_representation(h, kern)
        nu_moved = martin_representation(pushforward_harmonic(h, a), kern)
        assert np.abs(pushforward_measure(nu, a).weights - nu_moved.weights).max() \
            <= 1e-12


class TestResidualOracle:
    def test_residual_is_full_graph_mean_value_defect(self, tree23):
        rng = np.random.default_rng(7)
        values = rng.normal(size=tree23.n_vertices)
        q = jump_chain(tree23)
        expected = np.abs((q @ values - values)[tree23.interior]).max()
        assert harmonic_residual(tree23, values) == pytest.approx(expected, rel=1e-12)
