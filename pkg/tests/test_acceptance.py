"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Monte Carlo criteria run at fixed seeds (reproducible by construction);
statistical tolerances are 3 SE as stated, closed-form targets carry their
stated absolute tolerances.
"""

import json
import time

import numpy as np
import pytest

from she_martin.cli import main
from she_martin.config import _subtree_boundary
from she_martin.geometry import build_path, build_regular_tree, tree_automorphism
from she_martin.heat import build_generator, green_function
from she_martin.invariant import (attraction_run, cauchy_diagnostic,
                                  equivariance_check, equivariance_stats_check,
                                  estimate_invariant_field, fluctuation_run,
                                  gh_covariance_quadrature, pullback_run)
from she_martin.noise import (SeedRecord, build_covariance, ito_walsh_quadrature,
                              sample_increments, stochastic_sum)
from she_martin.potential import (martin_kernel, martin_representation,
                                  solve_dirichlet)
from she_martin.solver import (covariance_recursion_linear, make_sim_config,
                               second_moment_mc)

TREE_LAMBDA = 0.875  # 1 - 2^-3, verified against the Green matrix below


def record(criterion, ok, detail):
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def tree():
    g = build_regular_tree(2, 3)
    return g, build_generator(g)


@pytest.fixture(scope="module")
def tree_sim_rho_half(tree):
    g, gen = tree
    gap = gen.spectral_gap
    beta = np.sqrt(0.5 / TREE_LAMBDA)
    return make_sim_config(g, beta=beta, dt=0.01, horizon=5.0 / gap,
                           boundary_data=np.ones(12), replicas=10_000,
                           seed=1, gen=gen)


@pytest.fixture(scope="module")
def tree_moments(tree_sim_rho_half):
    return second_moment_mc(tree_sim_rho_half, bound=2.0)


def write_config(tmp_path, text, name="c.toml"):
    f = tmp_path / name
    f.write_text(text)
    return str(f)


class TestCriterion1Lambda:
    def test_lambda_values_and_agreement(self, tmp_path, capsys):
        configs = {
            "path3": ("graph.kind = path\ngraph.n = 3\n", 0.5),
            "path5": ("graph.kind = path\ngraph.n = 5\n", 1.0),
            "tree24": ("graph.kind = regular_tree\ngraph.q = 2\n"
                       "graph.radius = 4\n", None),
        }
        common = "dynamics.beta = 0.1\noutput.figures = false\n"
        for name, (text, expected) in configs.items():
            cfg = write_config(tmp_path, text + common, f"{name}.toml")
            t0 = time.monotonic()
            code = main(["lambda", "--config", cfg,
                         "--out-dir", str(tmp_path / name)])
            elapsed = time.monotonic() - t0
            out = capsys.readouterr().out
            payload = json.loads(
                next(l for l in out.splitlines() if l.startswith("{")))
            assert code == 0
            if expected is not None:
                record("1", abs(payload["lambda"] - expected) <= 1e-6,
                       f"{name} lambda = {payload['lambda']:.8f} "
                       f"(target {expected}, runtime {elapsed:.2f}s)")
            else:
                gap_ok = abs(payload["quadrature"] - payload["lambda"]) \
                    <= payload["tail_bound"] + 1e-6
                record("1", gap_ok,
                       f"{name} quadrature {payload['quadrature']:.8f} vs "
                       f"exact {payload['lambda']:.8f} within tail+1e-6 "
                       f"(runtime {elapsed:.2f}s)")
            assert elapsed < 1.0


class TestCriterion2WeakDisorderBound:
    def test_sup_second_moment_bounded(self, tree_sim_rho_half, tree_moments):
        t0 = time.monotonic()
        res = tree_moments
        bound = 1.0 / (1.0 - 0.5)  # u0_sup^2 / (1 - rho) with u0 = 1
        ok = res.sup_m2 <= bound + 3 * res.sup_m2_se
        record("2", ok,
               f"sup E[u^2] = {res.sup_m2:.4f} <= {bound} + 3*{res.sup_m2_se:.4f}"
               f" (rho = 0.5, q=2 r=3 tree, 10^4 replicas)")
        assert time.monotonic() - t0 < 120


class TestCriterion3LinearOracle:
    def test_mc_matches_recursion(self, tree_sim_rho_half, tree_moments):
        orc = covariance_recursion_linear(tree_sim_rho_half)
        m2_orc = np.stack([np.diag(s) for s in orc.second_moment])
        res = tree_moments
        z_mean = np.abs(res.mean - orc.mean) / np.where(
            res.mean_se > 0, res.mean_se, np.inf)
        z_m2 = np.abs(res.m2 - m2_orc) / np.where(res.m2_se > 0, res.m2_se, np.inf)
        zmax = float(max(z_mean.max(), z_m2.max()))
        record("3", zmax <= 3.0,
               f"max |MC - recursion| z-score = {zmax:.3f} over all retained (t, x)")


class TestCriterion4Pullback:
    def _ladder_check(self, g, gen, beta, dt, label):
        gap = gen.spectral_gap
        bd = np.ones(len(g.boundary))
        h = solve_dirichlet(g, bd, gen=gen)
        sim = make_sim_config(g, beta=beta, dt=dt, horizon=1.0, boundary_data=bd,
                              replicas=10_000, seed=1, gen=gen)
        run = pullback_run(h, [k / gap for k in (2, 4, 8, 16)], sim)
        rep = cauchy_diagnostic(run)
        decreasing = bool(np.all(np.diff(rep.a_values) < 0))
        rate_ok = abs(rep.fitted_rate - rep.target_rate) <= 0.2 * rep.target_rate
        record("4", decreasing and rate_ok,
               f"{label}: A(K,2K) decreasing = {decreasing}, fitted rate "
               f"{rep.fitted_rate:.4f} vs 2 gap = {rep.target_rate:.4f}")

    def _mean_checks(self, g, gen, beta, dt, data_sets, label):
        gap = gen.spectral_gap
        worst = 0.0
        for i, (name, bd) in enumerate(data_sets.items()):
            h = solve_dirichlet(g, bd, gen=gen)
            sim = make_sim_config(g, beta=beta, dt=dt, horizon=1.0,
                                  boundary_data=bd, replicas=10_000, seed=1,
                                  stream=(i + 1) << 20, gen=gen)
            run = pullback_run(h, [8.0 / gap], sim)
            s = run.samples[0]
            mean = s.mean(axis=0)
            se = s.std(axis=0, ddof=1) / np.sqrt(s.shape[0])
            z = np.abs(mean - h.values[gen.interior]) / np.where(se > 0, se, np.inf)
            worst = max(worst, float(z.max()))
        record("4", worst <= 3.0,
               f"{label}: |E[Z^h] - h| <= 3 SE vertexwise over "
               f"{list(data_sets)} (max z = {worst:.3f})")

    def test_pullback_both_graphs(self, tree):
        t0 = time.monotonic()
        g3 = build_path(3)
        gen3 = build_generator(g3)
        self._ladder_check(g3, gen3, beta=np.sqrt(0.2), dt=0.01, label="path3")
        self._mean_checks(
            g3, gen3, beta=np.sqrt(0.2), dt=0.01,
            data_sets={"constant": np.ones(2), "indicator": np.array([0.0, 1.0]),
                       "ramp": np.array([0.0, 1.0])},
            label="path3")

        g, gen = tree
        beta = np.sqrt(0.1 / TREE_LAMBDA)
        arc = _subtree_boundary(g, 0)
        nb = len(g.boundary)
        self._ladder_check(g, gen, beta=beta, dt=0.02, label="tree")
        self._mean_checks(
            g, gen, beta=beta, dt=0.02,
            data_sets={"constant": np.ones(nb),
                       "indicator": np.isin(g.boundary, arc).astype(float),
                       "ramp": np.arange(nb) / (nb - 1)},
            label="tree")
        assert time.monotonic() - t0 < 300


class TestCriterion5StationaryMoment:
    def test_scalar_fixed_point(self):
        g = build_path(3)
        bd = np.ones(2)
        h = solve_dirichlet(g, bd)
        sim = make_sim_config(g, beta=1.0, dt=0.01, horizon=1.0,
                              boundary_data=bd, replicas=10_000, seed=1)
        rep = estimate_invariant_field(h, sim, k_max=16.0)
        z = abs(rep.m2[0] - 2.0) / rep.m2_se[0]
        record("5", z <= 3.0,
               f"E[(Z^h)^2] = {rep.m2[0]:.4f} vs 2.0 (z = {z:.3f}, "
               f"beta = 1, margin 0.5)")


class TestCriterion6Attraction:
    def test_path3(self):
        g = build_path(3)
        bd = np.ones(2)
        u0 = solve_dirichlet(g, bd).values.copy()
        u0[g.interior] += 1.0
        sim = make_sim_config(g, beta=1.0, dt=0.01, horizon=1.0,
                              boundary_data=bd, u0=u0, replicas=10_000, seed=1,
                              stream=51 << 20)
        rep = attraction_run(sim)
        a_exact = np.abs(rep.a_values - np.exp(-2.0 * rep.times)).max()
        ok = all(v.passed for v in rep.verdicts) and a_exact <= 1e-12
        record("6", ok,
               f"path3: a(t) = e^-2t exactly (defect {a_exact:.1e}), "
               f"M within bound, M(5/gap)/M(0) = {rep.m_values[-1]:.4f}")

    def test_tree(self, tree):
        g, gen = tree
        bd = np.ones(12)
        u0 = solve_dirichlet(g, bd, gen=gen).values.copy()
        u0[g.interior] += 1.0
        sim = make_sim_config(g, beta=np.sqrt(0.5 / TREE_LAMBDA), dt=0.02,
                              horizon=1.0, boundary_data=bd, u0=u0,
                              replicas=10_000, seed=1, stream=52 << 20, gen=gen)
        rep = attraction_run(sim)
        ok = all(v.passed for v in rep.verdicts)
        record("6", ok,
               f"tree: M(t) <= sup a/(1-rho) + 3 SE at all t, final ratio "
               f"{rep.m_values[-1] / rep.a_values[0]:.4f} <= 0.05")


class TestCriterion7Fluctuations:
    def _run(self, g, gen, replicas, dt, label, check_gvar):
        bd = np.ones(len(g.boundary))
        h = solve_dirichlet(g, bd, gen=gen)
        sim = make_sim_config(g, beta=0.4, dt=dt, horizon=1.0, boundary_data=bd,
                              replicas=replicas, seed=1, stream=61 << 20, gen=gen)
        rep = fluctuation_run(h, [0.4, 0.2, 0.1], sim)
        checks = {v.check_name: v.passed for v in rep.verdicts}
        path_ok = all(ok for name, ok in checks.items()
                      if name.startswith("pathwise_gaussian_error"))
        mbeta_ok = all(ok for name, ok in checks.items()
                       if name.startswith("m_beta_bound"))
        record("7", path_ok,
               f"{label} (a): E[(dZ/beta - G_h)^2] <= Lf^2 Lambda M_beta + 3 SE "
               f"for beta in {list(rep.betas)}")
        record("7", mbeta_ok, f"{label} (b): M_beta <= rho ||h||^2/(1-rho) + 3 SE")
        record("7", rep.slope >= 1.5,
               f"{label} (c): log-log slope = {rep.slope:.3f} >= 1.5")
        if check_gvar:
            z = abs(rep.g_variance[0] - 0.5) / rep.g_variance_se[0]
            quad_ok = checks["g_variance_matches_quadrature"]
            record("7", z <= 3.0 and quad_ok,
                   f"{label} (d): Var(G_h) = {rep.g_variance[0]:.4f} vs 0.5 "
                   f"(z = {z:.3f}) and matches quadrature "
                   f"{rep.g_quadrature[0]:.4f}")

    def test_both_graphs(self, tree):
        g3 = build_path(3)
        self._run(g3, build_generator(g3), replicas=10_000, dt=0.01,
                  label="path3", check_gvar=True)
        g, gen = tree
        self._run(g, gen, replicas=4_000, dt=0.02, label="tree", check_gvar=False)


class TestCriterion8Martin:
    def test_kernel_and_representation(self, tree):
        g5 = build_path(5)
        gen5 = build_generator(g5)
        kern5 = martin_kernel(green_function(gen5), g5)
        defect = abs(kern5.matrix[0, 0] - 1.5)
        record("8", defect <= 1e-10,
               f"path5 K(x1, left) = {kern5.matrix[0, 0]:.12f} (|err| {defect:.1e})")

        g, gen = tree
        kern = martin_kernel(green_function(gen), g)
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(100):
            data = rng.uniform(0.0, 5.0, size=12)
            h = solve_dirichlet(g, data, gen=gen)
            nu = martin_representation(h, kern)
            recon = kern.matrix @ nu.weights
            worst = max(worst, float(np.abs(recon - h.interior_values).max()))
        record("8", worst <= 1e-8,
               f"representation roundtrip max error {worst:.2e} over 100 draws")

        xi = 5
        data = np.zeros(12)
        data[xi] = 1.0 / kern.base_mass[xi]
        h = solve_dirichlet(g, data, gen=gen)
        nu = martin_representation(h, kern)
        expected = np.zeros(12)
        expected[xi] = 1.0
        mass_defect = float(np.abs(nu.weights - expected).max())
        record("8", mass_defect <= 1e-9,
               f"nu for h = K(., xi0) is a unit point mass (defect {mass_defect:.1e})")


class TestCriterion9Equivariance:
    def test_pathwise_and_statistics(self):
        g = build_regular_tree(2, 2)
        gen = build_generator(g)
        bd = np.ones(6)
        a = tree_automorphism(g, (0, 1))
        sim = make_sim_config(g, beta=0.4, dt=0.01, horizon=10.0,
                              boundary_data=bd, replicas=4_000, seed=1,
                              stream=71 << 20, gen=gen)
        rep = equivariance_check(sim, a, replicas=3)
        record("9", rep.discrepancy <= 1e-12,
               f"pathwise discrepancy {rep.discrepancy:.2e} over 10^3 steps")
        stats = equivariance_stats_check(sim, a)
        ok = all(v.passed for v in stats)
        zmax = max(v.statistic for v in stats)
        record("9", ok, f"swapped-subtree moment comparison max z = {zmax:.3f}")


class TestCriterion10Isometry:
    def test_variance_matches_quadrature(self):
        g = build_path(5)
        kernel = build_covariance(g, "distance_decay", alpha=2.0, c=1.0)
        rng = np.random.default_rng(11)
        field = rng.uniform(-1.0, 1.0, size=(30, kernel.n))
        target = ito_walsh_quadrature(field, field, kernel, 0.1)
        sums = np.array([
            stochastic_sum(field, sample_increments(kernel, 0.1, 30,
                                                    SeedRecord(77, r)))
            for r in range(10_000)])
        var = sums.var(ddof=1)
        se = var * np.sqrt(2.0 / (len(sums) - 1))
        ok = abs(var - target) <= 3 * se
        record("10", ok,
               f"MC variance {var:.5f} vs quadrature {target:.5f} "
               f"(3 SE = {3 * se:.5f})")


class TestCriterion11Determinism:
    def test_manifest_replay_bit_identical(self, tmp_path):
        text = ("graph.kind = path\ngraph.n = 3\ndynamics.beta = 1.0\n"
                "mc.replicas = 2000\nmc.seed = 1\noutput.figures = false\n")
        cfg = write_config(tmp_path, text)
        out_a, out_b, out_c = (tmp_path / x for x in "abc")
        assert main(["simulate", "--config", cfg, "--out-dir", str(out_a),
                     "--workers", "1"]) == 0
        assert main(["simulate", "--config", str(out_a / "manifest.json"),
                     "--out-dir", str(out_b), "--workers", "4"]) == 0
        assert main(["simulate", "--config", str(out_a / "manifest.json"),
                     "--out-dir", str(out_c), "--workers", "2"]) == 0
        a = (out_a / "simulate.csv").read_bytes()
        ok = a == (out_b / "simulate.csv").read_bytes() \
            and a == (out_c / "simulate.csv").read_bytes()
        record("11", ok,
               "manifest replay reproduces simulate.csv bit-identically "
               "across worker counts 1, 4, 2")
