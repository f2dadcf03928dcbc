"""Command-line driver: experiments in, reproducible artifacts out.

Every subcommand writes, under the output directory, a delimited table
(``<sub>.csv``), a verdict block (``<sub>.verdict.json``), a rendered
figure (``<sub>.png``), and a ``manifest.json`` whose config snapshot can
be fed back through ``--config`` to reproduce all CSV outputs
bit-identically.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 configuration
error (including a nonpositive weak-disorder margin), 3 numerical abort.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, figures
from .config import (apply_overrides, boundary_data_from_config, build_graph,
                     default_config, float_list, initial_from_config,
                     load_config, observe_from_config)
from .disorder import (lambda_exact_white, lambda_quadrature,
                       second_moment_bound_pair, weak_disorder_margin)
from .errors import (AccuracyError, CapacityError, ConfigError, StabilityError,
                     WeakDisorderError)
from .geometry import tree_automorphism
from .heat import build_generator, green_function, make_cache
from .invariant import (attraction_run, cauchy_diagnostic, equivariance_check,
                        equivariance_stats_check, fluctuation_run,
                        pullback_run)
from .noise import build_covariance
from .potential import martin_kernel, martin_representation, solve_dirichlet
from .solver import (covariance_recursion_linear, make_sim_config,
                     second_moment_mc)
from .stats import MomentAccumulator, Verdict, write_csv, write_json

SUBCOMMANDS = ("lambda", "heat", "harmonic", "martin", "simulate", "pullback",
               "attract", "fluct", "equivariance", "all")


class Workspace:
    """Resolved config plus the shared immutable build products."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.graph = build_graph(cfg)
        self.gen = build_generator(self.graph)
        self.gap = self.gen.spectral_gap
        self.boundary_data = boundary_data_from_config(self.graph, cfg)
        if cfg["dynamics.mode"] == "bulk":
            self.boundary_data = np.zeros(len(self.graph.boundary))
        self.h_star = solve_dirichlet(self.graph, self.boundary_data, gen=self.gen)
        self.observe = observe_from_config(self.graph, cfg)

    def horizon(self, value=None, units=None) -> float:
        value = self.cfg["dynamics.horizon"] if value is None else value
        units = self.cfg["dynamics.horizon_units"] if units is None else units
        return value / self.gap if units == "gap" else value

    def sim(self, *, beta=None, horizon=None, u0=None, retain=None):
        cfg = self.cfg
        return make_sim_config(
            self.graph,
            beta=cfg["dynamics.beta"] if beta is None else beta,
            nonlinearity=cfg["dynamics.nonlinearity"],
            nonlinearity_param=cfg["dynamics.param"],
            dt=cfg["dynamics.dt"],
            horizon=self.horizon() if horizon is None else horizon,
            boundary_data=self.boundary_data,
            u0=u0,
            observe=self.observe,
            noise_kind=cfg["noise.kind"],
            noise_alpha=cfg["noise.alpha"],
            noise_c=cfg["noise.c"],
            noise_matrix=self._noise_matrix(),
            replicas=cfg["mc.replicas"],
            seed=cfg["mc.seed"],
            stream=cfg["mc.stream"],
            retain=cfg["mc.retain"] if retain is None else retain,
            chunk=cfg["mc.chunk"],
            workers=cfg["mc.workers"],
            override_margin=cfg["dynamics.override_margin"],
            mode=cfg["dynamics.mode"],
            gen=self.gen)

    def _noise_matrix(self):
        if self.cfg["noise.kind"] != "explicit":
            return None
        path = self.cfg["noise.matrix_file"]
        if not path:
            raise ConfigError("noise.kind = explicit needs noise.matrix_file")
        return np.loadtxt(path)

    def figure(self, callback):
        return callback if self.cfg["output.figures"] else None


def _emit(out_dir: Path | None, name: str, columns, rows, verdicts,
          figure_cb=None, extra_json=None):
    """Write the table, verdict block, and figure for one subcommand."""
    for v in verdicts:
        print(f"[{name}] {v.check_name}: statistic={v.statistic:.6g} "
              f"bound={v.bound:.6g} {'PASS' if v.passed else 'FAIL'}")
    if out_dir is None:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / f"{name}.csv", columns, rows)
    payload = {"verdicts": [v.as_dict() for v in verdicts]}
    if extra_json:
        payload.update(extra_json)
    write_json(out_dir / f"{name}.verdict.json", payload)
    if figure_cb is not None:
        figure_cb(out_dir / f"{name}.png")


# -- subcommand handlers -------------------------------------------------------


def cmd_lambda(ws: Workspace, args, out_dir) -> list[Verdict]:
    cfg = ws.cfg
    kernel = build_covariance(ws.graph, cfg["noise.kind"], alpha=cfg["noise.alpha"],
                              c=cfg["noise.c"], matrix=ws._noise_matrix())
    cache = make_cache(ws.gen, cfg["dynamics.dt"])
    horizon = None if cfg["lambda.horizon"] <= 0 else cfg["lambda.horizon"]
    q_dt = None if cfg["lambda.dt"] <= 0 else cfg["lambda.dt"]
    quad = lambda_quadrature(cache, kernel, horizon, q_dt)

    verdicts = []
    if cfg["noise.kind"] == "white":
        exact = lambda_exact_white(green_function(ws.gen))
        lam = exact.value
        agreement = abs(quad.value - exact.value)
        verdicts.append(Verdict(
            "quadrature_agrees_exact", agreement, quad.tail_bound + 1e-6,
            agreement <= quad.tail_bound + 1e-6))
        arg_sup = exact.arg_sup
    else:
        lam = quad.value
        arg_sup = quad.arg_sup

    f_lip = 1.0  # all built-in nonlinearities
    beta = cfg["dynamics.beta"]
    margin = weak_disorder_margin(beta, f_lip, lam)
    u0_sup = float(np.abs(ws.h_star.values).max())
    bounds = (second_moment_bound_pair(u0_sup, beta, f_lip, lam)
              if margin > 0 else None)
    verdicts.append(Verdict("margin_positive", margin, 0.0, margin > 0))

    payload = {"lambda": lam, "tail_bound": quad.tail_bound,
               "arg_sup": list(arg_sup), "margin": margin, "bound": bounds,
               "quadrature": quad.value}
    print(json.dumps(payload, sort_keys=True, default=float))

    ts = np.linspace(0, 12.0 / ws.gap, 200)
    r_abs = np.abs(kernel.matrix)
    sup_curve = np.array([float((ws.gen.exp_matrix(t) @ r_abs
                                 @ ws.gen.exp_matrix(t).T).max()) for t in ts])
    rows = [[t, s] for t, s in zip(ts, sup_curve)]
    _emit(out_dir, "lambda", ["t", "sup_integrand"], rows, verdicts,
          figure_cb=ws.figure(lambda p: figures.lambda_figure(
              ts, sup_curve, lam, quad.tail_bound, p)),
          extra_json=payload)
    return verdicts


def cmd_heat(ws: Workspace, args, out_dir) -> list[Verdict]:
    t = args.t
    gen = ws.gen
    mat = gen.exp_matrix(t)
    half = gen.exp_matrix(t / 2.0) if t > 0 else mat
    defect = float(np.abs(half @ half - mat).max()) if t > 0 else 0.0
    budget = 10 * np.finfo(float).eps * ws.graph.n_vertices
    verdicts = [Verdict("semigroup_defect", defect, budget, defect <= budget)]

    kernel_pt = mat / gen.mu[None, :]
    ids = [int(v) for v in gen.interior]
    rows = [[ids[i], ids[j], kernel_pt[i, j]]
            for i in range(len(ids)) for j in range(len(ids))]
    out_path = Path(args.out) if getattr(args, "out", None) else None
    if out_path is not None:
        write_csv(out_path, ["x", "y", "value"], rows)
    _emit(out_dir, "heat", ["x", "y", "value"], rows, verdicts,
          figure_cb=ws.figure(lambda p: figures.heat_figure(kernel_pt, ids, t, p)))
    return verdicts


def cmd_harmonic(ws: Workspace, args, out_dir) -> list[Verdict]:
    h = ws.h_star
    g = ws.graph
    lo, hi = float(h.boundary_data.min()), float(h.boundary_data.max())
    inside = bool(np.all((h.values >= lo - 1e-12) & (h.values <= hi + 1e-12)))
    verdicts = [
        Verdict("harmonic_residual", h.residual, 1e-10, h.residual <= 1e-10),
        Verdict("maximum_principle", float(h.values.max()), hi + 1e-12, inside),
    ]
    rows = [[int(v), h.values[v], bool(~g.interior_mask[v])]
            for v in range(g.n_vertices)]
    _emit(out_dir, "harmonic", ["vertex", "value", "is_boundary"], rows, verdicts,
          figure_cb=ws.figure(lambda p: figures.harmonic_figure(g, h.values, p)))
    return verdicts


def cmd_martin(ws: Workspace, args, out_dir) -> list[Verdict]:
    base = ws.cfg["graph.base_point"]
    green = green_function(ws.gen, None if base < 0 else base)
    kernel = martin_kernel(green, ws.graph)
    nu = martin_representation(ws.h_star, kernel)
    o_row = int(np.flatnonzero(ws.gen.interior == kernel.base_point)[0])
    base_defect = float(np.abs(kernel.matrix[o_row] - 1.0).max())
    recon = kernel.matrix @ nu.weights
    roundtrip = float(np.abs(recon - ws.h_star.interior_values).max())
    verdicts = [
        Verdict("base_point_normalisation", base_defect, 1e-12, base_defect <= 1e-12),
        Verdict("representation_roundtrip", roundtrip, 1e-8, roundtrip <= 1e-8),
        Verdict("measure_nonnegative", float(nu.weights.min()), 0.0,
                bool(nu.weights.min() >= 0.0)),
    ]
    ids = [int(v) for v in ws.gen.interior]
    bids = [int(v) for v in ws.graph.boundary]
    rows = [[ids[i], bids[j], kernel.matrix[i, j]]
            for i in range(len(ids)) for j in range(len(bids))]
    extra = {"nu": {str(b): float(x) for b, x in zip(bids, nu.weights)},
             "base_point": kernel.base_point,
             "inflow_weighted_boundary": [int(b) for b, f in
                                          zip(bids, kernel.inflow_weighted) if f]}
    _emit(out_dir, "martin", ["x", "xi", "value"], rows, verdicts,
          figure_cb=ws.figure(lambda p: figures.martin_figure(kernel, p)),
          extra_json=extra)
    return verdicts


def cmd_simulate(ws: Workspace, args, out_dir) -> list[Verdict]:
    cfg = ws.cfg
    u0 = initial_from_config(ws.graph, ws.h_star.values, ws.boundary_data, cfg)
    sim = ws.sim(u0=u0)
    u0_sup = float(np.abs(u0).max())
    bounds = second_moment_bound_pair(u0_sup, sim.beta, sim.f.lipschitz, sim.lam) \
        if sim.margin > 0 else None
    res = second_moment_mc(sim, bound=None if bounds is None else bounds["bound"])

    verdicts = list(res.verdicts)
    if sim.f.kind == "linear":
        oracle = covariance_recursion_linear(sim)
        m2_oracle = np.stack([np.diag(s) for s in oracle.second_moment])
        z_pool = []
        for est, se, ref in ((res.mean, res.mean_se, oracle.mean),
                             (res.m2, res.m2_se, m2_oracle)):
            diff = np.abs(est - ref)
            z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.inf)
            z = np.where((se == 0) & (diff <= 1e-12), 0.0, z)
            z_pool.append(z.max())
        zmax = float(max(z_pool))
        verdicts.append(Verdict("linear_oracle_equivalence", zmax, 3.0, zmax <= 3.0))

    interior = sim.gen.interior
    pos = {int(v): k for k, v in enumerate(interior)}
    rows = []
    for i, t in enumerate(res.times):
        for v in range(ws.graph.n_vertices):
            if ws.graph.interior_mask[v]:
                k = pos[v]
                rows.append([t, v, res.mean[i, k], res.mean_se[i, k],
                             res.m2[i, k], res.m2_se[i, k]])
            else:
                b = float(u0[v])
                rows.append([t, v, b, 0.0, b * b, 0.0])
    out_path = Path(args.out) if getattr(args, "out", None) else None
    if out_path is not None:
        write_csv(out_path, ["t", "vertex", "mean", "mean_se", "m2", "m2_se"], rows)
    obs = sim.observe_pos
    _emit(out_dir, "simulate", ["t", "vertex", "mean", "mean_se", "m2", "m2_se"],
          rows, verdicts,
          figure_cb=ws.figure(lambda p: figures.simulate_figure(
              res.times, res.m2[:, obs], res.m2_se[:, obs],
              None if bounds is None else bounds["bound"],
              [int(v) for v in sim.observe], p)),
          extra_json={"sup_m2": res.sup_m2, "sup_se": res.sup_m2_se,
                      "sup_vertex": res.sup_vertex, "sup_time": res.sup_time,
                      "bounds": bounds, "margin": sim.margin, "lambda": sim.lam})
    return verdicts


def _ladder(ws: Workspace) -> list[float]:
    cfg = ws.cfg
    ks = float_list(cfg["pullback.k_ladder"], "pullback.k_ladder")
    if cfg["pullback.k_units"] == "gap":
        ks = [k / ws.gap for k in ks]
    return ks


def cmd_pullback(ws: Workspace, args, out_dir) -> list[Verdict]:
    sim = ws.sim(horizon=1.0)  # horizon unused; depths below drive the windows
    ks = _ladder(ws)
    run = pullback_run(ws.h_star, ks, sim)
    rep = cauchy_diagnostic(run)

    interior = sim.gen.interior
    acc = MomentAccumulator(len(interior), shift=ws.h_star.values[interior])
    samples = run.samples[-1]
    for start in range(0, samples.shape[0], 1024):
        acc.add_block(start, samples[start:start + 1024])
    obs = sim.observe_pos
    z = np.abs(acc.mean() - ws.h_star.values[interior])[obs] \
        / np.maximum(acc.mean_se()[obs], 1e-300)
    verdicts = list(rep.verdicts)
    verdicts.append(Verdict("mean_equals_harmonic", float(z.max()), 3.0,
                            bool(z.max() <= 3.0)))
    tol = ws.cfg["pullback.tolerance"]
    verdicts.append(Verdict("cauchy_tail_below_tolerance", float(rep.a_values[-1]),
                            tol, bool(rep.a_values[-1] <= tol)))
    rows = [[lo, hi, a, se, v] for (lo, hi), a, se, v in
            zip(rep.pairs, rep.a_values, rep.a_ses, rep.a_vertices)]
    _emit(out_dir, "pullback", ["k_low", "k_high", "a", "a_se", "vertex"], rows,
          verdicts, figure_cb=ws.figure(lambda p: figures.pullback_figure(rep, p)),
          extra_json={"fitted_rate": rep.fitted_rate, "target_rate": rep.target_rate})
    return verdicts


def cmd_attract(ws: Workspace, args, out_dir) -> list[Verdict]:
    cfg = ws.cfg
    u0 = ws.h_star.values.copy()
    u0[ws.graph.interior] += cfg["dynamics.perturbation"]
    t_end = None if cfg["attract.t_end"] <= 0 else cfg["attract.t_end"]
    sim = ws.sim(u0=u0, horizon=1.0)
    rep = attraction_run(sim, u0=u0, t_end=t_end, fraction=cfg["attract.fraction"])
    rows = [[t, m, se, a, b] for t, m, se, a, b in
            zip(rep.times, rep.m_values, rep.m_ses, rep.a_values, rep.bound)]
    _emit(out_dir, "attract", ["t", "m", "m_se", "a", "bound"], rows, rep.verdicts,
          figure_cb=ws.figure(lambda p: figures.attract_figure(rep, p)))
    return rep.verdicts


def cmd_fluct(ws: Workspace, args, out_dir) -> list[Verdict]:
    cfg = ws.cfg
    betas = float_list(cfg["fluct.betas"], "fluct.betas")
    k_max = None if cfg["fluct.k_max"] <= 0 else cfg["fluct.k_max"]
    sim = ws.sim(beta=max(betas), horizon=1.0)
    rep = fluctuation_run(ws.h_star, betas, sim, k_max=k_max)
    rows = [[b, m, mse, pw, pwse, bd] for b, m, mse, pw, pwse, bd in
            zip(rep.betas, rep.m_beta, rep.m_beta_se, rep.pathwise,
                rep.pathwise_se, rep.m_beta_bound)]
    _emit(out_dir, "fluct",
          ["beta", "m_beta", "m_beta_se", "pathwise", "pathwise_se", "m_beta_bound"],
          rows, rep.verdicts,
          figure_cb=ws.figure(lambda p: figures.fluct_figure(rep, p)),
          extra_json={"slope": rep.slope,
                      "g_variance": list(rep.g_variance),
                      "g_quadrature": list(rep.g_quadrature),
                      "g_quadrature_tail": rep.g_quadrature_tail})
    return rep.verdicts


def cmd_equivariance(ws: Workspace, args, out_dir) -> list[Verdict]:
    cfg = ws.cfg
    if ws.graph.kind != "regular_tree":
        raise ConfigError("equivariance needs graph.kind = regular_tree "
                          "(subtree swaps are the built-in symmetry)")
    pair = tuple(int(x) for x in cfg["equivariance.swap"].split(","))
    if len(pair) != 2:
        raise ConfigError("equivariance.swap must be two child indices")
    a = tree_automorphism(ws.graph, pair)
    horizon = cfg["equivariance.steps"] * cfg["dynamics.dt"]
    sim = ws.sim(horizon=horizon)
    rep = equivariance_check(sim, a, replicas=cfg["equivariance.replicas"])
    verdicts = list(rep.verdicts)
    if cfg["dynamics.boundary"] in ("constant", "zero"):
        verdicts.extend(equivariance_stats_check(sim, a))
    rows = [[k, d] for k, d in enumerate(rep.per_step)]
    _emit(out_dir, "equivariance", ["step", "discrepancy"], rows, verdicts,
          figure_cb=ws.figure(lambda p: figures.equivariance_figure(rep, p)))
    return verdicts


HANDLERS = {
    "lambda": cmd_lambda, "heat": cmd_heat, "harmonic": cmd_harmonic,
    "martin": cmd_martin, "simulate": cmd_simulate, "pullback": cmd_pullback,
    "attract": cmd_attract, "fluct": cmd_fluct, "equivariance": cmd_equivariance,
}

ALL_ORDER = ("lambda", "heat", "harmonic", "martin", "simulate", "pullback",
             "attract", "fluct", "equivariance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="she-martin",
        description="stochastic heat equation lab on graphs with absorbing boundary")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value config file or a manifest")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key")
        p.add_argument("--out-dir", help="artifact directory (default output.dir)")
        p.add_argument("--seed", type=int, help="override mc.seed")
        p.add_argument("--workers", type=int, help="override mc.workers")
        if name == "heat":
            p.add_argument("--t", type=float, default=1.0, help="kernel time")
            p.add_argument("--out", help="extra CSV destination for the kernel")
        if name == "simulate":
            p.add_argument("--out", help="extra CSV destination for the moments")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    t0 = time.monotonic()
    try:
        cfg = load_config(args.config) if args.config else default_config()
        apply_overrides(cfg, args.set)
        if args.seed is not None:
            cfg["mc.seed"] = args.seed
        if args.workers is not None:
            cfg["mc.workers"] = args.workers
        out_dir = Path(args.out_dir) if args.out_dir else Path(cfg["output.dir"])
        if not cfg["output.figures"]:
            out_dir.mkdir(parents=True, exist_ok=True)

        ws = Workspace(cfg)
        names = ALL_ORDER if args.subcommand == "all" else (args.subcommand,)
        all_verdicts: dict[str, list[Verdict]] = {}
        for name in names:
            if name == "heat" and not hasattr(args, "t"):
                args.t = 1.0
            all_verdicts[name] = HANDLERS[name](ws, args, out_dir)

        finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
        manifest = {
            "subcommand": args.subcommand,
            "config": cfg,
            "master_seed": cfg["mc.seed"],
            "version": __version__,
            "started": started,
            "finished": finished,
            "wall_time_s": time.monotonic() - t0,
            "verdicts": {k: [v.as_dict() for v in vs]
                         for k, vs in all_verdicts.items()},
        }
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "manifest.json", manifest)
        ok = all(v.passed for vs in all_verdicts.values() for v in vs)
        return 0 if ok else 1
    except (ConfigError, CapacityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except WeakDisorderError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StabilityError, AccuracyError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
