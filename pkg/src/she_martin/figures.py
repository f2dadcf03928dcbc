"""Matplotlib renderings of the experiment tables, written next to the CSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def heat_figure(kernel_matrix, interior_ids, t, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(kernel_matrix, cmap="viridis")
    ax.set_xticks(range(len(interior_ids)))
    ax.set_yticks(range(len(interior_ids)))
    if len(interior_ids) <= 24:
        ax.set_xticklabels(interior_ids, fontsize=6, rotation=90)
        ax.set_yticklabels(interior_ids, fontsize=6)
    ax.set_title(f"heat kernel at t = {t:g}")
    fig.colorbar(im, ax=ax)
    return _save(fig, path)


def harmonic_figure(g, values, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    depth = g.distance_matrix()[:, g.boundary].min(axis=1)
    colors = np.where(g.interior_mask, "tab:blue", "tab:red")
    ax.scatter(range(g.n_vertices), values, c=colors, s=18)
    for x, (v, d) in enumerate(zip(values, depth)):
        ax.annotate(f"{int(d)}", (x, v), fontsize=5, alpha=0.5)
    ax.set_xlabel("vertex")
    ax.set_ylabel("value")
    ax.set_title("harmonic extension (red = boundary, labels = depth)")
    return _save(fig, path)


def martin_figure(kernel, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(kernel.matrix, cmap="magma", aspect="auto")
    ax.set_xlabel("boundary vertex index")
    ax.set_ylabel("interior vertex index")
    ax.set_title(f"Martin kernel, base point {kernel.base_point}")
    fig.colorbar(im, ax=ax)
    return _save(fig, path)


def lambda_figure(times, sup_curve, value, tail, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(times, np.maximum(sup_curve, 1e-300), lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("sup of smoothed |R| integrand")
    ax.set_title(f"disorder integrand; integral = {value:.6g} (tail <= {tail:.1e})")
    return _save(fig, path)


def simulate_figure(times, m2, m2_se, bound, observe, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for j, v in enumerate(observe):
        ax.errorbar(times, m2[:, j], yerr=3 * m2_se[:, j], lw=0.9,
                    elinewidth=0.5, label=f"x={v}" if len(observe) <= 8 else None)
    if bound is not None:
        ax.axhline(bound, color="k", ls="--", lw=1, label="geometric bound")
    ax.set_xlabel("t")
    ax.set_ylabel("second moment")
    if len(observe) <= 8:
        ax.legend(fontsize=7)
    ax.set_title("Monte Carlo second moments (3 SE bars)")
    return _save(fig, path)


def pullback_figure(report, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    x = np.array([p[0] for p in report.pairs])
    ax.errorbar(x, report.a_values, yerr=3 * report.a_ses, fmt="o", ms=4)
    ax.set_yscale("log")
    kk = np.linspace(x.min(), x.max(), 50)
    anchor = report.a_values[0] * np.exp(report.fitted_rate * x[0])
    ax.plot(kk, anchor * np.exp(-report.fitted_rate * kk), "-", lw=1,
            label=f"fit rate {report.fitted_rate:.3f}")
    ax.plot(kk, anchor * np.exp(-report.target_rate * kk), "--", lw=1,
            label=f"2 gap = {report.target_rate:.3f}")
    ax.set_xlabel("K")
    ax.set_ylabel("A(K, 2K)")
    ax.legend(fontsize=8)
    ax.set_title("coupled pullback differences")
    return _save(fig, path)


def attract_figure(report, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(report.times, np.maximum(report.m_values, 1e-300), "o-", ms=3,
                lw=1, label="M(t)")
    ax.semilogy(report.times, np.maximum(report.a_values, 1e-300), "s-", ms=3,
                lw=1, label="a(t)")
    ax.semilogy(report.times, np.maximum(report.bound, 1e-300), "k--", lw=1,
                label="sup a / margin")
    ax.set_xlabel("t")
    ax.set_ylabel("mean squared difference")
    ax.legend(fontsize=8)
    ax.set_title("attraction to the invariant state")
    return _save(fig, path)


def fluct_figure(report, path):
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    b = report.betas
    axes[0].loglog(b, report.pathwise, "o-", label="pathwise error")
    ref = report.pathwise[0] * (b / b[0]) ** 2
    axes[0].loglog(b, ref, "k--", lw=1, label="slope 2")
    axes[0].set_xlabel("beta")
    axes[0].set_ylabel("E[(dZ/beta - G)^2]")
    axes[0].legend(fontsize=7)
    axes[0].set_title(f"fitted slope {report.slope:.2f}")
    axes[1].loglog(b, report.m_beta, "o-", label="M_beta")
    axes[1].loglog(b, report.m_beta_bound, "k--", lw=1, label="bound")
    axes[1].set_xlabel("beta")
    axes[1].legend(fontsize=7)
    axes[1].set_title("fluctuation size")
    return _save(fig, path)


def equivariance_figure(report, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(np.arange(len(report.per_step)),
                np.maximum(report.per_step, 1e-18), lw=0.9)
    ax.axhline(1e-12, color="k", ls="--", lw=1, label="tolerance")
    ax.set_xlabel("step")
    ax.set_ylabel("max pathwise discrepancy")
    ax.legend(fontsize=8)
    ax.set_title("pathwise symmetry defect")
    return _save(fig, path)
