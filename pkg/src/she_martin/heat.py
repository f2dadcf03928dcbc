"""Killed generator, heat semigroup, and Green function of a graph walk.

The generator is the continuous-time unit-jump-rate walk killed at the
boundary: ``L0(x,y) = w(x,y)/W(x)`` for interior neighbors ``y`` and
``L0(x,x) = -1``, where ``W(x)`` is the total incident weight.  Rows lose
mass through boundary neighbors, which is what makes ``-L0`` invertible
and the heat kernel integrable in time.

Matrices act on interior vertex vectors.  The pointwise kernel is
``p_t(x,y) = exp(t L0)(x,y) / mu(y)``; with counting measure the two
coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import AccuracyError
from .geometry import GraphSpace

GREEN_RESIDUAL_TOL = 1e-10
MU_SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Generator:
    """Killed walk generator on the interior of a graph.

    Attributes
    ----------
    graph : GraphSpace
    interior : ndarray
        Interior vertex ids; row/column ``k`` of every matrix refers to
        ``interior[k]``.
    matrix : ndarray
        The generator ``L0`` (interior x interior).
    inflow : ndarray
        Jump probabilities into each boundary vertex
        (interior x boundary): ``inflow[x, b] = w(x, b)/W(x)``.
    mu : ndarray
        Vertex measure restricted to the interior.
    eigenvalues, eigenvectors : ndarray
        Spectral data of the mu-symmetrised generator; eigenvalues are
        nonpositive and ``exp(t L0)`` is assembled from them.
    """

    graph: GraphSpace
    interior: np.ndarray
    matrix: np.ndarray
    inflow: np.ndarray
    mu: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    _d_half: np.ndarray
    _d_half_inv: np.ndarray

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def spectral_gap(self) -> float:
        """Smallest eigenvalue of ``-L0``; positive iff the walk is killed."""
        return float(-self.eigenvalues.max())

    def exp_matrix(self, t: float) -> np.ndarray:
        """Dense ``exp(t L0)``, entries clipped at 0 against roundoff."""
        if t == 0.0:
            return np.eye(self.n_interior)
        u = self.eigenvectors
        core = (u * np.exp(t * self.eigenvalues)) @ u.T
        out = self._d_half_inv[:, None] * core * self._d_half[None, :]
        np.clip(out, 0.0, None, out=out)
        return out

    def kernel(self, t: float) -> np.ndarray:
        """Pointwise heat kernel ``p_t(x,y)`` over interior pairs."""
        return self.exp_matrix(t) / self.mu[None, :]


def build_generator(g: GraphSpace) -> Generator:
    """Assemble the killed generator of the unit-rate walk on ``g``.

    Raises
    ------
    ValueError
        For an isolated interior vertex, or a (measure, weight) pairing
        that breaks mu-symmetry (reversibility needs mu proportional to
        incident weight wherever the incident weight varies).
    """
    interior = g.interior
    if len(interior) == 0:
        raise ValueError("graph has no interior vertices")
    w_total = g.incident_weight
    if np.any(w_total[interior] == 0):
        bad = int(interior[np.argmax(w_total[interior] == 0)])
        raise ValueError(f"interior vertex {bad} is isolated")

    jump = g.weights[np.ix_(interior, interior)] / w_total[interior][:, None]
    n = len(interior)
    l0 = jump - np.eye(n)
    mu = g.measure[interior]

    sym_defect = np.abs(mu[:, None] * l0 - l0.T * mu[None, :]).max()
    if sym_defect > MU_SYMMETRY_TOL * max(1.0, np.abs(l0).max()):
        raise ValueError(
            "generator is not mu-symmetric (defect "
            f"{sym_defect:.3e}); use a measure proportional to incident weight")

    boundary = g.boundary
    inflow = (g.weights[np.ix_(interior, boundary)] / w_total[interior][:, None]
              if len(boundary) else np.zeros((n, 0)))

    d_half = np.sqrt(mu)
    d_half_inv = 1.0 / d_half
    sym = d_half[:, None] * l0 * d_half_inv[None, :]
    sym = (sym + sym.T) / 2.0
    eigval, eigvec = np.linalg.eigh(sym)

    for arr in (l0, inflow, mu, eigval, eigvec, d_half, d_half_inv):
        arr.setflags(write=False)
    return Generator(g, interior, l0, inflow, mu, eigval, eigvec, d_half, d_half_inv)


@dataclass(frozen=True)
class HeatKernelCache:
    """One-step semigroup matrix ``P_dt = exp(dt L0)`` plus spectral data.

    ``accuracy`` is the max-norm defect of the semigroup identity
    ``P_dt P_dt = P_{2 dt}``, certified at build time.
    """

    generator: Generator
    dt: float
    step_matrix: np.ndarray
    accuracy: float

    @property
    def spectral_gap(self) -> float:
        return self.generator.spectral_gap

    def power_matrix(self, n_steps: int) -> np.ndarray:
        """``exp(n dt L0)`` assembled spectrally (no repeated squaring)."""
        return self.generator.exp_matrix(n_steps * self.dt)


def heat_kernel(gen: Generator, t: float) -> np.ndarray:
    """Heat semigroup matrix ``exp(t L0)`` with a certified accuracy check.

    Prefers the spectral form (the generator is mu-symmetric); falls back
    to scaling-and-squaring if the spectral reconstruction is poor.

    Raises
    ------
    AccuracyError
        If neither method meets the semigroup-defect budget.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t == 0.0:
        return np.eye(gen.n_interior)
    n = gen.n_interior
    budget = 10 * np.finfo(float).eps * max(n, gen.graph.n_vertices)

    mat = gen.exp_matrix(t)
    half = gen.exp_matrix(t / 2.0)
    defect = np.abs(half @ half - mat).max()
    if defect <= budget:
        return mat

    mat = scipy.linalg.expm(t * gen.matrix)
    np.clip(mat, 0.0, None, out=mat)
    half = scipy.linalg.expm((t / 2.0) * gen.matrix)
    defect = np.abs(half @ half - mat).max()
    if defect > budget:
        raise AccuracyError(
            f"heat kernel semigroup defect {defect:.3e} exceeds budget {budget:.3e}",
            residual=defect)
    return mat


def make_cache(gen: Generator, dt: float) -> HeatKernelCache:
    """Build the per-step kernel cache used by the time steppers."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    step = heat_kernel(gen, dt)
    two = gen.exp_matrix(2.0 * dt)
    accuracy = float(np.abs(step @ step - two).max())
    budget = 10 * np.finfo(float).eps * gen.graph.n_vertices
    if accuracy > budget:
        raise AccuracyError(
            f"semigroup defect {accuracy:.3e} exceeds budget {budget:.3e}",
            residual=accuracy)
    step.setflags(write=False)
    return HeatKernelCache(gen, dt, step, accuracy)


def apply_semigroup(cache: HeatKernelCache, n_steps: int, values: np.ndarray) -> np.ndarray:
    """Apply ``P_{n dt}`` to the interior restriction of a vertex field.

    ``values`` covers all vertices; boundary entries pass through
    unchanged (the pinned-boundary steppers own boundary semantics).
    """
    g = cache.generator.graph
    if values.shape[-1] != g.n_vertices:
        raise ValueError(
            f"field has length {values.shape[-1]}, expected {g.n_vertices}")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    out = np.array(values, dtype=float)
    interior = cache.generator.interior
    out[..., interior] = values[..., interior] @ cache.power_matrix(n_steps).T
    return out


def semigroup_smoothed_integral(gen: Generator, mid: np.ndarray,
                                horizon: float, dt: float):
    """Trapezoidal time integral of ``exp(tL0) M exp(tL0)^T`` over [0, horizon].

    Returns the integrated matrix and a spectral bound on the dropped
    (horizon, infinity) tail.  ``M`` must be symmetric.  The time
    dependence is an elementwise scaling in the mu-symmetrised eigenbasis,
    so each quadrature node costs O(n^2).
    """
    steps = int(round(horizon / dt))
    if steps < 1 or abs(steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("dt must divide the integration horizon")
    u = gen.eigenvectors
    lam = gen.eigenvalues
    d_half = gen._d_half
    core = u.T @ (d_half[:, None] * mid * d_half[None, :]) @ u

    acc = np.zeros_like(core)
    for k in range(steps + 1):
        weight = dt if 0 < k < steps else dt / 2.0
        e = np.exp((k * dt) * lam)
        acc += weight * (core * np.outer(e, e))
    d_half_inv = gen._d_half_inv
    integral = d_half_inv[:, None] * (u @ acc @ u.T) * d_half_inv[None, :]

    gap = gen.spectral_gap
    if gap <= 1e-12:
        raise ValueError("tail bound needs a killed generator (positive gap)")
    mid_norm = float(np.abs(np.linalg.eigvalsh((mid + mid.T) / 2.0)).max())
    cond = float(gen.mu.max() / gen.mu.min())
    tail = cond * mid_norm * np.exp(-2.0 * gap * horizon) / (2.0 * gap)
    return integral, tail


@dataclass(frozen=True)
class GreenMatrix:
    """Green function ``G = (-L0)^{-1}`` with its certified solve residual."""

    generator: Generator
    matrix: np.ndarray
    base_point: int
    residual: float


def green_function(gen: Generator, base_point: int | None = None) -> GreenMatrix:
    """Direct solve for ``G = (-L0)^{-1}``, residual-certified.

    A singular solve cannot occur for a killed generator; if it does (no
    boundary at all), the failure is surfaced as an AccuracyError.
    """
    n = gen.n_interior
    a = -gen.matrix
    try:
        g_mat = np.linalg.solve(a, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise AccuracyError(f"Green solve failed: {exc}") from exc
    residual = float(np.abs(a @ g_mat - np.eye(n)).max())
    if residual > GREEN_RESIDUAL_TOL:
        raise AccuracyError(
            f"Green residual {residual:.3e} exceeds {GREEN_RESIDUAL_TOL:.0e}",
            residual=residual)
    if base_point is None:
        base_point = gen.graph.default_base_point()
    if not gen.graph.interior_mask[base_point]:
        raise ValueError(f"base point {base_point} is not interior")
    g_mat.setflags(write=False)
    return GreenMatrix(gen, g_mat, int(base_point), residual)
