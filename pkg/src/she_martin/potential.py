"""Harmonic functions, harmonic measure, and the Martin kernel on finite graphs.

On a finite graph the boundary vertices play the role of the ideal
boundary: every bounded harmonic function is the absorption average of
its boundary data, the Martin kernel is the Green ratio extended along
the last interior vertex, and the integral representation is a finite
nonnegative weight per boundary vertex.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AccuracyError
from .geometry import Automorphism, GraphSpace
from .heat import Generator, GreenMatrix, build_generator

HARMONIC_RESIDUAL_TOL = 1e-10
REPRESENTATION_TOL = 1e-8
NEGATIVE_MASS_TOL = 1e-9


@dataclass(frozen=True)
class HarmonicFunction:
    """A vertex field solving the mean-value equation at every interior vertex.

    ``residual`` is the certified max interior defect
    ``|sum_y w(x,y) h(y) / W(x) - h(x)|``.
    """

    graph: GraphSpace
    values: np.ndarray
    boundary_data: np.ndarray
    residual: float

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[self.graph.interior]

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


def harmonic_residual(g: GraphSpace, values: np.ndarray) -> float:
    """Max mean-value defect of ``values`` over interior vertices."""
    w_total = g.incident_weight
    averaged = (g.weights @ values) / w_total
    return float(np.abs(averaged[g.interior] - values[g.interior]).max())


def solve_dirichlet(g: GraphSpace, boundary_data,
                    gen: Generator | None = None) -> HarmonicFunction:
    """Unique harmonic extension of the given boundary data.

    Solves ``(-L0) h_int = inflow`` where the inflow collects the one-step
    boundary contributions.  The residual is certified against the
    full-graph mean-value operator.
    """
    if gen is None:
        gen = build_generator(g)
    b = np.asarray(boundary_data, dtype=float)
    if b.shape != (len(g.boundary),):
        raise ValueError(
            f"boundary data has length {b.shape}, expected {len(g.boundary)}")
    if not np.all(np.isfinite(b)):
        raise ValueError("boundary data must be finite")

    rhs = gen.inflow @ b
    h_int = np.linalg.solve(-gen.matrix, rhs)
    values = np.zeros(g.n_vertices)
    values[g.interior] = h_int
    values[g.boundary] = b
    residual = harmonic_residual(g, values)
    if residual > HARMONIC_RESIDUAL_TOL:
        raise AccuracyError(
            f"harmonic residual {residual:.3e} exceeds {HARMONIC_RESIDUAL_TOL:.0e}",
            residual=residual)
    values.setflags(write=False)
    b = b.copy()
    b.setflags(write=False)
    return HarmonicFunction(g, values, b, residual)


def harmonic_measure(g: GraphSpace, arc, gen: Generator | None = None) -> HarmonicFunction:
    """Absorption probability in ``arc`` (a set of boundary vertex ids).

    Equals the harmonic extension of the arc's indicator; values lie in
    [0, 1].  An empty arc yields the zero function and a warning, since
    the result is then not strictly positive.
    """
    arc = np.asarray(sorted(set(int(a) for a in arc)), dtype=int)
    boundary = g.boundary
    if arc.size and not np.isin(arc, boundary).all():
        bad = arc[~np.isin(arc, boundary)][0]
        raise ValueError(f"vertex {bad} is not a boundary vertex")
    if arc.size == 0:
        warnings.warn("empty arc: harmonic measure is identically zero",
                      stacklevel=2)
    data = np.isin(boundary, arc).astype(float)
    return solve_dirichlet(g, data, gen=gen)


@dataclass(frozen=True)
class MartinKernelMatrix:
    """Green-ratio kernel ``K(x, xi)`` for interior ``x`` and boundary ``xi``.

    ``base_mass[j]`` is the harmonic measure of boundary vertex ``j`` seen
    from the base point; it converts boundary data into representation
    weights.  ``inflow_weighted`` flags boundary vertices with several
    interior neighbors, where the kernel extension averages over the
    possible last interior steps.
    """

    graph: GraphSpace
    matrix: np.ndarray
    base_point: int
    base_mass: np.ndarray
    inflow_weighted: np.ndarray


def martin_kernel(green: GreenMatrix, g: GraphSpace) -> MartinKernelMatrix:
    """Martin kernel from the Green matrix, extended to the boundary.

    For a boundary vertex with a unique interior neighbor ``xi'`` this is
    ``G(x, xi')/G(o, xi')``; in general the extension weights each interior
    neighbor by its jump probability into the boundary vertex, which is
    exactly the harmonic-measure column normalised at the base point.
    """
    gen = green.generator
    if gen.graph is not g:
        raise ValueError("Green matrix was built for a different graph")
    o = green.base_point
    if not g.interior_mask[o]:
        raise ValueError(f"base point {o} is not interior")
    boundary = g.boundary
    if len(boundary) == 0:
        raise ValueError("graph has no boundary vertices")

    omega = green.matrix @ gen.inflow
    o_row = int(np.flatnonzero(gen.interior == o)[0])
    base_mass = omega[o_row].copy()
    if np.any(base_mass <= 0):
        raise AccuracyError("harmonic measure from the base point vanishes "
                            "on part of the boundary")
    kernel = omega / base_mass[None, :]

    multi = (gen.inflow > 0).sum(axis=0) > 1
    kernel.setflags(write=False)
    base_mass.setflags(write=False)
    multi.setflags(write=False)
    return MartinKernelMatrix(g, kernel, o, base_mass, multi)


@dataclass(frozen=True)
class BoundaryMeasure:
    """Nonnegative representation weights, one per boundary vertex."""

    graph: GraphSpace
    weights: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


def martin_representation(h: HarmonicFunction,
                          kernel: MartinKernelMatrix) -> BoundaryMeasure:
    """Boundary measure ``nu`` with ``h(x) = sum_xi K(x, xi) nu(xi)``.

    The weights are the base-point harmonic measure times the boundary
    data, which reproduces ``h`` at every interior vertex; the
    reconstruction residual is certified.  Roundoff-scale negative
    components are clamped, anything worse is rejected.
    """
    if h.graph is not kernel.graph:
        raise ValueError("harmonic function and kernel live on different graphs")
    if h.residual > HARMONIC_RESIDUAL_TOL:
        raise ValueError(f"harmonic residual {h.residual:.3e} too large")
    nu = kernel.base_mass * h.boundary_data
    if np.any(nu < -NEGATIVE_MASS_TOL):
        worst = float(nu.min())
        raise ValueError(
            f"not in the positive cone: representation weight {worst:.3e}")
    nu = np.clip(nu, 0.0, None)

    recon = kernel.matrix @ nu
    defect = float(np.abs(recon - h.interior_values).max())
    if defect > REPRESENTATION_TOL:
        raise AccuracyError(
            f"representation residual {defect:.3e} exceeds {REPRESENTATION_TOL:.0e}",
            residual=defect)
    nu.setflags(write=False)
    return BoundaryMeasure(h.graph, nu)


def pushforward_harmonic(h: HarmonicFunction, a: Automorphism) -> HarmonicFunction:
    """Transport ``h`` through a graph symmetry: ``(a . h)(x) = h(a^{-1} x)``."""
    if a.graph is not h.graph:
        raise ValueError("automorphism acts on a different graph")
    values = a.act_on_field(h.values)
    g = h.graph
    boundary_data = values[g.boundary]
    residual = harmonic_residual(g, values)
    if residual > HARMONIC_RESIDUAL_TOL:
        raise AccuracyError(
            f"pushforward residual {residual:.3e} exceeds tolerance",
            residual=residual)
    values.setflags(write=False)
    boundary_data.setflags(write=False)
    return HarmonicFunction(g, values, boundary_data, residual)


def pushforward_measure(nu: BoundaryMeasure, a: Automorphism) -> BoundaryMeasure:
    """Pushforward of a boundary measure: mass of ``xi`` moves to ``a(xi)``."""
    g = nu.graph
    boundary = g.boundary
    pos = {int(v): k for k, v in enumerate(boundary)}
    out = np.empty_like(nu.weights)
    for k, v in enumerate(boundary):
        out[pos[a.apply(int(v))]] = nu.weights[k]
    out.setflags(write=False)
    return BoundaryMeasure(g, out)
