"""Spatial covariance kernels and reproducible space-time Gaussian increments.

Noise lives on interior vertices only: the killed mild form never reads
boundary noise.  Increments are generated from counter-based Philox
streams keyed by (master seed, stream id), so any replica regenerates
bit-identically, in any order, on any worker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Automorphism, GraphSpace

PSD_TOL = 1e-10
FACTOR_TOL = 1e-10
INVARIANCE_TOL = 1e-12


@dataclass(frozen=True)
class SeedRecord:
    """Addressable randomness: (seed, stream) keys one Philox stream."""

    seed: int
    stream: int = 0

    def replica(self, index: int) -> "SeedRecord":
        return SeedRecord(self.seed, self.stream + index)

    def as_dict(self) -> dict:
        return {"seed": self.seed, "stream": self.stream}


def philox_normals(record: SeedRecord, shape) -> np.ndarray:
    """Standard normals from the Philox stream named by ``record``.

    Pure function of (seed, stream, shape): the draw at a given array
    position never depends on what other streams were sampled.
    """
    key = np.array([record.seed, record.stream], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.standard_normal(shape)


@dataclass(frozen=True)
class CovarianceKernel:
    """Realized spatial covariance over interior vertices.

    ``matrix[i, j]`` is R(y_i, y_j) for interior vertices ``interior[i]``,
    ``interior[j]``.  ``factor`` is the symmetric PSD square root used for
    sampling, with ``factor @ factor = matrix`` up to the certified
    tolerance.  White noise on measure mu realizes ``R = diag(1/mu)``.
    """

    kind: str
    graph: GraphSpace
    interior: np.ndarray
    matrix: np.ndarray
    factor: np.ndarray
    mu: np.ndarray
    params: dict
    factor_diag: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.interior)

    @property
    def spectral_norm(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).max())

    def is_invariant(self, a: Automorphism, tol: float = INVARIANCE_TOL):
        """Check R(a y, a y') = R(y, y'); returns (ok, worst pair, defect)."""
        pos = {int(v): k for k, v in enumerate(self.interior)}
        perm = np.array([pos[a.apply(int(v))] for v in self.interior])
        moved = self.matrix[np.ix_(perm, perm)]
        defect = np.abs(moved - self.matrix)
        worst = np.unravel_index(int(defect.argmax()), defect.shape)
        pair = (int(self.interior[worst[0]]), int(self.interior[worst[1]]))
        return bool(defect.max() <= tol), pair, float(defect.max())


def _symmetric_sqrt(matrix: np.ndarray, norm: float) -> np.ndarray:
    eigval, eigvec = np.linalg.eigh(matrix)
    if eigval.min() < -PSD_TOL * max(norm, 1.0):
        raise ValueError(
            f"covariance is not positive semidefinite: min eigenvalue {eigval.min():.3e}")
    factor = (eigvec * np.sqrt(np.clip(eigval, 0.0, None))) @ eigvec.T
    defect = np.abs(factor @ factor - matrix).max()
    if defect > FACTOR_TOL * max(norm, 1.0):
        raise ValueError(f"square-root factor defect {defect:.3e} too large")
    return factor


def build_covariance(g: GraphSpace, kind: str, *, alpha: float | None = None,
                     c: float | None = None,
                     matrix: np.ndarray | None = None) -> CovarianceKernel:
    """Realize a covariance kernel over the interior vertices of ``g``.

    Kinds: ``white`` (``R = diag(1/mu)``), ``distance_decay``
    (``R(y,y') = c (1 + d(y,y'))^{-alpha}``, hop metric), and ``explicit``
    (a caller-supplied symmetric PSD matrix).  Positive semidefiniteness
    is verified by eigenvalue check and a failure is rejected with the
    offending eigenvalue.
    """
    interior = g.interior
    mu = g.measure[interior]
    params: dict = {}
    if kind == "white":
        mat = np.diag(1.0 / mu)
    elif kind == "distance_decay":
        if alpha is None or c is None or alpha <= 0 or c <= 0:
            raise ValueError("distance_decay needs alpha > 0 and c > 0")
        d = g.distance_matrix()[np.ix_(interior, interior)]
        mat = c * (1.0 + d) ** (-alpha)
        params = {"alpha": alpha, "c": c}
    elif kind == "explicit":
        if matrix is None:
            raise ValueError("explicit kind needs a matrix")
        mat = np.array(matrix, dtype=float)
        if mat.shape != (len(interior), len(interior)):
            raise ValueError(
                f"explicit covariance must be {len(interior)}x{len(interior)}")
        if np.abs(mat - mat.T).max() > 0:
            raise ValueError("explicit covariance must be symmetric")
    else:
        raise ValueError(f"unknown covariance kind {kind!r}")

    norm = float(np.linalg.eigvalsh(mat).max()) if len(mat) else 0.0
    factor = _symmetric_sqrt(mat, norm)
    diag = np.diag(factor).copy()
    factor_diag = diag if np.count_nonzero(factor - np.diag(diag)) == 0 else None
    for arr in (mat, factor) + ((factor_diag,) if factor_diag is not None else ()):
        arr.setflags(write=False)
    return CovarianceKernel(kind, g, interior, mat, factor, mu, params, factor_diag)


@dataclass(frozen=True)
class NoiseIncrements:
    """Per-step Gaussian increments with covariance ``dt * R``.

    ``values[n, k]`` is the increment at interior vertex
    ``kernel.interior[k]`` over the n-th step.  Regeneration from the same
    seed record is bit-identical.
    """

    kernel: CovarianceKernel
    dt: float
    values: np.ndarray
    record: SeedRecord

    @property
    def steps(self) -> int:
        return self.values.shape[0]


def increment_values(kernel: CovarianceKernel, dt: float,
                     normals: np.ndarray) -> np.ndarray:
    """Scale standard normals into increments with covariance ``dt * R``.

    Single code path shared by every sampler so identical seeds give
    bit-identical increments everywhere.  A diagonal factor (white noise)
    skips the matrix product; the result is bit-identical to it.
    """
    scaled = np.sqrt(dt) * normals
    if kernel.factor_diag is not None:
        return scaled * kernel.factor_diag
    return scaled @ kernel.factor


def sample_increments(kernel: CovarianceKernel, dt: float, steps: int,
                      record: SeedRecord) -> NoiseIncrements:
    """Draw ``steps`` independent increments from the stream named by ``record``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("need at least one step")
    normals = philox_normals(record, (steps, kernel.n))
    values = increment_values(kernel, dt, normals)
    values.setflags(write=False)
    return NoiseIncrements(kernel, dt, values, record)


def transform_noise(w: NoiseIncrements, a: Automorphism) -> NoiseIncrements:
    """Relabel increments by a symmetry: output at y is the input at a(y).

    Requires the covariance to be invariant under ``a``; the law of the
    increments is then unchanged.
    """
    kernel = w.kernel
    ok, pair, defect = kernel.is_invariant(a)
    if not ok:
        raise ValueError(
            f"covariance is not invariant under the automorphism: "
            f"pair {pair} moves by {defect:.3e}")
    pos = {int(v): k for k, v in enumerate(kernel.interior)}
    source = np.array([pos[a.apply(int(v))] for v in kernel.interior])
    values = w.values[:, source]
    values.setflags(write=False)
    return NoiseIncrements(kernel, w.dt, values, w.record)


def ito_walsh_quadrature(f, f_tilde, kernel: CovarianceKernel, dt: float) -> float:
    """Discrete noise-space inner product of two deterministic fields.

    ``sum_n dt sum_{y,y'} f_n(y) R(y,y') g_n(y') mu(y) mu(y')`` for fields
    sampled on the same (step, interior vertex) grid.  This is the exact
    variance of the matching stochastic sum, so Monte Carlo estimates of
    that variance converge to this value.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(f_tilde, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"field grids differ: {f.shape} vs {g.shape}")
    if f.ndim != 2 or f.shape[1] != kernel.n:
        raise ValueError(
            f"fields must be (steps, {kernel.n}); got {f.shape}")
    fmu = f * kernel.mu[None, :]
    gmu = g * kernel.mu[None, :]
    return float(dt * np.einsum("ti,ij,tj->", fmu, kernel.matrix, gmu))


def stochastic_sum(f, w: NoiseIncrements) -> float:
    """The Ito-Walsh sum ``sum_n sum_y f_n(y) dW_n(y) mu(y)`` for one replica."""
    f = np.asarray(f, dtype=float)
    if f.shape != w.values.shape:
        raise ValueError(f"field grid {f.shape} does not match noise {w.values.shape}")
    return float(np.sum(f * w.values * w.kernel.mu[None, :]))
