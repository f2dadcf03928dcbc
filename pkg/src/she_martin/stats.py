"""Order-independent Monte Carlo accumulation and report emission.

Samples are grouped into fixed blocks keyed by the global replica index.
Each block's power sums are computed by numpy's pairwise summation over
the block's samples sorted by replica id, and the final reduction runs
over blocks sorted by block id.  Statistics therefore never depend on
which worker produced which block or in which order blocks were merged.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

BLOCK_SIZE = 1024


class MomentAccumulator:
    """Mergeable per-vertex moment sums with deterministic reduction.

    Tracks power sums of shifted samples ``y = x - shift`` up to fourth
    order (fourth powers feed the standard error of second-moment
    estimates), and optionally products over a list of component pairs
    for covariance estimates.

    ``shift`` should be a rough prior for the sample location; it removes
    the catastrophic cancellation in variance-of-near-equal-values sums
    and must be identical across all merged accumulators.
    """

    def __init__(self, dim: int, shift=0.0, pairs=None):
        self.dim = dim
        self.shift = np.broadcast_to(np.asarray(shift, dtype=float), (dim,)).copy()
        self.pairs = [tuple(p) for p in pairs] if pairs else []
        self._blocks: dict[int, dict] = {}
        self._buffers: dict[int, dict[int, np.ndarray]] = {}

    # -- feeding -----------------------------------------------------------

    def accumulate(self, replica_id: int, sample) -> None:
        """Add one replica's field sample (any call order)."""
        sample = np.asarray(sample, dtype=float)
        if sample.shape != (self.dim,):
            raise ValueError(f"sample must have shape ({self.dim},)")
        if not np.all(np.isfinite(sample)):
            raise ValueError(f"non-finite sample for replica {replica_id}")
        block = int(replica_id) // BLOCK_SIZE
        buf = self._buffers.setdefault(block, {})
        if replica_id in buf or (block in self._blocks):
            raise ValueError(f"replica {replica_id} already accumulated")
        buf[int(replica_id)] = sample.copy()

    def add_block(self, first_replica_id: int, samples) -> None:
        """Add a whole block of samples starting at a block boundary."""
        samples = np.asarray(samples, dtype=float)
        if first_replica_id % BLOCK_SIZE != 0:
            raise ValueError("block must start at a multiple of the block size")
        if samples.ndim != 2 or samples.shape[1] != self.dim:
            raise ValueError(f"block must be (n, {self.dim})")
        if samples.shape[0] > BLOCK_SIZE:
            raise ValueError("block larger than the block size")
        if not np.all(np.isfinite(samples)):
            bad = int(np.where(~np.isfinite(samples).all(axis=1))[0][0])
            raise ValueError(
                f"non-finite sample for replica {first_replica_id + bad}")
        block = first_replica_id // BLOCK_SIZE
        if block in self._blocks or block in self._buffers:
            raise ValueError(f"block {block} already present")
        self._blocks[block] = self._reduce(samples)

    def _reduce(self, samples: np.ndarray) -> dict:
        y = samples - self.shift[None, :]
        out = {
            "count": samples.shape[0],
            "s1": y.sum(axis=0), "s2": (y ** 2).sum(axis=0),
            "s3": (y ** 3).sum(axis=0), "s4": (y ** 4).sum(axis=0),
        }
        if self.pairs:
            prod = np.stack([y[:, a] * y[:, b] for a, b in self.pairs], axis=1)
            out["p1"] = prod.sum(axis=0)
            out["p2"] = (prod ** 2).sum(axis=0)
        return out

    def _flush(self) -> None:
        for block, buf in sorted(self._buffers.items()):
            ids = sorted(buf)
            self._blocks[block] = self._reduce(np.stack([buf[i] for i in ids]))
        self._buffers.clear()

    # -- merging -----------------------------------------------------------

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """Disjoint-block merge; commutative and associative by construction."""
        if other.dim != self.dim or other.pairs != self.pairs:
            raise ValueError("accumulators are incompatible")
        if np.any(other.shift != self.shift):
            raise ValueError("accumulators use different shifts")
        self._flush()
        other._flush()
        overlap = set(self._blocks) & set(other._blocks)
        if overlap:
            raise ValueError(f"blocks {sorted(overlap)} present on both sides")
        self._blocks.update(other._blocks)
        return self

    def _totals(self) -> dict:
        self._flush()
        if not self._blocks:
            raise ValueError("no samples accumulated")
        keys = sorted(self._blocks)
        tot = {"count": sum(self._blocks[k]["count"] for k in keys)}
        for name in ("s1", "s2", "s3", "s4") + (("p1", "p2") if self.pairs else ()):
            stacked = np.stack([self._blocks[k][name] for k in keys])
            tot[name] = stacked.sum(axis=0)
        return tot

    # -- estimates ----------------------------------------------------------

    @property
    def count(self) -> int:
        self._flush()
        return sum(b["count"] for b in self._blocks.values())

    def mean(self) -> np.ndarray:
        t = self._totals()
        return self.shift + t["s1"] / t["count"]

    def variance(self) -> np.ndarray:
        t = self._totals()
        n = t["count"]
        if n < 2:
            return np.full(self.dim, np.nan)
        return np.maximum(t["s2"] - t["s1"] ** 2 / n, 0.0) / (n - 1)

    def mean_se(self) -> np.ndarray:
        return np.sqrt(self.variance() / self.count)

    def second_moment(self) -> np.ndarray:
        t = self._totals()
        n = t["count"]
        s = self.shift
        return (t["s2"] + 2 * s * t["s1"]) / n + s ** 2

    def second_moment_se(self) -> np.ndarray:
        """Standard error of the mean-of-squares estimate."""
        t = self._totals()
        n = t["count"]
        if n < 2:
            return np.full(self.dim, np.nan)
        s = self.shift
        m1 = (t["s2"] + 2 * s * t["s1"]) / n + s ** 2
        m2 = (t["s4"] + 4 * s * t["s3"] + 6 * s ** 2 * t["s2"]
              + 4 * s ** 3 * t["s1"]) / n + s ** 4
        var = np.maximum(m2 - m1 ** 2, 0.0) * n / (n - 1)
        return np.sqrt(var / n)

    def pair_means(self) -> np.ndarray:
        """Mean of products of shifted components, one per requested pair."""
        t = self._totals()
        return t["p1"] / t["count"]

    def pair_ses(self) -> np.ndarray:
        t = self._totals()
        n = t["count"]
        var = np.maximum(t["p2"] / n - (t["p1"] / n) ** 2, 0.0) * n / max(n - 1, 1)
        return np.sqrt(var / n)


def sup_over_observation(values, ses, ids):
    """Max of per-vertex estimates with the SE at the argmax.

    The max of noisy estimates is upward-biased, so bound checks built on
    this always add slack on the bound side.
    """
    values = np.asarray(values, dtype=float)
    ids = list(ids)
    if len(ids) == 0 or len(ids) != len(values):
        raise ValueError("observation set is empty or mismatched")
    k = int(values.argmax())
    return float(values[k]), float(np.asarray(ses)[k]), ids[k]


@dataclass(frozen=True)
class Verdict:
    """One pass/fail check: a statistic against its bound."""

    check_name: str
    statistic: float
    bound: float
    passed: bool
    info: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"check_name": self.check_name, "statistic": self.statistic,
               "bound": self.bound, "pass": bool(self.passed)}
        if self.info:
            out["info"] = self.info
        return out


@dataclass
class ExperimentReport:
    """Tabular estimates plus verdicts plus the reproduction manifest."""

    name: str
    columns: list[str]
    rows: list[list]
    verdicts: list[Verdict]
    manifest: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_number(x) for x in row])


def _jsonable(obj):
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    return obj


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
