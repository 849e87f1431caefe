"""Finite surrogates for periodic measures on the phase space.

A measure is a weight vector over a :class:`Partition`: equal-width bins of
the circle, or the atoms of a finite state space.  Families indexed by an
equally spaced grid of ``s`` in ``[0, tau)`` stand in for ``s -> rho_s``;
integrals over ``s`` use the left-endpoint rule on that grid.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PartitionMismatch, SetNotRepresentable
from .rds import RandomPeriodicPath, SkewState, skew_step
from .streams import stream

_NORM_TOL = 1e-12


@dataclass(frozen=True)
class Partition:
    """``kind`` is ``"circle"`` (``count`` equal bins of [0, 1)) or ``"atoms"``."""

    kind: str
    count: int

    def __post_init__(self):
        if self.kind not in ("circle", "atoms"):
            raise ValueError(f"unknown partition kind {self.kind!r}")
        if self.count < 1:
            raise ValueError("partition needs at least one cell")

    @property
    def edges(self) -> np.ndarray:
        if self.kind == "circle":
            return np.linspace(0.0, 1.0, self.count + 1)
        return np.arange(self.count + 1) - 0.5

    @property
    def centers(self) -> np.ndarray:
        if self.kind == "circle":
            return (np.arange(self.count) + 0.5) / self.count
        return np.arange(self.count, dtype=float)

    def index(self, x) -> np.ndarray:
        if self.kind == "circle":
            idx = np.floor(np.asarray(x, dtype=float) * self.count).astype(np.int64)
            return np.clip(idx, 0, self.count - 1)
        return np.asarray(x, dtype=np.int64)

    def cells(self, subset) -> np.ndarray:
        """Boolean cell mask for ``subset``.

        Accepts a bitmask ``int`` (atoms), an iterable of cell indices, a
        boolean mask, or for circles an interval ``(a, b)`` whose endpoints
        fall on bin edges.
        """
        if isinstance(subset, (int, np.integer)) and not isinstance(subset, bool):
            bits = int(subset)
            if bits < 0 or bits >> self.count:
                raise SetNotRepresentable(f"bitmask {bits} outside {self.count} cells")
            return np.array([(bits >> i) & 1 for i in range(self.count)], dtype=bool)
        if isinstance(subset, tuple) and len(subset) == 2 and self.kind == "circle":
            a, b = (float(v) * self.count for v in subset)
            if abs(a - round(a)) > 1e-9 or abs(b - round(b)) > 1e-9 or not 0 <= round(a) <= round(b) <= self.count:
                raise SetNotRepresentable(f"interval {subset} is not a union of bins")
            mask = np.zeros(self.count, dtype=bool)
            mask[int(round(a)) : int(round(b))] = True
            return mask
        arr = np.asarray(list(subset) if not isinstance(subset, np.ndarray) else subset)
        if arr.dtype == bool:
            if arr.shape != (self.count,):
                raise SetNotRepresentable("boolean mask has wrong length")
            return arr
        mask = np.zeros(self.count, dtype=bool)
        if arr.size:
            if arr.min() < 0 or arr.max() >= self.count:
                raise SetNotRepresentable("cell index out of range")
            mask[arr.astype(np.int64)] = True
        return mask


@dataclass
class EmpiricalMeasure:
    """Weights over a partition.  ``n_samples is None`` marks an exact vector."""

    partition: Partition
    weights: np.ndarray
    n_samples: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.partition.count,):
            raise PartitionMismatch("weights do not match the partition")
        if np.any(self.weights < -_NORM_TOL):
            raise ValueError("negative weight")
        if abs(self.weights.sum() - 1.0) > 1e-10:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, not 1")

    @classmethod
    def exact(cls, vector, **meta) -> "EmpiricalMeasure":
        vector = np.asarray(vector, dtype=float)
        return cls(Partition("atoms", len(vector)), vector, None, dict(meta))

    @classmethod
    def from_samples(cls, x, partition: Partition, **meta) -> "EmpiricalMeasure":
        counts = np.bincount(partition.index(x), minlength=partition.count)
        n = int(counts.sum())
        return cls(partition, counts / n, n, dict(meta))

    def expect(self, phi) -> float:
        """Integral of a cell-wise function (array over cells, or callable of centres)."""
        values = phi(self.partition.centers) if callable(phi) else np.asarray(phi, dtype=float)
        if values.shape != self.weights.shape:
            raise PartitionMismatch(f"observable has shape {values.shape}, measure {self.weights.shape}")
        return float(self.weights @ values)

    def prob(self, subset) -> float:
        return float(self.weights[self.partition.cells(subset)].sum())

    def to_dict(self) -> dict:
        return {
            "partition": {"kind": self.partition.kind, "count": self.partition.count, "edges": self.partition.edges.tolist()},
            "weights": self.weights.tolist(),
            "n_samples": self.n_samples,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EmpiricalMeasure":
        part = Partition(data["partition"]["kind"], int(data["partition"]["count"]))
        return cls(part, np.asarray(data["weights"]), data.get("n_samples"), dict(data.get("meta", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EmpiricalMeasure":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin_center", "weight"])
        for c, w in zip(self.partition.centers, self.weights):
            writer.writerow([repr(float(c)), repr(float(w))])
        return buf.getvalue()


@dataclass
class PeriodicMeasureFamily:
    tau: float
    s_grid: np.ndarray
    measures: list[EmpiricalMeasure]
    kind: str  # "exact" or "empirical"

    def __post_init__(self):
        self.s_grid = np.asarray(self.s_grid, dtype=float)
        if len(self.s_grid) != len(self.measures) or not self.measures:
            raise ValueError("one measure per grid point is required")
        if np.any(np.diff(self.s_grid) <= 0):
            raise ValueError("s grid must be strictly increasing")
        if self.s_grid[0] < 0 or self.s_grid[-1] >= self.tau:
            raise ValueError("s grid must lie in [0, tau)")
        part = self.measures[0].partition
        if any(m.partition != part for m in self.measures):
            raise PartitionMismatch("family members use different partitions")

    @property
    def partition(self) -> Partition:
        return self.measures[0].partition

    @property
    def m(self) -> int:
        return len(self.s_grid)

    @classmethod
    def from_vectors(cls, vectors, tau: int | None = None) -> "PeriodicMeasureFamily":
        vectors = [np.asarray(v, dtype=float) for v in vectors]
        tau = len(vectors) if tau is None else tau
        return cls(float(tau), np.arange(len(vectors)) * (tau / len(vectors)),
                   [EmpiricalMeasure.exact(v) for v in vectors], "exact")

    def matrix(self) -> np.ndarray:
        return np.stack([m.weights for m in self.measures])


def _default_partition(path: RandomPeriodicPath, bins: int) -> Partition:
    if path.cocycle.phase == "circle":
        return Partition("circle", bins)
    return Partition("atoms", path.cocycle.n_states)


def estimate_rho(path: RandomPeriodicPath, s, n: int, bins: int = 64, seed: int = 0, stream_id: int = 0) -> EmpiricalMeasure:
    """Histogram of ``Y(s, w_i)`` over ``n`` independent noise draws."""
    if n < 100:
        raise ValueError("n must be at least 100")
    rng = stream(seed, 10, stream_id)
    omega = path.noise.sample(rng, n)
    return EmpiricalMeasure.from_samples(path.eval(s, omega), _default_partition(path, bins), s=float(s))


def estimate_family(path: RandomPeriodicPath, m: int = 16, n: int = 10_000, bins: int = 64, seed: int = 0) -> PeriodicMeasureFamily:
    grid = np.arange(m) * (path.tau / m)
    measures = [estimate_rho(path, s, n, bins, seed, stream_id=i) for i, s in enumerate(grid)]
    return PeriodicMeasureFamily(float(path.tau), grid, measures, "empirical")


def average_measure(family: PeriodicMeasureFamily) -> EmpiricalMeasure:
    """Left-endpoint quadrature of ``(1/tau) int_0^tau rho_s ds`` on the family grid."""
    weights = family.matrix().mean(axis=0)
    weights = weights / weights.sum()
    n = None if family.kind == "exact" else sum(m.n_samples or 0 for m in family.measures)
    return EmpiricalMeasure(family.partition, weights, n, {"average_over": family.m})


@dataclass
class PeriodicityReport:
    max_defect: float
    passed: bool
    per_step: list
    statistic: str  # "abs" or "z"


def _two_sample_z(p1, n1, p2, n2) -> np.ndarray:
    pooled = (p1 * n1 + p2 * n2) / (n1 + n2)
    var = pooled * (1 - pooled) * (1 / n1 + 1 / n2)
    diff = p1 - p2
    z = np.zeros_like(diff)
    ok = var > 0
    z[ok] = diff[ok] / np.sqrt(var[ok])
    return z


def check_family_periodicity(kernel, family: PeriodicMeasureFamily, tol: float = 1e-10,
                             z_max: float = 4.0, seed: int = 0) -> PeriodicityReport:
    """Check ``P*_t rho_s = rho_{s+t}`` along the family grid (cyclically).

    ``kernel`` is either a transition matrix (exact families on an integer
    grid) or a :class:`RandomPeriodicPath`, in which case draws from
    ``mu_{s_i}`` are pushed one grid step through the skew product and
    compared bin-wise with the independently estimated ``rho_{s_{i+1}}``.
    """
    from .markov import StochasticMatrix  # local import avoids a cycle

    if isinstance(kernel, (StochasticMatrix, np.ndarray)):
        p = kernel.p if isinstance(kernel, StochasticMatrix) else np.asarray(kernel, dtype=float)
        if family.partition.kind != "atoms" or family.partition.count != p.shape[0]:
            raise PartitionMismatch("family does not live on the chain's states")
        step = family.tau / family.m
        if abs(step - round(step)) > 1e-12:
            raise ValueError("exact families need an integer grid step")
        pk = np.linalg.matrix_power(p, int(round(step)))
        rows = family.matrix()
        pushed = rows @ pk
        defects = np.abs(pushed - np.roll(rows, -1, axis=0)).max(axis=1)
        worst = float(defects.max())
        return PeriodicityReport(worst, worst <= tol, defects.tolist(), "abs")

    path: RandomPeriodicPath = kernel
    if family.kind != "empirical":
        raise ValueError("path kernels need an empirical family")
    step = family.tau / family.m
    zs = []
    for i, s in enumerate(family.s_grid):
        target = family.measures[(i + 1) % family.m]
        n = target.n_samples
        omega, x = path.sample_section(s, n, stream(seed, 11, i))
        moved = skew_step(path.cocycle, step, SkewState(omega, x))
        pushed = EmpiricalMeasure.from_samples(moved.x, family.partition)
        z = _two_sample_z(pushed.weights, n, target.weights, n)
        zs.append(float(np.max(np.abs(z))))
    worst = max(zs)
    return PeriodicityReport(worst, worst <= z_max, zs, "z")


def bin_tolerance(p: float, n: int, z: float = 4.0) -> float:
    return z * math.sqrt(p * (1 - p) / n)
