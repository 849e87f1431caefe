"""Upper expectations generated by periodic measure families.

``UpperExpectation`` takes the max of linear expectations over a finite
family (the grid surrogate of a sup over ``s in [0, tau)``).  Members only
need ``expect(phi)`` and ``prob(A)``; besides :class:`EmpiricalMeasure` this
module supplies uniform laws on intervals and sampled skew-product laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import GridIncommensurate, NonCommensurateTime, NotInvariant, PartitionMismatch, SetNotRepresentable
from .markov import StochasticMatrix, as_matrix
from .measures import EmpiricalMeasure, PeriodicMeasureFamily
from .noise import DEFAULT_ALPHA, commensurate_steps, wrap
from .rds import RandomPeriodicPath, SkewState, skew_step
from .streams import map_tasks, stream

_EDGE_TOL = 1e-12


@dataclass
class UpperExpectation:
    members: list
    tau: float
    s_grid: np.ndarray | None = None

    def __post_init__(self):
        if not self.members:
            raise ValueError("family must be non-empty")
        if self.s_grid is None:
            self.s_grid = np.arange(len(self.members)) * (self.tau / len(self.members))
        self.s_grid = np.asarray(self.s_grid, dtype=float)
        parts = {getattr(m, "partition", None) for m in self.members}
        if len(parts) > 1:
            raise PartitionMismatch("family members use different partitions")

    @classmethod
    def from_family(cls, family: PeriodicMeasureFamily) -> "UpperExpectation":
        return cls(list(family.measures), family.tau, family.s_grid)

    @classmethod
    def from_vectors(cls, vectors, tau: float | None = None) -> "UpperExpectation":
        return cls.from_family(PeriodicMeasureFamily.from_vectors(vectors, tau))

    @property
    def m(self) -> int:
        return len(self.members)

    def values(self, phi) -> np.ndarray:
        return np.array([m.expect(phi) for m in self.members])

    def upper_expect(self, phi) -> float:
        return float(self.values(phi).max())

    def argmax(self, phi) -> float:
        return float(self.s_grid[int(np.argmax(self.values(phi)))])

    def capacity(self, subset) -> float:
        return float(max(m.prob(subset) for m in self.members))


def upper_expect(ue: UpperExpectation, phi) -> float:
    return ue.upper_expect(phi)


def capacity(ue: UpperExpectation, subset) -> float:
    return ue.capacity(subset)


@dataclass(frozen=True)
class IntervalSet:
    """Finite union of half-open intervals ``[a, b)`` (normalised: sorted, disjoint)."""

    intervals: tuple = ()

    def __post_init__(self):
        spans = sorted((float(a), float(b)) for a, b in self.intervals if b - a > _EDGE_TOL)
        merged: list[list[float]] = []
        for a, b in spans:
            if merged and a <= merged[-1][1] + _EDGE_TOL:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        object.__setattr__(self, "intervals", tuple((a, b) for a, b in merged))

    def length_in(self, lo: float, hi: float) -> float:
        return sum(max(0.0, min(b, hi) - max(a, lo)) for a, b in self.intervals)

    def indicator(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (x >= a) & (x < b)
        return out

    def complement(self, lo: float, hi: float) -> "IntervalSet":
        gaps, cur = [], lo
        for a, b in self.intervals:
            if a > cur:
                gaps.append((cur, min(a, hi)))
            cur = max(cur, b)
        if cur < hi:
            gaps.append((cur, hi))
        return IntervalSet(tuple(gaps))

    def close_to(self, other: "IntervalSet", tol: float = 1e-10) -> bool:
        if len(self.intervals) != len(other.intervals):
            return False
        return all(abs(a - c) <= tol and abs(b - d) <= tol for (a, b), (c, d) in zip(self.intervals, other.intervals))


@dataclass(frozen=True)
class UniformInterval:
    """Lebesgue probability on ``[lo, hi)``."""

    lo: float
    hi: float

    def prob(self, subset) -> float:
        if not isinstance(subset, IntervalSet):
            raise SetNotRepresentable("sets on an interval space must be IntervalSet")
        return subset.length_in(self.lo, self.hi) / (self.hi - self.lo)

    def expect(self, phi) -> float:
        if isinstance(phi, IntervalSet):
            return self.prob(phi)
        if not callable(phi):
            raise PartitionMismatch("observable must be callable or an IntervalSet")
        value, _ = integrate.quad(lambda x: float(phi(x)), self.lo, self.hi, limit=200)
        return value / (self.hi - self.lo)


class SkewSample:
    """Monte Carlo stand-in for ``mu_s``: draws ``(w, Y(s, theta_{-s} w))``."""

    def __init__(self, path: RandomPeriodicPath, s: float, n: int, seed: int, stream_id: int = 0):
        self.path, self.s, self.n = path, float(s), n
        self.omega, self.x = path.sample_section(s, n, stream(seed, 40, stream_id))

    def values(self, phi: Callable) -> np.ndarray:
        return np.asarray(phi(self.omega, self.x), dtype=float)

    def expect(self, phi: Callable) -> float:
        return float(self.values(phi).mean())

    def prob(self, subset) -> float:
        return self.expect(lambda w, x: subset(w, x))


@dataclass
class InvarianceReport:
    max_defect: float
    passed: bool
    statistic: str  # "abs" or "z"
    rows: list = field(default_factory=list)


def check_sublinear_invariance(system, ue: UpperExpectation, battery: dict, steps: Sequence,
                               tol: float = 1e-12, z_max: float = 4.0, n: int = 20_000,
                               seed: int = 0) -> InvarianceReport:
    """``T[P_k phi] = T[phi]`` on finite chains; on a random periodic path, the
    per-grid identity ``E_{mu_{s_i}}[phi o Theta_t] = E_{mu_{s_i + t}}[phi]``
    is z-tested with independent samples and the sup values are reported.
    """
    if isinstance(system, (StochasticMatrix, np.ndarray)):
        p = as_matrix(system)
        rows, worst = [], 0.0
        for name, phi in battery.items():
            phi = np.asarray(phi, dtype=float)
            base = ue.upper_expect(phi)
            for k in steps:
                moved = ue.upper_expect(p.power(int(k)) @ phi)
                d = abs(moved - base)
                worst = max(worst, d)
                rows.append({"observable": name, "k": int(k), "upper": base, "upper_shifted": moved, "defect": d})
        return InvarianceReport(worst, worst <= tol, "abs", rows)

    path: RandomPeriodicPath = system
    grid_step = ue.tau / ue.m
    rows, worst = [], 0.0
    for t in steps:
        ratio = float(t) / grid_step
        if abs(ratio - round(ratio)) > 1e-9:
            raise GridIncommensurate(f"t={t} does not permute the s-grid (step {grid_step})")
        j = int(round(ratio))
        for i, s in enumerate(ue.s_grid):
            omega, x = path.sample_section(s, n, stream(seed, 41, i))
            moved = skew_step(path.cocycle, t, SkewState(omega, x))
            target_s = ue.s_grid[(i + j) % ue.m]
            omega2, x2 = path.sample_section(target_s, n, stream(seed, 42, i))
            for name, phi in battery.items():
                a = np.asarray(phi(moved.omega, moved.x), dtype=float)
                b = np.asarray(phi(omega2, x2), dtype=float)
                se = math.sqrt(a.var(ddof=1) / n + b.var(ddof=1) / n)
                diff = a.mean() - b.mean()
                z = 0.0 if se == 0 and abs(diff) < 1e-12 else (diff / se if se > 0 else math.inf)
                worst = max(worst, abs(z))
                rows.append({"observable": name, "t": float(t), "s": float(s), "z": float(z)})
    return InvarianceReport(worst, worst <= z_max, "z", rows)


class FiniteSystem:
    """A map on ``{0, ..., n-1}`` given by its table; invariant sets are unions of orbits."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.int64)
        n = len(self.table)
        if self.table.min() < 0 or self.table.max() >= n:
            raise ValueError("map must send states into range(n)")
        if len(np.unique(self.table)) != n:
            raise ValueError("finite systems here must be permutations")
        self.n = n

    def orbits(self) -> list[np.ndarray]:
        seen = np.zeros(self.n, dtype=bool)
        out = []
        for start in range(self.n):
            if seen[start]:
                continue
            cyc, x = [], start
            while not seen[x]:
                seen[x] = True
                cyc.append(x)
                x = self.table[x]
            out.append(np.array(sorted(cyc)))
        return out

    def preimage(self, indicator) -> np.ndarray:
        return np.asarray(indicator, dtype=bool)[self.table]

    def is_invariant(self, indicator) -> bool:
        ind = np.asarray(indicator, dtype=bool)
        return bool(np.array_equal(self.preimage(ind), ind))

    def invariant_sets(self, limit: int = 1 << 16) -> list[np.ndarray]:
        orbs = self.orbits()
        if (1 << len(orbs)) > limit:
            raise ValueError(f"{len(orbs)} orbits give more than {limit} invariant sets")
        out = []
        for bits in range(1 << len(orbs)):
            ind = np.zeros(self.n, dtype=bool)
            for j, o in enumerate(orbs):
                if (bits >> j) & 1:
                    ind[o] = True
            out.append(ind)
        return out


@dataclass
class TwoIntervalSurrogate:
    """Two ``N``-point circles; copy one rotates by ``step`` and jumps to copy two,
    which jumps straight back.  ``step / N`` plays the role of the rotation number."""

    N: int
    step: int

    @property
    def system(self) -> FiniteSystem:
        i = np.arange(self.N)
        table = np.concatenate([self.N + (i + self.step) % self.N, i])
        return FiniteSystem(table)

    def upper(self) -> UpperExpectation:
        first = np.r_[np.full(self.N, 1.0 / self.N), np.zeros(self.N)]
        return UpperExpectation([EmpiricalMeasure.exact(first), EmpiricalMeasure.exact(first[::-1])], tau=2.0)


@dataclass(frozen=True)
class TwoIntervalRotation:
    """``x -> (x + alpha) mod 1 + 1`` on ``[0, 1)`` and ``x -> x - 1`` on ``[1, 2)``."""

    alpha: float = DEFAULT_ALPHA

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 1.0, wrap(x + self.alpha) + 1.0, x - 1.0)

    def upper(self) -> UpperExpectation:
        return UpperExpectation([UniformInterval(0.0, 1.0), UniformInterval(1.0, 2.0)], tau=2.0)

    def preimage(self, subset: IntervalSet) -> IntervalSet:
        pieces = []
        for a, b in subset.intervals:
            lo, hi = max(a, 1.0), min(b, 2.0)
            if hi > lo:  # x in [0, 1) with wrap(x + alpha) in [lo - 1, hi - 1)
                u, v = lo - 1.0 - self.alpha, hi - 1.0 - self.alpha
                u, v = u - math.floor(u), v - math.floor(u)
                if v <= 1.0:
                    pieces.append((u, v))
                else:
                    pieces += [(u, 1.0), (0.0, v - 1.0)]
            lo, hi = max(a, 0.0), min(b, 1.0)
            if hi > lo:
                pieces.append((lo + 1.0, hi + 1.0))
        return IntervalSet(tuple(pieces))

    def is_invariant(self, subset: IntervalSet) -> bool:
        return self.preimage(subset).close_to(subset)


@dataclass
class ErgodicVerdict:
    passed: bool
    v_set: float
    v_complement: float
    label: str


def sublinear_ergodic_check(system, ue: UpperExpectation, candidates, atol: float = 1e-12) -> list[ErgodicVerdict]:
    """For invariant ``B``: pass iff ``V(B) <= atol`` or ``V(B^c) <= atol``.

    Candidates are boolean indicators (finite systems) or :class:`IntervalSet`
    (the interval system).  A non-invariant candidate raises :class:`NotInvariant`.
    """
    out = []
    for idx, b in enumerate(candidates):
        if isinstance(b, IntervalSet):
            if not system.is_invariant(b):
                raise NotInvariant(f"candidate {idx} {b.intervals} is not invariant")
            comp = b.complement(0.0, 2.0)
            label = str(list(b.intervals))
        else:
            b = np.asarray(b, dtype=bool)
            if not system.is_invariant(b):
                raise NotInvariant(f"candidate {idx} is not invariant")
            comp = ~b
            label = str(np.flatnonzero(b).tolist())
        vb, vc = ue.capacity(b), ue.capacity(comp)
        out.append(ErgodicVerdict(bool(vb <= atol or vc <= atol), vb, vc, label))
    return out


@dataclass
class QSReport:
    """Per-``s`` fraction of paths whose time average misses the target by more than ``epsilon``."""

    s_grid: np.ndarray
    horizons: list
    fractions: np.ndarray  # (len(horizons), m)
    epsilon: float
    target: float
    delta: float
    n_paths: int

    def max_fraction(self, T=None) -> float:
        row = -1 if T is None else self.horizons.index(T)
        return float(self.fractions[row].max())

    def rows(self) -> list[dict]:
        return [
            {"s": float(s), "fraction": float(self.fractions[i, j]), "T": float(T), "epsilon": self.epsilon}
            for i, T in enumerate(self.horizons)
            for j, s in enumerate(self.s_grid)
        ]

    def nonincreasing(self) -> bool:
        maxima = self.fractions.max(axis=1)
        return bool(np.all(np.diff(maxima) <= 0))


def estimate_target(path: RandomPeriodicPath, xi: Callable, s_grid, n: int, seed: int) -> float:
    """Grid mean of ``E_{mu_s}[xi]`` by Monte Carlo (left-endpoint quadrature)."""
    vals = [SkewSample(path, s, n, seed, i).expect(xi) for i, s in enumerate(s_grid)]
    return float(np.mean(vals))


def _time_average_closed_form(path, battery, omega, x0, delta, checkpoints, chunk=512):
    cocycle, noise = path.cocycle, path.noise
    totals = {name: np.zeros(len(x0)) for name in battery}
    out, done = [], 0
    for stop in checkpoints:
        while done < stop:
            k = np.arange(done, min(done + chunk, stop), dtype=float)
            t = (k * delta)[:, None]
            if hasattr(cocycle, "orbit"):
                w, x = cocycle.orbit(t, omega[None], x0)
            else:
                w, x = noise.shift(t, omega[None]), cocycle.apply(t, omega, x0)
            for name, xi in battery.items():
                totals[name] += np.broadcast_to(np.asarray(xi(w, x), dtype=float), x.shape).sum(axis=0)
            done += len(k)
        out.append({name: tot / stop for name, tot in totals.items()})
    return out


def _time_average_iterated(path, battery, omega, x0, delta, checkpoints):
    state = SkewState(omega, x0)
    totals = {name: np.zeros(len(x0)) for name in battery}
    out = []
    for k in range(1, checkpoints[-1] + 1):
        for name, xi in battery.items():
            totals[name] += np.broadcast_to(np.asarray(xi(state.omega, state.x), dtype=float), np.shape(x0))
        state = skew_step(path.cocycle, delta, state)
        if k in checkpoints:
            out.append({name: tot / k for name, tot in totals.items()})
    return out


def birkhoff_qs_lln(path: RandomPeriodicPath, xi, horizons, delta: float, n_paths: int,
                    m: int = 16, epsilon: float = 0.05, seed: int = 0, target=None,
                    n_target: int = 100_000, workers: int = 1):
    """Time averages ``(delta / T) sum_{k < T/delta} xi(Theta_{k delta}(w, Y(s, theta_{-s} w)))``.

    Every horizon reuses the same starts, so the curves over ``T`` share seeds.
    ``xi`` may be a dict of observables sharing one trajectory per start; the
    result is then a dict of reports.  ``target`` (a number or a dict) defaults
    to a Monte Carlo estimate of the grid mean of ``E_{mu_s}[xi]``.
    """
    single = callable(xi)
    battery = {"xi": xi} if single else dict(xi)
    if single and target is not None:
        target = {"xi": target}
    target = dict(target or {})
    horizons = sorted(float(T) for T in np.atleast_1d(horizons))
    steps = [commensurate_steps(T, delta) for T in horizons]
    if min(steps) < 1:
        raise ValueError("horizons must be at least one mesh step")
    if path.noise.mesh is not None:
        commensurate_steps(delta, path.noise.mesh)
    s_grid = np.arange(m) * (path.tau / m)
    for name, fn in battery.items():
        if target.get(name) is None:
            target[name] = estimate_target(path, fn, s_grid, n_target, seed)
    runner = _time_average_closed_form if path.noise.mesh is None else _time_average_iterated
    fractions = {name: np.zeros((len(horizons), m)) for name in battery}

    def task(j):
        omega, x0 = path.sample_section(s_grid[j], n_paths, stream(seed, 43, j))
        return runner(path, battery, omega, x0, delta, steps)

    for j, result in enumerate(map_tasks(task, range(m), workers)):
        for i, avgs in enumerate(result):
            for name, avg in avgs.items():
                fractions[name][i, j] = float(np.mean(np.abs(avg - target[name]) > epsilon))
    reports = {
        name: QSReport(s_grid, horizons, fractions[name], float(epsilon), float(target[name]), float(delta), n_paths)
        for name in battery
    }
    return reports["xi"] if single else reports


def canonical_sublinear_expect(p, ue: UpperExpectation, times, phi) -> float:
    """Backward recursion: contract the last coordinate with ``P^{t_j - t_{j-1}}``
    evaluated at the previous coordinate, then apply the upper expectation to the
    remaining function of ``x_1``."""
    p = as_matrix(p)
    times = [int(t) for t in times]
    if any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be non-negative and strictly increasing")
    cur = np.asarray(phi, dtype=float)
    if cur.shape != (p.n,) * len(times):
        raise PartitionMismatch(f"phi must have shape {(p.n,) * len(times)}")
    for j in range(len(times) - 1, 0, -1):
        kernel = p.power(times[j] - times[j - 1])
        cur = np.einsum("...ay,ay->...a", cur, kernel)
    return ue.upper_expect(cur)


@dataclass
class ErgodicityForms:
    ergodic: bool
    eventual_form: bool
    symmetric_difference_form: bool

    @property
    def consistent(self) -> bool:
        return self.ergodic == self.eventual_form == self.symmetric_difference_form


def ergodicity_forms_check(table, weights, atol: float = 1e-12) -> ErgodicityForms:
    """Three characterisations of ergodicity for a permutation with a weight vector.

    (a) every invariant set has mass 0 or 1;
    (b) every ``A`` with ``P(U_{t >= T} theta^{-t} A  sym-diff  A) = 0`` for all ``T`` has mass 0 or 1;
    (c) every ``A`` with ``P(U_t (theta^{-t} A  sym-diff  A)) = 0`` has mass 0 or 1.
    Times range over one full period of the permutation, after which everything repeats.
    """
    fs = FiniteSystem(table)
    w = np.asarray(weights, dtype=float)
    if abs(w.sum() - 1) > 1e-12 or np.any(w < 0):
        raise ValueError("weights must be a probability vector")
    if np.any(np.abs(w[fs.table] - w) > 1e-12):
        raise NotInvariant("weights are not preserved by the map")
    n = fs.n
    if n > 16:
        raise ValueError("brute force limited to 16 states")
    period = math.lcm(*[len(o) for o in fs.orbits()])
    powers = [np.arange(n)]
    for _ in range(period - 1):
        powers.append(fs.table[powers[-1]])

    def trivial(ind):
        mass = float(w[ind].sum())
        return mass <= atol or mass >= 1 - atol

    a_ok = all(trivial(ind) for ind in fs.invariant_sets())
    b_ok = c_ok = True
    for bits in range(1 << n):
        ind = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        pre = [ind[pw] for pw in powers]  # theta^{-t} A for t = 0 .. period-1
        sym = np.zeros(n, dtype=bool)
        for q in pre:
            sym |= q ^ ind
        if w[sym].sum() <= atol and not trivial(ind):
            c_ok = False
        # U_{t >= T} theta^{-t} A is periodic in T with the same period
        eventual = all(
            w[np.logical_or.reduce([pre[(T + t) % period] for t in range(period)]) ^ ind].sum() <= atol
            for T in range(period)
        )
        if eventual and not trivial(ind):
            b_ok = False
    return ErgodicityForms(a_ok, b_ok, c_ok)
