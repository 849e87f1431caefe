"""Finite-state Markov semigroups and their periodic measures.

States are ``0 .. n-1`` in code; subsets are bitmasks with bit ``i`` for
state ``i``.  JSON output also lists subsets as 1-based state labels, the
convention used for matrix rows in configuration files.

``rho_s``-a.s. statements are evaluated on the support ``{x : rho_s(x) > atol}``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NotInvariant, NumericalDegeneracy, StateSpaceTooLarge
from .streams import stream

N_MAX = 20
_ROW_TOL = 1e-12


@dataclass(frozen=True)
class StochasticMatrix:
    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("entries must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > _ROW_TOL):
            raise ValueError("rows must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def power(self, k: int) -> np.ndarray:
        return np.linalg.matrix_power(self.p, int(k))

    @classmethod
    def from_csv(cls, path) -> "StochasticMatrix":
        with open(path, newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
        return cls(np.array(rows))


def as_matrix(p) -> StochasticMatrix:
    return p if isinstance(p, StochasticMatrix) else StochasticMatrix(np.asarray(p, dtype=float))


def mask_to_states(mask: int, one_based: bool = True) -> list[int]:
    base = 1 if one_based else 0
    return [i + base for i in range(mask.bit_length()) if (mask >> i) & 1]


def states_to_mask(states, one_based: bool = True) -> int:
    base = 1 if one_based else 0
    mask = 0
    for s in states:
        mask |= 1 << (int(s) - base)
    return mask


def communicating_classes(q: np.ndarray) -> tuple[list[np.ndarray], list[bool]]:
    """Strongly connected classes of the transition graph and whether each is closed."""
    adj = q > 0
    _, labels = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    classes, closed = [], []
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        outside = np.ones(len(q), dtype=bool)
        outside[members] = False
        classes.append(members)
        closed.append(not adj[np.ix_(members, outside)].any())
    return classes, closed


def recurrent_classes(q: np.ndarray) -> list[np.ndarray]:
    classes, closed = communicating_classes(q)
    return [c for c, ok in zip(classes, closed) if ok]


def stationary_on_class(q: np.ndarray, members: np.ndarray) -> np.ndarray:
    """Unique stationary vector of ``q`` restricted to a closed class (direct solve)."""
    sub = q[np.ix_(members, members)]
    k = len(members)
    a = sub.T - np.eye(k)
    a[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    if np.any(pi < -1e-10):
        raise NumericalDegeneracy("negative stationary weight")
    pi = np.clip(pi, 0.0, None)
    full = np.zeros(len(q))
    full[members] = pi / pi.sum()
    return full


@dataclass
class DiscretePeriodicMeasure:
    tau: int
    vectors: np.ndarray  # (tau, n)

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if self.tau < 1 or self.vectors.shape[0] != self.tau:
            raise ValueError("need exactly tau vectors")
        if np.any(np.abs(self.vectors.sum(axis=1) - 1.0) > 1e-10):
            raise ValueError("each vector must sum to 1")

    @classmethod
    def from_initial(cls, p, rho0, tau: int) -> "DiscretePeriodicMeasure":
        p = as_matrix(p).p
        vecs = [np.asarray(rho0, dtype=float)]
        for _ in range(tau - 1):
            vecs.append(vecs[-1] @ p)
        pm = cls(tau, np.array(vecs))
        pm.validate(p)
        return pm

    def validate(self, p, tol: float = 1e-10) -> float:
        p = as_matrix(p).p
        pushed = self.vectors @ p
        defect = float(np.abs(pushed - np.roll(self.vectors, -1, axis=0)).max())
        if defect > tol:
            raise NotInvariant(f"rho_k P != rho_(k+1 mod tau): defect {defect:.3g}")
        return defect

    def to_dict(self) -> dict:
        return {"tau": self.tau, "vectors": self.vectors.tolist()}

    @classmethod
    def from_dict(cls, data, p=None) -> "DiscretePeriodicMeasure":
        pm = cls(int(data["tau"]), np.asarray(data["vectors"]))
        if p is not None:
            pm.validate(p)
        return pm


def find_periodic_measures(p, tau: int) -> list[DiscretePeriodicMeasure]:
    """Extremal periodic measures: one per recurrent class of ``P^tau``."""
    p = as_matrix(p)
    if tau < 1:
        raise ValueError("tau must be >= 1")
    q = p.power(tau)
    classes = recurrent_classes(q)
    sv = np.linalg.svd(q.T - np.eye(p.n), compute_uv=False)
    null_dim = int(np.sum(sv < 1e-9 * max(1, p.n)))
    if null_dim != len(classes):
        raise NumericalDegeneracy(f"eigenvalue-1 multiplicity {null_dim} != {len(classes)} recurrent classes")
    return [DiscretePeriodicMeasure.from_initial(p, stationary_on_class(q, c), tau) for c in classes]


@dataclass
class InvariantSetFamily:
    s: int
    n: int
    masks: list[int]
    support: int

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "support": {"mask": self.support, "states": mask_to_states(self.support)},
            "subsets": [{"mask": m, "states": mask_to_states(m)} for m in self.masks],
        }


def _support_mask(rho, atol) -> int:
    return states_to_mask(np.flatnonzero(np.asarray(rho) > atol), one_based=False)


def _mask_rows(masks: np.ndarray, n: int) -> np.ndarray:
    return ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(float)


def invariant_masks_brute(q: np.ndarray, support: int, atol: float) -> list[int]:
    n = len(q)
    on = np.array([(support >> i) & 1 for i in range(n)], dtype=bool)
    found = []
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        ind = _mask_rows(masks, n)
        defect = np.abs(ind @ q.T - ind)[:, on]
        ok = defect.max(axis=1) <= atol if on.any() else np.ones(len(masks), dtype=bool)
        found.extend(int(m) for m in masks[ok])
    return found


def invariant_masks_structural(q: np.ndarray, support: int) -> list[int]:
    """Unions of recurrent classes of ``q`` on the support, times arbitrary off-support states."""
    n = len(q)
    on = [i for i in range(n) if (support >> i) & 1]
    off = [i for i in range(n) if not (support >> i) & 1]
    sub = q[np.ix_(on, on)]
    classes, closed = communicating_classes(sub)
    if not all(closed) or np.any(np.abs(sub.sum(axis=1) - 1) > 1e-10):
        raise ValueError("support is not closed under the kernel; use the brute-force path")
    class_masks = [states_to_mask([on[i] for i in c], one_based=False) for c in classes]
    unions = [0]
    for cm in class_masks:
        unions += [u | cm for u in unions]
    free = [0]
    for i in off:
        free += [f | (1 << i) for f in free]
    return sorted(u | f for u in unions for f in free)


def enumerate_invariant_sets(p, tau: int, rho_s, atol: float = 1e-12, s: int = 0,
                             method: str = "auto", n_max: int = N_MAX) -> InvariantSetFamily:
    """All ``Gamma`` with ``P^tau 1_Gamma = 1_Gamma`` on the support of ``rho_s``."""
    p = as_matrix(p)
    if p.n > n_max:
        raise StateSpaceTooLarge(f"{p.n} states exceeds the enumeration limit {n_max}")
    q = p.power(tau)
    support = _support_mask(rho_s, atol)
    if method == "auto":
        method = "brute" if p.n <= 14 else "structural"
    if method == "brute":
        masks = invariant_masks_brute(q, support, atol)
    elif method == "structural":
        masks = invariant_masks_structural(q, support)
    else:
        raise ValueError(f"unknown method {method!r}")
    return InvariantSetFamily(int(s), p.n, masks, support)


def _closed_under(p: np.ndarray, mask: int, atol: float) -> bool:
    ind = _mask_rows(np.array([mask]), len(p))[0]
    return bool(np.abs(p @ ind - ind).max() <= atol)


@dataclass
class PSErgodicityVerdict:
    per_s: list[bool]
    witnesses: list[dict | None]

    @property
    def ergodic(self) -> bool:
        return all(self.per_s)

    def __post_init__(self):
        for ok, w in zip(self.per_s, self.witnesses):
            if ok == (w is not None):
                raise ValueError("witness must be present exactly when the verdict is false")

    def to_dict(self) -> dict:
        return {"ps_ergodic": self.ergodic, "per_s": self.per_s, "witnesses": self.witnesses}


def is_ps_ergodic(p, tau: int, pm: DiscretePeriodicMeasure, atol: float = 1e-12,
                  method: str = "auto") -> PSErgodicityVerdict:
    """Decide ergodicity of each ``rho_s`` for the ``tau``-step chain by set enumeration.

    A witness is a ``P^tau``-invariant set with ``rho_s(Gamma)`` strictly
    between ``atol`` and ``1 - atol``.  Sets invariant under one step of
    ``P`` are preferred, then fewer states, then the smaller bitmask.
    """
    p = as_matrix(p)
    pm.validate(p)
    per_s, witnesses = [], []
    for s in range(pm.tau):
        rho = pm.vectors[s]
        fam = enumerate_invariant_sets(p, tau, rho, atol, s=s, method=method)
        bad = []
        for mask in fam.masks:
            mass = float(rho @ _mask_rows(np.array([mask]), p.n)[0])
            if atol < mass < 1 - atol:
                bad.append((not _closed_under(p.p, mask, atol), bin(mask).count("1"), mask, mass))
        if bad:
            _, _, mask, mass = min(bad)
            per_s.append(False)
            witnesses.append({"s": s, "mask": mask, "states": mask_to_states(mask), "mass": mass})
        else:
            per_s.append(True)
            witnesses.append(None)
    return PSErgodicityVerdict(per_s, witnesses)


def ps_ergodic_structural(p, tau: int, pm: DiscretePeriodicMeasure, atol: float = 1e-12) -> list[bool]:
    """Class-structure oracle: ``rho_s`` is ergodic iff its support sits in one
    recurrent class of ``P^tau`` and it equals that class's stationary vector."""
    p = as_matrix(p)
    q = p.power(tau)
    classes = recurrent_classes(q)
    out = []
    for rho in pm.vectors:
        supp = set(np.flatnonzero(rho > atol).tolist())
        verdict = False
        for c in classes:
            if supp <= set(c.tolist()):
                verdict = bool(np.abs(stationary_on_class(q, c) - rho).max() <= 1e-8)
                break
        out.append(verdict)
    return out


@dataclass
class CrossCheck:
    agree: bool
    enumeration: list[bool]
    structural: list[bool]


def cross_check_ps(p, tau: int, pm: DiscretePeriodicMeasure, atol: float = 1e-12) -> CrossCheck:
    brute = is_ps_ergodic(p, tau, pm, atol, method="brute").per_s
    struct = ps_ergodic_structural(p, tau, pm, atol)
    return CrossCheck(brute == struct, brute, struct)


@dataclass
class ConditionAReport:
    violations: int
    n_paths: int
    window: int
    per_gamma: list[dict] = field(default_factory=list)

    @property
    def strengthened_violations(self) -> int:
        """Sets whose sampled traces are split or fall on both sides across paths."""
        return sum(not g["same_side"] for g in self.per_gamma)

    @property
    def holds(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "violations": self.violations,
            "strengthened_violations": self.strengthened_violations,
            "n_paths": self.n_paths,
            "window": self.window,
            "per_gamma": self.per_gamma,
        }


def trace_masks(points: np.ndarray) -> np.ndarray:
    bits = np.left_shift(np.int64(1), np.asarray(points, dtype=np.int64))
    return np.bitwise_or.reduce(bits, axis=-1)


def check_condition_A(path, s: int, fam: InvariantSetFamily | list[int], n_paths: int, window: int,
                      seed: int) -> ConditionAReport:
    """Count sampled traces ``{Y(s + k tau, w) : 0 <= k < window}`` that split an invariant set."""
    from .rds import trace_set

    if window < 2:
        raise ValueError("window must be at least 2")
    masks = fam.masks if isinstance(fam, InvariantSetFamily) else [int(m) for m in fam]
    omega = path.noise.sample(stream(seed, 20, s), n_paths)
    tm = trace_masks(trace_set(path, s, omega, 0, window - 1).points)
    violations = 0
    per_gamma = []
    for mask in masks:
        inside = (tm & ~np.int64(mask)) == 0
        outside = (tm & np.int64(mask)) == 0
        split = ~inside & ~outside
        violations += int(split.sum())
        same = not split.any() and (inside.all() or outside.all())
        per_gamma.append({
            "mask": mask,
            "states": mask_to_states(mask),
            "inside": int(inside.sum()),
            "outside": int(outside.sum()),
            "split": int(split.sum()),
            "same_side": bool(same),
        })
    return ConditionAReport(violations, n_paths, window, per_gamma)


def semigroup_apply(p, k: int, phi) -> np.ndarray:
    """``(P_k phi)(x) = sum_y P^k(x, y) phi(y)``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return as_matrix(p).power(k) @ np.asarray(phi, dtype=float)


def fdd(p, rho, times) -> np.ndarray:
    """Exact finite-dimensional law of the canonical process at ``times``."""
    p = as_matrix(p)
    times = [int(t) for t in times]
    law = np.asarray(rho, dtype=float)
    for a, b in zip(times, times[1:]):
        law = law[..., None] * p.power(b - a)
    return law


def _draw(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (u[:, None] > cum).sum(axis=1)
    return np.minimum(idx, cum.shape[-1] - 1)


def sample_canonical(p, rho, times, n_paths: int, seed: int) -> np.ndarray:
    """I.i.d. canonical-process tuples ``(x_{t_1}, ..., x_{t_n})`` with ``x_{t_1} ~ rho``."""
    p = as_matrix(p)
    times = [int(t) for t in times]
    if any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be non-negative and strictly increasing")
    rng = stream(seed, 30)
    out = np.empty((n_paths, len(times)), dtype=np.int64)
    out[:, 0] = _draw(np.cumsum(np.asarray(rho, dtype=float))[None, :], rng.random(n_paths))
    for j in range(1, len(times)):
        cum = np.cumsum(p.power(times[j] - times[j - 1]), axis=1)
        u = rng.random(n_paths)
        rows = cum[out[:, j - 1]]
        out[:, j] = np.minimum((u[:, None] > rows).sum(axis=1), p.n - 1)
    return out


@dataclass
class ShiftInvarianceReport:
    mean_raw: float
    mean_shifted: float
    z_score: float
    passed: bool


def check_shift_invariance_canonical(p, rho, phi, times, k: int, n: int, seed: int) -> ShiftInvarianceReport:
    """Compare ``E[phi(x_{t_1..t_m})]`` with ``E[phi(x_{t_1+k..t_m+k})]`` on shared paths."""
    from .noise import paired_z

    p = as_matrix(p)
    rho = np.asarray(rho, dtype=float)
    if np.abs(rho @ p.power(k) - rho).max() > 1e-10:
        raise NotInvariant("rho P^k != rho")
    times = [int(t) for t in times]
    union = sorted(set(times) | {t + k for t in times})
    pos = {t: i for i, t in enumerate(union)}
    paths = sample_canonical(p, rho, union, n, seed)
    raw = np.asarray(phi(paths[:, [pos[t] for t in times]]), dtype=float)
    moved = np.asarray(phi(paths[:, [pos[t + k] for t in times]]), dtype=float)
    z = paired_z(raw, moved)
    return ShiftInvarianceReport(float(raw.mean()), float(moved.mean()), z, abs(z) <= 4)


@dataclass
class ChainInstance:
    maps: np.ndarray
    tau: int
    cycle: list[int] | None

    @property
    def matrix(self) -> StochasticMatrix:
        from .rds import FiniteMap

        return StochasticMatrix(FiniteMap(self.maps).transition_matrix())


def random_instance(rng: np.random.Generator, n_max: int = 6, tau_max: int = 3,
                    plant_cycle: bool | None = None) -> ChainInstance:
    """Random i.i.d.-symbol chain with sparse successor sets.

    With ``plant_cycle`` a deterministic cycle of length ``tau`` is forced into
    every symbol map, so the chain carries a deterministic random periodic path.
    """
    n = int(rng.integers(1, n_max + 1))
    tau = int(rng.integers(1, tau_max + 1))
    k = int(rng.integers(1, 4))
    fanout = rng.integers(1, 3, size=n)
    successors = [rng.choice(n, size=min(int(f), n), replace=False) for f in fanout]
    maps = np.array([[rng.choice(successors[x]) for x in range(n)] for _ in range(k)], dtype=np.int64)
    if plant_cycle is None:
        plant_cycle = bool(rng.random() < 0.5)
    cycle = None
    if plant_cycle and tau <= n:
        cycle = [int(v) for v in rng.choice(n, size=tau, replace=False)]
        for i, v in enumerate(cycle):
            maps[:, v] = cycle[(i + 1) % tau]
    return ChainInstance(maps, tau, cycle)


def read_matrix(spec) -> StochasticMatrix:
    """Matrix from a CSV path or inline nested list."""
    if isinstance(spec, (str, Path)):
        return StochasticMatrix.from_csv(spec)
    return StochasticMatrix(np.asarray(spec, dtype=float))
