"""Measure-preserving noise systems (the base over which cocycles run).

Every system works on *batches* of noise states so Monte Carlo loops stay
vectorised:

===================  ==========================================  ============
system               batch representation                        time
===================  ==========================================  ============
IrrationalRotation   float array ``(n,)`` in [0, 1)              step or cont.
Torus2               float array ``(n, 2)`` of ``(r, x)``        continuous
BernoulliShift       :class:`SequenceState` of symbols           integer
WienerGrid           :class:`SequenceState` of N(0, h) steps     multiples of h
===================  ==========================================  ============

Sequence states are ``(key, offset)`` pairs into a counter-based i.i.d.
stream plus a cached window of values.  Shifting drops the first values of
the window and appends the next ones from the same stream, so
``shift(t, shift(s, w)) == shift(t + s, w)`` holds bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import HorizonExceeded, NonCommensurateTime
from .streams import counter_normal, counter_symbols, random_keys, stream

DEFAULT_ALPHA = math.sqrt(2.0) - 1.0
_TIME_RTOL = 1e-9


class RationalRotationWarning(UserWarning):
    """Rotation number is (numerically) rational; the system is not ergodic."""


def wrap(x):
    """Reduce to [0, 1) using ``x - floor(x)``."""
    y = np.array(x, dtype=float)
    y -= np.floor(y)
    if y.ndim == 0:
        return np.float64(0.0) if y >= 1.0 else y[()]
    y[y >= 1.0] = 0.0
    return y


def circle_distance(a, b):
    d = wrap(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.minimum(d, 1.0 - d)


def commensurate_steps(t, mesh: float):
    """Number of mesh steps in ``t``; rejects ``t`` off the mesh."""
    ratio = np.asarray(t, dtype=float) / mesh
    k = np.rint(ratio)
    if np.any(np.abs(ratio - k) > _TIME_RTOL * np.maximum(1.0, np.abs(ratio))):
        raise NonCommensurateTime(f"time {t!r} is not a multiple of {mesh!r}")
    k = k.astype(np.int64)
    return int(k) if k.ndim == 0 else k


def _looks_rational(alpha: float, max_den: int = 10_000) -> bool:
    frac = Fraction(alpha).limit_denominator(max_den)
    return abs(float(frac) - alpha) < 1e-12


@dataclass(frozen=True)
class SequenceState:
    """Batch of one-sided i.i.d. sequences.

    ``values[i, j]`` is entry ``offset[i] + j`` of the stream keyed by
    ``key[i]``.
    """

    key: np.ndarray
    offset: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.key)

    def take(self, idx) -> "SequenceState":
        return SequenceState(self.key[idx], self.offset[idx], self.values[idx])


class NoiseSystem:
    """Common interface; concrete systems are frozen dataclasses."""

    mesh: float | None = None
    two_sided: bool = False
    name = "noise"

    def sample(self, rng: np.random.Generator, n: int):
        raise NotImplementedError

    def shift(self, t, omega):
        raise NotImplementedError

    def distance(self, a, b) -> np.ndarray:
        raise NotImplementedError

    def batch_size(self, omega) -> int:
        return len(omega)

    def _check_time(self, t):
        if not self.two_sided and np.any(np.asarray(t) < 0):
            raise ValueError(f"{self.name} is one-sided; negative time {t!r}")
        if self.mesh is not None:
            return commensurate_steps(t, self.mesh)
        return None


@dataclass(frozen=True)
class IrrationalRotation(NoiseSystem):
    """Circle rotation ``x -> x + t*alpha``; ``step=None`` means continuous time."""

    alpha: float = DEFAULT_ALPHA
    step: float | None = 1.0
    name = "rotation"
    two_sided = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")
        if _looks_rational(self.alpha):
            warnings.warn(f"rotation number {self.alpha} is rational", RationalRotationWarning, stacklevel=3)

    @property
    def mesh(self):
        return self.step

    @property
    def rational(self) -> bool:
        return _looks_rational(self.alpha)

    def sample(self, rng, n):
        return rng.random(n)

    def shift(self, t, omega):
        k = self._check_time(t)
        if k is not None:
            angle = np.asarray(k) * self.alpha
        else:
            angle = np.asarray(t, dtype=float) * self.alpha
        return wrap(np.asarray(omega) + wrap(angle))

    def distance(self, a, b):
        return circle_distance(a, b)


@dataclass(frozen=True)
class Torus2(NoiseSystem):
    """Linear flow ``(r, x) -> (r + t, x + t*alpha)`` on the 2-torus."""

    alpha: float = DEFAULT_ALPHA
    name = "torus2"
    two_sided = True
    mesh = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if _looks_rational(self.alpha):
            warnings.warn(f"rotation number {self.alpha} is rational", RationalRotationWarning, stacklevel=3)

    def sample(self, rng, n):
        return rng.random((n, 2))

    def shift(self, t, omega):
        omega = np.asarray(omega, dtype=float)
        t = np.asarray(t, dtype=float)
        dr = wrap(t)
        dx = wrap(t * self.alpha)
        return np.stack([wrap(omega[..., 0] + dr), wrap(omega[..., 1] + dx)], axis=-1)

    def distance(self, a, b):
        d = circle_distance(a, b)
        return np.maximum(d[..., 0], d[..., 1])


class _SequenceSystem(NoiseSystem):
    window: int

    def _draw(self, key, index):
        raise NotImplementedError

    def values_at(self, omega: SequenceState, rel_index) -> np.ndarray:
        """Entries ``offset + rel_index`` of each sequence (lazy extension)."""
        rel = np.asarray(rel_index, dtype=np.int64)
        if rel.ndim == 0:
            return self._draw(omega.key, omega.offset + rel)
        return self._draw(omega.key[:, None], omega.offset[:, None] + rel[None, :])

    def from_keys(self, key, offset=None) -> SequenceState:
        key = np.asarray(key, dtype=np.uint64)
        if offset is None:
            offset = np.zeros(key.shape, dtype=np.int64)
        offset = np.asarray(offset, dtype=np.int64)
        values = self._draw(key[:, None], offset[:, None] + np.arange(self.window)[None, :])
        return SequenceState(key, offset, values)

    def sample(self, rng, n):
        return self.from_keys(random_keys(rng, n))

    def _shift_steps(self, k: int, omega: SequenceState) -> SequenceState:
        if k == 0:
            return omega
        w = self.window
        values = np.empty_like(omega.values)
        keep = max(w - k, 0)
        values[:, :keep] = omega.values[:, k:]
        fresh = np.arange(keep, w) + k
        values[:, keep:] = self._draw(omega.key[:, None], omega.offset[:, None] + fresh[None, :])
        return SequenceState(omega.key, omega.offset + k, values)

    def shift(self, t, omega):
        k = self._check_time(t)
        if np.ndim(k) != 0:
            raise ValueError("sequence shifts take a scalar time")
        return self._shift_steps(int(k), omega)

    def distance(self, a, b):
        same = (a.key == b.key) & (a.offset == b.offset) & np.all(a.values == b.values, axis=1)
        return np.where(same, 0.0, np.inf)


@dataclass(frozen=True)
class BernoulliShift(_SequenceSystem):
    """One-sided full shift on ``symbol_count`` equiprobable symbols."""

    symbol_count: int = 2
    window: int = 16
    name = "bernoulli"
    mesh = 1.0

    def __post_init__(self):
        if self.symbol_count < 1 or self.window < 1:
            raise ValueError("symbol_count and window must be >= 1")

    def _draw(self, key, index):
        return counter_symbols(key, index, self.symbol_count)

    def symbols(self, omega, rel_index):
        return self.values_at(omega, rel_index)


@dataclass(frozen=True)
class WienerGrid(_SequenceSystem):
    """Brownian increments of variance ``h`` on ``[0, horizon]``.

    ``shift(t)`` is the Brownian shift ``w(s) -> w(s + t) - w(t)`` for
    ``t`` a multiple of ``h`` not exceeding the horizon.
    """

    h: float = 0.01
    horizon: float = 1.0
    name = "wiener"

    def __post_init__(self):
        if self.h <= 0 or self.horizon <= 0:
            raise ValueError("h and horizon must be positive")
        ratio = self.horizon / self.h
        if abs(ratio - round(ratio)) > _TIME_RTOL * ratio:
            raise ValueError("horizon must be an integer multiple of h")

    @property
    def mesh(self):
        return self.h

    @property
    def window(self):
        return int(round(self.horizon / self.h))

    def _draw(self, key, index):
        return math.sqrt(self.h) * counter_normal(key, index)

    def shift(self, t, omega):
        k = self._check_time(t)
        if np.ndim(k) != 0:
            raise ValueError("sequence shifts take a scalar time")
        if k > self.window:
            raise HorizonExceeded(f"shift {t} beyond horizon {self.horizon}")
        return self._shift_steps(int(k), omega)

    def path(self, omega: SequenceState, times) -> np.ndarray:
        """``W(t)`` for each requested grid time (shape ``(n, len(times))``)."""
        steps = np.atleast_1d(commensurate_steps(np.asarray(times, dtype=float), self.h))
        if np.any(steps > self.window) or np.any(steps < 0):
            raise HorizonExceeded("evaluation time outside [0, horizon]")
        cum = np.concatenate([np.zeros((len(omega), 1)), np.cumsum(omega.values, axis=1)], axis=1)
        return cum[:, steps]


def shift(system: NoiseSystem, t, omega):
    """``theta_t omega``."""
    return system.shift(t, omega)


def sample_invariant(system: NoiseSystem, rng: np.random.Generator, n: int):
    """Draw ``n`` states from the invariant measure of ``system``."""
    return system.sample(rng, n)


@dataclass
class PreservationReport:
    mean_raw: float
    mean_shifted: float
    z_score: float
    n: int
    threshold: float = 4.0
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(abs(self.z_score) <= self.threshold)


def paired_z(a: np.ndarray, b: np.ndarray) -> float:
    """z statistic of ``mean(b - a)``; 0 when the pair is identical."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    mean = d.mean()
    sd = d.std(ddof=1) if len(d) > 1 else 0.0
    if sd == 0.0:
        return 0.0 if abs(mean) <= 1e-12 else math.copysign(math.inf, mean)
    return float(mean / (sd / math.sqrt(len(d))))


def check_preservation(system: NoiseSystem, t, phi: Callable, n: int, seed: int) -> PreservationReport:
    """Compare the mean of ``phi`` and ``phi o theta_t`` under the invariant law."""
    if n < 100:
        raise ValueError("n must be at least 100")
    omega = system.sample(stream(seed, 0), n)
    shifted = system.shift(t, omega)
    raw = np.asarray(phi(omega), dtype=float)
    moved = np.asarray(phi(shifted), dtype=float)
    return PreservationReport(float(raw.mean()), float(moved.mean()), paired_z(raw, moved), n)


def observable_battery(system: NoiseSystem) -> dict[str, Callable]:
    """Five bounded observables used by the preservation battery."""
    if isinstance(system, IrrationalRotation):
        return {
            "indicator_0_0.3": lambda w: (w < 0.3).astype(float),
            "sin": lambda w: np.sin(2 * np.pi * w),
            "cos": lambda w: np.cos(2 * np.pi * w),
            "identity": lambda w: w,
            "square": lambda w: w**2,
        }
    if isinstance(system, Torus2):
        return {
            "sin_x": lambda w: np.sin(2 * np.pi * w[:, 1]),
            "cos_r": lambda w: np.cos(2 * np.pi * w[:, 0]),
            "box": lambda w: ((w[:, 0] < 0.5) & (w[:, 1] < 0.3)).astype(float),
            "product": lambda w: w[:, 0] * w[:, 1],
            "cos_sum": lambda w: np.cos(2 * np.pi * (w[:, 0] + w[:, 1])),
        }
    if isinstance(system, BernoulliShift):
        return {
            "first_is_zero": lambda w: (w.values[:, 0] == 0).astype(float),
            "product_01": lambda w: (w.values[:, 0] * w.values[:, 1]).astype(float),
            "equal_01": lambda w: (w.values[:, 0] == w.values[:, 1]).astype(float),
            "third": lambda w: w.values[:, 2].astype(float),
            "sum_4": lambda w: w.values[:, :4].sum(axis=1).astype(float),
        }
    if isinstance(system, WienerGrid):
        q = system.horizon / 4
        return {
            "positive_q": lambda w: (system.path(w, [q])[:, 0] > 0).astype(float),
            "square_q_capped": lambda w: np.minimum(system.path(w, [q])[:, 0] ** 2, 1.0),
            "tanh_end": lambda w: np.tanh(system.path(w, [system.horizon])[:, 0]),
            "both_positive": lambda w: np.all(system.path(w, [q, 2 * q]) > 0, axis=1).astype(float),
            "increment_sign": lambda w: np.sign(np.diff(system.path(w, [q, 3 * q]), axis=1)[:, 0]),
        }
    raise TypeError(f"no battery for {type(system).__name__}")


def birkhoff_average(system: NoiseSystem, phi: Callable, omega, n_steps: int, step: float = 1.0,
                     chunk: int = 2048) -> np.ndarray:
    """``(1/N) sum_{k<N} phi(theta_{k step} w)`` for each start in the batch.

    Rotation-type systems are evaluated in closed form, chunk by chunk;
    sequence systems iterate the shift.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    if isinstance(system, (Torus2, IrrationalRotation)):
        omega = np.asarray(omega, dtype=float)
        total = np.zeros(len(omega))
        for start in range(0, n_steps, chunk):
            k = np.arange(start, min(start + chunk, n_steps), dtype=float)
            t = (k * step)[:, None]
            total += np.asarray(phi(system.shift(t, omega[None])), dtype=float).sum(axis=0)
        return total / n_steps
    total = np.zeros(system.batch_size(omega))
    for _ in range(n_steps):
        total += np.asarray(phi(omega), dtype=float)
        omega = system.shift(step, omega)
    return total / n_steps
