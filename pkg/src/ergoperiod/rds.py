"""Cocycles over noise systems, random periodic paths and the skew product.

Two builtin cocycle families:

* :class:`CircleShift` on the circle, ``Phi(t, w) x = x + t + f(theta_t w) - f(w)``
  over a rotation or torus noise.  Its random periodic path
  ``Y(s, w) = s + f(theta_s w)`` has period 1.
* :class:`FiniteMap` on ``{0, ..., n-1}`` driven by an i.i.d. symbol shift:
  each step applies the map selected by the current symbol.

Paths expose :meth:`RandomPeriodicPath.section`, the value
``Y(s, theta_{-s} w)`` carried by the fibre of the periodic measure at time
``s``.  Invertible noise uses the inverse shift; one-sided noise needs a path
that supplies the value directly (deterministic cycles and stationary paths do).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import HorizonExceeded
from .noise import (
    BernoulliShift,
    IrrationalRotation,
    NoiseSystem,
    Torus2,
    circle_distance,
    commensurate_steps,
    paired_z,
    wrap,
)
from .streams import stream

MINIMALITY_NOTE = "period as declared, minimality unverified"


class Cocycle:
    noise: NoiseSystem
    phase = "circle"  # or "finite"
    n_states: int | None = None

    def apply(self, t, omega, x):
        raise NotImplementedError

    def distance(self, a, b):
        if self.phase == "circle":
            return circle_distance(a, b)
        return np.where(np.asarray(a) == np.asarray(b), 0.0, 1.0)

    def sample_phase(self, rng, n):
        if self.phase == "circle":
            return rng.random(n)
        return rng.integers(0, self.n_states, size=n)

    def random_times(self, rng, n, scale=5.0):
        """Times on the noise mesh, suitable for identity checks."""
        mesh = self.noise.mesh
        if mesh is None:
            return rng.random(n) * scale
        return rng.integers(0, int(scale / mesh) + 1, size=n) * mesh


def _torus_or_rotation_x(omega):
    omega = np.asarray(omega, dtype=float)
    return omega if omega.ndim == 1 else omega[..., -1]


class CircleShift(Cocycle):
    """Unit-speed rotation perturbed by a coboundary of ``f``.

    ``f`` maps a batch of noise states to reals; the default is
    ``amplitude * sin(2 pi x)`` where ``x`` is the rotating coordinate.
    """

    phase = "circle"

    def __init__(self, noise: NoiseSystem | None = None, amplitude: float = 0.1, f: Callable | None = None):
        self.noise = noise if noise is not None else Torus2()
        if not isinstance(self.noise, (Torus2, IrrationalRotation)):
            raise TypeError("CircleShift needs rotation or torus noise")
        self.amplitude = amplitude
        self._f = f

    def f(self, omega):
        if self._f is not None:
            return np.asarray(self._f(omega), dtype=float)
        return self.amplitude * np.sin(2 * np.pi * _torus_or_rotation_x(omega))

    def apply(self, t, omega, x):
        self.noise._check_time(t)
        if np.any(np.asarray(t) < 0):
            raise ValueError("cocycle time must be non-negative")
        moved = self.noise.shift(t, omega)
        return wrap(np.asarray(x) + wrap(t) + self.f(moved) - self.f(omega))

    def orbit(self, t, omega, x):
        """``(theta_t w, Phi(t, w) x)`` with a single noise shift; ``t`` may be an array."""
        moved = self.noise.shift(t, omega)
        return moved, wrap(np.asarray(x) + wrap(t) + self.f(moved) - self.f(omega))


class FiniteMap(Cocycle):
    """Random map cocycle: symbol ``j`` moves state ``x`` to ``maps[j, x]``."""

    phase = "finite"

    def __init__(self, maps, noise: BernoulliShift | None = None):
        maps = np.asarray(maps, dtype=np.int64)
        if maps.ndim != 2:
            raise ValueError("maps must be a (symbols, states) array")
        k, n = maps.shape
        if maps.min() < 0 or maps.max() >= n:
            raise ValueError("maps must send states into range(n)")
        self.maps = maps
        self.n_states = n
        self.noise = noise if noise is not None else BernoulliShift(symbol_count=k)
        if self.noise.symbol_count != k:
            raise ValueError("noise symbol_count must equal the number of maps")

    def apply(self, t, omega, x):
        steps = commensurate_steps(t, 1.0)
        if np.ndim(steps) != 0 or steps < 0:
            raise ValueError("FiniteMap takes a scalar non-negative integer time")
        x = np.array(np.broadcast_to(x, (len(omega),)), dtype=np.int64)
        if steps == 0:
            return x
        symbols = self.noise.symbols(omega, np.arange(steps))
        for j in range(steps):
            x = self.maps[symbols[:, j], x]
        return x

    def transition_matrix(self) -> np.ndarray:
        k, n = self.maps.shape
        p = np.zeros((n, n))
        for j in range(k):
            np.add.at(p, (np.arange(n), self.maps[j]), 1.0 / k)
        return p


class RandomPeriodicPath:
    cocycle: Cocycle
    tau: float

    @property
    def noise(self):
        return self.cocycle.noise

    def eval(self, s, omega):
        """``Y(s, w)``."""
        raise NotImplementedError

    def section(self, s, omega):
        """``Y(s, theta_{-s} w)``: the fibre point of the periodic measure at ``s``."""
        if not self.noise.two_sided:
            raise NotImplementedError("one-sided noise: path must override section()")
        return self.eval(s, self.noise.shift(-np.asarray(s, dtype=float), omega))

    def sample_section(self, s, n, rng):
        """``n`` draws ``(w, Y(s, theta_{-s} w))`` from the periodic measure at ``s``."""
        omega = self.noise.sample(rng, n)
        return omega, self.section(s, omega)


class CirclePath(RandomPeriodicPath):
    """``Y(s, w) = s + f(theta_s w)`` for a :class:`CircleShift` (period 1)."""

    tau = 1.0

    def __init__(self, cocycle: CircleShift | None = None):
        self.cocycle = cocycle if cocycle is not None else CircleShift()

    def eval(self, s, omega):
        return wrap(wrap(s) + self.cocycle.f(self.noise.shift(s, omega)))

    def section(self, s, omega):
        return wrap(wrap(s) + self.cocycle.f(omega))


class CyclePath(RandomPeriodicPath):
    """Deterministic cycle shared by every symbol map of a :class:`FiniteMap`.

    ``tau`` defaults to the cycle length. Other values are accepted so traces can be
    taken on any mesh; the periodic identity then holds only when the cycle length
    divides ``tau``, which :func:`verify_rpp` reports.
    """

    def __init__(self, cocycle: FiniteMap, states, tau: int | None = None):
        states = [int(v) for v in states]
        if not states:
            raise ValueError("cycle must be non-empty")
        length = len(states)
        for i, v in enumerate(states):
            nxt = states[(i + 1) % length]
            if not np.all(cocycle.maps[:, v] == nxt):
                raise ValueError(f"state {v} is not carried to {nxt} by every symbol map")
        self.cocycle = cocycle
        self.states = np.asarray(states, dtype=np.int64)
        self.tau = length if tau is None else int(tau)
        if self.tau < 1:
            raise ValueError("tau must be a positive integer")

    def eval(self, s, omega):
        k = commensurate_steps(s, 1.0)
        return np.full(len(omega), self.states[k % len(self.states)], dtype=np.int64)

    def section(self, s, omega):
        return self.eval(s, omega)


class StationaryPath(RandomPeriodicPath):
    """``Y(s, w) = Y0(theta_s w)``; satisfies the periodic identities for any tau."""

    def __init__(self, cocycle: Cocycle, y0: Callable, tau: float = 1.0):
        self.cocycle = cocycle
        self.y0 = y0
        self.tau = tau

    def eval(self, s, omega):
        return np.asarray(self.y0(self.noise.shift(s, omega)))

    def section(self, s, omega):
        return np.asarray(self.y0(omega))


def cocycle_apply(cocycle: Cocycle, t, omega, x):
    return cocycle.apply(t, omega, x)


@dataclass
class VerificationReport:
    max_defect: float
    n_trials: int
    tol: float
    passed: bool
    details: dict

    def __bool__(self):
        return self.passed


def verify_cocycle(cocycle: Cocycle, n_trials: int, seed: int, tol: float = 1e-12) -> VerificationReport:
    """Max defect of ``Phi(t+s, w) x`` against ``Phi(t, theta_s w) Phi(s, w) x``."""
    rng = stream(seed, 0)
    noise = cocycle.noise
    omega = noise.sample(rng, n_trials)
    x = cocycle.sample_phase(rng, n_trials)
    if noise.mesh is None:
        t = cocycle.random_times(rng, n_trials)
        s = cocycle.random_times(rng, n_trials)
        lhs = cocycle.apply(t + s, omega, x)
        rhs = cocycle.apply(t, noise.shift(s, omega), cocycle.apply(s, omega, x))
        defect = cocycle.distance(lhs, rhs)
    else:
        # Scalar times per trial group keeps sequence shifts simple.
        defect = np.empty(n_trials)
        t_vals = cocycle.random_times(rng, 8)
        s_vals = cocycle.random_times(rng, 8)
        groups = np.array_split(np.arange(n_trials), 8)
        for t, s, idx in zip(t_vals, s_vals, groups):
            w, xi = _take(omega, idx), x[idx]
            lhs = cocycle.apply(t + s, w, xi)
            rhs = cocycle.apply(t, noise.shift(s, w), cocycle.apply(s, w, xi))
            defect[idx] = cocycle.distance(lhs, rhs)
    zero = cocycle.distance(cocycle.apply(0.0, omega, x), x)
    worst = float(max(np.max(defect), np.max(zero)))
    return VerificationReport(worst, n_trials, tol, worst <= tol, {"identity_defect": float(np.max(zero))})


def _take(omega, idx):
    return omega.take(idx) if hasattr(omega, "take") else omega[idx]


def verify_rpp(path: RandomPeriodicPath, n_trials: int, seed: int, tol: float = 1e-12) -> VerificationReport:
    """Check ``Phi(t, theta_s w) Y(s, w) = Y(t+s, w)`` and ``Y(s+tau, w) = Y(s, theta_tau w)``."""
    rng = stream(seed, 1)
    cocycle, noise = path.cocycle, path.noise
    omega = noise.sample(rng, n_trials)
    groups = np.array_split(np.arange(n_trials), 8 if noise.mesh is not None else 1)
    flow = np.empty(n_trials)
    period = np.empty(n_trials)
    for idx in groups:
        w = _take(omega, idx)
        if noise.mesh is None:
            t = cocycle.random_times(rng, len(idx))
            s = cocycle.random_times(rng, len(idx))
        else:
            t, s = cocycle.random_times(rng, 2)
        lhs = cocycle.apply(t, noise.shift(s, w), path.eval(s, w))
        flow[idx] = cocycle.distance(lhs, path.eval(t + s, w))
        period[idx] = cocycle.distance(path.eval(s + path.tau, w), path.eval(s, noise.shift(path.tau, w)))
    worst = float(max(flow.max(), period.max()))
    details = {"flow_defect": float(flow.max()), "period_defect": float(period.max()), "note": MINIMALITY_NOTE}
    return VerificationReport(worst, n_trials, tol, worst <= tol, details)


def verify_stationary(path: StationaryPath, n_trials: int, seed: int, tol: float = 1e-12) -> VerificationReport:
    """Check ``Phi(t, w) Y0(w) = Y0(theta_t w)``."""
    rng = stream(seed, 2)
    cocycle, noise = path.cocycle, path.noise
    omega = noise.sample(rng, n_trials)
    worst = 0.0
    for t in cocycle.random_times(rng, 8):
        lhs = cocycle.apply(t, omega, path.y0(omega))
        rhs = path.y0(noise.shift(t, omega))
        worst = max(worst, float(np.max(cocycle.distance(lhs, rhs))))
    return VerificationReport(worst, n_trials, tol, worst <= tol, {})


@dataclass
class SkewState:
    omega: object
    x: np.ndarray


def skew_step(cocycle: Cocycle, t, state: SkewState) -> SkewState:
    """``(theta_t w, Phi(t, w) x)``."""
    return SkewState(cocycle.noise.shift(t, state.omega), cocycle.apply(t, state.omega, state.x))


@dataclass
class TraceSet:
    s: float
    points: np.ndarray  # (n_omega, k_max - k_min + 1)
    window: tuple[int, int]

    def __post_init__(self):
        k_min, k_max = self.window
        if self.points.shape[-1] != k_max - k_min + 1:
            raise ValueError("trace length does not match window")


def trace_set(path: RandomPeriodicPath, s, omega, k_min: int, k_max: int) -> TraceSet:
    """``{Y(s + k tau, w) : k_min <= k <= k_max}`` for each ``w`` in the batch."""
    if k_max < k_min:
        raise ValueError("empty window")
    if not path.noise.two_sided and s + k_min * path.tau < 0:
        raise HorizonExceeded("one-sided noise cannot evaluate negative times")
    points = np.stack([path.eval(s + k * path.tau, omega) for k in range(k_min, k_max + 1)], axis=-1)
    return TraceSet(float(s), points, (k_min, k_max))


def check_skew_preservation(path: RandomPeriodicPath, s, phi: Callable, n: int, seed: int, t=None):
    """Paired z statistic for ``E_{mu_s}[phi o Theta_t] = E_{mu_s}[phi]`` (default ``t = tau``)."""
    t = path.tau if t is None else t
    omega, x = path.sample_section(s, n, stream(seed, 3))
    moved = skew_step(path.cocycle, t, SkewState(omega, x))
    return paired_z(phi(omega, x), phi(moved.omega, moved.x))
