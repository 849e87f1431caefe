"""Orbit averages of the discrete Brownian shift ``theta_tau`` on a grid of mesh ``h``.

One orbit is one infinite increment stream ``(key, 0)`` of :class:`WienerGrid`;
``theta_{n tau} w`` is the same stream read from offset ``n tau / h``.  The
orbit is processed in chunks, so memory does not grow with ``N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .noise import WienerGrid, commensurate_steps
from .streams import random_keys, stream


@dataclass(frozen=True)
class CylinderFunctional:
    """``F(w) = fn(W(t_1), ..., W(t_k))`` with grid times inside ``depth`` tau-blocks."""

    name: str
    times: tuple
    fn: Callable
    tau: float
    depth: int

    def __post_init__(self):
        if not self.times or min(self.times) <= 0:
            raise ValueError("times must be positive")
        if max(self.times) > self.tau * self.depth * (1 + 1e-12):
            raise ValueError(f"{self.name}: times exceed depth {self.depth} blocks of tau")

    def grid_steps(self, h: float) -> np.ndarray:
        return np.atleast_1d(commensurate_steps(np.asarray(self.times, dtype=float), h))

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(values), dtype=float)


def standard_battery(tau: float) -> dict[str, tuple[CylinderFunctional, float]]:
    """The three functionals with their exact means."""
    return {
        "positive": (CylinderFunctional("positive", (tau,), lambda w: w[:, 0] > 0, tau, 1), 0.5),
        "square": (CylinderFunctional("square", (tau,), lambda w: w[:, 0] ** 2, tau, 1), tau),
        "both_positive": (
            CylinderFunctional("both_positive", (tau, 2 * tau), lambda w: (w[:, 0] > 0) & (w[:, 1] > 0), tau, 2),
            0.25 + math.asin(1 / math.sqrt(2)) / (2 * math.pi),
        ),
    }


def orthant_probability(rho: float) -> float:
    """``P(X > 0, Y > 0)`` for a standard bivariate normal with correlation ``rho``."""
    return 0.25 + math.asin(rho) / (2 * math.pi)


def orbit_values(F: CylinderFunctional, tau: float, N: int, h: float, key: int, chunk: int = 4096) -> np.ndarray:
    """``F(theta_{n tau} w)`` for ``n < N`` along the orbit of stream ``key``."""
    r = commensurate_steps(tau, h)
    steps = F.grid_steps(h)
    span = int(max(steps.max(), F.depth * r))
    grid = WienerGrid(h=h, horizon=h)  # only its increment generator is used
    key_arr = np.array([key], dtype=np.uint64)
    out = np.empty(N)
    for a in range(0, N, chunk):
        b = min(a + chunk, N)
        idx = np.arange(a * r, (b - 1) * r + span)
        inc = grid._draw(key_arr, idx)
        cum = np.concatenate([[0.0], np.cumsum(inc)])
        starts = (np.arange(a, b) - a) * r
        vals = cum[starts[:, None] + steps[None, :]] - cum[starts][:, None]
        out[a:b] = F(vals)
    return out


def block_bootstrap_se(x: np.ndarray, block: int, B: int = 200, seed: int = 0) -> float:
    """Moving-block bootstrap standard error of the mean of ``x``."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    block = max(1, int(block))
    nb = n // block
    if nb < 2:
        raise ValueError("series too short for the block length")
    prefix = np.concatenate([[0.0], np.cumsum(x)])
    block_sums = prefix[block:] - prefix[:-block]
    rng = stream(seed, 50, block)
    means = np.empty(B)
    for i0 in range(0, B, 20):
        reps = min(20, B - i0)
        starts = rng.integers(0, len(block_sums), size=(reps, nb))
        means[i0 : i0 + reps] = block_sums[starts].sum(axis=1) / (nb * block)
    return float(means.std(ddof=1))


@dataclass
class ShiftAverage:
    functional: str
    N: int
    estimate: float
    stderr: float
    tau: float
    h: float
    target: float | None = None
    running: tuple | None = None  # (n values, running averages)

    @property
    def z(self) -> float | None:
        if self.target is None:
            return None
        return (self.estimate - self.target) / self.stderr

    @property
    def passed(self) -> bool | None:
        return None if self.target is None else bool(abs(self.z) <= 4)

    def summary(self) -> dict:
        return {
            "functional": self.functional,
            "N": self.N,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "target": self.target,
            "pass": self.passed,
            "tau": self.tau,
            "h": self.h,
        }


def birkhoff_shift_average(F: CylinderFunctional, tau: float, N: int, h: float, seed: int,
                           target: float | None = None, block: int | None = None, B: int = 200,
                           points: int = 100) -> ShiftAverage:
    """``(1/N) sum_{n<N} F(theta_{n tau} w)`` along one orbit, with a block-bootstrap error."""
    if N < 100:
        raise ValueError("N must be at least 100")
    key = int(random_keys(stream(seed, 51), 1)[0])
    vals = orbit_values(F, tau, N, h, key)
    se = block_bootstrap_se(vals, F.depth if block is None else block, B, seed)
    marks = np.unique(np.linspace(1, N, min(points, N)).astype(np.int64))
    running = np.cumsum(vals)[marks - 1] / marks
    return ShiftAverage(F.name, N, float(vals.mean()), se, tau, h, target, (marks.tolist(), running.tolist()))


@dataclass
class LagCovariance:
    lag: int
    cov: float
    stderr: float

    @property
    def z(self) -> float:
        return self.cov / self.stderr if self.stderr > 0 else (0.0 if self.cov == 0 else math.inf)


def decorrelation(F: CylinderFunctional, G: CylinderFunctional, tau: float, lags, N: int, h: float,
                  seed: int, B: int = 200) -> list[LagCovariance]:
    """``cov(F, G o theta_{n tau})`` along one orbit for each lag ``n``."""
    lags = [int(l) for l in lags]
    if min(lags) < 0:
        raise ValueError("lags must be non-negative")
    total = N + max(lags)
    key = int(random_keys(stream(seed, 52), 1)[0])
    f = orbit_values(F, tau, total, h, key)
    g = orbit_values(G, tau, total, h, key)
    out = []
    for lag in lags:
        a = f[:N] - f[:N].mean()
        b = g[lag : lag + N] - g[lag : lag + N].mean()
        prod = a * b
        block = max(F.depth, G.depth) + lag
        out.append(LagCovariance(lag, float(prod.mean()), block_bootstrap_se(prod, block, B, seed)))
    return out


def iid_mean(F: CylinderFunctional, tau: float, n: int, h: float, seed: int) -> tuple[float, float]:
    """Mean and standard error of ``F`` over ``n`` independent grid paths."""
    grid = WienerGrid(h=h, horizon=F.depth * tau)
    omega = grid.sample(stream(seed, 53), n)
    vals = F(grid.path(omega, F.times))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


@dataclass
class KSReport:
    statistic: float
    critical: float
    pvalue: float

    @property
    def passed(self) -> bool:
        return self.statistic < self.critical


def regeneration_ks(h: float = 0.01, horizon: float = 1.0, n: int = 10_000, shift_by: float = 0.5,
                    seed: int = 0, alpha: float = 0.01) -> KSReport:
    """KS test of increments appended by a shift against fresh increments."""
    grid = WienerGrid(h=h, horizon=horizon)
    omega = grid.sample(stream(seed, 54), n)
    moved = grid.shift(shift_by, omega)
    regenerated = moved.values[:, -1]
    fresh = grid.sample(stream(seed, 55), n).values[:, -1]
    res = stats.ks_2samp(regenerated, fresh)
    critical = math.sqrt(-math.log(alpha / 2) / 2) * math.sqrt(2 / n)
    return KSReport(float(res.statistic), critical, float(res.pvalue))
