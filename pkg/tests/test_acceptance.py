"""Acceptance criteria 1-11, each timed against its runtime budget.

A summary line per criterion is printed at the end of the pytest run.
"""

import functools
import itertools
import math

import numpy as np
import pytest

from ergoperiod.markov import (
    DiscretePeriodicMeasure,
    StochasticMatrix,
    check_condition_A,
    cross_check_ps,
    enumerate_invariant_sets,
    find_periodic_measures,
    is_ps_ergodic,
    random_instance,
)
from ergoperiod.noise import (
    DEFAULT_ALPHA,
    BernoulliShift,
    IrrationalRotation,
    Torus2,
    WienerGrid,
    birkhoff_average,
    check_preservation,
    observable_battery,
)
from ergoperiod.rds import CirclePath, CircleShift, CyclePath, FiniteMap, StationaryPath, verify_cocycle, verify_rpp
from ergoperiod.streams import stream
from ergoperiod.sublinear import (
    IntervalSet,
    TwoIntervalRotation,
    UpperExpectation,
    birkhoff_qs_lln,
    canonical_sublinear_expect,
    check_sublinear_invariance,
)
from ergoperiod.wiener import birkhoff_shift_average, decorrelation, standard_battery

from oracles import closed_classes, fdd_expectation, matpow, rotation_sin_average

CORPUS_SIZE = 1000


@functools.lru_cache(maxsize=1)
def corpus():
    rng = stream(2024, 7)
    return [random_instance(rng, n_max=6, tau_max=3) for _ in range(CORPUS_SIZE)]


def test_criterion_01_cocycle_and_rpp_identities(criterion):
    with criterion(1, "cocycle and RPP identities", 5) as c:
        worst_cont, worst_finite = 0.0, 0.0
        for cocycle in (CircleShift(), CircleShift(IrrationalRotation(step=None)), CircleShift(amplitude=0.0)):
            worst_cont = max(worst_cont, verify_cocycle(cocycle, 1000, seed=1).max_defect)
        for path in (CirclePath(), CirclePath(CircleShift(IrrationalRotation(step=None)))):
            worst_cont = max(worst_cont, verify_rpp(path, 1000, seed=2).max_defect)
        rng = stream(1, 1)
        for i in range(20):
            inst = random_instance(rng, plant_cycle=True)
            fm = FiniteMap(inst.maps)
            worst_finite = max(worst_finite, verify_cocycle(fm, 1000, seed=i).max_defect)
            if inst.cycle is not None:
                worst_finite = max(worst_finite, verify_rpp(CyclePath(fm, inst.cycle), 1000, seed=i).max_defect)
        fixed = FiniteMap(np.array([[1, 0, 2], [0, 0, 2]]))
        worst_finite = max(worst_finite, verify_rpp(StationaryPath(fixed, lambda w: np.full(len(w), 2), 2.0), 1000, 3).max_defect)
        c.detail = f"max defect {worst_cont:.1e} continuous, {worst_finite} finite"
        assert worst_cont <= 1e-12
        assert worst_finite == 0.0


def test_criterion_02_measure_preservation(criterion):
    with criterion(2, "measure preservation battery", 30) as c:
        systems = [(Torus2(), 0.37), (IrrationalRotation(), 1.0), (BernoulliShift(), 3.0), (WienerGrid(), 0.25)]
        worst, count = 0.0, 0
        for k, (system, t) in enumerate(systems):
            for j, phi in enumerate(observable_battery(system).values()):
                rep = check_preservation(system, t, phi, 100_000, seed=100 * k + j)
                worst = max(worst, abs(rep.z_score))
                count += 1
        c.detail = f"{count} checks, max |z| {worst:.2f}"
        assert count == 20
        assert worst <= 4


def test_criterion_03_torus_ergodicity(criterion):
    with criterion(3, "torus Birkhoff average of sin(2 pi x)", 20) as c:
        N = 10_000
        starts = Torus2().sample(stream(3, 3), 100)
        avgs = birkhoff_average(Torus2(), lambda w: np.sin(2 * np.pi * w[..., 1]), starts, N)
        oracle = np.array([rotation_sin_average(x, DEFAULT_ALPHA, N) for x in starts[:, 1]])
        assert np.max(np.abs(avgs - oracle)) <= 1e-9
        frac = float(np.mean(np.abs(avgs) <= 0.05))
        c.detail = f"{frac:.0%} within 0.05, max |avg| {np.max(np.abs(avgs)):.1e}"
        assert frac >= 0.99


def test_criterion_04_discretization_not_ergodic(criterion):
    with criterion(4, "time-1 map conserves r", 10) as c:
        starts = Torus2().sample(stream(4, 4), 1000)
        limits = birkhoff_average(Torus2(), lambda w: (w[..., 0] < 0.5) * 1.0, starts, 1000)
        assert np.array_equal(limits, (starts[:, 0] < 0.5) * 1.0)
        var = float(limits.var())
        c.detail = f"across-path variance {var:.4f}"
        assert abs(var - 0.25) <= 0.02


def _class_oracle(p, tau, rho):
    """PS-ergodicity from transitive closure, sharing no code with the package."""
    q = matpow(p, tau)
    supp = {x for x, r in enumerate(rho) if r > 1e-12}
    for cls in closed_classes(q):
        if supp <= set(cls):
            pushed = [sum(rho[x] * q[x][y] for x in range(len(p))) for y in range(len(p))]
            return max(abs(a - b) for a, b in zip(pushed, rho)) <= 1e-9
    return False


def test_criterion_05_ps_oracle_agreement(criterion):
    with criterion(5, "PS-ergodicity dual-route agreement", 60) as c:
        agree = total = 0
        for inst in corpus():
            p = inst.matrix
            for pm in find_periodic_measures(p, inst.tau):
                cc = cross_check_ps(p, inst.tau, pm)
                independent = [_class_oracle(p.p.tolist(), inst.tau, r.tolist()) for r in pm.vectors]
                total += 1
                agree += cc.agree and cc.enumeration == independent
        c.detail = f"{agree}/{total} measures on {CORPUS_SIZE} chains"
        assert agree == total


def test_criterion_06_worked_instances(criterion):
    with criterion(6, "worked PS-ergodicity instances", 1) as c:
        two = [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]
        four = [[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0]]
        flip = [[0, 1], [1, 0]]
        mix = is_ps_ergodic(two, 2, DiscretePeriodicMeasure.from_initial(two, [0.5, 0, 0.5, 0], 2))
        assert not mix.ergodic and mix.witnesses[0]["states"] == [1, 2] and mix.witnesses[0]["mass"] == 0.5
        assert is_ps_ergodic(four, 2, DiscretePeriodicMeasure.from_initial(four, [0.5, 0, 0.5, 0], 2)).ergodic
        for rho0 in ([1, 0], [0, 1]):
            assert is_ps_ergodic(flip, 2, DiscretePeriodicMeasure.from_initial(flip, rho0, 2)).ergodic
        c.detail = "mixture witness {1,2}; 4-cycle and flip ergodic"


def test_criterion_07_condition_a_on_ergodic_instances(criterion):
    with criterion(7, "strengthened Condition A on PS-ergodic cycle instances", 30) as c:
        checked = 0
        for i, inst in enumerate(corpus()):
            if inst.cycle is None:
                continue
            p = inst.matrix
            n = p.n
            pm = DiscretePeriodicMeasure.from_initial(p, np.eye(n)[inst.cycle[0]], inst.tau)
            if not is_ps_ergodic(p, inst.tau, pm).ergodic:
                continue
            path = CyclePath(FiniteMap(inst.maps), inst.cycle)
            for s in range(inst.tau):
                fam = enumerate_invariant_sets(p, inst.tau, pm.vectors[s], s=s)
                rep = check_condition_A(path, s, fam, n_paths=200, window=16, seed=i)
                assert rep.violations == 0 and rep.strengthened_violations == 0
            checked += 1
        c.detail = f"{checked} instances"
        assert checked > 0


def _finite_families():
    fams = [
        (np.array([[0.0, 1.0], [1.0, 0.0]]), DiscretePeriodicMeasure.from_initial([[0, 1], [1, 0]], [1, 0], 2)),
        (np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float),
         DiscretePeriodicMeasure.from_initial([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], [0.5, 0, 0.5, 0], 2)),
    ]
    for inst in corpus()[:40]:
        for pm in find_periodic_measures(inst.matrix, inst.tau):
            fams.append((inst.matrix.p, pm))
    return fams


def test_criterion_08_sublinear_identities(criterion):
    with criterion(8, "sublinear identities and two-interval value", 5) as c:
        rng = stream(8, 8)
        worst = 0.0
        fams = _finite_families()
        for p, pm in fams:
            ue = UpperExpectation.from_vectors(pm.vectors, pm.tau)
            e = ue.upper_expect
            n = p.shape[0]
            phis = rng.normal(size=(100, n))
            psis = rng.normal(size=(100, n))
            lams = rng.random(100) * 5
            battery = {}
            for k in range(100):
                phi, psi, lam = phis[k], psis[k], lams[k]
                assert e(phi + psi) <= e(phi) + e(psi) + 1e-12
                worst = max(worst, abs(e(lam * phi) - lam * e(phi)))
                assert e(np.maximum(phi, psi)) >= e(phi) - 1e-12
                worst = max(worst, abs(e(np.full(n, phi[0])) - phi[0]))
                battery[k] = phi
            rep = check_sublinear_invariance(StochasticMatrix(p), ue, battery, steps=[pm.tau])
            worst = max(worst, rep.max_defect)
        two = TwoIntervalRotation().upper().upper_expect(IntervalSet(((0.0, 1.0),)))
        c.detail = f"{len(fams)} families, max defect {worst:.1e}, E[I_[0,1)] = {two}"
        assert worst <= 1e-12
        assert two == 1.0


def _dense_chain(rng, n):
    raw = rng.random((n, n)) * (rng.random((n, n)) < 0.7)
    raw[np.arange(n), rng.integers(0, n, size=n)] += 0.1
    return raw / raw.sum(axis=1, keepdims=True)


def test_criterion_09_canonical_recursion(criterion):
    with criterion(9, "singleton-family recursion vs FDD summation", 5) as c:
        rng = stream(9, 9)
        windows = [w for k in (1, 2, 3) for w in itertools.combinations(range(4), k)]
        worst, cases = 0.0, 0
        for n in range(1, 5):
            for _ in range(10):
                p = _dense_chain(rng, n)
                for pm in find_periodic_measures(p, 1):
                    rho = pm.vectors[0]
                    ue = UpperExpectation.from_vectors([rho], 1)
                    for times in windows:
                        phi = rng.normal(size=(n,) * len(times))
                        table = {idx: float(phi[idx]) for idx in np.ndindex(*phi.shape)}
                        want = fdd_expectation(p.tolist(), rho.tolist(), list(times), table)
                        worst = max(worst, abs(canonical_sublinear_expect(p, ue, times, phi) - want))
                        cases += 1
        c.detail = f"{cases} cases, max error {worst:.1e}"
        assert worst <= 1e-12


def test_criterion_10_quasi_sure_lln(criterion):
    with criterion(10, "quasi-sure Birkhoff LLN on the circle shift", 60) as c:
        battery = {
            "sin": lambda w, x: np.sin(2 * np.pi * x),
            "cos": lambda w, x: np.cos(2 * np.pi * x),
            "half": lambda w, x: (x < 0.5) * 1.0,
            "noise_sin": lambda w, x: np.sin(2 * np.pi * np.asarray(w)[..., -1]),
        }
        targets = {"sin": 0.0, "cos": 0.0, "half": 0.5, "noise_sin": 0.0}
        reps = birkhoff_qs_lln(CirclePath(), battery, [100, 1000, 10_000], 1 / 16, 100, m=16, epsilon=0.05,
                               seed=10, target=targets)
        summary = {k: [r.max_fraction(T) for T in r.horizons] for k, r in reps.items()}
        c.detail = "; ".join(f"{k} {v}" for k, v in summary.items())
        for rep in reps.values():
            assert rep.max_fraction(10_000.0) <= 0.01
            assert rep.nonincreasing()


def test_criterion_11_wiener_shift(criterion):
    with criterion(11, "discrete Wiener shift averages and decorrelation", 60) as c:
        tau, h, N = 0.25, 0.01, 100_000
        bat = standard_battery(tau)
        zs = {}
        for i, (name, (F, target)) in enumerate(bat.items()):
            avg = birkhoff_shift_average(F, tau, N, h, seed=110 + i, target=target)
            zs[name] = avg.z
        lag_z = []
        for i, (F, _) in enumerate(bat.values()):
            lags = [l for l in (1, 2, 3) if l >= F.depth]
            lag_z += [cov.z for cov in decorrelation(F, F, tau, lags, N, h, seed=120 + i)]
        c.detail = "z " + ", ".join(f"{k} {v:+.2f}" for k, v in zs.items()) + f"; max lag |z| {max(map(abs, lag_z)):.2f}"
        assert all(abs(z) <= 4 for z in zs.values())
        assert all(abs(z) <= 4 for z in lag_z)
