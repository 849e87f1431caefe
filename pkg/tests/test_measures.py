import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergoperiod.errors import PartitionMismatch, SetNotRepresentable
from ergoperiod.markov import StochasticMatrix
from ergoperiod.measures import (
    EmpiricalMeasure,
    Partition,
    PeriodicMeasureFamily,
    average_measure,
    bin_tolerance,
    check_family_periodicity,
    estimate_family,
    estimate_rho,
)
from ergoperiod.rds import CirclePath, CircleShift, CyclePath, FiniteMap

# f(w) = x-coordinate of the torus: Y(s, w) = s + x + s alpha has Lebesgue law for every s
UNIFORM = CirclePath(CircleShift(f=lambda w: np.asarray(w)[..., 1]))
FLIP = np.array([[0.0, 1.0], [1.0, 0.0]])


def _flip_path():
    return CyclePath(FiniteMap(np.array([[1, 0]])), [0, 1])


def test_deterministic_path_gives_point_mass():
    m = estimate_rho(CirclePath(CircleShift(amplitude=0.0)), 0.25, 1000, bins=64, seed=1)
    assert m.weights[16] == 1.0 and m.weights.sum() == 1.0


def test_circle_shift_rho_is_uniform():
    n = 100_000
    m = estimate_rho(UNIFORM, 0.3, n, bins=64, seed=2)
    tol = bin_tolerance(1 / 64, n)
    assert np.max(np.abs(m.weights - 1 / 64)) <= tol


def test_flip_chain_rho():
    m = estimate_rho(_flip_path(), 0, 10_000, seed=3)
    assert m.weights.tolist() == [1.0, 0.0]
    m = estimate_rho(_flip_path(), 1, 10_000, seed=3)
    assert m.weights.tolist() == [0.0, 1.0]


def test_estimate_rho_needs_samples():
    with pytest.raises(ValueError):
        estimate_rho(CirclePath(), 0.0, 99)


def test_average_of_two_point_masses():
    part = Partition("circle", 10)
    a = EmpiricalMeasure(part, np.eye(10)[3], 100)
    b = EmpiricalMeasure(part, np.eye(10)[7], 100)
    fam = PeriodicMeasureFamily(1.0, [0.0, 0.5], [a, b], "empirical")
    avg = average_measure(fam)
    assert avg.weights[3] == 0.5 and avg.weights[7] == 0.5 and avg.weights.sum() == 1.0


def test_deterministic_circle_average_is_exactly_uniform():
    fam = estimate_family(CirclePath(CircleShift(amplitude=0.0)), m=64, n=200, bins=64, seed=4)
    avg = average_measure(fam)
    assert np.all(avg.weights == 1 / 64)


def test_flip_family_average_and_invariance():
    fam = PeriodicMeasureFamily.from_vectors([[1, 0], [0, 1]])
    avg = average_measure(fam)
    assert avg.weights.tolist() == [0.5, 0.5]
    assert np.allclose(avg.weights @ FLIP, avg.weights, atol=1e-15)


def test_partition_mismatch_in_family():
    with pytest.raises(PartitionMismatch):
        PeriodicMeasureFamily(
            2.0, [0, 1], [EmpiricalMeasure.exact([1, 0]), EmpiricalMeasure.exact([0, 0, 1])], "exact"
        )


def test_flip_periodicity_exact():
    fam = PeriodicMeasureFamily.from_vectors([[1, 0], [0, 1]])
    rep = check_family_periodicity(StochasticMatrix(FLIP), fam)
    assert rep.max_defect == 0.0 and rep.passed


def test_invariant_measure_is_constant_family():
    p = np.array([[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]])
    pi = np.array([0.25, 0.5, 0.25])
    fam = PeriodicMeasureFamily.from_vectors([pi])
    assert check_family_periodicity(p, fam).max_defect <= 1e-15


def test_broken_family_is_flagged():
    fam = PeriodicMeasureFamily.from_vectors([[1, 0], [1, 0]])
    assert not check_family_periodicity(FLIP, fam).passed


def test_exact_periodicity_needs_matching_states():
    fam = PeriodicMeasureFamily.from_vectors([[1, 0, 0]])
    with pytest.raises(PartitionMismatch):
        check_family_periodicity(FLIP, fam)


def test_circle_family_periodicity_z():
    fam = estimate_family(CirclePath(), m=4, n=100_000, bins=64, seed=5)
    rep = check_family_periodicity(CirclePath(), fam, seed=6)
    assert rep.statistic == "z" and rep.passed and rep.max_defect <= 4


def test_wrong_empirical_family_fails_z():
    good = estimate_family(CirclePath(CircleShift(amplitude=0.0)), m=4, n=10_000, seed=7)
    swapped = PeriodicMeasureFamily(1.0, good.s_grid, good.measures[::-1], "empirical")
    assert not check_family_periodicity(CirclePath(CircleShift(amplitude=0.0)), swapped).passed


def test_period_shift_equals_same_law():
    path = CirclePath()
    n = 50_000
    a = estimate_rho(path, 0.2, n, bins=32, seed=8, stream_id=0)
    b = estimate_rho(path, 1.2, n, bins=32, seed=8, stream_id=1)
    pooled = (a.weights + b.weights) / 2
    live = pooled > 0
    se = np.sqrt(pooled[live] * (1 - pooled[live]) * 2 / n)
    assert np.max(np.abs(a.weights - b.weights)[live] / se) <= 4


def test_json_round_trip():
    m = estimate_rho(CirclePath(), 0.1, 500, bins=8, seed=9)
    back = EmpiricalMeasure.from_json(m.to_json())
    assert np.array_equal(back.weights, m.weights)
    assert back.partition == m.partition and back.n_samples == m.n_samples
    doc = json.loads(m.to_json())
    assert set(doc) == {"partition", "weights", "n_samples", "meta"}


def test_csv_round_trip():
    m = estimate_rho(CirclePath(), 0.1, 500, bins=8, seed=9)
    lines = m.to_csv().strip().split("\n")
    assert lines[0] == "bin_center,weight" and len(lines) == 9
    centers, weights = zip(*(map(float, ln.split(",")) for ln in lines[1:]))
    assert np.array_equal(weights, m.weights)
    assert np.allclose(centers, (np.arange(8) + 0.5) / 8)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=12).filter(lambda v: sum(v) > 1e-3))
def test_normalization_survives_every_operation(raw):
    w = np.asarray(raw) / sum(raw)
    m = EmpiricalMeasure.exact(w)
    assert abs(EmpiricalMeasure.from_json(m.to_json()).weights.sum() - 1) <= 1e-12
    fam = PeriodicMeasureFamily.from_vectors([w, w[::-1]])
    assert abs(average_measure(fam).weights.sum() - 1) <= 1e-12


def test_unnormalized_weights_rejected():
    with pytest.raises(ValueError):
        EmpiricalMeasure.exact([0.5, 0.4])


def test_cells_and_representability():
    part = Partition("circle", 4)
    assert part.cells((0.25, 0.75)).tolist() == [False, True, True, False]
    with pytest.raises(SetNotRepresentable):
        part.cells((0.1, 0.5))
    atoms = Partition("atoms", 3)
    assert atoms.cells(0b101).tolist() == [True, False, True]
    with pytest.raises(SetNotRepresentable):
        atoms.cells(0b1000)
    with pytest.raises(SetNotRepresentable):
        atoms.cells([5])
    m = EmpiricalMeasure.exact([0.2, 0.3, 0.5])
    assert math.isclose(m.prob(0b110), 0.8)
