import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergoperiod.errors import HorizonExceeded, NonCommensurateTime
from ergoperiod.noise import (
    DEFAULT_ALPHA,
    BernoulliShift,
    IrrationalRotation,
    RationalRotationWarning,
    Torus2,
    WienerGrid,
    birkhoff_average,
    check_preservation,
    circle_distance,
    observable_battery,
    sample_invariant,
    shift,
    wrap,
)
from ergoperiod.streams import counter_uniform, stream

from oracles import rotation_sin_average


def test_torus_shift_by_one_keeps_r():
    out = shift(Torus2(), 1.0, np.array([[0.25, 0.5]]))
    assert out[0, 0] == 0.25
    assert abs(out[0, 1] - (0.5 + DEFAULT_ALPHA) % 1) < 1e-15


@pytest.mark.parametrize("system", [Torus2(), IrrationalRotation(), BernoulliShift(), WienerGrid()])
def test_shift_zero_is_identity(system):
    omega = system.sample(stream(0), 50)
    moved = system.shift(0.0, omega)
    assert np.all(system.distance(moved, omega) == 0)


def test_rational_rotation_ten_steps_returns_to_zero():
    with pytest.warns(RationalRotationWarning):
        rot = IrrationalRotation(alpha=0.3)
    x = np.array([0.0])
    for _ in range(10):
        x = rot.shift(1.0, x)
    # repeated-addition oracle: 10 * 0.3 = 3
    assert circle_distance(x, 0.0)[0] < 1e-12


def test_irrational_alpha_does_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        IrrationalRotation()
        Torus2()


def test_sample_means():
    n = 100_000
    x = sample_invariant(IrrationalRotation(), stream(1), n)
    assert abs(x.mean() - 0.5) <= 4 * (1 / math.sqrt(12)) / math.sqrt(n)
    b = sample_invariant(BernoulliShift(), stream(2), n)
    assert abs((b.values[:, 0] == 0).mean() - 0.5) <= 4 * 0.5 / math.sqrt(n)


def test_wiener_endpoint_variance():
    g = WienerGrid(h=0.01, horizon=1.0)
    w = g.sample(stream(3), 20_000)
    assert w.values.shape == (20_000, 100)
    var = w.values.sum(axis=1).var()
    assert abs(var - 1.0) < 0.05


def test_wiener_shift_errors():
    g = WienerGrid(h=0.01, horizon=1.0)
    w = g.sample(stream(4), 3)
    with pytest.raises(NonCommensurateTime):
        g.shift(0.015, w)
    with pytest.raises(HorizonExceeded):
        g.shift(1.01, w)
    with pytest.raises(ValueError):
        g.shift(-0.01, w)
    with pytest.raises(ValueError):
        WienerGrid(h=0.03, horizon=1.0)


def test_wiener_shift_is_brownian_shift():
    g = WienerGrid(h=0.01, horizon=1.0)
    w = g.sample(stream(5), 10)
    t = 0.3
    moved = g.shift(t, w)
    s = np.array([0.1, 0.5, 0.7])
    # theta_t w(s) = w(s + t) - w(t), where both sides stay inside the window
    lhs = g.path(moved, s)
    rhs = g.path(w, s + t) - g.path(w, [t])
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_rotation_rejects_off_grid_times():
    with pytest.raises(NonCommensurateTime):
        IrrationalRotation(step=1.0).shift(0.5, np.array([0.1]))
    with pytest.raises(ValueError):
        BernoulliShift().shift(-1, BernoulliShift().sample(stream(0), 2))


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0, 50), s=st.floats(0, 50), r=st.floats(0, 1, exclude_max=True), x=st.floats(0, 1, exclude_max=True))
def test_torus_group_property(t, s, r, x):
    tor = Torus2()
    w = np.array([[r, x]])
    d = tor.distance(tor.shift(t, tor.shift(s, w)), tor.shift(t + s, w))
    assert d[0] <= 1e-12


@settings(max_examples=200, deadline=None)
@given(t=st.floats(-50, 50), s=st.floats(-50, 50), x=st.floats(0, 1, exclude_max=True))
def test_continuous_rotation_group_property_two_sided(t, s, x):
    rot = IrrationalRotation(step=None)
    w = np.array([x])
    assert rot.distance(rot.shift(t, rot.shift(s, w)), rot.shift(t + s, w))[0] <= 1e-12


@settings(max_examples=50, deadline=None)
@given(a=st.integers(0, 20), b=st.integers(0, 20), seed=st.integers(0, 2**32))
def test_sequence_shift_group_is_exact(a, b, seed):
    for system in (BernoulliShift(symbol_count=3, window=8), WienerGrid(h=0.05, horizon=2.0)):
        a_t, b_t = a * system.mesh, b * system.mesh
        w = system.sample(stream(seed), 4)
        lhs = system.shift(a_t, system.shift(b_t, w))
        rhs = system.shift(a_t + b_t, w)
        assert np.all(system.distance(lhs, rhs) == 0)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(-1e6, 1e6))
def test_wrap_range(x):
    y = wrap(x)
    assert 0.0 <= y < 1.0


def test_counter_stream_positions_are_stable():
    key = np.uint64(12345)
    whole = counter_uniform(key, np.arange(100))
    part = counter_uniform(key, np.arange(40, 60))
    assert np.array_equal(whole[40:60], part)
    assert np.all((whole > 0) & (whole < 1))


@pytest.mark.parametrize(
    "system,t,phi,expected",
    [
        (Torus2(), 0.37, lambda w: np.sin(2 * np.pi * w[:, 1]), 0.0),
        (WienerGrid(h=0.01, horizon=1.0), 0.25, lambda w: (WienerGrid().path(w, [0.25])[:, 0] > 0) * 1.0, 0.5),
        (IrrationalRotation(), 1.0, lambda w: (w < 0.3) * 1.0, 0.3),
    ],
)
def test_preservation_examples(system, t, phi, expected):
    n = 100_000
    rep = check_preservation(system, t, phi, n, seed=7)
    assert rep.passed
    tol = 4 * 0.5 / math.sqrt(n)
    assert abs(rep.mean_raw - expected) < tol
    assert abs(rep.mean_shifted - expected) < tol


def test_preservation_needs_enough_samples():
    with pytest.raises(ValueError):
        check_preservation(Torus2(), 0.1, lambda w: w[:, 0], 99, 0)


def test_wiener_composition_in_distribution():
    # shift(tau) applied k times matches shift(k tau) on three cylinder functionals
    g = WienerGrid(h=0.01, horizon=1.0)
    tau, k, n = 0.25, 3, 50_000
    w1 = g.sample(stream(10), n)
    for _ in range(k):
        w1 = g.shift(tau, w1)
    w2 = g.shift(k * tau, g.sample(stream(11), n))
    funcs = [
        lambda w: (g.path(w, [tau])[:, 0] > 0) * 1.0,
        lambda w: np.minimum(g.path(w, [tau])[:, 0] ** 2, 1.0),
        lambda w: np.all(g.path(w, [tau, 2 * tau]) > 0, axis=1) * 1.0,
    ]
    for f in funcs:
        a, b = f(w1), f(w2)
        se = math.sqrt(a.var() / n + b.var() / n)
        assert abs(a.mean() - b.mean()) <= 4 * se


def test_batteries_have_five_bounded_observables():
    for system in (IrrationalRotation(), Torus2(), BernoulliShift(), WienerGrid()):
        bat = observable_battery(system)
        assert len(bat) == 5
        w = system.sample(stream(0), 1000)
        for fn in bat.values():
            v = np.asarray(fn(w))
            assert np.all(np.isfinite(v)) and np.all(np.abs(v) <= 4)


def test_birkhoff_average_matches_weyl_sum():
    starts = np.array([[0.1, 0.0], [0.7, 0.33], [0.2, 0.9]])
    got = birkhoff_average(Torus2(), lambda w: np.sin(2 * np.pi * w[..., 1]), starts, 5000)
    want = [rotation_sin_average(x, DEFAULT_ALPHA, 5000) for x in starts[:, 1]]
    assert np.allclose(got, want, atol=1e-9)


def test_birkhoff_average_iterates_sequence_systems():
    b = BernoulliShift(window=4)
    w = b.sample(stream(0), 3)
    got = birkhoff_average(b, lambda v: v.values[:, 0] * 1.0, w, 50)
    want = b.symbols(w, np.arange(50)).mean(axis=1)
    assert np.allclose(got, want)
