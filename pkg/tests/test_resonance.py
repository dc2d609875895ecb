import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amolab.operator import ModelParams
from amolab.resonance import (IntervalSet, measure_A, measure_B, measure_bound_A, min_sine, resonance_locator,
                              set_A, set_B, sine_sublevel, sublevel_measure, theta_sets)

mpmath.mp.dps = 40
GOLDEN = ModelParams.make(2.0, "golden", 0.0)
G_MP = (mpmath.sqrt(5) - 1) / 2


def exact_union_measure(ms, eps):
    """Measure of the union over m of {|sin pi(2 theta + m alpha)| <= eps}, all in 40-digit arithmetic."""
    half = mpmath.asin(eps) / (2 * mpmath.pi)
    arcs = []
    for m in ms:
        c = m * G_MP - mpmath.floor(m * G_MP)
        for centre in ((1 - c) / 2, (2 - c) / 2):
            a, b = centre - half, centre + half
            # split on the circle
            for lo, hi in ((a, b), (a - 1, b - 1), (a + 1, b + 1)):
                lo, hi = max(lo, mpmath.mpf(0)), min(hi, mpmath.mpf(1))
                if hi > lo:
                    arcs.append((lo, hi))
    arcs.sort()
    total, cur_lo, cur_hi = mpmath.mpf(0), None, None
    for lo, hi in arcs:
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


def grid_measure(s, n):
    # midpoint rule in chunks to keep memory bounded
    hits = 0
    for start in range(0, n, 1_000_000):
        t = (np.arange(start, min(n, start + 1_000_000)) + 0.5) / n
        hits += int(np.count_nonzero(s.contains(t)))
    return hits / n


def test_sublevel_trivial():
    assert sine_sublevel(0.3, 1.0).measure == 1.0
    assert sine_sublevel(0.3, 0.0).measure == 0.0 and len(sine_sublevel(0.3, 0.0)) == 0
    assert sine_sublevel(0.0, math.sin(0.1 * math.pi)).measure == pytest.approx(0.2, abs=1e-13)


@given(st.floats(0, 1, exclude_max=True), st.floats(1e-6, 0.999))
def test_sublevel_measure_formula(c, eps):
    assert sine_sublevel(c, eps).measure == pytest.approx(2 / math.pi * math.asin(eps), abs=1e-13)


@settings(max_examples=15)
@given(st.floats(0, 1, exclude_max=True), st.floats(1e-4, 0.999))
def test_sublevel_matches_grid(c, eps):
    s = sine_sublevel(c, eps)
    n = 1_000_000
    assert abs(s.measure - grid_measure(s, n)) <= 2 / n * len(s) + 1e-10


def test_set_A_exact_measure_n6():
    n, eta = 6, 0.4
    a = set_A(eta, n, GOLDEN)
    exact = exact_union_measure(range(2 * n - 10 * n, 2 * n + 10 * n + 1), mpmath.exp(-eta * n))
    assert a.measure == pytest.approx(float(exact), abs=1e-12)
    assert abs(a.measure - grid_measure(a, 10_000_000)) < 1e-6


def test_set_B_exact_measure():
    n, ell, eta = 10, 4, 0.5
    b = set_B(eta, n, ell, GOLDEN)
    m = abs(n - ell)
    exact = exact_union_measure(range(2 * n - 10 * m, 2 * n + 10 * m + 1), mpmath.exp(-eta * m))
    assert b.measure == pytest.approx(float(exact), abs=1e-12)
    assert abs(b.measure - grid_measure(b, 10_000_000)) < 1e-6


def test_set_B_with_ell_zero_is_set_A():
    assert set_B(0.7, 5, 0, GOLDEN) == set_A(0.7, 5, GOLDEN)


@pytest.mark.parametrize("eta", [0.5, 1.0, 1.5, 2.0, 3.0])
@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, -4])
def test_measure_bounds(eta, n):
    a = measure_A(eta, n, GOLDEN)
    b = measure_B(eta, n, 3 * n, GOLDEN)
    assert a <= measure_bound_A(eta, n)
    assert b <= measure_bound_A(eta, abs(n - 3 * n))
    # the widened arc sets differ from the exact ones by at most 2e-14 per arc
    assert abs(set_A(eta, n, GOLDEN).measure - a) <= 2.1e-14 * len(set_A(eta, n, GOLDEN)) + 1e-16


@pytest.mark.parametrize("eta,n,ell", [(0.4, 6, None), (3.0, 8, 24), (1.0, 3, None), (2.0, 5, 15)])
def test_exact_measure_matches_extended_precision(eta, n, ell):
    m = abs(n) if ell is None else abs(n - ell)
    got = measure_A(eta, n, GOLDEN) if ell is None else measure_B(eta, n, ell, GOLDEN)
    want = exact_union_measure(range(2 * n - 10 * m, 2 * n + 10 * m + 1), mpmath.exp(-eta * m))
    assert got == pytest.approx(float(want), rel=1e-9, abs=1e-300)


@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=1, max_size=20), st.floats(1e-6, 0.5))
def test_sublevel_measure_agrees_with_arcs(cs, eps):
    assert sublevel_measure(np.array(cs), eps) == pytest.approx(sine_sublevel(np.array(cs), eps, widen=0.0).measure,
                                                                abs=1e-12)


def test_set_A_monotone_in_eta():
    prev = IntervalSet.full()
    for eta in (0.1, 0.3, 0.6, 1.0, 2.0, 4.0, 8.0):
        a = set_A(eta, 4, GOLDEN)
        assert a.issubset(prev)
        assert a.measure <= prev.measure
        prev = a


def test_preconditions():
    with pytest.raises(ValueError):
        set_A(0.0, 3, GOLDEN)
    with pytest.raises(ValueError):
        set_B(1.0, 3, 3, GOLDEN)
    with pytest.raises(ValueError):
        theta_sets(math.log(2) * 0.9, 5, GOLDEN)
    with pytest.raises(ValueError):
        theta_sets(math.log(2) * 2.1, 5, GOLDEN)


arcs = st.lists(st.tuples(st.floats(0, 1), st.floats(0, 0.3)), max_size=12)


def build(pairs):
    return IntervalSet([a for a, _ in pairs], [a + w for a, w in pairs])


@given(arcs, arcs)
def test_interval_algebra(p, q):
    s, t = build(p), build(q)
    for x in (s, t, s | t, s & t, s - t):
        assert np.all(x.starts < x.ends)
        assert np.all(x.ends[:-1] < x.starts[1:])
        assert np.all((x.starts >= 0) & (x.ends <= 1))
    assert s.measure + s.complement().measure == pytest.approx(1.0, abs=1e-15)
    assert (s | t).measure == pytest.approx(s.measure + t.measure - (s & t).measure, abs=1e-12)
    assert (s - t).issubset(s, tol=1e-15)
    probe = np.linspace(0, 1, 997, endpoint=False) + 1e-7
    assert np.array_equal((s | t).contains(probe), s.contains(probe) | t.contains(probe))


@given(arcs)
def test_text_round_trip(p):
    s = build(p)
    assert IntervalSet.from_text(s.to_text()) == s


def test_sampling_lands_in_set():
    s = set_A(1.0, 3, GOLDEN)
    x = s.sample(500, seed=4)
    assert np.all(s.contains(x))
    assert np.array_equal(x, s.sample(500, seed=4))


def test_theta_sets_measure():
    lyap = math.log(2)
    ts = theta_sets(1.2 * lyap, 10, GOLDEN)
    assert ts.theta.issubset(ts.theta1)
    assert ts.corrected_measure >= math.exp(-1.2 * lyap * 10) / 100
    # tail bound recomputed from its defining series
    k0 = ts.k_range[1]
    tail = math.fsum(2 * 2 * (2 / math.pi) * math.asin(math.exp(-lyap * k / 100))
                     for k in range(k0 + 1, k0 + 200_000))
    assert ts.tail_bound >= tail / 2 * 0.999


def scan_min_sine(theta, m):
    x = np.arange(-m, m + 1)
    return float(np.abs(np.sin(np.pi * GOLDEN.alpha.phase(x, 2 * theta))).min())


def test_theta_samples_avoid_strong_resonances():
    lyap = math.log(2)
    gamma, n = 1.2 * lyap, 10
    ts = theta_sets(gamma, n, GOLDEN)
    # the resonance at x = n alone forces m >= 200 Gamma n / L before e^{-L m / 100} drops below it
    m = math.ceil(200 * gamma * n / lyap) + 1
    for theta in ts.theta.sample(40, seed=1):
        assert scan_min_sine(theta, m) >= math.exp(-lyap * m / 100)
    # the defining property of Theta_1 holds on samples in extended precision
    for theta in ts.theta.sample(40, seed=2):
        v = abs(mpmath.sin(mpmath.pi * (2 * mpmath.mpf(theta) + n * G_MP)))
        assert math.exp(-2 * gamma * n) * (1 - 1e-9) <= v <= math.exp(-gamma * n) * (1 + 1e-9)


def test_theta_set_needs_large_window():
    # at m = 2 C_win n with C_win = 2 the intended resonance at x = n violates the bound
    lyap = math.log(2)
    ts = theta_sets(1.2 * lyap, 10, GOLDEN)
    for theta in ts.theta.sample(10, seed=3):
        assert scan_min_sine(theta, 40) < math.exp(-lyap * 40 / 100)


def test_locator_exact_root():
    n, j = 7, 3
    theta = ((j - n * GOLDEN.alpha.value) / 2) % 1.0
    hit = resonance_locator(theta, 0, 20, GOLDEN)
    assert hit.x0 == n and hit.value < 1e-14


def test_locator_unique_generic():
    for theta in np.random.default_rng(0).random(20):
        hit = resonance_locator(theta, 0, 100, GOLDEN)
        assert not hit.degenerate
        xs = np.arange(-100, 101)
        vals = [abs(mpmath.sin(mpmath.pi * (2 * mpmath.mpf(theta) + int(x) * G_MP))) for x in xs]
        assert int(xs[int(np.argmin(vals))]) == hit.x0


def test_locator_radius_one():
    theta = 0.37
    hit = resonance_locator(theta, 2, 1, GOLDEN)
    vals = {x: abs(math.sin(math.pi * (2 * theta + (4 + x) * GOLDEN.alpha.value))) for x in (-1, 0, 1)}
    assert hit.x0 == min(vals, key=vals.get)
    with pytest.raises(ValueError):
        resonance_locator(theta, 0, 0, GOLDEN)


def test_min_sine():
    th = np.array([0.1, 0.6])
    got = min_sine(th, np.arange(-5, 6), GOLDEN)
    want = [min(abs(math.sin(math.pi * (2 * t + m * GOLDEN.alpha.value))) for m in range(-5, 6)) for t in th]
    assert np.allclose(got, want, atol=1e-14)
