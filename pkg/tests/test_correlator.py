import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amolab.correlator import (STRATEGIES, CorrelatorBoundError, CorrelatorEstimate, CorrelatorIntegrand,
                               correlator_at, decompose_by_center, expectation, expectation_sweep, gamma_fit,
                               layercake_check, lower_bound_experiment, resonance_shells, stratified_plan)
from amolab.operator import ModelParams, Window, build_hamiltonian, solve, window_for
from amolab.resonance import IntervalSet, set_A

LAM3 = ModelParams.make(3.0, "golden", 0.0)
LAM2 = ModelParams.make(2.0, "golden", 0.0)


def dense_correlator(params, window, ell):
    h = build_hamiltonian(params, window).dense()
    _, v = np.linalg.eigh(h)
    v = np.abs(v)
    return float(np.sum(v[-window.lo] * v[ell - window.lo]))


# pointwise correlator

def test_correlator_at_zero_is_one():
    es = solve(LAM3.with_theta(0.37), Window.centered(80))
    assert correlator_at(es, 0) == pytest.approx(1.0, abs=1e-8)


def test_correlator_out_of_window():
    es = solve(LAM3, Window(0, 0))
    with pytest.raises((IndexError, ValueError)):
        correlator_at(es, 1)


def test_correlator_matches_dense_solver():
    w = window_for(20)
    for theta in (0.1234, 0.5678, 0.9):
        p = LAM3.with_theta(theta)
        want = dense_correlator(p, w, 20)
        assert correlator_at(solve(p, w), 20) == pytest.approx(want, abs=1e-8)
        assert CorrelatorIntegrand(LAM3, w, (20,))(np.array([theta]))[0, 0] == pytest.approx(want, abs=1e-8)


@settings(max_examples=10)
@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=1, max_size=6), st.integers(1, 12))
def test_correlator_in_unit_interval(thetas, ell):
    vals = CorrelatorIntegrand(LAM2, window_for(12), (0, ell))(np.array(thetas))
    assert np.all(vals >= 0) and np.all(vals <= 1 + 1e-9)
    assert np.allclose(vals[:, 0], 1.0, atol=1e-8)


def test_bound_error_is_arithmetic():
    assert issubclass(CorrelatorBoundError, ArithmeticError)


# expectation

@pytest.mark.parametrize("strategy", STRATEGIES)
def test_constant_integrand(strategy):
    c = 0.3125
    est = expectation(8, LAM2, strategy, integrand=lambda th: np.full(th.shape, c), n_grid=64, n_bulk=16,
                      n_shell=8)
    assert est.estimate == pytest.approx(c, abs=1e-12)


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_monotone_under_domination(strategy):
    def g(th):
        return 0.5 + 0.4 * np.cos(2 * np.pi * th) ** 2

    def f(th):
        return g(th) * (0.7 + 0.2 * np.sin(6 * np.pi * th) ** 2)

    kw = dict(n_grid=128, n_bulk=16, n_shell=8, seed=3)
    assert expectation(6, LAM2, strategy, integrand=f, **kw).estimate < expectation(6, LAM2, strategy, integrand=g,
                                                                                     **kw).estimate


def test_shells_partition_circle():
    parts = resonance_shells(10, LAM2)
    assert [name for name, _ in parts] == ["bulk"] + [f"shell_{j}" for j in range(1, 9)]
    total = math.fsum(a.measure for _, a in parts)
    assert total == pytest.approx(1.0, abs=1e-12)
    for i, (_, a) in enumerate(parts):
        for _, b in parts[i + 1:]:
            assert (a & b).measure <= 1e-15


@settings(max_examples=8)
@given(st.integers(0, 10_000), st.integers(4, 10))
def test_estimate_invariants(seed, ell):
    est = expectation(ell, LAM2, "stratified", n_bulk=4, n_shell=2, seed=seed)
    assert est.estimate == pytest.approx(est.bulk + math.fsum(est.shells), abs=1e-15)
    assert 0.0 <= est.estimate <= 1.0
    assert len(est.shells) == 8 and est.error >= 0


def test_stratified_samples_stay_in_their_stratum():
    for s in stratified_plan(10, LAM2, 8, 4, seed=1):
        if s.thetas.size:
            assert np.all(s.arcs.contains(s.thetas))


def test_stratified_is_deterministic():
    a = expectation(7, LAM2, "stratified", n_bulk=8, n_shell=4, seed=9)
    b = expectation(7, LAM2, "stratified", n_bulk=8, n_shell=4, seed=9)
    assert a == b


def test_plan_requires_even_counts():
    with pytest.raises(ValueError):
        stratified_plan(5, LAM2, 3, 4, 0)


def test_uniform_and_stratified_agree():
    ell = 10
    uni = expectation(ell, LAM2, "uniform-grid", n_grid=200_000)
    strat = expectation(ell, LAM2, "stratified", n_bulk=512, n_shell=256, seed=0)
    assert abs(uni.estimate - strat.estimate) <= 3 * math.hypot(uni.error, strat.error)


def test_upper_bound_at_small_ell():
    lyap = LAM2.lyapunov
    for e in expectation_sweep(range(4, 9), LAM2, "uniform-grid", n_grid=2000):
        assert e.estimate <= math.exp(-0.8 * lyap * e.ell)


def test_window_too_small():
    with pytest.raises(ValueError):
        expectation(10, LAM2, "uniform-grid", n_grid=8, window=Window.centered(20))
    with pytest.raises(ValueError):
        expectation_sweep([], LAM2)
    with pytest.raises(ValueError):
        expectation(4, LAM2, "simpson")


# gamma fit

def synthetic(ells, values):
    return [CorrelatorEstimate(int(l), float(v), 0.0, float(v), (), (1,), "synthetic") for l, v in zip(ells, values)]


def test_gamma_fit_exact_exponential():
    ells = np.arange(4, 25)
    fit = gamma_fit(synthetic(ells, np.exp(-1.0986 * ells)))
    assert fit.slope == pytest.approx(1.0986, abs=1e-12)
    assert np.allclose(fit.exponents, 1.0986, atol=1e-12)


@given(st.floats(0.2, 3.0), st.floats(1e-3, 1e3))
def test_gamma_fit_recovers_rate_and_ignores_scale(gamma, c):
    ells = np.arange(4, 25)
    base = gamma_fit(synthetic(ells, np.exp(-gamma * ells)))
    scaled = gamma_fit(synthetic(ells, c * np.exp(-gamma * ells)))
    assert abs(scaled.slope - gamma) < 1e-10
    assert abs(scaled.slope - base.slope) < 1e-10
    assert scaled.intercept == pytest.approx(-math.log(c), abs=1e-9)


def alternating_spread(ell_max, gamma=1.0):
    ells = np.arange(4, ell_max + 1)
    pref = np.where(ells % 2 == 0, 1.5, 0.5)
    fit = gamma_fit(synthetic(ells, pref * np.exp(-gamma * ells)))
    # closed form: exponent = gamma - ln(prefactor) / l on the tail
    tail = ells[ells >= fit.tail_start]
    expo = gamma - np.log(np.where(tail % 2 == 0, 1.5, 0.5)) / tail
    assert fit.gamma_plus == pytest.approx(expo.max(), abs=1e-12)
    assert fit.gamma_minus == pytest.approx(expo.min(), abs=1e-12)
    return fit.gamma_plus - fit.gamma_minus


def test_gamma_fit_alternating_prefactor_converges():
    spreads = [alternating_spread(m) for m in (20, 40, 80, 160, 320)]
    assert all(a > b for a, b in zip(spreads, spreads[1:]))
    assert spreads[-1] < 0.02


def test_gamma_fit_drops_nonpositive():
    ells = np.arange(4, 12)
    vals = np.exp(-ells.astype(float))
    vals[2] = 0.0
    with pytest.warns(UserWarning):
        fit = gamma_fit(synthetic(ells, vals))
    assert fit.dropped == (6,)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            gamma_fit(synthetic(ells[:6], np.r_[vals[:4], 0.0, -1.0]))


# decomposition by centre

def test_decomposition_sums_to_expectation():
    kw = dict(n_bulk=8, n_shell=4, seed=2)
    dec = decompose_by_center(12, LAM2, 0.2, **kw)
    est = expectation(12, LAM2, "stratified", **kw)
    assert math.fsum(dec.contributions) == pytest.approx(est.estimate, abs=1e-10)
    assert dec.far + dec.near + dec.middle == pytest.approx(dec.total, abs=1e-14)
    assert set(dec.as_dict()) == set(dec.centers.tolist())


def test_decomposition_end_bands_small():
    lyap = LAM2.lyapunov
    eps, delta0, ell = 0.2 * lyap, 0.2, 12
    dec = decompose_by_center(ell, LAM2, delta0, n_bulk=16, n_shell=8, seed=0)
    cap = math.exp(-(lyap - 4 * eps) * (1 - delta0) * ell)
    # the near band holds the centre at 0 itself, whose share is the bulk of S_l; the far band mirrors it
    assert dec.far <= cap


def test_decomposition_wide_delta():
    # the open band (0.49 l, 0.51 l) holds no integer for l = 5 and only l / 2 for l = 6
    assert decompose_by_center(5, LAM2, 0.49, n_bulk=8, n_shell=4).middle == 0.0
    dec = decompose_by_center(6, LAM2, 0.49, n_bulk=8, n_shell=4)
    assert dec.middle == dec.as_dict()[3]


def test_decomposition_rejects_bad_delta():
    with pytest.raises(ValueError):
        decompose_by_center(6, LAM2, 0.5)


# layer-cake identity

def test_layercake_constant():
    omega = IntervalSet([0.1, 0.5], [0.3, 0.55])
    r = layercake_check(lambda th: np.full(th.shape, 0.37), omega, 10_000)
    assert r.direct == pytest.approx(0.37 * omega.measure, abs=1e-15)
    assert r.layered == pytest.approx(0.37 * omega.measure, abs=1e-4)


def test_layercake_indicator():
    omega = IntervalSet.full()
    sub = IntervalSet([0.2], [0.45])
    r = layercake_check(lambda th: sub.contains(th).astype(float), omega, 100_000)
    assert r.direct == pytest.approx(0.25, abs=2e-5)
    assert r.layered == pytest.approx(0.25, abs=2e-5)


def test_layercake_smooth_function_on_resonant_set():
    omega = set_A(1.0, 3, LAM2)
    r = layercake_check(lambda th: 0.5 + 0.5 * np.cos(2 * np.pi * th) ** 3, omega, 100_000)
    assert r.residual < 1e-4 * max(omega.measure, 1e-12) + 1e-6


def test_layercake_rejects_out_of_range():
    with pytest.raises(ValueError):
        layercake_check(lambda th: 2.0 * np.ones(th.shape), IntervalSet.full(), 100)


# lower bound experiment

def test_lower_bound_wide_theta():
    r = lower_bound_experiment(LAM2, 4, 2 * LAM2.lyapunov, n_samples=10, seed=1)
    assert not r.inconclusive
    assert r.measure_ok and r.fraction_quarter >= 0.9 and r.bound_ok


def test_lower_bound_samples_in_theta():
    from amolab.resonance import theta_sets
    r = lower_bound_experiment(LAM2, 6, 1.2 * LAM2.lyapunov, n_samples=6, seed=0)
    ts = theta_sets(1.2 * LAM2.lyapunov, 6, LAM2)
    assert np.all(ts.theta.contains(r.thetas))
    assert r.integral_bound == pytest.approx(r.corrected_measure * 0.25 * r.fraction_quarter)
