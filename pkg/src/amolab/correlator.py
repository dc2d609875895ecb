"""Two-point eigenfunction correlator, its phase average and decay-rate estimators.

``S_l(theta) = sum_s |phi_s(0)| |phi_s(l)|`` over the eigensystem at phase theta.
Its average over theta decays like e^{-L l}, but a good part of the mass sits on
phase sets of measure ~e^{-L l} where some |sin pi(2 theta + m alpha)| is tiny.
The stratified integrator enumerates those sets exactly and samples each densely.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .operator import _CLUSTER_ORTH_TOL, _CLUSTER_REL_GAP, EigenSystem, ModelParams, Window, solve, window_for
from .parallel import map_rows
from .resonance import IntervalSet, sine_sublevel, theta_sets
from .localization import verify_prop_large

STRATEGIES = ("uniform-grid", "monte-carlo", "stratified")
DEFAULT_LADDER = tuple(j / 8 for j in range(1, 9))  # eta_j / L

# rounding slack allowed above 1 (orthonormality holds to ~1e-11)
_UPPER_SLACK = 1e-9


class CorrelatorBoundError(ArithmeticError):
    """A correlator value fell outside [0, 1], which orthonormality rules out."""


def correlator_at(es: EigenSystem, ell: int) -> float:
    """``sum_s |phi_s(0)| |phi_s(ell)|``; sites 0 and ``ell`` must lie in the window."""
    a = np.abs(es.column(0))
    b = np.abs(es.column(ell))
    v = math.fsum((a * b).tolist())
    _check_range(v)
    return v


def _check_range(v):
    v = np.asarray(v)
    if np.any(v < 0) or np.any(v > 1 + _UPPER_SLACK) or not np.all(np.isfinite(v)):
        raise CorrelatorBoundError(f"correlator outside [0, 1]: {v.min():.17g} .. {v.max():.17g}")


@dataclass(frozen=True)
class CorrelatorIntegrand:
    """``theta -> (S_l(theta) for l in ells)`` on a fixed window; picklable for worker pools."""

    params: ModelParams
    window: Window
    ells: tuple[int, ...]

    def __post_init__(self):
        for ell in (0, *self.ells):
            if ell not in self.window:
                raise ValueError(f"site {ell} outside window [{self.window.lo}, {self.window.hi}]")

    def eigensystem(self, theta: float) -> EigenSystem:
        return solve(self.params.with_theta(theta), self.window)

    def __call__(self, thetas) -> np.ndarray:
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        sites = self.window.sites
        diags = 2.0 * self.params.lam * np.cos(2.0 * np.pi * self.params.alpha.phase(sites[None, :], thetas[:, None]))
        idx = np.array(self.ells, dtype=np.int64) - self.window.lo
        out, flag = _kernels.correlator_block(np.ascontiguousarray(diags), -self.window.lo, idx,
                                              _CLUSTER_REL_GAP, _CLUSTER_ORTH_TOL)
        for i in np.flatnonzero(flag):
            v = np.abs(self.eigensystem(thetas[i]).vectors)
            out[i] = (v[:, -self.window.lo, None] * v[:, idx]).sum(axis=0)
        _check_range(out)
        return out

    def by_center(self, thetas) -> np.ndarray:
        """Per-sample sums grouped by localization centre: shape (n, window size), first ell only."""
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        ell = self.ells[0]
        out = np.zeros((thetas.shape[0], self.window.size))
        for i, th in enumerate(thetas):
            es = self.eigensystem(th)
            v = np.abs(es.vectors)
            terms = v[:, -self.window.lo] * v[:, ell - self.window.lo]
            np.add.at(out[i], es.centers - self.window.lo, terms)
        return out


@dataclass(frozen=True)
class Stratum:
    name: str
    arcs: IntervalSet
    measure: float
    thetas: np.ndarray = field(repr=False)

    @property
    def weight(self) -> float:
        return self.measure / self.thetas.shape[0] if self.thetas.shape[0] else 0.0


def resonance_shells(ell: int, params: ModelParams, ladder: Sequence[float] = DEFAULT_LADDER,
                     offsets=None) -> list[tuple[str, IntervalSet]]:
    """Partition of the phase circle by resonance strength at scale ``ell``.

    With ``m(theta) = min_{m in offsets} |sin pi(2 theta + m alpha)|`` and
    ``eta_j = ladder[j] * L``, shell j holds ``e^{-eta_{j+1} ell} < m <= e^{-eta_j ell}``,
    the last shell everything below ``e^{-eta_k ell}``, and the bulk ``m > e^{-eta_1 ell}``.
    """
    if list(ladder) != sorted(ladder) or not all(x > 0 for x in ladder):
        raise ValueError("ladder must be positive and increasing")
    if offsets is None:
        offsets = np.arange(0, 2 * abs(ell) + 1)
    cs = params.alpha.frac_multiple(np.asarray(offsets))
    lyap = params.lyapunov
    levels = [sine_sublevel(cs, math.exp(-x * lyap * abs(ell)), widen=0.0) for x in ladder]
    out = [("bulk", levels[0].complement())]
    for j in range(len(levels)):
        arcs = levels[j] - levels[j + 1] if j + 1 < len(levels) else levels[j]
        out.append((f"shell_{j + 1}", arcs))
    return out


def _paired_uniforms(n: int, rng: np.random.Generator) -> np.ndarray:
    """Two independent uniforms in each of n/2 equal cells of [0, 1)."""
    cell = np.arange(n) // 2
    return (cell + rng.random(n)) / (n // 2)


def stratified_plan(ell: int, params: ModelParams, n_bulk: int, n_shell: int, seed: int,
                    ladder: Sequence[float] = DEFAULT_LADDER, offsets=None) -> list[Stratum]:
    if n_bulk < 2 or n_shell < 2 or n_bulk % 2 or n_shell % 2:
        raise ValueError("sample counts per stratum must be even and >= 2")
    plan = []
    for j, (name, arcs) in enumerate(resonance_shells(ell, params, ladder, offsets)):
        meas = arcs.measure
        if not len(arcs) or meas == 0.0:
            plan.append(Stratum(name, arcs, 0.0, np.empty(0)))
            continue
        n = n_bulk if j == 0 else n_shell
        rng = np.random.default_rng([seed, abs(ell), j])
        plan.append(Stratum(name, arcs, meas, arcs.quantile(_paired_uniforms(n, rng))))
    return plan


@dataclass(frozen=True)
class CorrelatorEstimate:
    ell: int
    estimate: float
    error: float
    bulk: float
    shells: tuple[float, ...]
    counts: tuple[int, ...]
    strategy: str

    @property
    def n_samples(self) -> int:
        return sum(self.counts)


def _stratum_stats(stratum: Stratum, values: np.ndarray) -> tuple[float, float]:
    """(contribution, variance) for paired jittered samples."""
    n = values.shape[0]
    if n == 0:
        return 0.0, 0.0
    w = stratum.weight
    contrib = math.fsum((w * values).tolist())
    diff = values[0::2] - values[1::2]
    var = stratum.measure ** 2 * math.fsum((diff * diff).tolist()) / n ** 2
    return contrib, var


def _as_columns(values, n: int, k: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return np.broadcast_to(v, (n, k))


def _evaluate(fn: Callable, thetas: np.ndarray, k: int, workers: int) -> np.ndarray:
    if thetas.shape[0] == 0:
        return np.empty((0, k))
    if isinstance(fn, CorrelatorIntegrand):
        return map_rows(fn, thetas, workers)
    return _as_columns(fn(thetas), thetas.shape[0], k)


def _check_strategy(strategy: str):
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")


def _default_window(ells, window):
    ell_max = max(abs(int(x)) for x in ells)
    need = window_for(ell_max)
    if window is None:
        return need
    if window.lo > need.lo or window.hi < need.hi:
        raise ValueError(f"window [{window.lo}, {window.hi}] too small for l = {ell_max}; need {need}")
    return window


def uniform_grid(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def expectation_sweep(ells: Sequence[int], params: ModelParams, strategy: str = "stratified", *,
                      n_grid: int = 20_000, n_bulk: int = 256, n_shell: int = 256, seed: int = 0,
                      ladder: Sequence[float] = DEFAULT_LADDER, window: Window | None = None,
                      workers: int = 1, integrand: Callable | None = None) -> list[CorrelatorEstimate]:
    """Phase averages of S_l for several l.

    ``uniform-grid`` and ``monte-carlo`` share one set of phases (and one
    eigensystem per phase) across all l; ``stratified`` builds resonance shells
    for each l separately.  ``integrand`` replaces the correlator with any
    ``f(thetas) -> values`` (shape (n,) or (n, len(ells))).
    """
    _check_strategy(strategy)
    ells = [int(x) for x in ells]
    if not ells:
        raise ValueError("empty l range")
    k = len(ladder)
    if integrand is None:
        window = _default_window(ells, window)
    if strategy == "stratified":
        out = []
        for ell in ells:
            fn = integrand if integrand is not None else CorrelatorIntegrand(params, window, (ell,))
            plan = stratified_plan(ell, params, n_bulk, n_shell, seed, ladder)
            out.append(_stratified_estimate(ell, plan, fn, workers, k))
        return out
    fn = integrand if integrand is not None else CorrelatorIntegrand(params, window, tuple(ells))
    if strategy == "uniform-grid":
        if n_grid < 2 or n_grid % 2:
            raise ValueError("grid size must be even and >= 2")
        vals = _evaluate(fn, uniform_grid(n_grid), len(ells), workers)
        out = []
        for j, ell in enumerate(ells):
            col = vals[:, j]
            est = math.fsum(col.tolist()) / n_grid
            half = math.fsum(col[0::2].tolist()) / (n_grid // 2)
            out.append(CorrelatorEstimate(ell, est, abs(est - half), est, (0.0,) * k, (n_grid,), strategy))
        return out
    rng = np.random.default_rng([seed, 0x6D63])
    thetas = rng.random(n_grid)
    vals = _evaluate(fn, thetas, len(ells), workers)
    out = []
    for j, ell in enumerate(ells):
        col = vals[:, j]
        est = math.fsum(col.tolist()) / n_grid
        err = float(np.std(col, ddof=1)) / math.sqrt(n_grid) if n_grid > 1 else math.inf
        out.append(CorrelatorEstimate(ell, est, err, est, (0.0,) * k, (n_grid,), strategy))
    return out


def _stratified_estimate(ell: int, plan: list[Stratum], fn: Callable, workers: int, k: int) -> CorrelatorEstimate:
    thetas = np.concatenate([s.thetas for s in plan])
    vals = _evaluate(fn, thetas, 1, workers)[:, 0]
    parts, variances, counts = [], [], []
    pos = 0
    for s in plan:
        n = s.thetas.shape[0]
        c, v = _stratum_stats(s, vals[pos:pos + n])
        pos += n
        parts.append(c)
        variances.append(v)
        counts.append(n)
    est = math.fsum(parts)
    return CorrelatorEstimate(ell, est, math.sqrt(math.fsum(variances)), parts[0], tuple(parts[1:]),
                              tuple(counts), "stratified")


def expectation(ell: int, params: ModelParams, strategy: str = "stratified", **kw) -> CorrelatorEstimate:
    """Phase average of S_ell with an error bar; see :func:`expectation_sweep` for options."""
    return expectation_sweep([ell], params, strategy, **kw)[0]


@dataclass(frozen=True)
class GammaFit:
    ells: np.ndarray
    exponents: np.ndarray
    slope: float
    intercept: float
    gamma_plus: float
    gamma_minus: float
    tail_start: int
    dropped: tuple[int, ...] = ()


def gamma_fit(estimates: Sequence[CorrelatorEstimate]) -> GammaFit:
    """Pointwise exponents -ln E/l, least-squares slope of -ln E against l, and tail max/min."""
    ells, vals, dropped = [], [], []
    for e in estimates:
        if e.estimate > 0:
            ells.append(e.ell)
            vals.append(e.estimate)
        else:
            dropped.append(e.ell)
            warnings.warn(f"dropping l = {e.ell}: nonpositive estimate {e.estimate!r}", stacklevel=2)
    if len(ells) < 5:
        raise ValueError("need at least 5 points with positive estimates")
    order = np.argsort(ells, kind="stable")
    x = np.asarray(ells, dtype=float)[order]
    y = -np.log(np.asarray(vals, dtype=float)[order])
    xm = x.mean()
    dx = x - xm
    slope = float(np.dot(dx, y - y.mean()) / np.dot(dx, dx))
    intercept = float(y.mean() - slope * xm)
    expo = y / np.abs(x)
    tail = x >= x[0] + (x[-1] - x[0]) / 2
    return GammaFit(x.astype(int), expo, slope, intercept, float(expo[tail].max()), float(expo[tail].min()),
                    int(x[tail][0]), tuple(dropped))


@dataclass(frozen=True)
class CenterDecomposition:
    ell: int
    delta0: float
    centers: np.ndarray
    contributions: np.ndarray
    total: float
    far: float  # centres n >= (1 - delta0) l
    near: float  # centres n <= delta0 l
    middle: float

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.centers.tolist(), self.contributions.tolist()))


def decompose_by_center(ell: int, params: ModelParams, delta0: float = 0.2, strategy: str = "stratified", *,
                        n_grid: int = 20_000, n_bulk: int = 256, n_shell: int = 256, seed: int = 0,
                        ladder: Sequence[float] = DEFAULT_LADDER, window: Window | None = None,
                        workers: int = 1) -> CenterDecomposition:
    """Phase-averaged correlator split by the localization centre of each eigenfunction.

    Uses the same phases and weights as :func:`expectation` with equal arguments,
    so the contributions add up to its estimate.
    """
    if not 0 < delta0 < 0.5:
        raise ValueError("delta0 must lie in (0, 1/2)")
    _check_strategy(strategy)
    window = _default_window([ell], window)
    fn = CorrelatorIntegrand(params, window, (ell,))
    if strategy == "stratified":
        plan = stratified_plan(ell, params, n_bulk, n_shell, seed, ladder)
        thetas = np.concatenate([s.thetas for s in plan])
        weights = np.concatenate([np.full(s.thetas.shape[0], s.weight) for s in plan])
    else:
        thetas = uniform_grid(n_grid) if strategy == "uniform-grid" else np.random.default_rng([seed, 0x6D63]).random(n_grid)
        weights = np.full(n_grid, 1.0 / n_grid)
    table = map_rows(fn.by_center, thetas, workers)
    weighted = weights[:, None] * table
    contrib = np.array([math.fsum(weighted[:, j].tolist()) for j in range(window.size)])
    centers = window.sites
    far = math.fsum(contrib[centers >= (1 - delta0) * ell].tolist())
    near = math.fsum(contrib[centers <= delta0 * ell].tolist())
    mid_mask = (centers > delta0 * ell) & (centers < (1 - delta0) * ell)
    middle = math.fsum(contrib[mid_mask].tolist())
    return CenterDecomposition(ell, delta0, centers, contrib, math.fsum(contrib.tolist()), far, near, middle)


@dataclass(frozen=True)
class LayerCake:
    direct: float
    layered: float
    residual: float
    measure: float


def layercake_check(f: Callable, omega: IntervalSet, resolution: int = 100_000) -> LayerCake:
    """Compare ``int_omega f`` with ``int_0^1 |{theta in omega: f > t}| dt``.

    The direct side is a midpoint rule on even quadrature nodes; the layered side
    measures superlevel sets on the interleaved odd nodes and integrates over t
    with a ``resolution``-point midpoint rule.  ``f`` maps phases to values in [0, 1].
    """
    if resolution < 4 or resolution % 2:
        raise ValueError("resolution must be even and >= 4")
    meas = omega.measure
    if meas == 0.0:
        return LayerCake(0.0, 0.0, 0.0, 0.0)
    nodes = omega.quantile((np.arange(resolution) + 0.5) / resolution)
    vals = np.asarray(f(nodes), dtype=float).reshape(resolution, -1)[:, 0]
    if np.any(vals < 0) or np.any(vals > 1 + _UPPER_SLACK):
        raise ValueError("integrand must take values in [0, 1]")
    a, b = vals[0::2], vals[1::2]
    direct = meas * math.fsum(a.tolist()) / a.shape[0]
    t = (np.arange(resolution) + 0.5) / resolution
    srt = np.sort(b)
    above = b.shape[0] - np.searchsorted(srt, t, side="right")
    layered = meas * math.fsum((above / b.shape[0]).tolist()) / resolution
    return LayerCake(direct, layered, abs(direct - layered), meas)


@dataclass(frozen=True)
class LowerBoundReport:
    n: int
    gamma: float
    measure: float
    corrected_measure: float
    tail_bound: float
    target: float  # e^{-Gamma n}
    thetas: np.ndarray
    values: np.ndarray
    prop_large: np.ndarray
    c_win: float
    inconclusive: bool

    @property
    def fraction_quarter(self) -> float:
        return float(np.mean(self.values >= 0.25)) if self.values.size else math.nan

    @property
    def fraction_half(self) -> float:
        return float(np.mean(self.prop_large >= 0.5)) if self.prop_large.size else math.nan

    @property
    def integral_bound(self) -> float:
        """Lower bound on the full phase integral from the verified part of Theta."""
        if self.inconclusive:
            return 0.0
        return self.corrected_measure * 0.25 * self.fraction_quarter

    @property
    def measure_ok(self) -> bool:
        return self.corrected_measure >= self.target / 100

    @property
    def bound_ok(self) -> bool:
        return self.integral_bound >= self.target / 400


def _s_n_and_mass(args):
    params, window, n, c_win = args
    es = solve(params, window)
    return correlator_at(es, n), verify_prop_large(es, params, n, c_win).value


def lower_bound_experiment(params: ModelParams, n: int, gamma: float, n_samples: int = 50, seed: int = 0,
                           c_win: float = 2.0, window: Window | None = None, workers: int = 1,
                           k_cutoff: int | None = None) -> LowerBoundReport:
    """Sample the resonant phase set Theta at site n and test S_n >= 1/4 there."""
    from .parallel import ordered_map
    ts = theta_sets(gamma, n, params, k_cutoff=k_cutoff)
    n = abs(int(n))
    window = _default_window([n], window)
    target = math.exp(-gamma * n)
    corrected = ts.corrected_measure
    if not len(ts.theta) or corrected <= 0:
        return LowerBoundReport(n, gamma, ts.theta.measure, corrected, ts.tail_bound, target, np.empty(0),
                                np.empty(0), np.empty(0), c_win, True)
    rng = np.random.default_rng([seed, n, 0x7468])
    thetas = ts.theta.quantile((np.arange(n_samples) + rng.random(n_samples)) / n_samples)
    res = ordered_map(_s_n_and_mass, [(params.with_theta(t), window, n, c_win) for t in thetas], workers)
    vals = np.array([r[0] for r in res])
    mass = np.array([r[1] for r in res])
    return LowerBoundReport(n, gamma, ts.theta.measure, corrected, ts.tail_bound, target, thetas, vals, mass,
                            c_win, False)
