"""Transfer-matrix cocycle: overflow-safe products, Lyapunov exponents, growth checks.

The one-step map is ``T_k(E) = [[E - V(k), -1], [1, 0]]``, sending
``U(k) = (phi(k), phi(k-1))`` to ``U(k+1)`` for any solution of ``H phi = E phi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .localization import window_max
from .operator import ModelParams, Window, potential
from .resonance import resonance_locator


@dataclass(frozen=True)
class ScaledMatrix:
    """A 2x2 product ``e^{log_scale} * m`` with ``max|m_ij|`` in [1, 2).

    Internally the product is held as ``Q R`` (rotation times upper
    triangular), with the diagonal of R kept as logarithms, so the
    determinant stays exact even when the two singular values are
    e^{+-L n} apart and ``m`` itself is numerically rank one.
    """

    q: np.ndarray
    x: float
    s22: float
    log_r11: float
    log_r22: float
    log_r11_half: float = field(default=0.0, repr=False)

    @classmethod
    def identity(cls) -> "ScaledMatrix":
        return cls(np.eye(2), 0.0, 1.0, 0.0, 0.0)

    def _r_tilde(self) -> np.ndarray:
        return np.array([[1.0, self.x], [0.0, self.s22 * math.exp(self.log_r22 - self.log_r11)]])

    @property
    def m(self) -> np.ndarray:
        a = self.q @ self._r_tilde()
        _, e = math.frexp(float(np.max(np.abs(a))))
        return np.ldexp(a, 1 - e)

    @property
    def log_scale(self) -> float:
        a = self.q @ self._r_tilde()
        _, e = math.frexp(float(np.max(np.abs(a))))
        return self.log_r11 + (e - 1) * math.log(2.0)

    def log_abs_det(self) -> float:
        return self.log_r11 + self.log_r22

    def log_norm(self) -> float:
        """ln of the spectral norm of the true product."""
        return self.log_r11 + math.log(np.linalg.norm(self._r_tilde(), 2))

    def to_array(self) -> np.ndarray:
        """The true product (may overflow for long products)."""
        return math.exp(self.log_r11) * (self.q @ self._r_tilde())

    def apply(self, v) -> tuple[np.ndarray, float]:
        """``(w, log_s)`` with true product @ v = e^{log_s} w."""
        w = self.q @ (self._r_tilde() @ np.asarray(v, dtype=float))
        return w, self.log_r11


def transfer_step(energy: float, params: ModelParams, k: int) -> np.ndarray:
    return np.array([[energy - potential(params, k), -1.0], [1.0, 0.0]])


def _product(energy: float, pot: np.ndarray) -> ScaledMatrix:
    c, s, x, _, s2, lr11, lr22, lr_half = _kernels.qr_cocycle(float(energy), pot, pot.shape[0] // 2)
    q = np.array([[c, -s], [s, c]])
    return ScaledMatrix(q, x, s2, lr11, lr22, lr_half)


def transfer_product(energy: float, params: ModelParams, start: int, stop: int) -> ScaledMatrix:
    """``T_{stop-1} ... T_{start}``, mapping U(start) to U(stop)."""
    if start > stop:
        raise ValueError("start must not exceed stop")
    if start == stop:
        return ScaledMatrix.identity()
    pot = np.asarray(potential(params, np.arange(start, stop)), dtype=float)
    return _product(energy, np.atleast_1d(pot))


@dataclass(frozen=True)
class LyapunovEstimate:
    value: float
    tail: float
    n_steps: int
    energy: float

    @property
    def spread(self) -> float:
        return abs(self.value - self.tail)


def lyapunov_estimate(energy: float, params: ModelParams, n_steps: int = 100_000, start: int = 0) -> LyapunovEstimate:
    """``(1/n) ln ||T_n ... T_1||`` plus the growth rate over the last half of the orbit."""
    if n_steps < 1000:
        raise ValueError("n_steps must be >= 1000")
    prod = transfer_product(energy, params, start, start + n_steps)
    half = n_steps // 2
    tail = (prod.log_r11 - prod.log_r11_half) / (n_steps - half)
    return LyapunovEstimate(prod.log_norm() / n_steps, tail, n_steps, float(energy))


def u_norms(phi: np.ndarray) -> np.ndarray:
    """``||U(k)||`` for k = lo+1 .. hi (index j corresponds to site lo + 1 + j)."""
    phi = np.asarray(phi, dtype=float)
    return np.hypot(phi[1:], phi[:-1])


@dataclass(frozen=True)
class GrowthReport:
    constant: float
    log_constant: float
    worst_pair: tuple[int, int] | None
    n_pairs: int
    n_excluded_sites: int
    cap: float

    @property
    def within_cap(self) -> bool:
        return self.constant <= self.cap


def growth_bound_check(phi, window: Window, lyap: float, eps: float, min_separation: int = 20,
                       cap: float = 1e6) -> GrowthReport:
    """Smallest C with ``C^-1 e^{-(L+eps)d} ||U(k2)|| <= ||U(k1)|| <= C e^{(L+eps)d} ||U(k2)||``.

    Scans every ordered pair of interior sites at distance ``d >= min_separation``.
    Sites where U underflows to zero are excluded and counted.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    u = u_norms(phi)
    sites = np.arange(window.lo + 1, window.hi + 1)
    keep = u > 0
    u, sites = u[keep], sites[keep]
    excluded = int((~keep).sum())
    if sites.size < 2:
        return GrowthReport(1.0, 0.0, None, 0, excluded, cap)
    lu = np.log(u)
    d = np.abs(sites[:, None] - sites[None, :])
    excess = lu[:, None] - lu[None, :] - (lyap + eps) * d
    mask = d >= min_separation
    if not mask.any():
        return GrowthReport(1.0, 0.0, None, 0, excluded, cap)
    excess = np.where(mask, excess, -np.inf)
    i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
    logc = max(0.0, float(excess[i, j]))
    worst = (int(sites[i]), int(sites[j]))
    return GrowthReport(math.exp(logc), logc, worst, int(mask.sum()), excluded, cap)


@dataclass
class BlockGeometry:
    """Configuration of the three-point block decay statement (frame origin at ``origin``)."""

    origin: int
    k: int
    gamma: float
    eps: float
    c: float = 1.0
    y3: int | None = None


@dataclass(frozen=True)
class BlockVerdict:
    y: int
    applicable: bool
    r_y: float = math.nan
    bound: float = math.nan
    passed: bool = False
    reason: str = ""


@dataclass
class BlockReport:
    k0: int
    points: tuple[int, ...]
    verdicts: list[BlockVerdict]

    @property
    def applicable(self) -> list[BlockVerdict]:
        return [v for v in self.verdicts if v.applicable]

    @property
    def pass_fraction(self) -> float:
        a = self.applicable
        return sum(v.passed for v in a) / len(a) if a else math.nan


def block_decay_check(phi, window: Window, params: ModelParams, geom: BlockGeometry, ys=None) -> BlockReport:
    """Window maxima test of the three-point block decay statement.

    With ``y1 = 0``, ``y2 = k0`` (the minimiser of |sin pi(2 theta' + alpha x)|
    over |x| <= 2Ck in the frame centred at ``origin``) and ``y3``, each ``y``
    strictly inside an admissible gap [y_i, y_j] must satisfy
    ``r_y <= max_i r_{y_i} exp(-(L - eps)(|y - y_i| - 3 gamma k))``.
    Points failing the geometric preconditions are returned as inapplicable.
    """
    lyap = params.lyapunov
    k = geom.k
    span = int(math.floor(2 * geom.c * k))
    loc = resonance_locator(params.theta, geom.origin, span, params)
    k0 = loc.x0
    y3 = geom.y3 if geom.y3 is not None else (span if k0 <= 0 else -span)
    pts = tuple(sorted({0, k0, y3}))
    radius = int(math.floor(10 * geom.gamma * k))
    sep = 10 * geom.gamma * k

    def r(y):
        return window_max(phi, window, geom.origin + y, radius)

    def covered(y):
        return window.lo <= geom.origin + y - radius and geom.origin + y + radius <= window.hi

    if ys is None:
        ys = range(pts[0], pts[-1] + 1)
    verdicts = []
    for y in ys:
        gap = None
        for a, b in zip(pts[:-1], pts[1:]):
            if a <= y <= b:
                gap = (a, b)
                break
        if gap is None:
            verdicts.append(BlockVerdict(y, False, reason="outside the configuration"))
            continue
        a, b = gap
        if b - a < k:
            verdicts.append(BlockVerdict(y, False, reason="gap shorter than k"))
            continue
        if max(abs(a), abs(b)) > span:
            verdicts.append(BlockVerdict(y, False, reason="endpoint beyond 2Ck"))
            continue
        if abs(y - a) < sep or abs(y - b) < sep:
            verdicts.append(BlockVerdict(y, False, reason="closer than 10 gamma k to an endpoint"))
            continue
        if not (covered(y) and covered(a) and covered(b)):
            verdicts.append(BlockVerdict(y, False, reason="window does not cover the block"))
            continue
        rate = lyap - geom.eps
        bound = max(r(a) * math.exp(-rate * (abs(y - a) - 3 * geom.gamma * k)),
                    r(b) * math.exp(-rate * (abs(y - b) - 3 * geom.gamma * k)))
        ry = r(y)
        verdicts.append(BlockVerdict(y, True, ry, bound, ry <= bound))
    return BlockReport(k0, pts, verdicts)


@dataclass(frozen=True)
class ResonanceVerdict:
    applicable: bool
    reason: str = ""
    t_measured: float = math.nan
    u_k: float = math.nan
    bound: float = math.nan
    passed: bool = False


def single_resonance_check(phi, window: Window, params: ModelParams, k: int, t: float, eps: float,
                           origin: int = 0, min_k: int = 20, t_rtol: float = 1e-6) -> ResonanceVerdict:
    """Check ``||U(k)|| <= max(||U(0)||, ||U(2k)||) e^{-(L - t - eps)|k|}`` in the frame at ``origin``.

    Applicable only when ``|sin pi(2 theta' + alpha k)| = e^{-t|k|}`` (theta' the
    phase seen from ``origin``) to ``t_rtol`` relative in t, ``0 < t < L`` and
    ``|k| >= min_k``.
    """
    lyap = params.lyapunov
    if abs(k) < min_k:
        return ResonanceVerdict(False, f"|k| < {min_k}")
    if not 0 < t < lyap:
        return ResonanceVerdict(False, "t outside (0, L)")
    ang = params.alpha.phase(2 * origin + k, 2 * params.theta)
    sv = abs(math.sin(math.pi * float(ang)))
    t_meas = -math.log(sv) / abs(k) if sv > 0 else math.inf
    if not abs(t_meas - t) <= t_rtol * t:
        return ResonanceVerdict(False, "resonance strength does not match t", t_meas)
    sites = [origin, origin + k, origin + 2 * k]
    if any(not (window.lo + 1 <= y <= window.hi) for y in sites):
        return ResonanceVerdict(False, "window does not cover U(0), U(k), U(2k)", t_meas)
    phi = np.asarray(phi, dtype=float)

    def unorm(y):
        i = y - window.lo
        return math.hypot(phi[i], phi[i - 1])

    bound = max(unorm(sites[0]), unorm(sites[2])) * math.exp(-(lyap - t - eps) * abs(k))
    uk = unorm(sites[1])
    return ResonanceVerdict(True, "", t_meas, uk, bound, uk <= bound)
