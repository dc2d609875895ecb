"""Per-eigenfunction checks of exponential decay away from the localization centre.

All verdicts compare logarithms, so bounds far below the double-precision
range are still decided correctly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operator import EigenSystem, ModelParams, Window
from .resonance import IntervalSet, resonance_locator

OPPOSITE = "opposite-side"
SAME_SIDE = "same-side-eta"
COROLLARY = "corollary-uniform"


def window_max(phi, window: Window, y: int, radius: int) -> float:
    """``max |phi|`` over the sites ``y - radius .. y + radius``."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if y - radius < window.lo or y + radius > window.hi:
        raise IndexError(f"[{y - radius}, {y + radius}] not covered by [{window.lo}, {window.hi}]")
    i = y - window.lo
    return float(np.max(np.abs(np.asarray(phi)[i - radius:i + radius + 1])))


def wronskian(f, g, k: int, lo: int = 0) -> float:
    """``f(k+1) g(k) - f(k) g(k+1)`` for sequences indexed from ``lo``."""
    i = k - lo
    if i < 0 or i + 1 >= len(f) or i + 1 >= len(g):
        raise IndexError(f"sites {k}, {k + 1} not in both sequences")
    return float(f[i + 1] * g[i] - f[i] * g[i + 1])


def _log_abs(x: float) -> float:
    return math.log(abs(x)) if x != 0 else -math.inf


@dataclass(frozen=True)
class DecayVerdict:
    s: int
    center: int
    ell: int
    applicable: bool
    case: str = ""
    x0: int = 0
    sine: float = math.nan
    eta: float = math.nan
    log_bound: float = math.nan
    log_ratio: float = math.nan
    passed: bool = False
    boundary_mass: float = math.nan
    reason: str = ""
    theta: float = math.nan

    @property
    def bound(self) -> float:
        return math.exp(self.log_bound)

    @property
    def ratio(self) -> float:
        return math.exp(self.log_ratio)


def _gate(es: EigenSystem, s: int, ell: int, min_scale: int, boundary_tol: float, edge_fraction: float):
    w = es.window
    c = int(es.centers[s])
    margin = int(math.ceil(edge_fraction * w.size))
    if ell not in w:
        return "probe outside window"
    if es.boundary_mass[s] >= boundary_tol:
        return "boundary mass too large"
    if c < w.lo + margin or c > w.hi - margin:
        return "centre near window edge"
    if abs(ell - c) < min_scale:
        return "distance below minimum scale"
    return ""


def _log_ratio(es: EigenSystem, s: int, ell: int) -> float:
    c = int(es.centers[s])
    v = es.vectors[s]
    return _log_abs(v[ell - es.window.lo]) - _log_abs(v[c - es.window.lo])


def _probes(es: EigenSystem, ell, indices):
    idx = range(es.size) if indices is None else [int(i) for i in indices]
    if np.ndim(ell) == 0:
        return [(s, int(ell)) for s in idx]
    ell = np.asarray(ell)
    if ell.shape[0] != es.size:
        raise ValueError("need one probe site per eigenfunction")
    return [(s, int(ell[s])) for s in idx]


def classify_and_verify(es: EigenSystem, params: ModelParams, ell, eps: float, min_scale: int = 15,
                        boundary_tol: float = 1e-8, edge_fraction: float = 0.1,
                        indices=None) -> list[DecayVerdict]:
    """Decay of each eigenfunction at site ``ell`` relative to its leftmost maximum.

    The strongest resonance x0 of the centre n_s within |x| <= 2|ell - n_s| sits
    at the mirror site n_s + x0.  If that site lies on the other side of n_s from
    ``ell`` the bound is e^{-(L - eps) d}; otherwise the resonance strength
    eta = -ln|sin| / d weakens it to e^{-(L - eps - eta) d}, and the statement
    says nothing once eta >= L - eps.

    ``ell`` may be a single site or one site per eigenfunction; ``indices``
    restricts the eigenfunctions examined.
    """
    lyap = params.lyapunov
    if not 0 < eps < lyap:
        raise ValueError("eps must lie in (0, L)")
    out = []
    for s, ell in _probes(es, ell, indices):
        c = int(es.centers[s])
        reason = _gate(es, s, ell, min_scale, boundary_tol, edge_fraction)
        if reason:
            out.append(DecayVerdict(s, c, ell, False, reason=reason, boundary_mass=float(es.boundary_mass[s]),
                                    theta=params.theta))
            continue
        d = abs(ell - c)
        hit = resonance_locator(params.theta, c, 2 * d, params)
        eta = -math.log(hit.value) / d if hit.value > 0 else math.inf
        if (ell - c) * hit.x0 < 0:
            case, log_bound = OPPOSITE, -(lyap - eps) * d
        elif eta < lyap - eps:
            case, log_bound = SAME_SIDE, -(lyap - eps - max(eta, 0.0)) * d
        else:
            out.append(DecayVerdict(s, c, ell, False, SAME_SIDE, hit.x0, hit.value, eta,
                                    boundary_mass=float(es.boundary_mass[s]),
                                    reason="resonance stronger than e^{-(L-eps) d}", theta=params.theta))
            continue
        lr = _log_ratio(es, s, ell)
        out.append(DecayVerdict(s, c, ell, True, case, hit.x0, hit.value, eta, log_bound, lr, lr <= log_bound,
                                float(es.boundary_mass[s]), theta=params.theta))
    return out


def verify_corollary(es: EigenSystem, params: ModelParams, ell, eta: float, eps: float, min_scale: int = 15,
                     boundary_tol: float = 1e-8, edge_fraction: float = 0.1, indices=None) -> list[DecayVerdict]:
    """Uniform bound e^{-(L - eta - eps) d} wherever every |sin| in |x| <= 2d exceeds e^{-eta d}."""
    lyap = params.lyapunov
    if not (0 < eps < lyap and 0 < eta < lyap - eps):
        raise ValueError("need 0 < eps < L and 0 < eta < L - eps")
    out = []
    for s, ell in _probes(es, ell, indices):
        c = int(es.centers[s])
        reason = _gate(es, s, ell, min_scale, boundary_tol, edge_fraction)
        if reason:
            out.append(DecayVerdict(s, c, ell, False, COROLLARY, boundary_mass=float(es.boundary_mass[s]),
                                    reason=reason, theta=params.theta))
            continue
        d = abs(ell - c)
        hit = resonance_locator(params.theta, c, 2 * d, params)
        if not hit.value > math.exp(-eta * d):
            out.append(DecayVerdict(s, c, ell, False, COROLLARY, hit.x0, hit.value, eta,
                                    boundary_mass=float(es.boundary_mass[s]),
                                    reason="min-sine hypothesis fails", theta=params.theta))
            continue
        log_bound = -(lyap - eta - eps) * d
        lr = _log_ratio(es, s, ell)
        out.append(DecayVerdict(s, c, ell, True, COROLLARY, hit.x0, hit.value, eta, log_bound, lr,
                                lr <= log_bound, float(es.boundary_mass[s]), theta=params.theta))
    return out


def recheck(es: EigenSystem, params: ModelParams, v: DecayVerdict, eps: float) -> bool:
    """Recompute a verdict's inequality from the raw eigenvector; True when consistent with ``v.passed``."""
    lyap = params.lyapunov
    d = abs(v.ell - v.center)
    if v.case == OPPOSITE:
        log_bound = -(lyap - eps) * d
    elif v.case == SAME_SIDE:
        log_bound = -(lyap - eps - max(v.eta, 0.0)) * d
    else:
        log_bound = -(lyap - v.eta - eps) * d
    vec = es.vectors[v.s]
    lo = es.window.lo
    num, den = abs(vec[v.ell - lo]), abs(vec[v.center - lo])
    holds = num == 0 or math.log(num) - math.log(den) <= log_bound
    return holds == v.passed


class HypothesisError(ValueError):
    """The resonance hypothesis of the palindrome check does not hold."""

    def __init__(self, message: str, sine: float):
        super().__init__(message)
        self.sine = sine


@dataclass(frozen=True)
class PalindromeEntry:
    s: int
    center: int
    sup_norm: float
    diff_minus: float  # |phi(n) - phi(0)|
    diff_plus: float  # |phi(n) + phi(0)|
    iota: int
    bound: float
    passed: bool
    wronskian_max: float
    wronskian_bound: float
    wronskian_passed: bool
    increment_constant: float


@dataclass
class PalindromeReport:
    n: int
    gamma: float
    eps: float
    eps_prime: float
    sine: float
    entries: list[PalindromeEntry] = field(default_factory=list)

    @property
    def pass_fraction(self) -> float:
        return float(np.mean([e.passed for e in self.entries])) if self.entries else math.nan

    @property
    def wronskian_pass_fraction(self) -> float:
        return float(np.mean([e.wronskian_passed for e in self.entries])) if self.entries else math.nan


def reflected_wronskian(phi: np.ndarray, window: Window, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Sites k and W(phi, phi_hat)(k) with phi_hat(k) = phi(n - k), phi extended by zero.

    The range covers every k where both phi and its reflection satisfy their
    eigen-equations, plus one site on each side.
    """
    lo, hi = window.lo, window.hi
    k_lo = max(lo, n - hi) - 1
    k_hi = min(hi, n - lo)
    ks = np.arange(k_lo, k_hi + 1)

    def ext(sites):
        out = np.zeros(sites.shape)
        ok = (sites >= lo) & (sites <= hi)
        out[ok] = phi[sites[ok] - lo]
        return out

    w = ext(ks + 1) * ext(n - ks) - ext(ks) * ext(n - ks - 1)
    return ks, w


def palindrome_check(params: ModelParams, n: int, gamma: float, es: EigenSystem, eps: float | None = None,
                     eps_prime: float | None = None, boundary_tol: float = 1e-8,
                     edge_fraction: float = 0.1) -> PalindromeReport:
    """Reflection symmetry phi(n) = +-phi(0) forced by a resonance |sin pi(2 theta + n alpha)| <= e^{-Gamma n}.

    For each interior eigenfunction records |phi(n) -+ phi(0)|, the better sign,
    the bound e^{-(Gamma - L - eps) n / 2} ||phi||_inf, and the Wronskian of phi with
    its reflection against ||phi||_inf^2 e^{-(Gamma - eps') n}.
    """
    lyap = params.lyapunov
    if not lyap <= gamma <= 2 * lyap:
        raise ValueError("Gamma must lie in [L, 2L]")
    if n <= 0:
        raise ValueError("n must be positive")
    eps = 0.1 * (gamma - lyap) if eps is None else eps
    eps_prime = 0.2 * (gamma - lyap) if eps_prime is None else eps_prime
    sine = abs(math.sin(math.pi * float(params.alpha.phase(n, 2.0 * params.theta))))
    if sine > math.exp(-gamma * n):
        raise HypothesisError(f"|sin pi(2 theta + n alpha)| = {sine:.3e} exceeds e^(-Gamma n)", sine)
    w = es.window
    if 0 not in w or n not in w:
        raise IndexError("window must contain 0 and n")
    report = PalindromeReport(n, gamma, eps, eps_prime, sine)
    bound_factor = math.exp(-0.5 * (gamma - lyap - eps) * n)
    wbound_factor = math.exp(-(gamma - eps_prime) * n)
    vmis = np.abs(_potential_mismatch(params, w, n))
    for s in es.interior(boundary_tol, edge_fraction):
        phi = es.vectors[s]
        a = float(es.sup_norm[s])
        p0, pn = phi[0 - w.lo], phi[n - w.lo]
        dm, dp = abs(pn - p0), abs(pn + p0)
        iota = -1 if dm <= dp else 1
        bound = bound_factor * a
        ks, wr = reflected_wronskian(phi, w, n)
        wmax = float(np.max(np.abs(wr)))
        wb = a * a * wbound_factor
        inc = np.abs(np.diff(wr))
        prod = np.abs(phi[ks[1:] - w.lo] * phi[n - ks[1:] - w.lo])
        denom = math.exp(-gamma * n) * prod
        ok = denom > 0
        cinc = float(np.max(inc[ok] / denom[ok])) if ok.any() else 0.0
        report.entries.append(PalindromeEntry(int(s), int(es.centers[s]), a, dm, dp, iota, bound,
                                              min(dm, dp) <= bound, wmax, wb, wmax <= wb, cinc))
    report.potential_mismatch = float(vmis.max()) if vmis.size else 0.0
    return report


def _potential_mismatch(params: ModelParams, window: Window, n: int) -> np.ndarray:
    from .operator import potential
    lo, hi = max(window.lo, n - window.hi), min(window.hi, n - window.lo)
    k = np.arange(lo, hi + 1)
    return np.asarray(potential(params, k)) - np.asarray(potential(params, n - k))


@dataclass(frozen=True)
class PropLargeReport:
    value: float
    at_least_half: bool
    in_theta: bool | None


def verify_prop_large(es: EigenSystem, params: ModelParams, n: int, c_win: float,
                      theta_set: IntervalSet | None = None) -> PropLargeReport:
    """``sum_{|m| <= c_win |n|} sum_{n_s = m} |phi_s(0)|^2`` and whether it reaches 1/2."""
    col = es.column(0)
    near = np.abs(es.centers) <= c_win * abs(n)
    value = math.fsum((col[near] ** 2).tolist())
    in_theta = None if theta_set is None else bool(theta_set.contains(params.theta))
    return PropLargeReport(value, value >= 0.5, in_theta)
