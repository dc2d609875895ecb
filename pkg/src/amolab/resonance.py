"""Phase sets cut out by small values of |sin pi(2 theta + c)|, kept as exact arc unions."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

WIDEN = 1e-14


class IntervalSet:
    """Finite union of disjoint closed arcs of the circle [0, 1).

    Arcs are stored sorted with ``0 <= start < end <= 1``; an arc crossing 0
    is split in two.  Touching or overlapping arcs are merged on construction.
    """

    __slots__ = ("starts", "ends")

    def __init__(self, starts=(), ends=(), *, _normalized: bool = False):
        s = np.asarray(starts, dtype=float).ravel()
        e = np.asarray(ends, dtype=float).ravel()
        if not _normalized:
            s, e = _normalize(s, e)
        self.starts = s
        self.ends = e
        self.starts.flags.writeable = False
        self.ends.flags.writeable = False

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls(np.empty(0), np.empty(0), _normalized=True)

    @classmethod
    def full(cls) -> "IntervalSet":
        return cls(np.array([0.0]), np.array([1.0]), _normalized=True)

    @property
    def measure(self) -> float:
        return math.fsum((self.ends - self.starts).tolist())

    def __len__(self) -> int:
        return self.starts.shape[0]

    def __bool__(self) -> bool:
        return len(self) > 0

    def __repr__(self) -> str:
        return f"IntervalSet({len(self)} arcs, measure={self.measure:.6g})"

    def __eq__(self, other) -> bool:
        return (isinstance(other, IntervalSet) and np.array_equal(self.starts, other.starts)
                and np.array_equal(self.ends, other.ends))

    def arcs(self) -> list[tuple[float, float]]:
        return list(zip(self.starts.tolist(), self.ends.tolist()))

    def contains(self, theta):
        t = np.asarray(theta, dtype=float) % 1.0
        if not len(self):
            ok = np.zeros(np.shape(t), dtype=bool)
        else:
            i = np.searchsorted(self.starts, t, side="right") - 1
            ok = (i >= 0) & (t <= self.ends[np.clip(i, 0, None)])
        return bool(ok) if np.ndim(ok) == 0 else ok

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(np.concatenate([self.starts, other.starts]),
                           np.concatenate([self.ends, other.ends]))

    def complement(self) -> "IntervalSet":
        if not len(self):
            return IntervalSet.full()
        s = np.concatenate([[0.0], self.ends])
        e = np.concatenate([self.starts, [1.0]])
        keep = e > s
        return IntervalSet(s[keep], e[keep], _normalized=True)

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        return self.complement().union(other.complement()).complement()

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        return self.intersection(other.complement())

    __or__ = union
    __and__ = intersection
    __sub__ = difference

    def issubset(self, other: "IntervalSet", tol: float = 0.0) -> bool:
        return self.difference(other).measure <= tol

    def quantile(self, u) -> np.ndarray:
        """Map u in [0, 1) to phases by inverse transform on cumulative arc length."""
        if not len(self):
            raise ValueError("cannot sample from an empty set")
        lengths = self.ends - self.starts
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        pos = np.asarray(u, dtype=float) * cum[-1]
        i = np.clip(np.searchsorted(cum, pos, side="right") - 1, 0, len(self) - 1)
        return np.minimum(self.starts[i] + (pos - cum[i]), self.ends[i])

    def sample(self, n: int, seed: int, stratified: bool = True) -> np.ndarray:
        """``n`` phases distributed proportionally to arc length (jittered strata by default)."""
        rng = np.random.default_rng(seed)
        u = rng.random(n)
        if stratified:
            u = (np.arange(n) + u) / n
        return self.quantile(u)

    def to_text(self) -> str:
        buf = io.StringIO()
        for a, b in self.arcs():
            buf.write(f"{a:.17g} {b:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "IntervalSet":
        rows = [line.split() for line in text.splitlines() if line.strip()]
        if not rows:
            return cls.empty()
        arr = np.array(rows, dtype=float)
        return cls(arr[:, 0], arr[:, 1])


def _normalize(s: np.ndarray, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if s.shape != e.shape:
        raise ValueError("starts and ends differ in length")
    keep = e > s
    s, e = s[keep], e[keep]
    if not s.size:
        return np.empty(0), np.empty(0)
    if np.any(e - s >= 1.0):
        return np.array([0.0]), np.array([1.0])
    shift = np.floor(s)
    s = s - shift
    e = e - shift
    wrap = e > 1.0
    s = np.concatenate([s, np.zeros(int(wrap.sum()))])
    e = np.concatenate([np.where(wrap, 1.0, e), e[wrap] - 1.0])
    order = np.argsort(s, kind="stable")
    s, e = s[order], e[order]
    run = np.maximum.accumulate(e)
    new = np.ones(s.shape[0], dtype=bool)
    new[1:] = s[1:] > run[:-1]
    idx = np.flatnonzero(new)
    starts = s[idx]
    ends = np.maximum.reduceat(e, idx)
    return starts, ends


def _sublevel_arcs(c, eps: float, widen: float):
    c = np.atleast_1d(np.asarray(c, dtype=float)) % 1.0
    half = math.asin(eps) / (2 * math.pi) + widen
    centers = np.concatenate([(1.0 - c) / 2.0, (2.0 - c) / 2.0])
    return centers - half, centers + half


def sine_sublevel(c, eps: float, widen: float = WIDEN) -> IntervalSet:
    """``{theta in [0,1): |sin pi(2 theta + c)| <= eps}``; ``c`` may be an array (union).

    Endpoints are moved outward by ``widen`` so membership errs toward inclusion.
    """
    if eps >= 1.0:
        return IntervalSet.full()
    if eps <= 0.0:
        return IntervalSet.empty()
    s, e = _sublevel_arcs(c, eps, widen)
    return IntervalSet(s, e)


def _centers(base: int, radius: int, params) -> np.ndarray:
    return params.alpha.frac_multiple(np.arange(base - radius, base + radius + 1))


def set_A(eta: float, n: int, params, widen: float = WIDEN) -> IntervalSet:
    """Phases where some |sin pi(2 theta + alpha(2n + n'))|, |n'| <= 10|n|, is <= e^{-eta|n|}."""
    if eta <= 0 or n == 0:
        raise ValueError("need eta > 0 and n != 0")
    return sine_sublevel(_centers(2 * n, 10 * abs(n), params), math.exp(-eta * abs(n)), widen)


def set_B(eta: float, n: int, ell: int, params, widen: float = WIDEN) -> IntervalSet:
    """As :func:`set_A` with scale |n - ell| in place of |n| (centre still 2n)."""
    if eta <= 0 or n == ell:
        raise ValueError("need eta > 0 and n != ell")
    m = abs(n - ell)
    return sine_sublevel(_centers(2 * n, 10 * m, params), math.exp(-eta * m), widen)


def sublevel_measure(c, eps: float) -> float:
    """Exact measure of the union of ``{|sin pi(2 theta + c_i)| <= eps}``, without outward widening.

    In ``y = 2 theta mod 1`` each set is an arc of width ``w = (2/pi) arcsin eps``
    around ``-c_i``; a union of equal arcs has measure ``sum_i min(gap_i, w)``
    over cyclic gaps between sorted centres.  Unlike differences of endpoints
    this stays accurate when ``w`` is far below the spacing of doubles near 1/2.
    """
    if eps >= 1.0:
        return 1.0
    if eps <= 0.0:
        return 0.0
    y = np.sort((-np.atleast_1d(np.asarray(c, dtype=float))) % 1.0)
    w = 2.0 * math.asin(eps) / math.pi
    gaps = np.diff(np.concatenate([y, [y[0] + 1.0]]))
    return min(1.0, math.fsum(np.minimum(gaps, w).tolist()))


def measure_A(eta: float, n: int, params) -> float:
    """Exact |A_{eta;n}| (see :func:`sublevel_measure`)."""
    if eta <= 0 or n == 0:
        raise ValueError("need eta > 0 and n != 0")
    return sublevel_measure(_centers(2 * n, 10 * abs(n), params), math.exp(-eta * abs(n)))


def measure_B(eta: float, n: int, ell: int, params) -> float:
    """Exact |B_{eta;n;ell}|."""
    if eta <= 0 or n == ell:
        raise ValueError("need eta > 0 and n != ell")
    m = abs(n - ell)
    return sublevel_measure(_centers(2 * n, 10 * m, params), math.exp(-eta * m))


def measure_bound_A(eta: float, n: int) -> float:
    return (20 * abs(n) + 1) * math.exp(-eta * abs(n))


@dataclass(frozen=True)
class ThetaSets:
    theta1: IntervalSet
    theta2: IntervalSet
    theta: IntervalSet
    tail_bound: float
    k_range: tuple[int, int]

    @property
    def corrected_measure(self) -> float:
        """|Theta| minus the bound on what the untruncated tail of Theta_2 could remove."""
        return self.theta.measure - self.tail_bound


def theta_sets(gamma: float, n: int, params, k_cutoff: int | None = None, k_factor: int = 1000,
               widen: float = WIDEN) -> ThetaSets:
    """Resonant phases at n that avoid stronger resonances at large |k|.

    Theta_1 = {e^{-2 Gamma|n|} <= |sin pi(2 theta + n alpha)| <= e^{-Gamma|n|}},
    Theta_2 = union over k_factor|n| <= |k| <= k_cutoff of {|sin pi(2 theta + k alpha)| <= e^{-L|k|/100}},
    Theta = Theta_1 minus Theta_2.  The tail |k| > k_cutoff is bounded analytically.
    """
    lyap = params.lyapunov
    if not lyap < gamma <= 2 * lyap:
        raise ValueError(f"Gamma must lie in (L, 2L] = ({lyap:.6g}, {2 * lyap:.6g}]")
    n = abs(int(n))
    if n == 0:
        raise ValueError("n must be nonzero")
    if k_cutoff is None:
        k_cutoff = max(100_000, 2000 * n)
    c_n = float(params.alpha.frac_multiple(n))
    outer = sine_sublevel(c_n, math.exp(-gamma * n), widen)
    inner = sine_sublevel(c_n, math.exp(-2 * gamma * n), widen)
    theta1 = outer - inner
    k_lo = k_factor * n
    ks = np.arange(k_lo, k_cutoff + 1)
    ks = np.concatenate([-ks[::-1], ks])
    eps_k = np.exp(-lyap * np.abs(ks) / 100.0)
    cs = params.alpha.frac_multiple(ks) % 1.0
    half = np.arcsin(eps_k) / (2 * math.pi) + widen
    centers = np.concatenate([(1.0 - cs) / 2.0, (2.0 - cs) / 2.0])
    half = np.concatenate([half, half])
    theta2 = IntervalSet(centers - half, centers + half)
    r = math.exp(-lyap / 100.0)
    tail = 4.0 * math.exp(-lyap * (k_cutoff + 1) / 100.0) / (1.0 - r)
    return ThetaSets(theta1, theta2, theta1 - theta2, tail, (k_lo, k_cutoff))


@dataclass(frozen=True)
class ResonanceHit:
    x0: int
    value: float
    degenerate: bool


def sine_profile(theta: float, center: int, radius: int, params) -> tuple[np.ndarray, np.ndarray]:
    """Offsets x in [-radius, radius] and |sin pi(2 theta + alpha(2 center + x))|."""
    x = np.arange(-radius, radius + 1)
    ang = params.alpha.phase(2 * center + x, 2.0 * theta)
    return x, np.abs(np.sin(np.pi * ang))


def resonance_locator(theta: float, center: int, radius: int, params, tie_tol: float = 1e-12) -> ResonanceHit:
    """Offset minimising |sin pi(2 theta + alpha(2 center + x))| over |x| <= radius."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    x, v = sine_profile(theta, center, radius, params)
    i = int(np.argmin(v))
    rest = np.delete(v, i)
    degenerate = bool(rest.size and rest.min() - v[i] <= tie_tol)
    return ResonanceHit(int(x[i]), float(v[i]), degenerate)


def min_sine(theta, offsets, params) -> np.ndarray:
    """``min_m |sin pi(2 theta + m alpha)|`` over integer offsets ``m``, for an array of phases."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    cs = params.alpha.frac_multiple(np.asarray(offsets))
    ang = (2.0 * theta[:, None] + cs[None, :]) % 1.0
    return np.abs(np.sin(np.pi * ang)).min(axis=1)
