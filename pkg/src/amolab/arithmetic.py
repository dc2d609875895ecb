"""Frequencies: continued fractions, torus distance and Diophantine constants.

A :class:`Frequency` keeps its value split as ``hi + lo`` where ``hi`` carries
at most 26 significant bits.  For any integer ``|n| < 2**26`` the product
``n * hi`` is then exact in double precision, so ``frac(n * alpha)`` is
accurate to ~1e-16 absolute even for ``n`` in the millions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

_HI_BITS = 26
_MAX_EXACT_N = 2 ** _HI_BITS
_Q_LIMIT = 2 ** 63 - 1
_DPS = 60

# Quadratic surds known by name.  Values are mpmath expressions evaluated at _DPS.
SURDS = {
    "golden": lambda: (mpmath.sqrt(5) - 1) / 2,
    "silver": lambda: mpmath.sqrt(2) - 1,
    "sqrt2-1": lambda: mpmath.sqrt(2) - 1,
    "sqrt3-1": lambda: mpmath.sqrt(3) - 1,
    "bronze": lambda: (mpmath.sqrt(13) - 3) / 2,
}


def torus_norm(x):
    """Distance from ``x`` to the nearest integer (works elementwise on arrays)."""
    if np.ndim(x) == 0:
        x = float(x)
        return abs(x - round(x))
    x = np.asarray(x, dtype=float)
    return np.abs(x - np.rint(x))


def _split(value: float) -> tuple[float, float]:
    if value == 0.0:
        return 0.0, 0.0
    m, e = math.frexp(value)
    hi = math.ldexp(math.floor(m * 2 ** _HI_BITS) / 2 ** _HI_BITS, e)
    return hi, value - hi


@dataclass(frozen=True)
class Frequency:
    """An irrational (or rational) rotation number in (0, 1).

    ``cf_terms`` are the partial quotients a_1, a_2, ... (the integer part a_0 = 0
    is implied) and ``convergents`` the matching (p_n, q_n).
    """

    value: float
    hi: float
    lo: float
    cf_terms: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...]
    label: str = ""
    truncated: bool = False
    rational: Fraction | None = field(default=None, compare=False)

    @property
    def q(self) -> list[int]:
        return [q for _, q in self.convergents]

    def frac_multiple(self, n) -> np.ndarray:
        """``n * alpha mod 1`` in [0, 1), accurate for ``|n| < 2**26``."""
        n = np.asarray(n)
        if n.size and np.max(np.abs(n)) >= _MAX_EXACT_N:
            raise ValueError(f"|n| must be below {_MAX_EXACT_N} for exact reduction")
        nf = n.astype(float)
        a = nf * self.hi
        a = a - np.floor(a)
        b = nf * self.lo
        b = b - np.floor(b)
        s = a + b
        return s - np.floor(s)

    def phase(self, n, theta=0.0) -> np.ndarray:
        """``theta + n * alpha mod 1``; ``theta`` may be an array broadcasting against ``n``."""
        t = np.asarray(theta, dtype=float)
        t = t - np.floor(t)
        s = self.frac_multiple(n) + t
        return s - np.floor(s)

    def orbit_norm(self, k) -> np.ndarray:
        """``||k alpha||`` for integer ``k`` (array or scalar)."""
        return torus_norm(self.frac_multiple(k))

    def growth_sequence(self) -> list[float]:
        """Finite-depth sequence ``ln q_{n+1} / q_n``.

        Only a finite prefix of the limsup condition on q_n can ever be observed;
        interpretation is left to the caller.
        """
        qs = self.q
        return [math.log(qs[i + 1]) / qs[i] for i in range(len(qs) - 1)]


def _convergents(terms: Sequence[int]) -> list[tuple[int, int]]:
    p_prev, q_prev = 1, 0
    p, q = 0, 1  # a_0 = 0
    out = []
    for a in terms:
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        out.append((p, q))
    return out


def _terms_exact(x: Fraction, depth: int) -> tuple[list[int], bool]:
    terms: list[int] = []
    q_prev, q = 0, 1
    while len(terms) < depth and x != 0:
        inv = 1 / x
        a = math.floor(inv)
        if a * q + q_prev > _Q_LIMIT:
            return terms, True
        q, q_prev = a * q + q_prev, q
        terms.append(a)
        x = inv - a
    return terms, False


def _terms_mp(x, depth: int) -> tuple[list[int], bool]:
    terms: list[int] = []
    q_prev, q = 0, 1
    # stop once q^2 nears the working precision: later quotients are not trustworthy
    q_prec = mpmath.mpf(10) ** (_DPS // 2 - 5)
    with mpmath.workdps(_DPS):
        while len(terms) < depth and x != 0:
            inv = 1 / x
            a = int(mpmath.floor(inv))
            q_next = a * q + q_prev
            if q_next > _Q_LIMIT or q_next > q_prec:
                return terms, True
            q, q_prev = q_next, q
            terms.append(a)
            x = inv - a
    return terms, False


def continued_fraction(alpha, depth: int = 40) -> Frequency:
    """Expand ``alpha`` in (0, 1) into a :class:`Frequency` with ``depth`` quotients.

    ``alpha`` may be a float, a :class:`fractions.Fraction`, a decimal string or one
    of the surd names in :data:`SURDS`.  Rationals terminate early; expansions
    whose q_n would exceed a signed 64-bit integer stop with ``truncated=True``.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if isinstance(alpha, Frequency):
        alpha = alpha.rational if alpha.rational is not None else alpha.label or alpha.value
    label = ""
    rational = None
    if isinstance(alpha, str) and alpha in SURDS:
        label = alpha
        with mpmath.workdps(_DPS):
            exact = SURDS[alpha]()
            value = float(exact)
            hi, _ = _split(value)
            lo = float(exact - mpmath.mpf(hi))
            terms, truncated = _terms_mp(exact, depth)
    else:
        if isinstance(alpha, str):
            label = alpha
            rational = Fraction(alpha)
        elif isinstance(alpha, Fraction):
            rational = alpha
            label = str(alpha)
        else:
            rational = Fraction(float(alpha))
            label = repr(float(alpha))
        value = float(rational)
        hi, _ = _split(value)
        lo = float(rational - Fraction(hi))
        terms, truncated = _terms_exact(rational, depth)
    if not 0.0 < value < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {value}")
    return Frequency(
        value=value,
        hi=hi,
        lo=lo,
        cf_terms=tuple(terms),
        convergents=tuple(_convergents(terms)),
        label=label,
        truncated=truncated,
        rational=rational,
    )


def golden() -> Frequency:
    return continued_fraction("golden", 40)


@dataclass(frozen=True)
class DiophantineFit:
    kappa: float
    tau: float
    worst_k: int
    k_max: int
    failed: bool = False
    failure_k: int | None = None


_KAPPA_GRID = np.round(np.arange(0.5, 4.0 + 1e-9, 0.01), 2)


def diophantine_fit(alpha: Frequency, k_max: int) -> DiophantineFit:
    """Empirical Diophantine constants over ``1 <= k <= k_max``.

    For a fixed exponent every finite range admits some tau > 0, so kappa is
    chosen by a scale-stability rule: the smallest grid kappa for which the
    worst ratio ``||k alpha|| k**kappa`` over the upper log-range
    ``k > sqrt(k_max)`` is no worse than over ``k <= sqrt(k_max)``.  tau is the
    exact minimum of that ratio over the whole range and ``worst_k`` its witness.
    A vanishing ``||k alpha||`` (rational alpha) is reported through ``failed``.
    """
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    k = np.arange(1, k_max + 1)
    if alpha.rational is not None and alpha.rational.denominator <= k_max:
        d = np.array([float(abs(kk * alpha.rational - round(kk * alpha.rational))) for kk in
                      range(1, alpha.rational.denominator + 1)])
        first = int(np.argmax(d == 0.0)) + 1
        return DiophantineFit(math.nan, 0.0, first, k_max, failed=True, failure_k=first)
    d = alpha.orbit_norm(k)
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        first = int(k[zero[0]])
        return DiophantineFit(math.nan, 0.0, first, k_max, failed=True, failure_k=first)
    logk = np.log(k.astype(float))
    logd = np.log(d)
    split = max(1, int(math.isqrt(k_max)))
    chosen = float(_KAPPA_GRID[-1])
    for kappa in _KAPPA_GRID:
        r = logd + kappa * logk
        if r[split:].min() >= r[:split].min():
            chosen = float(kappa)
            break
    r = logd + chosen * logk
    i = int(np.argmin(r))
    return DiophantineFit(chosen, float(math.exp(r[i])), int(k[i]), k_max)
