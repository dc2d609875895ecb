"""Finite truncations of the almost Mathieu operator and their eigensystems.

The operator acts by ``(H u)(n) = u(n+1) + u(n-1) + 2 lam cos 2 pi (theta + n alpha) u(n)``.
A window ``[lo, hi]`` with Dirichlet boundary gives a symmetric tridiagonal
matrix whose off-diagonal entries are all one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .arithmetic import Frequency, continued_fraction

SOLVER_VERSION = 1

# consecutive eigenvalues closer than this fraction of ||T|| get an explicit orthogonality check
_CLUSTER_REL_GAP = 1e-4
_CLUSTER_ORTH_TOL = 1e-11


class EigenSolverError(RuntimeError):
    """Raised when a cluster of eigenvectors cannot be orthonormalised."""

    def __init__(self, message: str, cluster: np.ndarray):
        super().__init__(message)
        self.cluster = cluster


@dataclass(frozen=True)
class ModelParams:
    lam: float
    alpha: Frequency
    theta: float

    @classmethod
    def make(cls, lam: float, alpha="golden", theta: float = 0.0) -> "ModelParams":
        if not isinstance(alpha, Frequency):
            alpha = continued_fraction(alpha, 40)
        return cls(float(lam), alpha, float(theta) % 1.0)

    @property
    def lyapunov(self) -> float:
        """ln(lam); the Lyapunov exponent on the spectrum when lam > 1."""
        return math.log(self.lam)

    @property
    def supercritical(self) -> bool:
        return self.lam > 1.0

    def with_theta(self, theta: float) -> "ModelParams":
        return ModelParams(self.lam, self.alpha, float(theta) % 1.0)


@dataclass(frozen=True)
class Window:
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty window [{self.lo}, {self.hi}]")

    @classmethod
    def centered(cls, radius: int, center: int = 0) -> "Window":
        return cls(center - radius, center + radius)

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def __contains__(self, n) -> bool:
        return self.lo <= n <= self.hi

    def index(self, n: int) -> int:
        if not self.lo <= n <= self.hi:
            raise IndexError(f"site {n} outside window [{self.lo}, {self.hi}]")
        return n - self.lo


def window_for(ell_max: int, factor: int = 4, minimum: int = 0) -> Window:
    """Window rule for experiments probing distance up to ``ell_max``: [-4 l, 4 l] at least."""
    return Window.centered(max(factor * abs(int(ell_max)), minimum, 1))


def potential(params: ModelParams, n) -> np.ndarray | float:
    """``2 lam cos 2 pi (theta + n alpha)`` with the angle reduced mod 1 first."""
    ang = params.alpha.phase(n, params.theta)
    v = 2.0 * params.lam * np.cos(2.0 * np.pi * ang)
    return float(v) if np.ndim(v) == 0 else v


@dataclass(frozen=True)
class Tridiagonal:
    diag: np.ndarray
    off: np.ndarray
    window: Window

    @property
    def size(self) -> int:
        return self.diag.shape[0]

    def norm1(self) -> float:
        a = np.abs(self.diag).copy()
        a[:-1] += np.abs(self.off)
        a[1:] += np.abs(self.off)
        return float(a.max())

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """``H @ x`` for a vector or a stack of row vectors."""
        y = self.diag * x
        y[..., :-1] += self.off * x[..., 1:]
        y[..., 1:] += self.off * x[..., :-1]
        return y


def build_hamiltonian(params: ModelParams, window: Window) -> Tridiagonal:
    diag = np.atleast_1d(np.asarray(potential(params, window.sites), dtype=float))
    return Tridiagonal(diag, np.ones(window.size - 1), window)


def leftmost_max(phi, lo: int = 0) -> int:
    """Smallest site where |phi| attains its maximum (exact comparison)."""
    a = np.abs(np.asarray(phi, dtype=float))
    if not a.any():
        raise ValueError("phi vanishes identically")
    return lo + int(np.argmax(a == a.max()))


@dataclass(frozen=True)
class EigenSystem:
    """Complete eigensystem of a truncated operator.

    ``vectors[s]`` is the s-th eigenvector over ``window`` (row layout), paired
    with ``energies[s]`` in ascending order.  ``centers[s]`` is the leftmost
    maximum site of vector s.
    """

    window: Window
    energies: np.ndarray
    vectors: np.ndarray
    centers: np.ndarray = field(repr=False)
    sup_norm: np.ndarray = field(repr=False)
    boundary_mass: np.ndarray = field(repr=False)

    @classmethod
    def from_vectors(cls, window: Window, energies: np.ndarray, vectors: np.ndarray) -> "EigenSystem":
        a = np.abs(vectors)
        sup = a.max(axis=1)
        centers = window.lo + np.argmax(a == sup[:, None], axis=1)
        bmass = vectors[:, 0] ** 2 + vectors[:, -1] ** 2
        return cls(window, energies, vectors, centers.astype(np.int64), sup, bmass)

    @property
    def size(self) -> int:
        return self.energies.shape[0]

    def column(self, n: int) -> np.ndarray:
        """Values phi_s(n) for all s."""
        return self.vectors[:, self.window.index(n)]

    def residuals(self, h: Tridiagonal) -> np.ndarray:
        r = h.matvec(self.vectors) - self.energies[:, None] * self.vectors
        return np.linalg.norm(r, axis=1)

    def orthonormality_defects(self) -> tuple[float, float]:
        """Max deviation of sum_n |phi_s(n)|^2 and sum_s |phi_s(n)|^2 from 1, and of the Gram matrix from I."""
        v = self.vectors
        gram = v @ v.T
        d1 = float(np.max(np.abs(gram - np.eye(self.size))))
        gram2 = v.T @ v
        d2 = float(np.max(np.abs(gram2 - np.eye(self.size))))
        return d1, d2

    def interior(self, boundary_tol: float = 1e-8, edge_fraction: float = 0.1) -> np.ndarray:
        """Indices s away from truncation effects: small boundary mass, centre not near an edge."""
        margin = int(math.ceil(edge_fraction * self.window.size))
        ok = (self.boundary_mass < boundary_tol)
        ok &= self.centers >= self.window.lo + margin
        ok &= self.centers <= self.window.hi - margin
        return np.flatnonzero(ok)


def _search_twists(h: Tridiagonal, lams: np.ndarray, first: np.ndarray, tnorm: float) -> np.ndarray | None:
    """Fill a numerically degenerate cluster with twisted vectors at distinct twist sites.

    States that are degenerate to working precision are localized in different
    regions, so twisting inside each region recovers each one with accurate tails.
    """
    m = lams.shape[0]
    n = h.size
    pivmin = _kernels.SAFMIN * max(1.0, float(np.max(h.off ** 2))) if n > 1 else _kernels.SAFMIN
    accepted = [first]
    res_tol = 1e3 * _kernels.EPS * tnorm
    for i in range(1, m):
        g, dp, dm = _kernels.twist_gammas(h.diag, h.off, lams[i], pivmin)
        covered = np.zeros(n, dtype=bool)
        for v in accepted:
            covered |= np.abs(v) > 1e-6 * np.abs(v).max()
        found = None
        for k in np.argsort(g)[:256]:
            if covered[k]:
                continue
            z = _kernels.twisted_vector_at(h.off, dp, dm, int(k))
            z, nrm = _kernels._normalise(z)
            if g[k] / nrm > res_tol:
                break
            if max(abs(float(v @ z)) for v in accepted) < 1e-12:
                found = z
                break
            covered |= np.abs(z) > 1e-6
        if found is None:
            return None
        accepted.append(found)
    return np.array(accepted)


def _fix_clusters(h: Tridiagonal, lams: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    tnorm = h.norm1()
    n = lams.shape[0]
    close = np.diff(lams) < _CLUSTER_REL_GAP * tnorm
    i = 0
    while i < n - 1:
        if not close[i]:
            i += 1
            continue
        j = i
        while j < n - 1 and close[j]:
            j += 1
        block = slice(i, j + 1)
        size = j - i + 1
        v = vecs[block]
        if np.max(np.abs(v @ v.T - np.eye(size))) > _CLUSTER_ORTH_TOL:
            fixed = _search_twists(h, lams[block], v[0], tnorm)
            if fixed is None:
                rng = np.random.default_rng(i)
                start = rng.standard_normal((size, h.size))
                fixed = _kernels.inverse_iteration_cluster(h.diag, h.off, lams[block], start, tnorm, 4)
            g2 = fixed @ fixed.T
            if not np.all(np.isfinite(fixed)) or np.max(np.abs(g2 - np.eye(size))) > 1e-9:
                raise EigenSolverError("could not orthonormalise eigenvector cluster", lams[block])
            vecs[block] = fixed
        i = j + 1
    return vecs


def eigensystem(h: Tridiagonal) -> EigenSystem:
    """All eigenpairs of ``h``.

    Eigenvalues come from Sturm-sequence bisection; each eigenvector from a
    twisted factorization at its eigenvalue.  Clusters of nearly degenerate
    eigenvalues are checked for orthogonality and, where needed, recomputed by
    inverse iteration with re-orthogonalization.
    """
    lams = np.sort(_kernels.bisect_eigenvalues(h.diag, h.off))
    vecs = _kernels.twisted_vectors(h.diag, h.off, lams)
    vecs = _fix_clusters(h, lams, vecs)
    return EigenSystem.from_vectors(h.window, lams, vecs)


def solve(params: ModelParams, window: Window) -> EigenSystem:
    return eigensystem(build_hamiltonian(params, window))
