"""Compiled inner loops (numba).  Everything here works on plain float arrays."""
from __future__ import annotations

import numpy as np
from numba import njit

EPS = np.finfo(np.float64).eps
SAFMIN = np.finfo(np.float64).tiny


@njit(cache=True)
def sturm_count(d, e2, x, pivmin):
    """Number of eigenvalues strictly below ``x`` (``e2`` holds squared off-diagonals)."""
    n = d.shape[0]
    count = 0
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0.0:
        count += 1
    for i in range(1, n):
        q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


_BATCH = 16


@njit(cache=True)
def _unconverged(lo, hi, mid, pivmin):
    return mid > lo and mid < hi and hi - lo > 2.0 * EPS * max(abs(lo), abs(hi)) + pivmin


@njit(cache=True)
def _isolate(d, e2, gl, gu, pivmin):
    """Brackets [lo_i, hi_i] holding eigenvalue i, from a shared bisection tree.

    Splitting stops once a bracket holds a single eigenvalue (or cannot be
    split further), so refinement of separate eigenvalues starts narrow.
    """
    n = d.shape[0]
    blo = np.empty(n)
    bhi = np.empty(n)
    cap = 2 * n + 8
    slo = np.empty(cap)
    shi = np.empty(cap)
    sclo = np.empty(cap, np.int64)
    schi = np.empty(cap, np.int64)
    slo[0] = gl
    shi[0] = gu
    sclo[0] = 0
    schi[0] = n
    top = 1
    while top > 0:
        top -= 1
        lo = slo[top]
        hi = shi[top]
        clo = sclo[top]
        chi = schi[top]
        mid = 0.5 * (lo + hi)
        if chi - clo == 1 or not _unconverged(lo, hi, mid, pivmin) or top + 2 > cap:
            for k in range(clo, chi):
                blo[k] = lo
                bhi[k] = hi
            continue
        c = sturm_count(d, e2, mid, pivmin)
        if c > clo:
            slo[top] = lo
            shi[top] = mid
            sclo[top] = clo
            schi[top] = c
            top += 1
        if chi > c:
            slo[top] = mid
            shi[top] = hi
            sclo[top] = c
            schi[top] = chi
            top += 1
    return blo, bhi


@njit(cache=True)
def _bounds(d, e):
    n = d.shape[0]
    gl = np.inf
    gu = -np.inf
    for i in range(n):
        r = 0.0
        if i > 0:
            r += abs(e[i - 1])
        if i < n - 1:
            r += abs(e[i])
        gl = min(gl, d[i] - r)
        gu = max(gu, d[i] + r)
    tnorm = max(abs(gl), abs(gu))
    pivmin = SAFMIN * max(1.0, np.max(e * e)) if n > 1 else SAFMIN
    pad = 2.0 * EPS * tnorm + 2.0 * pivmin
    return gl - pad, gu + pad, tnorm, pivmin


@njit(cache=True)
def _bisect(d, e2, blo, bhi, pivmin):
    """Refine bracket i to eigenvalue i.

    Eigenvalues are bisected in groups of ``_BATCH`` whose Sturm recurrences are
    interleaved, which hides the latency of the dependent divisions.
    """
    n = d.shape[0]
    out = np.empty(n)
    lo = np.empty(_BATCH)
    hi = np.empty(_BATCH)
    mid = np.empty(_BATCH)
    q = np.empty(_BATCH)
    cnt = np.empty(_BATCH, np.int64)
    for b0 in range(0, n, _BATCH):
        m = min(_BATCH, n - b0)
        for j in range(_BATCH):
            lo[j] = blo[b0 + j] if j < m else blo[0]
            hi[j] = bhi[b0 + j] if j < m else bhi[0]
        for _ in range(200):
            done = True
            for j in range(_BATCH):
                mid[j] = 0.5 * (lo[j] + hi[j])
                if j < m and _unconverged(lo[j], hi[j], mid[j], pivmin):
                    done = False
            if done:
                break
            for j in range(_BATCH):
                q[j] = d[0] - mid[j]
                if abs(q[j]) < pivmin:
                    q[j] = -pivmin
                cnt[j] = 1 if q[j] < 0.0 else 0
            for i in range(1, n):
                di = d[i]
                ei = e2[i - 1]
                for j in range(_BATCH):
                    t = di - mid[j] - ei / q[j]
                    if abs(t) < pivmin:
                        t = -pivmin
                    q[j] = t
                    cnt[j] += 1 if t < 0.0 else 0
            for j in range(m):
                if not _unconverged(lo[j], hi[j], mid[j], pivmin):
                    continue
                if cnt[j] > b0 + j:
                    hi[j] = mid[j]
                else:
                    lo[j] = mid[j]
        for j in range(m):
            out[b0 + j] = 0.5 * (lo[j] + hi[j])
    return out


@njit(cache=True)
def bisect_eigenvalues(d, e):
    """All eigenvalues of the symmetric tridiagonal (d, e), ascending, by Sturm bisection."""
    n = d.shape[0]
    if n == 1:
        return d.copy()
    gl, gu, _, pivmin = _bounds(d, e)
    e2 = e * e
    blo, bhi = _isolate(d, e2, gl, gu, pivmin)
    return _bisect(d, e2, blo, bhi, pivmin)


@njit(cache=True)
def bisect_near(d, e, prev, shift):
    """Eigenvalues of (d, e) given those of a matrix differing by at most ``shift`` in max norm.

    By Weyl's inequality eigenvalue i lies within ``shift`` of ``prev[i]``, so
    bisection starts from that bracket (widened by a rounding pad).
    """
    n = d.shape[0]
    if n == 1:
        return d.copy()
    gl, gu, tnorm, pivmin = _bounds(d, e)
    pad = shift * (1.0 + 1e-12) + 8.0 * EPS * max(tnorm, 1.0) + 2.0 * pivmin
    blo = np.maximum(prev - pad, gl)
    bhi = np.minimum(prev + pad, gu)
    return _bisect(d, e * e, blo, bhi, pivmin)


@njit(cache=True)
def twist_gammas(d, e, lam, pivmin):
    """|gamma_k| for every twist index, plus the forward/backward pivots."""
    n = d.shape[0]
    dp = np.empty(n)
    dm = np.empty(n)
    dp[0] = d[0] - lam
    if abs(dp[0]) < pivmin:
        dp[0] = -pivmin
    for j in range(1, n):
        dp[j] = d[j] - lam - e[j - 1] * e[j - 1] / dp[j - 1]
        if abs(dp[j]) < pivmin:
            dp[j] = -pivmin
    dm[n - 1] = d[n - 1] - lam
    if abs(dm[n - 1]) < pivmin:
        dm[n - 1] = -pivmin
    for j in range(n - 2, -1, -1):
        dm[j] = d[j] - lam - e[j] * e[j] / dm[j + 1]
        if abs(dm[j]) < pivmin:
            dm[j] = -pivmin
    g = np.empty(n)
    for j in range(n):
        g[j] = abs(dp[j] + dm[j] - (d[j] - lam))
    return g, dp, dm


@njit(cache=True)
def twisted_vector_at(e, dp, dm, k):
    """Unnormalised twisted vector with z[k] = 1."""
    n = dp.shape[0]
    z = np.zeros(n)
    z[k] = 1.0
    for j in range(k - 1, -1, -1):
        z[j] = -(e[j] / dp[j]) * z[j + 1]
    for j in range(k + 1, n):
        z[j] = -(e[j - 1] / dm[j]) * z[j - 1]
    return z


@njit(cache=True)
def _normalise(z):
    zmax = np.max(np.abs(z))
    nrm = zmax * np.sqrt(np.sum((z / zmax) ** 2))
    return z / nrm, nrm


@njit(cache=True)
def twisted_vector(d, e, lam, pivmin):
    """Eigenvector for the (accurate) eigenvalue ``lam`` via a twisted factorization.

    Forward and backward pivots are combined at the twist index with the
    smallest |gamma|; the vector is then grown outward by ratios, which keeps
    small components relatively accurate in exponentially decaying tails.
    Returns (vector normalised to unit 2-norm, twist index, |gamma|/||z||).
    """
    n = d.shape[0]
    if n == 1:
        z = np.ones(1)
        return z, 0, 0.0
    g, dp, dm = twist_gammas(d, e, lam, pivmin)
    k = int(np.argmin(g))
    z, nrm = _normalise(twisted_vector_at(e, dp, dm, k))
    return z, k, g[k] / nrm


@njit(cache=True)
def twisted_vectors(d, e, lams):
    n = d.shape[0]
    m = lams.shape[0]
    out = np.empty((m, n))
    pivmin = SAFMIN * max(1.0, np.max(e * e)) if n > 1 else SAFMIN
    for i in range(m):
        z, _, _ = twisted_vector(d, e, lams[i], pivmin)
        out[i, :] = z
    return out


@njit(cache=True)
def solve_shifted(d, e, sigma, b, tiny):
    """Solve (T - sigma I) y = b by Gaussian elimination with partial pivoting."""
    n = d.shape[0]
    dd = d - sigma
    dl = e.copy()
    du = e.copy()
    du2 = np.zeros(max(n - 2, 0))
    y = b.copy()
    for i in range(n - 1):
        if abs(dd[i]) >= abs(dl[i]):
            if dd[i] == 0.0:
                dd[i] = tiny
            fact = dl[i] / dd[i]
            dd[i + 1] -= fact * du[i]
            y[i + 1] -= fact * y[i]
        else:
            fact = dd[i] / dl[i]
            dd[i] = dl[i]
            temp = dd[i + 1]
            dd[i + 1] = du[i] - fact * temp
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du2[i]
            du[i] = temp
            temp = y[i]
            y[i] = y[i + 1]
            y[i + 1] = temp - fact * y[i + 1]
    if dd[n - 1] == 0.0:
        dd[n - 1] = tiny
    y[n - 1] /= dd[n - 1]
    if n > 1:
        y[n - 2] = (y[n - 2] - du[n - 2] * y[n - 1]) / dd[n - 2]
    for i in range(n - 3, -1, -1):
        y[i] = (y[i] - du[i] * y[i + 1] - du2[i] * y[i + 2]) / dd[i]
    return y


@njit(cache=True)
def inverse_iteration_cluster(d, e, lams, start, tnorm, n_iter):
    """Inverse iteration with modified Gram-Schmidt inside one eigenvalue cluster."""
    m, n = start.shape
    out = np.zeros((m, n))
    tiny = EPS * tnorm
    prev = -np.inf
    for i in range(m):
        sigma = lams[i]
        # separate coincident shifts so each solve targets a distinct direction
        if sigma <= prev + 10.0 * EPS * tnorm:
            sigma = prev + 10.0 * EPS * tnorm
        prev = sigma
        x = start[i].copy()
        for _ in range(n_iter):
            y = solve_shifted(d, e, sigma, x, tiny)
            for _rep in range(2):
                for j in range(i):
                    c = 0.0
                    for t in range(n):
                        c += out[j, t] * y[t]
                    for t in range(n):
                        y[t] -= c * out[j, t]
            nrm = np.sqrt(np.sum(y * y))
            x = y / nrm
        out[i] = x
    return out


@njit(cache=True)
def qr_cocycle(energy, pot, n_steps_half):
    """Product of transfer matrices [[E - V_k, -1], [1, 0]] in QR (Iwasawa) form.

    The running product is kept as Q @ R with Q a rotation and
    R = e^{log_r11} [[s1, x], [0, s2 e^{log_r22 - log_r11}]].
    Returns (c, s, x, s1, s2, log_r11, log_r22, log_r11_at_half).
    """
    c = 1.0
    s = 0.0
    x = 0.0
    s1 = 1.0
    s2 = 1.0
    lr11 = 0.0
    lr22 = 0.0
    lr11_half = 0.0
    for k in range(pot.shape[0]):
        if k == n_steps_half:
            lr11_half = lr11
        t00 = energy - pot[k]
        # A = T @ Q, Q = [[c, -s], [s, c]]
        a00 = t00 * c - s
        a10 = c
        a01 = -t00 * s - c
        a11 = -s
        rho = np.hypot(a00, a10)
        cn = a00 / rho
        sn = a10 / rho
        u = cn * a01 + sn * a11
        w = -sn * a01 + cn * a11
        # R_new = [[rho, u], [0, w]] @ R_old
        ratio = np.exp(lr22 - lr11)
        x = x + (u / rho) * s2 * ratio * s1
        if w < 0.0:
            s2 = -s2
        lr11 += np.log(rho)
        lr22 += np.log(abs(w))
        c = cn
        s = sn
    if n_steps_half >= pot.shape[0]:
        lr11_half = lr11
    return c, s, x, s1, s2, lr11, lr22, lr11_half


@njit(cache=True)
def correlator_block(diags, i0, idx, rel_gap, orth_tol):
    """``sum_s |z_s[i0] z_s[idx[j]]|`` for each row of ``diags`` (unit off-diagonals).

    Rows whose nearly degenerate eigenvectors fail the orthogonality check are
    flagged so the caller can recompute them with cluster repair.
    """
    m, n = diags.shape
    out = np.zeros((m, idx.shape[0]))
    flag = np.zeros(m, np.bool_)
    e = np.ones(max(n - 1, 0))
    pivmin = SAFMIN
    lams = np.empty(n)
    for r in range(m):
        d = diags[r]
        shift = np.max(np.abs(d - diags[r - 1])) if r > 0 else np.inf
        if shift < 1e-2:
            lams = np.sort(bisect_near(d, e, lams, shift))
        else:
            lams = np.sort(bisect_eigenvalues(d, e))
        tnorm = 0.0
        for i in range(n):
            a = abs(d[i]) + (1.0 if i > 0 else 0.0) + (1.0 if i < n - 1 else 0.0)
            tnorm = max(tnorm, a)
        vecs = np.empty((n, n))
        for s in range(n):
            if n == 1:
                vecs[s, 0] = 1.0
            else:
                z, _, _ = twisted_vector(d, e, lams[s], pivmin)
                vecs[s] = z
        start = 0
        for s in range(1, n + 1):
            if s < n and lams[s] - lams[s - 1] < rel_gap * tnorm:
                continue
            for a in range(start, s):
                for b in range(a + 1, s):
                    dot = 0.0
                    for t in range(n):
                        dot += vecs[a, t] * vecs[b, t]
                    if abs(dot) > orth_tol:
                        flag[r] = True
            start = s
        for j in range(idx.shape[0]):
            acc = 0.0
            for s in range(n):
                acc += abs(vecs[s, i0] * vecs[s, idx[j]])
            out[r, j] = acc
    return out, flag
