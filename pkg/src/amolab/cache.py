"""Content-addressed on-disk cache of eigensystems.

One file per record: a fixed little-endian header, the energies, the
eigenvector matrix, and a SHA-256 of everything before it.  A record that
fails its checksum, its header or the eigensystem checks is a miss.
"""
from __future__ import annotations

import hashlib
import logging
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .operator import SOLVER_VERSION, EigenSystem, ModelParams, Window, solve

ENV_VAR = "AMOLAB_CACHE"
MAGIC = b"AMOEIGS\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIqqqdddd")
_DIGEST = 32

log = logging.getLogger(__name__)


def cache_key(params: ModelParams, window: Window, solver_version: int = SOLVER_VERSION) -> str:
    """Hex digest identifying (lam, alpha, theta, window, solver version)."""
    a = params.alpha
    text = "|".join([float(params.lam).hex(), float(a.hi).hex(), float(a.lo).hex(), float(params.theta).hex(),
                     str(window.lo), str(window.hi), str(solver_version), str(FORMAT_VERSION)])
    return hashlib.sha256(text.encode()).hexdigest()


def encode(params: ModelParams, es: EigenSystem, solver_version: int = SOLVER_VERSION) -> bytes:
    w = es.window
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, solver_version, es.size, w.lo, w.hi, params.lam,
                        params.alpha.hi, params.alpha.lo, params.theta)
    body = head + es.energies.astype("<f8").tobytes() + np.ascontiguousarray(es.vectors, dtype="<f8").tobytes()
    return body + hashlib.sha256(body).digest()


def decode(blob: bytes, params: ModelParams, window: Window,
           solver_version: int = SOLVER_VERSION) -> EigenSystem | None:
    """Parse a record; ``None`` on any mismatch or corruption."""
    if len(blob) < _HEADER.size + _DIGEST:
        return None
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        return None
    magic, fmt, sv, n, lo, hi, lam, ahi, alo, theta = _HEADER.unpack_from(body)
    if (magic != MAGIC or fmt != FORMAT_VERSION or sv != solver_version or (lo, hi) != (window.lo, window.hi)
            or (lam, ahi, alo, theta) != (params.lam, params.alpha.hi, params.alpha.lo, params.theta)):
        return None
    if n != window.size or len(body) != _HEADER.size + 8 * (n + n * n):
        return None
    data = np.frombuffer(body, dtype="<f8", offset=_HEADER.size).astype(float)
    energies, vectors = data[:n].copy(), data[n:].reshape(n, n).copy()
    es = EigenSystem.from_vectors(window, energies, vectors)
    if not _plausible(es):
        return None
    return es


def _plausible(es: EigenSystem, tol: float = 1e-8) -> bool:
    if not (np.all(np.isfinite(es.vectors)) and np.all(np.diff(es.energies) >= 0)):
        return False
    return max(es.orthonormality_defects()) < tol


class EigenCache:
    """Directory of records named by :func:`cache_key`; writes go through an atomic rename."""

    def __init__(self, root: str | os.PathLike | None = None, solver_version: int = SOLVER_VERSION):
        root = root if root is not None else os.environ.get(ENV_VAR)
        if root is None:
            raise ValueError(f"no cache directory given and ${ENV_VAR} unset")
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.solver_version = solver_version
        self.hits = 0
        self.misses = 0

    def path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.eig"

    def get(self, params: ModelParams, window: Window) -> EigenSystem | None:
        p = self.path(cache_key(params, window, self.solver_version))
        try:
            blob = p.read_bytes()
        except FileNotFoundError:
            self.misses += 1
            return None
        es = decode(blob, params, window, self.solver_version)
        if es is None:
            log.warning("cache record %s is corrupt or stale; ignoring it", p.name)
            self.misses += 1
            return None
        self.hits += 1
        return es

    def put(self, params: ModelParams, es: EigenSystem) -> Path:
        p = self.path(cache_key(params, es.window, self.solver_version))
        p.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=p.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(encode(params, es, self.solver_version))
            os.replace(tmp, p)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return p

    def solve(self, params: ModelParams, window: Window) -> EigenSystem:
        """Cached :func:`amolab.operator.solve`; a bad record is rebuilt."""
        es = self.get(params, window)
        if es is None:
            es = solve(params, window)
            self.put(params, es)
        return es


def cached_solve(params: ModelParams, window: Window, cache: EigenCache | None) -> EigenSystem:
    return cache.solve(params, window) if cache is not None else solve(params, window)
