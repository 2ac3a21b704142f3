"""Dense linear algebra and seeded random streams.

Matrices are plain ``numpy.ndarray`` objects in float64 / complex128.
"""
from __future__ import annotations

import hashlib

import numpy as np

STREAM_LABELS = ("data", "init", "zo", "psi", "bb-init")


def qr_thin(m):
    """Thin QR with a non-negative diagonal in R.

    Uses LAPACK Householder reflections; columns of Q are sign-normalised so
    that repeated factorisations of the same input are bit-identical.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"qr_thin expects a 2-D array, got shape {m.shape}")
    n, k = m.shape
    if n < k:
        raise ValueError(f"qr_thin needs rows >= cols, got {n}x{k}")
    q, r = np.linalg.qr(m, mode="reduced")
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    q = q * signs
    r = r * signs[:, None]
    return q, np.triu(r)


def svd_trunc(m, r):
    """Best rank-``r`` factors ``(U, s, V)`` with ``m ~= U @ diag(s) @ V.T``."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"svd_trunc expects a 2-D array, got shape {m.shape}")
    if not 1 <= r <= min(m.shape):
        raise ValueError(f"rank {r} outside [1, {min(m.shape)}] for shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return u[:, :r].copy(), s[:r].copy(), vt[:r].T.copy()


def orthonormality_error(q):
    """Frobenius norm of ``Q^T Q - I``."""
    q = np.asarray(q)
    return float(np.linalg.norm(q.T @ q - np.eye(q.shape[1])))


def _stream_key(master_seed, label):
    digest = hashlib.sha256(f"{int(master_seed)}/{label}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


class RngStream:
    """Named random stream derived from a master seed.

    Each ``(master_seed, label)`` pair is hashed into the seed of its own
    PCG64DXSM generator, so draws on one stream never shift another.  ``counter``
    tracks how many scalars have been drawn.
    """

    def __init__(self, master_seed: int, label: str):
        self.master_seed = int(master_seed)
        self.label = str(label)
        self.counter = 0
        self._gen = np.random.Generator(np.random.PCG64DXSM(_stream_key(master_seed, label)))

    def __repr__(self):
        return f"RngStream(seed={self.master_seed}, label={self.label!r}, counter={self.counter})"

    def child(self, suffix: str) -> "RngStream":
        return RngStream(self.master_seed, f"{self.label}/{suffix}")

    def normal(self, shape):
        out = self._gen.standard_normal(shape)
        self.counter += out.size
        return out

    def uniform(self, low, high, shape):
        out = self._gen.uniform(low, high, shape)
        self.counter += out.size
        return out

    def permutation(self, n):
        self.counter += n
        return self._gen.permutation(n)

    def integers(self, low, high, shape):
        out = self._gen.integers(low, high, shape)
        self.counter += np.size(out)
        return out


def sample_normal(stream: RngStream, n: int):
    """``n`` i.i.d. standard normal draws from ``stream``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return stream.normal(n)


def make_streams(master_seed: int) -> dict[str, RngStream]:
    return {label: RngStream(master_seed, label) for label in STREAM_LABELS}
