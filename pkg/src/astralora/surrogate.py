"""Low-rank surrogate ``U S V^T`` of a black-box layer and its I-PSI update."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numlin import RngStream, orthonormality_error, qr_thin, svd_trunc
from .photonics import BlackBoxLayer, materialize

POLISH_TOL = 1e-10


class BudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class SurrogateModel:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return self.S.shape[0]

    @property
    def d_out(self):
        return self.U.shape[0]

    @property
    def d_inp(self):
        return self.V.shape[0]

    def forward(self, x):
        """``U S V^T x`` for a vector or a row batch; never queries the oracle."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d_inp:
            raise ValueError(f"surrogate expects width {self.d_inp}, got {x.shape}")
        return ((x @ self.V) @ self.S.T) @ self.U.T

    def backward_input(self, v):
        """``V S^T U^T v``: the adjoint of :meth:`forward`."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.d_out:
            raise ValueError(f"surrogate expects error width {self.d_out}, got {v.shape}")
        return ((v @ self.U) @ self.S) @ self.V.T

    def dense(self):
        return self.U @ self.S @ self.V.T

    def orthonormality_error(self):
        return max(orthonormality_error(self.U), orthonormality_error(self.V))


def sm_forward(sm: SurrogateModel, x):
    return sm.forward(x)


def sm_backward_input(sm: SurrogateModel, v):
    return sm.backward_input(v)


def _check_rank(layer, r):
    if not 1 <= r <= min(layer.d_inp, layer.d_out):
        raise ValueError(f"rank {r} outside [1, {min(layer.d_inp, layer.d_out)}]")


def init_oracle(layer: BlackBoxLayer, r: int) -> SurrogateModel:
    """Materialize the layer (``d_inp`` queries) and keep the best rank-``r`` part."""
    _check_rank(layer, r)
    u, s, v = svd_trunc(materialize(layer), r)
    return SurrogateModel(u, np.diag(s), v)


def _probe_transpose(oracle_diff, d_inp, u, m, stream):
    z = stream.normal((m, d_inp))
    dz = oracle_diff(z)                          # rows: (dA z_j)^T
    return z.T @ (dz @ u) / m


def init_sketch(layer: BlackBoxLayer, r: int, oversample: int, stream: RngStream,
                m_probe: int = 1000, exact: bool = False) -> SurrogateModel:
    """Randomised range finder without full materialization.

    ``r + oversample`` forward queries sketch the range; ``Q^T A`` is then
    estimated with ``m_probe`` Gaussian transpose probes (one query each).
    ``exact=True`` replaces the probe by a materialized transpose (tests only).
    """
    _check_rank(layer, r)
    k = r + oversample
    if oversample < 0 or k > min(layer.d_inp, layer.d_out):
        raise ValueError(f"r + oversample = {k} exceeds min(d_inp, d_out)")
    omega = stream.normal((k, layer.d_inp))
    q, _ = qr_thin(layer.forward(omega).T)
    if exact:
        at_q = materialize(layer).T @ q
    else:
        if m_probe < 1:
            raise ValueError("m_probe must be >= 1")
        at_q = _probe_transpose(layer.forward, layer.d_inp, q, m_probe, stream)
    ub, s, v = svd_trunc(at_q.T, r)
    return SurrogateModel(q @ ub, np.diag(s), v)


def transpose_probe(layer: BlackBoxLayer, w0, w1, u, m_sm: int, stream: RngStream, exact=False):
    """Estimate ``(A(w1) - A(w0))^T U`` from forward queries only.

    Each Gaussian probe ``z`` costs a paired query (at ``w1`` then ``w0``).
    The sum over probes is divided by ``m_sm`` so the estimate is unbiased.
    """
    if exact:
        delta = materialize(layer, w=w1) - materialize(layer, w=w0)
        return delta.T @ u
    if m_sm < 1:
        raise ValueError("m_sm must be >= 1")
    w0 = np.asarray(w0, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)

    def diff(z):
        return layer.forward(z, w=w1) - layer.forward(z, w=w0)

    return _probe_transpose(diff, layer.d_inp, u, m_sm, stream)


@dataclass
class PsiBudget:
    """Remaining oracle queries available to surrogate updates."""

    remaining: int
    queries_spent: int = 0

    def reserve(self, n):
        if n > self.remaining:
            raise BudgetExhausted(f"I-PSI needs {n} queries, only {self.remaining} left")
        self.remaining -= n
        self.queries_spent += n


def psi_cost(r, m_sm):
    return 2 * r + 2 * m_sm


def _polish(sm: SurrogateModel) -> SurrogateModel:
    u, s, v = sm.U, sm.S, sm.V
    if orthonormality_error(u) > POLISH_TOL:
        u, ru = qr_thin(u)
        s = ru @ s
    if orthonormality_error(v) > POLISH_TOL:
        v, rv = qr_thin(v)
        s = s @ rv.T
    return SurrogateModel(u, s, v)


def ipsi_update(sm: SurrogateModel, layer: BlackBoxLayer, w0, w1, m_sm: int, stream: RngStream,
                exact_transpose=False, budget: PsiBudget | None = None) -> SurrogateModel:
    """Realign ``sm`` after the layer parameters moved from ``w0`` to ``w1``.

    Costs exactly ``2 r + 2 m_sm`` queries (``2 r`` when ``exact_transpose``
    is set, plus the materializations it performs).  The budget is checked
    before the first query so an update is never partially applied.
    """
    r = sm.rank
    if budget is not None:
        budget.reserve(psi_cost(r, 0 if exact_transpose else m_sm))
    w0 = np.asarray(w0, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    u0, s0, v0 = sm.U, sm.S, sm.V

    vt = v0.T
    p1 = (layer.forward(vt, w=w1) - layer.forward(vt, w=w0)).T   # dA V0
    u1, s_tilde = qr_thin(u0 @ s0 + p1)
    s_hat = s_tilde - u1.T @ p1

    p2 = transpose_probe(layer, w0, w1, u1, m_sm, stream, exact=exact_transpose)
    v1, s1_t = qr_thin(v0 @ s_hat.T + p2)
    return _polish(SurrogateModel(u1, s1_t.T, v1))
