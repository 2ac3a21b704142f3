"""Estimator-quality and surrogate-tracking studies behind ``probe`` and ``psi-test``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numlin import RngStream, qr_thin
from .photonics import MatvecLayer
from .surrogate import init_oracle, ipsi_update, psi_cost, transpose_probe
from .zograd import ZoConfig, estimate_gradient


def loglog_slope(budgets, errors):
    """Least-squares slope of ``log(error)`` against ``log(budget)``."""
    return float(np.polyfit(np.log(budgets), np.log(errors), 1)[0])


def random_low_rank(d_out, d_inp, rank, stream):
    return stream.normal((d_out, rank)) @ stream.normal((rank, d_inp)) / np.sqrt(rank * d_inp)


@dataclass
class StudyRow:
    study: str
    budget: int
    trials: int
    rel_err: float
    rel_err_std: float
    cosine: float
    slope: float = float("nan")


def zo_error_study(d_inp, d_out, budgets, trials, seed, mu=1e-2, zero_error=False):
    """ZO estimate vs the analytic ``flatten(v x^T)`` on a matvec layer, per ``m_bb``."""
    stream = RngStream(seed, "probe/zo")
    layer = MatvecLayer(d_inp, d_out)
    layer.init_params(stream)
    x = stream.normal(d_inp)
    v = np.zeros(d_out) if zero_error else stream.normal(d_out)
    exact = np.outer(v, x).ravel()
    rows = []
    for m in budgets:
        cfg = ZoConfig(mu=mu, m_bb=int(m))
        errs, coss = [], []
        for _ in range(trials):
            g = estimate_gradient(layer, layer.params, x, v, cfg, stream).g
            if zero_error:
                errs.append(float(np.linalg.norm(g)))
                coss.append(float("nan"))
            else:
                errs.append(float(np.linalg.norm(g - exact) / np.linalg.norm(exact)))
                coss.append(float(g @ exact / (np.linalg.norm(g) * np.linalg.norm(exact))))
        rows.append(StudyRow("zo_zero" if zero_error else "zo", int(m), trials,
                             float(np.mean(errs)), float(np.std(errs)), float(np.mean(coss))))
    if not zero_error and len(budgets) > 1:
        slope = loglog_slope([r.budget for r in rows], [r.rel_err for r in rows])
        for r in rows:
            r.slope = slope
    return rows


def _transpose_setup(d_inp, d_out, rank, stream):
    layer = MatvecLayer(d_inp, d_out)
    w0 = stream.normal(layer.d_bb) / np.sqrt(d_inp)
    w1 = w0 + 0.1 * stream.normal(layer.d_bb) / np.sqrt(d_inp)
    layer.set_params(w0)
    u, _ = qr_thin(stream.normal((d_out, rank)))
    dense = (w1 - w0).reshape(d_out, d_inp).T @ u
    return layer, w0, w1, u, dense


def transpose_error_study(d_inp, d_out, rank, budgets, trials, seed):
    """Stochastic transpose probe vs dense ``(dA)^T U`` per ``m_sm``, plus an exact-mode row."""
    stream = RngStream(seed, "probe/transpose")
    layer, w0, w1, u, dense = _transpose_setup(d_inp, d_out, rank, stream)
    norm = np.linalg.norm(dense)
    rows = []
    for m in budgets:
        errs, coss = [], []
        for _ in range(trials):
            est = transpose_probe(layer, w0, w1, u, int(m), stream)
            errs.append(float(np.linalg.norm(est - dense) / norm))
            coss.append(float(np.sum(est * dense) / (np.linalg.norm(est) * norm)))
        rows.append(StudyRow("transpose", int(m), trials, float(np.mean(errs)), float(np.std(errs)),
                             float(np.mean(coss))))
    if len(budgets) > 1:
        slope = loglog_slope([r.budget for r in rows], [r.rel_err for r in rows])
        for r in rows:
            r.slope = slope
    exact = transpose_probe(layer, w0, w1, u, 1, stream, exact=True)
    rows.append(StudyRow("transpose_exact", 0, 1, float(np.linalg.norm(exact - dense) / norm), 0.0, 1.0))
    return rows


def psi_exactness_trial(d_out, d_inp, rank, stream, true_rank=None):
    """Random ``A0, A1`` of rank <= ``rank``; exact-transpose I-PSI must land on ``A1``."""
    k = rank if true_rank is None else true_rank
    a0 = random_low_rank(d_out, d_inp, k, stream)
    a1 = random_low_rank(d_out, d_inp, k, stream)
    layer = MatvecLayer(d_inp, d_out)
    layer.set_params(a0.ravel())
    sm = init_oracle(layer, rank)
    layer.set_params(a1.ravel())
    new = ipsi_update(sm, layer, a0.ravel(), a1.ravel(), 1, stream, exact_transpose=True)
    return float(np.linalg.norm(new.dense() - a1)), new.orthonormality_error()


def psi_accounting_check(d_out, d_inp, rank, m_sm, stream):
    layer = MatvecLayer(d_inp, d_out)
    layer.init_params(stream)
    sm = init_oracle(layer, rank)
    w0 = layer.params
    w1 = w0 + 0.01 * stream.normal(layer.d_bb)
    before = layer.query_count
    ipsi_update(sm, layer, w0, w1, m_sm, stream)
    return layer.query_count - before, psi_cost(rank, m_sm)


def psi_tracking(d_out, d_inp, rank, true_rank, steps, m_sm, seed, drift=0.05):
    """Track a drifting rank-``true_rank`` matvec with I-PSI vs a frozen surrogate.

    Returns ``(tracked_errors, frozen_errors)`` as relative Frobenius errors per step.
    """
    stream = RngStream(seed, "psi/tracking")
    b = stream.normal((d_out, true_rank))
    c = stream.normal((d_inp, true_rank))
    scale = 1.0 / np.sqrt(true_rank * d_inp)
    layer = MatvecLayer(d_inp, d_out)
    layer.set_params((b @ c.T * scale).ravel())
    sm = init_oracle(layer, rank)
    frozen = sm
    tracked, stale = [], []
    for _ in range(steps):
        w0 = layer.params
        b = b + drift * stream.normal(b.shape)
        c = c + drift * stream.normal(c.shape)
        w1 = (b @ c.T * scale).ravel()
        layer.set_params(w1)
        sm = ipsi_update(sm, layer, w0, w1, m_sm, stream)
        a = w1.reshape(d_out, d_inp)
        tracked.append(float(np.linalg.norm(a - sm.dense()) / np.linalg.norm(a)))
        stale.append(float(np.linalg.norm(a - frozen.dense()) / np.linalg.norm(a)))
    return np.array(tracked), np.array(stale)
