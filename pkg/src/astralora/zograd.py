"""Zeroth-order gradient of ``<f_w(x), v>`` with respect to black-box parameters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numlin import RngStream
from .photonics import BlackBoxLayer


@dataclass(frozen=True)
class ZoConfig:
    mu: float = 1e-2
    m_bb: int = 100
    share_directions: bool = True

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if self.m_bb < 1:
            raise ValueError(f"m_bb must be >= 1, got {self.m_bb}")


@dataclass
class ZoEstimate:
    g: np.ndarray
    queries_used: int
    samples: int


def _directional(layer, w, xs, vs, u, mu):
    """``<f[w + mu u_i](x_s) - f[w](x_s), v_s> / mu`` as an ``(m, b)`` array."""
    base = layer.forward(xs, w=w)                              # (b, d_out)
    ws = u * mu
    ws += w
    pert = layer.forward_at(ws, xs)                            # (m, b, d_out)
    coef = np.einsum("mbo,bo->mb", pert, vs)
    coef -= np.einsum("bo,bo->b", base, vs)
    return coef / mu


def estimate_gradient(layer: BlackBoxLayer, w, x, v, cfg: ZoConfig, stream: RngStream) -> ZoEstimate:
    """Gaussian-smoothing estimate of ``(df(x)/dw)^T v`` from ``m_bb + 1`` queries."""
    return estimate_batch(layer, w, np.atleast_2d(x), np.atleast_2d(v), cfg, stream)


def estimate_batch(layer: BlackBoxLayer, w, xs, vs, cfg: ZoConfig, stream: RngStream) -> ZoEstimate:
    """Batch mean of per-sample estimates; ``b (m_bb + 1)`` queries either way."""
    w = np.asarray(w, dtype=np.float64)
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    vs = np.atleast_2d(np.asarray(vs, dtype=np.float64))
    b = xs.shape[0]
    if vs.shape != (b, layer.d_out):
        raise ValueError(f"error vectors must have shape ({b}, {layer.d_out}), got {vs.shape}")
    if w.shape != (layer.d_bb,):
        raise ValueError(f"parameters must have shape ({layer.d_bb},)")
    m = cfg.m_bb
    before = layer.query_count
    if cfg.share_directions:
        u = stream.normal((m, layer.d_bb))
        coef = _directional(layer, w, xs, vs, u, cfg.mu).sum(axis=1)
        g = coef @ u / (m * b)
    else:
        g = np.zeros(layer.d_bb)
        for s in range(b):
            u = stream.normal((m, layer.d_bb))
            coef = _directional(layer, w, xs[s : s + 1], vs[s : s + 1], u, cfg.mu)[:, 0]
            g += coef @ u
        g /= m * b
    return ZoEstimate(g=g, queries_used=layer.query_count - before, samples=b * m)
