"""Simulated photonic black-box layers.

Every layer is an oracle ``x -> A(w) x``.  Training code only sees
:meth:`BlackBoxLayer.forward` / :meth:`BlackBoxLayer.forward_at` and the
parameter vector; the map ``w -> A(w)`` stays private to the simulator.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

MRR_A = 0.8
MRR_R = 0.9
MATERIALIZE_LIMIT = 4096
KINDS = ("matvec", "mrr", "slm", "monarch", "mzi", "mzi3")


class ConfigurationError(ValueError):
    pass


class MaterializeRefused(RuntimeError):
    pass


# --------------------------------------------------------------------- maps


def mrr_func(w, a=MRR_A, r_c=MRR_R):
    """Amplitude response of a microring tuned by phase ``w``; range [-1, 1]."""
    c = 2.0 * a * r_c * np.cos(w)
    return 2.0 * np.sqrt((a * a + r_c * r_c - c) / (1.0 + (a * r_c) ** 2 - c)) - 1.0


def mrr_zero_mean_band(a=MRR_A, r_c=MRR_R):
    """Half-width ``b`` with ``mean(func(w)) = 0`` for ``w ~ U[-b, b]``.

    Phases in this band straddle the resonance dip, giving signed weights;
    uniform phases over the full circle give an almost all-positive matrix.
    """
    def mean(b):
        return quad(mrr_func, 0.0, b, args=(a, r_c))[0]

    if mean(np.pi) <= 0:
        return np.pi
    return brentq(mean, 1e-6, np.pi, xtol=1e-12)


def mrr_band_rms(a=MRR_A, r_c=MRR_R):
    """RMS of ``func(w)`` for phases uniform on the zero-mean band."""
    b = mrr_zero_mean_band(a, r_c)
    return float(np.sqrt(quad(lambda w: mrr_func(w, a, r_c) ** 2, 0.0, b)[0] / b))


def slm_matrix(w, d_out, d_inp):
    w = np.asarray(w, dtype=np.float64)
    if w.size != d_out * d_inp:
        raise ValueError(f"slm expects {d_out * d_inp} phases, got {w.size}")
    return np.cos(w).reshape(d_out, d_inp) / np.sqrt(d_inp)


def _split_pow2(d):
    if d < 1 or d & (d - 1):
        raise ConfigurationError(f"monarch dimension {d} is not a power of two")
    p = d.bit_length() - 1
    b = 1 << (p // 2)
    return b, d // b


@dataclass(frozen=True)
class MonarchShape:
    b_r: int
    n_r_inp: int
    n_r_out: int
    b_l: int
    n_l_inp: int
    n_l_out: int

    @classmethod
    def from_dims(cls, d_inp, d_out):
        b_r, n_r_inp = _split_pow2(d_inp)
        b_l, n_l_out = _split_pow2(d_out)
        return cls(b_r, n_r_inp, b_l, b_l, b_r, n_l_out)

    @property
    def d_inp(self):
        return self.b_r * self.n_r_inp

    @property
    def d_out(self):
        return self.b_l * self.n_l_out

    @property
    def n_right(self):
        return self.b_r * self.n_r_out * self.n_r_inp

    @property
    def n_params(self):
        return self.n_right + self.b_l * self.n_l_out * self.n_l_inp

    def split(self, w):
        """Phase vector -> ``(theta_r[i, l, k], theta_l[l, j, i])``."""
        w = np.asarray(w, dtype=np.float64)
        lead = w.shape[:-1]
        th_r = w[..., : self.n_right].reshape(*lead, self.b_r, self.n_r_out, self.n_r_inp)
        th_l = w[..., self.n_right :].reshape(*lead, self.b_l, self.n_l_out, self.n_l_inp)
        return th_r, th_l


def monarch_forward(shape: MonarchShape, theta_r, theta_l, x):
    """Propagate real input(s) through the complex Monarch optics; Re at read-out.

    ``theta_r`` has shape ``(b_R, n_R_out, n_R_inp)``, ``theta_l`` has
    ``(b_L, n_L_out, n_L_inp)``.  Input blocks are row-major with the block
    index slowest; output is flattened the same way over the ``L`` blocks.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x).reshape(-1, shape.b_r, shape.n_r_inp)
    r_blocks = np.exp(1j * theta_r) / np.sqrt(shape.n_r_inp)
    l_blocks = np.exp(1j * theta_l) / np.sqrt(shape.n_l_inp)
    z = np.einsum("ilk,bik->bil", r_blocks, xb)       # (batch, b_R, b_L)
    z = np.swapaxes(z, 1, 2)                            # permutation P
    y = np.einsum("lji,bli->blj", l_blocks, z)         # (batch, b_L, n_L_out)
    y = y.real.reshape(-1, shape.d_out)
    return y[0] if single else y


def mzi_block(theta, phi, variant="mzi"):
    """2x2 transfer matrix of one interferometer block."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if variant == "mzi":
        s, c = np.sin(theta / 2), np.cos(theta / 2)
        e = np.exp(1j * phi)
        b = np.array([[e * s, c + 0j], [e * c, -s + 0j]])
        b = b * np.exp(1j * theta / 2)
    elif variant == "mzi3":
        sm, cm = np.sin((theta - phi) / 2), np.cos((theta - phi) / 2)
        sp, cp = np.sin((theta + phi) / 2), np.cos((theta + phi) / 2)
        b = np.array([[-cm + 1j * sp, -sm + 1j * cp], [sm + 1j * cp, -cm - 1j * sp]])
        b = b * np.exp(1j * (phi + theta) / 2) / np.sqrt(2.0)
    else:
        raise ValueError(f"unknown block variant {variant!r}")
    return np.moveaxis(b, (0, 1), (-2, -1))


@dataclass(frozen=True)
class MeshLayout:
    """Clements arrangement: layer ``l`` couples ``(i, i+1)`` for ``i = l mod 2, l+2, ...``."""

    n: int
    block_coords: tuple

    @classmethod
    def for_modes(cls, n):
        if n < 1:
            raise ConfigurationError("mesh needs at least one mode")
        coords = tuple((layer, top) for layer in range(n) for top in range(layer % 2, n - 1, 2))
        return cls(n, coords)

    @property
    def n_blocks(self):
        return len(self.block_coords)

    @property
    def n_params(self):
        return 2 * self.n_blocks + self.n

    def layers(self):
        """Yield ``(top_modes, first_block_index)`` per mesh layer."""
        start = 0
        for layer in range(self.n):
            tops = np.arange(layer % 2, self.n - 1, 2)
            yield tops, start
            start += tops.size


def _apply_mesh(layout, w, state, variant):
    """Apply blocks then output phases to ``state[..., n, k]`` along axis -2."""
    w = np.asarray(w, dtype=np.float64)
    nb = layout.n_blocks
    angles = w[..., : 2 * nb].reshape(*w.shape[:-1], nb, 2)
    blocks = mzi_block(angles[..., 0], angles[..., 1], variant)  # (..., nb, 2, 2)
    lead = (slice(None),) * (w.ndim - 1)
    for tops, start in layout.layers():
        if tops.size == 0:
            continue
        b = blocks[(*lead, slice(start, start + tops.size))]
        top = state[..., tops, :]
        bot = state[..., tops + 1, :]
        new_top = b[..., 0, 0, None] * top + b[..., 0, 1, None] * bot
        new_bot = b[..., 1, 0, None] * top + b[..., 1, 1, None] * bot
        state[..., tops, :] = new_top
        state[..., tops + 1, :] = new_bot
    phases = np.exp(1j * w[..., 2 * nb :])
    return state * phases[..., :, None]


def mesh_unitary(layout: MeshLayout, w, variant="mzi"):
    """Complex ``N x N`` transfer matrix (batched over leading axes of ``w``)."""
    w = np.asarray(w, dtype=np.float64)
    state = np.broadcast_to(np.eye(layout.n, dtype=np.complex128), (*w.shape[:-1], layout.n, layout.n)).copy()
    return _apply_mesh(layout, w, state, variant)


def mesh_forward(layout: MeshLayout, w, x, d_out, variant="mzi"):
    """Zero-pad ``x`` to ``N`` modes, propagate, return Re of first ``d_out`` outputs."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] > layout.n or d_out > layout.n:
        raise ValueError("input/output wider than the mesh")
    state = np.zeros((layout.n, xb.shape[0]), dtype=np.complex128)
    state[: xb.shape[1]] = xb.T
    out = _apply_mesh(layout, w, state, variant)[:d_out].real.T
    return out[0] if single else out


# ------------------------------------------------------------------- layers


class BlackBoxLayer:
    """Query-only linear oracle with an owned parameter vector.

    ``query_count`` grows by one per input vector per evaluation, whichever
    parameter setting the evaluation used.
    """

    kind = "abstract"
    angle_params = True
    reentrant = True

    def __init__(self, d_inp: int, d_out: int, d_bb: int):
        if d_inp < 1 or d_out < 1:
            raise ConfigurationError("layer dimensions must be positive")
        self.d_inp = int(d_inp)
        self.d_out = int(d_out)
        self.d_bb = int(d_bb)
        self.query_count = 0
        self._lock = threading.Lock()
        self._w = np.zeros(self.d_bb)
        self._cache = None

    def __repr__(self):
        return f"{type(self).__name__}(d_inp={self.d_inp}, d_out={self.d_out}, d_bb={self.d_bb})"

    # parameters

    @property
    def params(self):
        return self._w.copy()

    def set_params(self, w):
        w = np.array(w, dtype=np.float64).reshape(-1)
        if w.size != self.d_bb:
            raise ValueError(f"{self.kind} expects {self.d_bb} parameters, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite black-box parameters")
        self._w = w
        self._cache = None

    def init_params(self, stream):
        if self.angle_params:
            w = stream.uniform(-np.pi, np.pi, self.d_bb)
        else:
            w = stream.normal(self.d_bb) / np.sqrt(self.d_inp)
        self.set_params(w)
        return self.params

    # queries

    def _count(self, n):
        with self._lock:
            self.query_count += int(n)

    def _check_inputs(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d_inp or x.ndim > 2:
            raise ValueError(f"{self.kind} expects inputs of width {self.d_inp}, got shape {x.shape}")
        return x

    def forward(self, x, w=None):
        """``A(w) x`` for one vector or a ``(b, d_inp)`` batch; ``w`` defaults to the owned parameters."""
        x = self._check_inputs(x)
        if w is None:
            if self._cache is None:
                self._cache = self._transfer(self._w[None])[0]
            a = self._cache
        else:
            w = np.asarray(w, dtype=np.float64)
            if w.shape != (self.d_bb,):
                raise ValueError(f"parameter override must have shape ({self.d_bb},)")
            a = self._transfer(w[None])[0]
        self._count(1 if x.ndim == 1 else x.shape[0])
        return x @ a.T

    def forward_at(self, ws, xs):
        """Evaluate every row of ``ws`` on every row of ``xs``: result ``(m, b, d_out)``."""
        ws = np.atleast_2d(np.asarray(ws, dtype=np.float64))
        xs = np.atleast_2d(self._check_inputs(xs))
        if ws.shape[1] != self.d_bb:
            raise ValueError(f"parameter sets must have width {self.d_bb}")
        out = np.empty((ws.shape[0], xs.shape[0], self.d_out))
        chunk = max(1, 2**22 // max(1, self.d_out * self.d_inp))
        for lo in range(0, ws.shape[0], chunk):
            a = self._transfer(ws[lo : lo + chunk])
            out[lo : lo + chunk] = np.matmul(a, xs.T).transpose(0, 2, 1)
        self._count(ws.shape[0] * xs.shape[0])
        return out

    def _transfer(self, ws):
        """Private physics: ``(m, d_bb)`` parameters -> ``(m, d_out, d_inp)`` real matrices."""
        raise NotImplementedError


class MatvecLayer(BlackBoxLayer):
    kind = "matvec"
    angle_params = False

    def __init__(self, d_inp, d_out):
        super().__init__(d_inp, d_out, d_inp * d_out)

    def _transfer(self, ws):
        return ws.reshape(-1, self.d_out, self.d_inp)


class MrrLayer(BlackBoxLayer):
    kind = "mrr"

    def __init__(self, d_inp, d_out, a=MRR_A, r_c=MRR_R):
        if not (0 < a < 1 and 0 < r_c < 1):
            raise ConfigurationError("MRR constants a and r_c must lie in (0, 1)")
        super().__init__(d_inp, d_out, d_inp * d_out)
        self.a = float(a)
        self.r_c = float(r_c)

    def init_params(self, stream):
        b = mrr_zero_mean_band(self.a, self.r_c)
        self.set_params(stream.uniform(-b, b, self.d_bb))
        return self.params

    def _transfer(self, ws):
        return mrr_func(ws, self.a, self.r_c).reshape(-1, self.d_out, self.d_inp)


class SlmLayer(BlackBoxLayer):
    kind = "slm"

    def __init__(self, d_inp, d_out):
        super().__init__(d_inp, d_out, d_inp * d_out)

    def _transfer(self, ws):
        return np.cos(ws).reshape(-1, self.d_out, self.d_inp) / np.sqrt(self.d_inp)


class MonarchLayer(BlackBoxLayer):
    kind = "monarch"

    def __init__(self, d_inp, d_out):
        self.shape = MonarchShape.from_dims(d_inp, d_out)
        super().__init__(d_inp, d_out, self.shape.n_params)

    def _transfer(self, ws):
        sh = self.shape
        th_r, th_l = sh.split(ws)
        r_blocks = np.exp(1j * th_r) / np.sqrt(sh.n_r_inp)
        l_blocks = np.exp(1j * th_l) / np.sqrt(sh.n_l_inp)
        a = np.einsum("mlji,milk->mljik", l_blocks, r_blocks).real
        return a.reshape(ws.shape[0], self.d_out, self.d_inp)


class MeshLayer(BlackBoxLayer):
    """Clements mesh of MZI (``mzi``) or three-splitter MZI (``mzi3``) blocks."""

    def __init__(self, d_inp, d_out, variant="mzi"):
        if variant not in ("mzi", "mzi3"):
            raise ConfigurationError(f"unknown mesh variant {variant!r}")
        self.variant = variant
        self.layout = MeshLayout.for_modes(max(d_inp, d_out))
        super().__init__(d_inp, d_out, self.layout.n_params)

    @property
    def kind(self):
        return self.variant

    def complex_transfer(self, w=None):
        """Full unitary; a simulator diagnostic, not part of the oracle surface."""
        return mesh_unitary(self.layout, self._w if w is None else w, self.variant)

    def _transfer(self, ws):
        t = mesh_unitary(self.layout, ws, self.variant)
        return t[:, : self.d_out, : self.d_inp].real


def make_layer(kind, d_inp, d_out, **consts) -> BlackBoxLayer:
    if kind == "mrr":
        return MrrLayer(d_inp, d_out, **consts)
    if consts:
        raise ConfigurationError(f"layer kind {kind!r} takes no constants, got {sorted(consts)}")
    if kind == "matvec":
        return MatvecLayer(d_inp, d_out)
    if kind == "slm":
        return SlmLayer(d_inp, d_out)
    if kind == "monarch":
        return MonarchLayer(d_inp, d_out)
    if kind in ("mzi", "mzi3"):
        return MeshLayer(d_inp, d_out, variant=kind)
    raise ConfigurationError(f"unknown layer kind {kind!r}; expected one of {KINDS}")


def materialize(layer: BlackBoxLayer, w=None, limit=MATERIALIZE_LIMIT):
    """Dense ``A(w)`` assembled from ``d_inp`` unit-vector queries."""
    if layer.d_inp > limit:
        raise MaterializeRefused(f"refusing to materialize a layer with d_inp={layer.d_inp} > {limit}")
    cols = layer.forward(np.eye(layer.d_inp), w=w)
    return cols.T.copy()
