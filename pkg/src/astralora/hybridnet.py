"""Small numpy MLP with explicit backprop and hybrid black-box nodes."""
from __future__ import annotations

import numpy as np
from scipy.special import erf

from .photonics import BlackBoxLayer
from .surrogate import SurrogateModel

_SQRT2 = np.sqrt(2.0)


class StaleCacheError(RuntimeError):
    pass


class Dense:
    kind = "dense"

    def __init__(self, d_in, d_out, bias=True, trainable=True):
        self.d_in, self.d_out = int(d_in), int(d_out)
        self.W = np.zeros((self.d_out, self.d_in))
        self.b = np.zeros(self.d_out) if bias else None
        self.trainable = trainable
        self.grads = {}
        self._x = None

    def init(self, stream):
        self.W = stream.normal((self.d_out, self.d_in)) / np.sqrt(self.d_in)
        if self.b is not None:
            self.b = np.zeros(self.d_out)

    def params(self):
        if not self.trainable:
            return {}
        out = {"W": self.W}
        if self.b is not None:
            out["b"] = self.b
        return out

    def forward(self, x, train=True):
        if train:
            self._x = x
        y = x @ self.W.T
        return y if self.b is None else y + self.b

    def backward(self, g):
        if self._x is None:
            raise StaleCacheError("dense backward without a matching forward")
        x, self._x = self._x, None
        if self.trainable:
            self.grads = {"W": g.T @ x}
            if self.b is not None:
                self.grads["b"] = g.sum(axis=0)
        return g @ self.W


class _Activation:
    def __init__(self):
        self.grads = {}
        self._x = None

    def params(self):
        return {}

    def forward(self, x, train=True):
        if train:
            self._x = x
        return self._f(x)

    def backward(self, g):
        if self._x is None:
            raise StaleCacheError(f"{self.kind} backward without a matching forward")
        x, self._x = self._x, None
        return g * self._df(x)


class ReLU(_Activation):
    kind = "relu"

    def _f(self, x):
        return np.maximum(x, 0.0)

    def _df(self, x):
        return (x > 0).astype(np.float64)


class GELU(_Activation):
    """Exact (erf) GELU."""

    kind = "gelu"

    def _f(self, x):
        return 0.5 * x * (1.0 + erf(x / _SQRT2))

    def _df(self, x):
        cdf = 0.5 * (1.0 + erf(x / _SQRT2))
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return cdf + x * pdf


class Scale:
    """Trainable scalar multiplier; the digital counterpart of a hybrid node's scale."""

    kind = "scale"

    def __init__(self, value=1.0):
        self.scale = np.array(float(value))
        self.grads = {}
        self._y = None

    def params(self):
        return {"scale": self.scale}

    def forward(self, x, train=True):
        if train:
            self._y = x
        return self.scale * x

    def backward(self, g):
        if self._y is None:
            raise StaleCacheError("scale backward without a matching forward")
        y, self._y = self._y, None
        self.grads = {"scale": np.array(np.sum(g * y))}
        return self.scale * g


class HybridNode:
    """Black-box layer in the forward pass, surrogate in the backward pass.

    Output is ``s * f_bb(x)`` with ``s = gain * scale``: ``gain`` is a fixed
    per-kind normaliser and ``scale`` the trained multiplier (starts at 1),
    so the scale's step size does not depend on the raw output magnitude.
    Backward returns ``s V S^T U^T v`` and the exact scale gradient
    ``gain * <v, f_bb(x)>``; it never queries the oracle.
    """

    kind = "blackbox"

    def __init__(self, layer: BlackBoxLayer, sm: SurrogateModel | None = None, scale=1.0, gain=1.0):
        self.layer = layer
        self.sm = sm
        self.scale = np.array(float(scale))
        self.gain = float(gain)
        self.grads = {}
        self.x = None
        self.y_raw = None
        self.v = None
        self._fresh = False

    @property
    def d_in(self):
        return self.layer.d_inp

    @property
    def d_out(self):
        return self.layer.d_out

    @property
    def s(self):
        """Effective output multiplier."""
        return self.gain * float(self.scale)

    def params(self):
        return {"scale": self.scale}

    def forward(self, x, train=True):
        y_raw = self.layer.forward(x)
        s = self.s
        if train:
            self.x, self.y_raw, self._fresh = x, y_raw, True
            self.s_used = s
        return s * y_raw

    def backward(self, g):
        if not self._fresh:
            raise StaleCacheError("hybrid backward without a matching forward")
        if self.sm is None:
            raise RuntimeError("hybrid node has no surrogate")
        self._fresh = False
        self.v = g
        self.grads = {"scale": np.array(self.gain * np.sum(g * self.y_raw))}
        return self.s_used * self.sm.backward_input(g)

    def bb_errors(self):
        """Per-sample loss gradient w.r.t. the raw black-box output (undoes batch averaging)."""
        return self.v * self.s_used * self.v.shape[0]


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss(logits, labels):
    """Mean softmax cross-entropy with max-subtraction."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels)
    z = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logz - z[np.arange(len(labels)), labels]))


def loss_grad(logits, labels):
    """``d loss / d logits`` = ``(softmax - onehot) / batch``."""
    p = softmax(logits)
    p[np.arange(len(labels)), labels] -= 1.0
    return p / len(labels)


class Network:
    """Ordered layers ending in logits; the softmax cross-entropy head lives in :func:`loss`."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=True):
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        for layer in self.layers:
            h = layer.forward(h, train=train)
        return h

    def backward(self, logits, labels):
        """Backprop the mean cross-entropy; returns ``{name: grad}`` for every trainable parameter."""
        g = loss_grad(logits, labels)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        grads = {}
        for i, layer in enumerate(self.layers):
            for name, val in layer.grads.items():
                grads[f"{i}.{name}"] = val
        return grads

    def parameters(self):
        """Live references to every digitally trained array, keyed ``"<index>.<name>"``."""
        out = {}
        for i, layer in enumerate(self.layers):
            for name, val in layer.params().items():
                out[f"{i}.{name}"] = val
        return out

    def sgd_step(self, grads, eta):
        for name, p in self.parameters().items():
            p -= eta * grads[name]

    def hybrid_nodes(self):
        return [(i, l) for i, l in enumerate(self.layers) if isinstance(l, HybridNode)]

    def black_boxes(self):
        return [node.layer for _, node in self.hybrid_nodes()]

    def n_params(self):
        return sum(p.size for p in self.parameters().values())


def forward(net: Network, x):
    return net.forward(x)


def backward(net: Network, logits, labels):
    return net.backward(logits, labels)


def default_gain(layer: BlackBoxLayer):
    """Fixed multiplier bringing the nominal entry RMS of ``A(w_init)`` to ``1/sqrt(d_inp)``.

    Closed forms from each kind's initial parameter distribution; no queries.
    """
    from .photonics import mrr_band_rms

    kind, d_inp = layer.kind, layer.d_inp
    if kind == "matvec":
        return 1.0
    if kind in ("slm", "monarch"):
        return float(np.sqrt(2.0))
    if kind in ("mzi", "mzi3"):
        return float(np.sqrt(2.0 * layer.layout.n / d_inp))
    if kind == "mrr":
        return 1.0 / (np.sqrt(d_inp) * mrr_band_rms(layer.a, layer.r_c))
    raise ValueError(f"no default gain for kind {kind!r}")


def build_network(layer_specs, d_in, n_classes, streams) -> Network:
    """Instantiate layers from config specs, chaining widths from ``d_in``.

    Dense weights come from the ``init`` stream, black-box parameters from
    ``bb-init``.  Surrogates are attached separately (they cost queries).
    Resolved ``d_inp`` / ``gain`` are written back onto each LayerSpec.
    """
    from .photonics import make_layer

    layers = []
    width = d_in
    for i, spec in enumerate(layer_specs):
        if spec.type == "dense":
            layer = Dense(width, spec.d_out, bias=spec.bias)
            layer.init(streams["init"])
            width = spec.d_out
        elif spec.type == "relu":
            layer = ReLU()
        elif spec.type == "gelu":
            layer = GELU()
        elif spec.type == "blackbox":
            if spec.d_inp and spec.d_inp != width:
                raise ValueError(f"layer {i}: blackbox d_inp={spec.d_inp} but incoming width is {width}")
            spec.d_inp = width
            consts = {"a": spec.a, "r_c": spec.r_c} if spec.kind == "mrr" else {}
            bb = make_layer(spec.kind, width, spec.d_out, **consts)
            bb.init_params(streams["bb-init"])
            if not spec.gain:
                spec.gain = default_gain(bb)
            layer = HybridNode(bb, gain=spec.gain)
            width = spec.d_out
        else:
            raise ValueError(f"layer {i}: unknown type {spec.type!r}")
        layers.append(layer)
    if width != n_classes:
        raise ValueError(f"network emits {width} logits but the data has {n_classes} classes")
    return Network(layers)


def digital_twin(net: Network) -> Network:
    """Copy of ``net`` with each hybrid node replaced by a frozen dense ``A(w)`` and a trainable scale.

    Materializing costs ``d_inp`` queries per black box.
    """
    from .photonics import materialize

    layers = []
    for layer in net.layers:
        if isinstance(layer, HybridNode):
            a = materialize(layer.layer)
            dense = Dense(a.shape[1], a.shape[0], bias=False, trainable=False)
            dense.W = a
            layers += [dense, Scale(layer.s)]
        elif isinstance(layer, Dense):
            twin = Dense(layer.d_in, layer.d_out, bias=layer.b is not None, trainable=layer.trainable)
            twin.W = layer.W.copy()
            twin.b = None if layer.b is None else layer.b.copy()
            layers.append(twin)
        else:
            layers.append(type(layer)())
    return Network(layers)
