from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, _node, tracked, value

ACTIVATIONS = ("relu", "mish", "elu", "silu", "tanh", "identity")

MAGIC = b"FPNET"
FORMAT_VERSION = 1


class DimensionError(ValueError):
    def __init__(self, expected, actual, what="input"):
        super().__init__(f"{what} width mismatch: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class NonFiniteError(FloatingPointError):
    def __init__(self, layer, stage="forward"):
        super().__init__(f"non-finite values at layer {layer} during {stage}")
        self.layer = layer
        self.stage = stage


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def activate(kind, z, need_grad=True):
    """Return (activation(z), derivative(z)); the derivative is None when not needed."""
    if kind == "relu":
        return np.maximum(z, 0.0), (z > 0.0).astype(np.float64) if need_grad else None
    if kind == "tanh":
        h = np.tanh(z)
        return h, 1.0 - h * h if need_grad else None
    if kind == "identity":
        return z, np.ones_like(z) if need_grad else None
    if kind == "elu":
        e = np.expm1(np.minimum(z, 0.0))
        return np.where(z > 0.0, z, e), np.where(z > 0.0, 1.0, e + 1.0) if need_grad else None
    if kind == "silu":
        sg = _sigmoid(z)
        return z * sg, sg * (1.0 + z * (1.0 - sg)) if need_grad else None
    if kind == "mish":
        # tanh(softplus(z)) = n / (n + 2) with n = e^z (e^z + 2); exact, and 1 beyond z=20
        e = np.exp(np.minimum(z, 20.0))
        n = e * (e + 2.0)
        tsp = n / (n + 2.0)
        if not need_grad:
            return z * tsp, None
        sg = e / (1.0 + e)
        return z * tsp, tsp + z * (1.0 - tsp * tsp) * sg
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class DenseNet:
    """Fully connected network whose parameters live in one flat float64 vector.

    Hidden layers apply ``activation``; the last layer is left linear so
    callers can attach their own output maps.
    """

    layer_widths: list
    activation: str = "relu"
    params: np.ndarray = None
    param_layout: list = field(init=False, repr=False)

    def __post_init__(self):
        self.layer_widths = [int(w) for w in self.layer_widths]
        if len(self.layer_widths) < 2 or min(self.layer_widths) < 1:
            raise ValueError("need at least two positive layer widths")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        layout, off = [], 0
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            w_end = off + fan_in * fan_out
            layout.append((off, w_end, w_end + fan_out, fan_in, fan_out))
            off = w_end + fan_out
        self.param_layout = layout
        if self.params is None:
            self.params = np.zeros(off)
        else:
            self.params = np.asarray(self.params, dtype=np.float64).copy()
            if self.params.shape != (off,):
                raise DimensionError(off, self.params.shape, "params")

    @classmethod
    def init(cls, layer_widths, activation="relu", rng=None):
        """Glorot-uniform weights, zero biases."""
        net = cls(layer_widths, activation)
        rng = np.random.default_rng() if rng is None else rng
        for w0, w1, _, fan_in, fan_out in net.param_layout:
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            net.params[w0:w1] = rng.uniform(-lim, lim, w1 - w0)
        return net

    @property
    def in_dim(self):
        return self.layer_widths[0]

    @property
    def out_dim(self):
        return self.layer_widths[-1]

    @property
    def num_params(self):
        return self.params.size

    def copy(self):
        return DenseNet(list(self.layer_widths), self.activation, self.params)

    def weights(self, params=None):
        p = self.params if params is None else params
        return [
            (p[w0:w1].reshape(fi, fo), p[w1:b1]) for w0, w1, b1, fi, fo in self.param_layout
        ]

    def _check(self, x):
        if x.shape[-1] != self.in_dim:
            raise DimensionError(self.in_dim, x.shape[-1])

    def forward(self, x, params=None):
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        h = x
        layers = self.weights(params)
        last = len(layers) - 1
        for i, (W, b) in enumerate(layers):
            z = h @ W + b
            if i < last:
                z = activate(self.activation, z, need_grad=False)[0]
            if not np.all(np.isfinite(z)):
                raise NonFiniteError(i)
            h = z
        return h

    def _forward_cache(self, x, params):
        layers = self.weights(params)
        last = len(layers) - 1
        cache = []
        h = x
        for i, (W, b) in enumerate(layers):
            z = h @ W + b
            if not np.all(np.isfinite(z)):
                raise NonFiniteError(i)
            if i < last:
                a, d = activate(self.activation, z)
            else:
                a, d = z, None
            cache.append((h, d))
            h = a
        return h, cache

    def _backward(self, cache, g_out, params):
        layers = self.weights(params)
        pgrad = np.zeros(self.num_params)
        g = g_out
        for i in range(len(layers) - 1, -1, -1):
            h_in, d = cache[i]
            if d is not None:
                g = g * d
            w0, w1, b1, fi, fo = self.param_layout[i]
            h2 = h_in.reshape(-1, fi)
            g2 = g.reshape(-1, fo)
            pgrad[w0:w1] = (h2.T @ g2).ravel()
            pgrad[w1:b1] = g2.sum(axis=0)
            g = g @ layers[i][0].T
            if not (np.all(np.isfinite(g)) and np.all(np.isfinite(pgrad[w0:b1]))):
                raise NonFiniteError(i, "backward")
        return pgrad, g

    def apply(self, x, params=None):
        """Forward pass that records onto the tape when ``x`` or ``params`` is a Var."""
        p = self.params if params is None else params
        if not (tracked(x) or tracked(p)):
            return self.forward(value(x), value(p))
        xv = np.asarray(value(x), dtype=np.float64)
        pv = value(p)
        self._check(xv)
        out, cache = self._forward_cache(xv, pv)

        def bw(g):
            pg, xg = self._backward(cache, g, pv)
            return xg, pg

        return _node(out, (x, p), bw)

    # serialization -------------------------------------------------------
    def to_bytes(self):
        act = ACTIVATIONS.index(self.activation)
        n = len(self.layer_widths)
        head = MAGIC + struct.pack(f"<HBI{n}I", FORMAT_VERSION, act, n, *self.layer_widths)
        return head + self.params.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        if blob[:5] != MAGIC:
            raise ValueError("not a dense-net checkpoint (bad magic)")
        version, act, n = struct.unpack_from("<HBI", blob, 5)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        off = 5 + struct.calcsize("<HBI")
        widths = list(struct.unpack_from(f"<{n}I", blob, off))
        off += 4 * n
        params = np.frombuffer(blob, dtype="<f8", offset=off).astype(np.float64)
        return cls(widths, ACTIVATIONS[act], params)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def forward(net, x):
    return net.forward(x)


def grad(net, loss_head, x):
    """Gradients of ``loss_head(net(x))`` w.r.t. the flat params and the input.

    ``loss_head`` receives the network output as a ``Var`` and must return a
    scalar (``Var`` or plain number).
    """
    p = Var(net.params, requires_grad=True)
    xv = Var(x, requires_grad=True)
    loss = loss_head(net.apply(xv, p))
    if tracked(loss):
        loss.backward()
    pg = np.zeros_like(net.params) if p.grad is None else p.grad
    xg = np.zeros_like(xv.value) if xv.grad is None else xv.grad
    return pg, xg


@dataclass
class FourierTimeEmbedding:
    """Fixed sin/cos features of diffusion time, geometric frequencies in [1, 1e4]."""

    dim: int = 64
    frequencies: np.ndarray = None

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 2:
            raise ValueError("embedding dim must be a positive even integer")
        if self.frequencies is None:
            half = self.dim // 2
            self.frequencies = np.geomspace(1.0, 1e4, half) if half > 1 else np.ones(1)

    def __call__(self, t):
        ft = np.multiply.outer(np.asarray(t, dtype=np.float64), self.frequencies)
        return np.concatenate([np.sin(ft), np.cos(ft)], axis=-1)
