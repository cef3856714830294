"""Network parameters, topology-driven forward/backward, and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..archmodel import (
    BATCHNORM, CONV3X3, DENSE, GAP, MAXPOOL2X2, RELU, RESCALE, SOFTMAX, Topology,
)
from . import layers as L


class NumericalError(FloatingPointError):
    """A non-finite value appeared in the forward or backward pass."""


def _check(arr, where):
    if not np.isfinite(arr).all():
        raise NumericalError(f"non-finite values after {where}")


def layer_names(topology: Topology) -> list[str]:
    """Stable parameter prefixes: conv0..convC, bn1..bnC, dense."""
    names, conv, bn = [], 0, 0
    for layer in topology:
        if layer.kind == CONV3X3:
            names.append(f"conv{conv}")
            conv += 1
        elif layer.kind == BATCHNORM:
            bn += 1
            names.append(f"bn{bn}")
        elif layer.kind == DENSE:
            names.append("dense")
        else:
            names.append(layer.kind.lower())
    return names


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass
class Network:
    """Parameters and non-trainable state for one expanded topology.

    ``value_range`` is the fixed (lo, hi) of the Rescale layer, e.g. (0, 255)
    for 8-bit images or the dataset-global min/max for float data.
    """

    topology: Topology
    params: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)
    bn_momentum: float = 0.99
    bn_eps: float = 1e-3
    dtype: type = np.float32

    @classmethod
    def init(cls, topology: Topology, value_range=(0.0, 255.0), seed: int = 0,
             dtype=np.float32, bn_momentum=0.99, bn_eps=1e-3) -> "Network":
        rng = np.random.default_rng(seed)
        params, state = {}, {}
        lo, hi = float(value_range[0]), float(value_range[1])
        state["rescale.lo"] = np.array([lo], dtype=dtype)
        state["rescale.scale"] = np.array([1.0 / (hi - lo) if hi > lo else 0.0], dtype=dtype)
        for name, layer in zip(layer_names(topology), topology):
            cin, cout = layer.in_channels, layer.out_channels
            if layer.kind == CONV3X3:
                params[f"{name}.W"] = _glorot(rng, (3, 3, cin, cout), 9 * cin, 9 * cout, dtype)
                params[f"{name}.b"] = np.zeros(cout, dtype=dtype)
            elif layer.kind == BATCHNORM:
                params[f"{name}.gamma"] = np.ones(cout, dtype=dtype)
                params[f"{name}.beta"] = np.zeros(cout, dtype=dtype)
                state[f"{name}.mean"] = np.zeros(cout, dtype=dtype)
                state[f"{name}.var"] = np.ones(cout, dtype=dtype)
                state[f"{name}.count"] = np.zeros(1, dtype=dtype)
            elif layer.kind == DENSE:
                params[f"{name}.W"] = _glorot(rng, (cin, cout), cin, cout, dtype)
                params[f"{name}.b"] = np.zeros(cout, dtype=dtype)
        return cls(topology, params, state, bn_momentum, bn_eps, dtype)

    def copy(self) -> "Network":
        return Network(
            self.topology,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.state.items()},
            self.bn_momentum, self.bn_eps, self.dtype,
        )

    def tensors(self) -> dict:
        return {**self.params, **self.state}

    def forward(self, x, train=False):
        return forward(self.topology, x, self.params, self.state, train,
                       self.bn_momentum, self.bn_eps)

    def predict(self, x, batch_size=256) -> np.ndarray:
        out = []
        for i in range(0, len(x), batch_size):
            probs, _ = self.forward(np.asarray(x[i:i + batch_size], dtype=self.dtype))
            out.append(probs)
        if not out:
            return np.zeros((0, self.topology.num_classes), dtype=self.dtype)
        return np.concatenate(out)


def forward(topology, x, params, state, train=False, bn_momentum=0.99, bn_eps=1e-3):
    """Run the network; return (class probabilities, cache for backward).

    ``train=True`` uses batch statistics in BatchNorm and updates the running
    statistics held in ``state``.
    """
    x = np.asarray(x)
    shape = topology.input_shape
    if x.ndim != 4 or x.shape[1:] != (shape.height, shape.width, shape.channels):
        raise ValueError(f"batch shape {x.shape} does not match topology input {shape}")
    dtype = params[next(iter(params))].dtype if params else np.float32
    h = x.astype(dtype, copy=False)
    caches = []
    logits = None
    for name, layer in zip(layer_names(topology), topology):
        kind = layer.kind
        if kind == RESCALE:
            h = (h - state["rescale.lo"]) * state["rescale.scale"]
            cache = None
        elif kind == CONV3X3:
            h, cache = L.conv3x3_forward(h, params[f"{name}.W"], params[f"{name}.b"])
        elif kind == MAXPOOL2X2:
            h, cache = L.maxpool2x2_forward(h)
        elif kind == BATCHNORM:
            h, cache = L.batchnorm_forward(
                h, params[f"{name}.gamma"], params[f"{name}.beta"],
                state[f"{name}.mean"], state[f"{name}.var"], train, bn_momentum, bn_eps,
                state.get(f"{name}.count"),
            )
        elif kind == RELU:
            h, cache = L.relu_forward(h)
        elif kind == GAP:
            h, cache = L.gap_forward(h)
        elif kind == DENSE:
            h, cache = L.dense_forward(h, params[f"{name}.W"], params[f"{name}.b"])
        elif kind == SOFTMAX:
            logits = h
            h = L.softmax(h)
            cache = None
        else:
            raise ValueError(f"unsupported layer kind {kind!r}")
        _check(h, f"{name} ({kind})")
        caches.append((name, kind, cache, h))
    return h, {"caches": caches, "logits": logits}


def backward(topology, cache, labels):
    """Cross-entropy loss and gradients for every trainable parameter."""
    labels = np.asarray(labels, dtype=np.intp)
    loss, grad = L.cross_entropy(cache["logits"], labels)
    grads = {}
    caches = cache["caches"]
    first_conv = next(i for i, c in enumerate(caches) if c[1] == CONV3X3)
    for i in range(len(caches) - 1, -1, -1):
        name, kind, layer_cache, _ = caches[i]
        if kind == SOFTMAX:
            continue  # folded into the cross-entropy gradient
        if kind == DENSE:
            grad, grads[f"{name}.W"], grads[f"{name}.b"] = L.dense_backward(grad, layer_cache)
        elif kind == GAP:
            grad = L.gap_backward(grad, layer_cache)
        elif kind == RELU:
            grad = L.relu_backward(grad, layer_cache)
        elif kind == BATCHNORM:
            grad, grads[f"{name}.gamma"], grads[f"{name}.beta"] = L.batchnorm_backward(
                grad, layer_cache
            )
        elif kind == MAXPOOL2X2:
            grad = L.maxpool2x2_backward(grad, layer_cache)
        elif kind == CONV3X3:
            grad, grads[f"{name}.W"], grads[f"{name}.b"] = L.conv3x3_backward(
                grad, layer_cache, need_dx=i > first_conv
            )
        for key in (k for k in grads if k.startswith(name + ".")):
            _check(grads[key], key)
        if i == first_conv:
            break
    return float(loss), grads


def retained_bytes(cache, params=None) -> int:
    """Bytes of distinct arrays kept alive between forward and backward.

    Arrays belonging to ``params`` are skipped; they are accounted separately.
    """
    seen = {id(p) for p in (params or {}).values()}
    total = 0

    def add(obj):
        nonlocal total
        if isinstance(obj, np.ndarray):
            base = obj if obj.base is None else obj.base
            if id(base) not in seen:
                seen.add(id(base))
                total += base.nbytes
        elif isinstance(obj, (tuple, list)):
            for item in obj:
                add(item)

    for _, _, layer_cache, out in cache["caches"]:
        add(layer_cache)
        add(out)
    return total


class Adam:
    """Adam with Keras-style epsilon placement: ``m_hat / (sqrt(v_hat) + eps)``."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1 - b1 ** self.t
        corr2 = 1 - b2 ** self.t
        for key in sorted(params):
            g = grads.get(key)
            if g is None:
                continue
            m, v = self.m[key], self.v[key]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / corr1
            v_hat = v / corr2
            params[key] -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(params[key].dtype)

    def state_bytes(self) -> int:
        return sum(a.nbytes for a in self.m.values()) + sum(a.nbytes for a in self.v.values())
