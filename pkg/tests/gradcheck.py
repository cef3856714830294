"""Central finite-difference gradient checking for the numpy engine."""

import numpy as np

from gwnas.archmodel import Architecture, InputShape, expand
from gwnas.nnengine import Network, backward, forward


def net64(k, c, shape=(8, 8, 1), classes=2, seed=0, value_range=(0.0, 1.0)):
    topo = expand(Architecture(k, c), InputShape(*shape), classes)
    return Network.init(topo, value_range, seed, dtype=np.float64)


def batch(rng, n, shape, classes):
    return rng.uniform(0, 1, size=(n, *shape)), rng.integers(0, classes, size=n)


def loss_of(net, x, y):
    probs, cache = forward(net.topology, x, net.params, {k: v.copy() for k, v in net.state.items()},
                           train=True)
    return backward(net.topology, cache, y)


def rel_err(a, b, floor=1e-2):
    # the floor keeps exactly-zero gradients (a conv bias feeding BatchNorm) from
    # turning rounding noise into a large ratio
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), floor)


def routing(net, x):
    """ReLU masks and pooling winners: the piecewise-linear regime of a forward pass."""
    _, cache = forward(net.topology, x, net.params, {k: v.copy() for k, v in net.state.items()},
                       train=True)
    out = []
    for _, kind, layer_cache, _ in cache["caches"]:
        if kind == "ReLU":
            out.append(layer_cache)
        elif kind == "MaxPool2x2":
            out.append(layer_cache[0])
    return out


def fd_check(net, x, y, h=1e-3):
    """Worst per-tensor error against central differences.

    Elements whose +-h probe changes a ReLU mask or pooling winner straddle a
    kink where the finite difference is meaningless; they are skipped.
    Returns (worst error, fraction of probes kept).
    """
    _, grads = loss_of(net, x, y)
    assert set(grads) == set(net.params)
    base = routing(net, x)
    worst, kept, total = 0.0, 0, 0
    for key, p in net.params.items():
        num = np.zeros_like(p, dtype=float)
        keep = np.ones(p.size, dtype=bool)
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            plus = loss_of(net, x, y)[0]
            smooth = all(np.array_equal(a, b) for a, b in zip(base, routing(net, x)))
            flat[i] = old - h
            minus = loss_of(net, x, y)[0]
            smooth = smooth and all(np.array_equal(a, b) for a, b in zip(base, routing(net, x)))
            flat[i] = old
            num.reshape(-1)[i] = (plus - minus) / (2 * h)
            keep[i] = smooth
        kept += int(keep.sum())
        total += p.size
        if keep.any():
            worst = max(worst, rel_err(grads[key].reshape(-1)[keep], num.reshape(-1)[keep]))
    return worst, kept / total
