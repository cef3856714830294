"""Forward/backward kernels for the layer set, NHWC layout.

Each ``*_forward`` returns ``(out, cache)``; each ``*_backward`` takes the
upstream gradient and that cache. Caches hold only what backward needs;
im2col buffers are rebuilt in backward instead of being retained.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x):
    b, h, w, cin = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (B, H, W, Cin, 3, 3)
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, 9 * cin)


def conv3x3_forward(x, w, bias):
    """3x3 'same' convolution, stride 1. ``w`` has shape (3, 3, Cin, Cout)."""
    b, h, wd, _ = x.shape
    cout = w.shape[-1]
    out = _im2col(x) @ w.reshape(-1, cout) + bias
    return out.reshape(b, h, wd, cout), (x, w)


def conv3x3_backward(dout, cache, need_dx=True):
    x, w = cache
    b, h, wd, cin = x.shape
    cout = w.shape[-1]
    d2 = dout.reshape(-1, cout)
    dw = (_im2col(x).T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ w.reshape(-1, cout).T).reshape(b, h, wd, 3, 3, cin)
    dxp = np.zeros((b, h + 2, wd + 2, cin), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + wd, :] += dcols[:, :, :, i, j, :]
    return dxp[:, 1:-1, 1:-1, :], dw, db


def maxpool2x2_forward(x):
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped."""
    b, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    win = (
        x[:, :2 * ho, :2 * wo, :]
        .reshape(b, ho, 2, wo, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b, ho, wo, c, 4)
    )
    idx = win.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2x2_backward(dout, cache):
    idx, shape = cache
    b, h, w, c = shape
    ho, wo = h // 2, w // 2
    d = np.zeros((b, ho, wo, c, 4), dtype=dout.dtype)
    np.put_along_axis(d, idx[..., None].astype(np.intp), dout[..., None], axis=-1)
    d = d.reshape(b, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(b, 2 * ho, 2 * wo, c)
    if (2 * ho, 2 * wo) == (h, w):
        return d
    dx = np.zeros(shape, dtype=dout.dtype)
    dx[:, :2 * ho, :2 * wo, :] = d
    return dx


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train, momentum=0.99, eps=1e-3,
                      count=None):
    """Per-channel batch normalization.

    In train mode the running statistics are updated in place with
    ``running += w * (batch - running)``. Without ``count`` the weight is the
    plain Keras ``1 - momentum``. With a one-element ``count`` array the
    average is zero-debiased, ``w = (1 - momentum) / (1 - momentum ** t)``, so
    the first update replaces the initial (0, 1) statistics and ``w`` decays
    to ``1 - momentum``; ``count`` is incremented in place.
    """
    if train:
        mean = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
        w = 1.0 - momentum
        if count is not None:
            count += 1
            w = w / (1.0 - momentum ** float(count[0])) if momentum < 1.0 else 0.0
        running_mean += w * (mean - running_mean)
        running_var += w * (var - running_var)
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    return x_hat * gamma + beta, (x_hat, gamma, inv_std)


def batchnorm_backward(dout, cache):
    x_hat, gamma, inv_std = cache
    n = x_hat.shape[0] * x_hat.shape[1] * x_hat.shape[2]
    dbeta = dout.sum(axis=(0, 1, 2))
    dgamma = (dout * x_hat).sum(axis=(0, 1, 2))
    dx = (gamma * inv_std / n) * (n * dout - dbeta - x_hat * dgamma)
    return dx, dgamma, dbeta


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def gap_forward(x):
    return x.mean(axis=(1, 2)), x.shape


def gap_backward(dout, shape):
    b, h, w, c = shape
    return np.broadcast_to(dout[:, None, None, :] / (h * w), shape).astype(dout.dtype)


def dense_forward(x, w, bias):
    return x @ w + bias, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean categorical cross-entropy and its gradient wrt the logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    loss = -log_p[np.arange(n), labels].mean()
    dlogits = np.exp(log_p)
    dlogits[np.arange(n), labels] -= 1
    return loss, dlogits / n
