"""Compiled inner loops for depthwise convolution.

Loops run in a fixed order so results are
bit-reproducible; accumulators use the input dtype.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def depthwise_forward(xp, w, dilation, length):
    batch, channels, _ = xp.shape
    k = w.shape[1]
    out = np.zeros((batch, channels, length), dtype=xp.dtype)
    for b in range(batch):
        for c in range(channels):
            for j in range(k):
                wj = w[c, j]
                o = j * dilation
                for t in range(length):
                    out[b, c, t] += wj * xp[b, c, t + o]
    return out


@numba.njit(cache=True)
def depthwise_backward(xp, w, grad_out, dilation, need_input, need_weight):
    batch, channels, length = grad_out.shape
    k = w.shape[1]
    grad_w = np.zeros_like(w)
    grad_xp = np.zeros_like(xp) if need_input else np.zeros((0, 0, 0), dtype=xp.dtype)
    acc = np.zeros(length, dtype=xp.dtype)
    for c in range(channels):
        for j in range(k):
            o = j * dilation
            if need_weight:
                acc[:] = 0
                for b in range(batch):
                    for t in range(length):
                        acc[t] += grad_out[b, c, t] * xp[b, c, t + o]
                total = acc[0] * 0
                for t in range(length):
                    total += acc[t]
                grad_w[c, j] = total
            if need_input:
                wj = w[c, j]
                for b in range(batch):
                    for t in range(length):
                        grad_xp[b, c, t + o] += wj * grad_out[b, c, t]
    return grad_xp, grad_w
