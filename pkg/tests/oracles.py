"""Independent reference implementations used only by the tests.

Each oracle is written from the defining formula with plain loops so that it
shares no code path with the library.
"""

import itertools
import math

import numpy as np


def conv1d_naive(x, w, bias=None, dilation=1, depthwise=False):
    """Direct evaluation of the same-padded cross-correlation sum in float64."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b, c_in, length = x.shape
    c_out, _, k = w.shape
    extent = 1 + dilation * (k - 1)
    left = (extent - 1) // 2
    out = np.zeros((b, c_out, length))
    for n in range(b):
        for o in range(c_out):
            channels = [o] if depthwise else range(c_in)
            for t in range(length):
                acc = 0.0 if bias is None else float(bias[o])
                for ci, c in enumerate(channels):
                    for j in range(k):
                        pos = t - left + j * dilation
                        if 0 <= pos < length:
                            acc += x[n, c, pos] * w[o, 0 if depthwise else c, j]
                out[n, o, t] = acc
    return out


def numeric_grad(f, arr, h=1e-6):
    """Central finite differences of the scalar ``f()`` with respect to ``arr`` (mutated in place)."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def max_rel_error(analytic, numeric, floor=1e-5):
    """Largest element-wise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is exactly zero (a bias feeding
    batch norm, for instance) from turning finite-difference roundoff into a
    large relative error.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale)) if a.size else 0.0


def dft(x):
    n = len(x)
    k = np.arange(n)
    return np.array([np.sum(x * np.exp(-2j * np.pi * f * k / n)) for f in range(n)])


def idft(spec):
    n = len(spec)
    k = np.arange(n)
    return np.array([np.sum(spec * np.exp(2j * np.pi * k * t / n)) for t in range(n)]) / n


def fourier_resample(x, target):
    """Spectrum truncation / zero padding with the Nyquist bin split when upsampling from even length."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    spec = dft(x)
    out = np.zeros(target, dtype=complex)
    m = min(n, target)
    half = (m + 1) // 2  # bins 0 .. half-1 are copied from the positive side
    out[:half] = spec[:half]
    neg = m - half
    if neg:
        out[target - neg:] = spec[n - neg:]
    if m % 2 == 0:
        if target > n:  # the source Nyquist bin is split across +/- Nyquist of the bigger grid
            out[m // 2] = spec[m // 2] / 2
            out[target - m // 2] = spec[m // 2] / 2
        elif target < n:  # fold the two halves of the new Nyquist bin
            out[m // 2] = spec[m // 2] + spec[n - m // 2]
    return np.real(idft(out)) * (target / n)


def wilcoxon_enumerate(d):
    """Two-sided exact p by enumerating every sign assignment of the ranked |d|.

    Zero differences are dropped. ``p = P(min(W+, W-) <= observed)``.
    """
    d = np.asarray([v for v in d if v != 0], dtype=np.float64)
    n = len(d)
    if n == 0:
        return 1.0
    absd = np.abs(d)
    # average ranks, computed by hand
    order = sorted(range(n), key=lambda i: absd[i])
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and absd[order[j + 1]] == absd[order[i]]:
            j += 1
        for pos in range(i, j + 1):
            ranks[order[pos]] = (i + j) / 2.0 + 1.0
        i = j + 1
    total = ranks.sum()
    w_plus = ranks[d > 0].sum()
    observed = min(w_plus, total - w_plus)
    # row i of ``signs`` is the i-th of the 2^n sign assignments
    signs = (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1
    wp = signs @ ranks
    hits = int((np.minimum(wp, total - wp) <= observed + 1e-9).sum())
    return hits / 2 ** n


def wilcoxon_enumerate_slow(d):
    """Same as :func:`wilcoxon_enumerate` with an explicit product loop; used to check the fast one."""
    d = [v for v in d if v != 0]
    n = len(d)
    if n == 0:
        return 1.0
    absd = [abs(v) for v in d]
    ranks = [sum(a < x for a in absd) + (sum(a == x for a in absd) + 1) / 2 for x in absd]
    total = sum(ranks)
    observed = min(sum(r for r, v in zip(ranks, d) if v > 0), sum(r for r, v in zip(ranks, d) if v < 0))
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        wp = sum(r for r, s in zip(ranks, signs) if s)
        if min(wp, total - wp) <= observed + 1e-9:
            hits += 1
    return hits / 2 ** n


def holm_by_definition(p):
    """Step-down Holm: sort ascending, multiply the i-th by (m - i), running max, cap at 1."""
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, (m - rank) * p[idx])
        adjusted[idx] = min(1.0, running)
    return adjusted


def count_trainable(model):
    """Enumerate every trainable scalar stored in a model, one element at a time."""
    total = 0
    for arr in model.params.values():
        for _ in np.nditer(arr):
            total += 1
    return total


def lite_param_formula(c_in=1, n=32, kernels=(40, 20, 10), bank=17, deep=((20, 32), (10, 32))):
    """Closed-form parameter count for the univariate LITE backbone."""
    first = sum(c_in * n * k for k in kernels)
    width = len(kernels) * n + bank
    total = first + 2 * width
    for k, out in deep:
        total += width * k + width * out + 2 * out
        width = out
    return total


def normal_sf(z):
    return 0.5 * math.erfc(z / math.sqrt(2.0))
