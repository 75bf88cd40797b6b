"""Hand-crafted, non-trainable filters that respond to increases, decreases and peaks."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .tensor import ConvSpec, conv1d_forward

INCREASE_SIZES = (2, 4, 8, 16, 32, 64)
DECREASE_SIZES = (2, 4, 8, 16, 32, 64)
PEAK_SIZES = (6, 12, 24, 48, 96)

KINDS = ("increase", "decrease", "peak")


def make_increase_filter(k: int) -> np.ndarray:
    """Alternating ``[-1, 1, -1, 1, ...]`` kernel of even length ``k``.

    Cross-correlated with a series it sums ``x[t+1] - x[t]`` over disjoint
    pairs, so strictly increasing windows give a positive response.
    """
    if k < 2 or k % 2:
        raise ValueError(f"increase/decrease filters need an even size >= 2, got {k}")
    w = np.ones(k, dtype=np.float32)
    w[0::2] = -1
    return w


def make_decrease_filter(k: int) -> np.ndarray:
    return -make_increase_filter(k)


def make_peak_filter(k: int) -> np.ndarray:
    """Palindromic zero-sum kernel with a positive centre and negative flanks.

    Built from six segments of length ``k / 6`` around a quadratic ramp
    ``l_i = ((i + 1) / s) ** 2``: ``[-l, -rev(l), 2l, 2rev(l), -l, -rev(l)]``.
    """
    if k < 6 or k % 6:
        raise ValueError(f"peak filters need a size divisible by 6, got {k}")
    s = k // 6
    ramp = ((np.arange(s) + 1) / s) ** 2
    rev = ramp[::-1]
    w = np.concatenate([-ramp, -rev, 2 * ramp, 2 * rev, -ramp, -rev])
    return w.astype(np.float32)


_BUILDERS = {
    "increase": make_increase_filter,
    "decrease": make_decrease_filter,
    "peak": make_peak_filter,
}


@dataclass(frozen=True)
class Kernel:
    kind: str
    size: int
    coefficients: np.ndarray


@dataclass(frozen=True)
class FilterBank:
    kernels: tuple[Kernel, ...]

    def __len__(self) -> int:
        return len(self.kernels)

    @property
    def sizes(self) -> dict[str, tuple[int, ...]]:
        return {kind: tuple(k.size for k in self.kernels if k.kind == kind) for kind in KINDS}

    def output_channels(self, in_channels: int, multivariate: bool) -> int:
        return len(self) * (in_channels if multivariate else 1)


def make_bank(
    increase_sizes=INCREASE_SIZES, decrease_sizes=DECREASE_SIZES, peak_sizes=PEAK_SIZES
) -> FilterBank:
    kernels = []
    for kind, sizes in zip(KINDS, (increase_sizes, decrease_sizes, peak_sizes)):
        for size in sorted(sizes):
            coeffs = _BUILDERS[kind](size)
            coeffs.flags.writeable = False
            kernels.append(Kernel(kind, size, coeffs))
    return FilterBank(tuple(kernels))


def stacked_kernels(bank: FilterBank, dtype=np.float32) -> np.ndarray:
    """All bank kernels embedded in one (len(bank), 1, K) array, K the largest size.

    Each kernel is placed so that a same-padded width-K convolution reproduces
    its own same-padded response exactly; the surrounding taps are zero.
    """
    width = max(k.size for k in bank.kernels)
    centre = (width - 1) // 2
    out = np.zeros((len(bank), 1, width), dtype=dtype)
    for i, kernel in enumerate(bank.kernels):
        start = centre - (kernel.size - 1) // 2
        out[i, 0, start : start + kernel.size] = kernel.coefficients
    return out


def apply_bank(x: np.ndarray, bank: FilterBank, multivariate_mode: bool = False) -> np.ndarray:
    """Run every bank kernel over ``x`` with same padding and no bias.

    Univariate mode sums each kernel's response over the input channels, giving
    ``len(bank)`` output channels. Multivariate mode keeps every channel's
    response separate, giving ``len(bank) * C`` channels ordered channel-major.
    """
    if len(bank) == 0:
        raise ValueError("filter bank is empty")
    batch, channels, length = x.shape
    w = stacked_kernels(bank, x.dtype)
    n, _, width = w.shape
    if multivariate_mode:
        flat = x.reshape(batch * channels, 1, length)
        out = conv1d_forward(flat, w, None, ConvSpec(1, n, width))
        return out.reshape(batch, channels * n, length)
    w = np.ascontiguousarray(np.broadcast_to(w, (n, channels, width)))
    return conv1d_forward(x, w, None, ConvSpec(channels, n, width))


def bank_to_csv(bank: FilterBank) -> str:
    """CSV with columns ``kind,size,coefficients`` (coefficients space-separated)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "size", "coefficients"])
    for kernel in bank.kernels:
        coeffs = " ".join(str(np.float32(c)) for c in kernel.coefficients)
        writer.writerow([kernel.kind, kernel.size, coeffs])
    return buf.getvalue()
