"""Class activation maps over the features that feed global average pooling."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .architectures import ModelState, forward


@dataclass
class CamResult:
    raw: np.ndarray
    normalized: np.ndarray
    class_index: int
    length: int


def min_max(raw: np.ndarray) -> np.ndarray:
    """Scale to [0, 1]; a constant input maps to all zeros."""
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def compute_cam(model: ModelState, x: np.ndarray) -> CamResult:
    """CAM of one series (shape (C, L) or (1, C, L)) for the most probable class.

    ``raw[t] = sum_m w[c, m] * O[m, t]`` with ``O`` the last block's output and
    ``w[c]`` the classifier row of the winning class ``c``; the bias is left out.
    """
    if "head.weight" not in model.params:
        raise ValueError("model has no GAP-fed classification head")
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[0] != 1:
        raise ValueError(f"compute_cam expects a single series, got shape {x.shape}")
    probs, cache = forward(model, x)
    c = int(np.argmax(probs[0]))
    raw = model.params["head.weight"][c] @ cache.features[0]
    return CamResult(raw, min_max(raw), c, x.shape[2])


def cam_export(result: CamResult, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "raw", "normalized"])
            for t, (r, n) in enumerate(zip(result.raw, result.normalized)):
                writer.writerow([t, str(np.float32(r)), str(np.float32(n))])
    except OSError as exc:
        raise OSError(f"cannot write CAM to {path}: {exc.strerror or exc}") from exc


def cam_import(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back ``(raw, normalized)`` from a file written by :func:`cam_export`."""
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    raw = np.array([float(r["raw"]) for r in rows], dtype=np.float32)
    norm = np.array([float(r["normalized"]) for r in rows], dtype=np.float32)
    return raw, norm
