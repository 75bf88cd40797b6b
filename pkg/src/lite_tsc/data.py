"""Loading, normalizing, resampling and splitting time series datasets.

Supported inputs are the UCR ``.tsv`` layout (one series per line, label in
the first column) and the UEA ``.ts`` text format (``@`` header directives,
then ``@data`` rows with dimensions separated by ``:``).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .serialization import load_container, save_container

SCORE_THRESHOLD = 50.0


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    series: np.ndarray  # (N, C, L) float32
    labels: np.ndarray  # (N,) int, contiguous 0..n_classes-1
    class_names: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.series = np.asarray(self.series, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.series.ndim != 3:
            raise ValueError(f"series must be (N, C, L), got shape {self.series.shape}")
        if self.labels.shape != (self.series.shape[0],):
            raise ValueError("one label per series required")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("labels must index into class_names")

    def __len__(self) -> int:
        return self.series.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_channels(self) -> int:
        return self.series.shape[1]

    @property
    def length(self) -> int:
        return self.series.shape[2]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.series[indices], self.labels[indices], list(self.class_names), dict(self.metadata))


def _sort_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def _remap(raw_labels, declared=None):
    names = sorted(set(declared if declared is not None else raw_labels), key=_sort_key)
    index = {name: i for i, name in enumerate(names)}
    return np.array([index[l] for l in raw_labels], dtype=np.int64), names


def _canonical_label(text: str) -> str:
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        return text
    return str(int(value)) if value.is_integer() else repr(value)


def _equalize(rows: list, meta: dict) -> np.ndarray:
    """Stack per-sample (C, L_i) arrays, resampling to the longest length when they differ."""
    lengths = {r.shape[1] for r in rows}
    if len(lengths) == 1:
        return np.stack(rows).astype(np.float32)
    target = max(lengths)
    meta["resampled_to"] = target
    return np.stack([resample(r, target) for r in rows]).astype(np.float32)


def load_ucr_tsv(path) -> Dataset:
    """Read a UCR archive file. Trailing ``NaN`` cells mark a shorter series."""
    path = Path(path)
    raw_labels, rows = [], []
    width = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cells = line.rstrip("\n").split("\t") if "\t" in line else line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DatasetFormatError(f"{path}:{lineno}: expected {width} columns, found {len(cells)}")
            values = []
            for col, cell in enumerate(cells[1:], start=2):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DatasetFormatError(f"{path}:{lineno}: column {col} is not numeric: {cell!r}") from None
            arr = np.array(values)
            valid = ~np.isnan(arr)
            n_valid = int(valid.sum())
            if n_valid == 0 or not valid[:n_valid].all():
                raise DatasetFormatError(f"{path}:{lineno}: missing values are only allowed as trailing padding")
            raw_labels.append(_canonical_label(cells[0]))
            rows.append(arr[:n_valid][None, :])
    if not rows:
        raise DatasetFormatError(f"{path}: file is empty")
    meta = {"source": str(path), "format": "ucr-tsv"}
    labels, names = _remap(raw_labels)
    return Dataset(_equalize(rows, meta), labels, names, meta)


def _parse_bool(value: str, where: str) -> bool:
    v = value.strip().lower()
    if v not in ("true", "false"):
        raise DatasetFormatError(f"{where}: expected true/false, found {value!r}")
    return v == "true"


def load_uea_ts(path, score_threshold: float = SCORE_THRESHOLD) -> Dataset:
    """Read a ``.ts`` file.

    Classification files must declare ``@classLabel true ...``. Files with
    ``@targetLabel true`` carry a continuous score per series; those scores are
    kept in ``metadata["scores"]`` and binarized with :func:`binarize_scores`.
    """
    path = Path(path)
    declared, has_target, in_data = None, False, False
    raw_labels, rows = [], []
    n_dims = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            where = f"{path}:{lineno}"
            if not text or text.startswith("#"):
                continue
            if not in_data:
                if not text.startswith("@"):
                    raise DatasetFormatError(f"{where}: data row before @data")
                key, _, rest = text.partition(" ")
                key = key.lower()
                if key == "@data":
                    in_data = True
                elif key == "@classlabel":
                    parts = rest.split()
                    if parts and _parse_bool(parts[0], where):
                        declared = [_canonical_label(p) for p in parts[1:]]
                        if not declared:
                            raise DatasetFormatError(f"{where}: @classLabel true without labels")
                elif key == "@targetlabel":
                    has_target = _parse_bool(rest.split()[0], where) if rest.split() else False
                continue
            fields = text.split(":")
            if declared is None and not has_target:
                raise DatasetFormatError(f"{path}: header declares neither @classLabel nor @targetLabel")
            label, dims = fields[-1].strip(), fields[:-1]
            if n_dims is None:
                n_dims = len(dims)
            elif len(dims) != n_dims:
                raise DatasetFormatError(f"{where}: expected {n_dims} dimensions, found {len(dims)}")
            try:
                channels = [np.array([float(v) for v in d.split(",")]) for d in dims]
            except ValueError:
                raise DatasetFormatError(f"{where}: non-numeric or missing value") from None
            if any(np.isnan(c).any() for c in channels):
                raise DatasetFormatError(f"{where}: missing values are not supported")
            lengths = {c.size for c in channels}
            if len(lengths) > 1:
                target = max(lengths)
                channels = [resample(c, target) if c.size != target else c for c in channels]
            if not has_target:
                label = _canonical_label(label)
                if label not in declared:
                    raise DatasetFormatError(f"{where}: class label {label!r} not declared in @classLabel")
            raw_labels.append(label)
            rows.append(np.stack(channels))
    if not in_data:
        raise DatasetFormatError(f"{path}: missing @data section")
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    meta = {"source": str(path), "format": "uea-ts"}
    series = _equalize(rows, meta)
    if has_target:
        scores = np.array([float(l) for l in raw_labels])
        meta["scores"] = scores.tolist()
        meta["score_threshold"] = score_threshold
        return Dataset(series, binarize_scores(scores, score_threshold), ["bad", "good"], meta)
    labels, names = _remap(raw_labels, declared)
    return Dataset(series, labels, names, meta)


def load_dataset(path) -> Dataset:
    """Dispatch on suffix: ``.ts`` (UEA), ``.lds`` (internal dump), anything else UCR."""
    path = Path(path)
    if path.suffix.lower() == ".ts":
        return load_uea_ts(path)
    if path.suffix.lower() == ".lds":
        return load_dump(path)
    return load_ucr_tsv(path)


def znormalize(dataset: Dataset) -> Dataset:
    """Zero mean, unit population variance per sample and channel; flat channels become zeros."""
    x = dataset.series.astype(np.float64)
    mu = x.mean(axis=2, keepdims=True)
    sigma = x.std(axis=2, keepdims=True)
    flat = sigma < 1e-8
    out = np.where(flat, 0.0, (x - mu) / np.where(flat, 1.0, sigma))
    meta = {**dataset.metadata, "znormalized": True}
    return dataclasses.replace(dataset, series=out.astype(np.float32), metadata=meta)


def resample(series: np.ndarray, target_length: int) -> np.ndarray:
    """Fourier-domain resampling along the last axis (band-limited interpolation)."""
    if target_length < 2:
        raise ValueError(f"target length must be >= 2, got {target_length}")
    series = np.asarray(series, dtype=np.float64)
    if series.shape[-1] == target_length:
        return series.copy()
    return signal.resample(series, target_length, axis=-1)


def resample_dataset(dataset: Dataset, target_length: int) -> Dataset:
    out = resample(dataset.series, target_length).astype(np.float32)
    meta = {**dataset.metadata, "resampled_to": target_length}
    return dataclasses.replace(dataset, series=out, metadata=meta)


def stratified_split(dataset: Dataset, test_fraction: float = 0.2, seed: int = 0):
    """Per-class seeded shuffle, taking ``round(n_c * test_fraction)`` of each class for test."""
    if not 0 <= test_fraction <= 1:
        raise ValueError("test_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == c)
        if members.size == 0:
            continue
        if members.size < 2:
            raise ValueError(f"class {dataset.class_names[c]!r} has a single sample; cannot stratify")
        members = rng.permutation(members)
        n_test = math.floor(members.size * test_fraction + 0.5)
        if test_fraction < 1:
            n_test = min(n_test, members.size - 1)
        test_idx.extend(members[:n_test])
        train_idx.extend(members[n_test:])
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


def binarize_scores(scores, threshold: float = SCORE_THRESHOLD) -> np.ndarray:
    """0 (badly performed) below ``threshold``, 1 (well performed) at or above it."""
    return (np.asarray(scores, dtype=np.float64) >= threshold).astype(np.int64)


def save_dump(path, dataset: Dataset) -> None:
    meta = {"kind": "dataset", "class_names": list(dataset.class_names), "metadata": dataset.metadata}
    save_container(path, {"series": dataset.series, "labels": dataset.labels.astype(np.int32)}, meta)


def load_dump(path) -> Dataset:
    tensors, meta = load_container(path)
    if meta.get("kind") != "dataset":
        raise DatasetFormatError(f"{path}: container does not hold a dataset")
    return Dataset(tensors["series"], tensors["labels"], meta["class_names"], meta["metadata"])


def make_synthetic(n: int = 300, length: int = 128, noise: float = 0.2, seed: int = 0) -> Dataset:
    """Three balanced classes: increasing ramp, decreasing ramp, centred bump, plus Gaussian noise.

    Amplitudes vary per sample in [0.5, 1.5] and the bump centre jitters by up
    to a sixteenth of the length. Series are not normalized.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 3
    t = np.linspace(-1.0, 1.0, length)
    series = np.empty((n, 1, length))
    for i, c in enumerate(labels):
        amp = rng.uniform(0.5, 1.5)
        if c == 0:
            base = amp * t
        elif c == 1:
            base = -amp * t
        else:
            centre = rng.uniform(-1 / 8, 1 / 8)
            base = amp * np.exp(-(((t - centre) / 0.15) ** 2))
        series[i, 0] = base + rng.normal(0.0, noise, length)
    meta = {"source": "synthetic", "noise": noise, "seed": seed}
    return Dataset(series.astype(np.float32), labels, ["increase", "decrease", "bump"], meta)


def write_ucr_tsv(path, dataset: Dataset) -> None:
    """Write a univariate dataset in UCR layout, labels written as class indices."""
    if dataset.n_channels != 1:
        raise ValueError("UCR layout holds univariate series only")
    lines = []
    for label, row in zip(dataset.labels, dataset.series[:, 0]):
        lines.append("\t".join([str(int(label))] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")
