"""Accuracy comparisons across datasets: win/tie/loss, Wilcoxon, Holm, average ranks."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats as sps

from .serialization import atomic_write_text

EXACT_MAX_N = 20


@dataclass(frozen=True)
class RunRecord:
    classifier: str
    dataset: str
    accuracy: float
    seconds: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1] for {self.classifier}/{self.dataset}")


def accuracy(predictions, labels) -> float:
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError("predictions and labels must be non-empty and of equal length")
    return float((predictions == labels).mean())


def win_tie_loss(a, b, tie_eps: float = 0.0) -> tuple[int, int, int]:
    """Count datasets where ``a`` beats, ties with (within ``tie_eps``) or loses to ``b``."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    ties = np.abs(d) <= tie_eps
    return int(((d > 0) & ~ties).sum()), int(ties.sum()), int(((d < 0) & ~ties).sum())


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n: int
    exact: bool
    degenerate: bool = False


def _exact_lower_tail(ranks: np.ndarray, w: float) -> float:
    """P(W+ <= w) under the null, by convolving the per-rank sign distributions.

    Ranks are doubled so that average ranks of ties become integers.
    """
    doubled = np.rint(2 * ranks).astype(np.int64)
    counts = np.zeros(int(doubled.sum()) + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    limit = int(math.floor(2 * w + 1e-9))
    return counts[: limit + 1].sum() / counts.sum()


def wilcoxon_signed_rank(a, b, exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    """Two-sided paired Wilcoxon signed-rank test; zero differences are dropped.

    Exact for up to ``exact_max_n`` non-zero differences, otherwise the normal
    approximation with continuity and tie corrections.
    """
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, True, degenerate=True)
    ranks = sps.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= exact_max_n:
        p = min(1.0, 2.0 * _exact_lower_tail(ranks, w))
        return WilcoxonResult(w, p, n, True)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts ** 3 - tie_counts).sum() / 48.0
    if var <= 0:
        return WilcoxonResult(w, 1.0, n, False)
    z = (w - mean + 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * sps.norm.cdf(min(z, 0.0)))
    return WilcoxonResult(w, p, n, False)


def holm_correction(p_values) -> np.ndarray:
    """Holm step-down adjustment, returned in the input order."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    adjusted_sorted = np.minimum(1.0, np.maximum.accumulate((m - np.arange(m)) * p[order]))
    out = np.empty(m)
    out[order] = adjusted_sorted
    return out


def average_rank(table) -> np.ndarray:
    """Mean rank per classifier for a (classifiers x datasets) accuracy table; 1 is best."""
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or np.isnan(table).any():
        raise ValueError("average_rank needs a complete 2-D table")
    ranks = np.apply_along_axis(lambda col: sps.rankdata(-col), 0, table)
    return ranks.mean(axis=1)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def load_records(path) -> list[RunRecord]:
    """Read ``classifier,dataset,accuracy[,seconds]`` rows (header required)."""
    path = Path(path)
    records = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"classifier", "dataset", "accuracy"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                seconds = float(row["seconds"]) if row.get("seconds") not in (None, "") else None
                records.append(RunRecord(row["classifier"], row["dataset"], float(row["accuracy"]), seconds))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records


@dataclass
class Report:
    classifiers: list
    datasets: list
    table: np.ndarray  # (classifiers, datasets)
    mean_accuracy: np.ndarray
    ranks: np.ndarray
    pairwise: list  # dict rows

    def classifier_rows(self):
        order = np.argsort(-self.mean_accuracy, kind="stable")
        return [
            {"classifier": self.classifiers[i], "datasets": len(self.datasets),
             "mean_accuracy": float(self.mean_accuracy[i]), "average_rank": float(self.ranks[i])}
            for i in order
        ]


def pivot(records) -> tuple[list, list, np.ndarray]:
    classifiers = sorted({r.classifier for r in records})
    datasets = sorted({r.dataset for r in records})
    table = np.full((len(classifiers), len(datasets)), np.nan)
    ci = {c: i for i, c in enumerate(classifiers)}
    di = {d: j for j, d in enumerate(datasets)}
    for r in records:
        if not np.isnan(table[ci[r.classifier], di[r.dataset]]):
            raise ValueError(f"duplicate record for {r.classifier}/{r.dataset}")
        table[ci[r.classifier], di[r.dataset]] = r.accuracy
    if np.isnan(table).any():
        i, j = np.argwhere(np.isnan(table))[0]
        raise ValueError(f"no record for classifier {classifiers[i]!r} on dataset {datasets[j]!r}")
    return classifiers, datasets, table


def report(records, tie_eps: float = 0.0) -> Report:
    """Mean accuracy, average ranks, and for every classifier pair win/tie/loss plus raw and Holm p."""
    classifiers, datasets, table = pivot(records)
    pairs = list(itertools.combinations(range(len(classifiers)), 2))
    rows = []
    for i, j in pairs:
        wins, ties, losses = win_tie_loss(table[i], table[j], tie_eps)
        res = wilcoxon_signed_rank(table[i], table[j])
        rows.append({"classifier_a": classifiers[i], "classifier_b": classifiers[j],
                     "mean_a": float(table[i].mean()), "mean_b": float(table[j].mean()),
                     "wins_a": wins, "ties": ties, "losses_a": losses,
                     "statistic": res.statistic, "p_value": res.p_value, "degenerate": res.degenerate})
    for row, adj in zip(rows, holm_correction([r["p_value"] for r in rows])):
        row["p_holm"] = float(adj)
    return Report(classifiers, datasets, table, table.mean(axis=1), average_rank(table), rows)


def _write_csv(path, rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row[k] for k in columns})
    atomic_write_text(path, buf.getvalue())


CLASSIFIER_COLUMNS = ["classifier", "datasets", "mean_accuracy", "average_rank"]
PAIRWISE_COLUMNS = ["classifier_a", "classifier_b", "mean_a", "mean_b", "wins_a", "ties", "losses_a",
                    "statistic", "p_value", "p_holm", "degenerate"]


def write_report(rep: Report, directory) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    summary, pairwise = directory / "classifiers.csv", directory / "pairwise.csv"
    _write_csv(summary, rep.classifier_rows(), CLASSIFIER_COLUMNS)
    _write_csv(pairwise, rep.pairwise, PAIRWISE_COLUMNS)
    return summary, pairwise
