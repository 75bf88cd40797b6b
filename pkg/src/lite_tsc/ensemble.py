"""Ensembles of independently seeded models that average predicted distributions."""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .architectures import Config, build_model, load_model, predict_proba, save_model
from .serialization import atomic_write_text
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)


@dataclass
class EnsembleModel:
    members: list
    base_seed: int = 0

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        first = self.members[0]
        for m in self.members[1:]:
            if m.n_classes != first.n_classes:
                raise ValueError(f"members disagree on class count: {first.n_classes} vs {m.n_classes}")
            if m.in_channels != first.in_channels:
                raise ValueError(f"members disagree on input channels: {first.in_channels} vs {m.in_channels}")

    @property
    def k(self) -> int:
        return len(self.members)

    @property
    def n_classes(self) -> int:
        return self.members[0].n_classes


def ensemble_predict(ensemble: EnsembleModel, x: np.ndarray) -> np.ndarray:
    """Arithmetic mean of member probabilities, summed in member order.

    The sum is accumulated in float64, where adding float32 values is exact for
    any realistic ``k``; so ``k`` identical members give back the single
    member's output bit for bit after the final cast.
    """
    total, dtype = None, None
    for member in ensemble.members:
        p = predict_proba(member, x)
        dtype = p.dtype
        total = p.astype(np.float64) if total is None else total + p
    return (total / ensemble.k).astype(dtype)


def _train_member(args):
    config, dataset, train_config, seed = args
    model = build_model(config, dataset.n_channels, dataset.n_classes, seed)
    try:
        return train(model, dataset, dataclasses.replace(train_config, seed=seed))
    except Exception as exc:
        raise RuntimeError(f"ensemble member with seed {seed} failed: {exc}") from exc


def build_ensemble(dataset, config: Config, train_config: TrainConfig, k: int = 5, base_seed: int = 0,
                   max_workers: int = 1):
    """Train ``k`` members with seeds ``base_seed .. base_seed + k - 1``.

    Returns ``(EnsembleModel, [TrainHistory, ...])`` with members in seed order.
    Members are independent, so ``max_workers > 1`` trains them in separate
    processes without changing any result.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    jobs = [(config, dataset, train_config, base_seed + i) for i in range(k)]
    if max_workers > 1 and k > 1:
        with ProcessPoolExecutor(max_workers=min(max_workers, k)) as pool:
            results = list(pool.map(_train_member, jobs))
    else:
        results = [_train_member(job) for job in jobs]
    members = [model for model, _ in results]
    histories = [history for _, history in results]
    return EnsembleModel(members, base_seed), histories


def save_ensemble(directory, ensemble: EnsembleModel) -> Path:
    """Write ``member_<seed>.ckpt`` files plus ``ensemble.json`` into ``directory``."""
    directory = Path(directory)
    names = []
    for i, member in enumerate(ensemble.members):
        name = f"member_{ensemble.base_seed + i}.ckpt"
        save_model(directory / name, member)
        names.append(name)
    manifest = {"format": "lite-tsc-ensemble", "version": 1, "k": ensemble.k,
                "base_seed": ensemble.base_seed, "members": names}
    path = directory / "ensemble.json"
    atomic_write_text(path, json.dumps(manifest, indent=2) + "\n")
    return path


def load_ensemble(path) -> EnsembleModel:
    path = Path(path)
    manifest = json.loads(path.read_text())
    if manifest.get("format") != "lite-tsc-ensemble":
        raise ValueError(f"{path}: not an ensemble manifest")
    members = [load_model(path.parent / name) for name in manifest["members"]]
    if len(members) != manifest["k"]:
        raise ValueError(f"{path}: manifest lists {len(members)} members but k={manifest['k']}")
    return EnsembleModel(members, manifest["base_seed"])
