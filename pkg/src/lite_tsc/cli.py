"""Command line entry point: ``lite-tsc <command> [options]``.

Exit codes: 0 on success, 1 when a computation or input file fails, 2 on
malformed usage.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path


from . import __version__
from . import architectures as A
from . import plotting
from .cam import cam_export, compute_cam
from .data import load_dataset, make_synthetic, resample_dataset, save_dump, stratified_split, write_ucr_tsv, znormalize
from .ensemble import build_ensemble, ensemble_predict, load_ensemble, save_ensemble, EnsembleModel
from .filters import bank_to_csv, make_bank
from .serialization import atomic_write_text
from .stats import accuracy, load_records, report, write_report
from .trainer import TrainConfig, train

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("lite_tsc")

THREADS_ENV = "LITE_TSC_THREADS"

TRAIN_DEFAULTS = {
    "arch": "lite",
    "epochs": 1500,
    "batch_size": 64,
    "learning_rate": 1e-3,
    "seed": 0,
    "test_fraction": 0.0,
    "resample_length": None,
    "k": 5,
    "base_seed": 0,
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _resolve(command: str, args, keys) -> dict:
    """defaults < TOML file (top level, then its ``[command]`` table) < flags."""
    resolved = {k: TRAIN_DEFAULTS[k] for k in keys}
    if getattr(args, "config", None):
        try:
            data = tomllib.loads(Path(args.config).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        section = {**{k: v for k, v in data.items() if not isinstance(v, dict)}, **data.get(command, {})}
        for key, value in section.items():
            key = key.replace("-", "_")
            if key not in resolved:
                raise UsageError(f"{args.config}: unknown option {key!r} for {command}")
            resolved[key] = value
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    if resolved["arch"] not in A.ARCHITECTURES:
        raise UsageError(f"unknown architecture {resolved['arch']!r}")
    return resolved


def _prepare_dataset(path, resample_length=None):
    ds = load_dataset(path)
    if resample_length:
        ds = resample_dataset(ds, int(resample_length))
    return znormalize(ds)


def _check_arch_channels(arch: str, n_channels: int) -> None:
    config = A.get_config(arch)
    if isinstance(config, A.LiteConfig) and not config.multivariate and n_channels > 1:
        raise ValueError(f"--arch {arch} is univariate but the dataset has {n_channels} channels; use litemv")


def _run_dir(out, command: str, identity: dict) -> tuple[Path, str]:
    digest = hashlib.sha256(json.dumps(identity, sort_keys=True).encode()).hexdigest()
    return Path(out) / f"{command}-{digest[:12]}", digest


def _write_manifest(run_dir: Path, command: str, identity_hash: str, resolved: dict, inputs: dict, started: float):
    outputs = {p.name: _sha256(p) for p in sorted(run_dir.iterdir()) if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "command": command,
        "version": __version__,
        "config": resolved,
        "seed": resolved.get("seed", resolved.get("base_seed")),
        "inputs": inputs,
        "outputs": str(run_dir),
        "run_hash": identity_hash,
        "artifacts": outputs,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    atomic_write_text(run_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _train_config(resolved: dict, seed: int) -> TrainConfig:
    return TrainConfig(epochs=int(resolved["epochs"]), batch_size=int(resolved["batch_size"]),
                       learning_rate=float(resolved["learning_rate"]), seed=seed)


def _split(ds, resolved):
    if resolved["test_fraction"] > 0:
        return stratified_split(ds, resolved["test_fraction"], resolved.get("seed", resolved.get("base_seed", 0)))
    return ds, None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

TRAIN_KEYS = ["arch", "epochs", "batch_size", "learning_rate", "seed", "test_fraction", "resample_length"]


def cmd_train(args) -> int:
    started = time.time()
    resolved = _resolve("train", args, TRAIN_KEYS)
    ds = _prepare_dataset(args.dataset, resolved["resample_length"])
    _check_arch_channels(resolved["arch"], ds.n_channels)
    inputs = {"dataset": str(args.dataset), "dataset_sha256": _sha256(args.dataset)}
    run_dir, digest = _run_dir(args.out, "train", {"command": "train", "config": resolved, "dataset": inputs["dataset_sha256"]})
    run_dir.mkdir(parents=True, exist_ok=True)

    train_ds, test_ds = _split(ds, resolved)
    model = A.build_model(A.get_config(resolved["arch"]), ds.n_channels, ds.n_classes, resolved["seed"])
    best, history = train(model, train_ds, _train_config(resolved, resolved["seed"]))

    A.save_model(run_dir / "model.ckpt", best)
    atomic_write_text(run_dir / "history.csv", history.to_csv())
    if not args.no_plots:
        plotting.plot_history(history, run_dir / "history.png")
    counts = A.count_params(best)
    metrics = {"params_backbone": counts.backbone, "params_classifier": counts.classifier,
               "best_epoch": history.best_epoch, "train_loss": history.loss[history.best_epoch]}
    if test_ds is not None:
        save_dump(run_dir / "test.lds", test_ds)
        metrics["test_accuracy"] = accuracy(A.predict_proba(best, test_ds.series).argmax(axis=1), test_ds.labels)
    atomic_write_text(run_dir / "metrics.json", json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    _write_manifest(run_dir, "train", digest, resolved, inputs, started)
    print(f"run directory: {run_dir}")
    print(f"trainable parameters: {counts.backbone} + {counts.classifier} (classifier)")
    if "test_accuracy" in metrics:
        print(f"test accuracy: {metrics['test_accuracy']:.6f}")
    return 0


def cmd_ensemble(args) -> int:
    started = time.time()
    resolved = _resolve("ensemble", args, [k for k in TRAIN_KEYS if k != "seed"] + ["k", "base_seed"])
    if resolved["k"] < 1:
        raise UsageError("--k must be >= 1")
    ds = _prepare_dataset(args.dataset, resolved["resample_length"])
    _check_arch_channels(resolved["arch"], ds.n_channels)
    inputs = {"dataset": str(args.dataset), "dataset_sha256": _sha256(args.dataset)}
    run_dir, digest = _run_dir(args.out, "ensemble", {"command": "ensemble", "config": resolved, "dataset": inputs["dataset_sha256"]})
    run_dir.mkdir(parents=True, exist_ok=True)

    train_ds, test_ds = _split(ds, resolved)
    workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    ens, histories = build_ensemble(train_ds, A.get_config(resolved["arch"]), _train_config(resolved, resolved["base_seed"]),
                                    resolved["k"], resolved["base_seed"], max_workers=workers)
    save_ensemble(run_dir, ens)
    for i, history in enumerate(histories):
        atomic_write_text(run_dir / f"history_{resolved['base_seed'] + i}.csv", history.to_csv())
    metrics = {"k": ens.k}
    if test_ds is not None:
        save_dump(run_dir / "test.lds", test_ds)
        probs = ensemble_predict(ens, test_ds.series)
        metrics["test_accuracy"] = accuracy(probs.argmax(axis=1), test_ds.labels)
        metrics["member_test_accuracy"] = [
            accuracy(A.predict_proba(m, test_ds.series).argmax(axis=1), test_ds.labels) for m in ens.members]
    atomic_write_text(run_dir / "metrics.json", json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    _write_manifest(run_dir, "ensemble", digest, resolved, inputs, started)
    print(f"run directory: {run_dir}")
    if "test_accuracy" in metrics:
        print(f"test accuracy: {metrics['test_accuracy']:.6f}")
    return 0


def cmd_summary(args) -> int:
    config = A.get_config(args.arch)
    rows = A.layer_table(config, args.channels, args.length, args.classes)
    counts = A.count_params(config, args.channels, args.classes)
    mults = A.count_mults(config, args.length, args.channels)
    rf = A.model_receptive_field(config, args.channels)
    if args.json:
        out = {"arch": args.arch, "in_channels": args.channels, "length": args.length,
               "layers": [dataclasses.asdict(r) for r in rows],
               "params_backbone": counts.backbone, "params_classifier": counts.classifier,
               "params_total": counts.total, "mults": mults, "receptive_field": rf}
        print(json.dumps(out, indent=2))
        return 0
    header = f"{'layer':<26}{'kind':<17}{'in':>5}{'out':>6}{'k':>5}{'d':>4}{'params':>10}{'mults':>13}{'RF':>6}"
    print(header)
    print("-" * len(header))
    for r in rows:
        k = str(r.kernel) if r.kernel else ""
        d = str(r.dilation) if r.dilation else ""
        rf_cell = str(r.receptive_field) if r.receptive_field else ""
        print(f"{r.name:<26}{r.kind:<17}{r.in_channels:>5}{r.out_channels:>6}{k:>5}{d:>4}{r.params:>10,}{r.mults:>13,}{rf_cell:>6}")
    print("-" * len(header))
    print(f"trainable parameters (excluding classifier): {counts.backbone:,}")
    if args.classes:
        print(f"classifier parameters: {counts.classifier:,}  total: {counts.total:,}")
    print(f"convolution multiplications (length {args.length}): {mults:,}")
    print(f"receptive field: {rf}")
    return 0


def _load_predictor(args):
    if args.model:
        model = A.load_model(args.model)
        return EnsembleModel([model]), model.in_channels
    ens = load_ensemble(args.ensemble)
    return ens, ens.members[0].in_channels


def cmd_eval(args) -> int:
    ens, channels = _load_predictor(args)
    ds = _prepare_dataset(args.dataset, args.resample_length)
    if ds.n_channels != channels:
        raise ValueError(f"model expects {channels} channels, dataset has {ds.n_channels}")
    probs = ensemble_predict(ens, ds.series)
    acc = accuracy(probs.argmax(axis=1), ds.labels)
    if args.json:
        print(json.dumps({"accuracy": acc, "n": len(ds)}))
    else:
        print(f"accuracy: {acc:.6f} ({len(ds)} series)")
    return 0


def cmd_cam(args) -> int:
    model = A.load_model(args.model)
    ds = _prepare_dataset(args.dataset, args.resample_length)
    if not 0 <= args.index < len(ds):
        raise ValueError(f"--index {args.index} out of range for {len(ds)} series")
    result = compute_cam(model, ds.series[args.index])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"cam_{args.index}.csv"
    cam_export(result, csv_path)
    if not args.no_plots:
        title = f"series {args.index}: predicted {ds.class_names[result.class_index]}, true {ds.class_names[ds.labels[args.index]]}"
        plotting.plot_cam(ds.series[args.index], result.normalized, out / f"cam_{args.index}.png", title)
    print(f"predicted class: {ds.class_names[result.class_index]}")
    print(f"wrote {csv_path}")
    return 0


def cmd_stats(args) -> int:
    rep = report(load_records(args.records), args.tie_eps)
    summary, pairwise = write_report(rep, args.out)
    if not args.no_plots:
        index = {c: i for i, c in enumerate(rep.classifiers)}
        for row in rep.pairwise:
            a, b = row["classifier_a"], row["classifier_b"]
            plotting.plot_one_vs_one(rep.table[index[a]], rep.table[index[b]], a, b,
                                     Path(args.out) / f"ovo_{a}_vs_{b}.png".replace("/", "_"),
                                     (row["wins_a"], row["ties"], row["losses_a"]), row["p_value"])
    for row in rep.classifier_rows():
        print(f"{row['classifier']:<24} mean accuracy {row['mean_accuracy']:.4f}  average rank {row['average_rank']:.3f}")
    print(f"wrote {summary} and {pairwise}")
    return 0


def cmd_dump_filters(args) -> int:
    bank = make_bank()
    text = bank_to_csv(bank)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    if args.plot:
        plotting.plot_filters(bank, args.plot)
    return 0


def cmd_synth(args) -> int:
    ds = make_synthetic(args.n, args.length, args.noise, args.seed)
    write_ucr_tsv(args.out, ds)
    print(f"wrote {len(ds)} series of length {ds.length} to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_training_flags(p, with_seed=True):
    p.add_argument("--dataset", required=True, help="UCR .tsv, UEA .ts, or .lds dump")
    p.add_argument("--arch", choices=list(A.ARCHITECTURES))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    if with_seed:
        p.add_argument("--seed", type=int)
    p.add_argument("--test-fraction", dest="test_fraction", type=float,
                   help="hold out a stratified fraction for testing (default 0: train on everything)")
    p.add_argument("--resample-length", dest="resample_length", type=int)
    p.add_argument("--config", help="TOML file with defaults for these options")
    p.add_argument("--out", required=True, help="parent directory for the run directory")
    p.add_argument("--no-plots", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lite-tsc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ensemble", help="train k seeded models and average them")
    _add_training_flags(p, with_seed=False)
    p.add_argument("--k", type=int)
    p.add_argument("--base-seed", dest="base_seed", type=int)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("summary", help="per-layer parameters, multiplications and receptive field")
    p.add_argument("--arch", choices=list(A.ARCHITECTURES), required=True)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--length", type=int, default=1)
    p.add_argument("--classes", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("eval", help="accuracy of a model or ensemble on a dataset")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--ensemble")
    p.add_argument("--dataset", required=True)
    p.add_argument("--resample-length", dest="resample_length", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cam", help="class activation map of one series")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--resample-length", dest="resample_length", type=int)
    p.add_argument("--out", default=".")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_cam)

    p = sub.add_parser("stats", help="compare classifiers from a records CSV")
    p.add_argument("--records", required=True, help="CSV with classifier,dataset,accuracy[,seconds]")
    p.add_argument("--out", required=True)
    p.add_argument("--tie-eps", dest="tie_eps", type=float, default=0.0)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("dump-filters", help="write the custom filter bank as CSV")
    p.add_argument("--out")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_dump_filters)

    p = sub.add_parser("synth", help="write the synthetic ramp/bump dataset in UCR layout")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--length", type=int, default=128)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lite-tsc: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"lite-tsc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
