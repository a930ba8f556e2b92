"""
Command line entry point: ``shiftcanon <command> [options]``.

Commands: gen-data, canonize, train, eval, verify, report, experiment.
Every command accepts ``--config FILE`` (JSON with the same keys as the long
flags, dashes or underscores); explicit flags win over the file.

Exit codes: 0 success, 1 property/assertion failure, 2 usage error,
3 I/O or data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .canon import canonize_array
from .data import (
    Dataset,
    SyntheticSpec,
    _atomic_write_text,
    generate_sinusoid_task,
    load_dataset,
    save_dataset,
    split,
)
from .errors import DegeneratePhase, IoFailure, MalformedRecord, ShiftCanonError
from .evaluate import class_distance_summary, evaluate
from .nn import Pipeline, TrainConfig, build_pipeline_nets, train_classifier, train_joint
from .nn.train import guidance_raw

log = logging.getLogger("shiftcanon")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
TRAIN_VARIANTS = ("ours", "fixed_phi", "ce_only", "neg_var", "baseline", "blurpool", "augment")


def write_manifest(path: Path, command: str, args: argparse.Namespace, **extra):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.get("seed"),
        "config": cfg,
        "python": platform.python_version(),
        "numpy": np.__version__,
        **extra,
    }
    _atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _manifest_path(out: Path) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json") if out.suffix else out / "manifest.json"


def _write_csv(path: Path, rows: list, fields: list):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields)
    w.writeheader()
    w.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def _locate_degenerate(ds: Dataset, err: DegeneratePhase) -> DegeneratePhase:
    for i in range(len(ds)):
        try:
            canonize_array(ds.X[i], 0.0)
        except DegeneratePhase:
            return DegeneratePhase(f"sample {ds.ids[i]}: {err}")
    return err


def _canonize_dataset(ds: Dataset, phis) -> Dataset:
    try:
        out, _ = canonize_array(ds.X, phis)
    except DegeneratePhase as e:
        raise _locate_degenerate(ds, e) from None
    return Dataset(out, ds.y, list(ds.ids), ds.sample_rate)


def load_checkpoint(path) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise MalformedRecord(e.lineno, f"checkpoint is not valid JSON: {e.msg}") from None
    d["pipeline_obj"] = Pipeline.from_dict(d["pipeline"])
    return d


def _select_split(ds: Dataset, ckpt: dict | None, which: str, seed: int, fractions):
    if which == "all":
        return ds
    if ckpt is not None:
        seed, fractions = ckpt["split_seed"], ckpt["fractions"]
    parts = dict(zip(("train", "val", "test"), split(ds, fractions, seed)))
    return parts[which]


# commands -----------------------------------------------------------------

def cmd_gen_data(args):
    spec = SyntheticSpec(fs=args.fs, duration=args.duration, f_shared=args.f_shared,
                         f_class_a=args.f_class_a, f_class_b=args.f_class_b,
                         noise_var=args.noise_var, per_class=args.per_class, seed=args.seed)
    out = Path(args.out)
    write_manifest(_manifest_path(out), "gen-data", args)
    save_dataset(generate_sinusoid_task(spec), out)
    print(f"wrote {2 * spec.per_class} samples to {out}")
    return EXIT_OK


def cmd_canonize(args):
    ds = load_dataset(args.data)
    out = Path(args.out)
    write_manifest(_manifest_path(out), "canonize", args)
    if args.model:
        pipe = load_checkpoint(args.model)["pipeline_obj"]
        if pipe.mode == "plain":
            raise ShiftCanonError("model has no canonization stage")
        phis = pipe.angles(ds.X)
    else:
        phis = np.full(len(ds), args.phi)
    save_dataset(_canonize_dataset(ds, phis), out)
    print(f"canonized {len(ds)} samples to {out}")
    return EXIT_OK


def cmd_train(args):
    ds = load_dataset(args.data)
    out_dir = Path(args.out_dir)
    write_manifest(out_dir / "manifest.json", "train", args)
    train, val, _ = split(ds, args.fractions, args.split_seed)
    C, L = ds.X.shape[1:]
    cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
                      lr_patience=args.lr_patience, stop_patience=args.stop_patience, seed=args.seed,
                      variant=args.variant if args.variant in ("ours", "fixed_phi", "ce_only", "neg_var") else "ours")
    if args.variant in ("ours", "ce_only", "neg_var"):
        fG, fC = build_pipeline_nets("guided", ds.n_classes, C, L, args.seed)
        result = train_joint(fG, fC, train, val, cfg)
    elif args.variant == "fixed_phi":
        _, fC = build_pipeline_nets("fixed", ds.n_classes, C, L, args.seed)
        result = train_joint(None, fC, train, val, cfg)
    else:
        kind = "blur" if args.variant == "blurpool" else "plain"
        _, fC = build_pipeline_nets(kind, ds.n_classes, C, L, args.seed)
        result = train_classifier(fC, train, val, cfg, augment=args.variant == "augment")
    ckpt = {"variant": args.variant, "split_seed": args.split_seed, "fractions": list(args.fractions),
            "best_epoch": result.best_epoch, "config": result.config,
            "pipeline": result.pipeline.to_dict()}
    _atomic_write_text(out_dir / "model.json", json.dumps(ckpt) + "\n")
    rows = [dict(h) for h in result.history]
    _write_csv(out_dir / "trace.csv", rows, ["epoch", "lr", "train_loss", "val_loss", "val_acc", "angle_std"])
    if result.batch_angle_std:
        _write_csv(out_dir / "angle_std.csv",
                   [{"batch": i, "angle_std": s} for i, s in enumerate(result.batch_angle_std)],
                   ["batch", "angle_std"])
    last = result.history[-1]
    print(f"trained {args.variant}: best epoch {result.best_epoch}, final val acc {last['val_acc']:.3f}")
    return EXIT_OK


def cmd_eval(args):
    ds = load_dataset(args.data)
    ckpt = load_checkpoint(args.model)
    pipe = ckpt["pipeline_obj"]
    part = _select_split(ds, ckpt, args.split, 0, None)
    out = Path(args.out)
    write_manifest(_manifest_path(out), "eval", args)
    distances = None
    if args.distances:
        distances = {"raw": class_distance_summary(part.X, part.y),
                     "transformed": class_distance_summary(part.X, part.y, pipe.transform)}
    report = evaluate(pipe.predict, part, args.pairs, args.seed, distances,
                      {"variant": ckpt.get("variant"), "split": args.split})
    _atomic_write_text(out, report.to_json() + "\n")
    if args.csv:
        _write_csv(Path(args.csv), [report.csv_row()], list(report.csv_row()))
    print(f"S-Cons {report.shift_consistency:.4f}  acc {report.accuracy:.4f}  macro-F1 {report.macro_f1:.4f}")
    return EXIT_OK


def cmd_verify(args):
    from .verify import run_all

    results = run_all(seed=args.seed, trials=args.trials, fault=args.self_test_fault)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} properties passed")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_report(args):
    ds = load_dataset(args.data)
    out_dir = Path(args.out_dir)
    write_manifest(out_dir / "manifest.json", "report", args)
    edges = np.linspace(-np.pi, np.pi, args.bins + 1)
    cons_rows, angle_rows, dist_rows = [], [], []
    for path in args.models:
        ckpt = load_checkpoint(path)
        pipe = ckpt["pipeline_obj"]
        part = _select_split(ds, ckpt, args.split, 0, None)
        rep = evaluate(pipe.predict, part, args.pairs, args.seed)
        name = ckpt.get("variant", Path(path).stem)
        cons_rows.append({"model": str(path), "variant": name, **rep.csv_row()})
        if pipe.mode != "plain":
            raw = pipe.angles(part.X)
            wrapped = np.pi - np.mod(np.pi - raw, 2 * np.pi)
            counts, _ = np.histogram(wrapped, edges)
            angle_rows += [{"model": str(path), "variant": name, "bin_left": lo, "bin_right": hi, "count": int(c)}
                           for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
        for label, tf in (("none", None), ("model", pipe.transform if pipe.mode != "plain" else None)):
            if label == "model" and tf is None:
                continue
            s = class_distance_summary(part.X, part.y, tf)
            dist_rows.append({"model": str(path), "variant": name, "transform": label, **s})
    _write_csv(out_dir / "consistency.csv", cons_rows,
               ["model", "variant", "shift_consistency", "accuracy", "macro_f1", "n_pairs"])
    _write_csv(out_dir / "angles.csv", angle_rows, ["model", "variant", "bin_left", "bin_right", "count"])
    _write_csv(out_dir / "distances.csv", dist_rows,
               ["model", "variant", "transform", "intra_mean", "inter_mean", "intra_pairs", "inter_pairs"])
    print(f"wrote report CSVs to {out_dir}")
    return EXIT_OK


def cmd_experiment(args):
    from dataclasses import asdict

    from .experiment import ExperimentConfig, run_synthetic_experiment

    cfg = ExperimentConfig(per_class=args.per_class, seed=args.seed, epochs=args.epochs,
                           lr=args.lr, n_pairs=args.pairs)
    out_dir = Path(args.out_dir)
    write_manifest(out_dir / "manifest.json", "experiment", args, experiment=asdict(cfg),
                   thresholds={"baseline_shift_consistency_below": cfg.baseline_scons_threshold})
    result = run_synthetic_experiment(cfg)
    _atomic_write_text(out_dir / "results.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    for name, r in result["conditions"].items():
        print(f"{name:<10} acc {r['accuracy']:.4f}  S-Cons {r['shift_consistency']:.4f}")
    return EXIT_OK


# parser -------------------------------------------------------------------

def _fractions(text):
    vals = tuple(float(v) for v in str(text).split(","))
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected three comma separated fractions")
    return vals


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default values for the flags")
    common.add_argument("--seed", type=int, default=0, help="random seed (data draw, init or pair sampling)")
    common.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")

    p = argparse.ArgumentParser(prog="shiftcanon", description="Shift-invariant time-series classification by phase canonization.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    cmds = {}

    s = cmds["gen-data"] = sub.add_parser("gen-data", parents=[common], help="generate the two-tone task")
    s.add_argument("--out", help="output dataset file (.jsonl)")
    s.add_argument("--per-class", type=int, default=1000, help="samples per class")
    s.add_argument("--noise-var", type=float, default=0.1, help="variance of the additive Gaussian noise")
    s.add_argument("--fs", type=float, default=300.0, help="sample rate in Hz")
    s.add_argument("--duration", type=float, default=1.0, help="seconds per sample")
    s.add_argument("--f-shared", type=float, default=5.0, help="tone present in both classes (Hz)")
    s.add_argument("--f-class-a", type=float, default=24.0, help="tone of class 0 (Hz)")
    s.add_argument("--f-class-b", type=float, default=25.0, help="tone of class 1 (Hz)")
    s.set_defaults(func=cmd_gen_data, required_args=("out",))

    s = cmds["canonize"] = sub.add_parser("canonize", parents=[common], help="canonize every sample of a dataset")
    s.add_argument("--data", help="input dataset (.jsonl)")
    s.add_argument("--out", help="output file")
    s.add_argument("--phi", type=float, default=0.0, help="fixed target angle (radians)")
    s.add_argument("--model", help="use the guidance network of a trained checkpoint instead of --phi")
    s.set_defaults(func=cmd_canonize, required_args=("data", "out"))

    s = cmds["train"] = sub.add_parser("train", parents=[common], help="train a classifier pipeline")
    s.add_argument("--data", help="input dataset (.jsonl)")
    s.add_argument("--out-dir", help="output directory")
    s.add_argument("--variant", choices=TRAIN_VARIANTS, default="ours",
                   help="guided losses (ours, ce_only, neg_var), fixed angle 0 (fixed_phi) or a "
                        "plain classifier (baseline, blurpool, augment)")
    s.add_argument("--lr", type=float, default=3e-3, help="Adam learning rate")
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--epochs", type=int, default=50, help="maximum number of epochs")
    s.add_argument("--lr-patience", type=int, default=3, help="halve the learning rate after this many bad epochs")
    s.add_argument("--stop-patience", type=int, default=10, help="stop after this many epochs without improvement")
    s.add_argument("--split-seed", type=int, default=0, help="seed of the stratified train/val/test split")
    s.add_argument("--fractions", type=_fractions, default=(0.6, 0.2, 0.2), help="train,val,test fractions")
    s.set_defaults(func=cmd_train, required_args=("data", "out_dir"))

    s = cmds["eval"] = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    s.add_argument("--data", help="input dataset (.jsonl)")
    s.add_argument("--model", help="checkpoint written by train")
    s.add_argument("--out", help="output file")
    s.add_argument("--split", choices=("train", "val", "test", "all"), default="test",
                   help="part of the dataset to score (split recorded in the checkpoint)")
    s.add_argument("--pairs", type=int, default=500, help="(sample, t1, t2) draws for shift consistency")
    s.add_argument("--distances", action="store_true", help="add intra/inter class distance summaries")
    s.add_argument("--csv", help="also write the headline metrics as one CSV row")
    s.set_defaults(func=cmd_eval, required_args=("data", "model", "out"))

    s = cmds["verify"] = sub.add_parser("verify", parents=[common], help="run the invariance property suite")
    s.add_argument("--trials", type=int, default=1000, help="random trials of the main invariance checks")
    s.add_argument("--self-test-fault", action="store_true", help="inject a fault; the suite must fail")
    s.set_defaults(func=cmd_verify, required_args=())

    s = cmds["report"] = sub.add_parser("report", parents=[common], help="plot-ready CSVs for trained models")
    s.add_argument("--data", help="input dataset (.jsonl)")
    s.add_argument("--models", nargs="+", help="one or more checkpoints")
    s.add_argument("--out-dir", help="output directory")
    s.add_argument("--split", choices=("train", "val", "test", "all"), default="test",
                   help="part of the dataset to score (split recorded in the checkpoint)")
    s.add_argument("--pairs", type=int, default=500, help="(sample, t1, t2) draws for shift consistency")
    s.add_argument("--bins", type=int, default=24, help="angle histogram bins over (-pi, pi]")
    s.set_defaults(func=cmd_report, required_args=("data", "models", "out_dir"))

    s = cmds["experiment"] = sub.add_parser("experiment", parents=[common],
                                            help="baseline / blur-pool / guided runs on the two-tone task")
    s.add_argument("--out-dir", help="output directory")
    s.add_argument("--per-class", type=int, default=1000)
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--lr", type=float, default=3e-3)
    s.add_argument("--pairs", type=int, default=500, help="(sample, t1, t2) draws for shift consistency")
    s.set_defaults(func=cmd_experiment, required_args=("out_dir",))
    return p, cmds


def _load_config(parser, path):
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        parser.error(f"cannot read config {path}: {e}")
    if not isinstance(cfg, dict):
        parser.error("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def parse_args(argv=None):
    parser, cmds = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = cmds[args.command]
        defaults = _load_config(sub, args.config)
        if "fractions" in defaults and not isinstance(defaults["fractions"], str):
            defaults["fractions"] = ",".join(str(v) for v in defaults["fractions"])
        known = {a.dest for a in sub._actions}
        unknown = set(defaults) - known
        if unknown:
            sub.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
        # string defaults from the file still need their type conversion
        for a in sub._actions:
            v = getattr(args, a.dest, None)
            if a.type is not None and isinstance(v, str) and a.dest in defaults:
                setattr(args, a.dest, a.type(v))
    missing = [n for n in args.required_args if not getattr(args, n, None)]
    if missing:
        cmds[args.command].error("missing required option(s): " +
                                 ", ".join("--" + n.replace("_", "-") for n in missing))
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IoFailure, MalformedRecord, DegeneratePhase) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ShiftCanonError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
