"""Command-line surface: train, eval, verify, noise-sweep, bench-splits.

Every command echoes its configuration into a manifest JSON written next
to each output file, is deterministic given identical flags and inputs
(outputs byte-identical except the wall-clock fields of the manifest),
and uses a stable exit-code contract:

    0  success
    2  bad flags or usage
    3  data or model-file errors
    4  training aborted on a non-finite loss
    5  certification failure

bench-splits repeats the train/test protocol over seeded random splits
and noise levels, one CSV row per (run, eta, algo) with the fixed columns
run,seed,eta,algo,test_acc,test_nll,epochs,wall_s, then summary rows
(mean and standard error) and a Welch t-test p-value between the two
algorithms per noise level. Repetitions can fan out over a process pool
(--jobs); results are ordered by run index regardless of completion
order. noise-sweep is the quick-look variant: one fixed split, one run
per (eta, algo), no summaries.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import stats as scipy_stats

from . import __version__
from . import data as dio
from . import train as tr
from . import verify as ver

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NAN = 4
EXIT_CERTIFY = 5

DATA_DIR_ENV = "PROPERLINK_DATA_DIR"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _resolve_data_path(path: str) -> str:
    if os.path.exists(path):
        return path
    base = os.environ.get(DATA_DIR_ENV)
    if base:
        candidate = os.path.join(base, path)
        if os.path.exists(candidate):
            return candidate
    raise CliError(EXIT_DATA, f"dataset not found: {path}")


def _load_dataset(path: str, n_features=None, n_classes=None) -> tuple[dio.LabeledDataset, str]:
    resolved = _resolve_data_path(path)
    try:
        with open(resolved) as fh:
            text = fh.read()
        ds = dio.parse_libsvm(text, n_features=n_features, n_classes=n_classes)
    except (dio.ParseError, OSError, ValueError) as exc:
        raise CliError(EXIT_DATA, f"failed to load {resolved}: {exc}") from None
    digest = hashlib.sha256(text.encode()).hexdigest()
    return ds, digest


def _git_describe() -> str | None:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(os.path.abspath(__file__)))
    except (OSError, subprocess.TimeoutExpired):
        return None
    return out.stdout.strip() if out.returncode == 0 else None


def _write_manifest(out_path: str, command: str, config: dict, seed: int,
                    digest: str | None, wall_s: float) -> str:
    manifest_path = out_path + ".manifest.json"
    payload = {
        "command": command,
        "config": config,
        "seed": seed,
        "dataset_sha256": digest,
        "wall_clock_s": wall_s,
        "version": __version__,
        "git_describe": _git_describe(),
    }
    with open(manifest_path, "w") as fh:
        json.dump(payload, fh, indent=2)
    return manifest_path


def _train_config(args) -> tr.TrainConfig:
    base = dict(epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
                weight_decay=args.weight_decay, lr_decay=args.gamma,
                decay_step=args.step, n_blocks=args.blocks, hidden_dim=args.hidden,
                depth=args.layers, seed=args.seed)
    try:
        return tr.TrainConfig(**base)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"bad hyperparameters: {exc}") from None


_FLAG_DEFAULTS = dict(epochs=240, lr=0.01, gamma=0.95, step=4, blocks=2, hidden=2,
                      layers=4, batch=64)
_PRESET_BY_FLAG = dict(blocks="n_blocks", hidden="hidden_dim", layers="depth",
                       lr="learning_rate", gamma="lr_decay", step="decay_step",
                       epochs="epochs", batch="batch_size")


def _add_train_flags(sub):
    sub.add_argument("--data", required=True, help="LIBSVM-format dataset path")
    sub.add_argument("--algo", choices=("lt", "mlr"), default="lt",
                     help="lt = learned-link training, mlr = multinomial logistic regression")
    sub.add_argument("--classes", type=int, default=None,
                     help="class count when the file does not contain every class")
    sub.add_argument("--epochs", type=int, default=None)
    sub.add_argument("--lr", type=float, default=None)
    sub.add_argument("--gamma", type=float, default=None, help="LR decay factor")
    sub.add_argument("--step", type=int, default=None, help="epochs between LR decays")
    sub.add_argument("--blocks", type=int, default=None)
    sub.add_argument("--hidden", type=int, default=None)
    sub.add_argument("--layers", type=int, default=None)
    sub.add_argument("--batch", type=int, default=None)
    sub.add_argument("--weight-decay", type=float, default=0.0)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--noise-eta", type=float, default=0.0,
                     help="symmetric label-noise rate applied to the training labels")
    sub.add_argument("--standardize", action="store_true",
                     help="per-feature standardization fitted on the training data")
    sub.add_argument("--preset", choices=("mnist",), default=None,
                     help="hyperparameter preset; explicit flags still win")


def _apply_preset(args):
    """Resolve each flag as: explicit value > preset value > standard default."""
    preset = tr.MNIST_PRESET if getattr(args, "preset", None) == "mnist" else {}
    for flag, default in _FLAG_DEFAULTS.items():
        if getattr(args, flag) is None:
            setattr(args, flag, preset.get(_PRESET_BY_FLAG[flag], default))


def _parse_eta(value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise CliError(EXIT_USAGE, f"noise rate {value!r} outside [0, 1]")
    return value


def _single_train(dataset, cfg, algo: str, eta: float, noise_seed: int):
    if eta > 0.0:
        noisy = dio.inject_symmetric_noise(dataset.labels, dataset.n_classes,
                                           dio.NoiseSpec(eta, noise_seed))
        dataset = dataset.with_labels(noisy)
    trainer = tr.train_mlr if algo == "mlr" else tr.train_link_model
    try:
        return trainer(dataset, cfg)
    except tr.TrainingDivergence as exc:
        raise CliError(EXIT_NAN, str(exc)) from None


def cmd_train(args) -> int:
    _apply_preset(args)
    cfg = _train_config(args)
    _parse_eta(args.noise_eta)
    dataset, digest = _load_dataset(args.data, n_classes=args.classes)
    if args.standardize:
        dataset, _ = dio.standardize(dataset)
    started = time.perf_counter()
    model, metrics = _single_train(dataset, cfg, args.algo, args.noise_eta, cfg.seed)
    wall = time.perf_counter() - started
    tr.save_model(model, args.model_out)
    metrics_path = args.metrics_out or args.model_out + ".metrics.json"
    manifest_path = _write_manifest(args.model_out, "train",
                                    dataclasses.asdict(cfg) | {"algo": args.algo,
                                                               "noise_eta": args.noise_eta,
                                                               "standardize": args.standardize},
                                    cfg.seed, digest, wall)
    with open(metrics_path, "w") as fh:
        json.dump({
            "accuracy": metrics.accuracy,
            "mean_nll": metrics.mean_nll,
            "auc": metrics.auc,
            "trace": list(metrics.trace),
            "manifest": os.path.basename(manifest_path),
        }, fh, indent=2)
    print(f"trained {args.algo} on {len(dataset)} examples: "
          f"accuracy {metrics.accuracy:.4f}, mean NLL {metrics.mean_nll:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset, digest = _load_dataset(args.data)
    try:
        model = tr.load_model(args.model)
    except (tr.ModelFormatError, OSError) as exc:
        raise CliError(EXIT_DATA, f"failed to load model: {exc}") from None
    try:
        metrics = tr.evaluate(model, dataset)
    except ValueError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    payload = {"accuracy": metrics.accuracy, "mean_nll": metrics.mean_nll,
               "auc": metrics.auc}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload | {"manifest": os.path.basename(args.out) + ".manifest.json"},
                      fh, indent=2)
        _write_manifest(args.out, "eval", {"model": args.model, "data": args.data},
                        0, digest, 0.0)
    print(json.dumps(payload))
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        model = tr.load_model(args.model)
    except (tr.ModelFormatError, OSError) as exc:
        raise CliError(EXIT_DATA, f"failed to load model: {exc}") from None
    started = time.perf_counter()
    reports = ver.certify_link(model, points=args.points, seed=args.seed)
    field = model.link_field()
    dim = model.n_classes - 1
    monotone = ver.check_monotone(field, dim, pairs=args.pairs, seed=args.seed)
    cyclic = [ver.check_cyclic(field, dim, n, cycles=args.cycles, seed=args.seed)
              for n in (2, 3, 4)]
    wall = time.perf_counter() - started
    text = ver.reports_to_json(reports, monotone, cyclic)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        _write_manifest(args.out, "verify",
                        {"model": args.model, "points": args.points,
                         "pairs": args.pairs, "cycles": args.cycles},
                        args.seed, None, wall)
    else:
        print(text)
    ok = (ver.certification_passed(reports) and monotone.strictly_monotone
          and all(c.passed for c in cyclic))
    if not ok:
        print("certification FAILED", file=sys.stderr)
        return EXIT_CERTIFY
    print(f"certification passed: {len(reports)} points, "
          f"min eigenvalue {min(r.min_eigenvalue for r in reports):.3e}", file=sys.stderr)
    return EXIT_OK


def _bench_one(packed):
    """One (run, eta, algo) cell; module-level so a process pool can pickle it."""
    (text, n_features, run, eta, algo, train_frac, cfg_dict) = packed
    dataset = dio.parse_libsvm(text, n_features=n_features)
    cfg = tr.TrainConfig(**cfg_dict)
    split_seed = cfg.seed * 100003 + run
    train_ds, test_ds = dio.split(dataset, train_frac, split_seed)
    started = time.perf_counter()
    try:
        run_cfg = dataclasses.replace(cfg, seed=split_seed)
        model, _ = (tr.train_mlr if algo == "mlr" else tr.train_link_model)(
            train_ds if eta == 0.0 else train_ds.with_labels(
                dio.inject_symmetric_noise(train_ds.labels, train_ds.n_classes,
                                           dio.NoiseSpec(eta, split_seed))),
            run_cfg)
        metrics = tr.evaluate(model, test_ds)
        wall = time.perf_counter() - started
        return (run, eta, algo, split_seed, metrics.accuracy, metrics.mean_nll,
                cfg.epochs, wall, None)
    except tr.TrainingDivergence as exc:
        return (run, eta, algo, split_seed, None, None, cfg.epochs,
                time.perf_counter() - started, str(exc))


def _welch_p(a, b) -> float | None:
    if len(a) < 2 or len(b) < 2:
        return None
    return float(scipy_stats.ttest_ind(a, b, equal_var=False).pvalue)


def _run_bench(args, runs_per_eta: int, split_fixed: bool) -> int:
    _apply_preset(args)
    cfg = _train_config(args)
    if not 0.0 < args.train_frac < 1.0:
        raise CliError(EXIT_USAGE, f"--train-frac {args.train_frac!r} outside (0, 1)")
    if runs_per_eta < 1:
        raise CliError(EXIT_USAGE, "--runs must be at least 1")
    dataset, digest = _load_dataset(args.data)
    text = dio.serialize_libsvm(dataset)
    try:
        etas = [_parse_eta(float(t)) for t in args.etas.split(",") if t != ""]
    except ValueError:
        raise CliError(EXIT_USAGE, f"bad --etas list {args.etas!r}") from None
    if not etas:
        raise CliError(EXIT_USAGE, "--etas must name at least one noise rate")
    algos = args.algos.split(",")
    for algo in algos:
        if algo not in ("lt", "mlr"):
            raise CliError(EXIT_USAGE, f"unknown algo {algo!r}")
    jobs = []
    for run in range(runs_per_eta):
        run_id = 0 if split_fixed else run
        for eta in etas:
            for algo in algos:
                jobs.append((text, dataset.n_features, run_id, eta, algo,
                             args.train_frac, dataclasses.asdict(cfg)))
    started = time.perf_counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]
    wall = time.perf_counter() - started
    results.sort(key=lambda r: (r[1], r[2], r[0]))

    lines = ["run,seed,eta,algo,test_acc,test_nll,epochs,wall_s"]
    by_cell: dict[tuple[float, str], list[float]] = {}
    failures = []
    for run, eta, algo, seed, acc, nll, epochs, cell_wall, err in results:
        if err is not None:
            failures.append((run, eta, algo, err))
            lines.append(f"{run},{seed},{eta},{algo},NA,NA,{epochs},{cell_wall:.3f}")
            continue
        lines.append(f"{run},{seed},{eta},{algo},{acc:.6f},{nll:.6f},{epochs},{cell_wall:.3f}")
        by_cell.setdefault((eta, algo), []).append(acc)

    summary = []
    if not split_fixed:
        summary.append("eta,algo,mean_acc,stderr_acc,runs,welch_p_vs_other")
        for eta in etas:
            accs = {algo: np.asarray(by_cell.get((eta, algo), [])) for algo in algos}
            p_value = _welch_p(accs.get("lt", []), accs.get("mlr", [])) \
                if {"lt", "mlr"} <= set(algos) else None
            for algo in algos:
                a = accs[algo]
                if len(a) == 0:
                    continue
                stderr = f"{np.std(a, ddof=1) / math.sqrt(len(a)):.6f}" if len(a) > 1 else "NA"
                p_text = f"{p_value:.6g}" if p_value is not None else "NA"
                summary.append(f"{eta},{algo},{np.mean(a):.6f},{stderr},{len(a)},{p_text}")

    csv_text = "\n".join(lines + summary) + "\n"
    with open(args.out, "w") as fh:
        fh.write(csv_text)
    _write_manifest(args.out, "bench-splits" if not split_fixed else "noise-sweep",
                    dataclasses.asdict(cfg) | {"etas": etas, "algos": algos,
                                               "runs": runs_per_eta,
                                               "train_frac": args.train_frac},
                    cfg.seed, digest, wall)
    for run, eta, algo, err in failures:
        print(f"run {run} eta {eta} algo {algo} failed: {err}", file=sys.stderr)
    print(f"wrote {args.out} ({len(results)} rows, {wall:.1f}s)")
    return EXIT_OK


def cmd_bench_splits(args) -> int:
    return _run_bench(args, args.runs, split_fixed=False)


def cmd_noise_sweep(args) -> int:
    return _run_bench(args, 1, split_fixed=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="properlink",
        description="Jointly learn proper multiclass losses and probabilities; "
                    "verify the convexity certificates; run split benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model and write it to disk")
    _add_train_flags(p_train)
    p_train.add_argument("--model-out", required=True)
    p_train.add_argument("--metrics-out", default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_verify = sub.add_parser("verify", help="certify a saved model's link map")
    p_verify.add_argument("--model", required=True)
    p_verify.add_argument("--points", type=int, default=100)
    p_verify.add_argument("--pairs", type=int, default=1000)
    p_verify.add_argument("--cycles", type=int, default=200)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--out", default=None)
    p_verify.set_defaults(func=cmd_verify)

    p_bench = sub.add_parser("bench-splits",
                             help="repeated random-split benchmark with noise levels")
    _add_train_flags(p_bench)
    p_bench.add_argument("--out", required=True, help="CSV output path")
    p_bench.add_argument("--runs", type=int, default=20)
    p_bench.add_argument("--train-frac", type=float, default=0.8)
    p_bench.add_argument("--etas", default="0.0", help="comma-separated noise rates")
    p_bench.add_argument("--algos", default="lt,mlr")
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.set_defaults(func=cmd_bench_splits)

    p_sweep = sub.add_parser("noise-sweep",
                             help="single-split accuracy sweep over noise rates")
    _add_train_flags(p_sweep)
    p_sweep.add_argument("--out", required=True, help="CSV output path")
    p_sweep.add_argument("--train-frac", type=float, default=0.8)
    p_sweep.add_argument("--etas", default="0.0,0.2,0.5")
    p_sweep.add_argument("--algos", default="lt,mlr")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(func=cmd_noise_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
