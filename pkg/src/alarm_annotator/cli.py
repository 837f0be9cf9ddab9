"""Command line front end: synth, preprocess, train, eval, benchmark.

Every randomized path is driven by --seed; rerunning a command with the same
inputs produces byte-identical artifacts. Output files are written atomically,
and report paths render a figure next to each delimited file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import agents, baselines, plots
from .env import Normalizer, SimpleMatchReward, VitalThresholds, VitalsBandReward
from .evaluation import EvalReport, evaluate, roc_points, top_k_reports
from .fileio import atomic_write_json, atomic_write_text
from .ingest import (
    Dataset,
    OrderingError,
    ParseError,
    UnmatchedAnnotationError,
    build_ds2,
    load_dataset_csv,
    merge_by_timestamp,
    parse_records,
    save_dataset_csv,
)
from .sampling import STRATEGY_KINDS, SamplingStrategy
from .synthgen import SynthConfig, generate

log = logging.getLogger(__name__)

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

AGENT_CHOICES = ("dqn", "a2c", "mlp", "svm")
REWARD_CHOICES = ("simple", "vitals")


class UsageError(Exception):
    """Bad or missing settings; exits with the usage status."""


class CheckpointNotFoundError(FileNotFoundError):
    pass


_REQUIRED = object()


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as handle:
            obj = json.load(handle)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"config file {path} must hold a flat JSON object")
    return obj


def _resolve(flag_value, config: dict, key: str, default=_REQUIRED):
    """CLI flag beats config-file key beats default; _REQUIRED means must be set."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    if default is _REQUIRED:
        raise UsageError(f"missing required setting '{key}' (flag --{key.replace('_', '-')} or config key)")
    return default


def _thresholds_from_config(config: dict) -> VitalThresholds:
    keys = ("hr_min", "hr_max", "sbp_min", "sbp_max", "dbp_min", "dbp_max")
    if not any(k in config for k in keys):
        return VitalThresholds()
    defaults = VitalThresholds()
    def band(name, default):
        return (float(config.get(f"{name}_min", default[0])), float(config.get(f"{name}_max", default[1])))
    return VitalThresholds(hr=band("hr", defaults.hr), sbp=band("sbp", defaults.sbp), dbp=band("dbp", defaults.dbp))


def _config_hash(settings: dict) -> str:
    return hashlib.sha256(json.dumps(settings, sort_keys=True).encode("utf-8")).hexdigest()


def _print_counts(dataset: Dataset) -> None:
    alarms, non_alarms = dataset.counts()
    print(f"{'variant':8s} {'split':6s} {'true':>6s} {'false':>6s} {'total':>6s}")
    print(f"{dataset.variant:8s} {dataset.split:6s} {alarms:6d} {non_alarms:6d} {len(dataset):6d}")


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    config_file = _load_config_file(args.config)
    try:
        synth_config = SynthConfig(
            n_events=int(_resolve(args.n_events, config_file, "n_events", 1000)),
            alarm_rate=float(_resolve(args.alarm_rate, config_file, "alarm_rate", 0.1)),
            seed=int(_resolve(args.seed, config_file, "seed")),
            label_noise=float(_resolve(args.label_noise, config_file, "label_noise", 0.0)),
            indeterminate_rate=float(_resolve(args.indeterminate_rate, config_file, "indeterminate_rate", 0.0)),
            vitals_noise_sd=float(_resolve(args.vitals_noise_sd, config_file, "vitals_noise_sd", 2.0)),
            interval_ms=int(_resolve(args.interval_ms, config_file, "interval_ms", 1000)),
            start_t=int(config_file.get("start_t", 0)),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    thresholds = _thresholds_from_config(config_file)
    vitals_lines, annotation_lines = generate(synth_config, thresholds)

    severity_counts: dict[str, int] = {}
    for line in annotation_lines:
        severity = json.loads(line)["severity"]
        severity_counts[severity] = severity_counts.get(severity, 0) + 1
    severity_counts["no_event"] = synth_config.n_events - len(annotation_lines)
    print(f"generated {synth_config.n_events} events (seed {synth_config.seed})")
    for name in ("emergent", "urgent", "indeterminate", "non_urgent", "no_event"):
        print(f"  {name:14s} {severity_counts.get(name, 0):6d}")
    if args.dry_run:
        print("dry run: no files written")
        return 0
    atomic_write_text(args.out_vitals, "".join(line + "\n" for line in vitals_lines))
    atomic_write_text(args.out_annotations, "".join(line + "\n" for line in annotation_lines))
    print(f"wrote {args.out_vitals} and {args.out_annotations}")
    return 0


# ---------------------------------------------------------------- preprocess

def _read_lines(path: str) -> list[str]:
    try:
        with open(path, encoding="utf-8") as handle:
            return handle.readlines()
    except FileNotFoundError:
        raise FileNotFoundError(f"input file not found: {path}") from None


def cmd_preprocess(args) -> int:
    vitals_lines = _read_lines(args.vitals)
    annotation_lines = _read_lines(args.annotations)
    alarm_lines = _read_lines(args.alarms) if args.alarms else []
    records = parse_records(vitals_lines, alarm_lines, annotation_lines)
    dataset = merge_by_timestamp(records.vitals, records.annotations,
                                 tolerance_ms=args.tolerance_ms, split=args.split)
    if args.ds == 2:
        dataset = build_ds2(dataset)
    _print_counts(dataset)
    if args.dry_run:
        print("dry run: no files written")
        return 0
    save_dataset_csv(dataset, args.out)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------- train

def _reward_scheme(name: str, thresholds: VitalThresholds):
    if name == "simple":
        return SimpleMatchReward()
    return VitalsBandReward(thresholds=thresholds)


def _curve_csv(rows, value_column: str) -> str:
    lines = [f"epoch,{value_column}"]
    for epoch, value in rows:
        lines.append(f"{epoch},{value!r}")
    return "\n".join(lines) + "\n"


def _reports_csv(reports: list[EvalReport]) -> str:
    lines = ["epoch,auc,mcc,sensitivity,specificity,weighted_f1"]
    for r in reports:
        lines.append(f"{r.epoch},{r.auc!r},{r.mcc!r},{r.sensitivity!r},{r.specificity!r},{r.weighted_f1!r}")
    return "\n".join(lines) + "\n"


def _write_run_dir(
    out_dir: str,
    agent: str,
    strategy: SamplingStrategy,
    settings: dict,
    curve_rows,
    curve_column: str,
    checkpoints: list[tuple[int, dict, float | None, float | None]],
    final_obj: dict,
    reports: list[EvalReport],
    figures: bool,
) -> None:
    """checkpoints entries: (epoch, checkpoint obj, epsilon or None, auc or None)."""
    entries = []
    for epoch, obj, epsilon, auc_value in checkpoints:
        rel = f"checkpoints/epoch_{epoch:05d}.json"
        atomic_write_json(os.path.join(out_dir, rel), obj)
        entry = {"epoch": epoch, "path": rel}
        if epsilon is not None:
            entry["epsilon"] = epsilon
        if auc_value is not None:
            entry["auc"] = auc_value
        entries.append(entry)
    atomic_write_json(os.path.join(out_dir, "checkpoints/final.json"), final_obj)
    atomic_write_text(os.path.join(out_dir, "curve.csv"), _curve_csv(curve_rows, curve_column))
    if reports:
        atomic_write_json(os.path.join(out_dir, "reports.json"), [r.to_json_obj() for r in reports])
        atomic_write_text(os.path.join(out_dir, "reports.csv"), _reports_csv(reports))
    manifest = {
        "agent": agent,
        "range": strategy.display,
        "settings": settings,
        "config_hash": _config_hash(settings),
        "curve": "curve.csv",
        "reports": "reports.json" if reports else None,
        "checkpoints": entries,
        "final_checkpoint": "checkpoints/final.json",
    }
    if figures:
        ylabel = "loss" if curve_column == "loss" else "average reward per episode"
        plots.save_training_curve(curve_rows, os.path.join(out_dir, "curve.png"), ylabel=ylabel)
        manifest["curve_figure"] = "curve.png"
    atomic_write_json(os.path.join(out_dir, "manifest.json"), manifest)


def cmd_train(args) -> int:
    config_file = _load_config_file(args.config)
    agent = _resolve(args.agent, config_file, "agent")
    if agent not in AGENT_CHOICES:
        raise UsageError(f"unknown agent {agent!r}; expected one of {AGENT_CHOICES}")
    downsample = _resolve(args.downsample, config_file, "downsample", "mixed")
    if downsample not in STRATEGY_KINDS:
        raise UsageError(f"unknown downsample {downsample!r}; expected one of {STRATEGY_KINDS}")
    reward_name = _resolve(args.reward, config_file, "reward", "simple")
    if reward_name not in REWARD_CHOICES:
        raise UsageError(f"unknown reward {reward_name!r}; expected one of {REWARD_CHOICES}")
    optimizer = _resolve(args.optimizer, config_file, "optimizer", "adam")
    seed = int(_resolve(args.seed, config_file, "seed", 0))
    epochs = int(_resolve(args.epochs, config_file, "epochs", 5000))
    eval_every = int(_resolve(args.eval_every, config_file, "eval_every", 100))
    normalize = bool(_resolve(False if args.no_normalize else None, config_file, "normalize", True))

    settings = {
        "agent": agent,
        "downsample": downsample,
        "reward": reward_name,
        "optimizer": optimizer,
        "seed": seed,
        "epochs": epochs,
        "eval_every": eval_every,
        "normalize": normalize,
        "gamma": float(_resolve(args.gamma, config_file, "gamma", 0.9)),
        "batch_size": int(_resolve(args.batch_size, config_file, "batch_size", 8)),
        "update_interval": int(_resolve(args.update_interval, config_file, "update_interval", 10)),
        "lr": float(_resolve(args.lr, config_file, "lr", 0.001)),
        "lr_critic": float(_resolve(args.lr_critic, config_file, "lr_critic", 0.005)),
        "episode_horizon": int(_resolve(args.episode_horizon, config_file, "episode_horizon", 256)),
        "replay_capacity": int(_resolve(args.replay_capacity, config_file, "replay_capacity", 2000)),
        "dataset": args.dataset,
        "test_dataset": args.test_dataset,
    }
    thresholds = _thresholds_from_config(config_file)
    strategy = SamplingStrategy(downsample, seed=seed)
    dataset = load_dataset_csv(args.dataset, split="train")
    test_dataset = load_dataset_csv(args.test_dataset, split="test") if args.test_dataset else None

    if args.dry_run:
        print(json.dumps(settings, indent=2, sort_keys=True))
        print("dry run: no training performed")
        return 0

    figures = not args.no_figures
    if agent in ("dqn", "a2c"):
        config = agents.TrainConfig(
            gamma=settings["gamma"],
            batch_size=settings["batch_size"],
            update_interval=settings["update_interval"],
            lr_q=settings["lr"],
            lr_actor=settings["lr"],
            lr_critic=settings["lr_critic"],
            optimizer=optimizer,
            epochs=epochs,
            eval_every=eval_every,
            replay_capacity=settings["replay_capacity"],
            episode_horizon=settings["episode_horizon"],
            normalize=normalize,
        )
        result = agents.train(agent, dataset, strategy, _reward_scheme(reward_name, thresholds),
                              config, seed, test_dataset=test_dataset)
        checkpoints = [
            (s.epoch, s.model.to_checkpoint_obj(s.epoch), s.epsilon, s.report.auc)
            for s in result.snapshots
        ]
        reports = [s.report for s in result.snapshots]
        settings["env_steps"] = result.env_steps
        settings["epsilon_final"] = result.epsilon
        _write_run_dir(args.out_dir, agent, strategy, settings, result.curve, "avg_reward",
                       checkpoints, result.model.to_checkpoint_obj(epochs), reports, figures)
        if reports:
            best = top_k_reports(reports, 1)[0]
            print(f"best checkpoint: epoch {best.epoch} auc {best.auc:.4f} "
                  f"sens {best.sensitivity:.4f} spec {best.specificity:.4f}")
    else:
        if agent == "mlp":
            model = baselines.mlp_train(dataset, strategy, seed=seed, normalize=normalize,
                                        epoch_cap=epochs, lr=settings["lr"])
        else:
            model = baselines.linear_margin_train(dataset, strategy, seed=seed, normalize=normalize)
        curve_rows = list(enumerate(model.loss_history, start=1))
        final_epoch = len(model.loss_history)
        reports = []
        checkpoints = []
        if test_dataset is not None:
            report = evaluate(model, test_dataset, epoch=final_epoch)
            reports = [report]
            checkpoints = [(final_epoch, model.to_checkpoint_obj(final_epoch), None, report.auc)]
            print(f"test: auc {report.auc:.4f} sens {report.sensitivity:.4f} "
                  f"spec {report.specificity:.4f} mcc {report.mcc:.4f}")
        _write_run_dir(args.out_dir, agent, strategy, settings, curve_rows, "loss",
                       checkpoints, model.to_checkpoint_obj(final_epoch), reports, figures)
    print(f"wrote run artifacts to {args.out_dir}")
    return 0


# ---------------------------------------------------------------- eval / benchmark

MODEL_KINDS = {
    "dqn": agents.DQNModel,
    "a2c": agents.A2CModel,
    "mlp": baselines.MLPClassifier,
    "svm": baselines.LinearMarginClassifier,
}


def load_checkpoint(path: str):
    if not os.path.exists(path):
        raise CheckpointNotFoundError(f"checkpoint not found: {path}")
    with open(path, encoding="utf-8") as handle:
        obj = json.load(handle)
    kind = obj.get("kind")
    if kind not in MODEL_KINDS:
        raise ValueError(f"{path}: unknown checkpoint kind {kind!r}")
    return MODEL_KINDS[kind].from_checkpoint_obj(obj), obj


def cmd_eval(args) -> int:
    model, obj = load_checkpoint(args.checkpoint)
    dataset = load_dataset_csv(args.dataset, split="test")
    report = evaluate(model, dataset, epoch=int(obj.get("epoch", 0)))
    print(f"kind {obj['kind']} epoch {report.epoch}")
    print(f"auc {report.auc:.4f} mcc {report.mcc:.4f} sens {report.sensitivity:.4f} "
          f"spec {report.specificity:.4f} weighted_f1 {report.weighted_f1:.4f}")
    if args.out_dir:
        atomic_write_json(os.path.join(args.out_dir, "report.json"), report.to_json_obj())
        if not args.no_figures:
            fpr, tpr = roc_points(dataset.labels(), model.alarm_scores(dataset.vitals_matrix()))
            plots.save_roc_curve(fpr, tpr, report.auc, os.path.join(args.out_dir, "roc.png"))
        print(f"wrote report to {args.out_dir}")
    return 0


BENCHMARK_COLUMNS = ("agent", "range", "auc", "mcc", "sensitivity", "specificity")


def _benchmark_rows(manifest: dict, manifest_dir: str, test_dataset: Dataset, k: int) -> list[dict]:
    runs = manifest.get("runs")
    if not isinstance(runs, list) or not runs:
        raise UsageError("benchmark manifest must hold a non-empty 'runs' list")
    rows: list[dict] = []
    for run in runs:
        for key in ("agent", "range", "dir"):
            if key not in run:
                raise UsageError(f"benchmark run entry missing {key!r}: {run}")
        run_dir = os.path.join(manifest_dir, run["dir"])
        run_manifest_path = os.path.join(run_dir, "manifest.json")
        if not os.path.exists(run_manifest_path):
            raise CheckpointNotFoundError(f"run manifest not found: {run_manifest_path}")
        with open(run_manifest_path, encoding="utf-8") as handle:
            run_manifest = json.load(handle)
        entries = run_manifest.get("checkpoints") or [
            {"epoch": None, "path": run_manifest["final_checkpoint"]}
        ]
        reports = []
        for entry in entries:
            path = os.path.join(run_dir, entry["path"])
            model, obj = load_checkpoint(path)
            epoch = entry.get("epoch")
            reports.append(evaluate(model, test_dataset,
                                    epoch=int(obj.get("epoch", 0) if epoch is None else epoch)))
        for report in top_k_reports(reports, min(k, len(reports))):
            rows.append({
                "agent": run["agent"],
                "range": run["range"],
                "auc": report.auc,
                "mcc": report.mcc,
                "sensitivity": report.sensitivity,
                "specificity": report.specificity,
                "epoch": report.epoch,
            })
    rows.sort(key=lambda r: (r["range"], r["agent"], -r["auc"]))
    return rows


def cmd_benchmark(args) -> int:
    try:
        with open(args.manifest, encoding="utf-8") as handle:
            manifest = json.load(handle)
    except FileNotFoundError:
        raise UsageError(f"benchmark manifest not found: {args.manifest}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"benchmark manifest {args.manifest} is not valid JSON: {exc.msg}") from None
    test_dataset = load_dataset_csv(args.dataset, split="test")
    rows = _benchmark_rows(manifest, os.path.dirname(os.path.abspath(args.manifest)),
                           test_dataset, args.top_k)
    header = ",".join(BENCHMARK_COLUMNS)
    print(header)
    for row in rows:
        print(",".join(str(row[c]) if c in ("agent", "range") else f"{row[c]:.4f}"
                       for c in BENCHMARK_COLUMNS))
    if args.dry_run:
        print("dry run: no files written")
        return 0
    csv_lines = [header]
    for row in rows:
        csv_lines.append(",".join(
            row[c] if c in ("agent", "range") else repr(row[c]) for c in BENCHMARK_COLUMNS
        ))
    atomic_write_text(os.path.join(args.out_dir, "benchmark.csv"), "\n".join(csv_lines) + "\n")
    atomic_write_json(os.path.join(args.out_dir, "benchmark.json"), rows)
    if not args.no_figures and rows:
        plots.save_benchmark_chart(rows, os.path.join(args.out_dir, "benchmark.png"))
    print(f"wrote benchmark table to {args.out_dir}")
    return 0


# ---------------------------------------------------------------- parser / main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alarm-annotator",
        description="Train and evaluate alarm annotators on normalized monitor-event streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic vitals/annotation streams")
    p.add_argument("--config", help="JSON file with flat keys mirroring the flags")
    p.add_argument("--n-events", type=int, dest="n_events")
    p.add_argument("--alarm-rate", type=float, dest="alarm_rate")
    p.add_argument("--label-noise", type=float, dest="label_noise")
    p.add_argument("--indeterminate-rate", type=float, dest="indeterminate_rate")
    p.add_argument("--vitals-noise-sd", type=float, dest="vitals_noise_sd")
    p.add_argument("--interval-ms", type=int, dest="interval_ms")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-vitals", default="vitals.jsonl")
    p.add_argument("--out-annotations", default="annotations.jsonl")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="parse, merge, and persist a dataset CSV")
    p.add_argument("--vitals", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--alarms")
    p.add_argument("--ds", type=int, choices=(1, 2), default=1)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--tolerance-ms", type=int, default=500, dest="tolerance_ms")
    p.add_argument("--out", required=True)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train an annotator and write run artifacts")
    p.add_argument("--config", help="JSON file with flat keys mirroring the flags")
    p.add_argument("--dataset", required=True, help="training dataset CSV")
    p.add_argument("--test-dataset", dest="test_dataset", help="held-out dataset CSV for periodic evaluation")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--agent", choices=AGENT_CHOICES)
    p.add_argument("--downsample", choices=STRATEGY_KINDS)
    p.add_argument("--reward", choices=REWARD_CHOICES)
    p.add_argument("--optimizer", choices=("adam", "rmsprop"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--update-interval", type=int, dest="update_interval")
    p.add_argument("--lr", type=float, help="learning rate for the value net, actor, and MLP")
    p.add_argument("--lr-critic", type=float, dest="lr_critic")
    p.add_argument("--episode-horizon", type=int, dest="episode_horizon")
    p.add_argument("--replay-capacity", type=int, dest="replay_capacity")
    p.add_argument("--no-normalize", action="store_true", dest="no_normalize")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("benchmark", help="evaluate the runs in a manifest into one table")
    p.add_argument("--manifest", required=True, help='JSON: {"runs": [{"agent", "range", "dir"}, ...]}')
    p.add_argument("--dataset", required=True, help="test dataset CSV")
    p.add_argument("-k", "--top-k", type=int, default=3, dest="top_k")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    level_name = os.environ.get("ANNOTATOR_LOG", "info").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level_name, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if level_name not in LOG_LEVELS:
        log.warning("unknown ANNOTATOR_LOG value %r; using info", level_name)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, OrderingError, UnmatchedAnnotationError, CheckpointNotFoundError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
