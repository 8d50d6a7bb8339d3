"""Command line surface: single runs, threshold sweeps, and reports.

Exit codes: 0 success, 1 sweep finished with failed points, 2 config
error, 3 numerical abort. The AMPLI_OUT_DIR environment variable
overrides the output root of every command.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .config import RunConfig, config_from_dict, load_config_file
from .errors import ConfigError
from .report import build_report
from .selection import CASES
from .gradstats import MEASURES
from .trainer import TrainingDiverged, run_training, write_run_report

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_CASE_ALIASES = {"one": "one_sided", "two": "two_sided"}


@dataclass(frozen=True)
class SweepSpec:
    thresholds: tuple[float, float, float]  # start, stop, step
    cases: tuple[str, ...]
    measures: tuple[str, ...]
    seeds: tuple[int, ...]
    baseline_seeds: tuple[int, ...]
    jobs: int = 1

    def __post_init__(self):
        start, stop, step = self.thresholds
        if step <= 0:
            raise ConfigError(f"threshold step must be > 0, got {step}")
        if start > stop:
            raise ConfigError(f"threshold start {start} exceeds stop {stop}")
        if not self.cases:
            raise ConfigError("sweep needs at least one case")
        if not self.measures:
            raise ConfigError("sweep needs at least one measure")
        if not self.seeds:
            raise ConfigError("sweep needs at least one seed")
        for case in self.cases:
            if case not in CASES:
                raise ConfigError(f"unknown case {case!r}, expected one of {CASES}")
        for measure in self.measures:
            if measure not in MEASURES:
                raise ConfigError(f"unknown measure {measure!r}, expected one of {MEASURES}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")


def threshold_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive arithmetic grid; both endpoints belong to the sweep."""
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(count)]


def _parse_case(token: str) -> str:
    token = token.strip()
    return _CASE_ALIASES.get(token, token)


def _parse_csv_list(text: str, convert):
    return tuple(convert(token) for token in text.split(",") if token.strip())


def _parse_threshold_range(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"thresholds must look like START:STOP:STEP, got {text!r}")
    try:
        return float(parts[0]), float(parts[1]), float(parts[2])
    except ValueError as exc:
        raise ConfigError(f"bad threshold range {text!r}: {exc}") from None


def _out_dir_for(config_out: str) -> str:
    return os.environ.get("AMPLI_OUT_DIR", config_out)


# ------------------------------------------------------------------- commands


def cmd_train(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threshold is not None:
        overrides["threshold"] = args.threshold
    if args.case is not None:
        overrides["case"] = _parse_case(args.case)
    if args.measure is not None:
        overrides["measure"] = args.measure
    config = config_from_dict(load_config_file(args.config), overrides)
    out_dir = _out_dir_for(config.out_dir)
    try:
        report = run_training(config)
    except TrainingDiverged as exc:
        paths = write_run_report(exc.report, out_dir)
        print(f"error: {exc}", file=sys.stderr)
        print(f"truncated report written to {paths['json']}", file=sys.stderr)
        return EXIT_NUMERIC
    paths = write_run_report(report, out_dir)
    print(paths["csv"])
    print(paths["json"])
    log.info(
        "%s finished: best test acc %.4f over %d epochs",
        config.run_id,
        report.best_test_acc,
        len(report.records),
    )
    return EXIT_OK


def _sweep_spec(args, raw: dict) -> SweepSpec:
    sweep_raw = raw.get("sweep", {})
    if not isinstance(sweep_raw, dict):
        raise ConfigError("config: 'sweep' must be an object")

    if args.thresholds is not None:
        thresholds = _parse_threshold_range(args.thresholds)
    elif "thresholds" in sweep_raw:
        t = sweep_raw["thresholds"]
        thresholds = (float(t["start"]), float(t["stop"]), float(t["step"]))
    else:
        raise ConfigError("sweep needs --thresholds or a config sweep.thresholds block")

    cases = (
        tuple(_parse_case(c) for c in _parse_csv_list(args.cases, str))
        if args.cases is not None
        else tuple(_parse_case(c) for c in sweep_raw.get("cases", ()))
    )
    measures = (
        _parse_csv_list(args.measures, str)
        if args.measures is not None
        else tuple(sweep_raw.get("measures", ()))
    )
    seeds = (
        _parse_csv_list(args.seeds, int)
        if args.seeds is not None
        else tuple(int(s) for s in sweep_raw.get("seeds", ()))
    )
    baseline_seeds = (
        _parse_csv_list(args.baseline_seeds, int)
        if args.baseline_seeds is not None
        else tuple(int(s) for s in sweep_raw.get("baseline_seeds", seeds))
    )
    return SweepSpec(
        thresholds=thresholds,
        cases=cases,
        measures=measures,
        seeds=seeds,
        baseline_seeds=baseline_seeds or seeds,
        jobs=args.jobs,
    )


def _run_sweep_task(task: tuple[str, RunConfig]) -> tuple[str, str, dict | None]:
    """Run one sweep point; returns (key, status, summary-or-None)."""
    key, config = task
    try:
        report = run_training(config)
    except TrainingDiverged as exc:
        write_run_report(exc.report, config.out_dir)
        return key, f"diverged at epoch {exc.epoch}", None
    except Exception as exc:  # isolated point failure must not kill the sweep
        return key, f"failed: {exc}", None
    write_run_report(report, config.out_dir)
    return key, "ok", report.summary()


def cmd_sweep(args) -> int:
    raw = load_config_file(args.config)
    spec = _sweep_spec(args, raw)
    base_config = config_from_dict(raw)
    out_dir = Path(_out_dir_for(base_config.out_dir))
    thresholds = threshold_grid(*spec.thresholds)

    tasks: list[tuple[str, RunConfig]] = []
    for seed in spec.baseline_seeds:
        cfg = replace(
            base_config,
            run_id=f"base-s{seed}",
            seed=seed,
            strategy=base_config.strategy.without_amplification(),
            out_dir=str(out_dir),
        )
        tasks.append((f"baseline/seed={seed}", cfg))
    for threshold in thresholds:
        for case in spec.cases:
            for measure in spec.measures:
                for seed in spec.seeds:
                    policy = replace(
                        base_config.policy,
                        threshold=threshold,
                        case=case,
                        measure=measure,
                    )
                    cfg = replace(
                        base_config,
                        run_id=f"amp-s{seed}",
                        seed=seed,
                        policy=policy,
                        out_dir=str(out_dir),
                    )
                    key = f"t={threshold:g}/case={case}/measure={measure}/seed={seed}"
                    tasks.append((key, cfg))

    log.info(
        "sweep: %d points (+%d baselines), jobs=%d",
        len(tasks) - len(spec.baseline_seeds),
        len(spec.baseline_seeds),
        spec.jobs,
    )
    results: dict[str, tuple[str, dict | None]] = {}
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            for key, status, summary in pool.map(_run_sweep_task, tasks):
                results[key] = (status, summary)
    else:
        for task in tasks:
            key, status, summary = _run_sweep_task(task)
            results[key] = (status, summary)

    failures = {k: s for k, (s, _) in results.items() if s != "ok"}
    for key, status in failures.items():
        log.error("sweep point %s: %s", key, status)

    baseline_accs = [
        summary["best_test_acc"]
        for key, (status, summary) in results.items()
        if key.startswith("baseline/") and status == "ok"
    ]
    baseline_mean = sum(baseline_accs) / len(baseline_accs) if baseline_accs else float("nan")

    agg_path = out_dir / "sweep_points.csv"
    plot_path = out_dir / "sweep_accuracy_vs_threshold.csv"
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(agg_path, "w", newline="", encoding="utf-8") as agg_fh, open(
        plot_path, "w", newline="", encoding="utf-8"
    ) as plot_fh:
        agg = csv.writer(agg_fh)
        plot = csv.writer(plot_fh)
        agg.writerow(
            [
                "threshold",
                "case",
                "measure",
                "seeds_completed",
                "seeds_failed",
                "mean_best_test_acc",
                "std_best_test_acc",
            ]
        )
        plot.writerow(
            ["threshold", "case", "measure", "mean_best_test_acc", "std_best_test_acc", "baseline_mean"]
        )
        for threshold in thresholds:
            for case in spec.cases:
                for measure in spec.measures:
                    accs = []
                    failed = 0
                    for seed in spec.seeds:
                        key = f"t={threshold:g}/case={case}/measure={measure}/seed={seed}"
                        status, summary = results[key]
                        if status == "ok":
                            accs.append(summary["best_test_acc"])
                        else:
                            failed += 1
                    if accs:
                        mean = sum(accs) / len(accs)
                        std = math.sqrt(sum((a - mean) ** 2 for a in accs) / len(accs))
                    else:
                        mean = std = float("nan")
                    agg.writerow(
                        [f"{threshold:g}", case, measure, len(accs), failed, f"{mean:.10g}", f"{std:.10g}"]
                    )
                    plot.writerow(
                        [f"{threshold:g}", case, measure, f"{mean:.10g}", f"{std:.10g}", f"{baseline_mean:.10g}"]
                    )

    sweep_doc = {
        "type": "sweep",
        "thresholds": thresholds,
        "cases": list(spec.cases),
        "measures": list(spec.measures),
        "seeds": list(spec.seeds),
        "baseline_seeds": list(spec.baseline_seeds),
        "points_total": len(tasks) - len(spec.baseline_seeds),
        "failures": failures,
        "baseline_mean_best_test_acc": baseline_mean,
        "config": base_config.echo(),
    }
    with open(out_dir / "sweep.json", "w", encoding="utf-8") as fh:
        json.dump(sweep_doc, fh, indent=2)
        fh.write("\n")

    print(agg_path)
    print(plot_path)
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_report(args) -> int:
    out_dir = os.environ.get("AMPLI_OUT_DIR", args.out)
    paths = build_report(args.in_dir, out_dir)
    for path in paths.values():
        print(path)
    return EXIT_OK


# ------------------------------------------------------------------ arg parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ampli",
        description="Train small dense networks with layer-selective gradient amplification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training from a JSON config")
    train.add_argument("--config", required=True, help="path to the JSON run config")
    train.add_argument("--seed", type=int, default=None, help="override the run seed")
    train.add_argument("--threshold", type=float, default=None, help="override the selection threshold")
    train.add_argument("--case", choices=["one", "two", "one_sided", "two_sided"], default=None)
    train.add_argument("--measure", choices=list(MEASURES), default=None)
    train.set_defaults(func=cmd_train)

    sweep = sub.add_parser("sweep", help="run a threshold sweep plus baselines")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--thresholds", default=None, help="inclusive grid START:STOP:STEP")
    sweep.add_argument("--cases", default=None, help="comma list from {one,two}")
    sweep.add_argument("--measures", default=None, help="comma list from {g,gprime}")
    sweep.add_argument("--seeds", default=None, help="comma list of integer seeds")
    sweep.add_argument("--baseline-seeds", dest="baseline_seeds", default=None)
    sweep.add_argument("--jobs", type=int, default=1, help="concurrent sweep points")
    sweep.set_defaults(func=cmd_sweep)

    report = sub.add_parser("report", help="aggregate run outputs into report files")
    report.add_argument("--in", dest="in_dir", required=True, help="directory of run outputs")
    report.add_argument("--out", required=True, help="directory for report files")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
