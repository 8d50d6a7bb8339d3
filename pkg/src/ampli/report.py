"""Post-hoc reporting over emitted run files: accuracy curves for the best
baseline and best amplified run, per-layer ratio traces, and a timing
comparison table."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

from .errors import ConfigError

log = logging.getLogger(__name__)


def _load_run_summaries(in_dir: Path) -> list[dict]:
    summaries = []
    for path in sorted(in_dir.glob("*.json")):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            log.warning("skipping unreadable %s: %s", path, exc)
            continue
        if isinstance(doc, dict) and doc.get("type") == "run":
            doc["_path"] = str(path)
            summaries.append(doc)
    return summaries


def _read_records(csv_path: str) -> list[dict]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _best(summaries: list[dict]) -> dict:
    return max(summaries, key=lambda s: s.get("best_test_acc") or float("-inf"))


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values)


def build_report(in_dir, out_dir) -> dict[str, str]:
    """Aggregate run outputs from `in_dir` into report files under `out_dir`.

    Needs at least one baseline (unamplified) and one amplified completed
    run; raises ConfigError otherwise.
    """
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise ConfigError(f"report input {in_dir} is not a directory")
    summaries = [s for s in _load_run_summaries(in_dir) if not s.get("aborted")]
    if not summaries:
        raise ConfigError(f"no completed run outputs found in {in_dir}")
    baselines = [s for s in summaries if not s["amplified"]]
    amplified = [s for s in summaries if s["amplified"]]
    if not baselines or not amplified:
        raise ConfigError(
            f"need at least one baseline and one amplified run in {in_dir} "
            f"(found {len(baselines)} baseline, {len(amplified)} amplified)"
        )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_base = _best(baselines)
    best_amp = _best(amplified)
    base_records = _read_records(best_base["files"]["csv"])
    amp_records = _read_records(best_amp["files"]["csv"])

    curves_path = out_dir / "accuracy_curves.csv"
    with open(curves_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "base_train_acc", "base_test_acc", "amp_train_acc", "amp_test_acc"]
        )
        for base_row, amp_row in zip(base_records, amp_records):
            writer.writerow(
                [
                    base_row["epoch"],
                    base_row["train_acc"],
                    base_row["test_acc"],
                    amp_row["train_acc"],
                    amp_row["test_acc"],
                ]
            )

    ratios_path = out_dir / "ratio_traces.csv"
    ratios_src = best_amp["files"].get("ratios")
    if ratios_src and Path(ratios_src).exists():
        ratios_text = Path(ratios_src).read_text(encoding="utf-8")
    else:
        ratios_text = "epoch,layer_id,g,gprime,z_g,z_gprime\n"
    ratios_path.write_text(ratios_text, encoding="utf-8")

    base_mean = _mean(s["total_epoch_seconds"] for s in baselines)
    amp_mean = _mean(s["total_epoch_seconds"] for s in amplified)
    overhead = (amp_mean - base_mean) / base_mean if base_mean > 0 else float("nan")
    timing_path = out_dir / "timing.csv"
    with open(timing_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "n_runs", "mean_epoch_seconds", "overhead_vs_baseline"])
        writer.writerow(["baseline", len(baselines), f"{base_mean:.6f}", ""])
        writer.writerow(["amplified", len(amplified), f"{amp_mean:.6f}", f"{overhead:.6f}"])

    report_path = out_dir / "report.json"
    doc = {
        "type": "report",
        "runs": {
            "baseline": [s["run_id"] for s in baselines],
            "amplified": [s["run_id"] for s in amplified],
        },
        "best_baseline": {
            "run_id": best_base["run_id"],
            "best_test_acc": best_base["best_test_acc"],
            "config": best_base["config"],
        },
        "best_amplified": {
            "run_id": best_amp["run_id"],
            "best_test_acc": best_amp["best_test_acc"],
            "config": best_amp["config"],
        },
        "timing": {
            "baseline_mean_epoch_seconds": base_mean,
            "amplified_mean_epoch_seconds": amp_mean,
            "overhead_vs_baseline": overhead,
        },
    }
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")

    return {
        "curves": str(curves_path),
        "ratios": str(ratios_path),
        "timing": str(timing_path),
        "report": str(report_path),
    }
