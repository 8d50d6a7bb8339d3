"""The training loop: forward/backward per minibatch, gradient recording
during analysis epochs, amplification of selected layers, SGD updates, and
per-epoch evaluation into a run report.

Ordering per iteration: backward produces raw gradients, the recorder sees
them first, amplification scales the selected layers, then the SGD step
consumes them. Analysis epochs always train unamplified so the recorded
stream describes the raw learning signal.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import RunConfig
from .data import Dataset, SplitSpec, gen_synthetic, load_csv_dataset, split_and_batch, split_indices
from .errors import NonFiniteError
from .gradstats import GradientAccumulator, LayerRatios
from .nn import GradientSet, Network, build_mlp, loss_softmax_ce, sgd_step
from .selection import AmpSet, select_layers

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    phase: int
    lr: float
    amp_active: bool
    selected: tuple[int, ...]
    train_loss: float
    train_acc: float
    test_acc: float
    seconds: float


@dataclass
class RunReport:
    """Everything one training run produced, ready for CSV/JSON emission."""

    run_id: str
    config: dict
    amplified: bool
    records: list[EpochRecord] = field(default_factory=list)
    ratio_rows: list[tuple[int, LayerRatios]] = field(default_factory=list)
    selection_events: list[dict] = field(default_factory=list)
    dataset_notes: tuple[str, ...] = ()
    aborted: bool = False
    abort_epoch: int | None = None
    abort_iteration: int | None = None
    # final network state; kept for callers and tests, never serialized
    network: Network | None = field(default=None, repr=False)

    @property
    def best_test_acc(self) -> float:
        return max((r.test_acc for r in self.records), default=float("nan"))

    @property
    def best_epoch(self) -> int | None:
        if not self.records:
            return None
        return max(self.records, key=lambda r: r.test_acc).epoch

    @property
    def total_epoch_seconds(self) -> float:
        return sum(r.seconds for r in self.records)

    def summary(self) -> dict:
        return {
            "type": "run",
            "run_id": self.run_id,
            "amplified": self.amplified,
            "aborted": self.aborted,
            "abort_epoch": self.abort_epoch,
            "abort_iteration": self.abort_iteration,
            "epochs_completed": len(self.records),
            "best_test_acc": self.best_test_acc,
            "best_epoch": self.best_epoch,
            "total_epoch_seconds": self.total_epoch_seconds,
            "total_minutes": self.total_epoch_seconds / 60.0,
            "selection_events": self.selection_events,
            "dataset_notes": list(self.dataset_notes),
            "config": self.config,
        }


class TrainingDiverged(NonFiniteError):
    """Raised when the loss goes non-finite; carries the partial report."""

    def __init__(self, epoch: int, iteration: int, report: RunReport):
        super().__init__(
            f"non-finite loss at epoch {epoch}, iteration {iteration}",
            iteration=iteration,
        )
        self.epoch = epoch
        self.report = report


def apply_amplification(grads: GradientSet, amp_set, factor: float) -> GradientSet:
    """Scale the gradients of the selected layers by `factor`.

    `amp_set` may be an AmpSet or any collection of layer ids. The input
    mapping is never mutated; with factor 1 or nothing selected it is
    returned as-is.
    """
    if factor < 1:
        raise ValueError(f"amplification factor must be >= 1, got {factor}")
    selected = amp_set.selected if isinstance(amp_set, AmpSet) else tuple(amp_set or ())
    if factor == 1.0 or not selected:
        return grads
    chosen = set(selected)
    return {
        lid: (flat * factor if lid in chosen else flat) for lid, flat in grads.items()
    }


def train_one_epoch(
    network: Network,
    batches: Iterable[tuple[np.ndarray, np.ndarray]],
    lr: float,
    *,
    amp_layers: Sequence[int] = (),
    amp_factor: float = 1.0,
    accumulator: GradientAccumulator | None = None,
) -> float:
    """One pass over the batches; returns the mean training loss.

    Raises NonFiniteError (with the iteration index) if the loss diverges.
    """
    total = 0.0
    seen = 0
    for iteration, (xb, yb) in enumerate(batches):
        logits, cache = network.forward(xb, train=True)
        loss, dlogits = loss_softmax_ce(logits, yb)
        if not math.isfinite(loss):
            raise NonFiniteError(
                f"non-finite loss at iteration {iteration}", iteration=iteration
            )
        grads = network.backward(cache, dlogits)
        if accumulator is not None:
            accumulator.record_iteration(grads)
        grads = apply_amplification(grads, amp_layers, amp_factor)
        sgd_step(network, grads, lr)
        total += loss * len(yb)
        seen += len(yb)
    return total / max(seen, 1)


def evaluate(network: Network, features: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> float:
    """Fraction of argmax predictions matching labels, in eval mode."""
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    hits = 0
    for start in range(0, len(labels), batch_size):
        xb = features[start : start + batch_size]
        yb = labels[start : start + batch_size]
        logits, _ = network.forward(xb, train=False)
        hits += int((logits.argmax(axis=1) == yb).sum())
    return hits / len(labels)


def build_dataset(spec) -> Dataset:
    if spec.kind == "csv":
        return load_csv_dataset(spec.path, spec.label_column)
    return gen_synthetic(spec.kind, spec.n, spec.noise, spec.classes, spec.seed)


def run_training(config: RunConfig) -> RunReport:
    """Execute the full strategy; deterministic given the config.

    Raises TrainingDiverged (carrying the partial report) on non-finite
    loss and ConfigError on bad inputs before the first epoch.
    """
    ds = build_dataset(config.dataset)
    split = SplitSpec(
        train_fraction=config.dataset.train_fraction,
        seed=config.dataset.seed,
        stratified=config.dataset.stratified,
    )
    train_idx, test_idx = split_indices(ds, split)
    x_train, y_train = ds.features[train_idx], ds.labels[train_idx]
    x_test, y_test = ds.features[test_idx], ds.labels[test_idx]

    network = build_mlp(
        ds.dim,
        config.network.hidden,
        ds.class_count,
        batchnorm=config.network.batchnorm,
        seed=config.seed,
    )

    strategy = config.strategy
    report = RunReport(
        run_id=config.run_id,
        config=config.echo(),
        amplified=strategy.has_amplification,
        dataset_notes=ds.notes,
        network=network,
    )

    amp_set: AmpSet | None = None
    for epoch in range(1, strategy.total_epochs + 1):
        phase_idx = strategy.phase_index_at(epoch)
        phase = strategy.phases[phase_idx]
        analysis = strategy.reselection_due(epoch)
        active_layers: tuple[int, ...] = ()
        if phase.is_amp and not analysis and amp_set is not None:
            active_layers = amp_set.selected

        batches, _ = split_and_batch(ds, split, config.batch_size, epoch)
        accumulator = GradientAccumulator() if analysis else None

        started = time.perf_counter()
        try:
            train_loss = train_one_epoch(
                network,
                batches,
                phase.lr,
                amp_layers=active_layers,
                amp_factor=phase.amp_factor if active_layers else 1.0,
                accumulator=accumulator,
            )
        except NonFiniteError as exc:
            report.aborted = True
            report.abort_epoch = epoch
            report.abort_iteration = exc.iteration
            raise TrainingDiverged(epoch, exc.iteration or 0, report) from exc

        if analysis:
            ratios = accumulator.layer_ratios()
            report.ratio_rows.extend((epoch, r) for r in ratios)
            z = [r.zscore(config.policy.measure) for r in ratios]
            amp_set = select_layers(
                z,
                config.policy,
                epoch=epoch,
                layer_ids=[r.layer_id for r in ratios],
            )
            report.selection_events.append(
                {"epoch": epoch, "selected": list(amp_set.selected)}
            )
            log.info(
                "%s: epoch %d analyzed, selected layers %s",
                config.run_id,
                epoch,
                list(amp_set.selected),
            )

        train_acc = evaluate(network, x_train, y_train)
        test_acc = evaluate(network, x_test, y_test)
        seconds = time.perf_counter() - started
        report.records.append(
            EpochRecord(
                epoch=epoch,
                phase=phase_idx,
                lr=phase.lr,
                amp_active=bool(active_layers),
                selected=active_layers,
                train_loss=train_loss,
                train_acc=train_acc,
                test_acc=test_acc,
                seconds=seconds,
            )
        )
    return report


# ---------------------------------------------------------------- file output

REPORT_FIELDS = (
    "epoch",
    "phase",
    "lr",
    "amp_active",
    "selected_layers",
    "train_loss",
    "train_acc",
    "test_acc",
    "seconds",
)

RATIO_FIELDS = ("epoch", "layer_id", "g", "gprime", "z_g", "z_gprime")


def report_basename(report: RunReport) -> str:
    pol = report.config["policy"]
    return f"{report.run_id}_{pol['threshold']:g}_{pol['case']}_{pol['measure']}"


def write_run_report(report: RunReport, out_dir) -> dict[str, str]:
    """Emit <base>.csv, <base>.json, and <base>_ratios.csv when the run
    produced ratio rows. Returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = report_basename(report)

    csv_path = out_dir / f"{base}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_FIELDS)
        for r in report.records:
            writer.writerow(
                [
                    r.epoch,
                    r.phase,
                    f"{r.lr:g}",
                    int(r.amp_active),
                    ";".join(str(i) for i in r.selected),
                    f"{r.train_loss:.10g}",
                    f"{r.train_acc:.10g}",
                    f"{r.test_acc:.10g}",
                    f"{r.seconds:.6f}",
                ]
            )

    paths = {"csv": str(csv_path)}

    if report.ratio_rows:
        ratios_path = out_dir / f"{base}_ratios.csv"
        with open(ratios_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(RATIO_FIELDS)
            for epoch, row in report.ratio_rows:
                writer.writerow(
                    [
                        epoch,
                        row.layer_id,
                        f"{row.g:.12g}",
                        f"{row.gprime:.12g}",
                        f"{row.z_g:.12g}",
                        f"{row.z_gprime:.12g}",
                    ]
                )
        paths["ratios"] = str(ratios_path)

    json_path = out_dir / f"{base}.json"
    summary = report.summary()
    summary["files"] = paths
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    paths["json"] = str(json_path)
    return paths
