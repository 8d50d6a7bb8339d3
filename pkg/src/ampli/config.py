"""Run configuration: dataclasses plus JSON loading and CLI overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .schedule import TrainingStrategy, parse_strategy
from .selection import SelectionPolicy


@dataclass(frozen=True)
class NetworkSpec:
    hidden: tuple[int, ...]
    batchnorm: bool = False

    def __post_init__(self):
        if not self.hidden:
            raise ConfigError("network needs at least one hidden width")
        if any((not isinstance(w, int)) or w < 1 for w in self.hidden):
            raise ConfigError(f"hidden widths must be positive integers, got {self.hidden}")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    n: int = 1000
    noise: float = 0.0
    classes: int = 2
    seed: int = 0
    path: str | None = None
    label_column: str | None = None
    train_fraction: float = 0.8
    stratified: bool = True

    def __post_init__(self):
        if self.kind == "csv":
            if not self.path or not self.label_column:
                raise ConfigError("csv dataset needs 'path' and 'label_column'")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


@dataclass(frozen=True)
class RunConfig:
    run_id: str
    seed: int
    network: NetworkSpec
    dataset: DatasetSpec
    batch_size: int
    strategy: TrainingStrategy
    policy: SelectionPolicy
    out_dir: str = "runs"

    def __post_init__(self):
        if not self.run_id:
            raise ConfigError("run_id must be non-empty")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    def echo(self) -> dict:
        """Fully resolved config as a JSON-safe dict, for provenance."""
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "network": {"hidden": list(self.network.hidden), "batchnorm": self.network.batchnorm},
            "dataset": {
                "kind": self.dataset.kind,
                "n": self.dataset.n,
                "noise": self.dataset.noise,
                "classes": self.dataset.classes,
                "seed": self.dataset.seed,
                "path": self.dataset.path,
                "label_column": self.dataset.label_column,
                "train_fraction": self.dataset.train_fraction,
                "stratified": self.dataset.stratified,
            },
            "batch_size": self.batch_size,
            "strategy": self.strategy.to_config(),
            "policy": {
                "measure": self.policy.measure,
                "case": self.policy.case,
                "threshold": self.policy.threshold,
            },
            "out_dir": self.out_dir,
        }


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required field {key!r}")
    return mapping[key]


def config_from_dict(raw: dict, overrides: dict | None = None) -> RunConfig:
    """Build a validated RunConfig from decoded JSON, applying overrides
    (seed / threshold / case / measure / run_id / out_dir) last."""
    if not isinstance(raw, dict):
        raise ConfigError(f"run config must be a JSON object, got {type(raw).__name__}")
    overrides = dict(overrides or {})

    net_raw = _require(raw, "network", "config")
    if not isinstance(net_raw, dict):
        raise ConfigError("config: 'network' must be an object")
    network = NetworkSpec(
        hidden=tuple(net_raw.get("hidden", ())),
        batchnorm=bool(net_raw.get("batchnorm", False)),
    )

    ds_raw = _require(raw, "dataset", "config")
    if not isinstance(ds_raw, dict):
        raise ConfigError("config: 'dataset' must be an object")
    seed = int(overrides.pop("seed", raw.get("seed", 0)))
    dataset = DatasetSpec(
        kind=_require(ds_raw, "kind", "dataset"),
        n=int(ds_raw.get("n", 1000)),
        noise=float(ds_raw.get("noise", 0.0)),
        classes=int(ds_raw.get("classes", 2)),
        seed=int(ds_raw.get("seed", seed)),
        path=ds_raw.get("path"),
        label_column=ds_raw.get("label_column"),
        train_fraction=float(ds_raw.get("train_fraction", 0.8)),
        stratified=bool(ds_raw.get("stratified", True)),
    )

    strategy = parse_strategy(_require(raw, "strategy", "config"))

    pol_raw = raw.get("policy", {})
    if not isinstance(pol_raw, dict):
        raise ConfigError("config: 'policy' must be an object")
    policy = SelectionPolicy(
        measure=overrides.pop("measure", pol_raw.get("measure", "g")),
        case=overrides.pop("case", pol_raw.get("case", "one_sided")),
        threshold=float(overrides.pop("threshold", pol_raw.get("threshold", 1.0))),
    )

    config = RunConfig(
        run_id=str(overrides.pop("run_id", raw.get("run_id", "run"))),
        seed=seed,
        network=network,
        dataset=dataset,
        batch_size=int(raw.get("batch_size", 32)),
        strategy=strategy,
        policy=policy,
        out_dir=str(overrides.pop("out_dir", raw.get("out_dir", "runs"))),
    )
    if overrides:
        raise ConfigError(f"unknown overrides: {sorted(overrides)}")
    return config


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return raw


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    return config_from_dict(load_config_file(path), overrides)
