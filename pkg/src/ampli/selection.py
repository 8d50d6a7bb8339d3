"""Threshold-based choice of which layers to amplify.

one_sided picks layers whose z-scored ratio exceeds the threshold (ratios
near the top of the pack); two_sided also picks strongly negative ones
(ratios near the bottom). Comparison is strict, so ties at the threshold
are never selected and an empty result is a legal outcome.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .gradstats import MEASURES

CASES = ("one_sided", "two_sided")


@dataclass(frozen=True)
class SelectionPolicy:
    measure: str = "g"
    case: str = "one_sided"
    threshold: float = 1.0

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ConfigError(f"measure must be one of {MEASURES}, got {self.measure!r}")
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if not (self.threshold >= 0):
            raise ConfigError(f"threshold must be >= 0, got {self.threshold}")


@dataclass(frozen=True)
class AmpSet:
    """Layers chosen for amplification, with provenance."""

    selected: tuple[int, ...]
    epoch_selected: int
    policy: SelectionPolicy

    def __contains__(self, layer_id: int) -> bool:
        return layer_id in self.selected


def select_layers(
    zscores,
    policy: SelectionPolicy,
    *,
    epoch: int = 0,
    layer_ids: Sequence[int] | None = None,
) -> AmpSet:
    """Apply the policy's case and threshold to per-layer z-scores."""
    z = np.asarray(zscores, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("z-scores must be finite")
    ids = range(z.size) if layer_ids is None else layer_ids
    if policy.case == "one_sided":
        hits = z > policy.threshold
    else:
        hits = np.abs(z) > policy.threshold
    selected = tuple(sorted(i for i, hit in zip(ids, hits) if hit))
    return AmpSet(selected=selected, epoch_selected=epoch, policy=policy)
