"""Per-layer gradient direction statistics accumulated over an epoch.

For every trainable scalar the accumulator keeps the signed sum and the
absolute sum of its gradient across an epoch's iterations. Two layer-level
ratios are derived from those sums:

* direction ratio ("g"): |net movement| of the whole layer divided by its
  total absolute gradient mass. 1 means every update pushed the same way,
  0 means complete cancellation.
* per-weight direction ratio ("gprime"): the same ratio formed per scalar
  and then averaged, so small-magnitude scalars count as much as large
  ones.

Both lie in [0, 1]. Ratios are compared across layers via z-scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ShapeError
from .nn import GradientSet

MEASURES = ("g", "gprime")


@dataclass
class _LayerSums:
    signed: np.ndarray
    absolute: np.ndarray


class GradientAccumulator:
    """Streaming signed/absolute gradient sums per layer id.

    Layer sizes are fixed by the first accumulate call. `iter_count`
    advances once per training iteration, after every layer of that
    iteration has been recorded.
    """

    def __init__(self):
        self._sums: dict[int, _LayerSums] = {}
        self.iter_count = 0

    @property
    def layer_ids(self) -> list[int]:
        return sorted(self._sums)

    def size(self, layer_id: int) -> int:
        return self._sums[layer_id].signed.size

    def accumulate(self, layer_id: int, grad_flat: np.ndarray) -> None:
        grad_flat = np.asarray(grad_flat, dtype=np.float64).ravel()
        if not np.isfinite(grad_flat).all():
            raise NonFiniteError(f"non-finite gradient entry for layer {layer_id}")
        sums = self._sums.get(layer_id)
        if sums is None:
            self._sums[layer_id] = _LayerSums(grad_flat.copy(), np.abs(grad_flat))
            return
        if grad_flat.size != sums.signed.size:
            raise ShapeError(
                f"layer {layer_id}: gradient length {grad_flat.size} != "
                f"accumulated length {sums.signed.size}"
            )
        sums.signed += grad_flat
        sums.absolute += np.abs(grad_flat)

    def finish_iteration(self) -> None:
        self.iter_count += 1

    def record_iteration(self, grads: GradientSet) -> None:
        """Record one iteration's full gradient set and advance the count."""
        for layer_id, flat in grads.items():
            self.accumulate(layer_id, flat)
        self.finish_iteration()

    def direction_ratio(self, layer_id: int) -> float:
        """Layer-pooled ratio sum_i |signed_i| / sum_i abs_i, 0 on zero mass."""
        sums = self._sums[layer_id]
        denom = float(sums.absolute.sum())
        if denom == 0.0:
            return 0.0
        # min() guards the [0, 1] range against accumulation roundoff
        return min(1.0, float(np.abs(sums.signed).sum()) / denom)

    def per_weight_direction_ratio(self, layer_id: int) -> float:
        """Mean over scalars of |signed_i| / abs_i; a scalar with zero mass
        contributes 0 and still counts in the mean."""
        sums = self._sums[layer_id]
        ratios = np.zeros_like(sums.absolute)
        nonzero = sums.absolute > 0.0
        ratios[nonzero] = np.abs(sums.signed[nonzero]) / sums.absolute[nonzero]
        return min(1.0, float(ratios.mean()))

    def layer_ratios(self) -> "list[LayerRatios]":
        """Both ratios plus z-scores for every recorded layer.

        z-scores are computed across layers within each measure.
        """
        ids = self.layer_ids
        g = np.array([self.direction_ratio(i) for i in ids])
        gp = np.array([self.per_weight_direction_ratio(i) for i in ids])
        z_g = zscores(g)
        z_gp = zscores(gp)
        return [
            LayerRatios(i, float(g[k]), float(gp[k]), float(z_g[k]), float(z_gp[k]))
            for k, i in enumerate(ids)
        ]


@dataclass(frozen=True)
class LayerRatios:
    """Direction ratios of one layer for one epoch, with their z-scores."""

    layer_id: int
    g: float
    gprime: float
    z_g: float
    z_gprime: float

    def zscore(self, measure: str) -> float:
        if measure == "g":
            return self.z_g
        if measure == "gprime":
            return self.z_gprime
        raise ValueError(f"unknown measure {measure!r}, expected one of {MEASURES}")


def zscores(values) -> np.ndarray:
    """Z-scores with population standard deviation.

    Zero spread (including a single value) maps everything to 0, so no
    layer can cross a positive threshold.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("need at least one value to normalize")
    sigma = values.std()
    if sigma == 0.0:
        return np.zeros_like(values)
    return (values - values.mean()) / sigma
