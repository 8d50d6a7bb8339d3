"""Phase-based training strategies and reselection timing.

A strategy is an ordered list of phases (end_epoch, lr, is_amp,
amp_factor): train with `lr` up to and including `end_epoch`, amplifying
only when `is_amp` is set. Epochs are 1-indexed.

An epoch where `reselection_due` fires is an analysis epoch: it trains
normally but unamplified, its gradients are recorded, and the layer set
chosen from them applies from the next epoch until the next reselection.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

from .errors import ConfigError

RESELECT_ONCE = "once_per_phase"
RESELECT_EVERY_K = "every_k"


@dataclass(frozen=True)
class PhaseSpec:
    end_epoch: int
    lr: float
    is_amp: bool
    amp_factor: float


@dataclass(frozen=True)
class TrainingStrategy:
    phases: tuple[PhaseSpec, ...]
    reselect: str = RESELECT_ONCE
    every_k: int = 0

    @property
    def total_epochs(self) -> int:
        return self.phases[-1].end_epoch

    @property
    def has_amplification(self) -> bool:
        return any(p.is_amp for p in self.phases)

    def phase_index_at(self, epoch: int) -> int:
        if not 1 <= epoch <= self.total_epochs:
            raise ValueError(
                f"epoch {epoch} outside schedule range 1..{self.total_epochs}"
            )
        return bisect_left([p.end_epoch for p in self.phases], epoch)

    def phase_at(self, epoch: int) -> PhaseSpec:
        return self.phases[self.phase_index_at(epoch)]

    def phase_start(self, index: int) -> int:
        return 1 if index == 0 else self.phases[index - 1].end_epoch + 1

    def _amp_run_start(self, index: int) -> int:
        # first epoch of the contiguous stretch of amp-enabled phases
        while index > 0 and self.phases[index - 1].is_amp:
            index -= 1
        return self.phase_start(index)

    def reselection_due(self, epoch: int) -> bool:
        """True when this epoch's gradients determine the next layer set."""
        index = self.phase_index_at(epoch)
        if not self.phases[index].is_amp:
            return False
        if self.reselect == RESELECT_ONCE:
            return epoch == self.phase_start(index)
        return (epoch - self._amp_run_start(index)) % self.every_k == 0

    def without_amplification(self) -> "TrainingStrategy":
        """Baseline twin: same epochs and learning rates, amplification off."""
        stripped = tuple(
            PhaseSpec(p.end_epoch, p.lr, False, 1.0) for p in self.phases
        )
        return TrainingStrategy(stripped, self.reselect, self.every_k)

    def to_config(self) -> dict:
        reselect = (
            RESELECT_ONCE
            if self.reselect == RESELECT_ONCE
            else {RESELECT_EVERY_K: self.every_k}
        )
        return {
            "phases": [
                [p.end_epoch, p.lr, 1 if p.is_amp else 0, p.amp_factor]
                for p in self.phases
            ],
            "reselect": reselect,
        }


def parse_strategy(fragment) -> TrainingStrategy:
    """Validate a strategy config fragment.

    Accepts either a bare list of (end_epoch, lr, is_amp, amp_factor)
    tuples or {"phases": [...], "reselect": "once_per_phase" | {"every_k": k}}.
    is_amp follows the 0/nonzero convention and also accepts booleans.
    """
    reselect_raw = RESELECT_ONCE
    if isinstance(fragment, dict):
        if "phases" not in fragment:
            raise ConfigError("strategy config needs a 'phases' list")
        reselect_raw = fragment.get("reselect", RESELECT_ONCE)
        fragment = fragment["phases"]
    if not isinstance(fragment, (list, tuple)) or not fragment:
        raise ConfigError("strategy phases must be a non-empty list of 4-tuples")

    phases: list[PhaseSpec] = []
    prev_end = 0
    for i, raw in enumerate(fragment):
        if not isinstance(raw, (list, tuple)) or len(raw) != 4:
            raise ConfigError(f"strategy tuple {i}: expected 4 fields, got {raw!r}")
        end_epoch, lr, is_amp_raw, amp_factor = raw
        if not isinstance(end_epoch, int) or isinstance(end_epoch, bool):
            raise ConfigError(f"strategy tuple {i}: end epoch must be an integer")
        if end_epoch <= prev_end:
            raise ConfigError(
                f"strategy tuple {i}: end epoch {end_epoch} must exceed "
                f"previous end {prev_end}"
            )
        lr = float(lr)
        if lr <= 0:
            raise ConfigError(f"strategy tuple {i}: learning rate must be > 0, got {lr}")
        is_amp = bool(is_amp_raw)
        amp_factor = float(amp_factor)
        if amp_factor < 1:
            raise ConfigError(
                f"strategy tuple {i}: amplification factor must be >= 1, got {amp_factor}"
            )
        if not is_amp and amp_factor != 1.0:
            raise ConfigError(
                f"strategy tuple {i}: amplification factor must be 1 when "
                f"amplification is off"
            )
        phases.append(PhaseSpec(end_epoch, lr, is_amp, amp_factor))
        prev_end = end_epoch

    reselect, every_k = _parse_reselect(reselect_raw)
    return TrainingStrategy(tuple(phases), reselect, every_k)


def _parse_reselect(raw) -> tuple[str, int]:
    if raw == RESELECT_ONCE:
        return RESELECT_ONCE, 0
    if isinstance(raw, dict) and set(raw) == {RESELECT_EVERY_K}:
        k = raw[RESELECT_EVERY_K]
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            raise ConfigError(f"reselect every_k must be a positive integer, got {k!r}")
        return RESELECT_EVERY_K, k
    raise ConfigError(
        f"reselect must be 'once_per_phase' or {{'every_k': k}}, got {raw!r}"
    )
