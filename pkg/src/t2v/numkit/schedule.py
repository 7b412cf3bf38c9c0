"""Learning-rate schedule: linear warmup, then step decay at epoch marks."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    warmup_steps: int = 0
    decay_epochs: tuple[int, ...] = ()
    decay_factor: float = 0.1
    steps_per_epoch: int = 1


def lr_at(sched: LrSchedule, step: int) -> float:
    """Rate at a 0-based global step.

    Ramps linearly from 0 to base_lr over warmup_steps, then multiplies by
    decay_factor once for every decay epoch already reached (epoch =
    step // steps_per_epoch).
    """
    if sched.steps_per_epoch <= 0:
        raise ValueError(f"steps_per_epoch must be positive, got {sched.steps_per_epoch}")
    if step < 0:
        raise ValueError(f"negative step {step}")
    if sched.warmup_steps > 0 and step < sched.warmup_steps:
        return sched.base_lr * step / sched.warmup_steps
    epoch = step // sched.steps_per_epoch
    hits = sum(1 for e in sched.decay_epochs if epoch >= e)
    return sched.base_lr * sched.decay_factor ** hits
