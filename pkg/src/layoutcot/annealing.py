"""CoT annealing: from all-CoT batches to all-direct batches over fine-tuning"""

import json
import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .exceptions import RenderError, ScheduleError
from .generators import to_example
from .models import InstructionRecord, RenderedExample, RenderMode

# Set logger
logger = logging.getLogger(__name__)

AUDIT_WINDOW = 50
DIRECT_SUFFIX = "#direct"


class ScheduleShape(Enum):
    LINEAR = "linear"
    COSINE = "cosine"
    PIECEWISE = "piecewise"


@dataclass(frozen=True)
class AnnealSchedule:
    """CoT fraction over training steps, fixed at 1 on step 0 and 0 on step T"""

    total_steps: int
    shape: ScheduleShape = ScheduleShape.LINEAR
    # Interior (step, fraction) knots for the piecewise shape
    knots: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise ScheduleError(f"total_steps must be positive, got {self.total_steps}")
        if self.shape is not ScheduleShape.PIECEWISE:
            if self.knots:
                raise ScheduleError(f"knots only apply to the piecewise shape, not {self.shape.value}")
            return

        knots = tuple((float(s), float(f)) for s, f in self.knots)
        # Endpoint knots are implied; accept them only with their fixed values
        if knots and knots[0][0] == 0:
            if knots[0][1] != 1.0:
                raise ScheduleError("a knot at step 0 must have fraction 1")
            knots = knots[1:]
        if knots and knots[-1][0] == self.total_steps:
            if knots[-1][1] != 0.0:
                raise ScheduleError(f"a knot at step {self.total_steps} must have fraction 0")
            knots = knots[:-1]

        for step, fraction in knots:
            if not 0 < step < self.total_steps:
                raise ScheduleError(f"knot step {step:g} outside (0, {self.total_steps})")
            if not 0.0 <= fraction <= 1.0:
                raise ScheduleError(f"knot fraction {fraction:g} outside [0, 1]")
        for (s1, f1), (s2, f2) in zip(knots, knots[1:]):
            if s2 <= s1:
                raise ScheduleError("knot steps must be strictly increasing")
            if f2 > f1:
                raise ScheduleError("knot fractions must be non-increasing")
        object.__setattr__(self, "knots", knots)

    @property
    def anchor_points(self) -> tuple[np.ndarray, np.ndarray]:
        steps = [0.0, *(s for s, _ in self.knots), float(self.total_steps)]
        fractions = [1.0, *(f for _, f in self.knots), 0.0]
        return np.asarray(steps), np.asarray(fractions)


def cot_fraction(schedule: AnnealSchedule, step: float) -> float:
    """Fraction of CoT-rendered records at a training step"""
    T = schedule.total_steps
    if not 0 <= step <= T:
        raise ScheduleError(f"step {step} outside [0, {T}]")

    match schedule.shape:
        case ScheduleShape.LINEAR:
            return 1.0 - step / T
        case ScheduleShape.COSINE:
            return (1.0 + math.cos(math.pi * step / T)) / 2.0
        case ScheduleShape.PIECEWISE:
            xs, ys = schedule.anchor_points
            return float(np.interp(step, xs, ys))


@dataclass(frozen=True)
class PlanStep:
    step: int
    n_cot: int
    n_direct: int

    def to_dict(self) -> dict[str, int]:
        return {"step": self.step, "n_cot": self.n_cot, "n_direct": self.n_direct}


@dataclass(frozen=True)
class AuditWindow:
    start: int
    end: int
    expected: float
    realized: float

    @property
    def deviation(self) -> float:
        return abs(self.realized - self.expected)


@dataclass(frozen=True)
class MixPlan:
    schedule: AnnealSchedule
    batch_size: int
    seed: int
    steps: tuple[PlanStep, ...]
    fractions: tuple[float, ...] = field(repr=False, default=())

    def audit(self, window: int = AUDIT_WINDOW) -> list[AuditWindow]:
        """Realized against expected CoT fraction over consecutive windows"""
        windows = []
        for start in range(0, len(self.steps), window):
            chunk = self.steps[start : start + window]
            expected = self.fractions[start : start + window]
            windows.append(
                AuditWindow(
                    start=start,
                    end=start + len(chunk),
                    expected=float(np.mean(expected)),
                    realized=sum(s.n_cot for s in chunk) / (self.batch_size * len(chunk)),
                )
            )
        return windows

    @property
    def total_cot(self) -> int:
        return sum(step.n_cot for step in self.steps)

    def to_jsonl(self, path: Path) -> None:
        with path.open("w", encoding="utf-8") as handle:
            for step in self.steps:
                handle.write(json.dumps(step.to_dict()) + "\n")


def plan_batches(schedule: AnnealSchedule, batch_size: int, seed: int) -> MixPlan:
    """Per-step CoT and direct counts, rounded stochastically with a seeded stream"""
    if batch_size < 1:
        raise ScheduleError(f"batch_size must be positive, got {batch_size}")

    T = schedule.total_steps
    # Planned steps 0..T-1 span the whole schedule, so the last one is all-direct
    scale = T / (T - 1) if T > 1 else 0.0
    fractions = np.array([cot_fraction(schedule, min(s * scale, T)) for s in range(T)])

    rng = np.random.default_rng(seed)
    expected = batch_size * fractions
    floor = np.floor(expected)
    n_cot = (floor + (rng.random(T) < expected - floor)).astype(int)

    steps = tuple(
        PlanStep(step=s, n_cot=int(n), n_direct=batch_size - int(n)) for s, n in enumerate(n_cot)
    )
    logger.debug("planned %d steps, %d CoT records in total", T, int(n_cot.sum()))
    return MixPlan(
        schedule=schedule,
        batch_size=batch_size,
        seed=seed,
        steps=steps,
        fractions=tuple(float(f) for f in fractions),
    )


def derive_direct(record: InstructionRecord) -> InstructionRecord:
    """The direct-answer twin of a CoT record"""
    if not record.has_cot:
        raise RenderError(record.record_id, "no reasoning steps to strip")
    return replace(
        record,
        record_id=record.record_id + DIRECT_SUFFIX,
        cot_steps=None,
        metadata={**record.metadata, "derived_direct": True},
    )


def iter_batches(
    plan: MixPlan, records: Sequence[InstructionRecord], seed: int
) -> Iterator[list[RenderedExample]]:
    """Yield one mixed batch per planned step, cycling over a seeded shuffle of the records"""
    pool = [record for record in records if record.has_cot]
    if not pool:
        raise RenderError("<batch>", "no records with reasoning steps to schedule")
    if len(pool) < len(records):
        logger.warning("skipping %d records without reasoning steps", len(records) - len(pool))

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    cursor = 0

    def take() -> InstructionRecord:
        nonlocal order, cursor
        if cursor == len(order):
            order, cursor = rng.permutation(len(pool)), 0
        record = pool[order[cursor]]
        cursor += 1
        return record

    for step in plan.steps:
        batch = [to_example(take(), RenderMode.WITH_COT) for _ in range(step.n_cot)]
        batch.extend(
            to_example(derive_direct(take()), RenderMode.DIRECT_ANSWER)
            for _ in range(step.n_direct)
        )
        yield batch
