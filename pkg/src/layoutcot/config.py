"""Pipeline configuration.

A configuration file is a flat list of ``key=value`` lines with dotted keys,
for example::

    mask_rate=0.2
    grid.image_side=448
    schedule.shape=piecewise
    schedule.knots=200:0.9,800:0.2
    task_mix.geometric_analysis=2

Unknown keys are an error. When any ``task_mix.*`` key is set the mix is
taken as given (unlisted tasks get weight 0); otherwise all tasks are
weighted equally.
"""

import logging
import os
import pathlib
from typing import Any

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .annealing import AnnealSchedule, ScheduleShape
from .exceptions import ConfigError
from .generators import (
    DEFAULT_K_NEIGHBORS,
    DEFAULT_MASK_RATE,
    DEFAULT_SAMPLE_K,
    MAX_MASK_RATE,
    GenerationSettings,
)
from .models import TaskKind
from .prompt import DEFAULT_IMAGE_SIDE, DEFAULT_MAX_LENGTH, DEFAULT_PATCH_SIDE, PatchGrid
from .xycut import DEFAULT_COLUMN_TOLERANCE, DEFAULT_MIN_GAP

# Set logger
logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "LAYOUTCOT_CONFIG"


def _uniform_mix() -> dict[TaskKind, float]:
    return dict.fromkeys(TaskKind, 1.0)


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    image_side: int = Field(DEFAULT_IMAGE_SIDE, ge=1)
    patch_side: int = Field(DEFAULT_PATCH_SIDE, ge=1)

    @model_validator(mode="after")
    def _divisible(self) -> "GridConfig":
        self.to_grid()
        return self

    def to_grid(self) -> PatchGrid:
        return PatchGrid(self.image_side, self.patch_side)


class ScheduleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    shape: ScheduleShape = ScheduleShape.LINEAR
    total_steps: int = Field(1000, ge=1)
    batch_size: int = Field(64, ge=1)
    knots: tuple[tuple[float, float], ...] = ()

    @field_validator("knots", mode="before")
    @classmethod
    def _parse_knots(cls, value: Any) -> Any:
        if not isinstance(value, str):
            return value
        knots = []
        for item in filter(None, (part.strip() for part in value.split(","))):
            step, sep, fraction = item.partition(":")
            if not sep:
                raise ValueError(f"knot {item!r} is not of the form step:fraction")
            knots.append((float(step), float(fraction)))
        return tuple(knots)

    @model_validator(mode="after")
    def _valid_schedule(self) -> "ScheduleConfig":
        self.to_schedule()
        return self

    def to_schedule(self) -> AnnealSchedule:
        return AnnealSchedule(self.total_steps, self.shape, self.knots)


class PipelineConfig(BaseModel):
    """Every knob of the dataset pipeline"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    min_gap: float = Field(DEFAULT_MIN_GAP, gt=0)
    column_tolerance: float = Field(DEFAULT_COLUMN_TOLERANCE, ge=0)
    mask_rate: float = Field(DEFAULT_MASK_RATE, gt=0, le=MAX_MASK_RATE)
    k_neighbors: int = Field(DEFAULT_K_NEIGHBORS, ge=1)
    sample_k: int = Field(DEFAULT_SAMPLE_K, ge=1)
    records_per_page: int = Field(1, ge=1)
    max_length: int = Field(DEFAULT_MAX_LENGTH, ge=1)
    truncate: bool = False
    recover_tables: bool = False
    seed: int = Field(0, ge=0, lt=2**64)
    grid: GridConfig = GridConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    task_mix: dict[TaskKind, float] = Field(default_factory=_uniform_mix)

    @field_validator("task_mix")
    @classmethod
    def _valid_mix(cls, value: dict[TaskKind, float]) -> dict[TaskKind, float]:
        if any(weight < 0 for weight in value.values()):
            raise ValueError("task weights must be non-negative")
        if not any(weight > 0 for weight in value.values()):
            raise ValueError("at least one task weight must be positive")
        return value

    def to_settings(self) -> GenerationSettings:
        return GenerationSettings(
            min_gap=self.min_gap,
            column_tolerance=self.column_tolerance,
            mask_rate=self.mask_rate,
            k_neighbors=self.k_neighbors,
            sample_k=self.sample_k,
            recover_tables=self.recover_tables,
        )

    def task_weights(self) -> tuple[list[TaskKind], np.ndarray]:
        """Tasks in declaration order with normalized sampling probabilities"""
        tasks = [task for task in TaskKind if self.task_mix.get(task, 0.0) > 0]
        weights = np.array([self.task_mix[task] for task in tasks], dtype=float)
        return tasks, weights / weights.sum()


def _unflatten(values: dict[str, str | None], source: pathlib.Path) -> dict[str, Any]:
    data: dict[str, Any] = {}
    for key, value in values.items():
        if value is None:
            raise ConfigError(f"{source}: key {key!r} has no value")
        *parents, leaf = key.split(".")
        node = data
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{source}: key {key!r} conflicts with {part!r}")
        if isinstance(node.get(leaf), dict):
            raise ConfigError(f"{source}: key {key!r} conflicts with its sub-keys")
        node[leaf] = value
    return data


def resolve_config_path(path: str | pathlib.Path | None) -> pathlib.Path | None:
    # Config path resolution:
    # 1. Command-line argument "--config"
    # 2. Environment variable LAYOUTCOT_CONFIG
    # 3. Built-in defaults
    if path is not None:
        return pathlib.Path(path)
    if os.environ.get(CONFIG_ENV_VAR):
        return pathlib.Path(os.environ[CONFIG_ENV_VAR])
    return None


def load_config(
    path: str | pathlib.Path | None = None, seed_override: int | None = None
) -> PipelineConfig:
    """Read, unflatten and validate a configuration file"""
    source = resolve_config_path(path)
    data: dict[str, Any] = {}
    if source is not None:
        if not source.is_file():
            raise ConfigError(f"config file {source} not found")
        data = _unflatten(dict(dotenv_values(source)), source)
        logger.debug("loaded %d config keys from %s", len(data), source)
    if seed_override is not None:
        data["seed"] = seed_override

    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(f"invalid configuration {source or '<defaults>'}:\n{err}") from err
