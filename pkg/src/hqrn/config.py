"""Experiment configuration models.

These pydantic models are the single schema for CLI config files and service
request bodies.  Validation is fail-closed: unknown fields are rejected.
"""

from __future__ import annotations

from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TrotterConfig(StrictModel):
    order: int = 2
    steps: int = 64

    @field_validator("order")
    @classmethod
    def _order_even(cls, v):
        if v < 2 or v % 2 != 0:
            raise ValueError("order must be a positive even integer")
        return v

    @field_validator("steps")
    @classmethod
    def _steps_positive(cls, v):
        if v < 1:
            raise ValueError("steps must be >= 1")
        return v


class OptimizerSettings(StrictModel):
    algorithm: Literal["rmsprop", "adam"] = "rmsprop"
    learning_rate: float = Field(3e-3, gt=0)
    weight_decay: float = Field(1e-4, ge=0)
    epochs: int = Field(50, ge=0)
    batch_size: int = Field(32, ge=0)


class GreedySettings(StrictModel):
    restarts: int = Field(5, ge=1)
    max_steps: int = Field(200, ge=1)
    learning_rate: float = Field(0.2, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    fd_step: float = Field(1e-4, gt=0)
    patience: int = Field(25, ge=1)
    beta: float = Field(5.0, gt=0)
    d_min: float = Field(0.1, gt=0)
    close_threshold: float = Field(1e-2, gt=0)
    close_penalty_scale: float = Field(100.0, gt=0)


class DigitsExperiment(StrictModel):
    """Digit-recognition run: classical training plus reconstructed evaluation."""

    task: Literal["digits"] = "digits"
    seed: int = 7
    out_dir: Optional[str] = None
    source: Literal["sklearn", "idx", "synthetic"] = "sklearn"
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_count: int = Field(1000, ge=1)
    test_count: int = Field(797, ge=1)
    state_dim: int = Field(64, ge=2)
    n_blocks: int = Field(10, ge=1)
    alpha: float = Field(0.5, gt=0, lt=1)
    optimizer: OptimizerSettings = OptimizerSettings()
    trotter: Optional[TrotterConfig] = None  # None = exact dilation
    shot_list: list[Optional[int]] = Field(default_factory=lambda: [10**4, 10**6, None])
    quantum_eval_every: int = Field(25, ge=1)

    @field_validator("state_dim")
    @classmethod
    def _power_of_two(cls, v):
        if v & (v - 1) != 0:
            raise ValueError("state_dim must be a power of two (dilation doubles it)")
        return v

    @field_validator("shot_list")
    @classmethod
    def _shots_positive(cls, v):
        for item in v:
            if item is not None and item < 1:
                raise ValueError("shot counts must be positive (null = infinite)")
        return v


class EntanglementExperiment(StrictModel):
    """Entanglement-classification run: greedy quantum blocks plus classical head."""

    task: Literal["entanglement"] = "entanglement"
    seed: int = 7
    out_dir: Optional[str] = None
    train_counts: tuple[int, int, int] = (70, 60, 130)  # werner, separable, adversarial
    test_counts: tuple[int, int, int] = (100, 150, 250)
    pair_subset: int = Field(50, ge=0)
    depth_sweep: list[int] = Field(default_factory=lambda: [0, 1, 2])
    alpha: float = Field(0.5, gt=0, lt=1)
    greedy: GreedySettings = GreedySettings()
    head_blocks: int = Field(10, ge=1)
    head_optimizer: OptimizerSettings = OptimizerSettings(
        algorithm="adam", learning_rate=1e-3, weight_decay=0.0, epochs=300, batch_size=32
    )
    trotter: Optional[TrotterConfig] = TrotterConfig()

    @field_validator("depth_sweep")
    @classmethod
    def _depths_ok(cls, v):
        if not v or any(d < 0 for d in v):
            raise ValueError("depth_sweep must be nonempty with nonnegative depths")
        return sorted(set(v))

    @field_validator("train_counts", "test_counts")
    @classmethod
    def _counts_ok(cls, v):
        if any(c < 0 for c in v):
            raise ValueError("family counts must be nonnegative")
        return v


class VerifyExperiment(StrictModel):
    """Cross-module verification sweep."""

    task: Literal["equivalence-suite"] = "equivalence-suite"
    seed: int = 0
    out_dir: Optional[str] = None
    trials_scale: float = Field(1.0, gt=0, le=10.0)


ExperimentConfig = Annotated[
    Union[DigitsExperiment, EntanglementExperiment, VerifyExperiment],
    Field(discriminator="task"),
]


class _ConfigHolder(BaseModel):
    config: ExperimentConfig


def parse_experiment_config(obj: dict) -> Union[DigitsExperiment, EntanglementExperiment, VerifyExperiment]:
    """Validate a config dict into the task-specific model (fail-closed)."""
    return _ConfigHolder(config=obj).config
