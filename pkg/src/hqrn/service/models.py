"""Request/response schemas for the service endpoints.

Matrices travel in the row-major {"rows", "cols", "re", "im"} wire format
shared with checkpoints and the CLI.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..linalg import matrix_from_json, matrix_to_json


class Matrix(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    re: list[float]
    im: list[float]

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Matrix":
        return cls(**matrix_to_json(arr))

    def to_array(self) -> np.ndarray:
        return matrix_from_json(self.model_dump())


class QrbParamsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    u_plus: Matrix
    u_minus: Matrix
    gamma: float
    bias: list[float]
    alpha: float
    top_dim: Optional[int] = None


class CrbParamsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    weight: Matrix
    bias: list[float]
    alpha: float


class QrbForwardRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rho: Matrix
    params: QrbParamsModel
    activation: Literal["relu", "sigmoid"] = "relu"


class QrbForwardResponse(BaseModel):
    rho: Matrix
    h: list[float]
    p_plus: list[float]
    p_minus: list[float]


class CrbForwardRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    y: list[float]
    params: CrbParamsModel
    activation: Literal["relu", "sigmoid"] = "relu"


class CrbForwardResponse(BaseModel):
    y: list[float]
    h: list[float]


class TrotterModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    order: int = 2
    steps: int = 64


class ReconstructRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    weight: Matrix
    bias: list[float]
    alpha: float = 0.5
    trotter: Optional[TrotterModel] = None


class ReconstructResponse(BaseModel):
    params: QrbParamsModel
    w_rec: Matrix
    report: dict


class SampleRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    probabilities: list[float]
    shots: int = Field(ge=1)
    seed: int = 0


class SampleResponse(BaseModel):
    frequencies: list[float]
    rng: str


class PptRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rho: Matrix


class PptResponse(BaseModel):
    entangled: bool
    min_partial_transpose_eigenvalue: float


class DatasetRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    werner: int = Field(ge=0)
    random_separable: int = Field(ge=0)
    adversarial: int = Field(ge=0)
    seed: int = 0


class LabeledStateModel(BaseModel):
    label: int
    family: str
    params: dict
    state: Matrix


class DatasetResponse(BaseModel):
    states: list[LabeledStateModel]


class ExperimentResponse(BaseModel):
    report: dict
    training: list[dict]
    metrics: list[dict]
    trajectories: list[dict]
    checkpoint: Optional[dict] = None


class HealthResponse(BaseModel):
    status: str
    version: str
