"""Service endpoints.

Block-level operations are synchronous and cheap; the experiment endpoints
run the full desk-scale pipelines in-request (minutes at default sizes), so
clients should size their configs or timeouts accordingly.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..blocks import Activation, CrbParams, QrbParams, crb_forward, qrb_forward
from ..config import DigitsExperiment, EntanglementExperiment, VerifyExperiment
from ..digits_data import DataError
from ..entangle import (
    DatasetCounts,
    build_dataset,
    labeled_state_to_json,
    partial_transpose_b,
    ppt_is_entangled,
)
from ..linalg import DensityMatrix, SimplexVector
from ..reconstruct import TrotterSpec, reconstruct_block
from ..sampling import RNG_ALGORITHM, sample_distribution
from ..experiments import run_digits, run_entanglement, run_equivalence_suite
from . import models


def create_app() -> FastAPI:
    app = FastAPI(
        title="hqrn",
        version=__version__,
        description="Hybrid quantum residual network simulator and reconstruction service",
    )

    @app.get("/health", response_model=models.HealthResponse)
    def health():
        return models.HealthResponse(status="ok", version=__version__)

    @app.post("/blocks/qrb-forward", response_model=models.QrbForwardResponse)
    def qrb_forward_endpoint(req: models.QrbForwardRequest):
        try:
            params = QrbParams(
                u_plus=req.params.u_plus.to_array(),
                u_minus=req.params.u_minus.to_array(),
                gamma=req.params.gamma,
                bias=np.asarray(req.params.bias),
                alpha=req.params.alpha,
                top_dim=req.params.top_dim,
            )
            rho = DensityMatrix(req.rho.to_array())
            result = qrb_forward(rho, params, Activation(req.activation))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return models.QrbForwardResponse(
            rho=models.Matrix.from_array(result.rho.matrix),
            h=list(result.h.values),
            p_plus=list(result.p_plus.values),
            p_minus=list(result.p_minus.values),
        )

    @app.post("/blocks/crb-forward", response_model=models.CrbForwardResponse)
    def crb_forward_endpoint(req: models.CrbForwardRequest):
        try:
            weight = req.params.weight.to_array()
            if np.max(np.abs(weight.imag)) > 0:
                raise ValueError("classical weight matrix must be real")
            params = CrbParams(
                weight=weight.real,
                bias=np.asarray(req.params.bias),
                alpha=req.params.alpha,
            )
            result = crb_forward(SimplexVector(np.asarray(req.y)), params, Activation(req.activation))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return models.CrbForwardResponse(y=list(result.y.values), h=list(result.h.values))

    @app.post("/reconstruct/block", response_model=models.ReconstructResponse)
    def reconstruct_endpoint(req: models.ReconstructRequest):
        try:
            weight = req.weight.to_array()
            if np.max(np.abs(weight.imag)) > 0:
                raise ValueError("weight matrix must be real")
            spec = (
                None
                if req.trotter is None
                else TrotterSpec(order=req.trotter.order, steps=req.trotter.steps)
            )
            rec = reconstruct_block(weight.real, np.asarray(req.bias), req.alpha, spec)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return models.ReconstructResponse(
            params=models.QrbParamsModel(
                u_plus=models.Matrix.from_array(rec.params.u_plus),
                u_minus=models.Matrix.from_array(rec.params.u_minus),
                gamma=rec.params.gamma,
                bias=list(rec.params.bias),
                alpha=rec.params.alpha,
                top_dim=rec.params.top_dim,
            ),
            w_rec=models.Matrix.from_array(rec.w_rec.astype(np.complex128)),
            report=rec.report(),
        )

    @app.post("/sampling/distribution", response_model=models.SampleResponse)
    def sample_endpoint(req: models.SampleRequest):
        try:
            p = SimplexVector(np.asarray(req.probabilities))
            freq = sample_distribution(p, req.shots, req.seed)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return models.SampleResponse(frequencies=list(freq.values), rng=RNG_ALGORITHM)

    @app.post("/states/ppt", response_model=models.PptResponse)
    def ppt_endpoint(req: models.PptRequest):
        try:
            rho = DensityMatrix(req.rho.to_array())
            entangled = ppt_is_entangled(rho)
            pt = partial_transpose_b(rho.matrix)
            min_eig = float(np.linalg.eigvalsh((pt + pt.conj().T) / 2.0).min())
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return models.PptResponse(entangled=entangled, min_partial_transpose_eigenvalue=min_eig)

    @app.post("/datasets/entanglement", response_model=models.DatasetResponse)
    def dataset_endpoint(req: models.DatasetRequest):
        try:
            records = build_dataset(
                DatasetCounts(req.werner, req.random_separable, req.adversarial), req.seed
            )
        except (ValueError, RuntimeError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return models.DatasetResponse(
            states=[models.LabeledStateModel(**labeled_state_to_json(r)) for r in records]
        )

    @app.post("/experiments/digits", response_model=models.ExperimentResponse)
    def digits_endpoint(cfg: DigitsExperiment):
        try:
            return models.ExperimentResponse(**run_digits(cfg))
        except DataError as exc:
            raise HTTPException(status_code=422, detail=f"data error: {exc}")

    @app.post("/experiments/entanglement", response_model=models.ExperimentResponse)
    def entanglement_endpoint(cfg: EntanglementExperiment):
        return models.ExperimentResponse(**run_entanglement(cfg))

    @app.post("/experiments/verify", response_model=models.ExperimentResponse)
    def verify_endpoint(cfg: VerifyExperiment):
        return models.ExperimentResponse(**run_equivalence_suite(cfg))

    return app


app = create_app()
