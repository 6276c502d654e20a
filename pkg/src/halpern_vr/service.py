"""HTTP facade over the benchmark harness.

POST /experiments runs an experiment synchronously and returns the traces
plus the effective-parameter metadata; clients (the bundled CLI included)
write CSV/plots locally from the response.  Validation failures map to
422/400 and numerical divergence to 409 so thin clients can translate
them into exit codes.
"""

from __future__ import annotations

from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import harness
from .core import DivergenceError


class ExperimentRequest(BaseModel):
    problem: str = "matrix-game"
    algorithm: str = "vr-halpern"
    m: int = Field(default=100, ge=1)
    n: int = Field(default=8, ge=1)
    d: int = Field(default=4, ge=1)
    theta: float = 0.8
    L: float = Field(default=1.0, gt=0)
    problem_seed: int = 0
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    epochs: float = Field(default=100.0, gt=0)
    eta: Optional[float] = Field(default=None, gt=0)
    tau: Optional[float] = Field(default=None, gt=0)
    sampling: str = "uniform"
    inner_schedule: str = "practical"
    c0: float = Field(default=0.05, gt=0)
    log_stride: int = Field(default=1, ge=1)


class TraceRow(BaseModel):
    iteration: int
    oracle_epochs: float
    residual: float
    elapsed_ms: float


class SeedTrace(BaseModel):
    seed: int
    run_id: str
    records: List[TraceRow]


class ExperimentResponse(BaseModel):
    metadata: Dict[str, object]
    runs: List[SeedTrace]


app = FastAPI(
    title="halpern-vr",
    description="Variance-reduced anchored solvers for finite-sum monotone "
    "inclusions: benchmark runner.",
)


@app.get("/health")
def health() -> Dict[str, str]:
    return {"status": "ok"}


@app.get("/catalog")
def catalog() -> Dict[str, List[str]]:
    return {
        "problems": list(harness.PROBLEMS),
        "algorithms": list(harness.ALGORITHMS),
    }


@app.post("/experiments", response_model=ExperimentResponse)
def run_experiment(request: ExperimentRequest) -> ExperimentResponse:
    try:
        config = harness.config_from_mapping(request.model_dump())
        result = harness.run_experiment(config)
    except harness.ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    except DivergenceError as exc:
        raise HTTPException(status_code=409, detail=f"divergence: {exc}")
    runs = [
        SeedTrace(
            seed=seed,
            run_id=harness.run_id_for(config, seed),
            records=[
                TraceRow(
                    iteration=r.iteration,
                    oracle_epochs=r.oracle_epochs,
                    residual=r.residual,
                    elapsed_ms=r.elapsed_ms,
                )
                for r in trace
            ],
        )
        for seed, trace in result.runs
    ]
    return ExperimentResponse(metadata=result.metadata, runs=runs)
