"""HTTP facade over the core package.

Endpoints are synchronous wrappers: /mesh exports mesh JSON, /check-profile
runs the W2/W3 regularity checks, /run executes an experiment configuration
and returns the result table (optionally writing CSV/JSON to `out`).
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import potentials
from .experiments import (ExperimentConfig, ExperimentError, ProfileConfig,
                          run)
from .geometry import MESH_CAP, build_mesh

app = FastAPI(title="gasket-ids", version="0.1.0")


class MeshRequest(BaseModel):
    M: int = Field(ge=0)
    n: int = Field(ge=0)


class MeshResponse(BaseModel):
    M: int
    n: int
    vertices: list
    edges: list
    weights: list


class ProfileCheckRequest(BaseModel):
    profile: ProfileConfig
    M_list: list[int] = Field(default_factory=lambda: [1, 2])
    n: int = 2
    seed: int = 7


class ProfileCheckResponse(BaseModel):
    w3_holds: bool
    w3_witnesses: list
    w2_terms: list[float]
    w2_convergent_trend: bool


class RunResponse(BaseModel):
    config_hash: str
    spectra_rows: list
    mc_rows: list
    summary_rows: list
    written: list[str]


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/mesh", response_model=MeshResponse)
def mesh(req: MeshRequest) -> MeshResponse:
    if req.M + req.n > MESH_CAP:
        raise HTTPException(status_code=422,
                            detail=f"M + n exceeds mesh cap {MESH_CAP}")
    return MeshResponse(**build_mesh(req.M, req.n).to_json_dict())


@app.post("/check-profile", response_model=ProfileCheckResponse)
def check_profile(req: ProfileCheckRequest) -> ProfileCheckResponse:
    try:
        spec = req.profile.to_spec()
        window = build_mesh(max(req.M_list) + 2, req.n)
        w3 = potentials.check_W3(spec, req.M_list, window, seed=req.seed)
        w2 = potentials.check_W2(spec, max(req.M_list), window)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    witnesses = [{k: (list(v) if isinstance(v, tuple) else v)
                  for k, v in w.items()} for w in w3["witnesses"]]
    return ProfileCheckResponse(
        w3_holds=w3["holds"], w3_witnesses=witnesses,
        w2_terms=[float(x) for x in w2["partial_sums"]],
        w2_convergent_trend=w2["convergent_trend"])


@app.post("/run", response_model=RunResponse)
def run_experiment(config: ExperimentConfig) -> RunResponse:
    try:
        table = run(config)
    except ExperimentError as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from exc
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    written = []
    if config.out:
        from pathlib import Path
        out = Path(config.out)
        written = [str(out / f) for f in
                   ("spectra.csv", "montecarlo.csv", "summary.csv",
                    "results.json")]
    return RunResponse(config_hash=table.config_hash,
                       spectra_rows=table.spectra_rows,
                       mc_rows=table.mc_rows,
                       summary_rows=table.summary_rows,
                       written=written)
