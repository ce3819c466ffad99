"""FastAPI service wrapping the experiment harness.

Experiments are synchronous requests: the desk-scale runs this package
targets finish in seconds to a couple of minutes, so a job queue would be
overkill. Config errors map to 400; invariant findings are data, not errors.
"""
from __future__ import annotations

import json

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..harness import (
    ConfigError,
    ExperimentConfig,
    _SETTING_DEFAULTS,
    aggregate_csv_text,
    bundle_dict,
    check_invariants,
    result_from_bundle,
    rounds_csv_text,
    run_experiment,
    summary_json_text,
)
from ..policies import ALGORITHMS
from .schemas import (
    CheckItemModel,
    CheckRequest,
    CheckResponse,
    ExportRequest,
    ExportResponse,
    HealthResponse,
    RunRequest,
    RunResponse,
    SettingInfo,
    SettingsResponse,
)

_SETTING_BLURBS = {
    "linear": "box action set, one linear constraint, randomly sampled parameters",
    "convex-ball": "ball action set, ball constraint target, random constraint rows",
    "convex-box-star": "random finite star action set, box constraint target",
    "finite-star": "coordinate-direction star set with a single linear constraint",
}


def create_app(n_workers: int | None = None) -> FastAPI:
    app = FastAPI(title="safebandit", version=__version__)

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/settings", response_model=SettingsResponse)
    def settings() -> SettingsResponse:
        infos = [
            SettingInfo(name=name, d=defaults["d"], n=defaults["n"], description=_SETTING_BLURBS[name])
            for name, defaults in _SETTING_DEFAULTS.items()
        ]
        return SettingsResponse(settings=infos, algorithms=list(ALGORITHMS))

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        try:
            config = ExperimentConfig.from_dict(request.config)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        result = run_experiment(config, n_workers=n_workers)
        return RunResponse(
            rounds_csv=rounds_csv_text(result),
            aggregate_csv=aggregate_csv_text(result),
            summary=json.loads(summary_json_text(result)),
            bundle=bundle_dict(result),
        )

    @app.post("/check", response_model=CheckResponse)
    def check(request: CheckRequest) -> CheckResponse:
        try:
            report = check_invariants(
                request.setting,
                horizon=request.horizon,
                trials=request.trials,
                master_seed=request.master_seed,
                algos=tuple(request.algos) if request.algos else None,
                n_workers=n_workers,
            )
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return CheckResponse(
            setting=report.setting,
            passed=report.passed,
            checks=[CheckItemModel(**item.to_dict()) for item in report.checks],
        )

    @app.post("/export", response_model=ExportResponse)
    def export(request: ExportRequest) -> ExportResponse:
        try:
            result = result_from_bundle(request.bundle)
        except (ConfigError, KeyError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"bad results bundle: {exc}") from exc
        if request.format == "csv":
            files = {"rounds.csv": rounds_csv_text(result), "aggregate.csv": aggregate_csv_text(result)}
        else:
            files = {"summary.json": summary_json_text(result)}
        return ExportResponse(files=files)

    return app


app = create_app()
