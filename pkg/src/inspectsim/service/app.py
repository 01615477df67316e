"""FastAPI application: job endpoints plus live environment sessions."""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ConfigError, PRESETS, preset_config, to_yaml
from ..dynamics import DynamicsError
from ..environment import EnvironmentError_, InspectionEnv, Observation, StepResult
from ..evaluation import EvaluationError
from ..policy import PolicyError
from . import jobs, schemas
from .jobs import JobError


def _observation_model(obs: Observation) -> schemas.ObservationModel:
    return schemas.ObservationModel(
        x=obs.x, y=obs.y, z=obs.z, vx=obs.vx, vy=obs.vy, vz=obs.vz,
        theta_s=obs.theta_s, points_inspected=obs.points_inspected,
        pcx=obs.pcx, pcy=obs.pcy, pcz=obs.pcz,
        vector=[float(v) for v in obs.vector])


def _step_model(result: StepResult, inspected_pct: float) -> schemas.StepResponse:
    r = result.reward
    return schemas.StepResponse(
        observation=_observation_model(result.observation),
        reward=schemas.RewardModel(r_points=r.r_points, r_dv=r.r_dv,
                                   r_crash=r.r_crash, total=r.total, w=r.w),
        done=result.done, reason=result.reason,
        new_points=len(result.new_point_indices),
        inspected_pct=inspected_pct)


def create_app() -> FastAPI:
    app = FastAPI(title="inspectsim", version=__version__)
    sessions: dict[str, InspectionEnv] = {}
    lock = threading.Lock()
    counter = {"next": 1}

    @app.exception_handler(ConfigError)
    @app.exception_handler(JobError)
    @app.exception_handler(DynamicsError)
    @app.exception_handler(EnvironmentError_)
    @app.exception_handler(EvaluationError)
    @app.exception_handler(PolicyError)
    def _domain_error(_request, exc):  # pragma: no cover - thin shim
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=400, content={
            "error": type(exc).__name__, "detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/config/default", response_model=schemas.ConfigResponse)
    def config_default(preset: str = "default") -> schemas.ConfigResponse:
        if preset not in PRESETS:
            raise HTTPException(status_code=400, detail=(
                f"unknown preset {preset!r}; expected one of {PRESETS}"))
        cfg = preset_config(preset)
        return schemas.ConfigResponse(preset=preset, yaml=to_yaml(cfg),
                                      config=cfg.model_dump(mode="json"))

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(request: schemas.TrainRequest) -> schemas.TrainResponse:
        config = jobs.build_run_config(request.config, request.preset)
        manifest, path = jobs.run_training(config, request.seeds,
                                           request.output_dir, request.dry_run)
        return schemas.TrainResponse(manifest=manifest, manifest_path=str(path))

    @app.post("/eval", response_model=schemas.EvalResponse)
    def evaluate(request: schemas.EvalRequest) -> schemas.EvalResponse:
        config = jobs.build_run_config(request.config, request.preset)
        doc, report_path, log_paths = jobs.run_eval(
            config, request.checkpoints, request.trials, request.seeds,
            request.output_dir, request.collect_logs)
        return schemas.EvalResponse(report=doc, report_path=str(report_path),
                                    log_paths=[str(p) for p in log_paths])

    @app.post("/baseline", response_model=schemas.BaselineResponse)
    def baseline(request: schemas.BaselineRequest) -> schemas.BaselineResponse:
        config = jobs.build_run_config(request.config, request.preset)
        try:
            doc, report_path, log_paths = jobs.run_baseline(
                config, request.controller, request.gains, request.seeds,
                request.trials, request.output_dir, request.collect_logs)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return schemas.BaselineResponse(report=doc, report_path=str(report_path),
                                        log_paths=[str(p) for p in log_paths])

    @app.post("/export-plots", response_model=schemas.ExportPlotsResponse)
    def export_plots(request: schemas.ExportPlotsRequest) -> schemas.ExportPlotsResponse:
        tables, seeds = jobs.export_plots(request.run_dir, request.output_dir)
        return schemas.ExportPlotsResponse(tables=tables, seeds=seeds)

    # -- live environment sessions ----------------------------------------------

    @app.post("/sessions", response_model=schemas.SessionResponse)
    def create_session(request: schemas.SessionCreateRequest) -> schemas.SessionResponse:
        config = jobs.build_run_config(request.config, request.preset)
        env = InspectionEnv(cw=config.cw_params(), cfg=config.episode_config(),
                            material=config.illumination.to_material(),
                            light=config.illumination.to_light())
        obs = env.reset(seed=request.seed)
        with lock:
            session_id = f"s{counter['next']}"
            counter["next"] += 1
            sessions[session_id] = env
        return schemas.SessionResponse(session_id=session_id,
                                       observation=_observation_model(obs))

    def _get_session(session_id: str) -> InspectionEnv:
        with lock:
            env = sessions.get(session_id)
        if env is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return env

    @app.post("/sessions/{session_id}/reset", response_model=schemas.SessionResponse)
    def reset_session(session_id: str, request: schemas.SessionResetRequest | None = None
                      ) -> schemas.SessionResponse:
        env = _get_session(session_id)
        obs = env.reset(seed=request.seed if request else None)
        return schemas.SessionResponse(session_id=session_id,
                                       observation=_observation_model(obs))

    @app.post("/sessions/{session_id}/step", response_model=schemas.StepResponse)
    def step_session(session_id: str,
                     request: schemas.SessionStepRequest) -> schemas.StepResponse:
        env = _get_session(session_id)
        result = env.step(list(request.action))
        return _step_model(result, env.inspected_pct)

    @app.delete("/sessions/{session_id}", response_model=schemas.DeleteResponse)
    def delete_session(session_id: str) -> schemas.DeleteResponse:
        with lock:
            if session_id not in sessions:
                raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
            del sessions[session_id]
        return schemas.DeleteResponse(deleted=session_id)

    return app


app = create_app()
