"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class _Schema(BaseModel):
    model_config = ConfigDict(extra="forbid")


# -- shared fragments ----------------------------------------------------------

class ObservationModel(_Schema):
    x: float
    y: float
    z: float
    vx: float
    vy: float
    vz: float
    theta_s: float
    points_inspected: int
    pcx: float
    pcy: float
    pcz: float
    vector: list[float]


class RewardModel(_Schema):
    r_points: float
    r_dv: float
    r_crash: float
    total: float
    w: float


# -- requests ------------------------------------------------------------------

class TrainRequest(_Schema):
    config: dict | None = None          # full run-config document; default preset otherwise
    preset: str | None = None           # named preset when no document given
    seeds: list[int] = Field(default_factory=lambda: [0])
    output_dir: str | None = None       # overrides the config's output_dir
    dry_run: bool = False               # validate + write the manifest only


class EvalRequest(_Schema):
    checkpoints: list[str]
    config: dict | None = None
    preset: str | None = None
    trials: int | None = None
    seeds: list[int] | None = None      # evaluation master seeds, one per checkpoint cycle
    output_dir: str | None = None
    collect_logs: bool = False


class BaselineRequest(_Schema):
    controller: str = "sun_sync"
    gains: dict = Field(default_factory=dict)
    config: dict | None = None
    preset: str | None = None
    seeds: list[int] = Field(default_factory=lambda: [0])
    trials: int = 1
    output_dir: str | None = None
    collect_logs: bool = True


class ExportPlotsRequest(_Schema):
    run_dir: str
    output_dir: str | None = None


class SessionCreateRequest(_Schema):
    config: dict | None = None
    preset: str | None = None
    seed: int | None = None


class SessionResetRequest(_Schema):
    seed: int | None = None


class SessionStepRequest(_Schema):
    action: tuple[float, float, float]


# -- responses -----------------------------------------------------------------

class HealthResponse(_Schema):
    status: str
    version: str


class ConfigResponse(_Schema):
    preset: str
    yaml: str
    config: dict


class TrainResponse(_Schema):
    manifest: dict
    manifest_path: str


class EvalResponse(_Schema):
    report: dict
    report_path: str
    log_paths: list[str]


class BaselineResponse(_Schema):
    report: dict
    report_path: str
    log_paths: list[str]


class ExportPlotsResponse(_Schema):
    tables: dict[str, str]
    seeds: list[int]


class SessionResponse(_Schema):
    session_id: str
    observation: ObservationModel


class StepResponse(_Schema):
    observation: ObservationModel
    reward: RewardModel
    done: bool
    reason: str
    new_points: int
    inspected_pct: float


class DeleteResponse(_Schema):
    deleted: str
