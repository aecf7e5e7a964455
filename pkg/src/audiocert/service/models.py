"""Request/response schemas for the HTTP service."""
from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ScoreCertifyRequest(BaseModel):
    """Certify a raw score matrix without touching audio or scorers."""
    scores: list[list[float]] = Field(description="k batches of n bona fide probabilities")
    n: int = Field(gt=0)
    k: int = Field(gt=0)
    delta: float = Field(default=0.9, gt=0, lt=1)
    alpha: float = Field(default=1e-6, gt=0, lt=1)
    direction: str = Field(default="bona_fide", pattern="^(bona_fide|spoof)$")
    epsilons: list[float] = Field(min_length=1)
    t_min_magnitude: float = Field(default=1e-4, gt=0)
    t_max_magnitude: float = Field(default=50.0, gt=0)
    bootstrap_seed: int = 0


class CertificateModel(BaseModel):
    bound: float
    t_star: float
    c_hat: float
    c_tilde: float
    error_prob: float
    certified: bool
    epsilon: float
    direction: str
    cv_method: str
    degenerate: bool


class ScoreCertifyResponse(BaseModel):
    certificates: list[CertificateModel]


class JobRequest(BaseModel):
    """A verification job as the TOML schema rendered to JSON, plus options."""
    job: dict
    overrides: list[str] = Field(default_factory=list)
    workers: int = Field(default=1, ge=1)
    base_dir: str = Field(default=".", description="directory manifest paths resolve against")


class JobAccepted(BaseModel):
    job_id: str
    status: str


class ItemModel(BaseModel):
    index: int
    path: str
    label: str | None = None
    initial_class: str | None = None
    counted_correct: bool
    bound: float | None = None
    t_star: float | None = None
    c_hat: float | None = None
    c_tilde: float | None = None
    error_prob: float | None = None
    cv_method: str | None = None
    degenerate: bool = False
    certified: dict[str, bool] = Field(default_factory=dict)
    error: str | None = None


class ReportModel(BaseModel):
    mode: str
    scorer: str
    seed: int
    epsilon_grid: list[float]
    budget: dict
    split_label: str | None = None
    pca: dict[str, float]
    binary_pca: dict[str, bool] | None = None
    mean_bound: float | None = None
    mean_error_prob: float | None = None
    items: list[ItemModel]
    config_echo: dict


class JobStatus(BaseModel):
    job_id: str
    status: str  # queued | running | done | failed
    error: str | None = None
    error_kind: str | None = None  # config | scorer | internal
    reports: list[ReportModel] | None = None
    artifacts: dict[str, str] | None = None  # filename -> rendered content


class ProbeRequest(BaseModel):
    scorer: str = Field(description="scorer spec, e.g. 'centroid' or 'bridge:python3 child.py'")


class ProbeResponse(BaseModel):
    name: str
    p_spoof: float
    p_bonafide: float
    deterministic: bool
    initial_class: str
    latency_ms: list[float]
