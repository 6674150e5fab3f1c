"""
Configuração do pipeline: um arquivo JSON validado por pydantic, mais sobrescritas
`--set secao.chave=valor` vindas da linha de comando (as flags vencem).
"""
import json
import logging
import math
import os
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .core import GridSpec, MetricParams
from .errors import ConfigError, InputError
from .landmarks import DetectionParams
from .lift import FrangiParams, LiftKernelParams

THREADS_ENV = 'VESSELTREE_THREADS'
OVERLAY_FORMATS = ('png', 'svg', 'html')


class Section(BaseModel):
    model_config = ConfigDict(extra='forbid', populate_by_name=True)


class GridConfig(Section):
    n_theta: int = Field(64, ge=4)
    spacing: float = Field(1.0, gt=0)


class FrangiConfig(Section):
    scales: List[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0], min_length=1)
    beta: float = Field(0.5, gt=0)
    c: Optional[float] = Field(None, gt=0)
    invert: bool = False


class LiftConfig(Section):
    sigma_long: float = 6.0
    sigma_short: float = 1.5
    support_radius: float = 18.0
    use_frangi: bool = False
    frangi: FrangiConfig = Field(default_factory=FrangiConfig)
    ulm_smoothing: float = Field(1.0, ge=0)


class MetricConfig(Section):
    epsilon: float = Field(0.1, gt=0)
    xi: Optional[float] = Field(None, gt=0)
    lambda_: float = Field(1000.0, gt=0, alias='lambda')
    min_sep: float = Field(math.pi / 8, gt=0, le=math.pi / 2)


class DetectionConfig(Section):
    sigma: float = 2.0
    r: float = 0.5
    nms_radius: int = 3
    match_radius: float = 5.0


class SolverConfig(Section):
    step: float = Field(0.25, gt=0)
    stop_radius: float = Field(1.0, gt=0)
    init_radius: int = Field(2, ge=0)
    cache_size: int = Field(16, ge=0)
    threads: Optional[int] = Field(None, ge=1)
    upper_rows_only: bool = False


class InputsConfig(Section):
    image: Optional[str] = None
    trajectories: Optional[str] = None
    landmarks: Optional[str] = None
    heatmap: Optional[str] = None
    crop: Optional[List[int]] = None

    @field_validator('crop')
    @classmethod
    def check_crop(cls, crop):
        if crop is not None and (len(crop) != 4 or crop[0] < 0 or crop[1] < 0 or crop[2] < 2 or crop[3] < 2):
            raise ValueError("crop must be [x, y, w, h] with x, y >= 0 and w, h >= 2")
        return crop

    @model_validator(mode='after')
    def check_sources(self):
        if (self.image is None) == (self.trajectories is None):
            raise ValueError("exactly one of inputs.image and inputs.trajectories is required")
        if self.landmarks is not None and self.heatmap is not None:
            raise ValueError("inputs.landmarks and inputs.heatmap are mutually exclusive")
        return self


class OutputsConfig(Section):
    directory: str = 'out'
    overlay_formats: List[str] = Field(default_factory=lambda: ['png', 'svg'])

    @field_validator('overlay_formats')
    @classmethod
    def check_formats(cls, formats):
        unknown = [f for f in formats if f not in OVERLAY_FORMATS]
        if unknown:
            raise ValueError(f"unknown overlay formats {unknown}; expected a subset of {list(OVERLAY_FORMATS)}")
        return formats


class PipelineConfig(Section):
    grid: GridConfig = Field(default_factory=GridConfig)
    lift: LiftConfig = Field(default_factory=LiftConfig)
    metric: MetricConfig = Field(default_factory=MetricConfig)
    detection: DetectionConfig = Field(default_factory=DetectionConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    s_cluster: float = Field(..., gt=0)
    inputs: InputsConfig
    outputs: OutputsConfig = Field(default_factory=OutputsConfig)
    seed: int = 0

    def grid_spec(self, width, height) -> GridSpec:
        return GridSpec(width, height, self.grid.n_theta, self.grid.spacing)

    def kernel_params(self) -> LiftKernelParams:
        return LiftKernelParams(self.lift.sigma_long, self.lift.sigma_short, self.lift.support_radius)

    def frangi_params(self) -> FrangiParams:
        f = self.lift.frangi
        return FrangiParams(tuple(f.scales), f.beta, f.c, f.invert)

    def metric_params(self, spec: GridSpec) -> MetricParams:
        return MetricParams.for_grid(spec, self.metric.epsilon, self.metric.xi, self.metric.lambda_)

    def detection_params(self) -> DetectionParams:
        d = self.detection
        return DetectionParams(d.sigma, d.r, d.nms_radius, d.match_radius)

    def effective(self):
        """Configuração efetiva, como entra no relatório."""
        return self.model_dump(by_alias=True, mode='json')


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides):
    """Aplica `secao.chave=valor`; o valor é lido como JSON quando possível."""
    for override in overrides or []:
        if '=' not in override:
            raise ConfigError(f"Override '{override}' must look like section.key=value.")
        dotted, text = override.split('=', 1)
        keys = dotted.strip().split('.')
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Override '{override}' does not address a config section.")
        node[keys[-1]] = _parse_value(text.strip())
    return data


def build_config(data: dict, overrides=None) -> PipelineConfig:
    data = apply_overrides(json.loads(json.dumps(data)), overrides)
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def load_config(path: Optional[str], overrides=None) -> PipelineConfig:
    data = {}
    if path:
        if not os.path.exists(path):
            raise InputError(f"Config file not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    config = build_config(data, overrides)
    logging.info(f"Configuration loaded{f' from {path}' if path else ''} with {len(overrides or [])} overrides.")
    return config


def resolve_thread_count(requested: Optional[int] = None) -> int:
    """Número de workers: o pedido (ou a contagem de CPUs), limitado por VESSELTREE_THREADS."""
    count = requested or os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{raw}'.")
        if cap < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{raw}'.")
        count = min(count, cap)
    return count
