"""
Tipos de domínio compartilhados: a grade de posições e orientações, campos levantados,
landmarks e os parâmetros da métrica.

Layout dos arrays: `values[i, j, k]` com x = i * spacing, y = j * spacing e
theta = k * pi / n_theta (x-major, o eixo theta varia mais rápido).
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError

LANDMARK_CLASSES = ("endpoint", "bifurcation", "crossing")
LIFT_SOURCES = ("argmax", "crossing-secondary")


def angular_distance(a, b):
    """Distância projetiva entre duas orientações (período pi), em [0, pi/2]."""
    delta = (a - b) % math.pi
    return min(delta, math.pi - delta)


def wrap_theta(theta):
    """Reduz um ângulo para [0, pi)."""
    theta = theta % math.pi
    # -1e-17 % pi devolve pi
    return 0.0 if theta >= math.pi else theta


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    n_theta: int
    spacing: float = 1.0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ConfigError(f"Grid needs at least 2x2 pixels, got {self.width}x{self.height}.")
        if self.n_theta < 4:
            raise ConfigError(f"n_theta must be >= 4, got {self.n_theta}.")
        if not self.spacing > 0:
            raise ConfigError(f"spacing must be positive, got {self.spacing}.")

    @property
    def shape(self):
        return (self.width, self.height, self.n_theta)

    @property
    def size(self):
        return self.width * self.height * self.n_theta

    @property
    def dtheta(self):
        return math.pi / self.n_theta

    @property
    def thetas(self):
        return np.arange(self.n_theta) * self.dtheta

    @property
    def extent(self):
        """Maior coordenada x e y válida, em pixels."""
        return ((self.width - 1) * self.spacing, (self.height - 1) * self.spacing)

    def contains(self, x, y):
        max_x, max_y = self.extent
        return 0.0 <= x <= max_x and 0.0 <= y <= max_y

    def check_inside(self, x, y):
        if not self.contains(x, y):
            max_x, max_y = self.extent
            raise DomainError(f"Position ({x:.2f}, {y:.2f}) outside the domain [0, {max_x}] x [0, {max_y}].")

    def theta_bin(self, theta):
        """Índice do bin de orientação mais próximo (periódico)."""
        return int(round(wrap_theta(theta) / self.dtheta)) % self.n_theta

    def node_of(self, x, y, theta):
        """Nó da grade mais próximo de (x, y, theta). Levanta DomainError fora do domínio."""
        self.check_inside(x, y)
        i = min(int(round(x / self.spacing)), self.width - 1)
        j = min(int(round(y / self.spacing)), self.height - 1)
        return i, j, self.theta_bin(theta)

    def position_of(self, i, j, k):
        return (i * self.spacing, j * self.spacing, (k % self.n_theta) * self.dtheta)

    def flat_index(self, i, j, k):
        return (i * self.height + j) * self.n_theta + (k % self.n_theta)

    def unflat(self, index):
        ij, k = divmod(index, self.n_theta)
        i, j = divmod(ij, self.height)
        return i, j, k


@dataclass(frozen=True)
class LiftedField:
    """Campo escalar sobre R2 x P1. Imutável depois de construído."""
    spec: GridSpec
    values: np.ndarray
    allow_infinite: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != self.spec.shape:
            raise ConfigError(f"Field shape {values.shape} does not match grid {self.spec.shape}.")
        if np.isnan(values).any():
            raise ConfigError("Lifted field contains NaN values.")
        if not self.allow_infinite and not np.isfinite(values).all():
            raise ConfigError("Lifted field contains non-finite values.")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def with_values(self, values, allow_infinite=None):
        return type(self)(self.spec, values, self.allow_infinite if allow_infinite is None else allow_infinite)


@dataclass(frozen=True)
class Landmark:
    x: float
    y: float
    kind: str
    confidence: float = 1.0

    def __post_init__(self):
        if self.kind not in LANDMARK_CLASSES:
            raise ConfigError(f"Unknown landmark class '{self.kind}'. Expected one of {LANDMARK_CLASSES}.")
        if not 0.0 <= self.confidence <= 1.0:
            raise ConfigError(f"Landmark confidence must lie in [0, 1], got {self.confidence}.")

    def to_dict(self):
        return {'x': float(self.x), 'y': float(self.y), 'class': self.kind, 'confidence': float(self.confidence)}

    @classmethod
    def from_dict(cls, data):
        return cls(x=float(data['x']), y=float(data['y']), kind=data['class'],
                   confidence=float(data.get('confidence', 1.0)))


@dataclass(frozen=True)
class LiftedLandmark:
    landmark: Landmark
    theta: float
    source: str = "argmax"
    low_confidence: bool = False

    def __post_init__(self):
        if not 0.0 <= self.theta < math.pi:
            raise ConfigError(f"Lifted landmark theta must lie in [0, pi), got {self.theta}.")
        if self.source not in LIFT_SOURCES:
            raise ConfigError(f"Unknown lift source '{self.source}'.")

    @property
    def position(self):
        return (self.landmark.x, self.landmark.y, self.theta)

    def to_dict(self):
        data = self.landmark.to_dict()
        data.update({'theta': float(self.theta), 'source': self.source, 'low_confidence': self.low_confidence})
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(landmark=Landmark.from_dict(data), theta=float(data['theta']),
                   source=data.get('source', 'argmax'), low_confidence=bool(data.get('low_confidence', False)))


@dataclass(frozen=True)
class MetricParams:
    """Parâmetros do tensor Reeds-Shepp relaxado e do custo C = 1 / (1 + lambda W^2)."""
    epsilon: float = 0.1
    xi: float = 1.0
    lambda_: float = 1e3

    def __post_init__(self):
        for name in ('epsilon', 'xi', 'lambda_'):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"MetricParams.{name} must be positive, got {value}.")

    @classmethod
    def for_grid(cls, spec: GridSpec, epsilon=0.1, xi: Optional[float] = None, lambda_=1e3):
        """Default xi = N_x / (2 pi): uma volta completa em theta custa meia largura da imagem."""
        if xi is None:
            xi = spec.width / (2 * math.pi)
        return cls(epsilon=epsilon, xi=xi, lambda_=lambda_)

    def to_dict(self):
        return {'epsilon': self.epsilon, 'xi': self.xi, 'lambda': self.lambda_}


def trilinear(values, spec: GridSpec, fi, fj, fk):
    """
    Interpolação trilinear vetorizada em índices fracionários da grade.
    Espacialmente fica presa à borda; em theta é periódica.
    """
    fi = np.clip(np.asarray(fi, dtype=np.float64), 0.0, spec.width - 1)
    fj = np.clip(np.asarray(fj, dtype=np.float64), 0.0, spec.height - 1)
    fk = np.mod(np.asarray(fk, dtype=np.float64), spec.n_theta)

    i0 = np.minimum(np.floor(fi).astype(int), spec.width - 2)
    j0 = np.minimum(np.floor(fj).astype(int), spec.height - 2)
    k0 = np.floor(fk).astype(int) % spec.n_theta
    k1 = (k0 + 1) % spec.n_theta
    ti, tj, tk = fi - i0, fj - j0, fk - np.floor(fk)

    total = np.zeros(np.broadcast(fi, fj, fk).shape)
    with np.errstate(invalid='ignore'):
        for di, wi in ((0, 1.0 - ti), (1, ti)):
            for dj, wj in ((0, 1.0 - tj), (1, tj)):
                for kk, wk in ((k0, 1.0 - tk), (k1, tk)):
                    weight = wi * wj * wk
                    sample = values[i0 + di, j0 + dj, kk]
                    total = total + np.where(weight > 0, weight * sample, 0.0)
    return total


def sample_lifted(lifted: LiftedField, x, y, theta):
    """Valor do campo em (x, y, theta) por interpolação trilinear; exato nos nós da grade."""
    spec = lifted.spec
    spec.check_inside(x, y)
    value = trilinear(lifted.values, spec, x / spec.spacing, y / spec.spacing, theta / spec.dtheta)
    return float(value)
