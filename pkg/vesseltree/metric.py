"""
Métrica Reeds-Shepp relaxada sobre R2 x P1.

    P(q, v)^2 = C(q)^2 * (|v . e_theta|^2 + |v ^ e_theta|^2 / eps^2 + xi^2 * |theta'|^2)

com e_theta = (cos theta, sin theta) e C = 1 / (1 + lambda W^2).
"""
import math
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .core import (GridSpec, Landmark, LiftedField, LiftedLandmark, MetricParams,
                   angular_distance, sample_lifted, wrap_theta)
from .errors import ConfigError

DEFAULT_MIN_SEP = math.pi / 8


@dataclass(frozen=True)
class CostField(LiftedField):
    """Campo de custo C. Estritamente positivo; em (0, 1] quando vem de um score."""

    def __post_init__(self):
        super().__post_init__()
        if not (self.values > 0).all():
            raise ConfigError("Cost field must be strictly positive everywhere.")


def cost_from_score(w: LiftedField, params: MetricParams) -> CostField:
    return CostField(w.spec, 1.0 / (1.0 + params.lambda_ * np.square(w.values)))


def orientation_tensor(theta, params: MetricParams):
    """Tensor M0(theta) da métrica com custo unitário, em coordenadas (x, y, theta)."""
    c, s = math.cos(theta), math.sin(theta)
    inv_eps2 = 1.0 / params.epsilon ** 2
    return np.array([
        [c * c + s * s * inv_eps2, c * s * (1.0 - inv_eps2), 0.0],
        [c * s * (1.0 - inv_eps2), s * s + c * c * inv_eps2, 0.0],
        [0.0, 0.0, params.xi ** 2],
    ])


def inverse_orientation_tensor(theta, params: MetricParams):
    c, s = math.cos(theta), math.sin(theta)
    eps2 = params.epsilon ** 2
    return np.array([
        [c * c + s * s * eps2, c * s * (1.0 - eps2), 0.0],
        [c * s * (1.0 - eps2), s * s + c * c * eps2, 0.0],
        [0.0, 0.0, 1.0 / params.xi ** 2],
    ])


def unit_norm(theta, dx, dy, dtheta, epsilon, xi):
    """Norma da métrica com C = 1. Versão escalar, usada nos laços internos do solver."""
    c, s = math.cos(theta), math.sin(theta)
    along = dx * c + dy * s
    side = dx * s - dy * c
    return math.sqrt(along * along + side * side / (epsilon * epsilon) + xi * xi * dtheta * dtheta)


def metric_eval(cost: LiftedField, params: MetricParams, point, velocity):
    """P_eps(point, velocity), com C amostrado por interpolação trilinear."""
    x, y, theta = point
    vx, vy, vtheta = velocity
    c_value = sample_lifted(cost, x, y, theta)
    return c_value * unit_norm(theta, vx, vy, vtheta, params.epsilon, params.xi)


def _local_maxima(profile):
    """Máximos locais de um perfil periódico em theta (platôs contam, perfis constantes não)."""
    left = np.roll(profile, 1)
    right = np.roll(profile, -1)
    is_max = (profile >= left) & (profile >= right) & ((profile > left) | (profile > right))
    return np.flatnonzero(is_max)


def _crossing_second_theta(profile, spec: GridSpec, first_k, min_sep):
    """Bin do maior máximo local a pelo menos min_sep do primeiro, ou None."""
    theta_first = first_k * spec.dtheta
    best_k = None
    for k in _local_maxima(profile):
        if angular_distance(k * spec.dtheta, theta_first) < min_sep - 1e-12:
            continue
        if best_k is None or profile[k] > profile[best_k]:
            best_k = int(k)
    return best_k


def inject_landmarks(w: LiftedField, landmarks: Sequence[Landmark],
                     min_sep: float = DEFAULT_MIN_SEP) -> Tuple[LiftedField, List[LiftedLandmark]]:
    """
    Atribui orientação a cada landmark e modifica W:
    - bifurcação: coluna W(x_b, .) saturada em 1 (acessível de qualquer orientação);
    - cruzamento: dois nós, no máximo global e no segundo máximo local >= min_sep;
    - extremidade: um nó no argmax de W(x, .).
    As orientações são sempre lidas do W original.
    """
    if not 0.0 < min_sep <= math.pi / 2:
        raise ConfigError(f"min_sep must lie in (0, pi/2], got {min_sep}.")
    spec = w.spec
    original = w.values
    modified = np.array(original)
    lifted = []

    for landmark in landmarks:
        i, j, _ = spec.node_of(landmark.x, landmark.y, 0.0)
        profile = original[i, j, :]
        first_k = int(np.argmax(profile))
        theta_first = first_k * spec.dtheta
        lifted.append(LiftedLandmark(landmark, theta_first, "argmax"))

        if landmark.kind == "bifurcation":
            modified[i, j, :] = 1.0
        elif landmark.kind == "crossing":
            second_k = _crossing_second_theta(profile, spec, first_k, min_sep)
            if second_k is None:
                logging.warning(f"Crossing at ({landmark.x:.1f}, {landmark.y:.1f}) has no second orientation peak; "
                                f"using theta + pi/2.")
                lifted.append(LiftedLandmark(landmark, wrap_theta(theta_first + math.pi / 2),
                                             "crossing-secondary", low_confidence=True))
            else:
                lifted.append(LiftedLandmark(landmark, second_k * spec.dtheta, "crossing-secondary"))

    logging.info(f"Injected {len(landmarks)} landmarks as {len(lifted)} lifted nodes.")
    return w.with_values(modified), lifted
