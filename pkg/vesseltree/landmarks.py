"""
Utilitários de heatmap em torno da detecção de landmarks: alvos de treino,
extração de máximos locais e pontuação (precision / recall / F1).
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .core import LANDMARK_CLASSES, Landmark
from .errors import ConfigError, DomainError

HEATMAP_CHANNELS = LANDMARK_CLASSES + ("relaxed",)


@dataclass(frozen=True)
class DetectionParams:
    sigma: float = 2.0
    r: float = 0.5
    nms_radius: int = 3
    match_radius: float = 5.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}.")
        if not 0.0 < self.r < 1.0:
            raise ConfigError(f"Threshold r must lie in (0, 1), got {self.r}.")
        if self.nms_radius < 1 or self.match_radius < 1:
            raise ConfigError("nms_radius and match_radius must be >= 1.")


@dataclass
class Heatmap:
    """Canais (endpoint, bifurcation, crossing, relaxed), cada um indexado [x, y]."""
    channels: np.ndarray

    def __post_init__(self):
        channels = np.asarray(self.channels, dtype=np.float64)
        if channels.ndim != 3 or channels.shape[0] != len(HEATMAP_CHANNELS):
            raise ConfigError(f"Heatmap needs shape (4, width, height), got {channels.shape}.")
        self.channels = np.clip(channels, 0.0, 1.0)

    @property
    def dims(self):
        return self.channels.shape[1], self.channels.shape[2]

    def channel(self, name):
        return self.channels[HEATMAP_CHANNELS.index(name)]


def heatmap_targets(landmarks: Sequence[Landmark], dims: Tuple[int, int],
                    params: DetectionParams = DetectionParams()) -> Heatmap:
    """Soma de gaussianas com pico 1 por classe, cortada em [0, 1]; canal relaxado = máximo das classes."""
    width, height = dims
    grid_x, grid_y = np.meshgrid(np.arange(width), np.arange(height), indexing='ij')
    channels = np.zeros((len(HEATMAP_CHANNELS), width, height))
    for landmark in landmarks:
        if not (0 <= landmark.x <= width - 1 and 0 <= landmark.y <= height - 1):
            raise DomainError(f"Landmark ({landmark.x}, {landmark.y}) outside heatmap {width}x{height}.")
        c = LANDMARK_CLASSES.index(landmark.kind)
        channels[c] += np.exp(-((grid_x - landmark.x) ** 2 + (grid_y - landmark.y) ** 2) / (2 * params.sigma ** 2))
    channels = np.minimum(channels, 1.0)
    channels[-1] = channels[:-1].max(axis=0)
    return Heatmap(channels)


def _channel_peaks(values, radius, threshold):
    values = np.where(values < threshold, 0.0, values)
    window = 2 * radius + 1
    candidates = np.argwhere((values > 0) & (values == ndimage.maximum_filter(values, size=window, mode='constant')))
    ordered = sorted(((-values[x, y], int(x), int(y)) for x, y in candidates))
    kept = []
    for negative_value, x, y in ordered:
        if all(max(abs(x - kx), abs(y - ky)) > radius for _, kx, ky in kept):
            kept.append((-negative_value, x, y))
    return kept


def extract_landmarks(heatmap: Heatmap, params: DetectionParams = DetectionParams()) -> List[Landmark]:
    """
    Máximos locais por canal de classe após o limiar r, com supressão de não-máximos
    (empates vão para o menor (x, y)). O canal relaxado não gera landmarks.
    """
    found = []
    for kind in LANDMARK_CLASSES:
        for value, x, y in _channel_peaks(heatmap.channel(kind), params.nms_radius, params.r):
            found.append(Landmark(float(x), float(y), kind, confidence=float(value)))
    logging.info(f"Extracted {len(found)} landmarks from heatmap {heatmap.dims}.")
    return found


def _scores(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {'precision': precision, 'recall': recall, 'f1': f1, 'tp': tp, 'fp': fp, 'fn': fn}


def _greedy_match(predicted, truth, radius, same_class=True):
    pairs = []
    for i, p in enumerate(predicted):
        for j, t in enumerate(truth):
            if same_class and p.kind != t.kind:
                continue
            distance = math.hypot(p.x - t.x, p.y - t.y)
            if distance <= radius:
                pairs.append((distance, i, j))
    pairs.sort()
    used_p, used_t, matches = set(), set(), []
    for distance, i, j in pairs:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        matches.append((i, j, distance))
    return matches


def match_and_score(predicted: Sequence[Landmark], truth: Sequence[Landmark],
                    params: DetectionParams = DetectionParams()) -> Dict:
    """
    Casamento guloso por distância crescente (mesma classe, cada ponto uma vez,
    distância <= match_radius). Relatório por classe, agregado e sem classe.
    """
    predicted, truth = list(predicted), list(truth)
    matches = _greedy_match(predicted, truth, params.match_radius)

    per_class = {}
    for kind in LANDMARK_CLASSES:
        tp = sum(1 for i, _, _ in matches if predicted[i].kind == kind)
        n_pred = sum(1 for p in predicted if p.kind == kind)
        n_true = sum(1 for t in truth if t.kind == kind)
        per_class[kind] = _scores(tp, n_pred - tp, n_true - tp)

    agnostic = _greedy_match(predicted, truth, params.match_radius, same_class=False)
    return {
        'per_class': per_class,
        'aggregate': _scores(len(matches), len(predicted) - len(matches), len(truth) - len(matches)),
        'class_agnostic': _scores(len(agnostic), len(predicted) - len(agnostic), len(truth) - len(agnostic)),
        'matches': [{'predicted': i, 'truth': j, 'distance': d} for i, j, d in matches],
    }
