"""
Gerador de imagens sintéticas de estruturas tubulares organizadas em árvores,
com a verdade de campo dos landmarks e das linhas centrais.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .core import Landmark
from .errors import ConfigError

BORDER_MARGIN = 2.0


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    tree_count: int = 1
    branch_depth: int = 2
    width_range: Tuple[float, float] = (2.0, 3.0)
    curvature_bound: float = 0.02
    crossing_probability: float = 0.0
    noise_std: float = 0.0
    width: int = 128
    height: int = 128
    segment_length: float = 0.0  # 0 = derivado do tamanho da imagem e da profundidade

    def __post_init__(self):
        object.__setattr__(self, 'width_range', tuple(float(w) for w in self.width_range))
        low, high = self.width_range
        if self.tree_count < 0 or self.curvature_bound < 0 or self.noise_std < 0 or self.segment_length < 0:
            raise ConfigError("SyntheticSpec values must be nonnegative.")
        if self.branch_depth < 1:
            raise ConfigError(f"branch_depth must be >= 1, got {self.branch_depth}.")
        if not 1.0 <= low <= high:
            raise ConfigError(f"width_range must satisfy 1 <= low <= high, got {self.width_range}.")
        if not 0.0 <= self.crossing_probability <= 1.0:
            raise ConfigError(f"crossing_probability must lie in [0, 1], got {self.crossing_probability}.")
        if self.width < 16 or self.height < 16:
            raise ConfigError(f"Synthetic images need at least 16x16 pixels, got {self.width}x{self.height}.")

    @property
    def branch_length(self):
        if self.segment_length > 0:
            return self.segment_length
        return max(4.0, (min(self.width, self.height) / 2.0 - 2 * BORDER_MARGIN) / (self.branch_depth + 0.5))


@dataclass
class Branch:
    tree: int
    level: int
    width: float
    points: np.ndarray = field(repr=False)
    children: List["Branch"] = field(default_factory=list)


@dataclass
class SyntheticResult:
    image: np.ndarray
    landmarks: List[Landmark]
    centerlines: List[Branch]

    def centerline_dicts(self):
        return [{'tree': b.tree, 'level': b.level, 'width': b.width, 'points': b.points.tolist()}
                for b in self.centerlines]


class _TreeDrawer:
    def __init__(self, spec: SyntheticSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.length = spec.branch_length

    def inside(self, point):
        x, y = point
        return (BORDER_MARGIN <= x <= self.spec.width - 1 - BORDER_MARGIN
                and BORDER_MARGIN <= y <= self.spec.height - 1 - BORDER_MARGIN)

    def walk(self, start, heading):
        """Poligonal de passos de 1 px com curvatura limitada. Para na margem da imagem."""
        points = [np.asarray(start, dtype=np.float64)]
        bound = self.spec.curvature_bound
        reached_end = True
        for _ in range(int(math.ceil(self.length))):
            heading += self.rng.uniform(-bound, bound) if bound > 0 else 0.0
            nxt = points[-1] + np.array([math.cos(heading), math.sin(heading)])
            if not self.inside(nxt):
                reached_end = False
                break
            points.append(nxt)
        return np.array(points), heading, reached_end

    def grow(self, tree, level, start, heading, width):
        points, heading, reached_end = self.walk(start, heading)
        branch = Branch(tree, level, width, points)
        if reached_end and level < self.spec.branch_depth and len(points) > 1:
            for side in (1.0, -1.0):
                turn = side * self.rng.uniform(math.pi / 6, math.pi / 3)
                child_width = max(self.spec.width_range[0], 0.8 * width)
                branch.children.append(self.grow(tree, level + 1, points[-1], heading + turn, child_width))
            # filho sem nenhum passo: o ponto não é uma bifurcação de verdade
            if any(len(child.points) < 2 for child in branch.children):
                branch.children = []
        return branch


def _flatten(branch):
    yield branch
    for child in branch.children:
        yield from _flatten(child)


def _tree_landmarks(root: Branch):
    """Raiz e folhas viram extremidades; pontos com filhos viram bifurcações."""
    landmarks = [Landmark(float(root.points[0][0]), float(root.points[0][1]), "endpoint")]
    for branch in _flatten(root):
        end = branch.points[-1]
        kind = "bifurcation" if branch.children else "endpoint"
        landmarks.append(Landmark(float(end[0]), float(end[1]), kind))
    return landmarks


def _segment_intersection(p1, p2, q1, q2):
    r, s = p2 - p1, q2 - q1
    denominator = r[0] * s[1] - r[1] * s[0]
    if abs(denominator) < 1e-12:
        return None
    diff = q1 - p1
    t = (diff[0] * s[1] - diff[1] * s[0]) / denominator
    u = (diff[0] * r[1] - diff[1] * r[0]) / denominator
    tolerance = 1e-9
    if -tolerance <= t <= 1.0 + tolerance and -tolerance <= u <= 1.0 + tolerance:
        return p1 + t * r
    return None


def polyline_intersections(a: np.ndarray, b: np.ndarray):
    """Pontos de interseção entre duas poligonais (duplicatas a menos de 0.5 px fundidas)."""
    found = []
    for m in range(len(a) - 1):
        lo_a, hi_a = np.minimum(a[m], a[m + 1]), np.maximum(a[m], a[m + 1])
        for n in range(len(b) - 1):
            if (np.minimum(b[n], b[n + 1]) > hi_a).any() or (np.maximum(b[n], b[n + 1]) < lo_a).any():
                continue
            point = _segment_intersection(a[m], a[m + 1], b[n], b[n + 1])
            if point is not None and all(np.hypot(*(point - f)) > 0.5 for f in found):
                found.append(point)
    return found


def _render(spec: SyntheticSpec, branches: List[Branch]):
    grid_x, grid_y = np.meshgrid(np.arange(spec.width), np.arange(spec.height), indexing='ij')
    pixels = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    image = np.zeros(spec.width * spec.height)
    for branch in branches:
        # amostragem densa da linha central para a distância pixel -> poligonal
        samples = [branch.points[0]]
        for start, end in zip(branch.points[:-1], branch.points[1:]):
            samples.extend(start + (end - start) * t for t in (0.25, 0.5, 0.75, 1.0))
        std = branch.width / 2.0
        distance, _ = cKDTree(np.array(samples)).query(pixels, distance_upper_bound=4 * std + 1)
        profile = np.where(np.isfinite(distance), np.exp(-np.square(distance) / (2 * std ** 2)), 0.0)
        image = np.maximum(image, profile)
    return image.reshape(spec.width, spec.height)


def synth_generate(spec: SyntheticSpec, rng: np.random.Generator = None) -> SyntheticResult:
    """Árvores aleatórias, determinísticas dada a semente."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    if spec.tree_count == 0:
        return SyntheticResult(np.zeros((spec.width, spec.height)), [], [])

    drawer = _TreeDrawer(spec, rng)
    reach = drawer.length * spec.branch_depth + BORDER_MARGIN + 1
    roots = []
    for tree in range(spec.tree_count):
        width = rng.uniform(*spec.width_range)
        if roots and rng.random() < spec.crossing_probability:
            # atravessa perpendicularmente o tronco de uma árvore anterior, pelo meio
            trunk = roots[int(rng.integers(len(roots)))].points
            middle = len(trunk) // 2
            tangent = trunk[min(middle + 1, len(trunk) - 1)] - trunk[max(middle - 1, 0)]
            heading = math.atan2(tangent[1], tangent[0]) + math.pi / 2
            direction = np.array([math.cos(heading), math.sin(heading)])
            start = trunk[middle] - 0.5 * drawer.length * direction
        else:
            heading = rng.uniform(0, 2 * math.pi)
            center = []
            for size in (spec.width, spec.height):
                low, high = reach, size - 1 - reach
                center.append(rng.uniform(low, high) if high > low else (size - 1) / 2.0)
            start = np.array(center)
        if not drawer.inside(start):
            start = np.clip(start, BORDER_MARGIN, [spec.width - 1 - BORDER_MARGIN, spec.height - 1 - BORDER_MARGIN])
        roots.append(drawer.grow(tree, 1, start, heading, width))

    landmarks = []
    for root in roots:
        landmarks.extend(_tree_landmarks(root))

    branches = [b for root in roots for b in _flatten(root)]
    for m, first in enumerate(branches):
        for second in branches[m + 1:]:
            if first.tree == second.tree:
                continue
            for point in polyline_intersections(first.points, second.points):
                landmarks.append(Landmark(float(point[0]), float(point[1]), "crossing"))

    image = _render(spec, branches)
    if spec.noise_std > 0:
        image = image + rng.normal(0.0, spec.noise_std, image.shape)
    image = np.clip(image, 0.0, 1.0)

    counts = {kind: sum(1 for l in landmarks if l.kind == kind) for kind in ("endpoint", "bifurcation", "crossing")}
    logging.info(f"Synthetic image {spec.width}x{spec.height}: {spec.tree_count} trees, landmarks {counts}.")
    return SyntheticResult(image, landmarks, branches)
