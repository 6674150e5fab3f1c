import numpy as np
import pytest

from vesseltree import cache_manager
from vesseltree.core import GridSpec, Landmark, LiftedField, LiftedLandmark, MetricParams
from vesseltree.metric import CostField


def lifted_at(x, y, theta=0.0, kind="endpoint"):
    return LiftedLandmark(Landmark(float(x), float(y), kind), float(theta))


def flat_cost(spec, value=1.0):
    return CostField(spec, np.full(spec.shape, float(value)))


def smooth_random_cost(spec, seed, low=0.5, high=1.5):
    """Campo de custo suave e positivo: ruído uniforme filtrado e reescalado para [low, high]."""
    from scipy import ndimage
    rng = np.random.default_rng(seed)
    noise = ndimage.gaussian_filter(rng.uniform(size=spec.shape), sigma=(2, 2, 1), mode='wrap')
    noise = (noise - noise.min()) / (noise.max() - noise.min())
    return CostField(spec, low + (high - low) * noise)


def segment_distance(grid_x, grid_y, start, end):
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    direction = end - start
    t = ((grid_x - start[0]) * direction[0] + (grid_y - start[1]) * direction[1]) / direction.dot(direction)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(grid_x - (start[0] + t * direction[0]), grid_y - (start[1] + t * direction[1]))


def segments_image(width, height, segments, std=1.0):
    """Imagem (width, height) com perfil gaussiano em torno de cada segmento ((x0, y0), (x1, y1))."""
    grid_x, grid_y = np.meshgrid(np.arange(width), np.arange(height), indexing='ij')
    image = np.zeros((width, height))
    for start, end in segments:
        distance = segment_distance(grid_x, grid_y, start, end)
        image = np.maximum(image, np.exp(-distance ** 2 / (2 * std ** 2)))
    return image


def distance_to_segments(points, segments):
    """Distância de cada ponto (x, y) à união dos segmentos."""
    points = np.asarray(points, dtype=float)
    xs, ys = points[:, 0], points[:, 1]
    return np.min([segment_distance(xs, ys, start, end) for start, end in segments], axis=0)


Y_SEGMENTS = [((16, 4), (16, 16)), ((16, 16), (7, 27)), ((16, 16), (25, 27))]
Y_LANDMARKS = [
    Landmark(16.0, 4.0, "endpoint"),
    Landmark(16.0, 16.0, "bifurcation"),
    Landmark(7.0, 27.0, "endpoint"),
    Landmark(25.0, 27.0, "endpoint"),
]


@pytest.fixture
def small_spec():
    return GridSpec(8, 8, 8)


@pytest.fixture
def flat_params():
    return MetricParams(epsilon=1.0, xi=1.0, lambda_=1e3)


@pytest.fixture
def ridge_field():
    """W = 1 na linha y = 3, orientação theta = 0, numa grade 16x7x8; zero no resto."""
    spec = GridSpec(16, 7, 8)
    values = np.zeros(spec.shape)
    values[1:15, 3, 0] = 1.0
    return LiftedField(spec, values)


@pytest.fixture
def tmp_cache(monkeypatch, tmp_path):
    directory = tmp_path / "cache"
    monkeypatch.setattr(cache_manager, 'CACHE_DIR', str(directory))
    return directory
