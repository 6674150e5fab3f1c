import numpy as np
import pytest

from vesseltree.errors import ConfigError
from vesseltree.synthetic import SyntheticSpec, polyline_intersections, synth_generate


def _kinds(result):
    return sorted(l.kind for l in result.landmarks)


def test_generation_is_deterministic():
    spec = SyntheticSpec(seed=5, tree_count=2, branch_depth=2, noise_std=0.05, crossing_probability=0.5)
    first, second = synth_generate(spec), synth_generate(spec)
    assert np.array_equal(first.image, second.image)
    assert first.landmarks == second.landmarks
    assert first.centerline_dicts() == second.centerline_dicts()
    assert not np.array_equal(first.image, synth_generate(SyntheticSpec(seed=6, tree_count=2)).image)


def test_single_branch_has_two_endpoints():
    result = synth_generate(SyntheticSpec(seed=1, branch_depth=1, curvature_bound=0.0))
    assert _kinds(result) == ["endpoint", "endpoint"]
    assert len(result.centerlines) == 1
    points = result.centerlines[0].points
    assert np.allclose(np.hypot(*np.diff(points, axis=0).T), 1.0)


def test_depth_two_tree_has_one_bifurcation():
    result = synth_generate(SyntheticSpec(seed=2, branch_depth=2))
    assert _kinds(result) == ["bifurcation", "endpoint", "endpoint", "endpoint"]
    assert [b.level for b in result.centerlines] == [1, 2, 2]
    bifurcation = next(l for l in result.landmarks if l.kind == "bifurcation")
    for child in result.centerlines[1:]:
        assert np.allclose(child.points[0], (bifurcation.x, bifurcation.y))


def test_trees_keep_their_identity():
    result = synth_generate(SyntheticSpec(seed=3, tree_count=3, branch_depth=2))
    assert {b.tree for b in result.centerlines} == {0, 1, 2}
    data = result.centerline_dicts()
    assert all(set(d) == {'tree', 'level', 'width', 'points'} for d in data)
    assert all(2.0 <= d['width'] <= 3.0 for d in data)


def test_no_trees_gives_blank_image():
    result = synth_generate(SyntheticSpec(tree_count=0, width=32, height=20))
    assert result.image.shape == (32, 20)
    assert not result.image.any()
    assert result.landmarks == [] and result.centerlines == []


def test_forced_crossing_is_reported_once():
    spec = SyntheticSpec(seed=4, tree_count=2, branch_depth=1, curvature_bound=0.0, crossing_probability=1.0)
    result = synth_generate(spec)
    crossings = [l for l in result.landmarks if l.kind == "crossing"]
    assert len(crossings) == 1
    assert _kinds(result).count("endpoint") == 4
    trunk = result.centerlines[0].points
    assert np.allclose((crossings[0].x, crossings[0].y), trunk[len(trunk) // 2], atol=1e-6)


def test_image_lies_in_unit_range():
    result = synth_generate(SyntheticSpec(seed=8, tree_count=2, noise_std=0.3, width=48, height=40))
    assert result.image.shape == (48, 40)
    assert result.image.min() >= 0.0 and result.image.max() <= 1.0
    clean = synth_generate(SyntheticSpec(seed=8, tree_count=1, width=48, height=40))
    assert clean.image.max() > 0.5


def test_polyline_intersections():
    a = np.array([[0.0, 0.0], [10.0, 10.0]])
    b = np.array([[0.0, 10.0], [10.0, 0.0]])
    points = polyline_intersections(a, b)
    assert len(points) == 1 and np.allclose(points[0], (5.0, 5.0))
    assert polyline_intersections(a, a + np.array([0.0, 3.0])) == []
    bent = np.array([[5.0, 0.0], [5.0, 5.0], [5.0, 10.0]])
    assert len(polyline_intersections(b, bent)) == 1


@pytest.mark.parametrize("kwargs", [
    {'branch_depth': 0},
    {'width_range': (3.0, 2.0)},
    {'width_range': (0.5, 2.0)},
    {'crossing_probability': 1.5},
    {'tree_count': -1},
    {'width': 8},
])
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        SyntheticSpec(**kwargs)
