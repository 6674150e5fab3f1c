import json
import math

import numpy as np
import pytest
from PIL import Image

from conftest import lifted_at
from vesseltree import data_io
from vesseltree.core import GridSpec, Landmark, LiftedField, MetricParams
from vesseltree.eikonal import DistanceMap, GeodesicPath
from vesseltree.errors import InputError
from vesseltree.graph import DistanceMatrix, VesselEdge, VesselTree
from vesseltree.landmarks import Heatmap
from vesseltree.lift import Trajectory


def test_lifted_container_layout(tmp_path):
    spec = GridSpec(3, 2, 4)
    values = np.arange(spec.size, dtype=np.float64).reshape(spec.shape) / 4.0
    path = str(tmp_path / "field.lft")
    data_io.write_lifted(path, LiftedField(spec, values))

    raw = (tmp_path / "field.lft").read_bytes()
    assert raw[:4] == b"LFT1"
    assert np.frombuffer(raw[4:16], dtype='<u4').tolist() == [3, 2, 4]
    assert len(raw) == 16 + 4 * spec.size
    # x-major: o segundo valor gravado é (i=0, j=0, k=1)
    assert np.frombuffer(raw[16:24], dtype='<f4').tolist() == [0.0, 0.25]

    restored = data_io.read_lifted(path)
    assert restored.spec == spec
    assert np.array_equal(restored.values, values)


def test_lifted_container_keeps_unreached_nodes(tmp_path):
    spec = GridSpec(2, 2, 4)
    values = np.ones(spec.shape)
    values[1, 0, 3] = np.inf
    path = str(tmp_path / "u.lft")
    data_io.write_lifted(path, LiftedField(spec, values, allow_infinite=True))
    assert np.frombuffer((tmp_path / "u.lft").read_bytes()[16:], dtype='<f4').max() == np.finfo(np.float32).max
    restored = data_io.read_lifted(path)
    assert restored.values[1, 0, 3] == np.inf
    assert np.isfinite(restored.values).sum() == spec.size - 1


def test_lifted_container_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.lft"
    bad.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(InputError):
        data_io.read_lifted(str(bad))
    truncated = tmp_path / "short.lft"
    truncated.write_bytes(b"LFT1" + np.array([2, 2, 4], dtype='<u4').tobytes() + bytes(8))
    with pytest.raises(InputError):
        data_io.read_lifted(str(truncated))
    with pytest.raises(InputError):
        data_io.read_lifted(str(tmp_path / "missing.lft"))


def test_distance_map_sidecar(tmp_path):
    spec = GridSpec(4, 3, 4)
    values = np.full(spec.shape, np.inf)
    values[0, 0, 0], values[1, 0, 0] = 0.0, 1.5
    params = MetricParams(0.5, 2.0, 10.0)
    distance_map = DistanceMap(LiftedField(spec, values, allow_infinite=True), lifted_at(0, 0), params, 2)
    path = str(tmp_path / "dist.lft")
    data_io.write_distance_map(path, distance_map)
    assert json.loads((tmp_path / "dist.lft.json").read_text())['params']['lambda'] == 10.0

    restored = data_io.read_distance_map(path)
    assert restored.seed == distance_map.seed
    assert restored.params == params
    assert restored.causality_violations == 2
    assert restored.value_at(lifted_at(1, 0)) == 1.5
    assert restored.finalized == 2


@pytest.mark.parametrize("bits, levels", [(8, 255), (16, 65535)])
def test_image_round_trip_and_orientation(tmp_path, bits, levels):
    rng = np.random.default_rng(40)
    image = rng.integers(0, levels + 1, size=(5, 3)) / levels
    path = str(tmp_path / f"img{bits}.png")
    data_io.write_image(path, image, bits=bits)

    with Image.open(path) as img:
        assert img.size == (5, 3)
        assert img.getpixel((3, 1)) == round(image[3, 1] * levels)
    restored = data_io.read_image(path)
    assert restored.shape == (5, 3)
    assert np.allclose(restored, image, atol=0.5 / levels)


def test_missing_image_is_input_error(tmp_path):
    with pytest.raises(InputError):
        data_io.read_image(str(tmp_path / "none.png"))


def test_crop_image_and_landmarks():
    image = np.arange(48, dtype=float).reshape(8, 6)
    cropped = data_io.crop_image(image, (2, 1, 4, 3))
    assert cropped.shape == (4, 3) and cropped[0, 0] == image[2, 1]
    assert data_io.crop_image(image, None) is image
    with pytest.raises(InputError):
        data_io.crop_image(image, (6, 0, 4, 3))

    landmarks = [Landmark(3.0, 2.0, "endpoint"), Landmark(7.0, 2.0, "crossing")]
    shifted = data_io.crop_landmarks(landmarks, (2, 1, 4, 3))
    assert shifted == [Landmark(1.0, 1.0, "endpoint")]


def test_trajectories_round_trip(tmp_path):
    tracks = [Trajectory(7, np.array([[1.0, 2.0, 0.5, 0.0, 0.0], [1.5, 2.0, 0.5, 0.0, 1.0]])),
              Trajectory(3, np.array([[4.0, 4.0, 0.0, 1.0, 0.0]]))]
    path = str(tmp_path / "tracks.csv")
    data_io.write_trajectories(path, tracks)
    assert (tmp_path / "tracks.csv").read_text().splitlines()[0] == "track_id,t,x,y,vx,vy"

    restored = data_io.read_trajectories(path)
    assert [t.track_id for t in restored] == [3, 7]
    assert np.array_equal(restored[1].points, tracks[0].points)


def test_trajectories_require_columns(tmp_path):
    path = tmp_path / "tracks.csv"
    path.write_text("track_id,x,y\n1,2,3\n")
    with pytest.raises(InputError):
        data_io.read_trajectories(str(path))


def test_landmarks_file(tmp_path):
    path = tmp_path / "landmarks.json"
    landmarks = [Landmark(1.0, 2.0, "bifurcation", 0.8), Landmark(5.5, 0.0, "endpoint")]
    data_io.write_landmarks(str(path), landmarks)
    assert json.loads(path.read_text())[0]['class'] == "bifurcation"
    assert data_io.read_landmarks(str(path)) == landmarks

    for content in ('[{"x": 1}]', '[{"x": 1, "y": 2, "class": "junction"}]', '{not json'):
        path.write_text(content)
        with pytest.raises(InputError):
            data_io.read_landmarks(str(path))


@pytest.mark.parametrize("name", ["heat.tif", "heat.png"])
def test_heatmap_round_trip(tmp_path, name):
    rng = np.random.default_rng(41)
    heatmap = Heatmap(rng.uniform(size=(4, 9, 7)))
    paths = data_io.write_heatmap(str(tmp_path / name), heatmap)
    assert len(paths) == (1 if name.endswith(".tif") else 4)
    restored = data_io.read_heatmap(str(tmp_path / name))
    assert restored.dims == (9, 7)
    assert np.allclose(restored.channels, heatmap.channels, atol=1e-4)


def test_matrix_round_trip(tmp_path):
    nodes = [lifted_at(1, 2, 0.5), lifted_at(3, 4)]
    matrix = DistanceMatrix(nodes, np.array([[0.0, math.inf], [math.inf, 0.0]]))
    path = str(tmp_path / "distances.csv")
    data_io.write_matrix(path, matrix)
    assert (tmp_path / "distances_nodes.json").exists()
    restored = data_io.read_matrix(path)
    assert restored.nodes == nodes
    assert np.array_equal(restored.d, matrix.d)


def test_trees_file(tmp_path):
    path = GeodesicPath(np.array([[3.0, 1.0, 0.0], [1.0, 1.0, 0.0]]), 2.0)
    tree = VesselTree(0, [0, 1], [VesselEdge(0, 1, 2.0, path)])
    target = str(tmp_path / "trees.json")
    data_io.write_trees(target, [tree])
    clusters = data_io.read_tree_polylines(target)
    assert clusters == [{'id': 0, 'nodes': [0, 1],
                         'edges': [{'i': 0, 'j': 1, 'weight': 2.0, 'polyline': [[3.0, 1.0, 0.0], [1.0, 1.0, 0.0]]}]}]

    (tmp_path / "other.json").write_text("{}")
    with pytest.raises(InputError):
        data_io.read_tree_polylines(str(tmp_path / "other.json"))
