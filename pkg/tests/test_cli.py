import json
import logging

import numpy as np
import pytest

from conftest import segments_image
from vesseltree import data_io
from vesseltree.cli import main, parse_crop
from vesseltree.core import GridSpec, Landmark, LiftedField
from vesseltree.errors import EXIT_CONFIG, EXIT_INPUT, ConfigError

LIFT_FLAGS = ['--n-theta', '8', '--sigma-long', '3', '--sigma-short', '1', '--support-radius', '9']


@pytest.fixture
def bar_image(tmp_path):
    path = str(tmp_path / "bar.png")
    data_io.write_image(path, segments_image(20, 16, [((3, 8), (16, 8))]), bits=16)
    return path


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_parse_crop():
    assert parse_crop("1,2,30,40") == [1, 2, 30, 40]
    assert parse_crop(None) is None
    for text in ("1,2,3", "a,b,c,d"):
        with pytest.raises(ConfigError):
            parse_crop(text)


def test_synth_writes_image_and_ground_truth(tmp_path, capsys):
    out = tmp_path / "synth"
    assert main(['synth', '--out', str(out), '--size', '48', '40', '--seed', '3', '--trees', '2']) == 0
    paths = _stdout_json(capsys)
    assert set(paths) == {'image', 'landmarks', 'centerlines'}
    assert data_io.read_image(paths['image']).shape == (48, 40)
    assert len(data_io.read_landmarks(paths['landmarks'])) >= 4
    assert {c['tree'] for c in data_io.read_json(paths['centerlines'])} == {0, 1}


def test_lift_then_cost(tmp_path, bar_image, capsys):
    score_path = str(tmp_path / "score.lft")
    assert main(['lift', '--image', bar_image, *LIFT_FLAGS, '--out', score_path]) == 0
    assert _stdout_json(capsys)['shape'] == [20, 16, 8]
    score = data_io.read_lifted(score_path)
    assert score.values.max() == pytest.approx(1.0, abs=1e-6)

    landmarks_path = str(tmp_path / "landmarks.json")
    data_io.write_landmarks(landmarks_path, [Landmark(3.0, 8.0, "endpoint"), Landmark(16.0, 8.0, "endpoint")])
    cost_path = str(tmp_path / "cost.lft")
    assert main(['cost', '--score', score_path, '--landmarks', landmarks_path, '--lambda', '100',
                 '--out', cost_path]) == 0
    outputs = _stdout_json(capsys)
    assert outputs['lifted_landmarks'] == str(tmp_path / "cost_landmarks.json")
    lifted = data_io.read_lifted_landmarks(outputs['lifted_landmarks'])
    assert [l.theta for l in lifted] == [0.0, 0.0]
    cost = data_io.read_lifted(cost_path).values
    assert cost.min() == pytest.approx(1 / 101, rel=1e-5)
    assert cost.max() <= 1.0


def test_lift_trajectories_needs_crop(tmp_path):
    tracks = str(tmp_path / "tracks.csv")
    (tmp_path / "tracks.csv").write_text("track_id,t,x,y,vx,vy\n1,0,2,2,1,0\n1,1,3,2,1,0\n")
    assert main(['lift', '--trajectories', tracks, '--out', str(tmp_path / "s.lft")]) == EXIT_CONFIG
    assert main(['lift', '--trajectories', tracks, '--n-theta', '8', '--crop', '0,0,8,6',
                 '--out', str(tmp_path / "s.lft")]) == 0
    assert data_io.read_lifted(str(tmp_path / "s.lft")).spec.shape == (8, 6, 8)


def test_track_exit_codes(tmp_path, caplog):
    caplog.set_level(logging.INFO)
    assert main(['track', '--config', str(tmp_path / "missing.json")]) == EXIT_INPUT

    assert main(['track', '--set', 's_cluster=1', '--set', 'inputs.image="x.png"', '--set', 'grid.n_theta=2',
                 '--out', str(tmp_path / "out")]) == EXIT_CONFIG

    caplog.clear()
    assert main(['track', '--set', 's_cluster=1', '--set', f'inputs.image="{tmp_path / "nowhere.png"}"',
                 '--out', str(tmp_path / "out")]) == EXIT_INPUT
    assert "[ingest]" in caplog.text


def test_track_runs_pipeline(tmp_path, bar_image, capsys):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        'grid': {'n_theta': 8},
        'lift': {'sigma_long': 3.0, 'sigma_short': 1.0, 'support_radius': 9.0},
        'metric': {'epsilon': 1.0},
        's_cluster': 10.0,
        'inputs': {'image': bar_image},
        'outputs': {'overlay_formats': ['png']},
    }))
    out = tmp_path / "run"
    assert main(['track', '--config', str(config_path), '--crop', '0,0,20,16', '--out', str(out)]) == 0
    summary = _stdout_json(capsys)
    assert summary['n_clusters'] == 0
    assert (out / "report.json").exists() and (out / "overlay.png").exists()


def test_eval_perfect_prediction(tmp_path, capsys):
    landmarks = [Landmark(4.0, 4.0, "endpoint"), Landmark(12.0, 9.0, "crossing")]
    path = str(tmp_path / "truth.json")
    data_io.write_landmarks(path, landmarks)
    out = str(tmp_path / "scores.json")
    assert main(['eval', '--predicted', path, '--truth', path, '--out', out]) == 0
    assert _stdout_json(capsys)['aggregate']['f1'] == 1.0
    assert len(data_io.read_json(out)['matches']) == 2


def test_oracle_on_flat_cost(tmp_path, capsys):
    spec = GridSpec(8, 8, 8)
    path = str(tmp_path / "flat.lft")
    data_io.write_lifted(path, LiftedField(spec, np.ones(spec.shape)))
    assert main(['oracle', '--cost', path, '--xi', '1', '--pairs', '3', '--seed', '1']) == 0
    summary = _stdout_json(capsys)
    assert len(summary['pairs']) == 3
    assert summary['max_relative_gap'] < 0.1


def test_render_overlay(tmp_path, bar_image, capsys):
    trees = str(tmp_path / "trees.json")
    data_io.write_json(trees, {'clusters': [{'id': 0, 'nodes': [0, 1], 'edges': [
        {'i': 0, 'j': 1, 'weight': 0.1, 'polyline': [[16.0, 8.0, 0.0], [3.0, 8.0, 0.0]]}]}]})
    out = str(tmp_path / "overlay.svg")
    assert main(['render', '--image', bar_image, '--trees', trees, '--out', out]) == 0
    assert _stdout_json(capsys) == {'overlay': out}
    assert (tmp_path / "overlay.svg").read_text().lstrip().startswith("<?xml")

    assert main(['render', '--image', bar_image, '--crop', '1,2,3', '--out', out]) == EXIT_CONFIG
