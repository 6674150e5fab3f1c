import json
import math

import pytest

from vesseltree.config import THREADS_ENV, build_config, load_config, resolve_thread_count
from vesseltree.core import GridSpec
from vesseltree.errors import ConfigError, InputError

MINIMAL = {'s_cluster': 2.5, 'inputs': {'image': 'vessels.png'}}


def test_minimal_config_gets_defaults():
    config = build_config(MINIMAL)
    assert config.grid.n_theta == 64
    assert config.metric.epsilon == 0.1
    assert config.metric.lambda_ == 1000.0
    assert config.outputs.overlay_formats == ['png', 'svg']
    assert config.solver.init_radius == 2

    params = config.metric_params(GridSpec(64, 32, 16))
    assert params.xi == pytest.approx(64 / (2 * math.pi))
    assert config.kernel_params().support_radius == 18.0
    assert config.detection_params().r == 0.5


def test_effective_config_uses_lambda_key():
    config = build_config({**MINIMAL, 'metric': {'lambda': 50.0, 'epsilon': 0.2}})
    assert config.metric.lambda_ == 50.0
    effective = config.effective()
    assert effective['metric']['lambda'] == 50.0
    assert 'lambda_' not in effective['metric']
    assert build_config(effective).effective() == effective


@pytest.mark.parametrize("data", [
    {'inputs': {'image': 'a.png'}},
    {'s_cluster': 0.0, 'inputs': {'image': 'a.png'}},
    {'s_cluster': 1.0, 'inputs': {}},
    {'s_cluster': 1.0, 'inputs': {'image': 'a.png', 'trajectories': 't.csv'}},
    {'s_cluster': 1.0, 'inputs': {'image': 'a.png', 'landmarks': 'l.json', 'heatmap': 'h.tif'}},
    {'s_cluster': 1.0, 'inputs': {'image': 'a.png', 'crop': [0, 0, 1, 5]}},
    {'s_cluster': 1.0, 'inputs': {'image': 'a.png'}, 'outputs': {'overlay_formats': ['gif']}},
    {'s_cluster': 1.0, 'inputs': {'image': 'a.png'}, 'metric': {'min_sep': 2.0}},
    {'s_cluster': 1.0, 'inputs': {'image': 'a.png'}, 'grid': {'n_theta': 64, 'theta_bins': 8}},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        build_config(data)


def test_overrides_win_over_file_values():
    config = build_config({**MINIMAL, 'grid': {'n_theta': 32}},
                          ['grid.n_theta=16', 'metric.epsilon=0.3', 'outputs.directory=results', 'inputs.crop=[1,2,30,40]'])
    assert config.grid.n_theta == 16
    assert config.metric.epsilon == 0.3
    assert config.outputs.directory == 'results'
    assert config.inputs.crop == [1, 2, 30, 40]
    assert MINIMAL['inputs'] == {'image': 'vessels.png'}


def test_malformed_overrides():
    with pytest.raises(ConfigError):
        build_config(MINIMAL, ['metric.epsilon'])
    with pytest.raises(ConfigError):
        build_config(MINIMAL, ['s_cluster.value=3'])
    with pytest.raises(ConfigError):
        build_config(MINIMAL, ['metric.epsilon=fast'])


def test_load_config_from_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(MINIMAL))
    config = load_config(str(path), ['s_cluster=4'])
    assert config.s_cluster == 4.0
    assert config.inputs.image == 'vessels.png'

    assert load_config(None, ['s_cluster=1', 'inputs.image=x.png']).inputs.image == 'x.png'

    with pytest.raises(InputError):
        load_config(str(tmp_path / "missing.json"))
    path.write_text("{broken")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_thread_count_cap(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert resolve_thread_count(3) == 3
    assert resolve_thread_count() >= 1

    monkeypatch.setenv(THREADS_ENV, "2")
    assert resolve_thread_count(8) == 2
    assert resolve_thread_count(1) == 1

    for value in ("abc", "0"):
        monkeypatch.setenv(THREADS_ENV, value)
        with pytest.raises(ConfigError):
            resolve_thread_count(4)
