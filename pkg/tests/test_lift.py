import math

import numpy as np
import pytest

from conftest import segments_image
from vesseltree import lift
from vesseltree.core import GridSpec, LiftedField
from vesseltree.errors import ConfigError, EmptyInputError
from vesseltree.lift import (DegenerateScoreWarning, FrangiParams, LiftKernelParams, Trajectory,
                             build_ulm_score, frangi_vesselness, is_degenerate_score, lift_image, normalize_score,
                             rotated_gaussian_kernel)

SMALL_KERNEL = LiftKernelParams(sigma_long=3.0, sigma_short=1.0, support_radius=9.0)


def test_kernel_params_validation():
    with pytest.raises(ConfigError):
        LiftKernelParams(1.0, 2.0, 10.0)
    with pytest.raises(ConfigError):
        LiftKernelParams(4.0, 1.0, 10.0)


def test_rotated_kernel_has_unit_mass():
    for theta in (0.0, 0.4, math.pi / 2):
        kernel = rotated_gaussian_kernel(theta, SMALL_KERNEL)
        assert kernel.sum() == pytest.approx(1.0)
        assert kernel.shape == (19, 19)


def test_lift_zero_image_is_zero_with_degenerate_warning():
    spec = GridSpec(20, 20, 8)
    with pytest.warns(DegenerateScoreWarning):
        lifted = lift_image(np.zeros((20, 20)), spec, SMALL_KERNEL)
    assert not lifted.values.any()


def test_lift_constant_image_is_constant_away_from_border():
    spec = GridSpec(40, 40, 8)
    lifted = lift_image(np.full((40, 40), 0.3), spec, SMALL_KERNEL, normalize=False)
    interior = lifted.values[9:31, 9:31, :]
    assert np.allclose(interior, 0.3, atol=1e-12)


def test_lift_rejects_mismatched_or_negative_images():
    spec = GridSpec(20, 20, 8)
    with pytest.raises(ConfigError):
        lift_image(np.zeros((20, 21)), spec, SMALL_KERNEL)
    with pytest.raises(ConfigError):
        lift_image(-np.ones((20, 20)), spec, SMALL_KERNEL)


def test_lift_diagonal_bar_peaks_at_its_orientation():
    spec = GridSpec(48, 48, 16)
    image = segments_image(48, 48, [((8, 8), (40, 40))])
    lifted = lift_image(image, spec, LiftKernelParams(4.0, 1.0, 12.0))
    expected = spec.theta_bin(math.pi / 4)
    centerline = [np.argmax(lifted.values[i, i, :]) for i in range(14, 35)]
    hits = sum(1 for k in centerline if k == expected)
    assert hits >= 0.95 * len(centerline)
    assert ((lifted.values >= 0) & (lifted.values <= 1)).all()


def test_lift_commutes_with_quarter_turn():
    spec = GridSpec(16, 16, 8)
    rng = np.random.default_rng(3)
    image = rng.uniform(size=(16, 16))
    params = LiftKernelParams(2.0, 1.0, 6.0)
    rotated_then_lifted = lift_image(np.rot90(image), spec, params).values
    lifted_then_rotated = np.roll(np.rot90(lift_image(image, spec, params).values, axes=(0, 1)),
                                  spec.n_theta // 2, axis=2)
    assert np.allclose(rotated_then_lifted, lifted_then_rotated, atol=1e-6)


def test_lift_is_independent_of_worker_count():
    spec = GridSpec(20, 20, 8)
    image = segments_image(20, 20, [((2, 5), (17, 12))])
    serial = lift_image(image, spec, SMALL_KERNEL, workers=1)
    parallel = lift_image(image, spec, SMALL_KERNEL, workers=4)
    assert np.array_equal(serial.values, parallel.values)


def test_normalize_score():
    spec = GridSpec(3, 2, 4)
    values = np.zeros(spec.shape)
    values[0, 0, 0], values[1, 1, 1], values[2, 0, 3] = 0.0, 5.0, 10.0
    normalized = normalize_score(LiftedField(spec, values))
    assert normalized.values[1, 1, 1] == pytest.approx(0.5)
    assert normalized.values[2, 0, 3] == pytest.approx(1.0)
    again = normalize_score(normalized)
    assert np.allclose(again.values, normalized.values)

    with pytest.warns(DegenerateScoreWarning):
        degenerate = normalize_score(LiftedField(spec, np.full(spec.shape, 4.0)))
    assert not degenerate.values.any()
    assert is_degenerate_score(degenerate)
    assert not is_degenerate_score(normalized)


# --- Frangi --------------------------------------------------------------------------

def _ridge(size=64, std=2.0):
    grid_y = np.arange(size)[None, :].repeat(size, axis=0)
    return np.exp(-(grid_y - size // 2) ** 2 / (2 * std ** 2))


def test_frangi_constant_image_is_zero():
    assert not frangi_vesselness(np.full((32, 32), 0.4), FrangiParams(scales=(2.0,))).any()


def test_frangi_ridge_crest_dominates_background():
    response = frangi_vesselness(_ridge(), FrangiParams(scales=(2.0,)))
    crest = response[32, 32]
    background = response[32, 32 + 12]
    assert crest > 0.1
    assert crest > 10 * background
    assert ((response >= 0) & (response <= 1)).all()


def test_frangi_blob_responds_less_than_ridge():
    grid_x, grid_y = np.meshgrid(np.arange(64), np.arange(64), indexing='ij')
    blob = np.exp(-((grid_x - 32) ** 2 + (grid_y - 32) ** 2) / (2 * 2.0 ** 2))
    params = FrangiParams(scales=(2.0,))
    assert frangi_vesselness(blob, params).max() < frangi_vesselness(_ridge(), params)[32, 32]


def test_frangi_invert_handles_dark_vessels():
    params = FrangiParams(scales=(2.0,))
    bright = frangi_vesselness(_ridge(), params)
    dark = frangi_vesselness(1.0 - _ridge(), FrangiParams(scales=(2.0,), invert=True))
    assert np.allclose(bright, dark, atol=1e-9)


def test_frangi_uses_one_c_for_all_scales():
    image = _ridge()
    scales = (1.0, 2.0, 3.0)
    peak = max(float(np.hypot(*lift._hessian_eigenvalues(image, s)).max()) for s in scales)
    combined = frangi_vesselness(image, FrangiParams(scales=scales))
    per_scale = [frangi_vesselness(image, FrangiParams(scales=(s,), c=0.5 * peak)) for s in scales]
    assert np.allclose(combined, np.maximum.reduce(per_scale), atol=1e-12)


def test_frangi_params_validation():
    with pytest.raises(ConfigError):
        FrangiParams(scales=())
    with pytest.raises(ConfigError):
        FrangiParams(scales=(1.0, -2.0))
    with pytest.raises(ConfigError):
        FrangiParams(beta=0.0)


# --- ULM -----------------------------------------------------------------------------

def _track(track_id, start, velocity, n, step=1.0):
    start, velocity = np.asarray(start, dtype=float), np.asarray(velocity, dtype=float)
    direction = velocity / np.hypot(*velocity)
    rows = [[*(start + direction * step * t), *velocity, float(t)] for t in range(n)]
    return Trajectory(track_id, np.array(rows))


def test_ulm_straight_track_along_x():
    spec = GridSpec(32, 20, 64)
    score = build_ulm_score([_track(1, (2, 10), (1.0, 0.0), 29)], spec)
    for x in range(4, 28):
        assert np.argmax(score.values[x, 10, :]) == 0


def test_ulm_is_invariant_to_velocity_reversal():
    spec = GridSpec(32, 20, 64)
    forward = [_track(1, (2, 10), (1.0, 0.3), 20), _track(2, (5, 3), (0.2, 1.0), 15)]
    backward = [Trajectory(t.track_id, t.points * np.array([1, 1, -1, -1, 1])) for t in forward]
    assert np.array_equal(build_ulm_score(forward, spec).values, build_ulm_score(backward, spec).values)


def test_ulm_crossing_tracks_keep_both_orientations():
    spec = GridSpec(32, 20, 64)
    tracks = [_track(1, (2, 10), (1.0, 0.0), 29), _track(2, (15, 2), (0.0, 1.0), 17)]
    profile = build_ulm_score(tracks, spec).values[15, 10, :]
    assert set(np.argsort(profile)[-2:].tolist()) == {0, 32}


def test_ulm_orientation_fidelity():
    spec = GridSpec(48, 48, 64)
    theta = 0.3
    velocity = (math.cos(theta), math.sin(theta))
    tracks = [_track(n, (4, 4 + 3 * n), velocity, 80, step=0.5) for n in range(8)]
    score = build_ulm_score(tracks, spec)
    expected = spec.theta_bin(theta)
    points = np.concatenate([t.points for t in tracks])
    pixels = {(int(round(x)), int(round(y))) for x, y in points[:, :2] if spec.contains(x, y)}
    hits = sum(1 for i, j in pixels if np.argmax(score.values[i, j, :]) == expected)
    assert hits >= 0.95 * len(pixels)


def test_ulm_without_usable_points():
    spec = GridSpec(10, 10, 8)
    with pytest.raises(EmptyInputError):
        build_ulm_score([], spec)
    still = Trajectory(1, np.array([[3.0, 3.0, 0.0, 0.0, 0.0], [4.0, 3.0, 0.0, 0.0, 1.0]]))
    with pytest.raises(EmptyInputError):
        build_ulm_score([still], spec)
