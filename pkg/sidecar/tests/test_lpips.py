import numpy as np
import pytest

from gazesidecar.lpips import PerceptualDistance


@pytest.fixture(scope="module")
def metric():
    return PerceptualDistance(seed=0)


def test_identical_images_score_near_zero(metric):
    rng = np.random.default_rng(1)
    img = rng.uniform(size=(96, 128))
    assert metric.distance(img, img) <= 1e-6


def test_symmetric(metric):
    rng = np.random.default_rng(2)
    a = rng.uniform(size=(96, 128))
    b = rng.uniform(size=(96, 128))
    assert metric.distance(a, b) == pytest.approx(metric.distance(b, a), abs=1e-9)


def test_bounded_unit_interval(metric):
    rng = np.random.default_rng(3)
    for _ in range(5):
        a = rng.uniform(size=(64, 96))
        b = rng.uniform(size=(64, 96))
        assert 0.0 <= metric.distance(a, b) <= 1.0
    # maximally different structured fields stay bounded too
    assert 0.0 <= metric.distance(np.zeros((64, 96)), np.ones((64, 96))) <= 1.0


def test_different_images_score_positive(metric):
    rng = np.random.default_rng(4)
    a = rng.uniform(size=(64, 96))
    b = rng.uniform(size=(64, 96))
    assert metric.distance(a, b) > 0.0


def test_dimension_mismatch_rejected(metric):
    with pytest.raises(ValueError):
        metric.distance(np.zeros((32, 32)), np.zeros((32, 48)))


def test_rgb_inputs_accepted(metric):
    rng = np.random.default_rng(5)
    a = rng.uniform(size=(64, 96, 3))
    assert metric.distance(a, a) <= 1e-6
