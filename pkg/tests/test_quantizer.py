import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gradcheck import numeric_grad, rel_error
from robustcodec.codec import build_standard, distortion_and_grads
from robustcodec.errors import ConfigError
from robustcodec.quantizer import (Codebook, hard_quantize, rate, soft_quantize,
                                   soft_quantize_grad, st_quantize)

CB3 = Codebook(np.array([-1.0, 0.0, 1.0]))


def test_hard_quantize_nearest():
    assert hard_quantize(np.array(0.4), CB3)[0] == 0.0
    assert hard_quantize(np.array(0.6), CB3)[0] == 1.0


def test_hard_quantize_tie_goes_down():
    v, i = hard_quantize(np.array(0.5), Codebook(np.array([0.0, 1.0])))
    assert v == 0.0 and i == 0


def test_codebook_validation():
    with pytest.raises(ConfigError):
        Codebook(np.array([]))
    with pytest.raises(ConfigError):
        Codebook(np.array([1.0]))
    with pytest.raises(ConfigError):
        Codebook(np.array([0.0, 0.0]))
    with pytest.raises(ConfigError):
        Codebook(np.array([0.0, 1.0]), temperature=0.0)


def test_default_codebook():
    cb = Codebook.uniform()
    assert cb.size == 12
    np.testing.assert_allclose(cb.centers, np.linspace(-1, 1, 12))


def test_soft_quantize_midpoint():
    cb = Codebook(np.array([0.0, 2.0]))
    assert soft_quantize(np.array(1.0), cb) == pytest.approx(1.0, abs=1e-15)


def test_soft_limit_low_temperature():
    cb = Codebook.uniform(temperature=1e-5)
    z = np.random.default_rng(0).uniform(-1, 1, 400)
    mids = 0.5 * (cb.centers[1:] + cb.centers[:-1])
    # the limit is pointwise; stay clear of the decision boundaries
    z = z[np.min(np.abs(z[:, None] - mids), axis=1) > 0.01]
    np.testing.assert_allclose(soft_quantize(z, cb), hard_quantize(z, cb)[0], atol=1e-6)


def test_soft_gap_shrinks_with_temperature():
    z = np.random.default_rng(1).uniform(-1.2, 1.2, 500)
    gaps = []
    for t in (1.0, 0.1, 0.01):
        cb = Codebook.uniform(temperature=t)
        gaps.append(np.linalg.norm(soft_quantize(z, cb) - hard_quantize(z, cb)[0]))
    assert gaps[0] > gaps[1] > gaps[2]


@pytest.mark.parametrize("temperature", [1.0, 0.1, 0.02])
def test_soft_gradient_finite_differences(temperature):
    rng = np.random.default_rng(2)
    cb = Codebook.uniform(temperature=temperature)
    for _ in range(100):
        z = rng.uniform(-1.3, 1.3, 4)
        num = numeric_grad(lambda v: float(np.sum(soft_quantize(v, cb))), z)
        assert rel_error(soft_quantize_grad(z, cb), num) <= 1e-4


def test_st_quantize_contract():
    z = np.random.default_rng(3).uniform(-1.5, 1.5, (5, 7))
    cb = Codebook.uniform()
    q = st_quantize(z, cb)
    hv, hi = hard_quantize(z, cb)
    assert np.array_equal(q.values, hv) and np.array_equal(q.indices, hi)
    up = np.random.default_rng(4).standard_normal(z.shape)
    assert np.array_equal(q.backward(up), up * soft_quantize_grad(z, cb))


def test_autoencoder_gradient_finite_and_nonzero():
    model = build_standard(6, 3, hidden=8, seed=0)
    x = np.random.default_rng(5).random((4, 6))
    _, grads, gx = distortion_and_grads(model, x)
    flat = np.concatenate([g.ravel() for g in grads])
    assert np.all(np.isfinite(flat)) and np.any(flat != 0)
    assert np.all(np.isfinite(gx))


def test_rate_values():
    assert rate(10, 12) == pytest.approx(35.85, abs=5e-3)
    assert rate(1, 2) == 1.0
    assert rate(8, Codebook.uniform()) == pytest.approx(28.68, abs=5e-3)
    with pytest.raises(ConfigError):
        rate(0, 12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(-5, 5)))
def test_hard_quantize_properties(z):
    cb = Codebook.uniform()
    v, i = hard_quantize(z, cb)
    assert np.all(np.isin(v, cb.centers))
    assert np.all((i >= 0) & (i < cb.size))
    assert np.array_equal(hard_quantize(v, cb)[0], v)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(-50, 50)))
def test_soft_output_in_hull(z):
    cb = Codebook.uniform()
    s = soft_quantize(z, cb)
    assert np.all(s >= cb.centers[0] - 1e-12) and np.all(s <= cb.centers[-1] + 1e-12)


def test_learnable_centers_gradient():
    cb = Codebook.uniform(4, learnable=True)
    z = np.random.default_rng(6).uniform(-1, 1, (3, 5))
    q = st_quantize(z, cb)
    up = np.random.default_rng(7).standard_normal(z.shape)
    g = q.center_grad(up, cb)
    expected = np.zeros(cb.size)
    for idx, u in zip(q.indices.ravel(), up.ravel()):
        expected[idx] += u
    np.testing.assert_allclose(g, expected, atol=1e-14)
