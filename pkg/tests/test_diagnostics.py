import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnlab.diagnostics import (
    accuracy,
    attention_entropy,
    diagnostics,
    fit_pca,
    kl_mean,
    pca_trajectories,
    predictive_entropy,
    shared_frame_trajectories,
    stride_sample,
)
from attnlab.forward import forward
from attnlab.gradcheck import random_instance
from attnlab.gradients import backward


def _columns(rng, C, T):
    p = rng.random((C, T)) ** 3
    return p / p.sum(axis=0)


def test_uniform_attention_report():
    params, task = random_instance(0, T=5, d_x=3, d_k=2, d_v=2, C=3, causal=False)
    z = np.zeros_like(params.W_Q)
    params = params.replace(W_Q=z, W_K=z)
    tr = forward(params, task)
    rep = diagnostics(tr, backward(params, task, tr), task.y)
    np.testing.assert_allclose(rep.column_usage, 1.0)
    np.testing.assert_allclose(rep.attention_entropy, math.log(5))
    np.testing.assert_allclose(rep.value_norms, np.linalg.norm(tr.V, axis=0))
    assert rep.summary()["mean_loss"] == pytest.approx(tr.loss / 5)


def test_one_hot_attention_has_zero_entropy():
    np.testing.assert_array_equal(attention_entropy(np.eye(4)), 0.0)


@given(st.integers(0, 10_000), st.integers(1, 30), st.booleans())
@settings(max_examples=40)
def test_report_invariants(seed, T, causal):
    params, task = random_instance(seed, T=T, d_x=3, d_k=2, d_v=2, C=3, causal=causal, scale=1.5)
    tr = forward(params, task)
    g = backward(params, task, tr)
    rep = diagnostics(tr, g, task.y)
    assert rep.column_usage.sum() == pytest.approx(T)
    visible = np.arange(1, T + 1) if causal else np.full(T, T)
    assert np.all(rep.attention_entropy >= -1e-12)
    assert np.all(rep.attention_entropy <= np.log(visible) + 1e-12)
    pos = tr.Alpha > 0
    assert np.all(np.sign(rep.advantage[pos]) == -np.sign(g.dS[pos]))
    assert 0 <= rep.mean_predictive_entropy <= math.log(3) + 1e-12


def test_accuracy_examples(rng):
    y = np.array([0, 2, 1, 1])
    assert accuracy(np.eye(3)[:, y], y) == 1.0
    assert accuracy(np.eye(3)[:, (y + 1) % 3], y) == 0.0
    # ties resolve to the lowest class
    assert accuracy(np.full((3, 2), 1 / 3), [0, 1]) == 0.5
    yy = rng.integers(0, 8, size=20000)
    assert abs(accuracy(np.full((8, 20000), 1 / 8), yy) - np.mean(yy == 0)) < 1e-12
    assert abs(np.mean(yy == 0) - 1 / 8) < 0.01


def test_predictive_entropy_examples():
    assert predictive_entropy(np.full((8, 3), 1 / 8)) == pytest.approx(math.log(8))
    assert predictive_entropy(np.eye(4)) == 0.0
    col = np.zeros((8, 1))
    col[:2] = 0.5
    assert predictive_entropy(col) == pytest.approx(math.log(2))


def test_kl_examples(rng):
    p = _columns(rng, 8, 10)
    assert kl_mean(p, p) == pytest.approx(0.0, abs=1e-10)
    assert kl_mean(np.eye(8)[:, :1], np.full((8, 1), 1 / 8)) == pytest.approx(math.log(8))
    with pytest.raises(ValueError):
        kl_mean(p, p[:, :5])


def test_kl_clamps_zero_q():
    p = np.array([[0.5], [0.5]])
    q = np.array([[1.0], [0.0]])
    assert kl_mean(p, q) == pytest.approx(0.5 * math.log(0.5) + 0.5 * (math.log(0.5) - math.log(1e-12)))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100)
def test_gibbs_inequality(seed):
    rng = np.random.default_rng(seed)
    p, q = _columns(rng, 5, 7), _columns(rng, 5, 7)
    assert kl_mean(p, q) >= 0
    if not np.allclose(p, q):
        assert kl_mean(p, q) > 1e-10


def test_stride_sample():
    np.testing.assert_array_equal(stride_sample(2000, 200)[:3], [0, 10, 20])
    assert len(stride_sample(2000, 200)) == 200
    with pytest.raises(ValueError):
        stride_sample(10, 11)


def test_pca_no_movement(rng):
    V = rng.normal(size=(4, 30))
    proj = pca_trajectories(V, V.copy(), 10)
    np.testing.assert_allclose(proj.lengths, 0.0, atol=1e-12)


def test_pca_rank_one(rng):
    direction = rng.normal(size=(5, 1))
    start = direction * rng.normal(size=(1, 40))
    end = direction * rng.normal(size=(1, 40))
    proj = pca_trajectories(start, end, 20)
    assert proj.explained_variance[1] == pytest.approx(0.0, abs=1e-10)


@given(st.integers(0, 10_000), st.integers(2, 8))
@settings(max_examples=30)
def test_pca_variance_accounting(seed, d_v):
    rng = np.random.default_rng(seed)
    start = rng.normal(size=(d_v, 50)) * rng.random((d_v, 1)) * 3
    end = start + rng.normal(size=(d_v, 50))
    proj = pca_trajectories(start, end, 50)
    assert np.all(proj.explained_variance >= 0)
    assert proj.explained_variance[0] >= proj.explained_variance[1]
    # variance of the projected union equals the explained variance
    union = np.vstack([proj.start, proj.end])
    captured = np.sum(union.var(axis=0))
    assert captured / proj.total_variance == pytest.approx(proj.explained_variance.sum() / proj.total_variance, abs=1e-8)
    np.testing.assert_allclose(proj.components @ proj.components.T, np.eye(2), atol=1e-10)


def test_pca_errors(rng):
    with pytest.raises(ValueError):
        pca_trajectories(rng.normal(size=(1, 5)), rng.normal(size=(1, 5)), 5)
    with pytest.raises(ValueError):
        pca_trajectories(rng.normal(size=(3, 5)), rng.normal(size=(3, 6)), 5)


def test_shared_frame_matches_explicit_fit(rng):
    start = rng.normal(size=(4, 20))
    ends = {"em": start + 2 * rng.normal(size=(4, 20)), "sgd": start + 0.1 * rng.normal(size=(4, 20))}
    projs = shared_frame_trajectories(start, ends, 10)
    mean, comps, _, _ = fit_pca(np.concatenate([start, ends["em"], ends["sgd"]], axis=1))
    np.testing.assert_allclose(projs["em"].components, comps)
    np.testing.assert_allclose(projs["sgd"].start, projs["em"].start)
    assert np.median(projs["em"].lengths) > np.median(projs["sgd"].lengths)


def test_trace_replacement_keeps_report_consistent():
    params, task = random_instance(3, T=4, d_x=3, d_k=2, d_v=2, C=3, causal=False)
    tr = forward(params, task)
    sharp = replace(tr, Alpha=np.eye(4), attention_entropy=np.zeros(4))
    rep = diagnostics(sharp, backward(params, task, tr), task.y)
    np.testing.assert_array_equal(rep.attention_entropy, 0.0)
