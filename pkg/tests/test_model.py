import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lossfl.model import (
    ClientDataset, DivergenceError, ModelSpec, TrainHyper, evaluate, init_params,
    local_train, loss, loss_and_grad,
)
from lossfl.rng import stream, Purpose


def _data(x, y, tx=None, ty=None):
    x = np.asarray(x, float)
    y = np.asarray(y)
    return ClientDataset(x, y, x if tx is None else tx, y if ty is None else ty)


def _finite_diff(params, spec, x, y, h=1e-6):
    g = np.zeros_like(params)
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = h
        g[i] = (loss(params + e, spec, x, y) - loss(params - e, spec, x, y)) / (2 * h)
    return g


@pytest.mark.parametrize("features, classes, dim", [(60, 10, 610), (2, 2, 6)])
def test_init_logistic_is_zero(features, classes, dim):
    p = init_params(ModelSpec(features, classes))
    assert p.shape == (dim,)
    assert not p.any()


def test_init_mlp_deterministic():
    spec = ModelSpec(60, 10, "mlp", hidden_units=20)
    a, b = init_params(spec, seed=7), init_params(spec, seed=7)
    assert a.shape == (spec.dim,) and spec.dim == 61 * 20 + 21 * 10
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, init_params(spec, seed=8))


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(0, 10)
    with pytest.raises(ValueError):
        ModelSpec(5, 1)


def test_zero_epochs_rejected():
    with pytest.raises(ValueError, match="E must be >= 1"):
        TrainHyper(local_epochs=0)


@pytest.mark.parametrize("epochs", [1, 3])
def test_zero_lr_is_identity(epochs):
    spec = ModelSpec(3, 3)
    rng = np.random.default_rng(0)
    data = _data(rng.normal(size=(17, 3)), rng.integers(0, 3, 17))
    p0 = rng.normal(size=spec.dim)
    p1, _ = local_train(p0, data, TrainHyper(0.0, epochs, 4), stream(0, Purpose.TRAIN), spec)
    np.testing.assert_array_equal(p0, p1)


def test_single_sample_step_matches_hand_computation():
    # zero params: p = (1/2, 1/2); dz = p - onehot(1) = (1/2, -1/2)
    # grad W = outer(x, dz), grad b = dz; one step of lr 0.1
    spec = ModelSpec(2, 2)
    data = _data([[1.0, 2.0]], [1])
    p, f0 = local_train(init_params(spec), data, TrainHyper(0.1, 1, 1), stream(0, Purpose.TRAIN), spec)
    np.testing.assert_allclose(p, [-0.05, 0.05, -0.1, 0.1, -0.05, 0.05], rtol=0, atol=1e-15)
    assert f0 == pytest.approx(math.log(2))


def test_local_loss_is_at_input_params():
    spec = ModelSpec(3, 3)
    rng = np.random.default_rng(1)
    data = _data(rng.normal(size=(30, 3)), rng.integers(0, 3, 30))
    p0 = rng.normal(size=spec.dim)
    p1, f = local_train(p0, data, TrainHyper(0.1, 2, 5), stream(1, Purpose.TRAIN), spec)
    assert f == pytest.approx(loss(p0, spec, data.train_x, data.train_y), rel=1e-12)
    assert loss(p1, spec, data.train_x, data.train_y) < f


def test_local_train_deterministic():
    spec = ModelSpec(4, 3)
    rng = np.random.default_rng(2)
    data = _data(rng.normal(size=(23, 4)), rng.integers(0, 3, 23))
    out = [local_train(np.zeros(spec.dim), data, TrainHyper(0.1, 2, 5), stream(9, Purpose.TRAIN, 3, 1), spec)
           for _ in range(2)]
    assert out[0][0].tobytes() == out[1][0].tobytes()
    assert out[0][1] == out[1][1]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts():
    spec = ModelSpec(2, 2)
    data = _data([[1e300, 1e300], [-1e300, 1e300]], [0, 1])
    with pytest.raises(DivergenceError):
        local_train(np.zeros(spec.dim), data, TrainHyper(1e10, 1, 1), stream(0, Purpose.TRAIN), spec)


@pytest.mark.parametrize("kind", ["logistic", "mlp"])
@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(kind, seed):
    rng = np.random.default_rng(seed)
    spec = ModelSpec(3, 3, kind, hidden_units=4)
    x = rng.normal(size=(5, 3))
    y = rng.integers(0, 3, 5)
    p = rng.normal(scale=0.5, size=spec.dim)
    _, g = loss_and_grad(p, spec, x, y)
    fd = _finite_diff(p, spec, x, y)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-4


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_gradient_property(seed):
    rng = np.random.default_rng(seed)
    spec = ModelSpec(3, 3)
    x = rng.normal(size=(5, 3))
    y = rng.integers(0, 3, 5)
    p = rng.normal(size=spec.dim)
    _, g = loss_and_grad(p, spec, x, y)
    fd = _finite_diff(p, spec, x, y)
    assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-3)


def test_evaluate_tie_break_lowest_class():
    spec = ModelSpec(2, 2)
    x = np.ones((4, 2))
    y = np.array([0, 1, 1, 0])
    acc, ce = evaluate(np.zeros(spec.dim), spec, x, y)
    assert acc == 0.5  # fraction labelled 0
    acc, _ = evaluate(np.zeros(spec.dim), spec, x, np.array([0, 0, 0, 1]))
    assert acc == 0.75


def test_evaluate_separable():
    spec = ModelSpec(2, 2)
    x = np.array([[1.0, 0.0], [2.0, 0.5], [-1.0, 0.0], [-2.0, -0.5]])
    y = np.array([1, 1, 0, 0])
    # logit_1 - logit_0 = 2 x_0
    p = np.array([-1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    acc, _ = evaluate(p, spec, x, y)
    assert acc == 1.0


@pytest.mark.parametrize("classes", [2, 3, 10])
def test_zero_params_loss_is_log_c(classes):
    spec = ModelSpec(4, classes)
    rng = np.random.default_rng(0)
    _, ce = evaluate(np.zeros(spec.dim), spec, rng.normal(size=(9, 4)), rng.integers(0, classes, 9))
    assert ce == pytest.approx(math.log(classes), rel=1e-12)


def test_evaluate_empty_rejected():
    spec = ModelSpec(2, 2)
    with pytest.raises(ValueError):
        evaluate(np.zeros(spec.dim), spec, np.zeros((0, 2)), np.zeros(0, dtype=int))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 30))
def test_evaluate_ranges(seed, n):
    rng = np.random.default_rng(seed)
    spec = ModelSpec(3, 4)
    acc, ce = evaluate(rng.normal(scale=3, size=spec.dim), spec, rng.normal(size=(n, 3)), rng.integers(0, 4, n))
    assert 0.0 <= acc <= 1.0
    assert ce >= 0.0
