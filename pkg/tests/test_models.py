import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.models import (
    Batch,
    Example,
    ModelSpec,
    accuracy,
    finite_diff_gradient,
    gradient,
    init_params,
    loss,
    param_count,
)

LINEAR_1D = ModelSpec("linear", 1)


def single(features, label):
    return Batch.from_examples([Example(np.asarray(features, dtype=np.float64), label)])


class TestParamCount:
    def test_linear(self):
        assert param_count(ModelSpec("linear", 2)) == 3

    def test_mlp(self):
        assert param_count(ModelSpec("mlp", 2, 4, 3)) == 2 * 4 + 4 + 4 * 3 + 3 == 27

    def test_logistic(self):
        assert param_count(ModelSpec("logistic", 10, 0, 2)) == 22


class TestSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ModelSpec("rnn", 4)

    def test_linear_multiclass_rejected(self):
        with pytest.raises(ValueError):
            ModelSpec("linear", 4, 0, 3)

    def test_mlp_needs_hidden(self):
        with pytest.raises(ValueError):
            ModelSpec("mlp", 4, 0, 3)

    def test_hidden_only_for_mlp(self):
        with pytest.raises(ValueError):
            ModelSpec("logistic", 4, 2, 3)


class TestLoss:
    def test_zero_weights_zero_label(self):
        assert loss(LINEAR_1D, np.zeros(2), single([1.0], 0.0)) == 0.0

    def test_squared_error(self):
        assert loss(LINEAR_1D, np.zeros(2), single([1.0], 2.0)) == 4.0

    def test_uniform_softmax_is_log2(self):
        spec = ModelSpec("logistic", 3, 0, 2)
        got = loss(spec, np.zeros(param_count(spec)), single([0.3, -1.0, 2.0], 1))
        assert got == pytest.approx(math.log(2.0), abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            loss(LINEAR_1D, np.zeros(5), single([1.0], 0.0))

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            Batch.from_examples([])
        with pytest.raises(ValueError):
            loss(LINEAR_1D, np.zeros(2), Batch(np.zeros((0, 1)), np.zeros(0)))


class TestGradient:
    def test_hand_linear(self):
        g = gradient(LINEAR_1D, np.zeros(2), single([1.0], 2.0))
        np.testing.assert_allclose(g, [-4.0, -4.0], rtol=0, atol=0)

    def test_stationary_point_is_zero(self):
        # least-squares solution of y = 3x + 1 is a stationary point
        x = np.array([[0.0], [1.0], [2.0]])
        y = 3.0 * x[:, 0] + 1.0
        g = gradient(LINEAR_1D, np.array([3.0, 1.0]), Batch(x, y))
        np.testing.assert_allclose(g, np.zeros(2), atol=1e-15)

    def test_batch_gradient_is_mean_of_per_example(self):
        rng = np.random.default_rng(7)
        spec = ModelSpec("mlp", 3, 4, 2)
        w = init_params(spec, 11)
        feats = rng.standard_normal((6, 3))
        labels = rng.integers(0, 2, size=6)
        full = gradient(spec, w, Batch(feats, labels))
        per = np.mean(
            [gradient(spec, w, Batch(feats[i : i + 1], labels[i : i + 1])) for i in range(6)],
            axis=0,
        )
        np.testing.assert_allclose(full, per, atol=1e-12)

    def test_loss_invariant_under_batch_permutation(self):
        rng = np.random.default_rng(3)
        spec = ModelSpec("logistic", 4, 0, 3)
        w = init_params(spec, 5)
        feats = rng.standard_normal((8, 4))
        labels = rng.integers(0, 3, size=8)
        perm = rng.permutation(8)
        a = loss(spec, w, Batch(feats, labels))
        b = loss(spec, w, Batch(feats[perm], labels[perm]))
        assert a == pytest.approx(b, rel=1e-14)


def random_instance(rng):
    kind = rng.choice(["linear", "logistic", "mlp"])
    d = int(rng.integers(1, 6))
    if kind == "linear":
        spec = ModelSpec("linear", d)
    elif kind == "logistic":
        spec = ModelSpec("logistic", d, 0, int(rng.integers(2, 5)))
    else:
        spec = ModelSpec("mlp", d, int(rng.integers(1, 5)), int(rng.integers(2, 5)))
    w = rng.standard_normal(param_count(spec))
    m = int(rng.integers(1, 9))
    feats = rng.standard_normal((m, d))
    if kind == "linear":
        labels = rng.standard_normal(m)
    else:
        labels = rng.integers(0, spec.num_classes, size=m)
    return spec, w, Batch(feats, labels)


class TestFiniteDiff:
    def test_hand_linear(self):
        fd = finite_diff_gradient(LINEAR_1D, np.zeros(2), single([1.0], 2.0))
        np.testing.assert_allclose(fd, [-4.0, -4.0], atol=1e-6)

    def test_constant_loss_gives_zero(self):
        # whatever w does to feature 0 is irrelevant when the feature is 0
        # and the label matches the bias exactly
        fd = finite_diff_gradient(LINEAR_1D, np.array([5.0, 0.0]), single([0.0], 0.0), h=1e-4)
        assert abs(fd[0]) < 1e-12

    def test_agreement_on_random_instances(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(100):
            spec, w, batch = random_instance(rng)
            g = gradient(spec, w, batch)
            fd = finite_diff_gradient(spec, w, batch)
            rel = np.max(np.abs(g - fd)) / (np.max(np.abs(g)) + 1e-12)
            worst = max(worst, rel)
        assert worst < 1e-4

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            finite_diff_gradient(LINEAR_1D, np.zeros(2), single([1.0], 0.0), h=0.0)


class TestInit:
    def test_deterministic_in_seed(self):
        spec = ModelSpec("mlp", 5, 3, 2)
        np.testing.assert_array_equal(init_params(spec, 9), init_params(spec, 9))
        assert not np.array_equal(init_params(spec, 9), init_params(spec, 10))

    def test_shape_and_finite(self):
        spec = ModelSpec("logistic", 7, 0, 4)
        w = init_params(spec, 0)
        assert w.shape == (param_count(spec),)
        assert np.isfinite(w).all()


class TestAccuracy:
    def test_perfect_and_zero(self):
        spec = ModelSpec("logistic", 2, 0, 2)
        # weights that push class 1 for positive first feature
        w = np.array([10.0, -10.0, 0.0, 0.0, 0.0, 0.0])
        batch = Batch(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([0, 1]))
        assert accuracy(spec, w, batch) == 1.0
        flipped = Batch(batch.features, np.array([1, 0]))
        assert accuracy(spec, w, flipped) == 0.0

    def test_regression_rejected(self):
        with pytest.raises(ValueError):
            accuracy(LINEAR_1D, np.zeros(2), single([1.0], 0.0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(case_seed):
    rng = np.random.default_rng(case_seed)
    spec, w, batch = random_instance(rng)
    g = gradient(spec, w, batch)
    fd = finite_diff_gradient(spec, w, batch)
    assert np.max(np.abs(g - fd)) / (np.max(np.abs(g)) + 1e-12) < 1e-4
