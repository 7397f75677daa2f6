import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmmcnn.losses import (fac_loss_grad, fac_loss_per_attribute, fld_loss, fld_loss_grad,
                           joint_loss, joint_loss_and_grads)
from oracles import loop_fac_losses, loop_fld_loss, max_rel_error, numeric_grad


def test_fld_examples():
    y = np.array([[0.3, 0.7]])
    assert fld_loss(y, y) == 0.0
    assert fld_loss(np.array([[1.0, 1.0]]), np.array([[0.0, 0.0]])) == 2.0


def test_fld_matches_loop_oracle():
    rng = np.random.default_rng(0)
    p, t = rng.standard_normal((2, 7, 8))
    assert fld_loss(p, t) == pytest.approx(loop_fld_loss(p, t), rel=1e-14)


def test_fac_examples():
    labels = np.array([[1.0, -1.0], [-1.0, -1.0]])
    np.testing.assert_array_equal(fac_loss_per_attribute(labels, labels), [0, 0])
    np.testing.assert_array_equal(fac_loss_per_attribute(np.zeros((1, 1)), np.ones((1, 1))), [1.0])


def test_fac_matches_loop_oracle():
    rng = np.random.default_rng(1)
    pred = rng.standard_normal((2, 2))
    labels = rng.choice([-1.0, 1.0], size=(2, 2))
    np.testing.assert_allclose(fac_loss_per_attribute(pred, labels),
                               loop_fac_losses(pred, labels), rtol=1e-14)


def test_fac_rejects_bad_labels():
    with pytest.raises(ValueError):
        fac_loss_per_attribute(np.zeros((1, 2)), np.array([[1.0, 0.0]]))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        fld_loss(np.zeros((2, 4)), np.zeros((2, 6)))


def test_joint_examples():
    assert joint_loss([1.0, 1.0], [1.0, 1.0], 2.0, 0.5) == 3.0
    assert joint_loss([0.4, 0.9], [0.0, 0.0], 2.0, 0.5) == 1.0
    with pytest.raises(ValueError):
        joint_loss([1.0], [-1.0], 0.0, 0.5)
    with pytest.raises(ValueError):
        joint_loss([1.0], [1.0], 0.0, -0.1)


def test_joint_linear_in_weights_and_beta():
    rng = np.random.default_rng(2)
    fac, lam = rng.random(5), rng.random(5)
    fld = 1.7
    base = joint_loss(fac, lam, fld, 0.0)
    assert joint_loss(fac, 3 * lam, fld, 0.0) == pytest.approx(3 * base, rel=1e-14)
    assert joint_loss(fac, lam, fld, 0.8) - base == pytest.approx(0.8 * fld, rel=1e-14)


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    pred, truth = rng.standard_normal((2, 4, 6))
    g = fld_loss_grad(pred, truth)
    assert max_rel_error(g, numeric_grad(lambda: fld_loss(pred, truth), pred)) < 1e-6

    scores = rng.standard_normal((4, 3))
    labels = rng.choice([-1.0, 1.0], size=(4, 3))
    lam = rng.random(3)
    g = fac_loss_grad(scores, labels, lam)
    f = lambda: float(lam @ fac_loss_per_attribute(scores, labels))
    assert max_rel_error(g, numeric_grad(f, scores)) < 1e-6


def test_joint_grads_scale_by_weights_and_beta():
    rng = np.random.default_rng(4)
    scores = rng.standard_normal((5, 3))
    labels = rng.choice([-1.0, 1.0], size=(5, 3))
    marks, truth = rng.random((2, 5, 4))
    lam = np.array([0.5, 0.0, 2.0])
    report, gs, gm = joint_loss_and_grads(scores, labels, marks, truth, lam, 0.5)
    np.testing.assert_allclose(gs, fac_loss_grad(scores, labels) * lam)
    np.testing.assert_allclose(gm, 0.5 * fld_loss_grad(marks, truth))
    assert report.joint == pytest.approx(lam @ report.fac_losses + 0.5 * report.fld_loss)
    report, _, gm = joint_loss_and_grads(scores, labels, None, None, lam, 0.5)
    assert gm is None and report.fld_loss == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_fac_permutation_invariance(n, J, seed):
    rng = np.random.default_rng(seed)
    pred = rng.standard_normal((n, J))
    labels = rng.choice([-1.0, 1.0], size=(n, J))
    perm = rng.permutation(n)
    a = fac_loss_per_attribute(pred, labels)
    b = fac_loss_per_attribute(pred[perm], labels[perm])
    np.testing.assert_allclose(a, b, rtol=1e-12)
    assert np.all(a >= 0)
