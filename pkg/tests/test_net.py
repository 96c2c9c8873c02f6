import math
import struct

import numpy as np
import pytest

from lapembed import oracles, verify
from lapembed.linalg import InvalidInput
from lapembed.net import (
    CHECKPOINT_MAGIC,
    EmbedNetParams,
    forward,
    init_params,
    joint_backward,
    joint_objective,
    load_checkpoint,
    save_checkpoint,
    softmax_loss_and_grad,
)
from lapembed.weights import LossConfig


def naive_softmax_loss(logits, labels):
    total = 0.0
    for col, c in enumerate(labels):
        exps = [math.exp(logits[r, col]) for r in range(logits.shape[0])]
        total += -math.log(exps[c] / sum(exps))
    return total / len(labels)


def test_zero_params_give_zero_outputs():
    p = init_params([4, 5, 3], 2, np.random.default_rng(0))
    for a in p.arrays():
        a[...] = 0.0
    H, logits = forward(p, np.random.default_rng(1).normal(size=(4, 6)))
    assert np.all(H == 0) and np.all(logits == 0)


def test_identity_single_layer():
    p = EmbedNetParams([np.eye(3)], [np.zeros(3)], np.zeros((2, 3)), np.zeros(2))
    X = np.abs(np.random.default_rng(0).normal(size=(3, 5)))
    H, _ = forward(p, X)
    np.testing.assert_array_equal(H, X)


def test_forward_is_deterministic():
    p1 = init_params([6, 8, 4], 3, np.random.default_rng(42))
    p2 = init_params([6, 8, 4], 3, np.random.default_rng(42))
    X = np.random.default_rng(7).normal(size=(6, 10))
    a, b = forward(p1, X), forward(p2, X)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_forward_dimension_mismatch():
    p = init_params([4, 3], 2, np.random.default_rng(0))
    with pytest.raises(InvalidInput):
        forward(p, np.zeros((5, 2)))


def test_softmax_uniform_logits():
    loss, _ = softmax_loss_and_grad(np.zeros((5, 3)), [0, 2, 4])
    assert loss == pytest.approx(math.log(5))


def test_softmax_saturation():
    logits = np.array([[500.0, -500.0], [-500.0, 500.0]])
    loss, g = softmax_loss_and_grad(logits, [0, 1])
    assert loss == pytest.approx(0.0, abs=1e-300)
    assert np.all(np.isfinite(g))


def test_softmax_matches_naive_and_fd():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(3, 7))
    labels = rng.integers(0, 3, size=7)
    loss, g = softmax_loss_and_grad(logits, labels)
    assert loss == pytest.approx(naive_softmax_loss(logits, labels), abs=1e-12)
    numeric = oracles.finite_diff_grad(lambda z: softmax_loss_and_grad(z, labels)[0], logits)
    np.testing.assert_allclose(g, numeric, rtol=1e-6, atol=1e-10)


def test_softmax_label_out_of_range():
    with pytest.raises(InvalidInput):
        softmax_loss_and_grad(np.zeros((3, 2)), [0, 3])


def test_lambda_zero_equals_softmax_mode():
    rng = np.random.default_rng(0)
    p = init_params([5, 7, 4], 3, rng)
    X = rng.normal(size=(5, 6))
    labels = np.repeat([0, 1, 2], 2)
    g_joint, _ = joint_backward(p, X, labels, LossConfig(lam=0.0), mode="joint")
    g_soft, _ = joint_backward(p, X, labels, LossConfig(), mode="softmax")
    for a, b in zip(g_joint, g_soft):
        assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("lam", [0.0, 0.6])
def test_joint_gradient_finite_differences(lam):
    rng = np.random.default_rng(int(lam * 10) + 1)
    cfg = LossConfig(lam=lam)
    for _ in range(3):
        params, X, labels = verify.joint_instance(rng, cfg)
        assert verify.joint_param_gradient_error(params, X, labels, cfg) < 1e-4


@pytest.mark.parametrize("mode", ["bgcl", "bgtl", "bgctl"])
def test_metric_only_modes_gradient(mode):
    rng = np.random.default_rng(9)
    cfg = LossConfig()
    params, X, labels = verify.joint_instance(rng, cfg)
    assert verify.joint_param_gradient_error(params, X, labels, cfg, mode=mode) < 1e-4


@pytest.mark.parametrize("mode", ["bgcl", "bgtl", "bgctl"])
def test_metric_only_modes_leave_head_untouched(mode):
    rng = np.random.default_rng(2)
    p = init_params([5, 6, 4], 3, rng)
    grads, _ = joint_backward(p, rng.normal(size=(5, 6)), np.repeat([0, 1, 2], 2), LossConfig(), mode=mode)
    assert np.all(grads[-1] == 0) and np.all(grads[-2] == 0)


def test_softmax_mode_has_no_metric_gradient():
    rng = np.random.default_rng(4)
    p = init_params([5, 6, 4], 3, rng)
    X = rng.normal(size=(5, 6))
    labels = np.repeat([0, 1, 2], 2)
    total, parts, _, _ = joint_objective(p, X, labels, LossConfig(), mode="softmax")
    assert parts["metric_coef"] == 0.0
    assert total == parts["softmax_loss"]


def test_diagnostics_reported():
    rng = np.random.default_rng(5)
    p = init_params([5, 6, 4], 3, rng)
    _, diag = joint_backward(p, rng.normal(size=(5, 6)), np.repeat([0, 1, 2], 2), LossConfig())
    for key in ("total_loss", "softmax_loss", "laplacian_loss", "active_neg_pairs", "active_triplets", "intra_inter_ratio"):
        assert key in diag
    assert diag["softmax_loss"] >= 0


def test_checkpoint_round_trip(tmp_path):
    p = init_params([6, 9, 5, 3], 4, np.random.default_rng(1))
    path = tmp_path / "ckpt.bin"
    save_checkpoint(p, path)
    blob = path.read_bytes()
    assert blob[:8] == CHECKPOINT_MAGIC
    assert struct.unpack_from("<II", blob, 8) == (3, 4)
    assert struct.unpack_from("<4I", blob, 16) == (6, 9, 5, 3)
    q = load_checkpoint(path)
    for a, b in zip(p.arrays(), q.arrays()):
        assert a.tobytes() == b.tobytes()
    first = np.frombuffer(blob, dtype="<f8", count=1, offset=32)[0]
    assert first == p.weights[0][0, 0]


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"nope")
    with pytest.raises(InvalidInput):
        load_checkpoint(path)
    p = init_params([3, 2], 2, np.random.default_rng(0))
    save_checkpoint(p, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(InvalidInput):
        load_checkpoint(path)
