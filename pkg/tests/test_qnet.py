import json

import numpy as np
import pytest

import oracles
from conftest import make_rng
from greenlight.qnet import (
    Adam,
    Gradients,
    QNetwork,
    WeightsFormatError,
    backward,
    backward_batch,
    deserialize,
    forward,
    forward_batch,
    init_network,
    serialize,
)


def _linear_net(w, b):
    return QNetwork(
        (len(w[0]), len(w)),
        [np.asarray(w, dtype=np.float64)],
        [np.asarray(b, dtype=np.float64)],
    )


def test_forward_identity_layer():
    net = _linear_net([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    assert forward(net, [1.0, -2.0]) == pytest.approx([1.0, -2.0])


def test_forward_rectifier_clips_hidden():
    net = QNetwork(
        (2, 2, 2),
        [np.eye(2), np.eye(2)],
        [np.zeros(2), np.zeros(2)],
    )
    # hidden activation of (-1, 2) is (0, 2); the linear output passes it through
    assert forward(net, [-1.0, 2.0]) == pytest.approx([0.0, 2.0])


def test_forward_matches_straight_line_oracle():
    rng = make_rng(11)
    net = init_network((4, 8, 3), rng)
    x = rng.normal(size=4)
    expected = oracles.straight_line_forward(
        net.sizes,
        [w.tolist() for w in net.weights],
        [b.tolist() for b in net.biases],
        x.tolist(),
    )
    assert forward(net, x) == pytest.approx(expected, abs=1e-12)


def test_forward_batch_matches_forward():
    rng = make_rng(12)
    net = init_network((4, 8, 3), rng)
    xs = rng.normal(size=(6, 4))
    batch = forward_batch(net, xs)
    for i in range(6):
        assert batch[i] == pytest.approx(forward(net, xs[i]), abs=1e-12)


def test_forward_rejects_dimension_mismatch():
    net = _linear_net([[1.0, 0.0]], [0.0])
    with pytest.raises(ValueError):
        forward(net, [1.0, 2.0, 3.0])


def test_backward_zero_error_means_zero_gradients():
    net = _linear_net([[1.0]], [0.0])
    loss, grads = backward(net, [2.0], td_target=2.0, action=0)
    assert loss == 0.0
    assert np.all(grads.weights[0] == 0.0)
    assert np.all(grads.biases[0] == 0.0)


def test_backward_hand_chain_rule():
    # q = w*x = 2, target 0: loss 4, dL/dq = 4, dL/dw = 4*x = 4, dL/db = 4
    net = _linear_net([[2.0]], [0.0])
    loss, grads = backward(net, [1.0], td_target=0.0, action=0)
    assert loss == pytest.approx(4.0)
    assert grads.weights[0] == pytest.approx(np.array([[4.0]]))
    assert grads.biases[0] == pytest.approx([4.0])


def test_backward_nonselected_outputs_get_no_gradient():
    net = _linear_net([[2.0], [3.0]], [0.0, 0.0])
    _, grads = backward(net, [1.0], td_target=0.0, action=0)
    assert grads.weights[0][1] == pytest.approx([0.0])
    assert grads.biases[0][1] == 0.0


def test_backward_rejects_bad_action():
    net = _linear_net([[1.0]], [0.0])
    with pytest.raises(ValueError):
        backward(net, [1.0], 0.0, action=3)


def _loss_only(net, x, target, action):
    return float((forward(net, x)[action] - target) ** 2)


def test_gradients_match_central_finite_differences():
    rng = make_rng(21)
    worst = 0.0
    for _ in range(10):
        net = init_network((4, 8, 3), rng)
        x = rng.normal(size=4)
        target = float(rng.normal())
        action = int(rng.integers(0, 3))
        _, grads = backward(net, x, target, action)
        fd_w, fd_b = oracles.finite_difference_grads(net, x, target, action, 1e-5, _loss_only)
        for layer in range(len(net.weights)):
            diff_w = np.abs(grads.weights[layer] - np.asarray(fd_w[layer]))
            scale_w = np.maximum(1.0, np.abs(grads.weights[layer]) + np.abs(fd_w[layer]))
            diff_b = np.abs(grads.biases[layer] - np.asarray(fd_b[layer]))
            scale_b = np.maximum(1.0, np.abs(grads.biases[layer]) + np.abs(fd_b[layer]))
            worst = max(worst, float((diff_w / scale_w).max()), float((diff_b / scale_b).max()))
    assert worst < 1e-4


def test_batch_gradients_equal_mean_of_single_gradients():
    rng = make_rng(31)
    net = init_network((5, 6, 3), rng)
    xs = rng.normal(size=(8, 5))
    targets = rng.normal(size=8)
    actions = rng.integers(0, 3, size=8)
    batch_loss, batch_grads = backward_batch(net, xs, targets, actions)

    losses = []
    acc_w = [np.zeros_like(w) for w in net.weights]
    acc_b = [np.zeros_like(b) for b in net.biases]
    for i in range(8):
        loss, grads = backward(net, xs[i], float(targets[i]), int(actions[i]))
        losses.append(loss)
        for layer in range(len(acc_w)):
            acc_w[layer] += grads.weights[layer] / 8.0
            acc_b[layer] += grads.biases[layer] / 8.0
    assert batch_loss == pytest.approx(np.mean(losses), rel=1e-12)
    for layer in range(len(acc_w)):
        assert batch_grads.weights[layer] == pytest.approx(acc_w[layer], abs=1e-12)
        assert batch_grads.biases[layer] == pytest.approx(acc_b[layer], abs=1e-12)


def test_adam_zero_gradients_leave_parameters_unchanged():
    net = _linear_net([[2.0, -1.0]], [0.5])
    before_w = net.weights[0].copy()
    before_b = net.biases[0].copy()
    opt = Adam(net)
    zero = Gradients([np.zeros_like(net.weights[0])], [np.zeros_like(net.biases[0])])
    opt.step(net, zero, lr=0.1)
    assert np.array_equal(net.weights[0], before_w)
    assert np.array_equal(net.biases[0], before_b)


def test_adam_first_step_is_signed_lr():
    net = _linear_net([[1.0, 1.0]], [1.0])
    opt = Adam(net)
    grads = Gradients([np.array([[0.5, -2.0]])], [np.array([3.0])])
    opt.step(net, grads, lr=0.01)
    # bias-corrected first step moves each parameter by ~lr against the gradient sign
    assert net.weights[0] == pytest.approx(np.array([[1.0 - 0.01, 1.0 + 0.01]]), rel=1e-5)
    assert net.biases[0] == pytest.approx([1.0 - 0.01], rel=1e-5)


def test_adam_two_steps_match_reference_trace():
    net = _linear_net([[1.0, -1.0]], [0.5])
    opt = Adam(net)
    g1 = Gradients([np.array([[0.3, -0.7]])], [np.array([0.1])])
    g2 = Gradients([np.array([[-0.2, 0.4]])], [np.array([0.6])])
    opt.step(net, g1, lr=0.05)
    after_one = (net.weights[0].copy(), net.biases[0].copy())
    opt.step(net, g2, lr=0.05)

    trace = oracles.adam_reference(
        [1.0, -1.0, 0.5],
        [[0.3, -0.7, 0.1], [-0.2, 0.4, 0.6]],
        lr=0.05,
    )
    assert after_one[0][0] == pytest.approx(trace[0][:2], abs=1e-12)
    assert after_one[1] == pytest.approx(trace[0][2:], abs=1e-12)
    assert net.weights[0][0] == pytest.approx(trace[1][:2], abs=1e-12)
    assert net.biases[0] == pytest.approx(trace[1][2:], abs=1e-12)


def test_adam_rejects_shape_mismatch():
    net = _linear_net([[1.0, 1.0]], [1.0])
    opt = Adam(net)
    bad = Gradients([np.zeros((2, 2))], [np.zeros(1)])
    with pytest.raises(ValueError):
        opt.step(net, bad, lr=0.1)


def test_serialize_round_trip_is_bitwise():
    net = init_network((4, 8, 3), make_rng(77))
    again = deserialize(serialize(net))
    assert again.sizes == net.sizes
    for w1, w2 in zip(net.weights, again.weights):
        assert np.array_equal(w1, w2)
    for b1, b2 in zip(net.biases, again.biases):
        assert np.array_equal(b1, b2)
    assert serialize(again) == serialize(net)


def test_deserialize_truncated_document_errors():
    text = serialize(init_network((4, 8, 3), make_rng(1)))
    with pytest.raises(WeightsFormatError):
        deserialize(text[: len(text) // 2])


def test_deserialize_mismatched_dims_names_layer():
    doc = json.loads(serialize(init_network((4, 8, 3), make_rng(2))))
    doc["layers"][1]["w"] = doc["layers"][1]["w"][:-1]
    with pytest.raises(WeightsFormatError) as err:
        deserialize(json.dumps(doc))
    assert "layer 1" in str(err.value)


def test_deserialize_wrong_arch_chain_names_layer():
    doc = json.loads(serialize(init_network((4, 8, 3), make_rng(3))))
    doc["layers"][0]["rows"] = 9
    with pytest.raises(WeightsFormatError) as err:
        deserialize(json.dumps(doc))
    assert "layer 0" in str(err.value)


def test_init_network_is_deterministic_per_seed():
    a = init_network((4, 8, 3), make_rng(5))
    b = init_network((4, 8, 3), make_rng(5))
    assert serialize(a) == serialize(b)
