import numpy as np
import pytest

from virtglove.glove import NetInput
from virtglove.hand import GestureLabel
from virtglove.net import (
    GestureModel,
    ModelError,
    TrainConfig,
    TrainingError,
    architecture,
    forward,
    grad_check,
    init_model,
    load_model,
    loss_and_grad,
    loss_value,
    model_bytes,
    model_from_bytes,
    param_count,
    predict,
    save_model,
    train_arrays,
    unpack,
)


def _x(n=2, size=16, seed=0):
    return np.random.default_rng(seed).random((n, 4, size, size)).astype(np.float32)


def test_architecture_shapes():
    arch = architecture(64)
    assert arch["input"] == [4, 64, 64]
    assert dict((k, v) for k, v in arch["params"])["dense1.w"] == [32, 16 * 16 * 16]
    with pytest.raises(ModelError):
        architecture(30)


def test_softmax_contract():
    m = init_model(1, 16)
    p = forward(m, _x(8))
    assert p.shape == (8, 5)
    assert (p >= 0).all() and np.allclose(p.sum(axis=1), 1, atol=1e-6)
    assert forward(m, NetInput(_x(1)[0])).shape == (5,)


def test_zero_weights_give_uniform():
    arch = architecture(16)
    m = GestureModel(arch, np.zeros(param_count(arch)))
    assert np.allclose(forward(m, _x(3)), 0.2)


def test_output_bias_shift_invariance():
    m = init_model(2, 16)
    shifted = GestureModel(m.arch, m.weights.copy())
    unpack(shifted.arch, shifted.weights)["dense2.b"][...] += 3.5
    assert np.allclose(forward(m, _x(4)), forward(shifted, _x(4)), atol=1e-6)


def test_predict_ties_go_to_lowest_code():
    arch = architecture(16)
    w = np.zeros(param_count(arch), np.float32)
    m = GestureModel(arch, w)
    assert predict(m, _x(1)[0]).label is GestureLabel.ONE_FINGER
    unpack(arch, m.weights)["dense2.b"][...] = np.log([0.1, 0.1, 0.6, 0.1, 0.1])
    r = predict(m, _x(1)[0])
    assert r.label == 2 and np.allclose(r.probabilities, [0.1, 0.1, 0.6, 0.1, 0.1])


def test_wrong_input_shape():
    with pytest.raises(ModelError):
        forward(init_model(0, 16), np.zeros((1, 3, 16, 16)))


def test_toy_overfit():
    x, y = _x(2), np.array([0, 3])
    cfg = TrainConfig(lr=0.05, epochs=200, batch_size=2, seed=0)
    m = train_arrays(x, y, cfg, require_all_classes=False)
    assert m.meta["losses"][-1] < m.meta["initial_loss"]
    assert loss_value(m, x, y) < m.meta["initial_loss"]


def test_missing_class_is_rejected():
    with pytest.raises(TrainingError, match="SHAKA"):
        train_arrays(_x(4), np.array([0, 1, 2, 4]), TrainConfig(epochs=1))


def test_training_is_deterministic():
    x, y = _x(10, seed=3), np.arange(10) % 5
    cfg = TrainConfig(epochs=3, batch_size=4)
    assert model_bytes(train_arrays(x, y, cfg)) == model_bytes(train_arrays(x, y, cfg))


def test_zero_input_first_layer_gradient_is_zero():
    m = init_model(5, 16)
    _, g = loss_and_grad(m, np.zeros((1, 4, 16, 16)), [2], dtype=np.float64)
    grads = unpack(m.arch, g)
    assert not grads["conv1.w"].any()


def test_small_sgd_step_decreases_loss():
    m = init_model(6, 16)
    x, y = _x(1, seed=6), [1]
    loss, g = loss_and_grad(m, x, y, dtype=np.float64)
    w = m.weights.astype(np.float64) - 1e-3 * g
    assert loss_value(m, x, y, dtype=np.float64, weights=w) < loss


@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_check_small_model(seed):
    m = init_model(seed, 16)
    err, info = grad_check(m, _x(1, seed=seed)[0], [seed % 5], per_layer=60, return_details=True)
    assert err <= 1e-4
    assert info["smooth"].mean() > 0.95


def test_checkpoint_round_trip(tmp_path):
    m = init_model(7, 16)
    m.meta = {"note": "x", "losses": [1.5, 0.25]}
    path = tmp_path / "m.glvc"
    save_model(m, path)
    back = load_model(path)
    assert back == m
    assert model_bytes(back) == path.read_bytes()
    assert np.array_equal(back.weights.view(np.uint32), m.weights.view(np.uint32))


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + b"\x09" + b[5:],
    lambda b: b[:-10] + bytes([b[-10] ^ 1]) + b[-9:],
    lambda b: b[:20],
])
def test_corrupted_checkpoint(mutate):
    data = model_bytes(init_model(0, 16))
    with pytest.raises(ModelError):
        model_from_bytes(mutate(data))
