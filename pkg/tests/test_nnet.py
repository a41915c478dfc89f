"""Layer, optimizer, and checkpoint tests against independent references."""

import math

import numpy as np
import pytest

from commlang import nnet
from commlang.tensor import Tensor, parameter
from _oracles import adam_single_step_reference, fd_gradcheck, gru_step_reference


def _zeroed_gru(n_in, n_hid):
    cell = nnet.GruCell(n_in, n_hid, np.random.default_rng(0))
    for p in cell.parameters():
        p.data[...] = 0.0
    return cell


def test_gru_zero_params_halves_hidden():
    # z = sigmoid(0) = 0.5 and n = tanh(0) = 0, so h' = 0.5 h
    cell = _zeroed_gru(3, 16)
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((4, 3)))
    h = Tensor(rng.standard_normal((4, 16)))
    out = cell.step(x, h)
    assert np.allclose(out.data, 0.5 * h.data, atol=1e-15)


def test_gru_zero_params_zero_hidden_stays_zero():
    cell = _zeroed_gru(5, 16)
    x = Tensor(np.random.default_rng(2).standard_normal((2, 5)))
    h = Tensor(np.zeros((2, 16)))
    assert np.allclose(cell.step(x, h).data, 0.0)


def test_gru_matches_scalar_loop_reference():
    rng = np.random.default_rng(3)
    for _ in range(10):
        cell = nnet.GruCell(3, 4, rng)
        weights = {}
        for gate in ("z", "r", "n"):
            weights[f"W{gate}"] = getattr(cell, f"W{gate}").data.tolist()
            weights[f"U{gate}"] = getattr(cell, f"U{gate}").data.tolist()
            weights[f"b{gate}"] = getattr(cell, f"b{gate}").data.tolist()
        x = rng.standard_normal(3)
        h = rng.standard_normal(4)
        want = gru_step_reference(x.tolist(), h.tolist(), weights)
        got = cell.step(Tensor(x[None, :]), Tensor(h[None, :])).data[0]
        assert np.allclose(got, want, atol=1e-12)


def test_gru_dimension_mismatch():
    cell = nnet.GruCell(3, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        cell.step(Tensor(np.zeros((1, 5))), Tensor(np.zeros((1, 4))))


def test_gru_step_gradients():
    rng = np.random.default_rng(4)
    for _ in range(10):
        cell = nnet.GruCell(4, 6, rng)
        x = parameter(rng.standard_normal((3, 4)), name="x")
        h = parameter(rng.standard_normal((3, 6)), name="h")
        w = rng.standard_normal((3, 6))
        params = cell.parameters() + [x, h]
        bad = fd_gradcheck(lambda: (cell.step(x, h) * w).sum(), params, rng,
                           max_coords=4)
        assert not bad, bad


def test_linear_gradients():
    rng = np.random.default_rng(5)
    lin = nnet.Linear(5, 3, rng)
    x = parameter(rng.standard_normal((4, 5)), name="x")
    bad = fd_gradcheck(lambda: lin(x).mean(), lin.parameters() + [x], rng)
    assert not bad, bad


def test_softmax_cross_entropy_uniform_and_saturated():
    k = 7
    loss = nnet.softmax_cross_entropy(Tensor(np.zeros(k)), 3)
    assert math.isclose(loss.item(), math.log(k), rel_tol=1e-12)
    spiked = np.zeros(k)
    spiked[2] = 1e6
    assert nnet.softmax_cross_entropy(Tensor(spiked), 2).item() == pytest.approx(0.0, abs=1e-9)


def test_softmax_cross_entropy_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(6)
    for _ in range(10):
        logits = parameter(rng.standard_normal(9), name="logits")
        target = int(rng.integers(0, 9))
        bad = fd_gradcheck(lambda: nnet.softmax_cross_entropy(logits, target),
                           [logits], rng)
        assert not bad, bad
        logits.grad = None
        nnet.softmax_cross_entropy(logits, target).backward()
        probs = np.exp(logits.data - logits.data.max())
        probs /= probs.sum()
        onehot = np.eye(9)[target]
        assert np.allclose(logits.grad, probs - onehot, atol=1e-12)


def test_softmax_cross_entropy_target_range():
    with pytest.raises(IndexError):
        nnet.softmax_cross_entropy(Tensor(np.zeros(4)), 4)


def test_adam_zero_gradient_leaves_parameters_unchanged():
    p = parameter(np.array([1.0, -2.0, 3.0]), name="p")
    opt = nnet.Adam([p], lr=0.01)
    p.grad = np.zeros(3)
    before = p.data.copy()
    opt.step()
    assert np.array_equal(p.data, before)


def test_adam_first_step_matches_hand_formula():
    rng = np.random.default_rng(7)
    value = rng.standard_normal(5)
    grad = rng.standard_normal(5)
    p = parameter(value.copy(), name="p")
    opt = nnet.Adam([p], lr=0.01)
    p.grad = grad.copy()
    opt.step()
    want = adam_single_step_reference(value, grad, lr=0.01)
    assert np.allclose(p.data, want, atol=1e-14)
    assert p.grad is None  # consumed and zeroed


def test_adam_trajectories_are_bitwise_deterministic():
    def run():
        rng = np.random.default_rng(8)
        p = parameter(rng.standard_normal(4), name="p")
        opt = nnet.Adam([p], lr=0.05)
        for _ in range(25):
            p.grad = np.sin(p.data)
            opt.step()
        return p.data.copy()

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_adam_rejects_duplicate_parameters():
    p = parameter(np.zeros(2))
    with pytest.raises(ValueError):
        nnet.Adam([p, p], lr=0.1)


def test_checkpoint_round_trip_exact(tmp_path):
    rng = np.random.default_rng(9)
    tensors = {"a.W": parameter(rng.standard_normal((3, 4))),
               "b": parameter(rng.standard_normal(7))}
    meta = {"agent_id": 3, "activation": 5, "dtype": "float64"}
    path = tmp_path / "ck.npz"
    nnet.save_checkpoint(path, tensors, meta)
    arrays, got_meta = nnet.load_checkpoint(path)
    assert got_meta == meta
    for name, t in tensors.items():
        assert np.array_equal(arrays[name], t.data)
        assert arrays[name].dtype == t.data.dtype
