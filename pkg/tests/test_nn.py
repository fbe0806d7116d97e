"""Head network, loss, Adam, gradient checking, and checkpoints."""

from __future__ import annotations

import math

import numpy as np
import pytest

from fgsim.errors import DimensionMismatch, LengthMismatch, ParseError, ShapeMismatch
from fgsim.nn import (
    AdamState,
    HeadModule,
    adam_step,
    bce_loss,
    finite_diff_check,
    head_backward,
    head_forward,
    init_adam,
    init_head,
    load_checkpoint,
    save_checkpoint,
)


def identity_head(dim: int, final_activation: str = "relu") -> HeadModule:
    return HeadModule(
        weights=[np.eye(dim) for _ in range(3)],
        biases=[np.zeros(dim) for _ in range(3)],
        final_activation=final_activation,
    )


class TestHeadForward:
    def test_identity_weights_apply_relu(self):
        out = head_forward(identity_head(2), np.array([2.0, -1.0]))
        assert np.array_equal(out, [2.0, 0.0])

    def test_zero_weights_zero_output(self):
        head = HeadModule(
            weights=[np.zeros((3, 3)) for _ in range(3)],
            biases=[np.zeros(3) for _ in range(3)],
        )
        assert np.array_equal(head_forward(head, np.array([5.0, -2.0, 7.0])), np.zeros(3))

    def test_hand_evaluated_composition(self):
        # x=[1,2] -> W1=[[1,1]] gives 3 -> W2=[[2]] gives 6 -> W3=[[1]] gives 6
        head = HeadModule(
            weights=[np.array([[1.0, 1.0]]), np.array([[2.0]]), np.array([[1.0]])],
            biases=[np.zeros(1), np.zeros(1), np.zeros(1)],
        )
        assert np.array_equal(head_forward(head, np.array([1.0, 2.0])), [6.0])

    def test_batch_rows_match_single(self):
        head = init_head(4, seed=0)
        batch = np.random.default_rng(1).normal(size=(5, 4))
        stacked = head_forward(head, batch)
        for i in range(5):
            assert np.allclose(stacked[i], head_forward(head, batch[i]))

    def test_output_nonnegative_with_final_relu(self):
        head = init_head(8, seed=3)
        x = np.random.default_rng(2).normal(size=8)
        assert np.all(head_forward(head, x) >= 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            head_forward(identity_head(2), np.array([1.0, 2.0, 3.0]))


class TestBceLoss:
    def test_perfect_prediction_clamped(self):
        assert bce_loss(np.array([1.0]), np.array([1])) <= 1e-11

    def test_half_is_ln2(self):
        assert bce_loss(np.array([0.5]), np.array([1])) == pytest.approx(math.log(2), rel=1e-12)

    def test_symmetric_pair_is_ln2(self):
        loss = bce_loss(np.array([0.5, 0.5]), np.array([1, 0]))
        assert loss == pytest.approx(math.log(2), rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            bce_loss(np.array([0.5]), np.array([1, 0]))


class TestHeadBackward:
    def test_zero_upstream_zero_grads(self):
        head = init_head(3, seed=1)
        x = np.array([0.3, -0.2, 0.9])
        grads, dx = head_backward(head, x, np.zeros(3))
        assert np.array_equal(dx, np.zeros(3))
        for dw, db in grads:
            assert not dw.any()
            assert not db.any()

    def test_dead_relu_blocks_gradient(self):
        head = identity_head(2)
        head.biases[0] = np.array([-10.0, -10.0])  # all pre-activations negative
        grads, dx = head_backward(head, np.array([1.0, 2.0]), np.array([1.0, 1.0]))
        assert np.array_equal(dx, np.zeros(2))
        assert not grads[0][0].any()

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        head = init_head(4, seed=seed)
        x = rng.normal(size=4)
        target = rng.normal(size=4)

        def loss_of(head_params: dict[str, np.ndarray]) -> float:
            probe = HeadModule(
                weights=[head_params[f"W{i}"] for i in range(3)],
                biases=[head_params[f"b{i}"] for i in range(3)],
            )
            diff = head_forward(probe, x) - target
            return float(diff @ diff)

        out = head_forward(head, x)
        upstream = 2.0 * (out - target)
        grads, _ = head_backward(head, x, upstream)
        params = {f"W{i}": head.weights[i] for i in range(3)}
        params.update({f"b{i}": head.biases[i] for i in range(3)})
        analytic = {f"W{i}": grads[i][0] for i in range(3)}
        analytic.update({f"b{i}": grads[i][1] for i in range(3)})
        assert finite_diff_check(loss_of, params, analytic, h=1e-5) <= 1e-6

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        head = init_head(4, seed=11)
        x = rng.normal(size=4)
        weights = rng.normal(size=4)

        def loss_at(point: np.ndarray) -> float:
            return float(head_forward(head, point) @ weights)

        _, dx = head_backward(head, x, weights)
        h = 1e-6
        for i in range(4):
            probe = x.copy()
            probe[i] += h
            up = loss_at(probe)
            probe[i] -= 2 * h
            down = loss_at(probe)
            numeric = (up - down) / (2 * h)
            assert numeric == pytest.approx(dx[i], abs=1e-6)


class TestAdam:
    def test_zero_gradient_is_identity(self):
        params = {"w": np.array([[1.0, 2.0], [3.0, 4.0]])}
        state = init_adam(params, learning_rate=0.05)
        out, new_state = adam_step(params, {"w": np.zeros((2, 2))}, state)
        for _ in range(5):
            out, new_state = adam_step(out, {"w": np.zeros((2, 2))}, new_state)
        assert np.array_equal(out["w"], params["w"])
        assert new_state.step == 6

    @pytest.mark.parametrize("grad", [0.5, -3.0, 100.0])
    def test_first_step_magnitude(self, grad):
        params = {"w": np.array([0.0])}
        state = init_adam(params, learning_rate=0.01)
        out, _ = adam_step(params, {"w": np.array([grad])}, state)
        delta = abs(out["w"][0])
        assert 0.0099 <= delta <= 0.01
        assert np.sign(params["w"][0] - out["w"][0]) == np.sign(grad)

    def test_deterministic(self):
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.array([0.3, 0.6])}
        state = init_adam(params, learning_rate=0.01)
        a_params, a_state = adam_step(params, grads, state)
        b_params, b_state = adam_step(params, grads, state)
        assert np.array_equal(a_params["w"], b_params["w"])
        assert np.array_equal(a_state.first_moment["w"], b_state.first_moment["w"])

    def test_shape_mismatch(self):
        params = {"w": np.zeros(2)}
        state = init_adam(params, learning_rate=0.01)
        with pytest.raises(ShapeMismatch):
            adam_step(params, {"w": np.zeros(3)}, state)
        with pytest.raises(ShapeMismatch):
            adam_step(params, {"v": np.zeros(2)}, state)


class TestFiniteDiffCheck:
    def test_quadratic_is_exact(self):
        params = {"p": np.array([0.4, -1.2, 2.0])}
        analytic = {"p": 2.0 * params["p"]}
        err = finite_diff_check(lambda d: float(d["p"] @ d["p"]), params, analytic, h=1e-5)
        assert err <= 1e-8

    def test_linear_is_exact(self):
        coef = np.array([1.5, -0.5])
        params = {"p": np.array([3.0, 4.0])}
        err = finite_diff_check(
            lambda d: float(coef @ d["p"]), params, {"p": coef.copy()}, h=1e-5
        )
        assert err <= 1e-10

    def test_detects_wrong_gradient(self):
        params = {"p": np.array([1.0])}
        err = finite_diff_check(
            lambda d: float(d["p"] @ d["p"]), params, {"p": np.array([0.0])}, h=1e-5
        )
        assert err > 0.9


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = {
            "emb": np.random.default_rng(0).normal(size=(7, 3)),
            "head.0.W": np.random.default_rng(1).normal(size=(3, 3)),
            "head.0.b": np.random.default_rng(2).normal(size=3),
        }
        path = tmp_path / "model.fgs"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert set(loaded) == set(params)
        assert np.array_equal(loaded["emb"], params["emb"])
        assert np.array_equal(loaded["head.0.b"][0], params["head.0.b"])

    def test_magic_bytes(self, tmp_path):
        path = tmp_path / "model.fgs"
        save_checkpoint({"w": np.zeros((1, 1))}, path)
        assert path.read_bytes()[:4] == b"FGS1"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.fgs"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_deterministic_bytes(self, tmp_path):
        params = {"b": np.ones(4), "a": np.zeros((2, 2))}
        p1, p2 = tmp_path / "one.fgs", tmp_path / "two.fgs"
        save_checkpoint(params, p1)
        save_checkpoint(params, p2)
        assert p1.read_bytes() == p2.read_bytes()
