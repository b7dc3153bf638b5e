import numpy as np
import pytest

from cinn import autodiff as ad
from cinn.autodiff import Tape, record_const, record_leaf
from cinn.characteristics import PlainNet
from cinn.network import glorot_init, mse_loss
from cinn.training import AdamState, TrainConfig, adam_step, lp_error, train


class ScalarModel:
    """Single trainable scalar, for optimizer-level tests."""

    def __init__(self, value):
        self.value = float(value)

    def get_flat(self):
        return np.array([self.value])

    def set_flat(self, vec):
        self.value = float(vec[0])

    def stage(self, tape):
        model = self

        class Staged:
            theta = record_leaf(tape, model.value)

            def velocity_estimate(self):
                return None

            def grad_flat(self, adj):
                g = adj[self.theta]
                return np.array([0.0 if g is None else float(g)])

        return Staged()


def quadratic_loss(tape, staged):
    d = ad.sub(tape, staged.theta, record_const(tape, 3.0))
    return {"quad": ad.square(tape, d)}


def test_adam_zero_gradient_is_fixed_point():
    cfg = TrainConfig(iterations=1)
    params = np.array([1.0, -2.0])
    state = AdamState.zeros(2)
    new, state = adam_step(params, np.zeros(2), state, cfg)
    assert np.array_equal(new, params)
    assert state.step == 1


def test_adam_first_step_hand_value():
    cfg = TrainConfig(iterations=1, learning_rate=0.001)
    new, _ = adam_step(np.zeros(1), np.ones(1), AdamState.zeros(1), cfg)
    # bias-corrected first step: -lr * 1 / (1 + eps)
    assert abs(float(new[0]) - (-0.001 / (1 + 1e-8))) < 1e-15


def test_adam_equal_gradients_move_identically():
    cfg = TrainConfig(iterations=1)
    new, _ = adam_step(np.array([5.0, 5.0]), np.array([0.3, 0.3]), AdamState.zeros(2), cfg)
    assert new[0] == new[1]


def test_adam_shape_mismatch():
    cfg = TrainConfig(iterations=1)
    with pytest.raises(ValueError):
        adam_step(np.zeros(2), np.zeros(3), AdamState.zeros(2), cfg)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(iterations=-1)
    with pytest.raises(ValueError):
        TrainConfig(iterations=1, learning_rate=0.0)


def test_train_zero_iterations_keeps_params():
    model = ScalarModel(1.5)
    train(model, quadratic_loss, TrainConfig(iterations=0))
    assert model.value == 1.5


def test_train_quadratic_converges():
    model = ScalarModel(0.0)
    _, history = train(model, quadratic_loss, TrainConfig(iterations=10_000, log_every=2000))
    assert abs(model.value - 3.0) < 1e-3
    assert not history.aborted
    assert history.iterations[0] == 0 and history.iterations[-1] == 10_000


def test_train_history_is_deterministic():
    def run():
        model = PlainNet(glorot_init((2, 8, 1), seed=5))
        pts = np.random.default_rng(0).uniform(0, 1, size=(20, 2))
        targets = np.sin(pts[:, 0])

        def builder(tape, staged):
            out = staged.outputs(record_const(tape, pts[:, 0]), record_const(tape, pts[:, 1]))[0]
            return {"data": mse_loss(tape, out, targets)}

        _, history = train(model, builder, TrainConfig(iterations=50, log_every=10))
        return history, model.get_flat()

    h1, f1 = run()
    h2, f2 = run()
    assert h1.totals == h2.totals
    assert h1.iterations == h2.iterations
    assert np.array_equal(f1, f2)


def test_train_aborts_on_nonfinite_loss():
    model = ScalarModel(500.0)

    def exploding(tape, staged):
        return {"boom": ad.exp(tape, ad.square(tape, staged.theta))}

    with np.errstate(over="ignore"):
        _, history = train(model, exploding, TrainConfig(iterations=5))
    assert history.aborted
    assert "non-finite" in history.abort_reason


def test_train_logs_monotone_iterations():
    model = ScalarModel(0.0)
    _, history = train(model, quadratic_loss, TrainConfig(iterations=25, log_every=10))
    assert history.iterations == [0, 10, 20, 25]
    assert all(b > a for a, b in zip(history.iterations, history.iterations[1:]))


def test_lp_error_examples():
    pts = np.random.default_rng(1).uniform(0, 1, size=(50, 2))

    def oracle(p):
        return np.cos(p[:, 0]) + 0.5

    assert lp_error(oracle, oracle, pts, p=2) == 0.0
    zero = lambda p: np.zeros(len(p))
    assert abs(lp_error(zero, oracle, pts, p=1) - 1.0) < 1e-12
    scaled = lambda p: 1.1 * oracle(p)
    assert abs(lp_error(scaled, oracle, pts, p=1) - 0.1) < 1e-12
    assert abs(lp_error(scaled, oracle, pts, p=2) - 0.1) < 1e-12


def test_lp_error_scale_invariance():
    pts = np.random.default_rng(2).uniform(0, 1, size=(40, 2))
    rng = np.random.default_rng(3)
    noise = rng.standard_normal(40)

    def model(p):
        return np.cos(p[:, 0]) + 0.1 * noise

    def oracle(p):
        return np.cos(p[:, 0])

    base = lp_error(model, oracle, pts, p=2)
    for c in (2.0, -0.3, 17.5):
        scaled_model = lambda p: c * model(p)
        scaled_oracle = lambda p: c * oracle(p)
        assert abs(lp_error(scaled_model, scaled_oracle, pts, p=2) - base) < 1e-12


def test_lp_error_zero_denominator():
    pts = np.zeros((3, 2))
    zero = lambda p: np.zeros(len(p))
    with pytest.raises(ValueError):
        lp_error(zero, zero, pts, p=2)
    with pytest.raises(ValueError):
        lp_error(zero, zero, pts, p=3)


def test_lp_error_on_staged_model():
    model = PlainNet(glorot_init((2, 6, 1), seed=7))
    pts = np.random.default_rng(4).uniform(0, 1, size=(30, 2))
    err = lp_error(model, lambda p: np.ones(len(p)), pts, p=2)
    assert np.isfinite(err) and err > 0
