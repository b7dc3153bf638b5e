import numpy as np
import pytest

from cinn import autodiff as ad
from cinn.autodiff import Tape, backward, record_const
from cinn.baselines import (
    CollocationSet,
    acoustics_residuals,
    advection_residual,
    periodic_penalty,
    residual_loss,
    total_loss,
)
from cinn.characteristics import AdvectionCINN, AdvectionHead, PlainNet
from cinn.network import Layer, ParamSet, glorot_init, mse_loss
from conftest import FD_STEP, rel_err


def linear_net(w, b=0.0):
    """u(x, t) = w[0] x + w[1] t + b as a single affine layer."""
    return PlainNet(ParamSet([Layer(np.array([w]), np.array([b]))]))


def const_net(c):
    # zero weights, output bias c
    return PlainNet(ParamSet([Layer(np.zeros((1, 2)), np.array([c]))]))


class SinBodyCINN:
    """Characteristic layer followed by f(xi) = sin(xi); test-only model."""

    def __init__(self, v):
        self.v = v

    def stage(self, tape):
        model = self

        class Staged:
            def outputs(self, x, t):
                xi = ad.sub(tape, x, ad.mul(tape, record_const(tape, model.v), t))
                return [ad.sin(tape, xi)]

        return Staged()


def test_collocation_set_bounds():
    CollocationSet(np.array([[0.5, 0.5]]), bounds=((0, 1), (0, 1)))
    with pytest.raises(ValueError):
        CollocationSet(np.array([[1.5, 0.5]]), bounds=((0, 1), (0, 1)))


def test_advection_residual_constant_model():
    tape = Tape()
    staged = const_net(3.7).stage(tape)
    r = advection_residual(staged, tape, np.array([0.3, 0.9]), np.array([0.1, 0.5]), 1.0)
    assert np.max(np.abs(tape.value(r))) == 0.0


def test_advection_residual_of_characteristic_profile():
    # u = x - v t solves the PDE, so the residual vanishes
    v = 1.0
    tape = Tape()
    staged = linear_net([1.0, -v]).stage(tape)
    r = advection_residual(staged, tape, np.array([0.2, 1.4]), np.array([0.0, 0.6]), v)
    assert np.max(np.abs(tape.value(r))) < 1e-15


def test_advection_residual_hand_value():
    # u = x + t with v = 1: r = 1 + 1 = 2
    tape = Tape()
    staged = linear_net([1.0, 1.0]).stage(tape)
    r = advection_residual(staged, tape, np.array([0.5]), np.array([0.2]), 1.0)
    assert abs(float(tape.value(r)[0]) - 2.0) < 1e-14


def test_acoustics_residuals_constant_fields():
    net = PlainNet(ParamSet([Layer(np.zeros((2, 2)), np.array([0.4, -0.2]))]))
    tape = Tape()
    staged = net.stage(tape)
    r1, r2 = acoustics_residuals(staged, tape, np.array([0.1]), np.array([0.1]), 1.0, 1.0)
    assert float(tape.value(r1)[0]) == 0.0
    assert float(tape.value(r2)[0]) == 0.0


def test_acoustics_residuals_hand_value():
    # p = x, v = t with K0 = c0 = 1: r1 = p_t + v_x = 0, r2 = v_t + p_x = 2
    net = PlainNet(ParamSet([Layer(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))]))
    tape = Tape()
    staged = net.stage(tape)
    r1, r2 = acoustics_residuals(staged, tape, np.array([0.3]), np.array([0.6]), 1.0, 1.0)
    assert abs(float(tape.value(r1)[0])) < 1e-14
    assert abs(float(tape.value(r2)[0]) - 2.0) < 1e-14


def test_exact_acoustics_solution_residuals_vanish():
    from cinn.problems import acoustics_problem, oracle_for

    spec = acoustics_problem()
    oracle = oracle_for(spec)
    rng = np.random.default_rng(4)
    pts = rng.uniform([-1, 0], [1, 0.4], size=(200, 2))
    tape = Tape()
    model = oracle.as_model(tape)
    r1, r2 = acoustics_residuals(model, tape, pts[:, 0], pts[:, 1], 1.0, 1.0)
    assert np.max(np.abs(tape.value(r1))) < 1e-7
    assert np.max(np.abs(tape.value(r2))) < 1e-7


def test_residual_loss_examples():
    tape = Tape()
    zero = record_const(tape, np.zeros(5))
    assert float(tape.value(residual_loss(tape, zero))) == 0.0
    r = record_const(tape, np.array([1.0, -1.0]))
    assert float(tape.value(residual_loss(tape, r))) == 1.0
    r = record_const(tape, np.array([2.0]))
    assert float(tape.value(residual_loss(tape, r))) == 4.0
    with pytest.raises(ValueError):
        residual_loss(tape, [])


def test_residual_loss_sums_system_components():
    tape = Tape()
    r1 = record_const(tape, np.array([1.0, 1.0]))
    r2 = record_const(tape, np.array([2.0]))
    assert float(tape.value(residual_loss(tape, [r1, r2]))) == 5.0


def test_periodic_penalty_constant_in_x():
    tape = Tape()
    staged = linear_net([0.0, 2.0], b=1.0).stage(tape)  # u = 2t + 1
    pen = periodic_penalty(staged, tape, np.linspace(0, 1, 7), 0.0, 2 * np.pi)
    assert float(tape.value(pen)) == 0.0


def test_periodic_penalty_sin_body_cinn():
    tape = Tape()
    staged = SinBodyCINN(v=30.0).stage(tape)
    pen = periodic_penalty(staged, tape, np.linspace(0, 1, 50), 0.0, 2 * np.pi)
    assert float(tape.value(pen)) < 1e-12


def test_periodic_penalty_linear_gap():
    tape = Tape()
    staged = linear_net([1.0, 0.0]).stage(tape)  # u = x
    pen = periodic_penalty(staged, tape, np.linspace(0, 1, 13), 0.0, 2 * np.pi)
    assert abs(float(tape.value(pen)) - (2 * np.pi) ** 2) < 1e-10
    with pytest.raises(ValueError):
        periodic_penalty(staged, tape, np.array([]), 0.0, 1.0)


def test_total_loss_examples():
    tape = Tape()
    a = record_const(tape, 0.2)
    b = record_const(tape, 0.3)
    assert abs(float(tape.value(total_loss(tape, [a, b]))) - 0.5) < 1e-15
    assert float(tape.value(total_loss(tape, [a]))) == 0.2
    zeros = [record_const(tape, 0.0) for _ in range(3)]
    assert float(tape.value(total_loss(tape, zeros))) == 0.0
    with pytest.raises(ValueError):
        total_loss(tape, [])


def test_total_loss_weight_hook():
    tape = Tape()
    a = record_const(tape, 0.2)
    b = record_const(tape, 0.3)
    out = total_loss(tape, [a, b], weights=[1.0, 2.0])
    assert abs(float(tape.value(out)) - 0.8) < 1e-15


def test_cinn_residual_loss_tiny_without_training():
    model = AdvectionCINN(AdvectionHead(np.array([1.0])), glorot_init((1, 20, 20, 1), 17))
    pts = np.random.default_rng(5).uniform([0, 0], [2, 0.8], size=(64, 2))
    tape = Tape()
    staged = model.stage(tape)
    r = advection_residual(staged, tape, pts[:, 0], pts[:, 1], 1.0)
    assert float(tape.value(residual_loss(tape, r))) < 1e-12


def test_plain_net_residual_loss_generically_positive():
    net = PlainNet(glorot_init((2, 20, 20, 1), 18))
    pts = np.random.default_rng(6).uniform([0, 0], [2, 0.8], size=(64, 2))
    tape = Tape()
    staged = net.stage(tape)
    r = advection_residual(staged, tape, pts[:, 0], pts[:, 1], 1.0)
    assert float(tape.value(residual_loss(tape, r))) > 1e-6


def test_total_loss_gradient_is_sum_of_part_gradients():
    net = PlainNet(glorot_init((2, 6, 1), 19))
    pts = np.random.default_rng(7).uniform([0, 0], [2, 0.8], size=(12, 2))
    targets = np.random.default_rng(8).standard_normal(12)

    def grads(include_data, include_residual):
        tape = Tape()
        staged = net.stage(tape)
        parts = []
        if include_data:
            out = staged.outputs(record_const(tape, pts[:, 0]), record_const(tape, pts[:, 1]))[0]
            parts.append(mse_loss(tape, out, targets))
        if include_residual:
            r = advection_residual(staged, tape, pts[:, 0], pts[:, 1], 1.0)
            parts.append(residual_loss(tape, r))
        return staged.grad_flat(backward(tape, total_loss(tape, parts)))

    combined = grads(True, True)
    assert rel_err(combined, grads(True, False) + grads(False, True)) < 1e-9
