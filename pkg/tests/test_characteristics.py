import numpy as np
import pytest

from cinn import autodiff as ad
from cinn.autodiff import Tape, backward, record_const
from cinn.baselines import acoustics_residuals, advection_residual
from cinn.characteristics import (
    AdvectionCINN,
    AdvectionHead,
    ModelSpec,
    RecursiveCINN,
    RecursiveHead,
    SystemCINN,
    SystemHead,
    acoustics_decomposition,
    advection_transform,
    cinn_forward,
    predict,
    recursive_forward,
    system_forward,
)
from cinn.network import Layer, ParamSet, glorot_init, mse_loss
from conftest import FD_STEP, rel_err


def zero_params(dims):
    return ParamSet(
        [Layer(np.zeros((o, i)), np.zeros(o)) for i, o in zip(dims[:-1], dims[1:])]
    )


def advection_model(seed=0, v=1.0, trainable=False):
    return AdvectionCINN(AdvectionHead(np.array([v]), trainable), glorot_init((1, 20, 20, 1), seed))


def acoustics_model(seed=0, K0=1.0, c0=1.0):
    lam, r, _ = acoustics_decomposition(K0, c0)
    branches = [glorot_init((1, 20, 20, 1), seed + i) for i in range(2)]
    return SystemCINN(SystemHead(lam, r, branches))


def test_advection_transform_examples():
    tape = Tape()
    head = AdvectionHead(np.array([1.0]))
    (xi,) = advection_transform(head, tape, [record_const(tape, 0.5)], record_const(tape, 0.3))
    assert abs(float(tape.value(xi)) - 0.2) < 1e-15

    tape = Tape()
    (xi,) = advection_transform(head, tape, [record_const(tape, 0.77)], record_const(tape, 0.0))
    assert float(tape.value(xi)) == 0.77

    tape = Tape()
    head2 = AdvectionHead(np.array([2.0, -2.0]))
    xs = [record_const(tape, 1.0), record_const(tape, 2.0)]
    xi = advection_transform(head2, tape, xs, record_const(tape, 0.5))
    assert [float(tape.value(c)) for c in xi] == [0.0, 3.0]


def test_advection_transform_dimension_mismatch():
    tape = Tape()
    head = AdvectionHead(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        advection_transform(head, tape, [record_const(tape, 1.0)], record_const(tape, 0.0))


def test_characteristic_constancy():
    model = advection_model(seed=3)
    rng = np.random.default_rng(0)
    pts = rng.uniform([0, 0], [2, 0.8], size=(50, 2))
    deltas = rng.uniform(-0.3, 0.3, size=50)
    shifted = pts + np.stack([deltas * 1.0, deltas], axis=1)
    u0 = predict(model, pts)[:, 0]
    u1 = predict(model, shifted)[:, 0]
    assert np.max(np.abs(u0 - u1)) < 1e-12


def test_advection_residual_zero_at_initialization():
    model = advection_model(seed=9, v=1.0)
    rng = np.random.default_rng(1)
    pts = rng.uniform([0, 0], [2, 0.8], size=(100, 2))
    tape = Tape()
    staged = model.stage(tape)
    r = advection_residual(staged, tape, pts[:, 0], pts[:, 1], 1.0)
    assert np.max(np.abs(tape.value(r))) < 1e-8


def test_zero_body_outputs_zero():
    model = AdvectionCINN(AdvectionHead(np.array([1.0])), zero_params((1, 20, 1)))
    pts = np.array([[0.3, 0.1], [1.5, 0.7]])
    assert np.array_equal(predict(model, pts), np.zeros((2, 1)))
    tape = Tape()
    staged = model.stage(tape)
    r = advection_residual(staged, tape, pts[:, 0], pts[:, 1], 1.0)
    assert np.array_equal(tape.value(r), np.zeros(2))


def test_acoustics_decomposition_unit_constants():
    lam, r, r_inv = acoustics_decomposition(1.0, 1.0)
    assert np.array_equal(lam, [-1.0, 1.0])
    assert np.array_equal(r, [[-1.0, 1.0], [1.0, 1.0]])
    assert np.max(np.abs(r @ r_inv - np.eye(2))) < 1e-14


def test_acoustics_decomposition_reproduces_coefficient_matrix():
    K0, c0 = 2.5, 0.7
    lam, r, r_inv = acoustics_decomposition(K0, c0)
    a = np.array([[0.0, K0], [c0 * c0 / K0, 0.0]])
    assert np.max(np.abs(r @ np.diag(lam) @ r_inv - a)) < 1e-14
    assert np.max(np.abs(r @ r_inv - np.eye(2))) < 1e-14


def test_acoustics_decomposition_rejects_nonpositive():
    with pytest.raises(ValueError):
        acoustics_decomposition(0.0, 1.0)
    with pytest.raises(ValueError):
        acoustics_decomposition(1.0, -1.0)


def test_system_zero_branches_output_zero():
    lam, r, _ = acoustics_decomposition(1.0, 1.0)
    model = SystemCINN(SystemHead(lam, r, [zero_params((1, 8, 1)) for _ in range(2)]))
    pts = np.array([[0.0, 0.0], [0.3, 0.2]])
    assert np.array_equal(predict(model, pts), np.zeros((2, 2)))


def test_system_residuals_zero_at_initialization():
    model = acoustics_model(seed=4)
    rng = np.random.default_rng(2)
    pts = rng.uniform([-1, 0], [1, 0.4], size=(100, 2))
    tape = Tape()
    staged = model.stage(tape)
    r1, r2 = acoustics_residuals(staged, tape, pts[:, 0], pts[:, 1], 1.0, 1.0)
    assert np.max(np.abs(tape.value(r1))) < 1e-8
    assert np.max(np.abs(tape.value(r2))) < 1e-8


def test_velocity_only_loss_moves_pressure_output():
    # gradient flows through the recombiner into both branches
    from cinn.training import TrainConfig, train

    model = acoustics_model(seed=6)
    rng = np.random.default_rng(3)
    pts = rng.uniform([-1, 0], [1, 0.4], size=(20, 2))
    targets = rng.standard_normal(20)
    p_before = predict(model, pts)[:, 0].copy()

    def loss_builder(tape, staged):
        x = record_const(tape, pts[:, 0])
        t = record_const(tape, pts[:, 1])
        outs = staged.outputs(x, t)
        return {"data": mse_loss(tape, outs[1], targets)}

    train(model, loss_builder, TrainConfig(iterations=3, seed=0))
    p_after = predict(model, pts)[:, 0]
    assert np.max(np.abs(p_after - p_before)) > 1e-6


def test_system_head_linear_response_through_recombiner():
    model = acoustics_model(seed=8)
    pts = np.array([[0.1, 0.05], [-0.4, 0.3], [0.8, 0.1]])
    base = predict(model, pts)
    delta = 0.37
    shifted = model.copy()
    shifted.head.branches[1].layers[-1].bias += delta
    moved = predict(shifted, pts)
    expected = base + np.outer(np.ones(3), model.head.recombiner[:, 1]) * delta
    assert np.max(np.abs(moved - expected)) < 1e-12


def test_system_head_validation():
    lam, r, _ = acoustics_decomposition(1.0, 1.0)
    with pytest.raises(ValueError):
        SystemHead(lam, np.array([[1.0, 1.0], [1.0, 1.0]]), [zero_params((1, 4, 1))] * 2)
    with pytest.raises(ValueError):
        SystemHead(lam, r, [zero_params((1, 4, 1))])


def test_recursive_at_time_zero_equals_body():
    body = glorot_init((1, 10, 1), seed=5)
    x = np.array([0.2, -0.7, 1.1])
    t = np.zeros(3)
    for depth in (1, 3, 5):
        model = RecursiveCINN(RecursiveHead(depth, body))
        got = predict(model, np.stack([x, t], axis=1))[:, 0]
        tape = Tape()
        from cinn.network import forward

        (ref,) = forward(body, tape, [record_const(tape, x)])
        assert np.max(np.abs(got - tape.value(ref))) < 1e-12


def test_recursive_zero_body_outputs_zero():
    model = RecursiveCINN(RecursiveHead(1, zero_params((1, 6, 1))))
    assert np.array_equal(predict(model, np.array([[0.4, 0.2]])), np.zeros((1, 1)))


def test_recursive_linear_body_matches_hand_iteration():
    # f(xi) = a * xi realized by a single linear layer
    a = 0.5
    body = ParamSet([Layer(np.array([[a]]), np.zeros(1))])
    x0, t0 = 0.8, 0.6
    u = a * x0
    for _ in range(4):
        u = a * (x0 - u * t0)
    model = RecursiveCINN(RecursiveHead(4, body))
    got = predict(model, np.array([[x0, t0]]))[0, 0]
    assert abs(got - u) < 1e-14


def test_recursive_depth_validation():
    with pytest.raises(ValueError):
        RecursiveHead(0, zero_params((1, 4, 1)))


def test_trainable_velocity_gradient_matches_fd():
    pts = np.random.default_rng(7).uniform([0, 0], [2, 0.8], size=(30, 2))
    targets = np.random.default_rng(8).standard_normal(30)

    def loss_at(v):
        model = advection_model(seed=11, v=v, trainable=True)
        tape = Tape()
        staged = model.stage(tape)
        out = staged.outputs(record_const(tape, pts[:, 0]), record_const(tape, pts[:, 1]))[0]
        return tape, staged, mse_loss(tape, out, targets)

    v0 = 1.3
    tape, staged, loss = loss_at(v0)
    grad_flat = staged.grad_flat(backward(tape, loss))
    # velocity weight is the trailing flat entry, stored as -v
    g_tw = grad_flat[-1]
    fd_tw = (
        float(loss_at(v0 - FD_STEP)[0].value(loss_at(v0 - FD_STEP)[2]))
        - float(loss_at(v0 + FD_STEP)[0].value(loss_at(v0 + FD_STEP)[2]))
    ) / (2 * FD_STEP)
    assert rel_err(g_tw, fd_tw) < 1e-5


def test_velocity_estimate_read_from_layer():
    model = advection_model(seed=0, v=1.7, trainable=True)
    tape = Tape()
    staged = model.stage(tape)
    assert staged.velocity_estimate() == pytest.approx(1.7)
    flat = model.get_flat()
    assert flat[-1] == pytest.approx(-1.7)  # negated time weight
    flat[-1] = -2.5
    model.set_flat(flat)
    assert float(model.head.velocity[0]) == pytest.approx(2.5)


def test_fixed_velocity_not_in_flat_params():
    model = advection_model(seed=0, v=1.0, trainable=False)
    assert model.get_flat().size == model.body.n_params


def test_model_spec_validation():
    spec = ModelSpec((2, 20, 1), head="none")
    assert spec.head == "none"
    with pytest.raises(ValueError):
        ModelSpec((2, 20, 1), head="fourier")
