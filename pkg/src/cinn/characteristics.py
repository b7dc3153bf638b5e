"""Characteristic-transform network heads and end-to-end model wrappers.

A characteristic head maps space-time coordinates (x, t) to the label of
the characteristic curve through that point; composing it with a standard
network yields an output that satisfies the underlying transport PDE by
construction, at any parameter value.

Three heads are provided:

* AdvectionHead: xi = x - v t, with v fixed or trainable. The trainable
  parameter is stored as the time weight of the layer (which equals -v),
  so an inverse-problem velocity estimate is read directly from the layer.
* SystemHead: m branch networks evaluated at x - lambda_i t and recombined
  with an invertible matrix R, for hyperbolic systems diagonalized as
  A = R Lambda R^-1.
* RecursiveHead: unrolled fixed-point iteration u_{k+1} = f(x - u_k t) for
  scalar nonlinear conservation laws.

Models are immutable descriptions plus parameter arrays; training stages
them onto a tape (one leaf per parameter block) and mutates parameters only
between tape lifetimes. Clone per thread for parallel replications.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import network as net
from .autodiff import Tape, Traced
from .network import ParamSet

__all__ = [
    "AdvectionHead",
    "SystemHead",
    "RecursiveHead",
    "ModelSpec",
    "advection_transform",
    "cinn_forward",
    "acoustics_decomposition",
    "system_forward",
    "recursive_forward",
    "PlainNet",
    "AdvectionCINN",
    "SystemCINN",
    "RecursiveCINN",
]

HEAD_KINDS = ("none", "advection", "system-branches", "recursive-nonlinear")


@dataclass
class AdvectionHead:
    """Characteristic layer xi = x - v t with spatial weights fixed at 1."""

    velocity: np.ndarray  # (d,)
    trainable: bool = False

    def __post_init__(self):
        self.velocity = np.atleast_1d(np.asarray(self.velocity, dtype=np.float64))

    @property
    def time_weight(self) -> np.ndarray:
        return -self.velocity


@dataclass
class SystemHead:
    """Branch networks on decoupled characteristics, recombined by R."""

    eigenvalues: np.ndarray  # (m,)
    recombiner: np.ndarray  # (m, m), invertible
    branches: list[ParamSet]

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        self.recombiner = np.asarray(self.recombiner, dtype=np.float64)
        m = self.eigenvalues.size
        if self.recombiner.shape != (m, m):
            raise ValueError("recombiner shape must match the number of eigenvalues")
        if len(self.branches) != m:
            raise ValueError("one branch network per eigenvalue is required")
        det = np.linalg.det(self.recombiner)
        scale = np.abs(self.recombiner).max() or 1.0
        if abs(det) < 1e-12 * scale**m:
            raise ValueError("recombiner matrix is numerically singular")


@dataclass
class RecursiveHead:
    """Unrolled recursion u_{k+1} = f(x - u_k t), seeded with u_0 = f(x)."""

    unroll_depth: int
    body: ParamSet

    def __post_init__(self):
        if self.unroll_depth < 1:
            raise ValueError("unroll depth must be at least 1")


@dataclass
class ModelSpec:
    """Architecture description used by the experiment harness."""

    body_dims: tuple[int, ...]
    head: str = "none"
    trainable_velocity: bool = False
    unroll_depth: int = 4

    def __post_init__(self):
        if self.head not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {self.head!r}; expected one of {HEAD_KINDS}")


def advection_transform(head: AdvectionHead, tape: Tape, x: list[Traced], t: Traced,
                        time_weight_ids: list[int] | None = None) -> list[Traced]:
    """Record xi_i = x_i - v_i t; trainable heads pass staged weight ids."""
    d = head.velocity.size
    if len(x) != d:
        raise ValueError(f"{len(x)} spatial inputs but velocity has {d} components")
    out = []
    for i in range(d):
        if time_weight_ids is not None:
            w = time_weight_ids[i]
        else:
            w = ad.record_const(tape, head.time_weight[i])
        out.append(ad.add(tape, x[i], ad.mul(tape, w, t)))
    return out


def cinn_forward(head: AdvectionHead, body: ParamSet, tape: Tape, x: list[Traced],
                 t: Traced, staged=None, time_weight_ids=None) -> Traced:
    """u = body(xi(x, t)); constant along each characteristic line."""
    xi = advection_transform(head, tape, x, t, time_weight_ids)
    (out,) = net.forward(body, tape, xi, staged=staged)
    return out


def acoustics_decomposition(K0: float, c0: float):
    """Eigen-decomposition of the linear-acoustics coefficient matrix.

    Returns (Lambda, R, R^-1) with Lambda = diag(-c0, c0) and R built from
    the impedance Z0 = K0/c0; R Lambda R^-1 reproduces [[0, K0], [c0^2/K0, 0]].
    """
    if K0 <= 0 or c0 <= 0:
        raise ValueError("bulk modulus and sound speed must be positive")
    z0 = K0 / c0
    lam = np.array([-c0, c0])
    r = np.array([[-z0, z0], [1.0, 1.0]])
    r_inv = np.array([[-1.0, z0], [1.0, z0]]) / (2.0 * z0)
    return lam, r, r_inv


def system_forward(head: SystemHead, tape: Tape, x: Traced, t: Traced,
                   staged=None) -> list[Traced]:
    """u = R w with w_i = branch_i(x - lambda_i t); gradients reach every
    branch from any output component because R couples them."""
    ws = []
    for i, branch in enumerate(head.branches):
        lam = ad.record_const(tape, head.eigenvalues[i])
        xi = ad.sub(tape, x, ad.mul(tape, lam, t))
        (w,) = net.forward(branch, tape, [xi], staged=None if staged is None else staged[i])
        ws.append(w)
    m = head.eigenvalues.size
    outputs = []
    for j in range(m):
        acc = None
        for i in range(m):
            term = ad.mul(tape, ad.record_const(tape, head.recombiner[j, i]), ws[i])
            acc = term if acc is None else ad.add(tape, acc, term)
        outputs.append(acc)
    return outputs


def recursive_forward(head: RecursiveHead, tape: Tape, x: Traced, t: Traced,
                      staged=None) -> Traced:
    """K-times unrolled u_{k+1} = f(x - u_k t), gradients flowing through
    every unrolled copy of the shared body."""
    (u,) = net.forward(head.body, tape, [x], staged=staged)
    for _ in range(head.unroll_depth):
        xi = ad.sub(tape, x, ad.mul(tape, u, t))
        (u,) = net.forward(head.body, tape, [xi], staged=staged)
    return u


# ---------------------------------------------------------------------------
# Model wrappers: a uniform stage/evaluate/flat-parameter surface for the
# trainer and the loss builders. `outputs` accepts plain node ids or
# DualTraced coordinates and returns one traced value per field.


class _StagedBase:
    def __init__(self, tape: Tape, model):
        self.tape = tape
        self.model = model

    def velocity_estimate(self):
        return None


class PlainNet:
    """Body network on raw (x, t); optional auxiliary trainable velocity
    parameter for inverse problems solved with a residual loss."""

    def __init__(self, params: ParamSet, velocity_param: float | None = None):
        self.params = params
        self.velocity_param = velocity_param

    @property
    def n_outputs(self) -> int:
        return self.params.layers[-1].weight.shape[0]

    def get_flat(self) -> np.ndarray:
        flat = self.params.flat()
        if self.velocity_param is not None:
            flat = np.concatenate([flat, [self.velocity_param]])
        return flat

    def set_flat(self, vec: np.ndarray) -> None:
        if self.velocity_param is not None:
            self.params.set_flat(vec[:-1])
            self.velocity_param = float(vec[-1])
        else:
            self.params.set_flat(vec)

    def stage(self, tape: Tape):
        staged = _StagedPlain(tape, self)
        staged.layer_ids = net.stage_params(self.params, tape)
        staged.velocity_id = (
            None if self.velocity_param is None else ad.record_leaf(tape, self.velocity_param)
        )
        return staged

    def copy(self) -> "PlainNet":
        return PlainNet(self.params.copy(), self.velocity_param)


class _StagedPlain(_StagedBase):
    layer_ids: list
    velocity_id: int | None

    def outputs(self, x: Traced, t: Traced) -> list[Traced]:
        return net.forward(self.model.params, self.tape, [x, t], staged=self.layer_ids)

    def grad_flat(self, adjoints) -> np.ndarray:
        parts = _collect_layer_grads(self.model.params, self.layer_ids, adjoints)
        if self.velocity_id is not None:
            g = adjoints[self.velocity_id]
            parts.append(np.array([0.0 if g is None else float(g)]))
        return np.concatenate(parts)

    def velocity_estimate(self):
        return self.model.velocity_param


class AdvectionCINN:
    """Advection characteristic layer followed by a body network."""

    def __init__(self, head: AdvectionHead, body: ParamSet):
        if body.layers[0].weight.shape[1] != head.velocity.size:
            raise ValueError("body input width must match the spatial dimension")
        self.head = head
        self.body = body

    n_outputs = 1

    def get_flat(self) -> np.ndarray:
        flat = self.body.flat()
        if self.head.trainable:
            flat = np.concatenate([flat, self.head.time_weight])
        return flat

    def set_flat(self, vec: np.ndarray) -> None:
        if self.head.trainable:
            d = self.head.velocity.size
            self.body.set_flat(vec[:-d])
            self.head.velocity = -vec[-d:].copy()
        else:
            self.body.set_flat(vec)

    def stage(self, tape: Tape):
        staged = _StagedAdvection(tape, self)
        staged.layer_ids = net.stage_params(self.body, tape)
        staged.time_weight_ids = (
            [ad.record_leaf(tape, w) for w in self.head.time_weight]
            if self.head.trainable
            else None
        )
        return staged

    def copy(self) -> "AdvectionCINN":
        head = AdvectionHead(self.head.velocity.copy(), self.head.trainable)
        return AdvectionCINN(head, self.body.copy())


class _StagedAdvection(_StagedBase):
    layer_ids: list
    time_weight_ids: list[int] | None

    def outputs(self, x: Traced, t: Traced) -> list[Traced]:
        out = cinn_forward(
            self.model.head,
            self.model.body,
            self.tape,
            [x],
            t,
            staged=self.layer_ids,
            time_weight_ids=self.time_weight_ids,
        )
        return [out]

    def grad_flat(self, adjoints) -> np.ndarray:
        parts = _collect_layer_grads(self.model.body, self.layer_ids, adjoints)
        if self.time_weight_ids is not None:
            gs = [adjoints[i] for i in self.time_weight_ids]
            parts.append(np.array([0.0 if g is None else float(g) for g in gs]))
        return np.concatenate(parts)

    def velocity_estimate(self):
        if not self.model.head.trainable:
            return None
        return float(self.model.head.velocity[0])


class SystemCINN:
    """Multi-branch architecture for linear hyperbolic systems."""

    def __init__(self, head: SystemHead):
        self.head = head

    @property
    def n_outputs(self) -> int:
        return self.head.eigenvalues.size

    def get_flat(self) -> np.ndarray:
        return np.concatenate([b.flat() for b in self.head.branches])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for b in self.head.branches:
            n = b.n_params
            b.set_flat(vec[i : i + n])
            i += n

    def stage(self, tape: Tape):
        staged = _StagedSystem(tape, self)
        staged.branch_ids = [net.stage_params(b, tape) for b in self.head.branches]
        return staged

    def copy(self) -> "SystemCINN":
        head = SystemHead(
            self.head.eigenvalues.copy(),
            self.head.recombiner.copy(),
            [b.copy() for b in self.head.branches],
        )
        return SystemCINN(head)


class _StagedSystem(_StagedBase):
    branch_ids: list

    def outputs(self, x: Traced, t: Traced) -> list[Traced]:
        return system_forward(self.model.head, self.tape, x, t, staged=self.branch_ids)

    def grad_flat(self, adjoints) -> np.ndarray:
        parts = []
        for branch, ids in zip(self.model.head.branches, self.branch_ids):
            parts.extend(_collect_layer_grads(branch, ids, adjoints))
        return np.concatenate(parts)


class RecursiveCINN:
    """Unrolled recursive architecture for scalar nonlinear transport."""

    def __init__(self, head: RecursiveHead):
        self.head = head

    n_outputs = 1

    def get_flat(self) -> np.ndarray:
        return self.head.body.flat()

    def set_flat(self, vec: np.ndarray) -> None:
        self.head.body.set_flat(vec)

    def stage(self, tape: Tape):
        staged = _StagedRecursive(tape, self)
        staged.layer_ids = net.stage_params(self.head.body, tape)
        return staged

    def copy(self) -> "RecursiveCINN":
        return RecursiveCINN(RecursiveHead(self.head.unroll_depth, self.head.body.copy()))


class _StagedRecursive(_StagedBase):
    layer_ids: list

    def outputs(self, x: Traced, t: Traced) -> list[Traced]:
        return [recursive_forward(self.model.head, self.tape, x, t, staged=self.layer_ids)]

    def grad_flat(self, adjoints) -> np.ndarray:
        return np.concatenate(_collect_layer_grads(self.model.head.body, self.layer_ids, adjoints))


def _collect_layer_grads(params: ParamSet, layer_ids, adjoints) -> list[np.ndarray]:
    parts = []
    for (w_id, b_id), layer in zip(layer_ids, params.layers):
        gw = adjoints[w_id]
        gw = np.zeros_like(layer.weight) if gw is None else np.ascontiguousarray(gw.T)
        gb = adjoints[b_id]
        gb = np.zeros_like(layer.bias) if gb is None else gb
        parts.append(np.concatenate([gw.ravel(), gb]))
    return parts


def predict(model, points: np.ndarray) -> np.ndarray:
    """Evaluate a model on (n, 2) points; returns (n, n_outputs)."""
    points = np.asarray(points, dtype=np.float64)
    tape = Tape()
    staged = model.stage(tape)
    x = ad.record_const(tape, points[:, 0])
    t = ad.record_const(tape, points[:, 1])
    outs = staged.outputs(x, t)
    return np.stack([tape.value(o) for o in outs], axis=1)
