"""PDE residual losses on collocation points and soft boundary penalties.

The residual machinery serves two roles: it is the training signal of the
PINN baselines, and it is the measuring stick that verifies characteristic
architectures satisfy their PDE identically. Everything here is stateless
given a tape and follows the single-training-thread contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Traced, jet_lift

__all__ = [
    "CollocationSet",
    "advection_residual",
    "acoustics_residuals",
    "residual_loss",
    "periodic_penalty",
    "total_loss",
]


@dataclass
class CollocationSet:
    """Interior points where a PDE residual is penalized."""

    points: np.ndarray  # (n, 2) of (x, t)
    bounds: tuple[tuple[float, float], tuple[float, float]] | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.bounds is not None:
            for j, (lo, hi) in enumerate(self.bounds):
                c = self.points[:, j]
                if np.any(c < lo) or np.any(c > hi):
                    raise ValueError(f"collocation coordinate {j} escapes [{lo}, {hi}]")

    def __len__(self) -> int:
        return len(self.points)


def _lifted(model, tape: Tape, x, t) -> list[Traced]:
    """Model outputs carrying both input-direction tangents (d/dx, d/dt)."""
    xj, tj = jet_lift(
        tape, [np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64)], 2
    )
    return model.outputs(xj, tj)


def advection_residual(model, tape: Tape, x, t, v) -> int:
    """Taped r = u_t + v u_x at the given points.

    `v` may be a float (forward problem) or a node id (inverse problem with
    a trainable velocity parameter).
    """
    u_x, u_t = _lifted(model, tape, x, t)[0].tangents
    v_node = v if isinstance(v, int) else ad.record_const(tape, float(v))
    return ad.add(tape, u_t, ad.mul(tape, v_node, u_x))


def acoustics_residuals(model2, tape: Tape, x, t, K0: float, c0: float) -> tuple[int, int]:
    """Taped residuals of the linear-acoustics system for a (p, v) model:
    r1 = p_t + K0 v_x and r2 = v_t + (c0^2/K0) p_x."""
    p_jet, v_jet = _lifted(model2, tape, x, t)
    p_x, p_t = p_jet.tangents
    v_x, v_t = v_jet.tangents
    r1 = ad.add(tape, p_t, ad.mul(tape, ad.record_const(tape, K0), v_x))
    r2 = ad.add(tape, v_t, ad.mul(tape, ad.record_const(tape, c0 * c0 / K0), p_x))
    return r1, r2


def residual_loss(tape: Tape, residuals) -> int:
    """Mean squared residual; systems sum the mean squares of each residual."""
    if isinstance(residuals, int):
        residuals = [residuals]
    if len(residuals) == 0:
        raise ValueError("residual_loss needs at least one residual")
    total = None
    for r in residuals:
        n = tape.value(r).size
        if n < 1:
            raise ValueError("empty collocation set")
        term = ad.mul(
            tape, ad.sum_all(tape, ad.square(tape, r)), ad.record_const(tape, 1.0 / n)
        )
        total = term if total is None else ad.add(tape, total, term)
    return total


def mean_square_gap(tape: Tape, left: Traced, right: Traced, n: int) -> int:
    """(1/n) sum |left - right|^2; the penalty core shared by fused batches."""
    gap = ad.square(tape, ad.sub(tape, left, right))
    return ad.mul(tape, ad.sum_all(tape, gap), ad.record_const(tape, 1.0 / n))


def periodic_penalty(model, tape: Tape, times, x_left: float, x_right: float) -> int:
    """(1/n_b) sum |u(x_left, t_b) - u(x_right, t_b)|^2 over boundary times."""
    times = np.asarray(times, dtype=np.float64)
    if times.size < 1:
        raise ValueError("periodic penalty needs at least one time point")
    t = ad.record_const(tape, times)
    left = model.outputs(ad.record_const(tape, np.full_like(times, x_left)), t)[0]
    right = model.outputs(ad.record_const(tape, np.full_like(times, x_right)), t)[0]
    return mean_square_gap(tape, left, right, times.size)


def total_loss(tape: Tape, parts, weights=None) -> int:
    """Sum of loss parts; weights default to 1, matching the plain-sum
    baseline (hooks exist for weighted variants)."""
    if isinstance(parts, int):
        parts = [parts]
    if len(parts) == 0:
        raise ValueError("total_loss needs at least one part")
    total = None
    for i, p in enumerate(parts):
        if weights is not None and weights[i] != 1.0:
            p = ad.mul(tape, p, ad.record_const(tape, float(weights[i])))
        total = p if total is None else ad.add(tape, total, p)
    return total
