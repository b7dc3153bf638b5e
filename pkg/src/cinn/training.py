"""ADAM optimizer, full-batch training loop, and relative Lp error metrics.

Training is deterministic given (model initialization, data, config): the
loop itself draws no randomness. One trainer per thread; replications run in
parallel with independent models and tapes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import characteristics
from .autodiff import Tape, backward
from .baselines import total_loss

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "AdamState",
    "adam_step",
    "train",
    "lp_error",
]


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              config: TrainConfig) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update; returns new parameters and state."""
    if params.shape != grads.shape:
        raise ValueError("parameter and gradient shapes differ")
    t = state.step + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grads
    v = config.beta2 * state.v + (1.0 - config.beta2) * grads * grads
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    new_params = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return new_params, AdamState(m, v, t)


@dataclass
class TrainHistory:
    """Per-logged-iteration loss parts, wall time, and velocity estimates."""

    part_names: list[str] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    parts: list[list[float]] = field(default_factory=list)
    totals: list[float] = field(default_factory=list)
    elapsed: list[float] = field(default_factory=list)
    velocity: list[float | None] = field(default_factory=list)
    wall_seconds: float = 0.0
    aborted: bool = False
    abort_reason: str = ""

    def log(self, iteration, part_values, total, elapsed, velocity):
        self.iterations.append(iteration)
        self.parts.append(part_values)
        self.totals.append(total)
        self.elapsed.append(elapsed)
        self.velocity.append(velocity)

    def csv_rows(self):
        header = ["iteration", *self.part_names, "total", "velocity_estimate", "elapsed_seconds"]
        yield header
        for i, it in enumerate(self.iterations):
            vel = self.velocity[i]
            yield [
                it,
                *[repr(p) for p in self.parts[i]],
                repr(self.totals[i]),
                "" if vel is None else repr(vel),
                repr(self.elapsed[i]),
            ]


def train(model, loss_builder, config: TrainConfig):
    """Full-batch gradient descent on the composed loss.

    `loss_builder(tape, staged)` returns a dict of named loss parts (node
    ids); their unweighted sum is minimized. The model's parameters are
    updated in place. A non-finite loss aborts the run with a diagnostic in
    the returned history rather than raising.
    """
    flat = model.get_flat()
    state = AdamState.zeros(flat.size)
    history = TrainHistory()
    t0 = time.perf_counter()

    def evaluate(log_iteration: int | None):
        tape = Tape()
        staged = model.stage(tape)
        parts = loss_builder(tape, staged)
        if not history.part_names:
            history.part_names = list(parts)
        total_id = total_loss(tape, list(parts.values()))
        total = float(tape.value(total_id))
        if log_iteration is not None:
            history.log(
                log_iteration,
                [float(tape.value(p)) for p in parts.values()],
                total,
                time.perf_counter() - t0,
                staged.velocity_estimate(),
            )
        return tape, staged, total_id, total

    for it in range(config.iterations):
        should_log = it % config.log_every == 0
        tape, staged, total_id, total = evaluate(it if should_log else None)
        if not np.isfinite(total):
            history.aborted = True
            history.abort_reason = f"non-finite loss {total} at iteration {it}"
            break
        grads = staged.grad_flat(backward(tape, total_id))
        flat, state = adam_step(flat, grads, state, config)
        model.set_flat(flat)

    if not history.aborted:
        _, _, _, total = evaluate(config.iterations)
        if not np.isfinite(total):
            history.aborted = True
            history.abort_reason = f"non-finite loss {total} after final step"
    history.wall_seconds = time.perf_counter() - t0
    return model, history


def _evaluate_fields(obj, points: np.ndarray) -> np.ndarray:
    if hasattr(obj, "stage"):
        return characteristics.predict(obj, points)
    out = np.asarray(obj(points), dtype=np.float64)
    return out[:, None] if out.ndim == 1 else out


def lp_error(model, oracle, test_points, p: int, field: int = 0) -> float:
    """Relative Lp distance between model and oracle over the test points:
    (sum |pred - exact|^p)^(1/p) / (sum |exact|^p)^(1/p)."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    pts = np.asarray(test_points, dtype=np.float64)
    if len(pts) < 1:
        raise ValueError("need at least one test point")
    pred = _evaluate_fields(model, pts)[:, field]
    exact = _evaluate_fields(oracle, pts)[:, field]
    denom = np.sum(np.abs(exact) ** p) ** (1.0 / p)
    if denom == 0.0:
        raise ValueError("relative Lp error undefined: oracle is zero on the grid")
    return float(np.sum(np.abs(pred - exact) ** p) ** (1.0 / p) / denom)
