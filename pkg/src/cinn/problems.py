"""Problem definitions, exact-solution oracles, and deterministic samplers.

Four benchmark problems are provided: the step-profile (Riemann) advection
forward problem, its inverse variant with noisy interior data, advection on
a periodic domain with large velocities, and a linear-acoustics system where
only the velocity field is observed.

Each oracle exists in two forms: a vectorized numpy evaluator for targets
and metrics, and a taped evaluator built from tape primitives so the oracle
itself can be probed with the same residual operators used on models.
All samplers are pure functions of (spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Traced
from .network import Dataset

__all__ = [
    "SamplingPlan",
    "ProblemSpec",
    "ExactOracle",
    "riemann_exact",
    "periodic_exact",
    "acoustics_exact",
    "oracle_for",
    "sample_initial_boundary",
    "sample_lateral_boundaries",
    "sample_interior_data",
    "penalty_times",
    "latin_hypercube",
    "add_noise",
    "evaluation_grid",
    "riemann_problem",
    "periodic_problem",
    "acoustics_problem",
    "inverse_problem",
]

PROBLEM_KINDS = ("riemann_advection", "periodic_advection", "acoustics", "inverse_advection")


@dataclass(frozen=True)
class SamplingPlan:
    initial: int = 50
    lateral: int = 5
    collocation: int = 300
    interior_data: int = 300
    penalty_times: int = 1000


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    x_bounds: tuple[float, float]
    t_bounds: tuple[float, float]
    v: float = 1.0
    L: float = 2.0
    u_l: float = 1.0
    u_r: float = 0.0
    K0: float = 1.0
    c0: float = 1.0
    sigma_noise: float = 0.0
    sampling: SamplingPlan = SamplingPlan()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.t_bounds[1] <= self.t_bounds[0]:
            raise ValueError("time horizon must be positive")
        if self.kind in ("riemann_advection", "inverse_advection"):
            if self.v * self.t_bounds[1] >= self.L / 2:
                raise ValueError(
                    "v*T must stay below L/2 so the step does not leave the domain"
                )
        if self.sigma_noise < 0:
            raise ValueError("noise level must be nonnegative")

    @property
    def bounds(self):
        return (self.x_bounds, self.t_bounds)

    @property
    def T(self) -> float:
        return self.t_bounds[1]


def riemann_problem(seed: int = 0, v: float = 1.0, L: float = 2.0, T: float = 0.8,
                    u_l: float = 1.0, u_r: float = 0.0) -> ProblemSpec:
    return ProblemSpec("riemann_advection", (0.0, L), (0.0, T), v=v, L=L, u_l=u_l, u_r=u_r,
                       seed=seed)


def inverse_problem(sigma: float, seed: int = 0, v: float = 1.0) -> ProblemSpec:
    return ProblemSpec("inverse_advection", (0.0, 2.0), (0.0, 0.8), v=v, L=2.0,
                       sigma_noise=sigma, seed=seed)


def periodic_problem(v: float, seed: int = 0, T: float = 1.0,
                     collocation: int = 10_000) -> ProblemSpec:
    sampling = SamplingPlan(initial=200, collocation=collocation, penalty_times=1000)
    return ProblemSpec("periodic_advection", (0.0, 2.0 * np.pi), (0.0, T), v=v,
                       sampling=sampling, seed=seed)


def acoustics_problem(seed: int = 0, K0: float = 1.0, c0: float = 1.0) -> ProblemSpec:
    sampling = SamplingPlan(interior_data=200, collocation=300)
    return ProblemSpec("acoustics", (-1.0, 1.0), (0.0, 0.4), K0=K0, c0=c0, seed=seed)


# ---------------------------------------------------------------------------
# Exact solutions.


def riemann_exact(x, t, v: float, L: float, u_l: float, u_r: float):
    """Translated step: u_l where x - v t <= L/2 (ties resolve left), else u_r."""
    xi = np.asarray(x, dtype=np.float64) - v * np.asarray(t, dtype=np.float64)
    return np.where(xi <= L / 2, u_l, u_r)


def periodic_exact(x, t, v: float):
    """sin(x - v t): the periodic initial profile translated at speed v."""
    return np.sin(np.asarray(x, dtype=np.float64) - v * np.asarray(t, dtype=np.float64))


def acoustics_exact(x, t, c0: float, Z0: float):
    """Pressure and velocity of two counter-propagating gaussian pulses."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    right = np.exp(-100.0 * (x - c0 * t) ** 2)
    left = np.exp(-100.0 * (x + c0 * t) ** 2)
    p = 0.5 * (right + left)
    v = (right - left) / (2.0 * Z0)
    return p, v


@dataclass(frozen=True)
class ExactOracle:
    """Closed-form solution with numpy and taped evaluators."""

    n_fields: int
    evaluator: callable  # (n, 2) points -> (n, n_fields)
    taped: callable  # (tape, x traced, t traced) -> list of traced fields

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.evaluator(np.asarray(points, dtype=np.float64))

    def as_model(self, tape: Tape):
        return _OracleModel(tape, self.taped)


class _OracleModel:
    """Adapter so residual operators can probe an oracle like a model."""

    def __init__(self, tape: Tape, taped):
        self.tape = tape
        self._taped = taped

    def outputs(self, x: Traced, t: Traced) -> list[Traced]:
        return self._taped(self.tape, x, t)


def oracle_for(spec: ProblemSpec) -> ExactOracle:
    if spec.kind in ("riemann_advection", "inverse_advection"):
        v, L, u_l, u_r = spec.v, spec.L, spec.u_l, spec.u_r

        def evaluator(pts):
            return riemann_exact(pts[:, 0], pts[:, 1], v, L, u_l, u_r)[:, None]

        def taped(tape, x, t):
            # u = u_r + (u_l - u_r) * step(L/2 - xi); step has derivative 0
            # away from the jump, so the residual check sees the same
            # piecewise-constant structure the closed form has.
            xi = ad.sub(tape, x, ad.mul(tape, ad.record_const(tape, v), t))
            z = ad.sub(tape, ad.record_const(tape, L / 2), xi)
            u = ad.add(
                tape,
                ad.record_const(tape, u_r),
                ad.mul(tape, ad.record_const(tape, u_l - u_r), ad.step(tape, z)),
            )
            return [u]

        return ExactOracle(1, evaluator, taped)

    if spec.kind == "periodic_advection":
        v = spec.v

        def evaluator(pts):
            return periodic_exact(pts[:, 0], pts[:, 1], v)[:, None]

        def taped(tape, x, t):
            xi = ad.sub(tape, x, ad.mul(tape, ad.record_const(tape, v), t))
            return [ad.sin(tape, xi)]

        return ExactOracle(1, evaluator, taped)

    c0, K0 = spec.c0, spec.K0
    z0 = K0 / c0

    def evaluator(pts):
        p, vel = acoustics_exact(pts[:, 0], pts[:, 1], c0, z0)
        return np.stack([p, vel], axis=1)

    def taped(tape, x, t):
        ct = ad.mul(tape, ad.record_const(tape, c0), t)
        hundred = ad.record_const(tape, 100.0)
        right = ad.exp(tape, ad.neg(tape, ad.mul(tape, hundred, ad.square(tape, ad.sub(tape, x, ct)))))
        left = ad.exp(tape, ad.neg(tape, ad.mul(tape, hundred, ad.square(tape, ad.add(tape, x, ct)))))
        half = ad.record_const(tape, 0.5)
        p = ad.mul(tape, half, ad.add(tape, right, left))
        vel = ad.mul(tape, ad.record_const(tape, 1.0 / (2.0 * z0)), ad.sub(tape, right, left))
        return [p, vel]

    return ExactOracle(2, evaluator, taped)


# ---------------------------------------------------------------------------
# Samplers. Boundary samples are evenly spaced with endpoints included;
# interior samples use Latin hypercube stratification.


def sample_initial_boundary(spec: ProblemSpec) -> Dataset:
    """Evenly spaced points on t = 0 with exact targets."""
    n = spec.sampling.initial
    if n < 1:
        raise ValueError("need at least one initial point")
    x = np.linspace(spec.x_bounds[0], spec.x_bounds[1], n)
    pts = np.stack([x, np.zeros(n)], axis=1)
    return Dataset(pts, oracle_for(spec)(pts))


def sample_lateral_boundaries(spec: ProblemSpec) -> Dataset:
    """Evenly spaced points on x = x_lo and x = x_hi with exact targets."""
    if spec.kind not in ("riemann_advection", "inverse_advection"):
        raise ValueError(f"no lateral boundary data for kind {spec.kind!r}")
    n = spec.sampling.lateral
    if n < 1:
        raise ValueError("need at least one lateral point")
    t = np.linspace(spec.t_bounds[0], spec.t_bounds[1], n)
    left = np.stack([np.full(n, spec.x_bounds[0]), t], axis=1)
    right = np.stack([np.full(n, spec.x_bounds[1]), t], axis=1)
    pts = np.concatenate([left, right])
    return Dataset(pts, oracle_for(spec)(pts))


def sample_interior_data(spec: ProblemSpec, seed: int) -> Dataset:
    """Latin-hypercube interior samples with exact targets (all fields)."""
    pts = latin_hypercube(spec.sampling.interior_data, spec.bounds, seed)
    return Dataset(pts, oracle_for(spec)(pts))


def penalty_times(spec: ProblemSpec, mode: str = "even", seed: int | None = None) -> np.ndarray:
    """Boundary-penalty time points: an even grid including endpoints, or
    uniform random draws when mode='random'."""
    n = spec.sampling.penalty_times
    if mode == "even":
        return np.linspace(spec.t_bounds[0], spec.t_bounds[1], n)
    if mode == "random":
        rng = np.random.default_rng(seed)
        return rng.uniform(spec.t_bounds[0], spec.t_bounds[1], size=n)
    raise ValueError(f"unknown penalty time mode {mode!r}")


def latin_hypercube(n: int, bounds, seed) -> np.ndarray:
    """n stratified points: each coordinate has exactly one sample per
    stratum [k/n, (k+1)/n). Deterministic given the seed."""
    if n < 1:
        raise ValueError("need at least one sample")
    bounds = [(float(lo), float(hi)) for lo, hi in bounds]
    for lo, hi in bounds:
        if not hi > lo:
            raise ValueError(f"degenerate bounds ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    pts = np.empty((n, len(bounds)))
    for j, (lo, hi) in enumerate(bounds):
        strata = rng.permutation(n)
        u = rng.uniform(size=n)
        pts[:, j] = lo + (hi - lo) * (strata + u) / n
    return pts


def add_noise(dataset: Dataset, sigma: float, seed) -> Dataset:
    """Independent zero-mean gaussian noise of std sigma on the targets."""
    if sigma < 0:
        raise ValueError("noise level must be nonnegative")
    rng = np.random.default_rng(seed)
    noisy = dataset.targets + rng.normal(0.0, sigma, size=dataset.targets.shape)
    return Dataset(dataset.inputs.copy(), noisy, dataset.weights)


def evaluation_grid(spec: ProblemSpec, nx: int = 256, nt: int = 100) -> np.ndarray:
    """Uniform space-time evaluation grid for L1/L2 errors and field dumps."""
    x = np.linspace(spec.x_bounds[0], spec.x_bounds[1], nx)
    t = np.linspace(spec.t_bounds[0], spec.t_bounds[1], nt)
    xx, tt = np.meshgrid(x, t, indexing="ij")
    return np.stack([xx.ravel(), tt.ravel()], axis=1)
