"""Characteristics-informed neural networks for linear hyperbolic PDEs,
with PINN and plain-network baselines and a reproducible experiment harness.
"""

from . import autodiff, baselines, characteristics, harness, network, problems, training
from .autodiff import DualTraced, Tape, backward, dual_lift
from .characteristics import (
    AdvectionCINN,
    AdvectionHead,
    ModelSpec,
    PlainNet,
    RecursiveCINN,
    RecursiveHead,
    SystemCINN,
    SystemHead,
    acoustics_decomposition,
)
from .harness import ExperimentConfig, build_experiment, builtin_experiments, run_experiment
from .network import Dataset, ParamSet, glorot_init, mse_loss
from .problems import ProblemSpec, latin_hypercube, oracle_for
from .training import TrainConfig, adam_step, lp_error, train

__version__ = "0.1.0"
