"""Fully-connected tanh networks, Glorot initialization, and the MSE loss.

Layers are W x + b blocks with tanh between them and a linear output layer.
All arithmetic is float64. A ParamSet is immutable during evaluation;
mutation happens only through the optimizer in a single training thread.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DualTraced, Tape, Traced

__all__ = [
    "Layer",
    "ParamSet",
    "Dataset",
    "glorot_init",
    "forward",
    "mse_loss",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass
class ParamSet:
    """Weights and biases of one network; activation is tanh throughout."""

    layers: list[Layer]

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.layers[0].weight.shape[1],) + tuple(
            layer.weight.shape[0] for layer in self.layers
        )

    @property
    def n_params(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weight.ravel(), l.bias]) for l in self.layers])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for l in self.layers:
            n = l.weight.size
            l.weight = vec[i : i + n].reshape(l.weight.shape).copy()
            i += n
            n = l.bias.size
            l.bias = vec[i : i + n].copy()
            i += n
        if i != vec.size:
            raise ValueError(f"flat vector has {vec.size} entries, expected {i}")

    def copy(self) -> "ParamSet":
        return ParamSet([Layer(l.weight.copy(), l.bias.copy()) for l in self.layers])


@dataclass
class Dataset:
    """Point samples with targets; weights default to 1 per point."""

    inputs: np.ndarray  # (n, d)
    targets: np.ndarray  # (n, m)
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets must have equal length")

    def __len__(self) -> int:
        return len(self.inputs)


def glorot_init(layer_dims, seed: int) -> ParamSet:
    """Glorot-normal weights (std sqrt(2/(fan_in+fan_out))), zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise ValueError("need at least input and output dimensions")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        w = rng.normal(0.0, std, size=(fan_out, fan_in))
        layers.append(Layer(w, np.zeros(fan_out)))
    return ParamSet(layers)


def stage_params(params: ParamSet, tape: Tape) -> list[tuple[int, int]]:
    """Record every layer as leaves; returns (weight_id, bias_id) pairs.

    Weights are recorded transposed, (in, out), so the batched forward is a
    plain (n, in) @ (in, out) product.
    """
    return [
        (ad.record_leaf(tape, l.weight.T.copy()), ad.record_leaf(tape, l.bias))
        for l in params.layers
    ]


def forward(params: ParamSet, tape: Tape, inputs: list[Traced], staged=None) -> list[Traced]:
    """Taped network evaluation; returns one traced value per output.

    `inputs` holds one 1-d column (or DualTraced column pair) per input
    coordinate. When `staged` ids are given the recorded parameter leaves
    are reused, which keeps every evaluation in one differentiable graph.
    """
    if len(inputs) != params.layers[0].weight.shape[1]:
        raise ValueError(
            f"got {len(inputs)} inputs for first layer of width {params.layers[0].weight.shape[1]}"
        )
    if staged is None:
        staged = [
            (ad.record_const(tape, l.weight.T.copy()), ad.record_const(tape, l.bias))
            for l in params.layers
        ]
    h = ad.stack_cols(tape, list(inputs))
    last = len(staged) - 1
    for i, (w, b) in enumerate(staged):
        h = ad.add(tape, ad.matmul(tape, h, w), b)
        if i != last:
            h = ad.tanh(tape, h)
    out_dim = params.layers[-1].weight.shape[0]
    return [ad.col(tape, h, j) for j in range(out_dim)]


def mse_loss(tape: Tape, predictions, targets, weights=None) -> int:
    """(1/n) sum of squared errors; vector targets sum components per point."""
    if isinstance(predictions, (int, DualTraced)):
        predictions = [predictions]
    if len(predictions) == 0:
        raise ValueError("mse_loss needs at least one prediction")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    n = targets.shape[0]
    if n < 1:
        raise ValueError("mse_loss needs at least one point")
    if targets.shape[1] != len(predictions):
        raise ValueError(
            f"{len(predictions)} predicted fields but targets have {targets.shape[1]} components"
        )
    total = None
    for j, pred in enumerate(predictions):
        d = ad.sub(tape, pred, ad.record_const(tape, targets[:, j]))
        sq = ad.square(tape, d)
        if weights is not None:
            sq = ad.mul(tape, sq, ad.record_const(tape, np.asarray(weights, dtype=np.float64)))
        s = ad.sum_all(tape, sq)
        total = s if total is None else ad.add(tape, total, s)
    return ad.mul(tape, total, ad.record_const(tape, 1.0 / n))


_CHECKPOINT_FORMAT = "cinn-params-v1"


def save_checkpoint(params: ParamSet, path) -> None:
    """JSON checkpoint: layer dims header plus row-major weights per layer."""
    payload = {
        "format": _CHECKPOINT_FORMAT,
        "layer_dims": list(params.layer_dims),
        "layers": [
            {"weight": l.weight.ravel().tolist(), "bias": l.bias.tolist()}
            for l in params.layers
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)


def load_checkpoint(path) -> ParamSet:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"not a parameter checkpoint: {path}")
    dims = payload["layer_dims"]
    layers = []
    for (fan_in, fan_out), rec in zip(zip(dims[:-1], dims[1:]), payload["layers"]):
        w = np.array(rec["weight"], dtype=np.float64).reshape(fan_out, fan_in)
        b = np.array(rec["bias"], dtype=np.float64)
        layers.append(Layer(w, b))
    return ParamSet(layers)
