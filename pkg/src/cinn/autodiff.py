"""Tape-based reverse-mode automatic differentiation with a recorded
forward-tangent channel.

Every value on the tape is a float64 numpy array: a plain scalar is the 0-d
case, and a batch of point evaluations is a 1-d column or a 2-d block. One
node is recorded per primitive applied to a whole array, so a reverse sweep
over the node sequence yields gradients for an entire batch at once.

The forward-tangent channel (`DualTraced`, `dual_lift`) records directional
derivatives as ordinary tape nodes, which makes quantities like du/dx
themselves differentiable with respect to parameters by a later `backward`.

A Tape is single-threaded and reset between optimizer steps; independent
tapes may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tape",
    "TapeNode",
    "DualTraced",
    "JetTraced",
    "record_leaf",
    "record_const",
    "record_unary",
    "record_binary",
    "backward",
    "gradients",
    "dual_lift",
    "jet_lift",
]

_UNARY_OPS = frozenset({"neg", "tanh", "exp", "sin", "cos", "recip", "square", "step"})
_BINARY_OPS = frozenset({"add", "sub", "mul", "matmul"})
# Structural kinds recorded through dedicated helpers below.
_OTHER_OPS = frozenset({"leaf", "const", "stack", "col", "rows", "sum"})
_ALL_OPS = _UNARY_OPS | _BINARY_OPS | _OTHER_OPS


@dataclass(frozen=True)
class TapeNode:
    """Read-only view of one recorded node."""

    id: int
    op_kind: str
    value: np.ndarray
    parents: tuple[int, ...]
    local_partials: tuple[tuple[int, np.ndarray | float], ...]


@dataclass(frozen=True)
class DualTraced:
    """A taped value paired with its taped directional derivative."""

    primal: int
    tangent: int


@dataclass(frozen=True)
class JetTraced:
    """A taped value carrying several directional derivatives at once.

    Equivalent to one DualTraced per direction but the primal chain is
    recorded only once; used by residual operators that need both du/dx
    and du/dt.
    """

    primal: int
    tangents: tuple[int, ...]


Traced = int | DualTraced | JetTraced


class Tape:
    """Append-only record of primitives; node ids are dense and topological."""

    __slots__ = ("_values", "_kinds", "_parents", "_aux")

    def __init__(self):
        self._values: list[np.ndarray] = []
        self._kinds: list[str] = []
        self._parents: list[tuple[int, ...]] = []
        self._aux: list = []

    def __len__(self) -> int:
        return len(self._values)

    def reset(self) -> None:
        self._values.clear()
        self._kinds.clear()
        self._parents.clear()
        self._aux.clear()

    def value(self, i: int) -> np.ndarray:
        return self._values[i]

    def node(self, i: int) -> TapeNode:
        return TapeNode(
            id=i,
            op_kind=self._kinds[i],
            value=self._values[i],
            parents=self._parents[i],
            local_partials=self._local_partials(i),
        )

    # internal append; returns the new node id
    def _record(self, kind: str, parents: tuple[int, ...], aux, value) -> int:
        i = len(self._values)
        self._values.append(value)
        self._kinds.append(kind)
        self._parents.append(parents)
        self._aux.append(aux)
        return i

    def _local_partials(self, i):
        kind = self._kinds[i]
        parents = self._parents[i]
        v = self._values
        if kind in ("leaf", "const"):
            return ()
        if kind == "add":
            return ((parents[0], 1.0), (parents[1], 1.0))
        if kind == "sub":
            return ((parents[0], 1.0), (parents[1], -1.0))
        if kind == "mul":
            a, b = parents
            return ((a, v[b]), (b, v[a]))
        if kind == "neg":
            return ((parents[0], -1.0),)
        if kind == "tanh":
            return ((parents[0], 1.0 - v[i] ** 2),)
        if kind == "exp":
            return ((parents[0], v[i]),)
        if kind == "sin":
            return ((parents[0], np.cos(v[parents[0]])),)
        if kind == "cos":
            return ((parents[0], -np.sin(v[parents[0]])),)
        if kind == "recip":
            return ((parents[0], -(v[i] ** 2)),)
        if kind == "square":
            return ((parents[0], 2.0 * v[parents[0]]),)
        if kind == "step":
            return ((parents[0], 0.0),)
        raise ValueError(f"no scalar local partials for structural op {kind!r}")


def _as_value(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def record_leaf(tape: Tape, value) -> int:
    """Record a differentiable input; returns its node id."""
    return tape._record("leaf", (), None, _as_value(value))


def record_const(tape: Tape, value) -> int:
    """Record a fixed value; no gradient flows into it."""
    return tape._record("const", (), None, _as_value(value))


def record_unary(tape: Tape, op: str, a: int) -> int:
    if op not in _UNARY_OPS:
        raise ValueError(f"unknown unary op {op!r}")
    x = tape._values[a]
    if op == "neg":
        y = -x
    elif op == "tanh":
        y = np.tanh(x)
    elif op == "exp":
        y = np.exp(x)
    elif op == "sin":
        y = np.sin(x)
    elif op == "cos":
        y = np.cos(x)
    elif op == "recip":
        y = 1.0 / x
    elif op == "square":
        y = x * x
    else:  # step: right-continuous unit step, derivative 0 away from the jump
        y = np.where(x >= 0.0, 1.0, 0.0)
    return tape._record(op, (a,), None, _as_value(y))


def record_binary(tape: Tape, op: str, a: int, b: int) -> int:
    if op not in _BINARY_OPS:
        raise ValueError(f"unknown binary op {op!r}")
    x, y = tape._values[a], tape._values[b]
    if op == "add":
        z = x + y
    elif op == "sub":
        z = x - y
    elif op == "mul":
        z = x * y
    else:
        z = x @ y
    return tape._record(op, (a, b), None, z)


def record_stack_cols(tape: Tape, cols: list[int]) -> int:
    """Stack 1-d column nodes into a (n, k) block."""
    value = np.stack([tape._values[c] for c in cols], axis=1)
    return tape._record("stack", tuple(cols), None, value)


def record_col(tape: Tape, a: int, j: int) -> int:
    """Extract column j of a 2-d node as a 1-d column."""
    return tape._record("col", (a,), j, tape._values[a][:, j])


def record_rows(tape: Tape, a: int, start: int, stop: int) -> int:
    """Slice rows [start, stop) of a node; splits fused batches apart."""
    return tape._record("rows", (a,), (start, stop), tape._values[a][start:stop])


def record_sum(tape: Tape, a: int) -> int:
    """Sum of all elements, as a 0-d node."""
    return tape._record("sum", (a,), None, _as_value(np.sum(tape._values[a])))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(tape: Tape, output: int) -> list[np.ndarray | None]:
    """Reverse-accumulate adjoints of `output` for every node.

    Returns a list indexed by node id; entry i is d(output)/d(node i) with
    the node's shape, or None where the adjoint is identically zero. The
    output is normally a 0-d loss node.
    """
    values = tape._values
    kinds = tape._kinds
    parents = tape._parents
    aux = tape._aux

    adj: list[np.ndarray | None] = [None] * len(values)
    adj[output] = np.ones_like(values[output])

    def acc(i: int, g) -> None:
        if not isinstance(g, np.ndarray) or g.shape != values[i].shape:
            g = _unbroadcast(_as_value(g), values[i].shape)
        adj[i] = g if adj[i] is None else adj[i] + g

    for i in range(output, -1, -1):
        g = adj[i]
        if g is None:
            continue
        kind = kinds[i]
        if kind in ("leaf", "const", "step"):
            continue
        p = parents[i]
        if kind == "add":
            acc(p[0], g)
            acc(p[1], g)
        elif kind == "sub":
            acc(p[0], g)
            acc(p[1], -g)
        elif kind == "mul":
            acc(p[0], g * values[p[1]])
            acc(p[1], g * values[p[0]])
        elif kind == "matmul":
            acc(p[0], g @ values[p[1]].T)
            acc(p[1], values[p[0]].T @ g)
        elif kind == "neg":
            acc(p[0], -g)
        elif kind == "tanh":
            acc(p[0], g * (1.0 - values[i] ** 2))
        elif kind == "exp":
            acc(p[0], g * values[i])
        elif kind == "sin":
            acc(p[0], g * np.cos(values[p[0]]))
        elif kind == "cos":
            acc(p[0], -g * np.sin(values[p[0]]))
        elif kind == "recip":
            acc(p[0], -g * values[i] ** 2)
        elif kind == "square":
            acc(p[0], 2.0 * g * values[p[0]])
        elif kind == "stack":
            for j, c in enumerate(p):
                acc(c, g[:, j])
        elif kind == "col":
            full = np.zeros_like(values[p[0]])
            full[:, aux[i]] = g
            acc(p[0], full)
        elif kind == "rows":
            full = np.zeros_like(values[p[0]])
            full[aux[i][0] : aux[i][1]] = g
            acc(p[0], full)
        elif kind == "sum":
            acc(p[0], np.broadcast_to(g, values[p[0]].shape))
        else:  # pragma: no cover - every recorded kind is handled above
            raise ValueError(f"no backward rule for op {kind!r}")
    return adj


def gradients(tape: Tape, output: int, wrt: list[int]) -> list[np.ndarray]:
    """Adjoints at the requested nodes, with zeros materialized."""
    adj = backward(tape, output)
    return [
        adj[i] if adj[i] is not None else np.zeros_like(tape.value(i))
        for i in wrt
    ]


def dual_lift(tape: Tape, input_values, direction_index: int) -> list[DualTraced]:
    """Lift inputs to dual values carrying the unit direction `direction_index`.

    Tangents are recorded on the tape, so any function of them stays
    differentiable with respect to parameters via `backward`.
    """
    n = len(input_values)
    if not 0 <= direction_index < n:
        raise ValueError(f"direction index {direction_index} out of range for {n} inputs")
    out = []
    for i, v in enumerate(input_values):
        p = record_leaf(tape, v)
        seed = np.ones_like(tape.value(p)) if i == direction_index else np.zeros_like(tape.value(p))
        out.append(DualTraced(p, record_const(tape, seed)))
    return out


def jet_lift(tape: Tape, input_values, n_directions: int) -> list[JetTraced]:
    """Lift inputs once with unit-direction tangents for the first
    `n_directions` inputs; one shared primal chain serves all directions."""
    n = len(input_values)
    if not 1 <= n_directions <= n:
        raise ValueError(f"cannot take {n_directions} directions over {n} inputs")
    out = []
    for i, v in enumerate(input_values):
        p = record_leaf(tape, v)
        tangents = tuple(
            record_const(
                tape,
                np.ones_like(tape.value(p)) if i == d else np.zeros_like(tape.value(p)),
            )
            for d in range(n_directions)
        )
        out.append(JetTraced(p, tangents))
    return out


# ---------------------------------------------------------------------------
# Traced arithmetic. Each helper accepts plain node ids, DualTraced, or
# JetTraced values and applies the forward-mode chain rule per tangent
# channel, recording every tangent operation on the tape.


def _parts(x):
    """(primal, tangents-or-None, wrapper-class) of any traced value."""
    if isinstance(x, int):
        return x, None, None
    if isinstance(x, DualTraced):
        return x.primal, (x.tangent,), DualTraced
    return x.primal, x.tangents, JetTraced


def _pack(cls, primal: int, tangents):
    if cls is DualTraced:
        return DualTraced(primal, tangents[0])
    return JetTraced(primal, tuple(tangents))


def _unary(tape: Tape, a: Traced, op: str, tangent_rule) -> Traced:
    pa, ta, ca = _parts(a)
    y = record_unary(tape, op, pa)
    if ta is None:
        return y
    return _pack(ca, y, [tangent_rule(tape, pa, y, t) for t in ta])


def add(tape: Tape, a: Traced, b: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    pb, tb, cb = _parts(b)
    p = record_binary(tape, "add", pa, pb)
    if ta is None and tb is None:
        return p
    if ta is None:
        return _pack(cb, p, tb)
    if tb is None:
        return _pack(ca, p, ta)
    return _pack(ca, p, [record_binary(tape, "add", u, v) for u, v in zip(ta, tb)])


def sub(tape: Tape, a: Traced, b: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    pb, tb, cb = _parts(b)
    p = record_binary(tape, "sub", pa, pb)
    if ta is None and tb is None:
        return p
    if ta is None:
        return _pack(cb, p, [record_unary(tape, "neg", v) for v in tb])
    if tb is None:
        return _pack(ca, p, ta)
    return _pack(ca, p, [record_binary(tape, "sub", u, v) for u, v in zip(ta, tb)])


def mul(tape: Tape, a: Traced, b: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    pb, tb, cb = _parts(b)
    p = record_binary(tape, "mul", pa, pb)
    if ta is None and tb is None:
        return p
    if ta is None:
        return _pack(cb, p, [record_binary(tape, "mul", pa, v) for v in tb])
    if tb is None:
        return _pack(ca, p, [record_binary(tape, "mul", u, pb) for u in ta])
    tangents = [
        record_binary(
            tape,
            "add",
            record_binary(tape, "mul", u, pb),
            record_binary(tape, "mul", pa, v),
        )
        for u, v in zip(ta, tb)
    ]
    return _pack(ca, p, tangents)


def neg(tape: Tape, a: Traced) -> Traced:
    return _unary(tape, a, "neg", lambda tp, x, y, t: record_unary(tp, "neg", t))


def tanh(tape: Tape, a: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    y = record_unary(tape, "tanh", pa)
    if ta is None:
        return y
    one = record_const(tape, 1.0)
    dydx = record_binary(tape, "sub", one, record_unary(tape, "square", y))
    return _pack(ca, y, [record_binary(tape, "mul", dydx, t) for t in ta])


def exp(tape: Tape, a: Traced) -> Traced:
    return _unary(tape, a, "exp", lambda tp, x, y, t: record_binary(tp, "mul", y, t))


def sin(tape: Tape, a: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    y = record_unary(tape, "sin", pa)
    if ta is None:
        return y
    dydx = record_unary(tape, "cos", pa)
    return _pack(ca, y, [record_binary(tape, "mul", dydx, t) for t in ta])


def cos(tape: Tape, a: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    y = record_unary(tape, "cos", pa)
    if ta is None:
        return y
    dydx = record_unary(tape, "neg", record_unary(tape, "sin", pa))
    return _pack(ca, y, [record_binary(tape, "mul", dydx, t) for t in ta])


def square(tape: Tape, a: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    y = record_unary(tape, "square", pa)
    if ta is None:
        return y
    tangents = []
    for t in ta:
        pt = record_binary(tape, "mul", pa, t)
        tangents.append(record_binary(tape, "add", pt, pt))
    return _pack(ca, y, tangents)


def recip(tape: Tape, a: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    y = record_unary(tape, "recip", pa)
    if ta is None:
        return y
    dydx = record_unary(tape, "neg", record_unary(tape, "square", y))
    return _pack(ca, y, [record_binary(tape, "mul", dydx, t) for t in ta])


def step(tape: Tape, a: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    y = record_unary(tape, "step", pa)
    if ta is None:
        return y
    zero = record_const(tape, np.zeros_like(tape.value(y)))
    return _pack(ca, y, [zero] * len(ta))


def matmul(tape: Tape, a: Traced, b: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    pb, tb, cb = _parts(b)
    p = record_binary(tape, "matmul", pa, pb)
    if ta is None and tb is None:
        return p
    if tb is None:
        return _pack(ca, p, [record_binary(tape, "matmul", u, pb) for u in ta])
    if ta is None:
        return _pack(cb, p, [record_binary(tape, "matmul", pa, v) for v in tb])
    tangents = [
        record_binary(
            tape,
            "add",
            record_binary(tape, "matmul", u, pb),
            record_binary(tape, "matmul", pa, v),
        )
        for u, v in zip(ta, tb)
    ]
    return _pack(ca, p, tangents)


def stack_cols(tape: Tape, cols: list[Traced]) -> Traced:
    parts = [_parts(c) for c in cols]
    cls = next((c for _, t, c in parts if t is not None), None)
    if cls is None:
        return record_stack_cols(tape, [p for p, _, _ in parts])
    n_dirs = max(len(t) for _, t, _ in parts if t is not None)
    primals, tangent_cols = [], [[] for _ in range(n_dirs)]
    for p, t, _ in parts:
        primals.append(p)
        if t is None:
            zero = record_const(tape, np.zeros_like(tape.value(p)))
            t = (zero,) * n_dirs
        for d in range(n_dirs):
            tangent_cols[d].append(t[d])
    return _pack(
        cls,
        record_stack_cols(tape, primals),
        [record_stack_cols(tape, tc) for tc in tangent_cols],
    )


def col(tape: Tape, a: Traced, j: int) -> Traced:
    pa, ta, ca = _parts(a)
    p = record_col(tape, pa, j)
    if ta is None:
        return p
    return _pack(ca, p, [record_col(tape, t, j) for t in ta])


def rows(tape: Tape, a: Traced, start: int, stop: int) -> Traced:
    pa, ta, ca = _parts(a)
    p = record_rows(tape, pa, start, stop)
    if ta is None:
        return p
    return _pack(ca, p, [record_rows(tape, t, start, stop) for t in ta])


def sum_all(tape: Tape, a: Traced) -> Traced:
    pa, ta, ca = _parts(a)
    p = record_sum(tape, pa)
    if ta is None:
        return p
    return _pack(ca, p, [record_sum(tape, t) for t in ta])
