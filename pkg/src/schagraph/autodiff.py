"""Reverse-mode automatic differentiation over dense float64 matrices.

A Tape records every operation in execution order; backward() replays the
records once, in reverse, accumulating gradients additively into shared
inputs.  Everything is 2-D: scalars are 1x1 matrices, score vectors are
n x 1 columns.
"""

from __future__ import annotations

import builtins
from typing import Callable, Sequence

import numpy as np

BCE_EPS = 1e-7

_validate = False


def set_validation(enabled: bool):
    """When enabled, every op asserts its output is finite (debug mode)."""
    global _validate
    _validate = enabled


class ShapeError(ValueError):
    """Incompatible operand shapes, tagged with the offending op."""


class TapeError(RuntimeError):
    """Tape misuse: double backward, non-scalar loss, foreign mixing."""


class _Node:
    __slots__ = ("op", "value", "parents", "backward_fn", "grad", "requires_grad")

    def __init__(self, op, value, parents, backward_fn, requires_grad):
        self.op = op
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.grad = None
        self.requires_grad = requires_grad


class Var:
    """Handle to one recorded value on a Tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape._nodes[self.index].value

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        node = self.tape._nodes[self.index]
        if node.grad is None:
            return np.zeros_like(node.value)
        return node.grad

    def __add__(self, other: "Var") -> "Var":
        return add(self, other)

    def __sub__(self, other: "Var") -> "Var":
        return sub(self, other)

    def __mul__(self, other: "Var") -> "Var":
        return elementwise_mul(self, other)

    def __matmul__(self, other: "Var") -> "Var":
        return matmul(self, other)

    def __repr__(self):
        return f"Var(shape={self.shape}, op={self.tape._nodes[self.index].op!r})"


class Tape:
    """Ordered record of operations; exclusively owned by one computation."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._finalized = False

    def __len__(self):
        return len(self._nodes)

    def leaf(self, value, requires_grad: bool = True) -> Var:
        value = np.array(value, dtype=float)
        if value.ndim != 2:
            raise ShapeError(f"leaf: expected a 2-D matrix, got ndim={value.ndim}")
        return self._record("leaf", value, (), None, requires_grad)

    def constant(self, value) -> Var:
        return self.leaf(value, requires_grad=False)

    def _record(self, op, value, parents, backward_fn, requires_grad=None) -> Var:
        if _validate and not np.all(np.isfinite(value)):
            raise FloatingPointError(f"{op}: produced a non-finite value")
        if requires_grad is None:
            requires_grad = any(
                self._nodes[p].requires_grad for p in parents
            )
        self._nodes.append(_Node(op, value, parents, backward_fn, requires_grad))
        return Var(self, len(self._nodes) - 1)

    def backward(self, loss: Var):
        """Populate gradients of everything reachable from the 1x1 loss node."""
        if loss.tape is not self:
            raise TapeError("backward: loss belongs to a different tape")
        if self._finalized:
            raise TapeError("backward already ran on this tape; call reset_grads()")
        if loss.shape != (1, 1):
            raise TapeError(f"backward: loss must be 1x1, got {loss.shape}")
        self._finalized = True
        nodes = self._nodes
        nodes[loss.index].grad = np.ones((1, 1))
        for idx in range(loss.index, -1, -1):
            node = nodes[idx]
            if node.grad is None or node.backward_fn is None:
                continue
            for parent_idx, parent_grad in zip(
                node.parents, node.backward_fn(node.grad)
            ):
                parent = nodes[parent_idx]
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = parent_grad.copy()
                else:
                    parent.grad += parent_grad

    def reset_grads(self):
        for node in self._nodes:
            node.grad = None
        self._finalized = False


def _same_tape(op: str, *vars: Var) -> Tape:
    tape = vars[0].tape
    for v in vars[1:]:
        if v.tape is not tape:
            raise TapeError(f"{op}: operands live on different tapes")
    return tape


def matmul(a: Var, b: Var) -> Var:
    tape = _same_tape("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    out = av @ bv

    def backward_fn(g):
        return g @ bv.T, av.T @ g

    return tape._record("matmul", out, (a.index, b.index), backward_fn)


def transpose(a: Var) -> Var:
    out = a.value.T.copy()

    def backward_fn(g):
        return (g.T,)

    return a.tape._record("transpose", out, (a.index,), backward_fn)


def _binary(op: str, a: Var, b: Var, fwd, dga, dgb) -> Var:
    tape = _same_tape(op, a, b)
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")
    out = fwd(a.value, b.value)

    def backward_fn(g):
        return dga(g, a.value, b.value), dgb(g, a.value, b.value)

    return tape._record(op, out, (a.index, b.index), backward_fn)


def add(a: Var, b: Var) -> Var:
    return _binary("add", a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a: Var, b: Var) -> Var:
    return _binary("sub", a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def elementwise_mul(a: Var, b: Var) -> Var:
    return _binary(
        "elementwise_mul",
        a,
        b,
        lambda x, y: x * y,
        lambda g, x, y: g * y,
        lambda g, x, y: g * x,
    )


def add_n(vars: Sequence[Var]) -> Var:
    """Sum of any number of same-shape matrices (flat gradient fan-out)."""
    if not vars:
        raise ShapeError("add_n: needs at least one operand")
    tape = _same_tape("add_n", *vars)
    shape = vars[0].shape
    for v in vars[1:]:
        if v.shape != shape:
            raise ShapeError(f"add_n: shapes {shape} and {v.shape} differ")
    out = np.zeros(shape)
    for v in vars:
        out += v.value
    count = len(vars)

    def backward_fn(g):
        return (g,) * count

    return tape._record("add_n", out, tuple(v.index for v in vars), backward_fn)


def scale(a: Var, c: float) -> Var:
    out = a.value * c

    def backward_fn(g):
        return (g * c,)

    return a.tape._record("scale", out, (a.index,), backward_fn)


def row_scale(m: Var, v: Var) -> Var:
    """Scale row j of m by v[j, 0]."""
    tape = _same_tape("row_scale", m, v)
    if v.shape != (m.shape[0], 1):
        raise ShapeError(f"row_scale: scales {v.shape} do not match rows of {m.shape}")
    mv, vv = m.value, v.value
    out = mv * vv

    def backward_fn(g):
        return g * vv, (g * mv).sum(axis=1, keepdims=True)

    return tape._record("row_scale", out, (m.index, v.index), backward_fn)


def concat_cols(vars: Sequence[Var]) -> Var:
    if not vars:
        raise ShapeError("concat_cols: needs at least one operand")
    tape = _same_tape("concat_cols", *vars)
    rows = vars[0].shape[0]
    for v in vars[1:]:
        if v.shape[0] != rows:
            raise ShapeError(
                f"concat_cols: row counts differ ({rows} vs {v.shape[0]})"
            )
    out = np.concatenate([v.value for v in vars], axis=1)
    widths = [v.shape[1] for v in vars]
    offsets = np.cumsum([0] + widths)

    def backward_fn(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(widths)))

    return tape._record("concat_cols", out, tuple(v.index for v in vars), backward_fn)


def permute_rows(a: Var, perm: np.ndarray) -> Var:
    perm = np.asarray(perm, dtype=int)
    if perm.shape != (a.shape[0],):
        raise ShapeError(f"permute_rows: permutation length {perm.shape} vs {a.shape}")
    out = a.value[perm]

    def backward_fn(g):
        gp = np.zeros_like(a.value)
        gp[perm] = g
        return (gp,)

    return a.tape._record("permute_rows", out, (a.index,), backward_fn)


def sigmoid(a: Var) -> Var:
    x = a.value
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    ex = np.exp(x[~positive])
    out[~positive] = ex / (1.0 + ex)

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return a.tape._record("sigmoid", out, (a.index,), backward_fn)


def relu(a: Var) -> Var:
    mask = a.value > 0
    out = a.value * mask

    def backward_fn(g):
        return (g * mask,)

    return a.tape._record("relu", out, (a.index,), backward_fn)


def sum(a: Var) -> Var:  # noqa: A001 - mirrors the op set's name
    out = np.array([[a.value.sum()]])

    def backward_fn(g):
        return (np.full(a.shape, g[0, 0]),)

    return a.tape._record("sum", out, (a.index,), backward_fn)


def mean(a: Var) -> Var:
    size = a.value.size
    out = np.array([[a.value.mean()]])

    def backward_fn(g):
        return (np.full(a.shape, g[0, 0] / size),)

    return a.tape._record("mean", out, (a.index,), backward_fn)


def mean_rows(a: Var) -> Var:
    """Column-wise mean over rows: (n x k) -> (1 x k)."""
    rows = a.shape[0]
    out = a.value.mean(axis=0, keepdims=True)

    def backward_fn(g):
        return (np.repeat(g / rows, rows, axis=0),)

    return a.tape._record("mean_rows", out, (a.index,), backward_fn)


def bce(pred: Var, target: np.ndarray) -> Var:
    """Summed binary cross-entropy; predictions clamped into (0, 1)."""
    target = np.asarray(target, dtype=float)
    if target.shape != pred.shape:
        raise ShapeError(f"bce: target {target.shape} does not match {pred.shape}")
    p = np.clip(pred.value, BCE_EPS, 1.0 - BCE_EPS)
    inside = (pred.value > BCE_EPS) & (pred.value < 1.0 - BCE_EPS)
    out = np.array([[-(target * np.log(p) + (1.0 - target) * np.log1p(-p)).sum()]])

    def backward_fn(g):
        dp = (-target / p + (1.0 - target) / (1.0 - p)) * inside
        return (g[0, 0] * dp,)

    return pred.tape._record("bce", out, (pred.index,), backward_fn)


def layer_norm(a: Var, eps: float = 1e-5) -> Var:
    """Row-wise standardization (no learned gain or bias)."""
    x = a.value
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = (x - mu) * inv

    def backward_fn(g):
        gm = g.mean(axis=1, keepdims=True)
        gy = (g * out).mean(axis=1, keepdims=True)
        return (inv * (g - gm - out * gy),)

    return a.tape._record("layer_norm", out, (a.index,), backward_fn)


def softmax_rows(a: Var) -> Var:
    x = a.value
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def backward_fn(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return a.tape._record("softmax_rows", out, (a.index,), backward_fn)


def grad_check(
    f: Callable[..., Var], inputs: Sequence[np.ndarray], eps: float = 1e-5
) -> float:
    """Max relative error between tape gradients and central differences.

    `f` receives one leaf Var per input (on a fresh tape) and must return a
    1x1 Var.
    """
    inputs = [np.array(x, dtype=float) for x in inputs]

    def evaluate(values, want_grads=False):
        tape = Tape()
        vars = [tape.leaf(v) for v in values]
        out = f(*vars)
        if out.shape != (1, 1):
            raise ShapeError(f"grad_check: f must return a 1x1 matrix, got {out.shape}")
        val = float(out.value[0, 0])
        if not np.isfinite(val):
            raise FloatingPointError("grad_check: f produced a non-finite value")
        if not want_grads:
            return val
        tape.backward(out)
        return val, [v.grad for v in vars]

    _, analytic = evaluate(inputs, want_grads=True)
    max_err = 0.0
    for which, x in enumerate(inputs):
        it = np.nditer(x, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = x[idx]
            x[idx] = orig + eps
            f_plus = evaluate(inputs)
            x[idx] = orig - eps
            f_minus = evaluate(inputs)
            x[idx] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            ad = analytic[which][idx]
            err = abs(ad - fd) / builtins.max(1e-8, abs(ad) + abs(fd))
            max_err = builtins.max(max_err, err)
    return max_err
