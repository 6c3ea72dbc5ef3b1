"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A Tape records operations in a define-by-run fashion; backward() walks the
tape once in reverse and returns gradients for every recorded node. Only the
handful of ops needed by the policy network, the rollout dynamics and the
training loss are provided. All shapes are explicit: no broadcasting beyond
multiplication by a python scalar (`scale`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class AutodiffError(Exception):
    pass


def _check_finite(value: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(value)):
        raise AutodiffError(f"non-finite value produced by op '{op}'")


@dataclass
class Node:
    op: str
    inputs: tuple
    # maps the gradient at this node to gradients of the inputs
    backward: Optional[Callable[[np.ndarray], Sequence[np.ndarray]]]


class Tape:
    """Append-only record of ops; node ids are topological by construction."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def _record(self, op, input_ids, backward) -> int:
        self.nodes.append(Node(op, tuple(input_ids), backward))
        return len(self.nodes) - 1

    def leaf(self, value) -> "Tensor":
        """Register a differentiable leaf (e.g. the parameter vector)."""
        value = np.asarray(value, dtype=np.float64)
        _check_finite(value, "leaf")
        nid = self._record("leaf", (), None)
        return Tensor(value, tape=self, nid=nid)


class Tensor:
    """float64 array plus an optional handle into the active tape.

    Tensors with ``tape is None`` are constants: they participate in ops but
    receive no gradient.
    """

    __slots__ = ("value", "tape", "nid")

    def __init__(self, value, tape: Optional[Tape] = None, nid: Optional[int] = None):
        self.value = np.asarray(value, dtype=np.float64)
        _check_finite(self.value, "tensor")
        self.tape = tape
        self.nid = nid

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, tracked={self.tape is not None})"


def constant(value) -> Tensor:
    return Tensor(value)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _merge_tape(*tensors: Tensor) -> Optional[Tape]:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise AutodiffError("operands recorded on different tapes")
            tape = t.tape
    return tape


def _result(op, value, operands, backward):
    _check_finite(value, op)
    tape = _merge_tape(*operands)
    if tape is None:
        return Tensor(value)
    ids = tuple(t.nid if t.tape is not None else -1 for t in operands)
    nid = tape._record(op, ids, backward)
    return Tensor(value, tape=tape, nid=nid)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise AutodiffError(f"shape mismatch in '{op}': {a.value.shape} vs {b.value.shape}")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "add")
    return _result("add", a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "sub")
    return _result("sub", a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _result("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise AutodiffError(
            f"shape mismatch in 'matmul': {a.value.shape} vs {b.value.shape}"
        )
    av, bv = a.value, b.value
    return _result(
        "matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g)
    )


def concat(tensors, axis=0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.value.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(
        "concat", np.concatenate([t.value for t in tensors], axis=axis), tensors, backward
    )


def slice_(a, key) -> Tensor:
    a = _as_tensor(a)
    shape = a.value.shape

    def backward(g):
        out = np.zeros(shape)
        out[key] = g
        return (out,)

    return _result("slice", a.value[key].copy(), (a,), backward)


def reshape(a, new_shape) -> Tensor:
    a = _as_tensor(a)
    old_shape = a.value.shape
    return _result(
        "reshape",
        a.value.reshape(new_shape),
        (a,),
        lambda g: (g.reshape(old_shape),),
    )


def sum_(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    shape = a.value.shape

    def backward(g):
        if axis is None:
            return (np.full(shape, g),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result("sum", np.sum(a.value, axis=axis), (a,), backward)


def mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    shape = a.value.shape
    count = a.value.size if axis is None else shape[axis]

    def backward(g):
        if axis is None:
            return (np.full(shape, g / count),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape) / count,)

    return _result("mean", np.mean(a.value, axis=axis), (a,), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.value)
    return _result("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.value > 0
    return _result("relu", np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = _as_tensor(a)
    shifted = a.value - np.max(a.value, axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=-1, keepdims=True)

    def backward(g):
        dot = np.sum(g * out, axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _result("softmax", out, (a,), backward)


def square(a) -> Tensor:
    a = _as_tensor(a)
    av = a.value
    return _result("square", av * av, (a,), lambda g: (2.0 * av * g,))


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    out = np.sqrt(a.value)
    return _result("sqrt", out, (a,), lambda g: (g / (2.0 * out),))


def scale(a, c: float) -> Tensor:
    """Multiply by a python scalar (the only form of broadcasting allowed)."""
    a = _as_tensor(a)
    c = float(c)
    return _result("scalar-scale", a.value * c, (a,), lambda g: (g * c,))


def backward(tape: Tape, root: Tensor) -> dict:
    """Gradients of a scalar root with respect to every node on the tape.

    Returns a map node-id -> gradient array. Nodes that do not influence the
    root get a zero gradient.
    """
    if root.tape is not tape or root.nid is None:
        raise AutodiffError("root tensor was not produced on this tape")
    if root.value.ndim != 0 and root.value.size != 1:
        raise AutodiffError(f"root must be scalar, got shape {root.value.shape}")

    grads: list[Optional[np.ndarray]] = [None] * len(tape.nodes)
    grads[root.nid] = np.ones_like(root.value)
    for nid in range(root.nid, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        node = tape.nodes[nid]
        if node.backward is None:
            continue
        input_grads = node.backward(g)
        for iid, ig in zip(node.inputs, input_grads):
            if iid < 0:
                continue  # constant operand
            if grads[iid] is None:
                grads[iid] = np.array(ig, dtype=np.float64)
            else:
                grads[iid] = grads[iid] + ig
    out = {}
    for nid, g in enumerate(grads):
        if nid > root.nid:
            break
        if g is not None:
            out[nid] = g
    return out


@dataclass
class AdamState:
    """Adam moment estimates plus hyperparameters for a flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, lr: float = 0.005, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), t=0,
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One Adam update with bias correction; returns (params', state')."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise AutodiffError(
            f"adam_step length mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}"
        )
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise AutodiffError(f"non-finite gradient at component {int(bad[0])}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, t=t, lr=state.lr, beta1=state.beta1,
                          beta2=state.beta2, eps=state.eps)
    return new_params, new_state
