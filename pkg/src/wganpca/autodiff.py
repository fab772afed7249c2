"""Reverse-mode automatic differentiation on an append-only tape.

Operations are evaluated eagerly as they are recorded; each node keeps its
value. :func:`backward_grad` runs the reverse sweep with plain numpy. For second
order, :func:`record_gradients` replays the reverse sweep *as recorded
operations* on an extension of the tape, so the resulting gradient variables
can themselves be differentiated (this is how the gradient penalty gets its
parameter gradient).

Every vector-Jacobian rule is written once against a small array namespace and
runs either on numpy arrays (first-order sweep) or on :class:`Var` objects
(recorded sweep).

Conventions: ``relu'(0) = 0``; :func:`l2norm` is ``sqrt(sum x^2 + eps)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, TapeError

GRADNORM_EPS = 1e-12


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple[int, ...]
    value: np.ndarray
    attrs: dict = field(default_factory=dict)
    requires_grad: bool = True


class Tape:
    """Append-only record of operations; ``seal()`` freezes it."""

    def __init__(self, parent: "Tape | None" = None):
        self.parent = parent
        self.nodes: list[Node] = list(parent.nodes) if parent is not None else []
        self.sealed = False

    def __len__(self) -> int:
        return len(self.nodes)

    def seal(self) -> "Tape":
        self.sealed = True
        return self

    def extend(self) -> "Tape":
        """An unsealed tape sharing this tape's nodes as its prefix."""
        return Tape(self)

    def owns(self, var: "Var") -> bool:
        t = self
        while t is not None:
            if var.tape is t:
                return var.node_id < len(t.nodes)
            t = t.parent
        return False

    def _append(self, node: Node) -> "Var":
        if self.sealed:
            raise TapeError("cannot record on a sealed tape")
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value, requires_grad: bool = True) -> "Var":
        value = np.array(value, dtype=np.float64)
        return self._append(Node("leaf", (), value, {}, requires_grad))

    def const(self, value) -> "Var":
        return self.leaf(value, requires_grad=False)

    def record(self, op: str, inputs: Sequence["Var"], **attrs) -> "Var":
        ids = []
        for v in inputs:
            if not self.owns(v):
                raise TapeError(f"input of {op!r} does not belong to this tape")
            ids.append(v.node_id)
        vals = [self.nodes[i].value for i in ids]
        out = OPS[op].forward(vals, attrs)
        return self._append(Node(op, tuple(ids), np.asarray(out, dtype=np.float64), attrs))

    def value(self, var: "Var") -> np.ndarray:
        return self.nodes[var.node_id].value


class Var:
    __slots__ = ("tape", "node_id")
    __array_priority__ = 100

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.node_id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.node_id].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(id={self.node_id}, shape={self.shape})"

    def _lift(self, other) -> "Var":
        if isinstance(other, Var):
            return other
        return self.tape.const(np.broadcast_to(np.asarray(other, dtype=np.float64), self.shape))

    def __add__(self, other):
        return add(self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return sub(self._lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        if not isinstance(other, Var):
            other = self.tape.const(other)
        return matvec(self, other) if other.value.ndim == 1 else matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    @property
    def T(self):
        return transpose(self)


# --------------------------------------------------------------------------
# array namespaces the vjp rules are written against


class _NumpyNS:
    add = staticmethod(np.add)
    sub = staticmethod(np.subtract)
    mul = staticmethod(np.multiply)
    neg = staticmethod(np.negative)

    @staticmethod
    def scale(x, c):
        return x * c

    @staticmethod
    def cmul(x, mask):
        return x * mask

    @staticmethod
    def matmul(a, b):
        return a @ b

    @staticmethod
    def matvec(a, x):
        return a @ x

    @staticmethod
    def outer(u, v):
        return np.outer(u, v)

    @staticmethod
    def transpose(x):
        return x.T

    @staticmethod
    def power(x, p):
        return x ** p

    @staticmethod
    def broadcast_to(x, shape):
        return np.broadcast_to(x, shape).copy()

    @staticmethod
    def sum_to(x, shape):
        return _sum_to(x, shape)

    @staticmethod
    def reshape(x, shape):
        return np.reshape(x, shape)


class _VarNS:
    def __init__(self, tape: Tape):
        self.tape = tape

    def add(self, a, b):
        return add(a, b)

    def sub(self, a, b):
        return sub(a, b)

    def mul(self, a, b):
        return mul(a, b)

    def neg(self, a):
        return neg(a)

    def scale(self, x, c):
        return scale(x, c)

    def cmul(self, x, mask):
        return mul(x, self.tape.const(mask))

    def matmul(self, a, b):
        return matmul(a, b)

    def matvec(self, a, x):
        return matvec(a, x)

    def outer(self, u, v):
        return outer(u, v)

    def transpose(self, x):
        return transpose(x)

    def power(self, x, p):
        return power(x, p)

    def broadcast_to(self, x, shape):
        return broadcast_to(x, shape)

    def sum_to(self, x, shape):
        return sum_to(x, shape)

    def reshape(self, x, shape):
        return reshape(x, shape)


def _sum_to(x: np.ndarray, shape: tuple) -> np.ndarray:
    shape = tuple(shape)
    if x.shape == shape:
        return x.copy()
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and x.shape[i + lead] != 1
    )
    return np.sum(x, axis=axes, keepdims=True).reshape(shape)


def _keepdims_shape(shape: tuple, axis) -> tuple:
    if axis is None:
        return tuple(1 for _ in shape)
    axes = (axis,) if isinstance(axis, int) else axis
    axes = {a % len(shape) for a in axes}
    return tuple(1 if i in axes else s for i, s in enumerate(shape))


# --------------------------------------------------------------------------
# primitive definitions


@dataclass(frozen=True)
class OpDef:
    forward: Callable
    vjp: Callable  # (F, g, inputs, out, attrs) -> tuple of grads (None = no grad)


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _fwd_matmul(v, at):
    a, b = v
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return a @ b


def _fwd_matvec(v, at):
    a, x = v
    if a.ndim != 2 or x.ndim != 1 or a.shape[1] != x.shape[0]:
        raise DimensionError(f"matvec: incompatible shapes {a.shape} @ {x.shape}")
    return a @ x


def _fwd_bias_add(v, at):
    x, b = v
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"bias_add: bias {b.shape} does not match {x.shape}")
    return x + b


def _fwd_dot(v, at):
    a, b = v
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"dot: shapes {a.shape} and {b.shape}")
    return np.dot(a, b)


def _fwd_binary(name, fn):
    def fwd(v, at):
        _same_shape(name, *v)
        return fn(*v)
    return fwd


def _fwd_broadcast(v, at):
    try:
        return np.broadcast_to(v[0], at["shape"]).copy()
    except ValueError as exc:
        raise DimensionError(str(exc)) from None


def _l2norm_fwd(v, at):
    x = v[0]
    return np.sqrt(np.sum(x * x, axis=at["axis"]) + at["eps"])


def _l2norm_vjp(F, g, ins, out, at):
    x = ins[0]
    shape = x.value.shape if isinstance(x, Var) else x.shape
    kd = _keepdims_shape(shape, at["axis"])
    scale_ = F.reshape(F.mul(g, F.power(out, -1.0)), kd)
    return (F.mul(x, F.broadcast_to(scale_, shape)),)


def _reduce_vjp(mean: bool):
    def vjp(F, g, ins, out, at):
        x = ins[0]
        shape = x.value.shape if isinstance(x, Var) else x.shape
        kd = _keepdims_shape(shape, at["axis"])
        gb = F.broadcast_to(F.reshape(g, kd), shape)
        if mean:
            n = int(np.prod(shape)) // max(int(np.prod([s for s in kd])), 1)
            gb = F.scale(gb, 1.0 / n)
        return (gb,)
    return vjp


def _shape_of(x):
    return x.value.shape if isinstance(x, Var) else x.shape


def _value_of(x):
    return x.value if isinstance(x, Var) else x


OPS: dict[str, OpDef] = {
    "add": OpDef(_fwd_binary("add", np.add), lambda F, g, i, o, a: (g, g)),
    "sub": OpDef(_fwd_binary("sub", np.subtract), lambda F, g, i, o, a: (g, F.neg(g))),
    "mul": OpDef(_fwd_binary("mul", np.multiply), lambda F, g, i, o, a: (F.mul(g, i[1]), F.mul(g, i[0]))),
    "neg": OpDef(lambda v, a: -v[0], lambda F, g, i, o, a: (F.neg(g),)),
    "scale": OpDef(lambda v, a: v[0] * a["c"], lambda F, g, i, o, a: (F.scale(g, a["c"]),)),
    "matmul": OpDef(_fwd_matmul, lambda F, g, i, o, a: (
        F.matmul(g, F.transpose(i[1])), F.matmul(F.transpose(i[0]), g))),
    "matvec": OpDef(_fwd_matvec, lambda F, g, i, o, a: (
        F.outer(g, i[1]), F.matvec(F.transpose(i[0]), g))),
    "outer": OpDef(lambda v, a: np.outer(v[0], v[1]), lambda F, g, i, o, a: (
        F.matvec(g, i[1]), F.matvec(F.transpose(g), i[0]))),
    "transpose": OpDef(lambda v, a: v[0].T.copy(), lambda F, g, i, o, a: (F.transpose(g),)),
    "relu": OpDef(lambda v, a: np.maximum(v[0], 0.0),
                  lambda F, g, i, o, a: (F.cmul(g, (_value_of(i[0]) > 0).astype(np.float64)),)),
    "sum": OpDef(lambda v, a: np.sum(v[0], axis=a["axis"]), _reduce_vjp(mean=False)),
    "mean": OpDef(lambda v, a: np.mean(v[0], axis=a["axis"]), _reduce_vjp(mean=True)),
    "power": OpDef(lambda v, a: v[0] ** a["p"], lambda F, g, i, o, a: (
        F.mul(g, F.scale(F.power(i[0], a["p"] - 1.0), a["p"])),)),
    "sqrt": OpDef(lambda v, a: np.sqrt(v[0]), lambda F, g, i, o, a: (
        F.scale(F.mul(g, F.power(o, -1.0)), 0.5),)),
    "square": OpDef(lambda v, a: v[0] * v[0], lambda F, g, i, o, a: (F.scale(F.mul(g, i[0]), 2.0),)),
    "bias_add": OpDef(_fwd_bias_add, lambda F, g, i, o, a: (g, F.sum_to(g, _shape_of(i[1])))),
    "dot": OpDef(_fwd_dot, lambda F, g, i, o, a: (
        F.mul(F.broadcast_to(g, _shape_of(i[1])), i[1]), F.mul(F.broadcast_to(g, _shape_of(i[0])), i[0]))),
    "l2norm": OpDef(_l2norm_fwd, _l2norm_vjp),
    "broadcast_to": OpDef(_fwd_broadcast, lambda F, g, i, o, a: (F.sum_to(g, _shape_of(i[0])),)),
    "sum_to": OpDef(lambda v, a: _sum_to(v[0], a["shape"]),
                    lambda F, g, i, o, a: (F.broadcast_to(g, _shape_of(i[0])),)),
    "reshape": OpDef(lambda v, a: np.reshape(v[0], a["shape"]),
                     lambda F, g, i, o, a: (F.reshape(g, _shape_of(i[0])),)),
}


# --------------------------------------------------------------------------
# recording front end


def _rec(op: str, inputs: Sequence[Var], **attrs) -> Var:
    # record on the newest tape among the inputs; older ones are its prefixes
    tape = max((v.tape for v in inputs), key=len)
    return tape.record(op, inputs, **attrs)


def add(a: Var, b: Var) -> Var:
    return _rec("add", [a, b])


def sub(a: Var, b: Var) -> Var:
    return _rec("sub", [a, b])


def mul(a: Var, b: Var) -> Var:
    return _rec("mul", [a, b])


def neg(a: Var) -> Var:
    return _rec("neg", [a])


def scale(a: Var, c: float) -> Var:
    return _rec("scale", [a], c=float(c))


def matmul(a: Var, b: Var) -> Var:
    return _rec("matmul", [a, b])


def matvec(a: Var, x: Var) -> Var:
    return _rec("matvec", [a, x])


def outer(u: Var, v: Var) -> Var:
    return _rec("outer", [u, v])


def transpose(a: Var) -> Var:
    return _rec("transpose", [a])


def relu(a: Var) -> Var:
    return _rec("relu", [a])


def vsum(a: Var, axis=None) -> Var:
    return _rec("sum", [a], axis=axis)


def mean(a: Var, axis=None) -> Var:
    return _rec("mean", [a], axis=axis)


def power(a: Var, p: float) -> Var:
    return _rec("power", [a], p=float(p))


def sqrt(a: Var) -> Var:
    return _rec("sqrt", [a])


def square(a: Var) -> Var:
    return _rec("square", [a])


def bias_add(x: Var, b: Var) -> Var:
    return _rec("bias_add", [x, b])


def dot(a: Var, b: Var) -> Var:
    return _rec("dot", [a, b])


def l2norm(a: Var, eps: float = GRADNORM_EPS, axis=None) -> Var:
    return _rec("l2norm", [a], eps=float(eps), axis=axis)


def broadcast_to(a: Var, shape) -> Var:
    return _rec("broadcast_to", [a], shape=tuple(shape))


def sum_to(a: Var, shape) -> Var:
    return _rec("sum_to", [a], shape=tuple(shape))


def reshape(a: Var, shape) -> Var:
    return _rec("reshape", [a], shape=tuple(shape))


# --------------------------------------------------------------------------
# evaluation and differentiation


def forward_eval(tape: Tape, outputs: Sequence[Var]) -> list[np.ndarray]:
    if not tape.sealed:
        raise TapeError("forward_eval needs a sealed tape")
    for v in outputs:
        if not tape.owns(v):
            raise TapeError("output variable is not on this tape")
    return [tape.nodes[v.node_id].value.copy() for v in outputs]


def _check_backward(tape: Tape, output: Var, wrt: Sequence[Var]) -> None:
    if not tape.owns(output):
        raise TapeError("output variable is not on this tape")
    if output.value.ndim != 0:
        raise DimensionError(f"output must be scalar, got shape {output.value.shape}")
    for w in wrt:
        if not tape.owns(w):
            raise TapeError("wrt variable is not on this tape")


def _sweep(tape: Tape, output: Var, F, seed):
    adj: dict[int, object] = {output.node_id: seed}
    nodes = tape.nodes
    for nid in range(output.node_id, -1, -1):
        g = adj.get(nid)
        if g is None:
            continue
        node = nodes[nid]
        if node.op == "leaf":
            continue
        ins = [Var(tape, i) for i in node.inputs] if isinstance(F, _VarNS) else [nodes[i].value for i in node.inputs]
        out = Var(tape, nid) if isinstance(F, _VarNS) else node.value
        grads = OPS[node.op].vjp(F, g, ins, out, node.attrs)
        for i, gi in zip(node.inputs, grads):
            if gi is None or not nodes[i].requires_grad and nodes[i].op == "leaf":
                continue
            adj[i] = gi if i not in adj else F.add(adj[i], gi)
    return adj


def backward_grad(tape: Tape, output: Var, wrt: Sequence[Var]) -> list[np.ndarray]:
    """Gradients of scalar ``output`` with respect to each of ``wrt``."""
    if not tape.sealed:
        raise TapeError("backward_grad needs a sealed tape")
    _check_backward(tape, output, wrt)
    adj = _sweep(tape, output, _NumpyNS, np.ones(()))
    return [np.array(adj[w.node_id], dtype=np.float64) if w.node_id in adj else np.zeros(w.shape)
            for w in wrt]


def record_gradients(tape: Tape, output: Var, wrt: Sequence[Var]) -> list[Var]:
    """Record the reverse sweep on ``tape`` and return the gradients as variables."""
    if tape.sealed:
        raise TapeError("record_gradients needs an unsealed tape (use tape.extend())")
    _check_backward(tape, output, wrt)
    F = _VarNS(tape)
    adj = _sweep(tape, output, F, tape.const(np.ones(())))
    return [adj[w.node_id] if w.node_id in adj else tape.const(np.zeros(w.shape)) for w in wrt]


def grad_of_gradnorm(tape: Tape, output: Var, input_point: Var, wrt_params: Sequence[Var],
                     eps: float = GRADNORM_EPS) -> list[np.ndarray]:
    """Gradient over ``wrt_params`` of ``sqrt(||d output / d input_point||^2 + eps)``."""
    ext = tape.extend()
    (gx,) = record_gradients(ext, output, [input_point])
    gnorm = l2norm(gx, eps)
    ext.seal()
    return backward_grad(ext, gnorm, wrt_params)


# --------------------------------------------------------------------------
# finite-difference checks

GRADCHECK_FLOOR = 1e-4


@dataclass(frozen=True)
class GradcheckReport:
    passed: bool
    worst_rel_error: float
    tolerance: float
    n_checked: int


def _rel_errors(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), GRADCHECK_FLOOR)


def _fd_compare(fn_value, analytic, inputs, tolerance, h) -> GradcheckReport:
    worst, count = 0.0, 0
    for k, x in enumerate(inputs):
        fd = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            xp = [v.copy() for v in inputs]
            xm = [v.copy() for v in inputs]
            xp[k][idx] += h
            xm[k][idx] -= h
            fd[idx] = (fn_value(xp) - fn_value(xm)) / (2 * h)
        if fd.size:
            worst = max(worst, float(np.max(_rel_errors(analytic[k], fd))))
        count += fd.size
    return GradcheckReport(worst <= tolerance, worst, tolerance, count)


def gradcheck(builder: Callable[[Tape, list[Var]], Var], inputs: Sequence, tolerance: float = 1e-5,
              h: float = 1e-5) -> GradcheckReport:
    """Compare :func:`backward_grad` with central differences of ``builder``.

    ``builder(tape, vars)`` must return a scalar variable. Errors are relative,
    with denominators floored at ``GRADCHECK_FLOOR`` so coordinates whose true
    derivative is ~0 are compared on an absolute scale.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]

    def value(xs):
        t = Tape()
        return float(builder(t, [t.leaf(x) for x in xs]).value)

    t = Tape()
    vs = [t.leaf(x) for x in inputs]
    out = builder(t, vs)
    t.seal()
    return _fd_compare(value, backward_grad(t, out, vs), inputs, tolerance, h)


def gradcheck_gradnorm(builder: Callable[[Tape, Var, list[Var]], Var], x, params: Sequence,
                       tolerance: float = 1e-4, h: float = 1e-5, eps: float = GRADNORM_EPS) -> GradcheckReport:
    """Check :func:`grad_of_gradnorm` against central differences of the gradient norm.

    ``builder(tape, x_var, param_vars)`` returns the scalar whose input-gradient
    norm is differentiated.
    """
    x = np.array(x, dtype=np.float64)
    params = [np.array(p, dtype=np.float64) for p in params]

    def gnorm(ps):
        t = Tape()
        xv = t.leaf(x)
        out = builder(t, xv, [t.leaf(p) for p in ps])
        t.seal()
        (gx,) = backward_grad(t, out, [xv])
        return float(np.sqrt(np.sum(gx * gx) + eps))

    t = Tape()
    xv = t.leaf(x)
    pv = [t.leaf(p) for p in params]
    out = builder(t, xv, pv)
    t.seal()
    return _fd_compare(gnorm, grad_of_gradnorm(t, out, xv, pv, eps), params, tolerance, h)
