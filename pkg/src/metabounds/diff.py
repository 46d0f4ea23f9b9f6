"""Tape-based reverse-mode automatic differentiation over real tensors.

Deliberately minimal: exactly the operations the bound objectives need
(elementwise arithmetic, matmul, reductions, exp/log/sqrt/tanh/relu, and a
stable softmax cross-entropy), recorded on an explicit tape whose node
order is a topological order by construction. backward() is one reverse
pass over that list. Everything is float64; a finite-difference gradcheck
is included as the accompanying oracle.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Tape:
    """Append-only record of operations, in construction order."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def tensor(self, value) -> "Tensor":
        """Create a leaf node holding a copy of value."""
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        return Tensor(self, arr, (), None)


class Tensor:
    """A node on a Tape: an ndarray value plus how it was computed.

    parents holds the input nodes and vjp maps the adjoint of this node to
    adjoints of those parents. Leaves have no parents and no vjp.
    """

    __slots__ = ("tape", "idx", "value", "parents", "vjp", "grad")

    def __init__(self, tape: Tape, value: np.ndarray,
                 parents: tuple["Tensor", ...],
                 vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.grad: np.ndarray | None = None
        self.idx = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _same_tape(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ValueError("operands live on different tapes")
    return tape


def add(a: Tensor, b):
    """a + b. Supports equal shapes, scalar addends, and row-vector bias
    addition (B, k) + (k,)."""
    if not isinstance(b, Tensor):
        c = float(b)
        return Tensor(a.tape, a.value + c, (a,), lambda g: (g,))
    _same_tape(a, b)
    if a.shape == b.shape:
        return Tensor(a.tape, a.value + b.value, (a, b), lambda g: (g, g))
    if a.value.ndim == 2 and b.value.ndim == 1 and a.shape[1] == b.shape[0]:
        return Tensor(a.tape, a.value + b.value, (a, b),
                      lambda g: (g, g.sum(axis=0)))
    raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")


def sub(a, b):
    """a - b under the same shape rules as add."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        c = float(b)
        return Tensor(a.tape, a.value - c, (a,), lambda g: (g,))
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        c = float(a)
        return Tensor(b.tape, c - b.value, (b,), lambda g: (-g,))
    _same_tape(a, b)
    if a.shape == b.shape:
        return Tensor(a.tape, a.value - b.value, (a, b), lambda g: (g, -g))
    if a.value.ndim == 2 and b.value.ndim == 1 and a.shape[1] == b.shape[0]:
        return Tensor(a.tape, a.value - b.value, (a, b),
                      lambda g: (g, -g.sum(axis=0)))
    raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")


def mul(a: Tensor, b):
    """Elementwise product; b may be a Python scalar."""
    if not isinstance(b, Tensor):
        c = float(b)
        return Tensor(a.tape, a.value * c, (a,), lambda g: (g * c,))
    _same_tape(a, b)
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    return Tensor(a.tape, a.value * b.value, (a, b),
                  lambda g: (g * b.value, g * a.value))


def matmul(a: Tensor, b: Tensor):
    """Matrix product (p,q)@(q,r) -> (p,r) or matrix-vector (p,q)@(q,) -> (p,)."""
    _same_tape(a, b)
    if a.value.ndim != 2:
        raise ValueError(f"matmul left operand must be 2-d, got {a.shape}")
    if b.value.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        return Tensor(a.tape, a.value @ b.value, (a, b),
                      lambda g: (g @ b.value.T, a.value.T @ g))
    if b.value.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        return Tensor(a.tape, a.value @ b.value, (a, b),
                      lambda g: (np.outer(g, b.value), a.value.T @ g))
    raise ValueError(f"matmul right operand must be 1-d or 2-d, got {b.shape}")


def sum(a: Tensor):  # noqa: A001 - mirrors the op set on purpose
    """Full reduction to a scalar."""
    return Tensor(a.tape, np.asarray(a.value.sum()), (a,),
                  lambda g: (np.full(a.shape, float(g)),))


def mean(a: Tensor):
    """Arithmetic mean of all entries, as a scalar."""
    size = a.value.size
    return Tensor(a.tape, np.asarray(a.value.mean()), (a,),
                  lambda g: (np.full(a.shape, float(g) / size),))


def exp(a: Tensor):
    out = np.exp(a.value)
    return Tensor(a.tape, out, (a,), lambda g: (g * out,))


def log(a: Tensor):
    if not np.all(a.value > 0.0):
        raise ValueError("log requires strictly positive input")
    return Tensor(a.tape, np.log(a.value), (a,), lambda g: (g / a.value,))


def sqrt(a: Tensor):
    if not np.all(a.value > 0.0):
        raise ValueError("sqrt requires strictly positive input")
    out = np.sqrt(a.value)
    return Tensor(a.tape, out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a: Tensor):
    out = np.tanh(a.value)
    return Tensor(a.tape, out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor):
    """max(x, 0) with subgradient 0 at x = 0."""
    mask = a.value > 0.0
    return Tensor(a.tape, np.where(mask, a.value, 0.0), (a,),
                  lambda g: (g * mask,))


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray):
    """Per-sample cross-entropy of softmax(logits) against integer labels.

    logits is (B, C); labels is a length-B integer array. Returns the (B,)
    vector of losses -log softmax(logits)[label], computed with the usual
    max-shift for stability.
    """
    if logits.value.ndim != 2:
        raise ValueError(f"logits must be 2-d, got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ValueError(
            f"labels shape {labels.shape} does not match batch {logits.shape[0]}"
        )
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("label out of range")
    z = logits.value
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    losses = lse - shifted[rows, labels]
    softmax = np.exp(shifted - lse[:, None])

    def vjp(g):
        grad = softmax * g[:, None]
        grad[rows, labels] -= g
        return (grad,)

    return Tensor(logits.tape, losses, (logits,), vjp)


def backward(out: Tensor) -> None:
    """Reverse-mode pass from a scalar output.

    Fills .grad on every node at or before out on the tape (zeros where the
    output does not depend on the node). One linear sweep suffices because
    the tape is topologically ordered by construction.
    """
    if out.value.size != 1:
        raise ValueError(f"backward requires a scalar output, got shape {out.shape}")
    nodes = out.tape.nodes
    adjoint: list[np.ndarray | None] = [None] * (out.idx + 1)
    adjoint[out.idx] = np.ones_like(out.value)
    for i in range(out.idx, -1, -1):
        node = nodes[i]
        g = adjoint[i]
        if g is None:
            node.grad = np.zeros_like(node.value)
            continue
        node.grad = g
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if adjoint[parent.idx] is None:
                adjoint[parent.idx] = np.zeros_like(parent.value)
            adjoint[parent.idx] += pg


def gradcheck(build: Callable[[Sequence[np.ndarray]],
                              tuple[Tensor, Sequence[Tensor]]],
              points: Sequence[np.ndarray],
              h: float = 1e-5) -> float:
    """Compare tape gradients against central finite differences.

    build takes a list of ndarrays, constructs a fresh tape, and returns
    (scalar output tensor, list of leaf tensors in the same order as
    points). Returns the worst relative error over all coordinates, with
    denominator max(|analytic|, |numeric|, 1e-8).
    """
    points = [np.array(p, dtype=np.float64) for p in points]

    def value_at(ps):
        out, _ = build(ps)
        v = np.asarray(out.value)
        if v.size != 1 or not np.all(np.isfinite(v)):
            raise ValueError("objective must evaluate to a finite scalar")
        return float(v)

    out, leaves = build(points)
    if not np.all(np.isfinite(out.value)):
        raise ValueError("objective must evaluate to a finite scalar")
    backward(out)
    analytic = [leaf.grad.copy() for leaf in leaves]

    worst = 0.0
    for k, p in enumerate(points):
        flat = p.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = value_at(points)
            flat[j] = orig - h
            down = value_at(points)
            flat[j] = orig
            numeric = (up - down) / (2.0 * h)
            a = float(analytic[k].ravel()[j])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
