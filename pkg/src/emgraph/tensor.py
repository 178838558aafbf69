"""Dense 2-D float64 tensors with a minimal reverse-mode tape.

Every differentiable computation in the package is built from the primitives
here plus the sparse-dense product that ``graphs`` registers through
``Tape.record``.  Tensors are immutable; a Tape is single-owner and can be
walked backward exactly once.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError

Array = np.ndarray


class Tensor:
    """Immutable (rows, cols) matrix of float64 entries.

    Construction rejects non-finite entries: NaN/Inf anywhere in the pipeline
    is a bug, and catching it at creation points to the op that produced it.
    """

    __slots__ = ("data",)

    def __init__(self, data, *, _trusted: bool = False):
        if _trusted:
            # internal fast path: caller guarantees a fresh, finite array
            arr = np.asarray(data, dtype=np.float64)
        else:
            arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got ndim={arr.ndim}")
        if not _trusted and not np.all(np.isfinite(arr)):
            raise NumericError("Tensor entries must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def tensor(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def zeros(rows: int, cols: int) -> Tensor:
    return Tensor(np.zeros((rows, cols)), _trusted=True)


def eye(n: int) -> Tensor:
    return Tensor(np.eye(n), _trusted=True)


class _Node:
    __slots__ = ("op", "inputs", "out", "grad_fn")

    def __init__(self, op, inputs, out, grad_fn):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.grad_fn = grad_fn


class Tape:
    """Ordered record of primitive ops, in topological order by construction.

    ``watch`` marks a tensor as a differentiable leaf; ``backward`` walks the
    record once, newest to oldest, and returns one gradient per leaf.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._leaf_ids: set[int] = set()
        self._leaves: list[Tensor] = []
        self._consumed = False

    def watch(self, t: Tensor) -> Tensor:
        if id(t) not in self._leaf_ids:
            self._leaf_ids.add(id(t))
            self._leaves.append(t)
        return t

    @property
    def leaves(self) -> tuple[Tensor, ...]:
        return tuple(self._leaves)

    def record(
        self,
        op: str,
        inputs: Sequence[Tensor],
        out: Tensor,
        grad_fn: Callable[[Array], Sequence[Array | None]],
    ) -> Tensor:
        """Append a primitive. ``grad_fn`` maps the upstream adjoint of ``out``
        to one adjoint (or None) per input.  Public so other modules can add
        ops with their own storage layout (the sparse product does this)."""
        self._nodes.append(_Node(op, tuple(inputs), out, grad_fn))
        return out

    @property
    def output(self) -> Tensor:
        if not self._nodes:
            raise ShapeError("empty tape has no output")
        return self._nodes[-1].out


def backward(tape: Tape, seed: Tensor) -> dict[Tensor, Tensor]:
    """Accumulate d(output . seed)/d(leaf) for every watched leaf.

    The seed must match the shape of the last recorded op's output.  Each
    node is visited exactly once; a tape cannot be consumed twice.
    """
    if tape._consumed:
        raise RuntimeError("tape already consumed by a previous backward pass")
    tape._consumed = True
    out = tape.output
    if seed.shape != out.shape:
        raise ShapeError(
            f"seed gradient shape {seed.shape} does not match output {out.shape}"
        )
    adjoint: dict[int, Array] = {id(out): seed.data}
    for node in reversed(tape._nodes):
        g = adjoint.get(id(node.out))
        if g is None:
            continue
        for inp, gin in zip(node.inputs, node.grad_fn(g)):
            if gin is None:
                continue
            prev = adjoint.get(id(inp))
            adjoint[id(inp)] = gin if prev is None else prev + gin
    grads: dict[Tensor, Tensor] = {}
    for leaf in tape._leaves:
        g = adjoint.get(id(leaf))
        if g is None:
            grads[leaf] = zeros(*leaf.shape)
        else:
            grads[leaf] = Tensor(g, _trusted=True)
    return grads


def _maybe_record(tape, op, inputs, out, grad_fn):
    if tape is not None:
        tape.record(op, inputs, out, grad_fn)
    return out


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} x {b.shape} do not conform")
    out = Tensor(a.data @ b.data)

    def grad_fn(g: Array):
        return g @ b.data.T, a.data.T @ g

    return _maybe_record(tape, "matmul", (a, b), out, grad_fn)


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data + b.data)
    return _maybe_record(tape, "add", (a, b), out, lambda g: (g, g))


def scale(a: Tensor, factor: float, tape: Tape | None = None) -> Tensor:
    factor = float(factor)
    out = Tensor(a.data * factor)
    return _maybe_record(tape, "scale", (a,), out, lambda g: (g * factor,))


def relu(a: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0), _trusted=True)
    # subgradient at 0 is taken to be 0
    mask = a.data > 0.0
    return _maybe_record(tape, "relu", (a,), out, lambda g: (g * mask,))


def row_softmax(a: Tensor, tape: Tape | None = None) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor(s, _trusted=True)

    def grad_fn(g: Array):
        dot = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - dot),)

    return _maybe_record(tape, "row-softmax", (a,), out, grad_fn)


def mean_rows(a: Tensor, tape: Tape | None = None) -> Tensor:
    n = a.rows
    out = Tensor(a.data.mean(axis=0, keepdims=True))

    def grad_fn(g: Array):
        return (np.repeat(g / n, n, axis=0),)

    return _maybe_record(tape, "mean-rows", (a,), out, grad_fn)


def concat_rows(parts: Sequence[Tensor], tape: Tape | None = None) -> Tensor:
    if not parts:
        raise ShapeError("concat-rows: need at least one part")
    width = parts[0].cols
    for p in parts:
        if p.cols != width:
            raise ShapeError("concat-rows: column counts differ")
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    sizes = [p.rows for p in parts]

    def grad_fn(g: Array):
        pieces = []
        start = 0
        for s in sizes:
            pieces.append(g[start : start + s])
            start += s
        return pieces

    return _maybe_record(tape, "concat-rows", tuple(parts), out, grad_fn)


def cross_entropy(
    logits: Tensor,
    labels: Array,
    indices: Array,
    tape: Tape | None = None,
) -> Tensor:
    """Mean cross-entropy of row-softmax(logits) against integer labels,
    restricted to the given row indices.  Fused for numerical stability."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise ShapeError("cross-entropy: empty index set")
    y = np.asarray(labels, dtype=np.int64)[idx]
    z = logits.data[idx]
    zmax = z.max(axis=1, keepdims=True)
    logsum = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    picked = z[np.arange(idx.size), y]
    value = float(np.mean(logsum - picked))
    out = Tensor([[value]])

    def grad_fn(g: Array):
        soft = np.exp(z - zmax)
        soft /= soft.sum(axis=1, keepdims=True)
        soft[np.arange(idx.size), y] -= 1.0
        full = np.zeros_like(logits.data)
        full[idx] = soft / idx.size
        return (full * g[0, 0],)

    return _maybe_record(tape, "cross-entropy", (logits,), out, grad_fn)


def mean_squared_error(pred: Tensor, target: Array, tape: Tape | None = None) -> Tensor:
    """Mean of squared residuals between an (n, 1) prediction column and a
    constant target column."""
    t = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    if pred.shape != t.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {t.shape}")
    resid = pred.data - t
    out = Tensor([[float(np.mean(resid**2))]])
    n = t.shape[0]

    def grad_fn(g: Array):
        return (2.0 * resid / n * g[0, 0],)

    return _maybe_record(tape, "mse", (pred,), out, grad_fn)


def value_and_grad(
    fn: Callable[[Tape], Tensor], params: Iterable[Tensor]
) -> tuple[Tensor, dict[Tensor, Tensor]]:
    """Run ``fn`` under a fresh tape watching ``params``; return the (1, 1)
    output and the gradient per parameter."""
    tape = Tape()
    for p in params:
        tape.watch(p)
    out = fn(tape)
    seed = Tensor(np.ones(out.shape), _trusted=True)
    return out, backward(tape, seed)


def finite_diff_check(
    loss_fn: Callable[[Sequence[Tensor], Tape | None], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between the tape gradient of ``loss_fn`` and central
    differences, over every entry of every parameter.

    ``loss_fn(params, tape)`` must be deterministic and return a 1x1 tensor;
    it is re-evaluated with perturbed copies and ``tape=None``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    tape = Tape()
    for p in params:
        tape.watch(p)
    loss_fn(list(params), tape)
    grads = backward(tape, Tensor([[1.0]]))

    worst = 0.0
    for k, p in enumerate(params):
        analytic = grads[p].data
        base = p.data
        for r in range(p.rows):
            for c in range(p.cols):
                bumped = []
                for sign in (+1.0, -1.0):
                    mod = base.copy()
                    mod[r, c] += sign * h
                    repl = list(params)
                    repl[k] = Tensor(mod)
                    val = loss_fn(repl, None).item()
                    if not np.isfinite(val):
                        raise NumericError(
                            f"non-finite loss at parameter {k}, entry ({r}, {c})"
                        )
                    bumped.append(val)
                central = (bumped[0] - bumped[1]) / (2.0 * h)
                err = abs(analytic[r, c] - central) / max(1.0, abs(central))
                worst = max(worst, err)
    return worst
