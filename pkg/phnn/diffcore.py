"""
Reverse-mode differentiation over a fixed set of array primitives

Graphs are defined once on a Tape through Var handles and then evaluated
with Tape.forward(params, inputs); Tape.backward(params, cotangent) sweeps
the recorded nodes in reverse order and returns the gradients of every
parameter and input.

Arrays flowing through the network primitives are [batch x channels x M].
Stencil, solve and reduction nodes act on the last axis and accept any
leading shape.
"""
import logging
from copy import deepcopy
from dataclasses import dataclass, field
from numbers import Number

import numpy as np

from phnn.common.errors import KernelTooWideError, ShapeError, UnsupportedError, UsageError
from phnn.spatial import ConvKernel, solve_circulant, stencil_apply

logger = logging.getLogger("phnn")

SCALAR_NET_ARCHITECTURE = "conv-affine-affine-sum"
ACTIVATIONS = ("tanh", "identity", "square")


######################################################################
#  P A R A M E T E R   S T O R E
######################################################################
@dataclass
class Param:
    """A named array with the constraint of the kernel it parametrizes"""

    value: np.ndarray
    constraint: str = "free"
    trainable: bool = True


class ParamStore:
    """Ordered collection of named parameters with a flat view of the trainable ones"""

    def __init__(self):
        self._params = {}

    def __repr__(self):
        return f"<ParamStore params={len(self._params)} size={self.size}>"

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def __iter__(self):
        return iter(self._params)

    def add(self, name: str, value, constraint: str = "free", trainable: bool = True):
        """Registers a new parameter"""
        if name in self._params:
            raise UsageError(f"Parameter '{name}' is already registered")
        self._params[name] = Param(np.array(value, dtype=float), constraint, bool(trainable))

    def remove(self, name: str):
        """Drops a parameter"""
        self.meta(name)
        del self._params[name]

    def meta(self, name: str) -> Param:
        """Returns the parameter record"""
        try:
            return self._params[name]
        except KeyError as error:
            raise UsageError(f"Unknown parameter '{name}'") from error

    def get(self, name: str) -> np.ndarray:
        """Returns the value of a parameter"""
        return self.meta(name).value

    def set(self, name: str, value):
        """Overwrites the value of a parameter, keeping its shape"""
        param = self.meta(name)
        value = np.array(value, dtype=float)
        if value.shape != param.value.shape:
            raise ShapeError(f"Parameter '{name}' has shape {param.value.shape}, got {value.shape}")
        param.value = value

    def names(self, trainable_only: bool = False) -> list:
        """Parameter names in registration order"""
        return [name for name, param in self._params.items() if param.trainable or not trainable_only]

    @property
    def size(self) -> int:
        """Number of trainable scalars"""
        return sum(self._params[name].value.size for name in self.names(trainable_only=True))

    def flat(self) -> np.ndarray:
        """Concatenation of all trainable parameters"""
        parts = [self._params[name].value.ravel() for name in self.names(trainable_only=True)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def set_flat(self, vector):
        """Writes a flat vector back into the trainable parameters"""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.size,):
            raise ShapeError(f"Flat parameter vector must have length {self.size}, got {vector.shape}")
        offset = 0
        for name in self.names(trainable_only=True):
            param = self._params[name]
            count = param.value.size
            param.value = vector[offset:offset + count].reshape(param.value.shape).copy()
            offset += count

    def flatten_grads(self, grads: dict) -> np.ndarray:
        """Lays out gradients like flat(), with zeros for parameters missing from grads"""
        parts = []
        for name in self.names(trainable_only=True):
            value = self._params[name].value
            parts.append(np.asarray(grads.get(name, np.zeros_like(value)), dtype=float).ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def copy(self) -> "ParamStore":
        """Deep copy"""
        return deepcopy(self)


######################################################################
#  H E L P E R S
######################################################################
def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sums a broadcast gradient back down to the operand shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _shifted(x: np.ndarray, halfwidth: int, sign: int = -1) -> np.ndarray:
    """Stack of np.roll(x, sign*k) for k = -m..m on a new axis before the positions"""
    if x.shape[-1] < 2 * halfwidth + 1:
        raise KernelTooWideError(
            f"Kernel of width {2 * halfwidth + 1} does not fit on a grid with M={x.shape[-1]} nodes"
        )
    return np.stack([np.roll(x, sign * k, axis=-1) for k in range(-halfwidth, halfwidth + 1)], axis=-2)


def _halfwidth(width: int) -> int:
    if width % 2 == 0:
        raise ShapeError(f"Kernel width must be odd, got {width}")
    return (width - 1) // 2


def _stencil_weight_grad(grad: np.ndarray, x: np.ndarray, width: int) -> np.ndarray:
    """d/da_k of sum(grad * stencil(a, x)) = sum_i grad_i x_{i+k}"""
    M = x.shape[-1]
    shifted = _shifted(x.reshape(-1, M), _halfwidth(width))
    return np.einsum("nm,nkm->k", grad.reshape(-1, M), shifted)


######################################################################
#  P R I M I T I V E S
######################################################################
_PRIMITIVES = {}


def primitive(op: str):
    """Registers the forward and reverse rule of an operation"""

    def decorator(cls):
        _PRIMITIVES[op] = cls
        return cls

    return decorator


@primitive("add")
class _Add:
    @staticmethod
    def forward(args, attrs):
        return args[0] + args[1]

    @staticmethod
    def backward(grad, args, out, attrs):
        return _unbroadcast(grad, args[0].shape), _unbroadcast(grad, args[1].shape)


@primitive("sub")
class _Sub:
    @staticmethod
    def forward(args, attrs):
        return args[0] - args[1]

    @staticmethod
    def backward(grad, args, out, attrs):
        return _unbroadcast(grad, args[0].shape), _unbroadcast(-grad, args[1].shape)


@primitive("mul")
class _Mul:
    @staticmethod
    def forward(args, attrs):
        return args[0] * args[1]

    @staticmethod
    def backward(grad, args, out, attrs):
        return (
            _unbroadcast(grad * args[1], args[0].shape),
            _unbroadcast(grad * args[0], args[1].shape),
        )


@primitive("scale")
class _Scale:
    @staticmethod
    def forward(args, attrs):
        return attrs["factor"] * args[0]

    @staticmethod
    def backward(grad, args, out, attrs):
        return (attrs["factor"] * grad,)


@primitive("add_const")
class _AddConst:
    @staticmethod
    def forward(args, attrs):
        return args[0] + attrs["value"]

    @staticmethod
    def backward(grad, args, out, attrs):
        return (_unbroadcast(grad, args[0].shape),)


@primitive("assemble")
class _Assemble:
    """Full kernel weights from the free components: offset + basis @ free"""

    @staticmethod
    def forward(args, attrs):
        return attrs["offset"] + attrs["basis"] @ args[0]

    @staticmethod
    def backward(grad, args, out, attrs):
        return (attrs["basis"].T @ grad,)


@primitive("conv")
class _Conv:
    """Circular cross-correlation out[b,o,i] = sum_{c,k} w[o,c,k] x[b,c,i+k-m] (+ bias)"""

    @staticmethod
    def forward(args, attrs):
        x, w = args[0], args[1]
        if w.ndim != 3 or x.ndim != 3 or x.shape[1] != w.shape[1]:
            raise ShapeError(f"Cannot convolve input {x.shape} with weights {w.shape}")
        out = np.einsum("ock,bckm->bom", w, _shifted(x, _halfwidth(w.shape[2])))
        if len(args) == 3:
            out = out + args[2][None, :, None]
        return out

    @staticmethod
    def backward(grad, args, out, attrs):
        x, w = args[0], args[1]
        m = _halfwidth(w.shape[2])
        grads = (
            _ConvT.forward((grad, w), attrs),
            np.einsum("bom,bckm->ock", grad, _shifted(x, m)),
        )
        if len(args) == 3:
            grads += (grad.sum(axis=(0, 2)),)
        return grads


@primitive("conv_t")
class _ConvT:
    """Adjoint of conv: out[b,c,j] = sum_{o,k} w[o,c,k] x[b,o,j-k+m]"""

    @staticmethod
    def forward(args, attrs):
        x, w = args[0], args[1]
        if w.ndim != 3 or x.ndim != 3 or x.shape[1] != w.shape[0]:
            raise ShapeError(f"Cannot apply transposed convolution {w.shape} to {x.shape}")
        return np.einsum("ock,bokm->bcm", w, _shifted(x, _halfwidth(w.shape[2]), sign=1))

    @staticmethod
    def backward(grad, args, out, attrs):
        x, w = args
        m = _halfwidth(w.shape[2])
        return (
            _Conv.forward((grad, w), attrs),
            np.einsum("bom,bckm->ock", x, _shifted(grad, m)),
        )


@primitive("stencil")
class _Stencil:
    """Applies a width 2m+1 stencil given as a weight node to every row"""

    @staticmethod
    def forward(args, attrs):
        return stencil_apply(ConvKernel(args[1]), args[0])

    @staticmethod
    def backward(grad, args, out, attrs):
        x, w = args
        return (
            stencil_apply(ConvKernel(w[::-1]), grad),
            _stencil_weight_grad(grad, x, w.size),
        )


@primitive("stencil_t")
class _StencilT:
    """Applies the reflected stencil, the adjoint of stencil"""

    @staticmethod
    def forward(args, attrs):
        return stencil_apply(ConvKernel(args[1][::-1]), args[0])

    @staticmethod
    def backward(grad, args, out, attrs):
        x, w = args
        return (
            stencil_apply(ConvKernel(w), grad),
            _stencil_weight_grad(x, grad, w.size),
        )


@primitive("solve")
class _Solve:
    """y = C^{-1} b for the circulant C of a weight node; reverse rule solves with C^T"""

    @staticmethod
    def forward(args, attrs):
        return solve_circulant(ConvKernel(args[1]), args[0])

    @staticmethod
    def backward(grad, args, out, attrs):
        w = args[1]
        adjoint = solve_circulant(ConvKernel(w), grad, transpose=True)
        return adjoint, -_stencil_weight_grad(adjoint, out, w.size)


@primitive("affine")
class _Affine:
    """Pointwise layer across channels out[b,o,i] = sum_c W[o,c] x[b,c,i] (+ bias)"""

    @staticmethod
    def forward(args, attrs):
        x, W = args[0], args[1]
        if W.ndim != 2 or x.ndim != 3 or x.shape[1] != W.shape[1]:
            raise ShapeError(f"Cannot apply affine layer {W.shape} to {x.shape}")
        out = np.einsum("oc,bcm->bom", W, x)
        if len(args) == 3:
            out = out + args[2][None, :, None]
        return out

    @staticmethod
    def backward(grad, args, out, attrs):
        x, W = args[0], args[1]
        grads = (np.einsum("oc,bom->bcm", W, grad), np.einsum("bom,bcm->oc", grad, x))
        if len(args) == 3:
            grads += (grad.sum(axis=(0, 2)),)
        return grads


@primitive("affine_t")
class _AffineT:
    """Transposed pointwise layer out[b,c,i] = sum_o W[o,c] x[b,o,i]"""

    @staticmethod
    def forward(args, attrs):
        x, W = args
        if W.ndim != 2 or x.ndim != 3 or x.shape[1] != W.shape[0]:
            raise ShapeError(f"Cannot apply transposed affine layer {W.shape} to {x.shape}")
        return np.einsum("oc,bom->bcm", W, x)

    @staticmethod
    def backward(grad, args, out, attrs):
        x, W = args
        return np.einsum("oc,bcm->bom", W, grad), np.einsum("bom,bcm->oc", x, grad)


@primitive("tanh")
class _Tanh:
    @staticmethod
    def forward(args, attrs):
        return np.tanh(args[0])

    @staticmethod
    def backward(grad, args, out, attrs):
        return (grad * (1.0 - out**2),)


@primitive("tanh_deriv")
class _TanhDeriv:
    """1 - tanh(x)^2"""

    @staticmethod
    def forward(args, attrs):
        return 1.0 - np.tanh(args[0]) ** 2

    @staticmethod
    def backward(grad, args, out, attrs):
        return (grad * (-2.0 * np.tanh(args[0]) * out),)


@primitive("fill_like")
class _FillLike:
    """Constant array shaped like the operand; nothing flows back"""

    @staticmethod
    def forward(args, attrs):
        return np.full(args[0].shape, attrs["value"], dtype=float)

    @staticmethod
    def backward(grad, args, out, attrs):
        return (None,)


@primitive("concat")
class _Concat:
    @staticmethod
    def forward(args, attrs):
        return np.concatenate(args, axis=1)

    @staticmethod
    def backward(grad, args, out, attrs):
        bounds = np.cumsum([arg.shape[1] for arg in args])[:-1]
        return tuple(np.split(grad, bounds, axis=1))


@primitive("expand_batch")
class _ExpandBatch:
    """Repeats a single-sample array along the batch axis of a reference node"""

    @staticmethod
    def forward(args, attrs):
        x, like = args
        return np.broadcast_to(x, (like.shape[0],) + x.shape[1:]).copy()

    @staticmethod
    def backward(grad, args, out, attrs):
        return _unbroadcast(grad, args[0].shape), None


@primitive("broadcast_positions")
class _BroadcastPositions:
    """(B,) per-sample scalars to (B, 1, M) with M taken from a reference node"""

    @staticmethod
    def forward(args, attrs):
        t, like = args
        t = np.reshape(t, (-1,))
        if t.shape[0] != like.shape[0]:
            raise ShapeError(f"Got {t.shape[0]} times for a batch of {like.shape[0]}")
        return np.broadcast_to(t[:, None, None], (t.shape[0], 1, like.shape[-1])).copy()

    @staticmethod
    def backward(grad, args, out, attrs):
        return grad.sum(axis=(1, 2)).reshape(np.shape(args[0])), None


@primitive("sum_reduce")
class _SumReduce:
    """Sum over everything but the batch axis; a single vector reduces to a scalar"""

    @staticmethod
    def forward(args, attrs):
        x = args[0]
        if x.ndim <= 1:
            return np.sum(x)
        return x.reshape(x.shape[0], -1).sum(axis=1)

    @staticmethod
    def backward(grad, args, out, attrs):
        x = args[0]
        grad = np.reshape(grad, np.shape(grad) + (1,) * (x.ndim - np.ndim(grad)))
        return (np.broadcast_to(grad, x.shape).copy(),)


@primitive("mean_square")
class _MeanSquare:
    @staticmethod
    def forward(args, attrs):
        return np.mean(args[0] ** 2)

    @staticmethod
    def backward(grad, args, out, attrs):
        return (grad * 2.0 * args[0] / args[0].size,)


@primitive("mean_abs")
class _MeanAbs:
    @staticmethod
    def forward(args, attrs):
        return np.mean(np.abs(args[0]))

    @staticmethod
    def backward(grad, args, out, attrs):
        return (grad * np.sign(args[0]) / args[0].size,)


######################################################################
#  T A P E
######################################################################
@dataclass(frozen=True)
class Node:
    """One recorded operation"""

    op: str
    operands: tuple = ()
    attrs: dict = field(default_factory=dict)


@dataclass
class Gradients:
    """Result of a backward sweep"""

    params: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)


def _is_scalar(value) -> bool:
    return isinstance(value, Number) and not isinstance(value, bool)


class Var:
    """Handle to a node of a Tape, with arithmetic operators that record new nodes"""

    # keeps numpy from broadcasting over a Var and hands the operator back to us
    __array_ufunc__ = None

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    def __repr__(self):
        return f"<Var {self.index} {self.tape.nodes[self.index].op}>"

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(other, self)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        return self.tape.mul(other, self)

    def __truediv__(self, other):
        if not _is_scalar(other):
            raise UnsupportedError("Only division by a scalar is supported")
        return self.tape.scale(self, 1.0 / other)

    def __neg__(self):
        return self.tape.scale(self, -1.0)


class Tape:
    """Define-then-run computation graph"""

    def __init__(self):
        self.nodes = []
        self.outputs = []
        self._leaves = {}
        self._values = None

    def __repr__(self):
        return f"<Tape nodes={len(self.nodes)} outputs={len(self.outputs)}>"

    def __len__(self):
        return len(self.nodes)

    ##################################################
    # Graph construction
    ##################################################
    def _record(self, op: str, operands=(), **attrs) -> Var:
        indices = []
        for operand in operands:
            if not isinstance(operand, Var):
                operand = self.const(operand)
            if operand.tape is not self:
                raise UsageError("Cannot combine nodes of different tapes")
            indices.append(operand.index)
        self.nodes.append(Node(op, tuple(indices), attrs))
        self._values = None
        return Var(self, len(self.nodes) - 1)

    def _leaf(self, op: str, name: str) -> Var:
        key = (op, name)
        if key not in self._leaves:
            self._leaves[key] = self._record(op, name=name)
        return self._leaves[key]

    def input(self, name: str) -> Var:
        """Placeholder filled from the inputs mapping at forward time"""
        return self._leaf("input", name)

    def param(self, name: str) -> Var:
        """Parameter looked up in the ParamStore at forward time"""
        return self._leaf("param", name)

    def const(self, value) -> Var:
        """Fixed array"""
        return self._record("const", value=np.array(value, dtype=float))

    def add(self, a, b) -> Var:
        if not isinstance(a, Var):
            a, b = b, a
        if not isinstance(b, Var):
            return self._record("add_const", (a,), value=np.asarray(b, dtype=float))
        return self._record("add", (a, b))

    def sub(self, a, b) -> Var:
        if not isinstance(b, Var):
            return self._record("add_const", (a,), value=-np.asarray(b, dtype=float))
        if not isinstance(a, Var):
            return self.add(self.scale(b, -1.0), a)
        return self._record("sub", (a, b))

    def mul(self, a, b) -> Var:
        if not isinstance(a, Var):
            a, b = b, a
        if _is_scalar(b):
            return self.scale(a, b)
        return self._record("mul", (a, b))

    def scale(self, x: Var, factor: float) -> Var:
        return self._record("scale", (x,), factor=float(factor))

    def add_const(self, x: Var, value) -> Var:
        return self._record("add_const", (x,), value=np.asarray(value, dtype=float))

    def assemble(self, free: Var, offset, basis) -> Var:
        """Kernel weights offset + basis @ free from the free components of a constrained kernel"""
        return self._record(
            "assemble",
            (free,),
            offset=np.asarray(offset, dtype=float),
            basis=np.asarray(basis, dtype=float).reshape(len(offset), -1),
        )

    def conv(self, x: Var, weight: Var, bias: Var = None) -> Var:
        operands = (x, weight) if bias is None else (x, weight, bias)
        return self._record("conv", operands)

    def conv_t(self, x: Var, weight: Var) -> Var:
        return self._record("conv_t", (x, weight))

    def stencil(self, x: Var, weights: Var) -> Var:
        return self._record("stencil", (x, weights))

    def stencil_t(self, x: Var, weights: Var) -> Var:
        return self._record("stencil_t", (x, weights))

    def solve(self, b: Var, weights: Var) -> Var:
        return self._record("solve", (b, weights))

    def affine(self, x: Var, weight: Var, bias: Var = None) -> Var:
        operands = (x, weight) if bias is None else (x, weight, bias)
        return self._record("affine", operands)

    def affine_t(self, x: Var, weight: Var) -> Var:
        return self._record("affine_t", (x, weight))

    def tanh(self, x: Var) -> Var:
        return self._record("tanh", (x,))

    def tanh_deriv(self, x: Var) -> Var:
        return self._record("tanh_deriv", (x,))

    def fill_like(self, x: Var, value: float) -> Var:
        return self._record("fill_like", (x,), value=float(value))

    def concat(self, parts: list) -> Var:
        return self._record("concat", tuple(parts))

    def expand_batch(self, x: Var, like: Var) -> Var:
        return self._record("expand_batch", (x, like))

    def broadcast_positions(self, t: Var, like: Var) -> Var:
        return self._record("broadcast_positions", (t, like))

    def sum_reduce(self, x: Var) -> Var:
        return self._record("sum_reduce", (x,))

    def mean_square(self, x: Var) -> Var:
        return self._record("mean_square", (x,))

    def mean_abs(self, x: Var) -> Var:
        return self._record("mean_abs", (x,))

    def mark_output(self, *variables: Var):
        """Declares the values returned by forward and seeded by backward"""
        self.outputs.extend(var.index for var in variables)

    ##################################################
    # Evaluation
    ##################################################
    def _evaluate(self, node: Node, values: list, params: ParamStore, inputs: dict):
        if node.op == "input":
            try:
                return np.asarray(inputs[node.attrs["name"]], dtype=float)
            except KeyError as error:
                raise UsageError(f"Missing input '{node.attrs['name']}'") from error
        if node.op == "param":
            return params.get(node.attrs["name"])
        if node.op == "const":
            return node.attrs["value"]
        args = tuple(values[index] for index in node.operands)
        return _PRIMITIVES[node.op].forward(args, node.attrs)

    def forward(self, params: ParamStore, inputs: dict = None):
        """Evaluates every node in order and returns the output values"""
        inputs = {} if inputs is None else inputs
        if not self.nodes:
            self._values = []
            return inputs
        values = []
        for index, node in enumerate(self.nodes):
            try:
                values.append(self._evaluate(node, values, params, inputs))
            except (ValueError, IndexError) as error:
                raise ShapeError(f"Node {index} ({node.op}): {error}") from error
        self._values = values
        outputs = self.outputs or [len(values) - 1]
        if len(outputs) == 1:
            return values[outputs[0]]
        return tuple(values[index] for index in outputs)

    def value(self, var: Var) -> np.ndarray:
        """Value of any node from the last forward pass"""
        if self._values is None:
            raise UsageError("The tape has not been evaluated")
        return self._values[var.index]

    def backward(self, params: ParamStore, cotangent=1.0) -> Gradients:
        """
        Propagates the cotangent of the outputs back to every parameter and input

        With several outputs the cotangent is a sequence with one entry per
        output. Parameters used by the tape that the outputs do not depend on
        get zero gradients.
        """
        if self._values is None:
            raise UsageError("backward was called before forward")
        result = Gradients()
        if not self.nodes:
            return result
        outputs = self.outputs or [len(self.nodes) - 1]
        cotangents = cotangent if len(outputs) > 1 else [cotangent]
        grads = [None] * len(self.nodes)
        for index, seed in zip(outputs, cotangents):
            seed = np.broadcast_to(np.asarray(seed, dtype=float), np.shape(self._values[index])).copy()
            grads[index] = seed if grads[index] is None else grads[index] + seed

        for index in reversed(range(len(self.nodes))):
            node = self.nodes[index]
            grad = grads[index]
            if node.op == "param":
                name = node.attrs["name"]
                result.params[name] = grad if grad is not None else np.zeros_like(params.get(name))
                continue
            if node.op == "input":
                if grad is not None:
                    result.inputs[node.attrs["name"]] = grad
                continue
            if grad is None or node.op == "const":
                continue
            args = tuple(self._values[operand] for operand in node.operands)
            operand_grads = _PRIMITIVES[node.op].backward(grad, args, self._values[index], node.attrs)
            for operand, operand_grad in zip(node.operands, operand_grads):
                if operand_grad is None:
                    continue
                if grads[operand] is None:
                    grads[operand] = operand_grad
                else:
                    grads[operand] = grads[operand] + operand_grad
        return result


def forward(tape: Tape, params: ParamStore, inputs: dict = None):
    """Evaluates a tape"""
    return tape.forward(params, inputs)


def backward(tape: Tape, params: ParamStore, cotangent=1.0) -> Gradients:
    """Runs the reverse sweep of an evaluated tape"""
    return tape.backward(params, cotangent)


######################################################################
#  S C A L A R   N E T W O R K   I N P U T   G R A D I E N T
######################################################################
def activate(x: Var, name: str) -> Var:
    """Applies a named activation"""
    if name == "tanh":
        return x.tape.tanh(x)
    if name == "identity":
        return x
    if name == "square":
        return x * x
    raise UnsupportedError(f"Unknown activation '{name}'")


def activation_derivative(x: Var, name: str) -> Var:
    """Derivative of a named activation evaluated at x"""
    if name == "tanh":
        return x.tape.tanh_deriv(x)
    if name == "identity":
        return x.tape.fill_like(x, 1.0)
    if name == "square":
        return x.tape.scale(x, 2.0)
    raise UnsupportedError(f"Unknown activation '{name}'")


def grad_input_scalar_net(net, u: Var) -> Var:
    """
    Emits the gradient of a conv -> affine -> affine -> sum network with respect to u

    The chain rule is expanded into first order primitives so that a single
    backward sweep yields parameter gradients of anything built on top.
    """
    if getattr(net, "architecture", None) != SCALAR_NET_ARCHITECTURE:
        raise UnsupportedError(f"Cannot differentiate a network of architecture {getattr(net, 'architecture', None)}")
    tape = u.tape
    conv_weight = tape.param(net.param_name("conv.weight"))
    hidden_weight = tape.param(net.param_name("hidden.weight"))
    out_weight = tape.param(net.param_name("out.weight"))
    first, second = net.activations

    z0 = tape.conv(u, conv_weight, tape.param(net.param_name("conv.bias")))
    z1 = tape.affine(activate(z0, first), hidden_weight, tape.param(net.param_name("hidden.bias")))

    grad = tape.affine_t(tape.fill_like(u, net.quadrature_scale), out_weight)
    grad = grad * activation_derivative(z1, second)
    grad = tape.affine_t(grad, hidden_weight)
    grad = grad * activation_derivative(z0, first)
    return tape.conv_t(grad, conv_weight)


def finite_diff_gradient(f, u, eps: float = 1e-6) -> np.ndarray:
    """Central difference gradient of a scalar function"""
    if eps <= 0:
        raise UsageError(f"Finite difference step must be positive, got {eps}")
    u = np.array(u, dtype=float)
    grad = np.zeros_like(u)
    for index in np.ndindex(u.shape):
        step = np.zeros_like(u)
        step[index] = eps
        grad[index] = (f(u + step) - f(u - step)) / (2.0 * eps)
    return grad
