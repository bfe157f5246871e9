"""
Models for learned dynamics

All of the models are stored in this module: the pseudo-Hamiltonian
composite A^{-1}(S grad H - R grad V + f), its building blocks (scalar
integral networks, force network, constrained operator kernels) and the
black-box baseline network.
"""
import logging
from abc import abstractmethod
from copy import deepcopy
from typing import NamedTuple

import numpy as np

from phnn.common.errors import ConfigError, DataFormatError, ShapeError, UnsupportedError, UsageError
from phnn.diffcore import (
    SCALAR_NET_ARCHITECTURE,
    ParamStore,
    Tape,
    activate,
    grad_input_scalar_net,
)
from phnn.pdezoo import ForceFlags, SystemSpec, system_spec
from phnn.spatial import ConvKernel, PeriodicGrid, central_difference, stencil_apply

logger = logging.getLogger("phnn")

PRESETS = ("general", "informed", "lean", "nodiss", "baseline")

MODEL_LABELS = {
    "general": "PHNN (general)",
    "informed": "PHNN (informed)",
    "lean": "PHNN (lean)",
    "nodiss": "PHNN (no diss. term)",
    "baseline": "Baseline",
}

PRESET_K = {
    "general": (3, 3, 3, 1),
    "lean": (1, 0, 3, 1),
    "nodiss": (3, 3, 0, 1),
}

DEFAULT_WIDTHS = (20, 100, 100)
ALL_FLAGS = ForceFlags(u=True, x=True, t=True)

LEAK_GRAD_V = "leak.grad_v"
LEAK_FORCE = "leak.force"

# systems whose integrals contain no derivatives, given a parameter condition
DERIVATIVE_FREE = {
    "bbm": lambda params: True,
    "kdvburgers": lambda params: params.get("nu", 0.0) == 0.0,
    "cahnhilliard": lambda params: params.get("mu", 0.0) == 0.0,
}


class Widths(NamedTuple):
    """Conv channels, hidden width of the integral nets and width of the force net"""

    channels: int
    hidden: int
    force: int


def _uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


######################################################################
#  N E T W O R K S
######################################################################
class ScalarIntegralNet:
    """
    Learned discrete integral: conv (width 3, 1 -> C) -> act -> affine (C -> C2)
    -> act -> affine (C2 -> 1) -> sum over positions
    """

    architecture = SCALAR_NET_ARCHITECTURE

    def __init__(self, prefix: str, channels: int = 20, hidden: int = 100,
                 activations=("tanh", "tanh"), quadrature_scale: float = 1.0):
        self.prefix = prefix
        self.channels = int(channels)
        self.hidden = int(hidden)
        self.activations = tuple(activations)
        self.quadrature_scale = float(quadrature_scale)

    def __repr__(self):
        return f"<ScalarIntegralNet {self.prefix} C={self.channels} C2={self.hidden} {self.activations}>"

    def param_name(self, part: str) -> str:
        """Fully qualified parameter name"""
        return f"{self.prefix}.{part}"

    def param_names(self) -> list:
        """Names of all parameters of the network"""
        parts = ("conv.weight", "conv.bias", "hidden.weight", "hidden.bias", "out.weight", "out.bias")
        return [self.param_name(part) for part in parts]

    def init_params(self, store: ParamStore, rng: np.random.Generator):
        """Registers freshly initialized parameters"""
        C, C2 = self.channels, self.hidden
        store.add(self.param_name("conv.weight"), _uniform(rng, (C, 1, 3), 3))
        store.add(self.param_name("conv.bias"), np.zeros(C))
        store.add(self.param_name("hidden.weight"), _uniform(rng, (C2, C), C))
        store.add(self.param_name("hidden.bias"), np.zeros(C2))
        store.add(self.param_name("out.weight"), _uniform(rng, (1, C2), C2))
        store.add(self.param_name("out.bias"), np.zeros(1))

    def emit(self, u):
        """Per-sample integral value, shape (B,)"""
        tape = u.tape
        first, second = self.activations
        z0 = tape.conv(u, tape.param(self.param_name("conv.weight")), tape.param(self.param_name("conv.bias")))
        z1 = tape.affine(
            activate(z0, first),
            tape.param(self.param_name("hidden.weight")),
            tape.param(self.param_name("hidden.bias")),
        )
        z2 = tape.affine(
            activate(z1, second),
            tape.param(self.param_name("out.weight")),
            tape.param(self.param_name("out.bias")),
        )
        return tape.scale(tape.sum_reduce(z2), self.quadrature_scale)

    def emit_gradient(self, u):
        """Gradient of the integral with respect to u, shape (B, 1, M)"""
        return grad_input_scalar_net(self, u)

    def value(self, params: ParamStore, u) -> float:
        """Integral of a single state"""
        tape = Tape()
        tape.mark_output(self.emit(tape.input("u")))
        return float(tape.forward(params, {"u": np.reshape(u, (1, 1, -1))})[0])

    def gradient(self, params: ParamStore, u) -> np.ndarray:
        """Input gradient of a single state"""
        tape = Tape()
        tape.mark_output(self.emit_gradient(tape.input("u")))
        return tape.forward(params, {"u": np.reshape(u, (1, 1, -1))}).reshape(-1)


class ForceNet:
    """Pointwise network on [u] ++ [sin, cos of x] ++ [t]; disabled when no flag is set"""

    def __init__(self, prefix: str = "f", flags: ForceFlags = ALL_FLAGS, width: int = 100):
        self.prefix = prefix
        self.flags = ForceFlags(*flags)
        self.width = int(width)

    def __repr__(self):
        return f"<ForceNet {self.prefix} flags={tuple(self.flags)} width={self.width}>"

    @property
    def enabled(self) -> bool:
        """False when the force depends on nothing"""
        return any(self.flags)

    @property
    def n_features(self) -> int:
        """Input channels per position"""
        return int(self.flags.u) + 2 * int(self.flags.x) + int(self.flags.t)

    def param_name(self, part: str) -> str:
        """Fully qualified parameter name"""
        return f"{self.prefix}.{part}"

    def param_names(self) -> list:
        """Names of all parameters of the network"""
        if not self.enabled:
            return []
        return [self.param_name(f"l{i}.{kind}") for i in range(3) for kind in ("weight", "bias")]

    def init_params(self, store: ParamStore, rng: np.random.Generator):
        """Registers freshly initialized parameters"""
        if not self.enabled:
            return
        sizes = [self.n_features, self.width, self.width, 1]
        for i in range(3):
            store.add(self.param_name(f"l{i}.weight"), _uniform(rng, (sizes[i + 1], sizes[i]), sizes[i]))
            store.add(self.param_name(f"l{i}.bias"), np.zeros(sizes[i + 1]))

    def emit(self, u, xfeat, t):
        """Force values, shape (B, 1, M)"""
        tape = u.tape
        features = _features(u, xfeat, t, self.flags)
        hidden = features
        for i in range(3):
            hidden = tape.affine(
                hidden, tape.param(self.param_name(f"l{i}.weight")), tape.param(self.param_name(f"l{i}.bias"))
            )
            if i < 2:
                hidden = tape.tanh(hidden)
        return hidden


def _features(u, xfeat, t, flags: ForceFlags):
    tape = u.tape
    parts = []
    if flags.u:
        parts.append(u)
    if flags.x:
        parts.append(tape.expand_batch(xfeat, u))
    if flags.t:
        parts.append(tape.broadcast_positions(t, u))
    return parts[0] if len(parts) == 1 else tape.concat(parts)


######################################################################
#  O P E R A T O R S
######################################################################
# assembles [w1, 1, w1] from the single free component w1
SYMMETRIC_OFFSET = np.array([0.0, 1.0, 0.0])
SYMMETRIC_BASIS = np.array([[1.0], [0.0], [1.0]])


class OperatorModel:
    """
    One of the operators A, S, R as a constrained convolution kernel

    kind is zero (size 0), identity (size 1), trainable (symmetric width 3
    with w0 = 1 and a single free w1) or fixed (a kernel stored as a
    non-trainable parameter).
    """

    KINDS = ("zero", "identity", "trainable", "fixed")

    def __init__(self, role: str, kind: str, constraint: str = None):
        if kind not in self.KINDS:
            raise ConfigError(f"Unknown operator kind '{kind}'")
        self.role = role
        self.kind = kind
        self.constraint = constraint or {"zero": "zero", "identity": "identity", "trainable": "symmetric"}.get(kind)

    def __repr__(self):
        return f"<OperatorModel {self.role} {self.kind}>"

    @property
    def param_name(self) -> str:
        """Name of the stored parameter, if any"""
        return f"{self.role}.w1" if self.kind == "trainable" else f"{self.role}.kernel"

    def param_names(self) -> list:
        """Names of the stored parameters"""
        return [self.param_name] if self.kind in ("trainable", "fixed") else []

    @classmethod
    def from_size(cls, role: str, size: int) -> "OperatorModel":
        """Operator of the general presets for a kernel size k"""
        if size == 0:
            return cls(role, "zero")
        if size == 1:
            return cls(role, "identity")
        if role == "S":
            return cls(role, "fixed", "skew")
        return cls(role, "trainable")

    @classmethod
    def from_kernel(cls, role: str, kernel: ConvKernel) -> "OperatorModel":
        """Operator fixed to a known kernel"""
        if kernel.constraint in ("zero", "identity"):
            return cls(role, kernel.constraint)
        return cls(role, "fixed", kernel.constraint)

    @property
    def size(self) -> int:
        """Kernel size in the k-vector convention"""
        return {"zero": 0, "identity": 1}.get(self.kind, 3)

    def init_params(self, store: ParamStore, kernel: ConvKernel = None):
        """Registers w1 = 0 for trainable operators and the kernel for fixed ones"""
        if self.kind == "trainable":
            store.add(self.param_name, np.zeros(1), constraint="symmetric")
        elif self.kind == "fixed":
            store.add(self.param_name, kernel.weights, constraint=self.constraint, trainable=False)

    def kernel(self, params: ParamStore) -> ConvKernel:
        """Current kernel, validated against the constraint"""
        if self.kind == "zero":
            return ConvKernel.zero()
        if self.kind == "identity":
            return ConvKernel.identity()
        if self.kind == "trainable":
            return ConvKernel(SYMMETRIC_OFFSET + SYMMETRIC_BASIS @ params.get(self.param_name), "symmetric")
        return ConvKernel(params.get(self.param_name), self.constraint)

    def emit_weights(self, tape: Tape):
        """Kernel weights as a tape node"""
        if self.kind == "trainable":
            return tape.assemble(tape.param(self.param_name), SYMMETRIC_OFFSET, SYMMETRIC_BASIS)
        return tape.param(self.param_name)

    def apply(self, tape: Tape, x):
        """Operator times x"""
        if self.kind == "zero":
            return tape.fill_like(x, 0.0)
        if self.kind == "identity":
            return x
        return tape.stencil(x, self.emit_weights(tape))

    def solve(self, tape: Tape, b):
        """Operator inverse times b"""
        if self.kind == "identity":
            return b
        if self.kind == "zero":
            raise ConfigError(f"Operator {self.role} is zero and cannot be inverted")
        return tape.solve(b, self.emit_weights(tape))

    def serialize(self) -> dict:
        """Converts the operator structure into a dictionary"""
        return {"kind": self.kind, "constraint": self.constraint}

    @classmethod
    def deserialize(cls, role: str, data: dict) -> "OperatorModel":
        """Rebuilds the operator structure from a dictionary"""
        return cls(role, data["kind"], data["constraint"])


######################################################################
#  M O D E L   B A S E
######################################################################
class ModelBase:
    """Base class with the numeric evaluation shared by all models"""

    kind = None

    def __init__(self, grid: PeriodicGrid, preset: str, system: str = None, system_params: dict = None):
        self.grid = grid
        self.preset = preset
        self.system = system
        self.system_params = dict(system_params or {})
        self.params = ParamStore()
        self._tape_cache = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_tape_cache"] = None
        return state

    @property
    def label(self) -> str:
        """Model type as shown in tables"""
        return MODEL_LABELS[self.preset]

    @abstractmethod
    def emit_terms(self, tape: Tape, u, t, xfeat) -> dict:
        """Emits the model terms on a tape; the key 'rhs' holds the full output"""

    def emit(self, tape: Tape, u, t, xfeat):
        """Emits the model output on a tape"""
        return self.emit_terms(tape, u, t, xfeat)["rhs"]

    @abstractmethod
    def serialize(self) -> dict:
        """Convert a model into a dictionary"""

    def copy(self):
        """Deep copy without cached graphs"""
        clone = deepcopy(self)
        clone._tape_cache = None
        return clone

    def _invalidate(self):
        self._tape_cache = None

    def _terms_tape(self):
        if self._tape_cache is None:
            tape = Tape()
            terms = self.emit_terms(tape, tape.input("u"), tape.input("t"), tape.input("x"))
            names = sorted(terms)
            tape.mark_output(*(terms[name] for name in names))
            self._tape_cache = (tape, names)
        return self._tape_cache

    def evaluate_terms(self, u, t=0.0, xfeat=None) -> dict:
        """Numeric values of all terms for a state (M,) or a batch (n, M)"""
        u = np.asarray(u, dtype=float)
        batch = u.reshape(-1, 1, self.grid.M)
        times = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1), (batch.shape[0],))
        if xfeat is None:
            xfeat = self.grid.fourier_features()
        tape, names = self._terms_tape()
        values = tape.forward(self.params, {"u": batch, "t": np.array(times), "x": np.reshape(xfeat, (1, 2, -1))})
        if len(names) == 1:
            values = (values,)
        return {name: np.asarray(value).reshape(u.shape) for name, value in zip(names, values)}

    def forward(self, u, t=0.0, xfeat=None) -> np.ndarray:
        """Model output for a state (M,) or a batch (n, M)"""
        return self.evaluate_terms(u, t, xfeat)["rhs"]

    def vector_field(self):
        """The model as a callable g(u, t) for the integrators"""
        return self.forward


######################################################################
#  P S E U D O - H A M I L T O N I A N   M O D E L
######################################################################
class PHNNModel(ModelBase):
    """A^{-1} (S grad H - R grad V + k4 f) with learned pieces"""

    kind = "phnn"

    def __init__(self, grid, A, S, R, H, V, f, k4, preset="general", system=None, system_params=None):
        super().__init__(grid, preset, system, system_params)
        self.A = A
        self.S = S
        self.R = R
        self.H = H
        self.V = V
        self.f = f
        self.k4 = int(k4)
        self.leakage_corrected = False
        self.ablated = []

    def __repr__(self):
        return f"<PHNNModel {self.preset} k={self.k} M={self.grid.M}>"

    @property
    def k(self) -> tuple:
        """(k1, k2, k3, k4)"""
        return (self.A.size, self.S.size, self.R.size, self.k4)

    def check_constraints(self):
        """Raises if any operator kernel violates its constraint"""
        for operator in (self.A, self.S, self.R):
            operator.kernel(self.params)

    def emit_terms(self, tape, u, t, xfeat) -> dict:
        terms = {}
        total = None
        if self.S.kind != "zero" and self.H is not None:
            terms["conservative"] = self.S.apply(tape, self.H.emit_gradient(u))
            total = terms["conservative"]
        if self.R.kind != "zero" and self.V is not None:
            grad_v = self.V.emit_gradient(u)
            if LEAK_GRAD_V in self.params:
                grad_v = grad_v - tape.param(LEAK_GRAD_V)
            terms["dissipative"] = self.R.apply(tape, grad_v)
            total = -terms["dissipative"] if total is None else total - terms["dissipative"]
        force = None
        if self.k4 and self.f.enabled:
            force = self.f.emit(u, xfeat, t)
        if LEAK_FORCE in self.params:
            shift = tape.param(LEAK_FORCE)
            force = tape.fill_like(u, 0.0) + shift if force is None else force + shift
        if force is not None:
            terms["force"] = force
            total = force if total is None else total + force
        if total is None:
            total = tape.fill_like(u, 0.0)
        terms["rhs"] = self.A.solve(tape, total)
        return terms

    def raw_grad_lyapunov(self, u) -> np.ndarray:
        """Input gradient of the learned V before any leakage correction"""
        if self.V is None:
            return np.zeros(self.grid.M)
        return self.V.gradient(self.params, u)

    def grad_lyapunov(self, u) -> np.ndarray:
        """Input gradient of the learned V including the leakage correction"""
        grad = self.raw_grad_lyapunov(u)
        if LEAK_GRAD_V in self.params:
            grad = grad - self.params.get(LEAK_GRAD_V)
        return grad

    def grad_hamiltonian(self, u) -> np.ndarray:
        """Input gradient of the learned H"""
        if self.H is None:
            return np.zeros(self.grid.M)
        return self.H.gradient(self.params, u)

    def drop_params(self, names):
        """Removes parameters that left the model structure"""
        for name in names:
            if name in self.params:
                self.params.remove(name)
        self._invalidate()

    def serialize(self) -> dict:
        """Converts a model into a dictionary"""
        nets = {}
        for role, net in (("H", self.H), ("V", self.V)):
            if net is not None:
                nets[role] = {
                    "channels": net.channels,
                    "hidden": net.hidden,
                    "activations": list(net.activations),
                    "quadrature_scale": net.quadrature_scale,
                }
        return {
            "kind": self.kind,
            "preset": self.preset,
            "system": self.system,
            "system_params": self.system_params,
            "M": self.grid.M,
            "P": self.grid.P,
            "operators": {role: op.serialize() for role, op in (("A", self.A), ("S", self.S), ("R", self.R))},
            "nets": nets,
            "force": {"flags": list(self.f.flags), "width": self.f.width},
            "k4": self.k4,
            "leakage_corrected": self.leakage_corrected,
            "ablated": list(self.ablated),
            "params": _serialize_params(self.params),
        }

    @classmethod
    def deserialize(cls, data: dict) -> "PHNNModel":
        """Rebuilds a model from a dictionary"""
        try:
            grid = PeriodicGrid(data["M"], data["P"])
            operators = {role: OperatorModel.deserialize(role, data["operators"][role]) for role in ("A", "S", "R")}
            nets = {}
            for role in ("H", "V"):
                entry = data["nets"].get(role)
                nets[role] = None if entry is None else ScalarIntegralNet(
                    role, entry["channels"], entry["hidden"], entry["activations"], entry["quadrature_scale"]
                )
            force = ForceNet("f", ForceFlags(*data["force"]["flags"]), data["force"]["width"])
            model = cls(
                grid, operators["A"], operators["S"], operators["R"], nets["H"], nets["V"], force,
                data["k4"], data["preset"], data["system"], data["system_params"],
            )
            model.leakage_corrected = bool(data["leakage_corrected"])
            model.ablated = list(data["ablated"])
            _deserialize_params(model.params, data["params"])
        except KeyError as error:
            raise DataFormatError("Invalid checkpoint: missing " + str(error.args[0])) from error
        except TypeError as error:
            raise DataFormatError("Invalid checkpoint: bad or no data - " + str(error.args[0])) from error
        return model


######################################################################
#  B A S E L I N E   M O D E L
######################################################################
class BaselineModel(ModelBase):
    """
    Black-box network: five pointwise layers of width 20, a circular conv of
    width 5 to 100 channels, then two pointwise layers (100 -> 100 -> 1)
    """

    kind = "baseline"

    STAGE1_LAYERS = 5
    STAGE1_WIDTH = 20
    CONV_WIDTH = 5
    STAGE3_WIDTH = 100

    def __init__(self, grid, flags: ForceFlags = ALL_FLAGS, system=None, system_params=None):
        super().__init__(grid, "baseline", system, system_params)
        self.flags = ForceFlags(True, flags[1], flags[2])

    def __repr__(self):
        return f"<BaselineModel flags={tuple(self.flags)} M={self.grid.M}>"

    @property
    def n_features(self) -> int:
        """Input channels per position"""
        return 1 + 2 * int(self.flags.x) + int(self.flags.t)

    def init_params(self, rng: np.random.Generator):
        """Registers freshly initialized parameters"""
        width = self.STAGE1_WIDTH
        sizes = [self.n_features] + [width] * self.STAGE1_LAYERS
        for i in range(self.STAGE1_LAYERS):
            self.params.add(f"baseline.l{i}.weight", _uniform(rng, (sizes[i + 1], sizes[i]), sizes[i]))
            self.params.add(f"baseline.l{i}.bias", np.zeros(sizes[i + 1]))
        wide = self.STAGE3_WIDTH
        self.params.add("baseline.conv.weight", _uniform(rng, (wide, width, self.CONV_WIDTH), width * self.CONV_WIDTH))
        self.params.add("baseline.conv.bias", np.zeros(wide))
        self.params.add("baseline.l5.weight", _uniform(rng, (wide, wide), wide))
        self.params.add("baseline.l5.bias", np.zeros(wide))
        self.params.add("baseline.l6.weight", _uniform(rng, (1, wide), wide))
        self.params.add("baseline.l6.bias", np.zeros(1))

    def emit_terms(self, tape, u, t, xfeat) -> dict:
        hidden = _features(u, xfeat, t, self.flags)
        for i in range(self.STAGE1_LAYERS):
            hidden = tape.tanh(
                tape.affine(hidden, tape.param(f"baseline.l{i}.weight"), tape.param(f"baseline.l{i}.bias"))
            )
        hidden = tape.tanh(tape.conv(hidden, tape.param("baseline.conv.weight"), tape.param("baseline.conv.bias")))
        hidden = tape.tanh(tape.affine(hidden, tape.param("baseline.l5.weight"), tape.param("baseline.l5.bias")))
        return {"rhs": tape.affine(hidden, tape.param("baseline.l6.weight"), tape.param("baseline.l6.bias"))}

    def serialize(self) -> dict:
        """Converts a model into a dictionary"""
        return {
            "kind": self.kind,
            "preset": self.preset,
            "system": self.system,
            "system_params": self.system_params,
            "M": self.grid.M,
            "P": self.grid.P,
            "flags": list(self.flags),
            "params": _serialize_params(self.params),
        }

    @classmethod
    def deserialize(cls, data: dict) -> "BaselineModel":
        """Rebuilds a model from a dictionary"""
        try:
            model = cls(PeriodicGrid(data["M"], data["P"]), ForceFlags(*data["flags"]),
                        data["system"], data["system_params"])
            _deserialize_params(model.params, data["params"])
        except KeyError as error:
            raise DataFormatError("Invalid checkpoint: missing " + str(error.args[0])) from error
        except TypeError as error:
            raise DataFormatError("Invalid checkpoint: bad or no data - " + str(error.args[0])) from error
        return model


class ExtractedForce:
    """
    (x, t) -> g(u_ref, x, t) - g(u_ref, 0, 0) of a baseline model

    The baseline sees one value per training node, so x must hold exactly M
    positions.
    """

    def __init__(self, model: BaselineModel, u_ref=None):
        self.model = model
        self.u_ref = np.zeros(model.grid.M) if u_ref is None else np.asarray(u_ref, dtype=float)

    def __call__(self, x=None, t=0.0) -> np.ndarray:
        grid = self.model.grid
        if x is not None and np.shape(x) != (grid.M,):
            raise ShapeError(f"Expected {grid.M} node positions, got shape {np.shape(x)}")
        features = grid.fourier_features(x)
        origin = np.stack([np.zeros(grid.M), np.ones(grid.M)])
        value = self.model.forward(self.u_ref, t, features)
        reference = self.model.forward(self.u_ref, 0.0, origin)
        return value - reference


######################################################################
#  S E R I A L I Z A T I O N   H E L P E R S
######################################################################
def _serialize_params(params: ParamStore) -> list:
    return [
        {
            "name": name,
            "shape": list(params.get(name).shape),
            "constraint": params.meta(name).constraint,
            "trainable": params.meta(name).trainable,
            "values": params.get(name).ravel().tolist(),
        }
        for name in params
    ]


def _deserialize_params(params: ParamStore, entries: list):
    for entry in entries:
        values = np.array(entry["values"], dtype=float).reshape(entry["shape"])
        params.add(entry["name"], values, entry["constraint"], entry["trainable"])


def serialize_model(model: ModelBase) -> dict:
    """Dictionary form of any model"""
    return model.serialize()


def deserialize_model(data: dict) -> ModelBase:
    """Rebuilds any model from its dictionary form"""
    kinds = {"phnn": PHNNModel, "baseline": BaselineModel}
    try:
        return kinds[data["kind"]].deserialize(data)
    except KeyError as error:
        raise DataFormatError(f"Invalid checkpoint: unknown model kind {error.args[0]}") from error


######################################################################
#  B U I L D E R S
######################################################################
def _check_k(k):
    k1, k2, k3, k4 = k
    if k1 == 0:
        raise ConfigError("k1 = 0 makes A the zero operator, which cannot be inverted")
    if k1 not in (1, 3) or k3 not in (0, 1, 3) or k2 not in (0, 3) or k4 not in (0, 1):
        raise ConfigError(f"Invalid kernel sizes k={list(k)}: need k1 in (1, 3), k2 in (0, 3), k3 in (0, 1, 3), k4 in (0, 1)")


def _assemble(grid, operators, fixed_kernels, widths, flags, k4, rng, preset, system, system_params, activations):
    widths = Widths(*widths)
    A, S, R = operators
    H = ScalarIntegralNet("H", widths.channels, widths.hidden, activations) if S.kind != "zero" else None
    V = ScalarIntegralNet("V", widths.channels, widths.hidden, activations) if R.kind != "zero" else None
    f = ForceNet("f", flags if k4 else ForceFlags(False, False, False), widths.force)
    model = PHNNModel(grid, A, S, R, H, V, f, k4, preset, system, system_params)
    for operator in (A, S, R):
        operator.init_params(model.params, fixed_kernels.get(operator.role))
    for component in (H, V, f):
        if component is not None:
            component.init_params(model.params, rng)
    return model


def build_phnn(k, widths=DEFAULT_WIDTHS, flags: ForceFlags = ALL_FLAGS, grid: PeriodicGrid = None,
               rng: np.random.Generator = None, preset="general", system=None, system_params=None,
               activations=("tanh", "tanh")) -> PHNNModel:
    """
    Builds a pseudo-Hamiltonian model from the kernel sizes k = (k1, k2, k3, k4)

    Trainable A and R start as the identity (w1 = 0) and S of size 3 is the
    fixed central difference.
    """
    _check_k(k)
    k1, k2, k3, k4 = k
    operators = (
        OperatorModel.from_size("A", k1),
        OperatorModel.from_size("S", k2),
        OperatorModel.from_size("R", k3),
    )
    fixed = {"S": central_difference(grid.h)} if k2 == 3 else {}
    rng = np.random.default_rng(0) if rng is None else rng
    return _assemble(grid, operators, fixed, widths, flags, k4, rng, preset, system, system_params, activations)


def build_informed(spec: SystemSpec, widths=DEFAULT_WIDTHS, rng: np.random.Generator = None,
                   activations=("tanh", "tanh")) -> PHNNModel:
    """Model with the true operators fixed and f restricted to the true dependencies"""
    fixed = {"A": spec.A_kernel, "S": spec.S_kernel, "R": spec.R_kernel}
    operators = tuple(OperatorModel.from_kernel(role, fixed[role]) for role in ("A", "S", "R"))
    rng = np.random.default_rng(0) if rng is None else rng
    return _assemble(
        spec.grid, operators, fixed, widths, spec.force_flags, 1, rng, "informed",
        spec.name, spec.overrides, activations,
    )


def build_model(preset: str, spec: SystemSpec, widths=DEFAULT_WIDTHS, rng: np.random.Generator = None,
                activations=("tanh", "tanh")) -> ModelBase:
    """Builds a model from a named preset"""
    if preset not in PRESETS:
        raise ConfigError(f"Unknown preset '{preset}', expected one of {', '.join(PRESETS)}")
    rng = np.random.default_rng(0) if rng is None else rng
    if preset == "informed":
        model = build_informed(spec, widths, rng, activations)
    elif preset == "baseline":
        model = BaselineModel(spec.grid, ALL_FLAGS, spec.name, spec.overrides)
        model.init_params(rng)
    else:
        model = build_phnn(PRESET_K[preset], widths, ALL_FLAGS, spec.grid, rng, preset,
                           spec.name, spec.overrides, activations)
    logger.info("Built %s model with %d trainable parameters", model.label, model.params.size)
    return model


######################################################################
#  O P E R A T I O N S
######################################################################
def phnn_forward(model: PHNNModel, u, x=None, t=0.0) -> np.ndarray:
    """Evaluates A^{-1}(S grad H - R grad V + k4 f) at the nodes x"""
    return model.forward(u, t, model.grid.fourier_features(x))


def baseline_forward(model: BaselineModel, u, x=None, t=0.0) -> np.ndarray:
    """Evaluates the baseline network"""
    return model.forward(u, t, model.grid.fourier_features(x))


def apply_leakage_correction(model: PHNNModel) -> PHNNModel:
    """
    Moves the constant grad V(0) from the dissipation term into the force

    The corrected model uses grad V(u) - grad V(0) and f - R grad V(0), which
    leaves the full output unchanged.
    """
    corrected = model.copy()
    corrected.drop_params([LEAK_GRAD_V, LEAK_FORCE])
    if corrected.V is not None and corrected.R.kind != "zero":
        offset = corrected.raw_grad_lyapunov(np.zeros(corrected.grid.M))
        if np.any(offset != 0.0):
            corrected.params.add(LEAK_GRAD_V, offset, trainable=False)
            shift = -stencil_apply(corrected.R.kernel(corrected.params), offset)
            corrected.params.add(LEAK_FORCE, shift, trainable=False)
        logger.debug("Leakage correction moved a constant of norm %.3e", np.linalg.norm(offset))
    corrected.leakage_corrected = True
    return corrected


def ablate(model: PHNNModel, drop_force: bool = False, drop_dissipation: bool = False) -> PHNNModel:
    """Removes the force and/or the dissipation term from a corrected model"""
    if not (drop_force or drop_dissipation):
        return model.copy()
    if not isinstance(model, PHNNModel):
        raise UnsupportedError("Only pseudo-Hamiltonian models can be ablated")
    if not model.leakage_corrected:
        raise UsageError("Apply the leakage correction before removing terms from a model")
    ablated = model.copy()
    if drop_force:
        ablated.k4 = 0
        ablated.drop_params(ablated.f.param_names() + [LEAK_FORCE])
        ablated.f = ForceNet("f", ForceFlags(False, False, False), ablated.f.width)
        ablated.ablated.append("force")
    if drop_dissipation:
        names = ablated.R.param_names() + [LEAK_GRAD_V]
        if ablated.V is not None:
            names += ablated.V.param_names()
        ablated.drop_params(names)
        ablated.R = OperatorModel("R", "zero")
        ablated.V = None
        ablated.ablated.append("dissipation")
    return ablated


def extract_baseline_force(model: BaselineModel, u_ref=None) -> ExtractedForce:
    """The x and t dependent part of a baseline model at a fixed state"""
    if not isinstance(model, BaselineModel):
        raise UnsupportedError("Force extraction applies to baseline models")
    if not (model.flags.x or model.flags.t):
        logger.warning("Baseline model takes no x or t inputs; the extracted force is zero")
    return ExtractedForce(model, u_ref)


def regrid_model(model: ModelBase, grid: PeriodicGrid, rescale: bool = False) -> PHNNModel:
    """
    Rebuilds an informed model on another grid

    Network weights are reused; the fixed operator kernels are rebuilt for
    the new spacing. With rescale the integral sums are multiplied by
    h_new / h_old. Rescaling is off by default because the networks learn
    the per-node sum sum_i phi(u_i) and the rebuilt operators already carry
    the new spacing.
    """
    if not isinstance(model, PHNNModel) or model.preset != "informed":
        raise UnsupportedError(f"Regridding needs an informed model, got {model.label}")
    condition = DERIVATIVE_FREE.get(model.system)
    spec = system_spec(model.system, grid, model.system_params)
    if condition is None or not condition(spec.params):
        raise UnsupportedError(f"The integrals of {model.system} depend on derivatives; the model is tied to its grid")
    if model.ablated:
        raise UnsupportedError("Regridding an ablated model is not supported")
    regridded = model.copy()
    regridded.grid = grid
    fixed = {"A": spec.A_kernel, "S": spec.S_kernel, "R": spec.R_kernel}
    for operator in (regridded.A, regridded.S, regridded.R):
        if operator.kind == "fixed":
            regridded.params.set(operator.param_name, fixed[operator.role].weights)
    regridded.drop_params([LEAK_GRAD_V, LEAK_FORCE])
    if rescale:
        ratio = grid.h / model.grid.h
        for net in (regridded.H, regridded.V):
            if net is not None:
                net.quadrature_scale *= ratio
    if model.leakage_corrected:
        regridded = apply_leakage_correction(regridded)
    regridded._invalidate()
    return regridded
