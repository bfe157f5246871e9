"""
Benchmark systems

Ground truth discretizations of the four benchmark PDEs in the form

    A u_t = S grad H(u)/h - R grad V(u)/h + f(u, x, t)

with operators given as stencils, the discrete integrals H and V given by
quadrature, and the gradients of H and V written out by hand so the zoo can
serve as an oracle for the learned models.
"""
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from phnn.common.errors import ConfigError, ShapeError, UnsupportedError
from phnn.spatial import (
    ConvKernel,
    PeriodicGrid,
    central_difference,
    forward_difference,
    second_difference,
    solve_circulant,
    stencil_apply,
)

logger = logging.getLogger("phnn")

SYSTEMS = ("kdvburgers", "bbm", "peronamalik", "cahnhilliard")

DEFAULT_PERIODS = {"kdvburgers": 20.0, "bbm": 50.0, "peronamalik": 6.0, "cahnhilliard": 1.0}

DEFAULT_PARAMS = {
    "kdvburgers": {"eta": 6.0, "nu": 0.3, "gamma": 1.0},
    "bbm": {},
    "peronamalik": {},
    "cahnhilliard": {"nu": -1.0, "alpha": 1.0, "mu": -1.0e-3},
}

# reference solver sub-steps per recorded step
DEFAULT_SUBSTEPS = {"kdvburgers": 100, "bbm": 100, "peronamalik": 100, "cahnhilliard": 2000}


class ForceFlags(NamedTuple):
    """Which arguments an external force depends on"""

    u: bool
    x: bool
    t: bool


######################################################################
#  E X T E R N A L   F O R C E S
######################################################################
def kdvburgers_force(u, x, t, P):
    """3/5 sin(4 pi x / P - t)"""
    return 0.6 * np.sin(4.0 * np.pi * x / P - t) + 0.0 * u


def bbm_force(u, x, t, P):
    """sin(t) u / 10"""
    return 0.1 * np.sin(t) * u


def peronamalik_force(u, x, t, P):
    """10 sin(4 pi x / P)"""
    return 10.0 * np.sin(4.0 * np.pi * x / P) + 0.0 * u


def cahnhilliard_force(u, x, t, P):
    """30 u on 0.3 < x < 0.7, zero elsewhere"""
    return np.where((x > 0.3) & (x < 0.7), 30.0 * u, 0.0 * u)


FORCES = {
    "kdvburgers": (kdvburgers_force, ForceFlags(u=False, x=True, t=True)),
    "bbm": (bbm_force, ForceFlags(u=True, x=False, t=True)),
    "peronamalik": (peronamalik_force, ForceFlags(u=False, x=True, t=False)),
    "cahnhilliard": (cahnhilliard_force, ForceFlags(u=True, x=True, t=False)),
}


######################################################################
#  I N I T I A L   C O N D I T I O N S
######################################################################
def _centered(x, P, d):
    """Signed distance to d*P in a periodic window of length P"""
    return np.mod(x + P / 2.0 - d * P, P) - P / 2.0


def _sech2(z):
    return 1.0 / np.cosh(z) ** 2


def kdvburgers_profile(x, P, c, d):
    """Two solitons of height 2 c_l^2 centred at d_l P"""
    return 2.0 * sum(c[l] ** 2 * _sech2(c[l] * _centered(x, P, d[l])) for l in range(2))


def bbm_profile(x, P, c, d):
    """Two solitary waves of amplitude 3 (c_l - 1) centred at d_l P"""
    return 3.0 * sum(
        (c[l] - 1.0) * _sech2(0.5 * np.sqrt(1.0 - 1.0 / c[l]) * _centered(x, P, d[l])) for l in range(2)
    )


def peronamalik_profile(x, P, a, b, c, d, h, r, s):
    """Piecewise constant plateaus with high frequency noise on top"""
    steps = sum(h[l] * (np.tanh(b * (x - d[l])) - np.tanh(b * (x - P + d[l]))) for l in range(2))
    return a - steps + c * np.sin(r * np.pi * x) ** 2 * np.sin(s * np.pi * x)


def cahnhilliard_profile(x, P, a, b, c, d):
    """Sum of two sine and two cosine modes"""
    k = 2.0 * np.pi / P
    return sum(a[l] * np.sin(c[l] * k * x) + b[l] * np.cos(d[l] * k * x) for l in range(2))


@dataclass(frozen=True)
class InitialConditionSpec:
    """Uniform parameter distributions of a closed form initial profile"""

    system: str
    bounds: dict
    showcase: dict = None

    def draw(self, rng: np.random.Generator) -> dict:
        """Draws the profile parameters in a fixed order"""
        params = {}
        for name, (low, high, count) in self.bounds.items():
            values = rng.uniform(low, high, size=count)
            params[name] = float(values[0]) if count == 1 else tuple(float(v) for v in values)
        return params

    def profile(self, grid: PeriodicGrid, params: dict, x=None) -> np.ndarray:
        """Evaluates the profile at the grid nodes (or at x)"""
        x = grid.x if x is None else np.asarray(x, dtype=float)
        return PROFILES[self.system](x, grid.P, **params)

    def sample(self, rng: np.random.Generator, grid: PeriodicGrid) -> np.ndarray:
        """Draws parameters and evaluates the profile"""
        return self.profile(grid, self.draw(rng))

    def showcase_profile(self, grid: PeriodicGrid) -> np.ndarray:
        """The fixed initial state used for prediction figures"""
        if self.showcase is None:
            raise UnsupportedError(f"No showcase initial state for {self.system}")
        return self.profile(grid, self.showcase)


PROFILES = {
    "kdvburgers": kdvburgers_profile,
    "bbm": bbm_profile,
    "peronamalik": peronamalik_profile,
    "cahnhilliard": cahnhilliard_profile,
}

INITIAL_CONDITIONS = {
    "kdvburgers": InitialConditionSpec(
        "kdvburgers",
        {"c": (0.5, 2.0, 2), "d": (0.0, 1.0, 2)},
    ),
    "bbm": InitialConditionSpec(
        "bbm",
        {"c": (1.0, 4.0, 2), "d": (0.0, 1.0, 2)},
    ),
    "peronamalik": InitialConditionSpec(
        "peronamalik",
        {
            "a": (-5.0, 5.0, 1),
            "b": (20.0, 40.0, 1),
            "c": (0.05, 0.15, 1),
            "d": (0.3, 3.0, 2),
            "h": (0.5, 1.5, 2),
            "r": (0.5, 3.0, 1),
            "s": (10.0, 20.0, 1),
        },
        showcase={"a": 1.0, "b": 30.0, "c": 0.15, "d": (1.0, 2.0), "h": (1.0, 1.0), "r": 2.0, "s": 15.0},
    ),
    "cahnhilliard": InitialConditionSpec(
        "cahnhilliard",
        {"a": (0.0, 0.2, 2), "b": (0.0, 0.05, 2), "c": (1.0, 6.0, 2), "d": (1.0, 6.0, 2)},
        showcase={"a": (0.1, 0.06), "b": (0.01, 0.02), "c": (2.0, 5.0), "d": (1.0, 2.0)},
    ),
}


######################################################################
#  D I S C R E T E   I N T E G R A L S   A N D   G R A D I E N T S
######################################################################
def _forward_diff(u, h):
    return stencil_apply(forward_difference(h), u)


def _zero_integral(spec, u):
    return np.zeros(u.shape[:-1]) if u.ndim > 1 else 0.0


def _zero_gradient(spec, u):
    return np.zeros_like(u)


def _kdv_hamiltonian(spec, u):
    h, eta, gamma = spec.grid.h, spec.params["eta"], spec.params["gamma"]
    density = eta / 6.0 * u**3 + gamma**2 / 2.0 * _forward_diff(u, h) ** 2
    return -h * np.sum(density, axis=-1)


def _kdv_grad_hamiltonian(spec, u):
    h, eta, gamma = spec.grid.h, spec.params["eta"], spec.params["gamma"]
    return -h * (eta / 2.0 * u**2 - gamma**2 * stencil_apply(second_difference(h), u))


def _kdv_lyapunov(spec, u):
    h = spec.grid.h
    return spec.params["nu"] / 2.0 * h * np.sum(_forward_diff(u, h) ** 2, axis=-1)


def _kdv_grad_lyapunov(spec, u):
    h = spec.grid.h
    return -h * spec.params["nu"] * stencil_apply(second_difference(h), u)


def _bbm_hamiltonian(spec, u):
    return spec.grid.h / 2.0 * np.sum(u**2 + u**3 / 3.0, axis=-1)


def _bbm_grad_hamiltonian(spec, u):
    return spec.grid.h * (u + u**2 / 2.0)


def _pm_lyapunov(spec, u):
    h = spec.grid.h
    return h / 2.0 * np.sum(np.log1p(_forward_diff(u, h) ** 2), axis=-1)


def _pm_grad_lyapunov(spec, u):
    h = spec.grid.h
    slope = _forward_diff(u, h)
    flux = slope / (1.0 + slope**2)
    # transpose of the forward difference applied to the flux
    return np.roll(flux, 1, axis=-1) - flux


def _ch_lyapunov(spec, u):
    h, nu, alpha, mu = spec.grid.h, spec.params["nu"], spec.params["alpha"], spec.params["mu"]
    density = nu * u**2 + alpha / 2.0 * u**4 - mu * _forward_diff(u, h) ** 2
    return h / 2.0 * np.sum(density, axis=-1)


def _ch_grad_lyapunov(spec, u):
    h, nu, alpha, mu = spec.grid.h, spec.params["nu"], spec.params["alpha"], spec.params["mu"]
    return h * (nu * u + alpha * u**3 + mu * stencil_apply(second_difference(h), u))


HAMILTONIANS = {
    "kdvburgers": (_kdv_hamiltonian, _kdv_grad_hamiltonian),
    "bbm": (_bbm_hamiltonian, _bbm_grad_hamiltonian),
    "peronamalik": (_zero_integral, _zero_gradient),
    "cahnhilliard": (_zero_integral, _zero_gradient),
}

LYAPUNOVS = {
    "kdvburgers": (_kdv_lyapunov, _kdv_grad_lyapunov),
    "bbm": (_zero_integral, _zero_gradient),
    "peronamalik": (_pm_lyapunov, _pm_grad_lyapunov),
    "cahnhilliard": (_ch_lyapunov, _ch_grad_lyapunov),
}


######################################################################
#  S Y S T E M   S P E C
######################################################################
@dataclass(frozen=True, eq=False)
class SystemSpec:
    """A benchmark PDE discretized on a periodic grid"""

    name: str
    grid: PeriodicGrid
    params: dict
    A_kernel: ConvKernel
    S_kernel: ConvKernel
    R_kernel: ConvKernel
    force_flags: ForceFlags
    ic: InitialConditionSpec
    force_enabled: bool = True
    substeps: int = 100
    overrides: dict = field(default_factory=dict)

    def __repr__(self):
        return f"<SystemSpec {self.name} M={self.grid.M} P={self.grid.P} params={self.params}>"

    def _check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.grid.M:
            raise ShapeError(f"{self.name} expects states of length {self.grid.M}, got {u.shape}")
        return u

    def hamiltonian(self, u):
        """H_p(u)"""
        return HAMILTONIANS[self.name][0](self, self._check(u))

    def lyapunov(self, u):
        """V_p(u)"""
        return LYAPUNOVS[self.name][0](self, self._check(u))

    def grad_hamiltonian(self, u) -> np.ndarray:
        """Exact gradient of H_p (not yet divided by h)"""
        return HAMILTONIANS[self.name][1](self, self._check(u))

    def grad_lyapunov(self, u) -> np.ndarray:
        """Exact gradient of V_p (not yet divided by h)"""
        return LYAPUNOVS[self.name][1](self, self._check(u))

    def force(self, u, x=None, t=0.0) -> np.ndarray:
        """External force at the nodes; zero when the force is switched off"""
        u = self._check(u)
        x = self.grid.x if x is None else np.asarray(x, dtype=float)
        if not self.force_enabled:
            return np.zeros_like(u)
        t = np.asarray(t, dtype=float)
        if t.ndim == 1:
            t = t[:, None]
        function = FORCES[self.name][0]
        return np.broadcast_to(function(u, x, t, self.grid.P), u.shape).copy()

    def rhs(self, u, t=0.0) -> np.ndarray:
        """Time derivative of the discrete system; u may be a batch (n, M) with t of shape (n,)"""
        u = self._check(u)
        h = self.grid.h
        total = self.force(u, self.grid.x, t)
        if self.S_kernel.constraint != "zero":
            total = total + stencil_apply(self.S_kernel, self.grad_hamiltonian(u) / h)
        if self.R_kernel.constraint != "zero":
            total = total - stencil_apply(self.R_kernel, self.grad_lyapunov(u) / h)
        return solve_circulant(self.A_kernel, total)

    def vector_field(self):
        """The ground truth as a callable g(u, t)"""
        return self.rhs

    def without_force(self) -> "SystemSpec":
        """The same system with the force switched off"""
        return system_spec(self.name, self.grid, {**self.overrides, "force_enabled": False})


def _operators(name: str, h: float):
    identity = ConvKernel.identity()
    zero = ConvKernel.zero()
    if name == "kdvburgers":
        return identity, central_difference(h), identity
    if name == "bbm":
        A = ConvKernel([-1.0 / h**2, 1.0 + 2.0 / h**2, -1.0 / h**2], "symmetric")
        return A, central_difference(h), zero
    if name == "peronamalik":
        return identity, zero, identity
    return identity, zero, second_difference(h).scaled(-1.0)


def default_grid(name: str, M: int = 100, P: float = None) -> PeriodicGrid:
    """Grid with the default period of a system"""
    if name not in SYSTEMS:
        raise ConfigError(f"Unknown system '{name}', expected one of {', '.join(SYSTEMS)}")
    return PeriodicGrid(M, DEFAULT_PERIODS[name] if P is None else P)


def system_spec(name: str, grid: PeriodicGrid, overrides: dict = None) -> SystemSpec:
    """
    Builds a benchmark system on a grid

    Overrides may replace physical parameters by name and switch the force
    off with force_enabled=False.
    """
    if name not in SYSTEMS:
        raise ConfigError(f"Unknown system '{name}', expected one of {', '.join(SYSTEMS)}")
    overrides = dict(overrides or {})
    params = dict(DEFAULT_PARAMS[name])
    force_enabled = bool(overrides.get("force_enabled", True))
    for key, value in overrides.items():
        if key == "force_enabled":
            continue
        if key not in params:
            raise ConfigError(f"Unknown parameter '{key}' for system {name}")
        params[key] = float(value)
    A, S, R = _operators(name, grid.h)
    logger.debug("Built system %s on %s with %s", name, grid, params)
    return SystemSpec(
        name=name,
        grid=grid,
        params=params,
        A_kernel=A,
        S_kernel=S,
        R_kernel=R,
        force_flags=FORCES[name][1],
        ic=INITIAL_CONDITIONS[name],
        force_enabled=force_enabled,
        substeps=DEFAULT_SUBSTEPS[name],
        overrides=overrides,
    )


######################################################################
#  O P E R A T I O N S
######################################################################
def discrete_hamiltonian(spec: SystemSpec, u):
    """H_p(u)"""
    return spec.hamiltonian(u)


def discrete_lyapunov(spec: SystemSpec, u):
    """V_p(u)"""
    return spec.lyapunov(u)


def ground_truth_rhs(spec: SystemSpec, u, t=0.0) -> np.ndarray:
    """Solves A y = S grad H/h - R grad V/h + f for y"""
    return spec.rhs(u, t)


def sample_initial_condition(spec: SystemSpec, rng: np.random.Generator) -> np.ndarray:
    """Draws a random initial state of the system"""
    return spec.ic.sample(rng, spec.grid)


def external_force(spec: SystemSpec, u, x=None, t=0.0) -> np.ndarray:
    """Evaluates the external force at the nodes"""
    return spec.force(u, x, t)
