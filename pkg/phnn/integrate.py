"""
Time integration

Mono-implicit training residuals, the damped fixed point step used for
rollouts, and the reference data generator. The residual functions are
written against plain arithmetic so they work on numpy arrays and on
diffcore Var handles alike.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from phnn.common.errors import ConfigError, NonConvergenceError
from phnn.pdezoo import SystemSpec, sample_initial_condition, system_spec
from phnn.spatial import PeriodicGrid

logger = logging.getLogger("phnn")

SCHEMES = ("midpoint", "srk4")

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200
DAMPING = (1.0, 0.5)

# residuals below this many eps * max(1, |u|) / |dt| are roundoff
ROUNDOFF_FACTOR = 8.0

# consecutive increases of the residual norm that count as divergence
DIVERGENCE_PATIENCE = 3


######################################################################
#  T R A I N I N G   R E S I D U A L S
######################################################################
def midpoint_residual(g, u0, u1, t, dt):
    """(u1 - u0)/dt - g((u0 + u1)/2, t + dt/2)"""
    return (u1 - u0) / dt - g((u0 + u1) * 0.5, t + 0.5 * dt)


def srk4_residual(g, u0, u1, t, dt):
    """
    Fourth order symmetric mono-implicit Runge-Kutta residual

    The middle stage is the cubic Hermite interpolant at t + dt/2, built from
    the endpoint values and slopes, so no stage equation has to be solved.
    """
    g0 = g(u0, t)
    g1 = g(u1, t + dt)
    middle = (u0 + u1) * 0.5 - (dt / 8.0) * (g1 - g0)
    gm = g(middle, t + 0.5 * dt)
    return (u1 - u0) / dt - (g0 + 4.0 * gm + g1) / 6.0


RESIDUALS = {"midpoint": midpoint_residual, "srk4": srk4_residual}


def scheme_residual(scheme: str):
    """Looks up the residual function of a scheme"""
    try:
        return RESIDUALS[scheme]
    except KeyError as error:
        raise ConfigError(f"Unknown integrator '{scheme}', expected one of {', '.join(SCHEMES)}") from error


######################################################################
#  I M P L I C I T   S T E P P I N G
######################################################################
def _residual_floor(u1, dt) -> float:
    """Smallest residual norm roundoff lets the iteration resolve"""
    scale = max(1.0, float(np.max(np.abs(u1)))) if u1.size else 1.0
    return ROUNDOFF_FACTOR * np.finfo(float).eps * scale / abs(dt)


def implicit_step(g, u, t, dt, scheme="midpoint", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """
    Solves residual(g, u, u1, t, dt) = 0 for u1 by fixed point iteration

    The iteration is u1 <- u1 - theta*dt*residual starting from u1 = u, and
    stops once ||residual||_inf is below tol, or below the roundoff floor
    8 eps max(1, |u1|) / |dt| when that is larger. A full step (theta = 1)
    is tried first; if the residual grows or overflows the iteration
    restarts with theta = 1/2.
    """
    residual = scheme_residual(scheme)
    u0 = np.asarray(u, dtype=float)
    norm = np.inf
    for damping in DAMPING:
        u1 = u0.copy()
        previous = np.inf
        rising = 0
        for _ in range(max_iter):
            r = residual(g, u0, u1, t, dt)
            norm = float(np.max(np.abs(r))) if r.size else 0.0
            if not np.isfinite(norm):
                break
            if norm <= max(tol, _residual_floor(u1, dt)):
                return u1
            rising = rising + 1 if norm > previous else 0
            if rising >= DIVERGENCE_PATIENCE:
                break
            previous = norm
            u1 = u1 - damping * dt * r
        else:
            raise NonConvergenceError(
                f"Fixed point iteration did not reach {tol:g} in {max_iter} iterations (residual {norm:.3e})",
                residual_norm=norm,
            )
        logger.debug("Fixed point iteration with damping %s diverged at t=%s (residual %.3e)", damping, t, norm)
    raise NonConvergenceError(f"Fixed point iteration diverged at t={t} (residual {norm:.3e})", residual_norm=norm)


@dataclass
class Trajectory:
    """States at uniformly spaced times"""

    times: np.ndarray
    states: np.ndarray
    grid: PeriodicGrid = None

    def __repr__(self):
        return f"<Trajectory steps={len(self.times) - 1} shape={self.states.shape}>"

    @property
    def final(self) -> np.ndarray:
        """Last recorded state"""
        return self.states[-1]

    @property
    def dt(self) -> float:
        """Recorded step size, zero for a single state"""
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0


def rollout(
    g,
    u0,
    t0,
    dt,
    n,
    scheme="midpoint",
    substeps=1,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    grid=None,
) -> Trajectory:
    """Records n implicit steps of size dt, each made of `substeps` sub-steps"""
    if substeps < 1:
        raise ConfigError(f"substeps must be at least 1, got {substeps}")
    u = np.asarray(u0, dtype=float)
    states = [u]
    small = dt / substeps
    for step in range(n):
        start = t0 + step * dt
        for sub in range(substeps):
            try:
                u = implicit_step(g, u, start + sub * small, small, scheme, tol, max_iter)
            except NonConvergenceError as error:
                raise NonConvergenceError(
                    f"Rollout failed at step {step + 1}: {error}",
                    residual_norm=error.residual_norm,
                    step=step + 1,
                ) from error
        states.append(u)
    times = t0 + dt * np.arange(n + 1)
    return Trajectory(times, np.stack(states), grid)


######################################################################
#  D A T A S E T S
######################################################################
class Sample(NamedTuple):
    """One training pair"""

    u0: np.ndarray
    u1: np.ndarray
    t: float
    dt: float


@dataclass(eq=False)
class Dataset:
    """
    Trajectories sampled at a uniform step dt

    States are stored row by row with the trajectory they belong to; the
    training pairs are consecutive rows of the same trajectory.
    """

    system: str
    grid: PeriodicGrid
    dt: float
    seed: int
    substeps: int
    trajectory_ids: np.ndarray
    times: np.ndarray
    states: np.ndarray
    fine_factor: int = 1
    overrides: dict = field(default_factory=dict)

    def __repr__(self):
        return f"<Dataset {self.system} states={self.n_states} trajectories={self.n_trajectories}>"

    @property
    def n_states(self) -> int:
        """Number of stored states"""
        return len(self.times)

    @property
    def n_trajectories(self) -> int:
        """Number of distinct trajectories"""
        return len(np.unique(self.trajectory_ids))

    def pairs(self):
        """Arrays (U0, U1, T) of all consecutive pairs"""
        same = self.trajectory_ids[1:] == self.trajectory_ids[:-1]
        index = np.flatnonzero(same)
        return self.states[index], self.states[index + 1], self.times[index]

    @property
    def samples(self) -> list:
        """Training pairs as Sample tuples"""
        U0, U1, T = self.pairs()
        return [Sample(u0, u1, float(t), self.dt) for u0, u1, t in zip(U0, U1, T)]

    def trajectory(self, trajectory_id: int) -> Trajectory:
        """States of one trajectory"""
        rows = self.trajectory_ids == trajectory_id
        return Trajectory(self.times[rows], self.states[rows], self.grid)

    def equals(self, other: "Dataset") -> bool:
        """Exact equality of metadata and stored values"""
        return (
            self.system == other.system
            and self.grid == other.grid
            and self.dt == other.dt
            and self.seed == other.seed
            and self.substeps == other.substeps
            and self.fine_factor == other.fine_factor
            and np.array_equal(self.trajectory_ids, other.trajectory_ids)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.states, other.states)
        )


def _integrate_trajectory(task):
    spec, ic_seed, index, n_steps, dt_sample, substeps, fine_factor = task
    fine = spec
    if fine_factor > 1:
        fine = system_spec(spec.name, spec.grid.refine(fine_factor), spec.overrides)
    u0 = sample_initial_condition(fine, np.random.default_rng(ic_seed))
    try:
        trajectory = rollout(fine.vector_field(), u0, 0.0, dt_sample, n_steps, "midpoint", substeps=substeps)
    except NonConvergenceError as error:
        raise NonConvergenceError(
            f"Trajectory {index}: {error}", residual_norm=error.residual_norm, step=error.step
        ) from error
    return trajectory.states[:, ::fine_factor]


def steps_between(T: float, dt: float) -> int:
    """Number of steps of size dt covering [0, T]"""
    if dt <= 0:
        raise ConfigError(f"Time step must be positive, got {dt}")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise ConfigError(f"End time {T} is not a positive multiple of the step {dt}")
    return steps


def initial_condition_seeds(seed: int, count: int) -> list:
    """Independent per-IC seed sequences derived from the master seed"""
    return np.random.SeedSequence(seed).spawn(count)


def generate_dataset(
    spec: SystemSpec,
    n_traj: int,
    dt_sample: float,
    T: float,
    seed: int = 0,
    substeps: int = None,
    fine_factor: int = 1,
    jobs: int = 1,
) -> Dataset:
    """
    Integrates random initial states of a system with the reference solver

    Each initial state gets its own random stream spawned from the master
    seed, so the result does not depend on the number of worker processes.
    With fine_factor q the system is integrated on a grid q times finer and
    the states are subsampled onto the requested grid.
    """
    if n_traj < 1:
        raise ConfigError(f"A dataset needs at least one trajectory, got {n_traj}")
    substeps = spec.substeps if substeps is None else int(substeps)
    if substeps < 1 or fine_factor < 1:
        raise ConfigError("substeps and fine_factor must be at least 1")
    n_steps = steps_between(T, dt_sample)
    tasks = [
        (spec, ic_seed, index, n_steps, dt_sample, substeps, int(fine_factor))
        for index, ic_seed in enumerate(initial_condition_seeds(seed, n_traj))
    ]
    logger.info(
        "Generating %d %s trajectories of %d steps (dt=%s, substeps=%d, jobs=%d)",
        n_traj, spec.name, n_steps, dt_sample, substeps, jobs,
    )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_integrate_trajectory, tasks))
    else:
        results = [_integrate_trajectory(task) for task in tasks]

    times = dt_sample * np.arange(n_steps + 1)
    return Dataset(
        system=spec.name,
        grid=spec.grid,
        dt=float(dt_sample),
        seed=int(seed),
        substeps=substeps,
        trajectory_ids=np.repeat(np.arange(n_traj), n_steps + 1),
        times=np.tile(times, n_traj),
        states=np.concatenate(results),
        fine_factor=int(fine_factor),
        overrides=dict(spec.overrides),
    )
