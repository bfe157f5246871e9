"""
Analysis

Ensemble evaluation of trained models, pointwise ensemble bands, training
length convergence, rollouts on other grids and the identity relating the
one step prediction error of forward Euler to the error of a learned
vector field.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from phnn.common.errors import ConfigError, NonConvergenceError
from phnn.integrate import DEFAULT_MAX_ITER, DEFAULT_TOL, Trajectory, initial_condition_seeds, rollout, steps_between
from phnn.models import BaselineModel, PHNNModel, ablate, extract_baseline_force, regrid_model
from phnn.pdezoo import SystemSpec, sample_initial_condition
from phnn.spatial import PeriodicGrid, discrete_norm, solve_circulant, stencil_apply
from phnn.train import train_ensemble

logger = logging.getLogger("phnn")

# spawn key of the evaluation initial states
EVALUATION_STREAM = 2


@dataclass(frozen=True)
class EvalProtocol:
    """How an ensemble is evaluated"""

    n_models: int = 1
    n_eval_ics: int = 10
    t_eval: float = 1.0
    dt: float = 0.05
    seed: int = 0
    substeps: int = 1
    reference_substeps: int = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.n_eval_ics < 1:
            raise ConfigError(f"Evaluation needs at least one initial state, got {self.n_eval_ics}")
        if self.dt <= 0:
            raise ConfigError(f"Evaluation step must be positive, got {self.dt}")

    @property
    def steps(self) -> int:
        """Number of recorded steps to t_eval"""
        return steps_between(self.t_eval, self.dt)

    def initial_states(self, spec: SystemSpec) -> np.ndarray:
        """The evaluation initial states, independent of the training data"""
        seeds = initial_condition_seeds([int(self.seed), EVALUATION_STREAM], self.n_eval_ics)
        return np.stack([sample_initial_condition(spec, np.random.default_rng(s)) for s in seeds])

    def reference(self, spec: SystemSpec, ics: np.ndarray) -> np.ndarray:
        """Reference states at t_eval"""
        substeps = spec.substeps if self.reference_substeps is None else self.reference_substeps
        return rollout(spec.vector_field(), ics, 0.0, self.dt, self.steps, "midpoint", substeps=substeps).final


######################################################################
#  M E T R I C S   T A B L E
######################################################################
@dataclass
class MetricsRow:
    """Aggregate of one model type"""

    model_type: str
    mean: float
    std: float
    raw: list = field(default_factory=list)
    failures: list = field(default_factory=list)


class MetricsTable:
    """Mean and standard deviation of the per-model MSE, one row per model type"""

    def __init__(self):
        self.rows = []

    def __repr__(self):
        return f"<MetricsTable rows={[row.model_type for row in self.rows]}>"

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def add(self, model_type: str, raw, failures=None) -> MetricsRow:
        """Appends a row computed from the per-model values"""
        raw = [float(value) for value in raw]
        values = np.array(raw)
        row = MetricsRow(model_type, float(np.mean(values)), float(np.std(values)), raw, list(failures or []))
        self.rows.append(row)
        return row

    def row(self, model_type: str) -> MetricsRow:
        """Looks up a row by model type"""
        for row in self.rows:
            if row.model_type == model_type:
                return row
        raise ConfigError(f"No metrics for model type '{model_type}'")

    def best_index(self, model_type: str) -> int:
        """Position of the member with the lowest MSE"""
        return int(np.argmin(self.row(model_type).raw))


def _model_label(model) -> str:
    return getattr(model, "label", "Reference")


def _rollout_error(task):
    model, ic, reference, protocol = task
    try:
        final = rollout(model.vector_field(), ic, 0.0, protocol.dt, protocol.steps, "midpoint",
                        substeps=protocol.substeps, tol=protocol.tol, max_iter=protocol.max_iter).final
    except NonConvergenceError as error:
        logger.warning("Evaluation rollout failed: %s", error)
        return float("inf")
    mse = float(np.mean((final - reference) ** 2))
    return mse if np.isfinite(mse) else float("inf")


def evaluate_ensemble(models: list, spec: SystemSpec, protocol: EvalProtocol, model_type: str = None,
                      jobs: int = 1, table: MetricsTable = None) -> MetricsTable:
    """
    Rolls every model out from every evaluation state and aggregates the MSE

    Each model scores the mean over initial states of the nodewise MSE at
    t_eval; a row holds the mean and population std of those scores. Failed
    (model, state) pairs count as inf and are listed in the row.
    """
    if not models:
        raise ConfigError("Nothing to evaluate")
    grids = {model.grid for model in models}
    if len(grids) != 1 or spec.grid not in grids:
        raise ConfigError(f"Models and system do not share one grid: {sorted(map(repr, grids | {spec.grid}))}")
    ics = protocol.initial_states(spec)
    reference = protocol.reference(spec, ics)
    tasks = [(model, ics[i], reference[i], protocol) for model in models for i in range(len(ics))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            errors = list(executor.map(_rollout_error, tasks))
    else:
        errors = [_rollout_error(task) for task in tasks]
    errors = np.array(errors).reshape(len(models), len(ics))

    table = MetricsTable() if table is None else table
    labels = [model_type or _model_label(model) for model in models]
    for label in dict.fromkeys(labels):
        members = [i for i, other in enumerate(labels) if other == label]
        failures = [(i, j) for i in members for j in range(len(ics)) if not np.isfinite(errors[i, j])]
        row = table.add(label, errors[members].mean(axis=1), failures)
        logger.info("%s: mean MSE %.6e, std %.6e (%d failed rollouts)", label, row.mean, row.std, len(failures))
    return table


######################################################################
#  E N S E M B L E   B A N D S
######################################################################
class Band(NamedTuple):
    """Pointwise statistics across an ensemble"""

    mean: np.ndarray
    std: np.ndarray
    min: np.ndarray
    max: np.ndarray


def band_of(states) -> Band:
    """Pointwise mean, population std, min and max over the first axis"""
    states = np.asarray(states, dtype=float)
    return Band(states.mean(axis=0), states.std(axis=0), states.min(axis=0), states.max(axis=0))


def ensemble_band(models: list, spec: SystemSpec, ic, t_eval: float, dt: float, substeps: int = 1) -> Band:
    """Statistics of the ensemble's states at t_eval from one initial state"""
    if len(models) < 2:
        raise ConfigError(f"An ensemble band needs at least two models, got {len(models)}")
    if any(model.grid != spec.grid for model in models):
        raise ConfigError(f"All models must live on {spec.grid}")
    steps = steps_between(t_eval, dt)
    finals = [rollout(model.vector_field(), ic, 0.0, dt, steps, "midpoint", substeps=substeps).final for model in models]
    return band_of(finals)


def epoch_convergence(preset: str, spec: SystemSpec, dataset, cfg, epoch_counts, n_models: int, ic,
                      t_eval: float, widths=(20, 100, 100), jobs: int = 1) -> list:
    """
    L2 error at t_eval of seed ensembles trained for each epoch count

    Returns rows (epochs, mean, min, max) of the discrete L2 error against the
    reference solution.
    """
    steps = steps_between(t_eval, dataset.dt)
    reference = rollout(spec.vector_field(), ic, 0.0, dataset.dt, steps, "midpoint", substeps=spec.substeps).final
    rows = []
    for epochs in epoch_counts:
        members = train_ensemble(preset, spec, dataset, replace(cfg, epochs=int(epochs)), n_models, widths, jobs=jobs)
        errors = []
        for model, _ in members:
            try:
                final = rollout(model.vector_field(), ic, 0.0, dataset.dt, steps, "midpoint",
                                substeps=cfg.rollout_substeps).final
                errors.append(discrete_norm(final - reference, spec.grid))
            except NonConvergenceError as error:
                logger.warning("Convergence study rollout failed after %d epochs: %s", epochs, error)
                errors.append(float("inf"))
        rows.append((int(epochs), float(np.mean(errors)), float(np.min(errors)), float(np.max(errors))))
        logger.info("%d epochs: mean L2 error %.6e", epochs, rows[-1][1])
    return rows


######################################################################
#  P R E D I C T I O N   P A N E L S
######################################################################
@dataclass
class PlotExport:
    """One figure panel: reference curve and ensemble statistics on the grid"""

    x: np.ndarray
    reference: np.ndarray
    band: Band

    def columns(self) -> dict:
        """Columns in output order"""
        return {
            "x": self.x,
            "reference": self.reference,
            "model_mean": self.band.mean,
            "model_std": self.band.std,
            "model_min": self.band.min,
            "model_max": self.band.max,
        }


class ConservativeField:
    """The ground truth without force and dissipation: A^{-1} S grad H / h"""

    def __init__(self, spec: SystemSpec):
        self.spec = spec

    def __call__(self, u, t=0.0):
        u = np.asarray(u, dtype=float)
        if self.spec.S_kernel.constraint == "zero":
            return np.zeros_like(u)
        total = stencil_apply(self.spec.S_kernel, self.spec.grad_hamiltonian(u) / self.spec.grid.h)
        return solve_circulant(self.spec.A_kernel, total)


def _rollout_panel(models, field_of_reference, ic, t_eval, dt, substeps, grid) -> PlotExport:
    steps = steps_between(t_eval, dt)
    reference = rollout(field_of_reference, ic, 0.0, dt, steps, "midpoint", substeps=substeps[1]).final
    finals = []
    for model in models:
        try:
            finals.append(rollout(model.vector_field(), ic, 0.0, dt, steps, "midpoint", substeps=substeps[0]).final)
        except NonConvergenceError as error:
            logger.warning("Panel rollout failed: %s", error)
            finals.append(np.full(grid.M, np.nan))
    return PlotExport(grid.x, reference, band_of(finals))


def _force_panel(models, spec: SystemSpec, t_eval: float) -> PlotExport:
    grid = spec.grid
    zero = np.zeros(grid.M)
    values = []
    if isinstance(models[0], BaselineModel):
        reference = spec.force(zero, grid.x, t_eval) - spec.force(zero, np.zeros(grid.M), 0.0)
        for model in models:
            values.append(extract_baseline_force(model)(grid.x, t_eval))
    else:
        reference = spec.force(zero, grid.x, t_eval)
        for model in models:
            values.append(model.evaluate_terms(zero, t_eval).get("force", zero))
    return PlotExport(grid.x, reference, band_of(values))


def prediction_panels(models: list, spec: SystemSpec, ic, t_eval: float, dt: float, substeps: int = 1) -> dict:
    """
    Panels of the prediction figure for an ensemble of one model type

    PHNN ensembles get the full model, the learned force, the model without
    force and the model without force and dissipation; baseline ensembles
    get the full model and the extracted force only.
    """
    grid = spec.grid
    steps = (substeps, spec.substeps)
    panels = {
        "full": _rollout_panel(models, spec.vector_field(), ic, t_eval, dt, steps, grid),
        "force": _force_panel(models, spec, t_eval),
    }
    if all(isinstance(model, PHNNModel) for model in models):
        corrected = [model for model in models if model.leakage_corrected]
        if len(corrected) == len(models):
            no_force = [ablate(model, drop_force=True) for model in models]
            panels["no_force"] = _rollout_panel(no_force, spec.without_force().vector_field(), ic, t_eval, dt,
                                                steps, grid)
            bare = [ablate(model, drop_force=True, drop_dissipation=True) for model in models]
            panels["no_force_dissipation"] = _rollout_panel(bare, ConservativeField(spec), ic, t_eval, dt,
                                                            steps, grid)
        else:
            logger.warning("Skipping ablation panels: models are not leakage corrected")
    return panels


######################################################################
#  R E G R I D D I N G
######################################################################
def regrid_rollout(model, spec: SystemSpec, M_new: int, u0_continuous, t_end: float, dt: float,
                   rescale: bool = False, substeps: int = 1) -> Trajectory:
    """
    Rolls an informed model out on a grid with M_new nodes

    u0_continuous is a callable of x evaluated on the new nodes, or an array
    already sampled there.
    """
    grid = PeriodicGrid(M_new, spec.grid.P)
    regridded = regrid_model(model, grid, rescale)
    u0 = u0_continuous(grid.x) if callable(u0_continuous) else np.asarray(u0_continuous, dtype=float)
    if u0.shape != (grid.M,):
        raise ConfigError(f"Initial state of shape {u0.shape} does not fit M={grid.M}")
    steps = steps_between(t_end, dt)
    logger.info("Rolling out %s on M=%d (trained on M=%d)", model.label, M_new, model.grid.M)
    return rollout(regridded.vector_field(), u0, 0.0, dt, steps, "midpoint", substeps=substeps, grid=grid)


######################################################################
#  F O R W A R D   E U L E R   E R R O R   I D E N T I T Y
######################################################################
def _p_sum(v, p: float) -> float:
    return float(np.sum(np.abs(np.asarray(v, dtype=float)) ** p))


def theorem_identity_check(g, g_tilde, u0, N: int, dt: float, p: float = 2.0):
    """
    Compares the vector field error along a forward Euler path with the one step error

    u^j follows forward Euler under g; each prediction u~^j is one forward
    Euler step under g_tilde from the observed u^{j-1}. Returns
    lhs = (dt sum_{j<N} |g(u^j) - g_tilde(u^j)|^p)^{1/p} and
    rhs = (1/dt) (sum_{j=1..N} dt |u^j - u~^j|^p)^{1/p}, which agree up to
    round-off.
    """
    if p < 1:
        raise ConfigError(f"p must be at least 1, got {p}")
    if N < 1:
        raise ConfigError(f"N must be at least 1, got {N}")
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    states = [np.asarray(u0, dtype=float)]
    for j in range(N):
        states.append(states[j] + dt * g(states[j]))
    lhs_sum = sum(_p_sum(g(states[j]) - g_tilde(states[j]), p) for j in range(N))
    rhs_sum = 0.0
    for j in range(1, N + 1):
        predicted = states[j - 1] + dt * g_tilde(states[j - 1])
        rhs_sum += dt * _p_sum(states[j] - predicted, p)
    lhs = (dt * lhs_sum) ** (1.0 / p)
    rhs = rhs_sum ** (1.0 / p) / dt
    return lhs, rhs
