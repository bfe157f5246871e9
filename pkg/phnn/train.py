"""
Training

Mini-batch training of the learned models on pairs of consecutive states,
using the mono-implicit residual of the chosen scheme as the loss, Adam
updates and validation by rollout for model selection.
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from phnn.common.errors import ConfigError, NonConvergenceError, ShapeError
from phnn.diffcore import Tape
from phnn.integrate import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    Dataset,
    initial_condition_seeds,
    rollout,
    scheme_residual,
    steps_between,
)
from phnn.models import PHNNModel, apply_leakage_correction, build_model
from phnn.pdezoo import SystemSpec, sample_initial_condition, system_spec

logger = logging.getLogger("phnn")

# spawn key that separates validation states from the training trajectories
VALIDATION_STREAM = 1


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run"""

    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scheme: str = "midpoint"
    val_ics: int = 10
    t_val: float = 1.0
    force_penalty: float = 0.0
    dissipation_penalty: float = 0.0
    validate_every: int = 1
    log_every: int = 100
    seed: int = 0
    rollout_substeps: int = 1
    rollout_tol: float = DEFAULT_TOL
    rollout_max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.validate_every < 1:
            raise ConfigError(f"validate_every must be at least 1, got {self.validate_every}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        scheme_residual(self.scheme)


@dataclass
class TrainReport:
    """Per-epoch losses and validation scores of a run"""

    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int = None
    wall_time: float = 0.0

    def __repr__(self):
        return f"<TrainReport epochs={len(self.epochs)} best={self.best_epoch} val={self.best_val_mse:.3e}>"

    def record(self, epoch: int, train_loss: float, val_mse: float):
        """Appends one epoch"""
        self.epochs.append(int(epoch))
        self.train_loss.append(float(train_loss))
        self.val_mse.append(float(val_mse))

    @property
    def best_val_mse(self) -> float:
        """Validation score of the selected epoch, NaN without validation"""
        if self.best_epoch is None:
            return float("nan")
        return self.val_mse[self.epochs.index(self.best_epoch)]

    def rows(self) -> list:
        """(epoch, train_loss, val_mse) rows"""
        return list(zip(self.epochs, self.train_loss, self.val_mse))

    def summary(self) -> str:
        """One line summary"""
        return (
            f"epochs={len(self.epochs)} best_epoch={self.best_epoch} "
            f"best_val_mse={self.best_val_mse:.6e} final_train_loss={self.train_loss[-1]:.6e}"
        )


######################################################################
#  O P T I M I Z E R
######################################################################
class Adam:
    """Adaptive moment estimation on a flat parameter vector"""

    def __init__(self, size: int, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.count = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Returns the updated parameters"""
        self.count += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.count)
        v_hat = self.v / (1.0 - self.beta2**self.count)
        return theta - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


######################################################################
#  L O S S
######################################################################
class LossGraph:
    """
    The training loss of a model as a tape with inputs u0, u1, t and x

    The penalties are evaluated at the midpoint state of each pair.
    """

    def __init__(self, model, scheme: str, dt: float, force_penalty: float = 0.0, dissipation_penalty: float = 0.0):
        self.model = model
        self.tape = Tape()
        tape = self.tape
        u0, u1, t, x = tape.input("u0"), tape.input("u1"), tape.input("t"), tape.input("x")
        residual = scheme_residual(scheme)(lambda u, s: model.emit(tape, u, s, x), u0, u1, t, float(dt))
        loss = tape.mean_square(residual)
        if force_penalty or dissipation_penalty:
            terms = model.emit_terms(tape, (u0 + u1) * 0.5, t + 0.5 * float(dt), x)
            if force_penalty and "force" in terms:
                loss = loss + force_penalty * tape.mean_abs(terms["force"])
            if dissipation_penalty and "dissipative" in terms:
                loss = loss + dissipation_penalty * tape.mean_abs(terms["dissipative"])
        tape.mark_output(loss)

    def _inputs(self, U0, U1, T) -> dict:
        U0 = np.asarray(U0, dtype=float)
        U1 = np.asarray(U1, dtype=float)
        M = self.model.grid.M
        if U0.shape != U1.shape or U0.shape[-1] != M or U0.ndim != 2:
            raise ShapeError(f"Batch shapes {U0.shape} and {U1.shape} do not fit a grid of {M} nodes")
        return {
            "u0": U0[:, None, :],
            "u1": U1[:, None, :],
            "t": np.broadcast_to(np.asarray(T, dtype=float).reshape(-1), (U0.shape[0],)).copy(),
            "x": self.model.grid.fourier_features()[None],
        }

    def value(self, U0, U1, T) -> float:
        """Loss of a batch"""
        return float(self.tape.forward(self.model.params, self._inputs(U0, U1, T)))

    def value_and_grad(self, U0, U1, T):
        """Loss of a batch and its gradient laid out like params.flat()"""
        value = self.value(U0, U1, T)
        grads = self.tape.backward(self.model.params).params
        return value, self.model.params.flatten_grads(grads)


def _batch_arrays(batch):
    if isinstance(batch, Dataset):
        U0, U1, T = batch.pairs()
        return U0, U1, T, batch.dt
    if not batch:
        raise ConfigError("Cannot evaluate the loss of an empty batch")
    dts = {sample.dt for sample in batch}
    if len(dts) != 1:
        raise ShapeError(f"All samples of a batch must share dt, got {sorted(dts)}")
    try:
        U0 = np.stack([sample.u0 for sample in batch])
        U1 = np.stack([sample.u1 for sample in batch])
    except ValueError as error:
        raise ShapeError(f"Samples of a batch have different shapes: {error}") from error
    return U0, U1, np.array([sample.t for sample in batch]), dts.pop()


def loss(model, batch, scheme: str = "midpoint", force_penalty: float = 0.0, dissipation_penalty: float = 0.0) -> float:
    """Mean squared residual of a batch of samples (or of a whole dataset)"""
    U0, U1, T, dt = _batch_arrays(batch)
    if len(U0) == 0:
        raise ConfigError("Cannot evaluate the loss of an empty batch")
    return LossGraph(model, scheme, dt, force_penalty, dissipation_penalty).value(U0, U1, T)


######################################################################
#  V A L I D A T I O N
######################################################################
@dataclass
class ValidationSet:
    """Held-out initial states and their reference states at t_val"""

    ics: np.ndarray
    reference: np.ndarray
    t_val: float
    dt: float

    def __repr__(self):
        return f"<ValidationSet ics={len(self.ics)} t_val={self.t_val}>"

    @classmethod
    def build(cls, spec: SystemSpec, n_ics: int, t_val: float, dt: float, seed: int = 0, substeps: int = None):
        """Draws n_ics initial states and integrates them with the reference solver"""
        if n_ics < 1:
            raise ConfigError(f"Validation needs at least one initial state, got {n_ics}")
        seeds = initial_condition_seeds([int(seed), VALIDATION_STREAM], n_ics)
        ics = np.stack([sample_initial_condition(spec, np.random.default_rng(s)) for s in seeds])
        steps = steps_between(t_val, dt)
        substeps = spec.substeps if substeps is None else substeps
        reference = rollout(spec.vector_field(), ics, 0.0, dt, steps, "midpoint", substeps=substeps).final
        logger.info("Validation set of %d states to t=%s built", n_ics, t_val)
        return cls(ics, reference, float(t_val), float(dt))

    def score(self, model, substeps: int = 1, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
        """Mean squared error of the model rollout at t_val; inf when the rollout fails"""
        steps = steps_between(self.t_val, self.dt)
        try:
            final = rollout(model.vector_field(), self.ics, 0.0, self.dt, steps, "midpoint",
                            substeps=substeps, tol=tol, max_iter=max_iter).final
        except NonConvergenceError as error:
            logger.warning("Validation rollout failed: %s", error)
            return float("inf")
        mse = float(np.mean((final - self.reference) ** 2))
        return mse if np.isfinite(mse) else float("inf")


def validate(model, val_ics, spec: SystemSpec, t_val: float, dt: float, substeps: int = 1,
             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Mean over initial states of the nodewise MSE between model and reference at t_val"""
    val_ics = np.atleast_2d(np.asarray(val_ics, dtype=float))
    if val_ics.size == 0:
        raise ConfigError("Validation needs at least one initial state")
    steps = steps_between(t_val, dt)
    reference = rollout(spec.vector_field(), val_ics, 0.0, dt, steps, "midpoint", substeps=spec.substeps).final
    return ValidationSet(val_ics, reference, float(t_val), float(dt)).score(model, substeps, tol, max_iter)


######################################################################
#  T R A I N I N G   L O O P
######################################################################
def train(model, dataset: Dataset, cfg: TrainConfig, rng: np.random.Generator = None,
          validation: ValidationSet = None, spec: SystemSpec = None):
    """
    Trains a copy of the model and returns it with its TrainReport

    The returned parameters are the snapshot of the epoch with the lowest
    validation MSE (the last epoch without validation). Pseudo-Hamiltonian
    models come back leakage corrected.
    """
    U0, U1, T = dataset.pairs()
    n_pairs = len(U0)
    if n_pairs == 0:
        raise ConfigError("The dataset holds no training pairs")
    if dataset.grid.M != model.grid.M:
        raise ConfigError(f"Dataset grid M={dataset.grid.M} does not match the model grid M={model.grid.M}")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if validation is None and cfg.val_ics > 0:
        spec = spec or system_spec(dataset.system, dataset.grid, dataset.overrides)
        validation = ValidationSet.build(spec, cfg.val_ics, cfg.t_val, dataset.dt, cfg.seed)

    model = model.copy()
    graph = LossGraph(model, cfg.scheme, dataset.dt, cfg.force_penalty, cfg.dissipation_penalty)
    optimizer = Adam(model.params.size, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    report = TrainReport()
    best_params = None
    best_val = None
    started = time.perf_counter()
    logger.info(
        "Training %s on %d pairs for %d epochs (%s, batch %d)",
        model.label, n_pairs, cfg.epochs, cfg.scheme, cfg.batch_size,
    )

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_pairs)
        total = 0.0
        for start in range(0, n_pairs, cfg.batch_size):
            index = order[start:start + cfg.batch_size]
            value, grad = graph.value_and_grad(U0[index], U1[index], T[index])
            model.params.set_flat(optimizer.step(model.params.flat(), grad))
            total += value * len(index)
        if isinstance(model, PHNNModel):
            model.check_constraints()

        val_mse = float("nan")
        if validation is not None and epoch % cfg.validate_every == 0:
            val_mse = validation.score(model, cfg.rollout_substeps, cfg.rollout_tol, cfg.rollout_max_iter)
            if best_val is None or val_mse < best_val:
                best_val = val_mse
                best_params = model.params.copy()
                report.best_epoch = epoch
        report.record(epoch, total / n_pairs, val_mse)
        if cfg.log_every and epoch % cfg.log_every == 0:
            logger.info("Epoch %d: train loss %.6e, validation MSE %.6e", epoch, total / n_pairs, val_mse)

    if best_params is None:
        report.best_epoch = cfg.epochs
    else:
        model.params = best_params
        model._invalidate()  # pylint: disable=protected-access
    report.wall_time = time.perf_counter() - started
    if isinstance(model, PHNNModel):
        model = apply_leakage_correction(model)
    logger.info("Training finished: %s", report.summary())
    return model, report


######################################################################
#  E N S E M B L E S
######################################################################
def _train_member(task):
    preset, spec, dataset, cfg, widths, activations, validation = task
    rng = np.random.default_rng(cfg.seed)
    model = build_model(preset, spec, widths, rng, activations)
    return train(model, dataset, cfg, rng, validation, spec)


def train_ensemble(preset: str, spec: SystemSpec, dataset: Dataset, cfg: TrainConfig, n_models: int,
                   widths=(20, 100, 100), activations=("tanh", "tanh"), jobs: int = 1) -> list:
    """
    Trains n_models members with seeds cfg.seed .. cfg.seed + n_models - 1

    All members are selected on the same validation set. Returns a list of
    (model, report) pairs in seed order.
    """
    if n_models < 1:
        raise ConfigError(f"An ensemble needs at least one member, got {n_models}")
    validation = None
    if cfg.val_ics > 0:
        validation = ValidationSet.build(spec, cfg.val_ics, cfg.t_val, dataset.dt, cfg.seed)
    tasks = [
        (preset, spec, dataset, replace(cfg, seed=cfg.seed + member), widths, activations, validation)
        for member in range(n_models)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(_train_member, tasks))
    return [_train_member(task) for task in tasks]
