"""
Commands

The operations behind the command line: each takes a RunConfig (plus the
files it works on), writes its outputs below the output directory and
returns what it produced.
"""
import logging
import os
import re
from dataclasses import replace

import numpy as np

from phnn.analysis import (
    MetricsTable,
    PlotExport,
    band_of,
    ensemble_band,
    epoch_convergence,
    evaluate_ensemble,
    prediction_panels,
    regrid_rollout,
    theorem_identity_check,
)
from phnn.common.errors import ConfigError, IdentityCheckFailed, UnsupportedError
from phnn.formats import (
    read_checkpoint,
    read_dataset,
    write_checkpoint,
    write_csv,
    write_dataset,
    write_metrics,
    write_plot_export,
    write_report,
    write_trajectory,
)
from phnn.integrate import generate_dataset, rollout, steps_between
from phnn.models import ablate, build_model, build_phnn
from phnn.pdezoo import system_spec
from phnn.runconfig import RunConfig
from phnn.spatial import PeriodicGrid
from phnn.train import ValidationSet, train, train_ensemble

logger = logging.getLogger("phnn")

# a result counts as an identity if the gap is below this times max(lhs, 1)
IDENTITY_TOLERANCE = 1e-10


def slug(text: str) -> str:
    """File name friendly form of a label"""
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def _out(run_config: RunConfig, name: str) -> str:
    return os.path.join(run_config.output_dir, name)


def _showcase_or_first(spec, protocol):
    try:
        return spec.ic.showcase_profile(spec.grid)
    except UnsupportedError:
        return protocol.initial_states(spec)[0]


######################################################################
#  D A T A
######################################################################
def cmd_generate_data(run_config: RunConfig) -> tuple:
    """Generates the training data of the configured system; returns (path, dataset)"""
    v = run_config.values
    if v["DATA_N_TRAJ"] < 1:
        raise ConfigError(f"DATA_N_TRAJ must be at least 1, got {v['DATA_N_TRAJ']}")
    spec = run_config.spec()
    dataset = generate_dataset(
        spec, v["DATA_N_TRAJ"], v["DATA_DT"], v["DATA_T"], seed=run_config.seed,
        substeps=run_config.substeps, fine_factor=v["DATA_FINE_FACTOR"], jobs=run_config.jobs,
    )
    path = write_dataset(_out(run_config, f"dataset-{spec.name}.csv"), dataset)
    return path, dataset


def _load_matching_dataset(run_config: RunConfig, path: str):
    dataset = read_dataset(path)
    grid = run_config.grid()
    if dataset.system != run_config.system or dataset.grid != grid:
        raise ConfigError(
            f"Dataset {path} holds {dataset.system} on {dataset.grid}, "
            f"but the configuration asks for {run_config.system} on {grid}"
        )
    return dataset


######################################################################
#  T R A I N I N G
######################################################################
def cmd_train(run_config: RunConfig, dataset_path: str) -> list:
    """Trains TRAIN_N_MODELS members; returns the checkpoint paths"""
    dataset = _load_matching_dataset(run_config, dataset_path)
    spec = run_config.spec()
    cfg = run_config.train_config()
    n_models = run_config["TRAIN_N_MODELS"]
    if run_config.k is not None:
        validation = ValidationSet.build(spec, cfg.val_ics, cfg.t_val, dataset.dt, cfg.seed) if cfg.val_ics else None
        members = []
        for member in range(n_models):
            seed = cfg.seed + member
            model = build_phnn(run_config.k, run_config.widths, grid=spec.grid, rng=np.random.default_rng(seed),
                               preset=run_config.preset, system=spec.name, system_params=spec.overrides)
            members.append(train(model, dataset, replace(cfg, seed=seed), validation=validation, spec=spec))
    else:
        members = train_ensemble(run_config.preset, spec, dataset, cfg, n_models, run_config.widths,
                                 jobs=run_config.jobs)
    paths = []
    for member, (model, report) in enumerate(members):
        name = f"{run_config.preset}-{cfg.seed + member}"
        paths.append(write_checkpoint(_out(run_config, f"model-{name}.ckpt"), model))
        write_report(_out(run_config, f"report-{name}.csv"), report)
        logger.info("Member %d: %s", member, report.summary())
    return paths


######################################################################
#  E V A L U A T I O N
######################################################################
def load_checkpoints(paths: list) -> list:
    """Reads checkpoints, requiring one shared grid"""
    if not paths:
        raise ConfigError("At least one checkpoint is required")
    models = [read_checkpoint(path) for path in paths]
    grids = {model.grid for model in models}
    if len(grids) != 1:
        raise ConfigError(f"Checkpoints live on different grids: {sorted(map(repr, grids))}")
    return models


def cmd_evaluate(run_config: RunConfig, checkpoint_paths: list) -> MetricsTable:
    """Writes metrics.csv and the prediction panels of every model type"""
    models = load_checkpoints(checkpoint_paths)
    spec = run_config.spec(models[0].grid)
    protocol = run_config.eval_protocol()
    groups = {}
    for model in models:
        groups.setdefault(model.label, []).append(model)
    table = MetricsTable()
    for members in groups.values():
        evaluate_ensemble(members, spec, protocol, jobs=run_config.jobs, table=table)
    write_metrics(_out(run_config, "metrics.csv"), table)

    ic = _showcase_or_first(spec, protocol)
    for label, members in groups.items():
        panels = prediction_panels(members, spec, ic, protocol.t_eval, protocol.dt, protocol.substeps)
        for name, export in panels.items():
            write_plot_export(_out(run_config, f"panel-{slug(label)}-{name}.csv"), export)
    return table


def cmd_rollout(run_config: RunConfig, checkpoint_path: str, t_end: float = None) -> str:
    """Rolls a model out from the showcase (or first evaluation) state; returns the CSV path"""
    model = read_checkpoint(checkpoint_path)
    spec = run_config.spec(model.grid)
    protocol = run_config.eval_protocol()
    t_end = protocol.t_eval if t_end is None else t_end
    trajectory = rollout(model.vector_field(), _showcase_or_first(spec, protocol), 0.0, protocol.dt,
                         steps_between(t_end, protocol.dt), "midpoint", substeps=protocol.substeps,
                         tol=protocol.tol, max_iter=protocol.max_iter, grid=model.grid)
    name = os.path.splitext(os.path.basename(checkpoint_path))[0]
    return write_trajectory(_out(run_config, f"rollout-{name}.csv"), trajectory)


def cmd_ablate(run_config: RunConfig, checkpoint_path: str, drop_force: bool, drop_dissipation: bool) -> str:
    """Writes the ablated model as a new checkpoint"""
    model = ablate(read_checkpoint(checkpoint_path), drop_force, drop_dissipation)
    parts = [part for part, flag in (("noforce", drop_force), ("nodiss", drop_dissipation)) if flag]
    name = os.path.splitext(os.path.basename(checkpoint_path))[0]
    return write_checkpoint(_out(run_config, f"{name}-{'-'.join(parts) or 'copy'}.ckpt"), model)


def cmd_regrid(run_config: RunConfig, checkpoint_path: str, sizes: list, t_end: float = None,
               rescale: bool = False) -> list:
    """
    Rolls an informed model out on each grid size and compares with the reference there

    The initial state is one draw of the system's profile, evaluated on every
    grid from the same parameters. Writes one panel CSV per size.
    """
    model = read_checkpoint(checkpoint_path)
    spec = run_config.spec(model.grid)
    protocol = run_config.eval_protocol()
    t_end = protocol.t_eval if t_end is None else t_end
    params = spec.ic.draw(run_config.rng())
    paths = []
    for M in sizes:
        grid = PeriodicGrid(M, spec.grid.P)
        fine_spec = system_spec(spec.name, grid, spec.overrides)
        u0 = spec.ic.profile(grid, params)
        trajectory = regrid_rollout(model, spec, M, u0, t_end, protocol.dt, rescale, protocol.substeps)
        reference = rollout(fine_spec.vector_field(), u0, 0.0, protocol.dt, steps_between(t_end, protocol.dt),
                            "midpoint", substeps=fine_spec.substeps).final
        export = PlotExport(grid.x, reference, band_of([trajectory.final]))
        paths.append(write_plot_export(_out(run_config, f"regrid-M{M}.csv"), export))
        logger.info("M=%d: rollout MSE %.6e", M, float(np.mean((trajectory.final - reference) ** 2)))
    return paths


def _random_field(rng: np.random.Generator, dims: int):
    W = rng.normal(size=(dims, dims)) / np.sqrt(dims)
    b = rng.normal(size=dims)
    return lambda u: np.tanh(W @ u + b)


def cmd_theorem_check(dims: int = 16, N: int = 50, dt: float = 0.01, p: float = 2.0, seed: int = 0) -> tuple:
    """
    Checks the forward Euler error identity on a random vector field and a perturbation

    Returns (lhs, rhs, gap); raises IdentityCheckFailed when the gap exceeds
    the tolerance.
    """
    rng = np.random.default_rng(seed)
    g = _random_field(rng, dims)
    perturbation = _random_field(rng, dims)
    g_tilde = lambda u: g(u) + 0.1 * perturbation(u)  # noqa: E731
    lhs, rhs = theorem_identity_check(g, g_tilde, rng.normal(size=dims), N, dt, p)
    gap = abs(lhs - rhs)
    logger.info("Identity check: lhs=%.17g rhs=%.17g gap=%.3e", lhs, rhs, gap)
    if gap > IDENTITY_TOLERANCE * max(lhs, 1.0):
        raise IdentityCheckFailed(f"Identity gap {gap:.3e} exceeds {IDENTITY_TOLERANCE:g} * max(lhs, 1)")
    return lhs, rhs, gap


def cmd_stability(run_config: RunConfig, dataset_path: str, epoch_counts: list) -> list:
    """
    Ensemble band at EVAL_T and the error against training length for TRAIN_N_MODELS members

    Writes band-<preset>.csv and convergence-<preset>.csv; returns their paths.
    """
    dataset = _load_matching_dataset(run_config, dataset_path)
    spec = run_config.spec()
    cfg = run_config.train_config()
    protocol = run_config.eval_protocol()
    n_models = max(2, run_config["TRAIN_N_MODELS"])
    ic = _showcase_or_first(spec, protocol)

    members = train_ensemble(run_config.preset, spec, dataset, cfg, n_models, run_config.widths,
                             jobs=run_config.jobs)
    band = ensemble_band([model for model, _ in members], spec, ic, protocol.t_eval, protocol.dt, protocol.substeps)
    reference = rollout(spec.vector_field(), ic, 0.0, protocol.dt, protocol.steps, "midpoint",
                        substeps=spec.substeps).final
    paths = [write_plot_export(_out(run_config, f"band-{run_config.preset}.csv"),
                               PlotExport(spec.grid.x, reference, band))]
    rows = epoch_convergence(run_config.preset, spec, dataset, cfg, epoch_counts, n_models, ic,
                             protocol.t_eval, run_config.widths, run_config.jobs)
    paths.append(write_csv(_out(run_config, f"convergence-{run_config.preset}.csv"),
                           ["epochs", "mean", "min", "max"], rows))
    return paths


def cmd_print_config(run_config: RunConfig) -> str:
    """The merged configuration as a config file"""
    return run_config.format()


def cmd_build_model(run_config: RunConfig):
    """An untrained model of the configured preset"""
    return build_model(run_config.preset, run_config.spec(), run_config.widths, run_config.rng())
