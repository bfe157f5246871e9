"""
File formats

Text files for datasets, model checkpoints and result tables. Floats are
written with 17 significant digits so every value reads back bit for bit.
"""
import csv
import json
import logging
import os

import numpy as np

from phnn.common.errors import DataFormatError
from phnn.integrate import Dataset, Trajectory
from phnn.models import ModelBase, deserialize_model
from phnn.spatial import PeriodicGrid

logger = logging.getLogger("phnn")

DATASET_VERSION = 1
CHECKPOINT_VERSION = 1
FLOAT_FORMAT = "%.17g"

DATASET_HEADER = ("version", "system", "M", "P", "dt", "n_samples", "seed", "substeps", "fine_factor", "overrides")


def _fmt(value: float) -> str:
    return FLOAT_FORMAT % value


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


######################################################################
#  D A T A S E T   F I L E S
######################################################################
def write_dataset(path: str, dataset: Dataset) -> str:
    """Writes the '# key=value' manifest followed by one CSV row per state"""
    _ensure_parent(path)
    header = {
        "version": DATASET_VERSION,
        "system": dataset.system,
        "M": dataset.grid.M,
        "P": _fmt(dataset.grid.P),
        "dt": _fmt(dataset.dt),
        "n_samples": dataset.n_states,
        "seed": dataset.seed,
        "substeps": dataset.substeps,
        "fine_factor": dataset.fine_factor,
        "overrides": json.dumps(dataset.overrides, sort_keys=True),
    }
    columns = ["trajectory_id", "t"] + [f"u_{i}" for i in range(dataset.grid.M)]
    with open(path, "w", encoding="utf-8", newline="") as handle:
        for key in DATASET_HEADER:
            handle.write(f"# {key}={header[key]}\n")
        handle.write(",".join(columns) + "\n")
        for trajectory_id, t, state in zip(dataset.trajectory_ids, dataset.times, dataset.states):
            handle.write(",".join([str(int(trajectory_id)), _fmt(t)] + [_fmt(value) for value in state]) + "\n")
    logger.info("Wrote %d states to %s", dataset.n_states, path)
    return path


def _read_manifest(lines: list) -> tuple:
    header = {}
    index = 0
    while index < len(lines) and lines[index].startswith("#"):
        key, sep, value = lines[index][1:].strip().partition("=")
        if not sep:
            raise DataFormatError(f"Malformed header line: {lines[index].strip()}")
        header[key.strip()] = value.strip()
        index += 1
    return header, index


def read_dataset(path: str) -> Dataset:
    """Reads a dataset file written by write_dataset"""
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    header, index = _read_manifest(lines)
    try:
        if int(header["version"]) != DATASET_VERSION:
            raise DataFormatError(f"Unsupported dataset version {header['version']}")
        grid = PeriodicGrid(int(header["M"]), float(header["P"]))
        dt = float(header["dt"])
        n_samples = int(header["n_samples"])
        seed = int(header["seed"])
        substeps = int(header["substeps"])
        fine_factor = int(header.get("fine_factor", 1))
        overrides = json.loads(header.get("overrides", "{}"))
        system = header["system"]
    except KeyError as error:
        raise DataFormatError(f"Invalid dataset: missing header {error.args[0]}") from error
    except ValueError as error:
        raise DataFormatError(f"Invalid dataset header: {error}") from error

    rows = [line for line in lines[index + 1:] if line.strip()]
    if len(rows) != n_samples:
        raise DataFormatError(f"Dataset declares {n_samples} states but holds {len(rows)}")
    try:
        table = np.loadtxt(rows, delimiter=",", ndmin=2) if rows else np.zeros((0, grid.M + 2))
    except ValueError as error:
        raise DataFormatError(f"Invalid dataset row: {error}") from error
    if table.shape[1] != grid.M + 2:
        raise DataFormatError(f"Dataset rows have {table.shape[1]} columns, expected {grid.M + 2}")
    logger.info("Read %d states from %s", n_samples, path)
    return Dataset(
        system=system,
        grid=grid,
        dt=dt,
        seed=seed,
        substeps=substeps,
        trajectory_ids=table[:, 0].astype(int),
        times=table[:, 1].copy(),
        states=table[:, 2:].copy(),
        fine_factor=fine_factor,
        overrides=overrides,
    )


######################################################################
#  C H E C K P O I N T S
######################################################################
def write_checkpoint(path: str, model: ModelBase) -> str:
    """
    Writes a text manifest: a JSON metadata line, then one line per parameter

        param,<name>,<shape as AxBxC>,<constraint>,<trainable 0|1>,<values>
    """
    _ensure_parent(path)
    data = model.serialize()
    params = data.pop("params")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"# version={CHECKPOINT_VERSION}\n")
        handle.write(f"# meta={json.dumps(data, sort_keys=True)}\n")
        for entry in params:
            shape = "x".join(str(size) for size in entry["shape"])
            values = " ".join(_fmt(value) for value in entry["values"])
            handle.write(f"param,{entry['name']},{shape},{entry['constraint']},{int(entry['trainable'])},{values}\n")
    logger.info("Saved %s checkpoint to %s", model.label, path)
    return path


def _parse_param(line: str) -> dict:
    parts = line.split(",", 5)
    if len(parts) != 6 or parts[0] != "param":
        raise DataFormatError(f"Malformed parameter line: {line[:60]}")
    _, name, shape, constraint, trainable, values = parts
    try:
        shape = [int(size) for size in shape.split("x")] if shape else []
        values = [float(value) for value in values.split()]
    except ValueError as error:
        raise DataFormatError(f"Invalid values for parameter {name}: {error}") from error
    if int(np.prod(shape)) != len(values):
        raise DataFormatError(f"Parameter {name} has shape {shape} but {len(values)} values")
    return {"name": name, "shape": shape, "constraint": constraint, "trainable": trainable == "1", "values": values}


def read_checkpoint(path: str) -> ModelBase:
    """Reads a model written by write_checkpoint"""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line for line in handle.read().splitlines() if line.strip()]
    header, index = _read_manifest(lines)
    try:
        if int(header["version"]) != CHECKPOINT_VERSION:
            raise DataFormatError(f"Unsupported checkpoint version {header['version']}")
        data = json.loads(header["meta"])
    except KeyError as error:
        raise DataFormatError(f"Invalid checkpoint: missing header {error.args[0]}") from error
    except ValueError as error:
        raise DataFormatError(f"Invalid checkpoint header: {error}") from error
    data["params"] = [_parse_param(line) for line in lines[index:]]
    return deserialize_model(data)


######################################################################
#  C S V   T A B L E S
######################################################################
def write_csv(path: str, columns: list, rows) -> str:
    """Writes rows under a header, floats with 17 significant digits"""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(value) if isinstance(value, (float, np.floating)) else value for value in row])
    return path


def read_csv(path: str) -> tuple:
    """Returns (columns, rows) with the cells left as text"""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        columns = next(reader)
        return columns, [row for row in reader if row]


def write_report(path: str, report) -> str:
    """TrainReport as epoch, train_loss, val_mse"""
    return write_csv(path, ["epoch", "train_loss", "val_mse"], report.rows())


def write_metrics(path: str, table) -> str:
    """MetricsTable as model_type, mean, std"""
    return write_csv(path, ["model_type", "mean", "std"], [(row.model_type, row.mean, row.std) for row in table])


def write_plot_export(path: str, export) -> str:
    """One panel with columns x, reference, model_mean, model_std, model_min, model_max"""
    columns = export.columns()
    return write_csv(path, list(columns), zip(*(np.asarray(values, dtype=float) for values in columns.values())))


def write_trajectory(path: str, trajectory: Trajectory) -> str:
    """One row per recorded state: t, u_0 .. u_{M-1}"""
    M = trajectory.states.shape[-1]
    rows = ([float(t)] + [float(value) for value in state] for t, state in zip(trajectory.times, trajectory.states))
    return write_csv(path, ["t"] + [f"u_{i}" for i in range(M)], rows)
