"""
Run configuration

Merges the built-in defaults, a named profile, a key=value config file and
command line flags (in that order of precedence) into a RunConfig, and
turns it into the objects the commands need.
"""
import logging
import os
from dataclasses import dataclass

import numpy as np
from dotenv import dotenv_values

from phnn import config
from phnn.analysis import EvalProtocol
from phnn.common.errors import ConfigError
from phnn.models import PRESETS
from phnn.pdezoo import SystemSpec, default_grid, system_spec
from phnn.spatial import PeriodicGrid
from phnn.train import TrainConfig

logger = logging.getLogger("phnn")

TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off", "")


def _coerce(key: str, value, default):
    """Converts a value to the type of the built-in default"""
    if isinstance(value, type(default)) and not isinstance(value, str):
        return value
    text = str(value).strip()
    try:
        if isinstance(default, bool):
            if text.lower() in TRUE_WORDS:
                return True
            if text.lower() in FALSE_WORDS:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as error:
        raise ConfigError(f"Invalid value '{text}' for {key}: expected {type(default).__name__}") from error
    return text


def parse_overrides(text: str) -> dict:
    """'nu=0,gamma=1' -> {'nu': 0.0, 'gamma': 1.0}; force_enabled is read as a boolean"""
    overrides = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"System override '{item}' is not of the form name=value")
        key = key.strip()
        if key == "force_enabled":
            overrides[key] = _coerce(key, value, True)
        else:
            overrides[key] = _coerce(key, value, 0.0)
    return overrides


def parse_k(text: str) -> tuple:
    """'3,3,3,1' -> (3, 3, 3, 1)"""
    try:
        k = tuple(int(part) for part in text.split(","))
    except ValueError as error:
        raise ConfigError(f"MODEL_K must be four comma separated integers, got '{text}'") from error
    if len(k) != 4:
        raise ConfigError(f"MODEL_K must have four entries, got '{text}'")
    return k


@dataclass(frozen=True)
class RunConfig:
    """The merged settings of one invocation"""

    values: dict

    def __repr__(self):
        return f"<RunConfig {self.system} preset={self.preset} seed={self.seed}>"

    def __getitem__(self, key):
        return self.values[key]

    @property
    def system(self) -> str:
        """Name of the benchmark system"""
        return self.values["SYSTEM"]

    @property
    def preset(self) -> str:
        """Model preset"""
        return self.values["MODEL_PRESET"]

    @property
    def seed(self) -> int:
        """Master seed"""
        return self.values["SEED"]

    @property
    def jobs(self) -> int:
        """Worker processes"""
        return max(1, self.values["JOBS"])

    @property
    def output_dir(self) -> str:
        """Directory for all written files"""
        return self.values["OUTPUT_DIR"]

    @property
    def overrides(self) -> dict:
        """Physical parameter overrides of the system"""
        return parse_overrides(self.values["SYSTEM_OVERRIDES"])

    @property
    def k(self):
        """Explicit kernel sizes, or None to use the preset"""
        return parse_k(self.values["MODEL_K"]) if self.values["MODEL_K"] else None

    @property
    def widths(self) -> tuple:
        """(channels, hidden, force width)"""
        return (self.values["MODEL_CHANNELS"], self.values["MODEL_HIDDEN"], self.values["MODEL_FORCE_WIDTH"])

    def grid(self) -> PeriodicGrid:
        """Training grid"""
        P = self.values["GRID_P"]
        return default_grid(self.system, self.values["GRID_M"], P if P > 0 else None)

    def spec(self, grid: PeriodicGrid = None) -> SystemSpec:
        """The benchmark system on the training grid (or another grid)"""
        return system_spec(self.system, grid or self.grid(), self.overrides)

    @property
    def substeps(self):
        """Reference solver sub-steps, None for the system default"""
        return self.values["DATA_SUBSTEPS"] or None

    def train_config(self) -> TrainConfig:
        """Training hyperparameters"""
        v = self.values
        return TrainConfig(
            epochs=v["TRAIN_EPOCHS"],
            batch_size=v["TRAIN_BATCH_SIZE"],
            learning_rate=v["TRAIN_LEARNING_RATE"],
            beta1=v["TRAIN_BETA1"],
            beta2=v["TRAIN_BETA2"],
            eps=v["TRAIN_EPS"],
            scheme=v["TRAIN_INTEGRATOR"],
            val_ics=v["TRAIN_VAL_ICS"],
            t_val=v["TRAIN_VAL_T"],
            force_penalty=v["TRAIN_FORCE_PENALTY"],
            dissipation_penalty=v["TRAIN_DISSIPATION_PENALTY"],
            validate_every=v["TRAIN_VALIDATE_EVERY"],
            log_every=v["TRAIN_LOG_EVERY"],
            seed=v["SEED"],
            rollout_substeps=v["ROLLOUT_SUBSTEPS"],
            rollout_tol=v["ROLLOUT_TOL"],
            rollout_max_iter=v["ROLLOUT_MAX_ITER"],
        )

    def eval_protocol(self) -> EvalProtocol:
        """Evaluation protocol"""
        v = self.values
        return EvalProtocol(
            n_models=v["TRAIN_N_MODELS"],
            n_eval_ics=v["EVAL_N_ICS"],
            t_eval=v["EVAL_T"],
            dt=v["DATA_DT"],
            seed=v["SEED"],
            substeps=v["ROLLOUT_SUBSTEPS"],
            reference_substeps=self.substeps,
            tol=v["ROLLOUT_TOL"],
            max_iter=v["ROLLOUT_MAX_ITER"],
        )

    def rng(self, offset: int = 0) -> np.random.Generator:
        """Generator seeded from the master seed"""
        return np.random.default_rng(self.seed + offset)

    def format(self) -> str:
        """key=value lines that read back as a config file"""
        return "\n".join(f"{key}={self.values[key]}" for key in config.RUN_KEYS) + "\n"


def defaults_from(app_config) -> dict:
    """Built-in defaults, taken from the application config"""
    return {key: app_config[key] for key in config.RUN_KEYS}


def read_config_file(path: str) -> dict:
    """Parses a key=value config file"""
    if not os.path.isfile(path):
        raise ConfigError(f"Config file not found: {path}")
    values = dotenv_values(path)
    unknown = sorted(set(values) - set(config.RUN_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}")
    return {key: "" if value is None else value for key, value in values.items()}


def build_run_config(defaults: dict, profile: str = None, path: str = None, flags: dict = None) -> RunConfig:
    """
    Merges defaults < profile < config file < flags

    The profile may come from the argument, the config file or the flags;
    flags set to None are ignored.
    """
    values = dict(defaults)
    file_values = read_config_file(path) if path else {}
    flags = {key: value for key, value in (flags or {}).items() if value is not None}
    profile = flags.get("PROFILE") or file_values.get("PROFILE") or profile or values.get("PROFILE")
    if profile:
        if profile not in config.PROFILES:
            raise ConfigError(f"Unknown profile '{profile}', expected one of {', '.join(sorted(config.PROFILES))}")
        values.update(config.PROFILES[profile])
        values["PROFILE"] = profile
    for layer in (file_values, flags):
        for key, value in layer.items():
            if key not in defaults:
                raise ConfigError(f"Unknown config key {key}")
            values[key] = _coerce(key, value, defaults[key])
    run_config = RunConfig(values)
    validate_run_config(run_config)
    return run_config


def validate_run_config(run_config: RunConfig):
    """Checks that the referenced system, preset and integrator exist"""
    if run_config.preset not in PRESETS:
        raise ConfigError(f"Unknown preset '{run_config.preset}', expected one of {', '.join(PRESETS)}")
    run_config.spec()
    run_config.train_config()
    run_config.eval_protocol()
    if run_config.k is not None and run_config.preset in ("informed", "baseline"):
        raise ConfigError(f"MODEL_K cannot be combined with the {run_config.preset} preset")
    logger.debug("Run configuration: %s", run_config)
