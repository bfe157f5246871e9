"""
Global Configuration for Application

Defaults for every run setting, plus named profiles that override them for
the four benchmark systems at desk scale and at full benchmark scale.
"""

# Selected profile, empty for none
PROFILE = ""

# System and grid; GRID_P = 0 means the default period of the system
SYSTEM = "kdvburgers"
SYSTEM_OVERRIDES = ""
GRID_M = 100
GRID_P = 0.0

# Training data; DATA_SUBSTEPS = 0 means the default of the system
DATA_N_TRAJ = 10
DATA_DT = 0.05
DATA_T = 2.0
DATA_SUBSTEPS = 0
DATA_FINE_FACTOR = 1

# Model; MODEL_K overrides the kernel sizes of the general presets
MODEL_PRESET = "informed"
MODEL_K = ""
MODEL_CHANNELS = 20
MODEL_HIDDEN = 100
MODEL_FORCE_WIDTH = 100

# Training
TRAIN_EPOCHS = 2000
TRAIN_BATCH_SIZE = 32
TRAIN_LEARNING_RATE = 1e-3
TRAIN_BETA1 = 0.9
TRAIN_BETA2 = 0.999
TRAIN_EPS = 1e-8
TRAIN_INTEGRATOR = "midpoint"
TRAIN_FORCE_PENALTY = 0.0
TRAIN_DISSIPATION_PENALTY = 0.0
TRAIN_VAL_ICS = 3
TRAIN_VAL_T = 1.0
TRAIN_VALIDATE_EVERY = 1
TRAIN_LOG_EVERY = 100
TRAIN_N_MODELS = 1

# Rollouts of learned models
ROLLOUT_SUBSTEPS = 1
ROLLOUT_TOL = 1e-10
ROLLOUT_MAX_ITER = 200

# Evaluation
EVAL_N_ICS = 10
EVAL_T = 1.0

# Run
OUTPUT_DIR = "out"
SEED = 0
JOBS = 1
LOG_LEVEL = "INFO"

RUN_KEYS = (
    "PROFILE", "SYSTEM", "SYSTEM_OVERRIDES", "GRID_M", "GRID_P",
    "DATA_N_TRAJ", "DATA_DT", "DATA_T", "DATA_SUBSTEPS", "DATA_FINE_FACTOR",
    "MODEL_PRESET", "MODEL_K", "MODEL_CHANNELS", "MODEL_HIDDEN", "MODEL_FORCE_WIDTH",
    "TRAIN_EPOCHS", "TRAIN_BATCH_SIZE", "TRAIN_LEARNING_RATE", "TRAIN_BETA1", "TRAIN_BETA2", "TRAIN_EPS",
    "TRAIN_INTEGRATOR", "TRAIN_FORCE_PENALTY", "TRAIN_DISSIPATION_PENALTY", "TRAIN_VAL_ICS", "TRAIN_VAL_T",
    "TRAIN_VALIDATE_EVERY", "TRAIN_LOG_EVERY", "TRAIN_N_MODELS",
    "ROLLOUT_SUBSTEPS", "ROLLOUT_TOL", "ROLLOUT_MAX_ITER",
    "EVAL_N_ICS", "EVAL_T",
    "OUTPUT_DIR", "SEED", "JOBS", "LOG_LEVEL",
)

_KDVBURGERS = {"SYSTEM": "kdvburgers", "DATA_N_TRAJ": 10, "DATA_DT": 0.05, "DATA_T": 2.0,
               "TRAIN_VAL_ICS": 3, "TRAIN_VAL_T": 1.0, "EVAL_N_ICS": 10, "EVAL_T": 1.0}
_BBM = {"SYSTEM": "bbm", "DATA_N_TRAJ": 10, "DATA_DT": 0.4, "DATA_T": 10.0,
        "TRAIN_VAL_ICS": 3, "TRAIN_VAL_T": 0.8, "EVAL_N_ICS": 10, "EVAL_T": 2.0}
_PERONAMALIK = {"SYSTEM": "peronamalik", "DATA_N_TRAJ": 10, "DATA_DT": 0.02, "DATA_T": 0.02,
                "TRAIN_INTEGRATOR": "srk4", "TRAIN_VAL_ICS": 3, "TRAIN_VAL_T": 0.02,
                "EVAL_N_ICS": 10, "EVAL_T": 0.02}
_CAHNHILLIARD = {"SYSTEM": "cahnhilliard", "DATA_N_TRAJ": 100, "DATA_DT": 0.004, "DATA_T": 0.008,
                 "TRAIN_VAL_ICS": 5, "TRAIN_VAL_T": 0.008, "EVAL_N_ICS": 10, "EVAL_T": 0.008}

PROFILES = {
    "kdvburgers-desk": {**_KDVBURGERS, "GRID_M": 50, "DATA_N_TRAJ": 5, "TRAIN_EPOCHS": 2000, "TRAIN_N_MODELS": 1},
    "kdvburgers-paper": {**_KDVBURGERS, "GRID_M": 100, "TRAIN_EPOCHS": 20000, "TRAIN_N_MODELS": 3},
    "bbm-desk": {**_BBM, "GRID_M": 50, "TRAIN_EPOCHS": 2000, "TRAIN_N_MODELS": 1},
    "bbm-paper": {**_BBM, "GRID_M": 100, "TRAIN_EPOCHS": 50000, "TRAIN_N_MODELS": 10},
    "peronamalik-desk": {**_PERONAMALIK, "GRID_M": 50, "TRAIN_EPOCHS": 500, "TRAIN_N_MODELS": 1},
    "peronamalik-paper": {**_PERONAMALIK, "GRID_M": 100, "TRAIN_EPOCHS": 1000, "TRAIN_N_MODELS": 5},
    "cahnhilliard-desk": {**_CAHNHILLIARD, "GRID_M": 50, "DATA_N_TRAJ": 20, "TRAIN_EPOCHS": 500,
                          "TRAIN_N_MODELS": 1, "MODEL_PRESET": "informed"},
    "cahnhilliard-paper": {**_CAHNHILLIARD, "GRID_M": 100, "TRAIN_EPOCHS": 5000, "TRAIN_N_MODELS": 10},
}
