"""
AirFC Simulator - Centralized Configuration
===========================================

Centralized constants used across the over-the-air FC-layer simulator.

This module keeps "configuration-like" values in one place, including:
- The default system dimensions and noise/penalty settings.
- Solver tolerances and iteration caps for the alternating optimization.
- Training defaults (epochs, batch size, optimizer moments).
- Environment overrides for data/output folders and worker count.

Purpose: Avoid scattering numeric defaults (tolerances, caps, penalty factors)
across the solver, training and CLI modules.
"""

import os
from dotenv import load_dotenv


# Load environment variables (.env in the working directory, if present)
load_dotenv()


# =========================
# SYSTEM DEFAULTS
# =========================

# Antenna count = FC dimension. The conv front-end maps 28x28 -> 2x7x7 = 98
# reals -> 49 complex features, so the trainable architecture requires N = 49.
DEFAULT_N = 49
DEFAULT_SIGMA2 = 1.0
DEFAULT_P_MAX_DB = 10.0
DEFAULT_K_DB = 10.0
DEFAULT_M = 100
DEFAULT_L = 1

# Sentinels for the two Rician limits (K = +inf dB and K = -inf dB).
K_PURE_LOS = "los"
K_RAYLEIGH = "rayleigh"


# =========================
# SOLVER TOLERANCES
# =========================

EIG_CLAMP_TOL = 1e-10          # PSD round-off clamp / indefinite threshold
HERMITIAN_TOL = 1e-10          # max |A - A^H| accepted by hermitian_eig
RANK_REL_TOL = 1e-8            # numerical_rank default

OUTER_TOL = 1e-6               # relative objective decrease stopping the alternating optimization
OUTER_MAX_ITER = 500
BISECTION_TOL = 1e-9           # power residual for the precoder dual search
BISECTION_MAX_ITER = 200
INNER_TOL = 1e-8               # MM / projected-gradient inner stopping rule
INNER_MAX_ITER = 200


# =========================
# TRAINING DEFAULTS
# =========================

DEFAULT_LAMBDA_P = 100.0
DEFAULT_LAMBDA_RIS = 100.0
DEFAULT_EPOCHS = 200
DEFAULT_BATCH_SIZE = 32
DEFAULT_NUM_CLASSES = 10
DEFAULT_LEARNING_RATE = 1e-3
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

BN_EPS = 1e-5
BN_FLAT_REL_TOL = 1e-10       # per-feature std below this (relative to |mean|) counts as constant
BN_MOMENTUM = 0.1
POWER_NORM_FLOOR = 1e-12

CONV_CHANNELS = 2
CONV_KERNEL = 3
CONV_STRIDE = 4
CONV_PADDING = 1
IMAGE_SIDE = 28

# Desk-scale MNIST subset used by the acceptance runs.
DESK_TRAIN_COUNT = 10_000
DESK_TEST_COUNT = 2_000


# =========================
# ENVIRONMENT OVERRIDES
# =========================

DATA_DIR = os.getenv("AIRFC_DATA_DIR", "input_data")
OUTPUT_DIR = os.getenv("AIRFC_OUTPUT_DIR", "output_data")
CACHE_DIR = os.getenv("AIRFC_CACHE_DIR", "cache_data")
DEFAULT_THREADS = int(os.getenv("AIRFC_THREADS", "1"))


# Standard IDX file names per dataset and split.
# Documented download locations (not fetched automatically):
#   MNIST:         https://yann.lecun.com/exdb/mnist/
#   Fashion-MNIST: https://github.com/zalandoresearch/fashion-mnist
IDX_FILE_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
DATASET_FOLDERS = {
    "mnist": "mnist",
    "fashion_mnist": "fashion_mnist",
}
