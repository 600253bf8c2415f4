# config.py — nodal-lab configuration

import os
import sys

# ==============================================================================
# GLOBAL ENGINE SETTINGS
# ==============================================================================

ENGINE_NAME = "nodal-lab"
VERSION = "1.0"

# ==============================================================================
# GRID
# ==============================================================================

# Interior nodes wanted across each characteristic length (warning only)
MIN_NODES_ACROSS = 8

# Relative slack for strict-interior membership tests against analytic shapes
MEMBERSHIP_EPS = 1e-9

# Significant digits in field dumps, CSV and JSON output
OUTPUT_DIGITS = 12

# ==============================================================================
# LINEAR ALGEBRA
# ==============================================================================

# Relative residual for CG solves when the caller gives none
CG_TOL = 1e-10

# CG iteration budget
CG_MAX_ITER = 20000

# CG restarts from the last iterate before giving up
CG_RESTARTS = 3

# Eigenpair residual bound: ||A v - mu v|| <= EIG_TOL * max(1, |mu|)
EIG_TOL = 1e-8

# ARPACK iteration budget (multiplied by the dimension)
EIG_MAX_ITER_FACTOR = 20

# Below this dimension eigenproblems are solved densely
DENSE_EIG_LIMIT = 160

# Zero band for eigenvalue classification, relative to ||A||_inf
ZERO_BAND_FACTOR = 1e-7

# Fixed seed for Lanczos start vectors
EIG_SEED = 20240517

# ==============================================================================
# NONLINEARITY
# ==============================================================================

# Sublinear power: f' is refused for |s| below this floor
DERIV_FLOOR = 1e-12

# kappa margin relative to (1 + kappa_raw)
KAPPA_MARGIN_FACTOR = 1e-3

# Log-grid used when sampling (A2): f(s)/s strictly decreasing
A2_SAMPLES = 200

# ==============================================================================
# FLOW
# ==============================================================================

FLOW_TAU = 0.9

# residual_tol = FLOW_RESIDUAL_FACTOR * sqrt(M) when not configured
FLOW_RESIDUAL_FACTOR = 1e-8

FLOW_MAX_STEPS = 50000

FLOW_BACKTRACKING = True

# Maximum halvings of tau when a step would raise the energy
MAX_BACKTRACK = 20

# sign_floor = SIGN_FLOOR_FACTOR * ||u||_inf
SIGN_FLOOR_FACTOR = 1e-6

# Fields with ||u||_inf at or below this are classified "zero"
ZERO_FIELD_TOL = 1e-6

# Newton: default residual target, damped-step budget, basin entry residual
NEWTON_TOL = 1e-10
NEWTON_MAX_DAMPED = 50
NEWTON_BASIN = 1e-5

# Newton refuses steps larger than this multiple of (1 + ||u||_2)
NEWTON_STEP_LIMIT = 1e6

# Log every n-th flow step when DEBUG_MODE is on
FLOW_LOG_EVERY = 1000

# ==============================================================================
# SOLUTIONS
# ==============================================================================

# Sup norm of the positive-solution start relative to min(1, s_f)
POSITIVE_START_AMPLITUDE = 0.1

# Seed angles in the second eigenspace: alpha = k*pi/SEED_ANGLES
SEED_ANGLES = 8

# Sup norm of nodal seeds relative to min(1, s_f)
SEED_AMPLITUDE = 0.1

# Relative tolerance used to detect seed symmetries
SYMMETRY_DETECT_TOL = 1e-6

# Deduplication of catalog entries, relative to ||u||_inf
DEDUP_TOL_FACTOR = 1e-5

# path_tol and saddle_tol relative to |c_nod| (or |m| when c_nod is unknown)
PATH_TOL_FACTOR = 1e-3
SADDLE_TOL_FACTOR = 1e-3

# Mountain-pass path: perturbation along the negative direction, images
MP_EPS_FACTOR = 0.05
MP_IMAGES = 21
MP_SEGMENT_IMAGES = 5

# Flow trajectories end when within this sup distance of +/-w (relative)
ENDPOINT_TOL_FACTOR = 1e-3

# String method
STRING_IMAGES = 21
STRING_PERTURBATION = 1e-2
STRING_MAX_ITER = 20000
STRING_CLIMB_AFTER = 200

# Dumbbell grid: default spacing, and the least number of spacings across the channel
DUMBBELL_H = 0.1
DUMBBELL_CHANNEL_CELLS = 4

# ==============================================================================
# SYMMETRY
# ==============================================================================

# Branch classification tolerance (degrees)
ANGLE_TOL_DEG = 10.0

# Projection onto E2 is unreliable above this remainder fraction
REMAINDER_LIMIT = 0.5

# Polar resampling and foliated Schwarz tolerance (relative to ||u||_inf)
POLAR_NR = 32
POLAR_NTHETA = 64
FSS_TOL = 2e-2

# Relative tolerance for the symmetry tags of reported solutions
SYMMETRY_TAG_TOL = 1e-4

# ==============================================================================
# BIFURCATION
# ==============================================================================

# lambda window above lambda_2^h and number of continuation points
WINDOW_LOW = 0.02
WINDOW_HIGH = 0.4
BRANCH_POINTS = 12

# L2 normalisation of the square eigenfunctions phi_alpha on (0, pi)^2
PHI_ALPHA_L2 = 0.25 * 3.141592653589793 ** 2

# ==============================================================================
# RUNTIME
# ==============================================================================

# Worker cap for independent seeds/branches
THREADS = max(1, int(os.getenv("NODAL_LAB_THREADS", "1")))

# Default output directory of the scenario runner
OUTPUT_DIR = os.getenv("NODAL_LAB_OUTPUT", "nodal_lab_out")

# ==============================================================================
# DEBUG SETTINGS
# ==============================================================================

# Per-step flow logging and other detail
DEBUG_MODE = os.getenv("NODAL_LAB_DEBUG", "0") == "1"

# Print logs to stderr
PRINT_DEBUG = os.getenv("NODAL_LAB_QUIET", "0") != "1"

# ==============================================================================
# UTILITY FUNCTIONS
# ==============================================================================

def log(msg: str):
    """Unified debug logger."""
    if PRINT_DEBUG:
        print(f"[DEBUG] {msg}", file=sys.stderr)
