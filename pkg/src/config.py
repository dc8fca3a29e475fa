"""Configuration settings for bohmflow."""

import os
from typing import Optional
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Output settings
OUTPUT_DIR = os.getenv("BOHMFLOW_OUT", "out")
LOG_FILE: Optional[str] = os.getenv("BOHMFLOW_LOG")

# Timezone used for header timestamps
TIMEZONE = os.getenv("BOHMFLOW_TIMEZONE", "UTC")

# Version tag written into every output header
FORMAT_VERSION = "1"

# Full configuration-space grids scale exponentially with dimension
MAX_PDE_DIM = 3

# Node masking: points with |psi| below this fraction of max|psi| are masked
NODE_EPS_REL = 1e-8

# Bound on |psi|^-1 laplacian |psi| at masked points (natural units)
NONLINEAR_CLAMP = 1e6

# Explicit RK4 stability: dt <= c * (m / hbar) * spacing**2
RK4_STABILITY_C = 0.2

# |z| bound of the RK4 stability region on the imaginary axis
RK4_IMAGINARY_LIMIT = 2.0 * 2.0 ** 0.5

# Trajectory speed clamp near nodes, as a multiple of the max interior speed
SPEED_CLAMP_FACTOR = 10.0

# Default amplitude level (relative to max|psi|) defining the interior
INTERIOR_LEVEL = 1e-3

# Lyapunov machinery
TRANSIENT_FRACTION = 0.1
ORTHOGONALITY_TOL = 1e-8
TANGENT_CONDITION_LIMIT = 1e12
CHAOS_FLOOR = 0.05

# Orthonormality tolerance for grid-backed bases
BASIS_TOL = 1e-8

# Norm tolerance for initial states before a warning is logged
NORM_WARNING_TOL = 1e-6

# Fraction of node-masked points above which the no-Q flow is flagged
MASK_WARNING_FRACTION = 0.01
