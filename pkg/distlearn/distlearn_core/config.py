"""
Global configuration settings for the distribution learning simulator.
"""
import os

from dotenv import load_dotenv

load_dotenv()

# Experiment defaults (used when a problem file or CLI flag leaves them out)
DEFAULT_HORIZON = 5000
DEFAULT_TRIALS = 200
DEFAULT_SEED = 0
DEFAULT_TARGET_ERROR = 1e-3

# Allocation search
DEFAULT_GRID_STEP = 0.01
MAX_SEARCH_ARMS = 6  # lattice size explodes beyond this
CRLB_REFERENCE_PULLS = 1000

# Numerical tolerances
SIMPLEX_TOLERANCE = 1e-12
RANK_TOLERANCE = 1e-9  # relative to the largest singular value
CONDITION_LIMIT = 1e12
TIE_RTOL = 1e-12

# Maximum-likelihood solver
MLE_TOLERANCE = 1e-10
MLE_MAX_ITER = 10_000
MLE_FLOOR = 1e-15
MLE_ACTIVE_BOUND = 1e-12  # coordinates at or below this may rest on the simplex boundary
# MLE_TOLERANCE = 1e-8  # faster, good enough for plots

# Reporting
LOG_GRID_POINTS = 30
CSV_FLOAT_FORMAT = ".17g"

# Monte Carlo worker processes
SIM_WORKERS = max(1, int(os.getenv("DISTLEARN_WORKERS", "1") or 1))

# Debug Configuration
SIM_DEBUG_MODE = os.getenv("DISTLEARN_DEBUG", "").lower() in ["true", "1", "yes", "on"]


def debug_sim_event(component: str, purpose: str, detail: str | None = None):
    """Print debug information for simulator internals when debug mode is enabled."""
    if SIM_DEBUG_MODE:
        from rich import print as rprint
        from rich.text import Text
        detail_info = f" [{detail}]" if detail else ""
        rprint(Text(f"🔬 {component} → {purpose}{detail_info}", style="dim bright_blue"))
