import os
from dotenv import load_dotenv

# Load environment variables from .env file if it exists
load_dotenv()


def get_setting(key_name, default):
    """Read a setting from the environment, falling back to ``default`` when unset or blank."""
    value = os.getenv(key_name)
    if value is None or value.strip() == "":
        return default
    return value


# Worker pool and search limits
DEFAULT_THREADS = max(1, int(get_setting("MOLMIP_THREADS", os.cpu_count() or 1)))
DEFAULT_TIME_BUDGET = float(get_setting("MOLMIP_TIME_BUDGET", 3600))
SMALL_N_CAP = int(get_setting("MOLMIP_SMALL_N_CAP", 8))
ENUM_N_CAP = int(get_setting("MOLMIP_ENUM_N_CAP", 8))

# How often (in search nodes) the enumerator looks at the clock
BUDGET_CHECK_INTERVAL = 4096

# Numeric tolerances
FORWARD_TOLERANCE = 1e-9
CHECK_TOLERANCE = 1e-6

# File paths
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = os.path.join(BASE_DIR, "data")
RUN_LOG_PATH = get_setting("MOLMIP_RUN_LOG", os.path.join(DATA_DIR, "run_log.csv"))

# Feature layout shared by every design space: one-hot atom type, then
# neighbor count 0..4, hydrogen count 0..4, double-bond flag, triple-bond flag
N_NEIGHBOR_FEATURES = 5
N_HYDROGEN_FEATURES = 5

# Atom types and covalences per dataset. Fluorine's covalence is not
# tabulated for qm9; 1 is the chemistry-standard value.
DATASETS = {
    "qm7": {
        "atom_types": ("C", "N", "O", "S"),
        "covalences": (4, 3, 2, 2),
    },
    "qm9": {
        "atom_types": ("C", "N", "O", "F"),
        "covalences": (4, 3, 2, 1),
    },
}

# GNN skeletons trained on each dataset: graph layer widths, then dense widths
ARCHITECTURES = {
    "qm7": {"graph": (16, 16, 32), "dense": (32, 16, 4, 1)},
    "qm9": {"graph": (16, 32, 64), "dense": (64, 16, 4, 1)},
}

# Error messages
ERROR_MESSAGES = {
    "inadmissible_multiset": "Multiset {elements} is not admissible for M={M}, L={L}",
    "size_mismatch": "Size mismatch: expected {expected}, got {actual}",
    "cap_exceeded": "Graph size {n} exceeds the configured cap of {cap}",
    "disconnected_graph": "Graph is not connected; indexing needs a connected graph",
    "empty_graph": "Graph has no nodes",
    "invalid_space": "Invalid design space: {reason}",
    "infeasible_molecule": "Molecule violates constraints: {violations}",
    "empty_feasible_set": "No feasible structure exists for this design space and level",
    "model_format": "Malformed model file at {location}: {reason}",
    "width_mismatch": "Model input width {model_width} does not match feature count {feature_count}",
    "unbounded_unit": "Unit {unit} has unbounded activation bounds; big-M needs finite bounds",
    "bilinear_mps": "MPS output cannot carry bilinear terms; emit LP instead",
    "missing_variable": "Assignment is missing variable(s): {names}",
    "unknown_variable": "Constraint {constraint} references undeclared variable {name}",
    "duplicate_name": "Name {name} is already declared",
    "budget_exceeded": "Time budget of {budget:.1f}s exceeded; partial count {count} is not exact",
    "parse_error": "Cannot parse {what} at line {line}: {text}",
}

# Logging configuration
LOG_LEVELS = {
    "DEBUG": 10,
    "INFO": 20,
    "WARNING": 30,
    "ERROR": 40,
    "CRITICAL": 50,
}
LOG_LEVEL = LOG_LEVELS.get(get_setting("LOG_LEVEL", "WARNING").upper(), 30)
