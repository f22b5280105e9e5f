# scripts/cgap_settings.py
import os
import sys
import json
import logging
from pathlib import Path
from typing import Optional, Dict, Any
from dotenv import load_dotenv


# Load environment variables from config file
# Try the persistent location first, then fallback to project root
config_file = Path.home() / ".config" / "cgap" / ".env"
if config_file.exists():
    load_dotenv(config_file)
else:
    # Fallback to project root .env for development
    project_root = Path(__file__).parent.parent
    load_dotenv(project_root / ".env")

EPS_EQ = float(os.getenv("CGAP_EPS_EQ", "1e-9"))
EPS_FIX = float(os.getenv("CGAP_EPS_FIX", "1e-9"))
EPS_MILP = float(os.getenv("CGAP_EPS_MILP", "1e-4"))
FEAS_TOL = float(os.getenv("CGAP_FEAS_TOL", "1e-7"))
ENUM_CAP = int(os.getenv("CGAP_ENUM_CAP", str(2 ** 20)))
BRANCH_CAP = int(os.getenv("CGAP_BRANCH_CAP", str(2 ** 20)))
GROUND_CAP = int(os.getenv("CGAP_GROUND_CAP", str(10 ** 7)))
GAME_EPSILON = float(os.getenv("CGAP_GAME_EPSILON", "0.1"))
TAU = float(os.getenv("CGAP_TAU", "0.5"))
JOBS = int(os.getenv("CGAP_JOBS", "1"))
LOG_LEVEL = os.getenv("CGAP_LOG_LEVEL", "WARNING")
LOG_FILE = os.getenv("CGAP_LOG_FILE", "")
LP_SOLVER = os.getenv("CGAP_LP_SOLVER", "cbc")

# Keys accepted by --config, mapped to their parser
_OVERRIDABLE = {
    "eps_eq": float,
    "eps_fix": float,
    "eps_milp": float,
    "feas_tol": float,
    "enum_cap": int,
    "branch_cap": int,
    "ground_cap": int,
    "game_epsilon": float,
    "tau": float,
    "jobs": int,
    "log_level": str,
    "log_file": str,
    "lp_solver": str,
}


def k_max(n_atoms: int) -> int:
    """Iteration cap for fixpoint evaluation over a program with n_atoms atoms."""
    return 10 * n_atoms + 100


def t_hat_cap(n_atoms: int) -> int:
    """Largest horizon tried when searching for T-hat."""
    return max(10 * n_atoms, 1)


def current() -> Dict[str, Any]:
    """Snapshot of the active settings, keyed like a --config file."""
    module = sys.modules[__name__]
    return {key: getattr(module, key.upper()) for key in _OVERRIDABLE}


def apply_overrides(overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    Merge overrides into the module-level settings.

    Args:
        overrides: Mapping of lower-case setting names to values

    Returns:
        The settings that were in effect before the merge, so callers can restore them
    """
    from cgap_errors import ValidationError

    previous = current()
    module = sys.modules[__name__]
    for key, value in overrides.items():
        if key not in _OVERRIDABLE:
            raise ValidationError(f"unknown setting '{key}'")
        try:
            setattr(module, key.upper(), _OVERRIDABLE[key](value))
        except (TypeError, ValueError) as e:
            raise ValidationError(f"bad value for setting '{key}': {e}") from e
    return previous


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a JSON --config file and apply it.

    Args:
        path: Path to a flat JSON object of setting overrides

    Returns:
        The previous settings
    """
    from cgap_errors import ValidationError

    try:
        with open(path, "r") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return apply_overrides(data)


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """
    Set up the root logger: timestamped lines on stderr plus an optional log file.

    Args:
        level: Logging level name. Defaults to CGAP_LOG_LEVEL
        log_file: Append-mode log file. Defaults to CGAP_LOG_FILE (empty disables it)
    """
    level = (level or LOG_LEVEL).upper()
    log_file = LOG_FILE if log_file is None else log_file

    formatter = logging.Formatter("[%(asctime)s] %(levelname)s %(name)s: %(message)s",
                                  datefmt="%Y-%m-%d %H:%M:%S")
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(formatter)
    root.addHandler(stream)

    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        file_handler = logging.FileHandler(log_file, mode="a")
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    root.setLevel(getattr(logging, level, logging.WARNING))
