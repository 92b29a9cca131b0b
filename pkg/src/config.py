import os
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = os.path.dirname(os.path.dirname(__file__))
DATA_DIR = os.path.join(BASE_DIR, "data")
EVAL_DIR = os.path.join(BASE_DIR, "eval")

VERSION = "0.3.0"
SCHEMA_VERSION = 1


def _int_env(name, default):
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    return int(raw)


def _float_env(name, default):
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    return float(raw)


WORKERS = _int_env("HTYPE_WORKERS", 0) or (os.cpu_count() or 1)
TOL_QUAD = _float_env("HTYPE_TOL_QUAD", 1e-12)
TOL_ROOT = _float_env("HTYPE_TOL_ROOT", 1e-12)
GRID = _int_env("HTYPE_GRID", 200)
SEED = _int_env("HTYPE_SEED", 20240601)
STEPS = _int_env("HTYPE_STEPS", 512)
DB_PATH = os.getenv("HTYPE_DB_PATH") or os.path.join(DATA_DIR, "htype.db")
LOG_LEVEL = os.getenv("HTYPE_LOG_LEVEL", "WARNING").upper()
