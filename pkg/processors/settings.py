import os
import logging
from datetime import datetime, timezone
from pathlib import Path
from dotenv import load_dotenv


load_dotenv()

logger = logging.getLogger(__name__)

REPO_ROOT = Path(__file__).resolve().parent.parent

DATA_DIR = Path(os.getenv("SDNSEC_DATA_DIR", REPO_ROOT / "data"))
DEFAULT_KB_PATH = DATA_DIR / "catalog.yaml"
DEFAULT_TOPOLOGY_PATH = DATA_DIR / "testbed.yaml"
SCENARIO_DIR = DATA_DIR / "scenarios"

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVEL = os.getenv("SDNSEC_LOG_LEVEL", "INFO").upper()

SCHEMA_VERSION = 1


def _env_flag(name: str, default: bool = False) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() in ("1", "true", "yes", "on")


DECIMAL_COMMA = _env_flag("SDNSEC_DECIMAL_COMMA")


def resolve_kb_path(cli_value: str | None = None) -> Path:
    """
    Picks the catalog file to load.

    The --kb flag wins, then the SDNSEC_KB environment variable, then the
    catalog shipped in the data directory.
    """
    if cli_value:
        return Path(cli_value)
    env_value = os.getenv("SDNSEC_KB")
    if env_value:
        logger.info(f"Using catalog from SDNSEC_KB: {env_value}")
        return Path(env_value)
    return DEFAULT_KB_PATH


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(level=(level or LOG_LEVEL), format=LOG_FORMAT)


def report_clock() -> datetime:
    """
    Timestamp source for reports. SOURCE_DATE_EPOCH pins it; without it the
    stamp is the Unix epoch unless SDNSEC_WALL_CLOCK asks for the current
    time, so repeated runs produce byte-identical reports by default.
    """
    epoch = os.getenv("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    if _env_flag("SDNSEC_WALL_CLOCK"):
        return datetime.now(timezone.utc)
    return datetime.fromtimestamp(0, tz=timezone.utc)


def dashboard_password() -> str | None:
    """Analyst password for the dashboard, or None when unset or blank."""
    value = os.getenv("SDNSEC_DASHBOARD_PASSWORD", "").strip()
    return value or None
