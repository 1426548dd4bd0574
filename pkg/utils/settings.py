"""
Settings - environment driven configuration
Values come from the process environment or a local .env file
"""

import os
import logging

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def _int_env(name: str, default: int) -> int:
    """Read a positive integer from the environment, falling back to default"""
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"⚠️ {name}={raw!r} is not an integer, using {default}")
        return default
    if value < 1:
        logger.warning(f"⚠️ {name} must be positive, using {default}")
        return default
    return value


# ============================================================================
# EXPLORATION
# ============================================================================

STATE_BUDGET = _int_env("RWCHECK_STATE_BUDGET", 10_000_000)
STARVATION_NODE_BUDGET = _int_env("RWCHECK_STARVATION_NODE_BUDGET", 200_000)
MAX_RECORDED_FINDINGS = _int_env("RWCHECK_MAX_RECORDED_FINDINGS", 50)
SWEEP_TIME_BUDGET_S = _int_env("RWCHECK_SWEEP_TIME_BUDGET_S", 300)

# ============================================================================
# RUNTIME
# ============================================================================

STRESS_ITERATIONS = _int_env("RWCHECK_STRESS_ITERATIONS", 10_000)
PROBE_EVENT_LIMIT = _int_env("RWCHECK_PROBE_EVENT_LIMIT", 2_000_000)

# ============================================================================
# LOGGING
# ============================================================================

LOG_LEVEL = os.getenv("RWCHECK_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
