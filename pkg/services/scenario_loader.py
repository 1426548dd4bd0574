"""
Scenario Loader - strict scenario file parsing
A scenario is one JSON object naming the system shape and the mode to run it in.
Unknown keys and missing keys are rejected with the key named.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from services.errors import ScenarioError
from services.fairness_probe import WorkloadSpec
from services.programs import SystemConfig, Variant
from services.sem_model import WakeupPolicy

logger = logging.getLogger(__name__)

MODE_EXPLORE = "explore"
MODE_STARVE_SEARCH = "starve-search"
MODE_RANDOM = "random"
MODE_BENCH = "bench"

COMMON_KEYS = ("variant", "m", "n", "policy", "mode")

MODE_KEYS = {
    MODE_EXPLORE: (("loop_bound",), ("budget",)),
    MODE_RANDOM: (("loop_bound", "seed", "max_steps"), ()),
    MODE_STARVE_SEARCH: (("horizon",), ()),
    MODE_BENCH: (("workload",), ()),
}

WORKLOAD_KEYS = ("reader_threads", "writer_threads", "hold_us", "think_us", "duration_ms")

# echo order of a validated scenario
KEY_ORDER = ("variant", "m", "n", "policy", "mode", "loop_bound", "budget", "seed",
             "max_steps", "horizon", "workload")


@dataclass(frozen=True)
class ScenarioFile:
    variant: Variant
    m: int
    n: int
    policy: WakeupPolicy
    mode: str
    loop_bound: Optional[int] = None
    budget: Optional[int] = None
    seed: Optional[int] = None
    max_steps: Optional[int] = None
    horizon: Optional[int] = None
    workload: Optional[Dict[str, int]] = None

    def system_config(self) -> SystemConfig:
        # starvation search raises the loop bound itself
        return SystemConfig(self.variant, self.m, self.n, self.loop_bound or 1, self.policy)

    def workload_spec(self) -> WorkloadSpec:
        if self.workload is None:
            raise ScenarioError("workload", "only bench scenarios carry a workload")
        return WorkloadSpec(self.variant, self.policy, self.m, **self.workload)

    def to_dict(self) -> Dict[str, Any]:
        """Scenario echo, enough to rerun it exactly"""
        echo: Dict[str, Any] = {}
        for key in KEY_ORDER:
            value = getattr(self, key)
            if value is None:
                continue
            if isinstance(value, (Variant, WakeupPolicy)):
                value = value.value
            elif key == "workload":
                value = {name: value[name] for name in WORKLOAD_KEYS}
            echo[key] = value
        return echo

    def shape(self) -> Dict[str, Any]:
        """Every key except the ones a comparison may vary"""
        echo = self.to_dict()
        for key in ("variant", "policy", "seed"):
            echo.pop(key, None)
        return echo


def _integer(raw: Dict[str, Any], key: str, minimum: int, prefix: str = "") -> int:
    name = f"{prefix}{key}"
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(name, f"must be an integer, got {value!r}")
    if value < minimum:
        raise ScenarioError(name, f"must be >= {minimum}, got {value}")
    return value


def _choice(raw: Dict[str, Any], key: str, parse):
    value = raw[key]
    if not isinstance(value, str):
        raise ScenarioError(key, f"must be a string, got {value!r}")
    try:
        return parse(value)
    except ValueError as e:
        raise ScenarioError(key, str(e)) from e


def parse_scenario(raw: Any) -> ScenarioFile:
    """
    Validate a decoded scenario document.

    Raises:
        ScenarioError: naming the first offending key
    """
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")

    for key in COMMON_KEYS:
        if key not in raw:
            raise ScenarioError(key, "missing required key")

    mode = raw["mode"]
    if mode not in MODE_KEYS:
        raise ScenarioError("mode", f"must be one of {', '.join(MODE_KEYS)}, got {mode!r}")
    required, optional = MODE_KEYS[mode]
    allowed = set(COMMON_KEYS) | set(required) | set(optional)
    for key in raw:
        if key not in allowed:
            raise ScenarioError(key, f"unknown key for mode {mode}")
    for key in required:
        if key not in raw:
            raise ScenarioError(key, "missing required key")

    variant = _choice(raw, "variant", Variant.parse)
    policy = _choice(raw, "policy", WakeupPolicy.parse)
    values: Dict[str, Any] = {
        "m": _integer(raw, "m", 1),
        "n": _integer(raw, "n", 0),
    }
    minimums = {"loop_bound": 1, "budget": 1, "seed": 0, "max_steps": 1, "horizon": 1}
    for key in required + optional:
        if key in raw and key != "workload":
            values[key] = _integer(raw, key, minimums[key])

    if mode == MODE_BENCH:
        values["workload"] = _parse_workload(raw["workload"], values["n"])
        if variant is Variant.BROKEN_FAIR_NO_MUTEX:
            raise ScenarioError("variant", "bench runs standard or fair locks only")

    return ScenarioFile(variant=variant, policy=policy, mode=mode, **values)


def _parse_workload(raw: Any, n: int) -> Dict[str, int]:
    if not isinstance(raw, dict):
        raise ScenarioError("workload", "must be a JSON object")
    for key in raw:
        if key not in WORKLOAD_KEYS:
            raise ScenarioError(f"workload.{key}", "unknown key")
    for key in WORKLOAD_KEYS:
        if key not in raw:
            raise ScenarioError(f"workload.{key}", "missing required key")
    workload = {key: _integer(raw, key, 0, prefix="workload.") for key in WORKLOAD_KEYS}
    if workload["writer_threads"] != n:
        raise ScenarioError("n", f"must equal workload.writer_threads ({workload['writer_threads']}), got {n}")
    return workload


def load_scenario(path: Path) -> ScenarioFile:
    """Read and validate a scenario file"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ScenarioError("<file>", f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ScenarioError("<file>", f"invalid JSON in {path}: {e}") from e
    scenario = parse_scenario(raw)
    logger.debug(f"Loaded scenario {path.name}: {scenario.to_dict()}")
    return scenario
