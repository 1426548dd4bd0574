import json
from pathlib import Path

import pytest

from services.programs import SystemConfig, Variant
from services.sem_model import WakeupPolicy

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture
def make_config():
    def build(variant="fair", m=1, n=0, loop_bound=1, policy="fifo"):
        return SystemConfig(Variant.parse(variant), m, n, loop_bound, WakeupPolicy.parse(policy))
    return build


@pytest.fixture
def scenario_path():
    def locate(name: str) -> Path:
        return SCENARIOS / name
    return locate


@pytest.fixture
def write_scenario(tmp_path):
    def write(name: str, **fields) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(fields), encoding="utf-8")
        return path
    return write


@pytest.fixture(scope="session")
def golden_counts():
    return json.loads((GOLDEN / "state_counts.json").read_text(encoding="utf-8"))
