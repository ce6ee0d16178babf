from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from chartrel.executor import Engine
from chartrel.faults import exponentialize, load_fault_table, scale_rates
from chartrel.loader import bundled_model_dir, load_model

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def epas():
    return load_model(bundled_model_dir())


@pytest.fixture(scope="session")
def epas_table(epas):
    return load_fault_table(epas.fault_table_path(), epas.composite)


@pytest.fixture(scope="session")
def epas_exp_table(epas_table):
    """All-exponential EPAS, rates x1e6 (time axis only)."""
    return scale_rates(exponentialize(epas_table), 1e6)


@pytest.fixture
def engine(epas):
    return Engine(epas.composite, epas.library)


@pytest.fixture
def epas_copy(tmp_path):
    """A writable copy of the bundled EPAS directory."""
    for f in bundled_model_dir().iterdir():
        if f.is_file():
            shutil.copy(f, tmp_path / f.name)
    return tmp_path


INTERFACES = """
interface Cmd { out event go(n: integer) out event stop }
"""


def toy_model(directory: Path, charts: dict, composite: str, interfaces: str = INTERFACES,
              faults: str = "") -> Path:
    """Write a small model directory from source strings."""
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "interfaces.gi").write_text(interfaces)
    for name, text in charts.items():
        (directory / f"{name}.gsc").write_text(text)
    (directory / "toy.gcd").write_text(composite)
    if faults:
        (directory / "toy.faults.csv").write_text(faults)
    return directory


HW_INTERFACES = """
interface Hw { out event fail out event burn }
"""

UNIT = """
statechart Unit [ port HW: requires Hw ] {
    region main {
        initial Up
        state Up {
            on HW.fail -> Down
            on HW.burn -> Burnt
        }
        state Down { }
        state Burnt { }
        state Gone { }
    }
}
"""


def unit_model(directory: Path, evaluate: str = "U2: Down, Burnt", faults: str = "") -> Path:
    """Two independent units; U2 decides failure unless ``evaluate`` says otherwise."""
    composite = f"""
    cascade Pair [ port F1: requires Hw  port F2: requires Hw ] {{
        component U1: Unit
        component U2: Unit
        bind F1->U1.HW
        bind F2->U2.HW
        evaluate {evaluate}
    }}
    """
    if faults:
        faults = "instance,port,event,dist,param1,param2,from_state,to_state\n" + faults
    return toy_model(directory, {"unit": UNIT}, composite, HW_INTERFACES, faults)
