import warnings

import numpy as np
import pytest

from vsps_ampc.scenario import load_config, run_scenario, shipped_config_path
from vsps_ampc.vsps_model import HillChart, TunnelParams, VspsUnitParams


@pytest.fixture(scope="session")
def params():
    return VspsUnitParams()


@pytest.fixture(scope="session")
def chart():
    return HillChart()


@pytest.fixture(scope="session")
def tunnel():
    return TunnelParams()


@pytest.fixture(scope="session")
def shipped():
    return {m: load_config(shipped_config_path(m)) for m in ("fsps", "vic", "ampc")}


@pytest.fixture(scope="session")
def shipped_runs(shipped):
    """Closed-loop runs of the three shipped configs, computed once per session."""
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for m, cfg in shipped.items():
            out[m] = run_scenario(cfg)
    return out


def rel_err(a, b, floor=1e-12):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def variant(cfg, disturbance=None, **sim):
    """Copy of ``cfg`` with a new disturbance schedule and/or sim settings."""
    import copy

    from vsps_ampc.scenario import parse_config

    doc = copy.deepcopy(cfg.document)
    if disturbance is not None:
        doc["disturbance"] = [list(ev) for ev in disturbance]
    doc["sim"].update(sim)
    return parse_config(doc)


ACCEPTANCE_LINES = []


def acceptance(number, ok, detail):
    """Record a criterion outcome for the summary; returns ``ok`` for the assert."""
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    print(ACCEPTANCE_LINES[-1])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
