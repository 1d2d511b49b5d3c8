import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tandem_paoi import SimConfig, TandemParams, collect_paoi, empirical_from_arrays  # noqa: E402

TABLE2_LAMBDA, TABLE2_MU1, TABLE2_MU2, TABLE2_D = 0.5, 1.0, 1.25, 0.8
N_ACCEPT = 1_000_000
N_WARMUP = 1000

# wall-clock seconds of each session simulation, for runtime budgets
SIM_SECONDS: dict[str, float] = {}
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def md1_params():
    return TandemParams.md1(TABLE2_LAMBDA, TABLE2_MU1, TABLE2_D)


@pytest.fixture(scope="session")
def mm1_params():
    return TandemParams.mm1(TABLE2_LAMBDA, TABLE2_MU1, TABLE2_MU2)


def _run(params, seed):
    t0 = time.perf_counter()
    delta, codes = collect_paoi(SimConfig(params, N_ACCEPT + N_WARMUP, N_WARMUP, seed=seed))
    out = delta, codes, empirical_from_arrays(delta, codes)
    SIM_SECONDS[params.kind] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def md1_run(md1_params):
    """10^6 post-warm-up packets of the M/M/1-M/D/1 tandem at the default parameters."""
    return _run(md1_params, seed=20240611)


@pytest.fixture(scope="session")
def mm1_run(mm1_params):
    return _run(mm1_params, seed=20240612)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def emit(criterion: int, ok: bool, detail: str) -> bool:
        line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
