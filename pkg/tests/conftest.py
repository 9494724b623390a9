import json
from pathlib import Path

import numpy as np
import pytest

from vescap import constraints, dynamics, grid

ORACLES = json.loads((Path(__file__).parent / "data" / "oracles.json").read_text())
PLANNING_DT = 10.0 / 3600.0


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture(scope="session")
def planning_grid():
    return grid.hybrid_grid(np.pi / PLANNING_DT)


@pytest.fixture(scope="session")
def small():
    return dynamics.commercial_hvac("small")


@pytest.fixture(scope="session")
def large():
    return dynamics.commercial_hvac("large")


def single_bin(size="small", count=1, eps=0.05):
    qos, dyn = dynamics.commercial_hvac(size, eps)
    return constraints.EnsembleSpec((constraints.BinSpec(qos, dyn, count, size),))


def random_target(g, rng, n_bumps=3):
    """Sum of a few log-normal bumps spanning the grid plus a small floor."""
    w = g.omegas
    v = np.full(w.size, 1e-3 * rng.uniform(0.1, 1.0))
    for _ in range(n_bumps):
        centre = np.exp(rng.uniform(np.log(0.05), np.log(500.0)))
        width = rng.uniform(0.2, 1.5)
        amp = np.exp(rng.uniform(np.log(0.1), np.log(50.0)))
        v += amp * np.exp(-0.5 * ((np.log(w + 1e-3) - np.log(centre)) / width) ** 2)
    return grid.SpectralDensity(g, v)


# one pass/fail line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
