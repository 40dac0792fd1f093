import functools
import math

import pytest

from wlab import rotational_builder as rb
from wlab.psi_model import PsiSpec
from wlab.surface_core import analyze, product_grid

# Verdict lines from the acceptance module, echoed in the terminal summary.
VERDICTS = []

CMC = dict(abc=(1.0, 0.0, 0.0), bracket=(0.25, 0.35))
MIXED = dict(abc=(2.5, 0.5, 0.0), bracket=(0.1, 0.2))


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def spec_of(a, b, c):
    return PsiSpec.sqrt_family(a, b, c)


@functools.lru_cache(maxsize=None)
def product(a, b, c, n):
    spec = spec_of(a, b, c)
    r, grid = rb.product_torus(spec, n, n)
    return spec, r, grid, analyze(grid, spec)


@functools.lru_cache(maxsize=None)
def closed_profile(a, b, c, lo, hi):
    return rb.close_profile(spec_of(a, b, c), 1, 2, (lo, hi))


@functools.lru_cache(maxsize=None)
def rotational(a, b, c, lo, hi, n, n_th=None, substeps=16):
    spec = spec_of(a, b, c)
    prof = closed_profile(a, b, c, lo, hi)
    grid = rb.emit_grid(prof, n, n_th or n, substeps=substeps)
    return spec, grid, analyze(grid, spec)


@functools.lru_cache(maxsize=None)
def clifford(n=64):
    grid = product_grid(1 / math.sqrt(2), n, n)
    return grid, analyze(grid)


@pytest.fixture(scope="session")
def half():
    """(spec, r, grid, field) for the (1, 0.5, 0) product torus at 64 x 64."""
    return product(1.0, 0.5, 0.0, 64)


@pytest.fixture(scope="session")
def cmc_torus():
    return rotational(*CMC["abc"], *CMC["bracket"], 128, 64)


@pytest.fixture(scope="session")
def mixed_torus():
    return rotational(*MIXED["abc"], *MIXED["bracket"], 128, 64)
