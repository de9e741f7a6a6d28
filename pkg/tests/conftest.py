import numpy as np
import pytest

from vpdecay.grid import PhaseField, build_grid


def gaussian_field(grid, A=1.0, sx=1.0, sv=1.0):
    xx = sum(c * c for c in grid.x_mesh())
    vv = sum(c * c for c in grid.v_mesh())
    vals = A * np.multiply.outer(np.broadcast_to(np.exp(-vv / (2 * sv**2)), grid.velocity_shape),
                                 np.broadcast_to(np.exp(-xx / (2 * sx**2)), grid.spatial_shape))
    return PhaseField(grid, vals)


@pytest.fixture
def small_grid_2d():
    return build_grid(2, 16, 16, 12.0, 5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
