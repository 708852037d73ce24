"""Shared fixtures: the standard spinodal-decomposition configuration.

These parameters are frozen; the acceptance suite depends on them.
"""

import numpy as np
import pytest

from nlchb.grid import MacVelocity, make_grid
from nlchb.physics import MaterialParams, PotentialParams
from nlchb.solver import SimState

SPINODAL_ETA_F = 150.0
SPINODAL_GAMMA = 0.5


def spinodal_material():
    return MaterialParams(
        K_cap=0.05,
        l_c=0.5,
        l_h=0.5,
        kappa=1.0,
        nu_min=1.0,
        nu_max=1.0,
    )


def spinodal_potential():
    return PotentialParams(eta_f=SPINODAL_ETA_F)


def spinodal_phi0(grid, mean_offset=0.0):
    X, Y = grid.cell_centers()
    return 0.2 * np.cos(2.0 * np.pi * X) * np.cos(np.pi * Y) + mean_offset


def spinodal_state(grid):
    return SimState(
        t=0.0,
        step=0,
        phi=spinodal_phi0(grid),
        theta=grid.zeros(),
        vel=MacVelocity(grid),
    )


def smooth_flow_state(grid):
    """Smooth state with all three fields active (order-of-accuracy fixture)."""
    import numpy as np

    from nlchb.solver import project

    X, Y = grid.cell_centers()
    phi = 0.2 * np.cos(2.0 * np.pi * X) * np.cos(np.pi * Y)
    theta = 0.1 * np.cos(np.pi * X)
    vel = MacVelocity(grid)
    amp = 0.05
    xf = grid.x_faces()[:, None]
    yc = ((np.arange(grid.ny) + 0.5) * grid.dy)[None, :]
    vel.u[:, :] = amp * np.sin(np.pi * xf) ** 2 * 2.0 * np.pi * np.sin(np.pi * yc) * np.cos(np.pi * yc)
    xc = ((np.arange(grid.nx) + 0.5) * grid.dx)[:, None]
    yf = grid.y_faces()[None, :]
    vel.v[:, :] = -amp * 2.0 * np.pi * np.sin(np.pi * xc) * np.cos(np.pi * xc) * np.sin(np.pi * yf) ** 2
    vel.enforce_boundary()
    return SimState(t=0.0, step=0, phi=phi, theta=theta, vel=project(grid, vel))


@pytest.fixture(scope="session")
def grid64():
    return make_grid(64, 64, 1.0, 1.0)


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, 32, 1.0, 1.0)
