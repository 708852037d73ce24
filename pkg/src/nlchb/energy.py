"""Interface/total energies, dissipation, work terms, and per-step budget residual.

Conventions (kept literal to the model displays):
  2 E_nonlocal = (1/l_c) { Q(phi) + 2 int eta_f F(phi) } + (1/(K l_c)) |u|^2 + (1/l_h) |theta|^2
  2 E_local    = (1/l_c) { (1/2)|grad phi|^2 + int eta_f F(phi) } + same u, theta terms
with Q(phi) = (a phi, phi) - (phi, J*phi), the double-integral difference form.
Note the factor-2 asymmetry in the F weighting between the two modes is part
of the displayed definitions and is preserved as such.

The budget residual applies the work terms with the prefactors 1/(K l_c) and
1/l_h that arise when the three tested equations are combined; the budget does
not close without them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    Grid,
    MacVelocity,
    field_integral,
    gradient_cc,
    h1_seminorm,
)
from .kernel import KernelGrid, convolve
from .physics import MaterialParams, PotentialParams, buoyancy, viscosity

__all__ = [
    "LEDGER_COLUMNS",
    "EnergyLedger",
    "e_nl",
    "e_local",
    "total_energy",
    "dissipation",
    "work_terms",
    "energy_budget_residual",
    "mac_l2_sq",
    "mac_deformation",
    "deformation_norm_sq",
]

LEDGER_COLUMNS = (
    "t",
    "E_total",
    "E_interface",
    "F_integral",
    "kinetic",
    "thermal",
    "dissipation",
    "work_q",
    "work_buoy",
    "work_z",
    "work_gu",
    "residual",
    "mass_phi",
    "mean_h",
    "max_div_u",
    "max_u",
    "dt_used",
)


@dataclass
class EnergyLedger:
    """Append-only per-step accounting; one row per completed step."""

    rows: list[dict] = field(default_factory=list)

    def append(self, row: dict) -> None:
        missing = set(LEDGER_COLUMNS) - set(row)
        if missing:
            raise ValueError(f"ledger row missing columns: {sorted(missing)}")
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise ValueError("ledger rows must be strictly increasing in t")
        if not all(np.isfinite(row[c]) for c in LEDGER_COLUMNS):
            raise ValueError("ledger row contains non-finite entries")
        self.rows.append({c: float(row[c]) for c in LEDGER_COLUMNS})

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def csv_lines(self) -> list[str]:
        lines = [",".join(LEDGER_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(repr(r[c]) for c in LEDGER_COLUMNS))
        return lines


def e_nl(kernel: KernelGrid, a: np.ndarray, phi: np.ndarray) -> float:
    """Nonlocal interface energy (a phi, phi) - (phi, J*phi); one convolution."""
    g = kernel.grid
    return float(np.sum(a * phi * phi - phi * convolve(kernel, phi)) * g.cell_area)


def e_local(grid: Grid, phi: np.ndarray) -> float:
    """Dirichlet interface energy (1/2) int |grad phi|^2."""
    return 0.5 * h1_seminorm(grid, phi) ** 2


def mac_l2_sq(grid: Grid, vel: MacVelocity) -> float:
    """int |u|^2 with face samples (wall faces carry zero velocity)."""
    return float((np.sum(vel.u**2) + np.sum(vel.v**2)) * grid.cell_area)


def total_energy(
    grid: Grid,
    phi: np.ndarray,
    theta: np.ndarray,
    vel: MacVelocity,
    mode: str,
    potential: PotentialParams,
    material: MaterialParams,
    kernel: KernelGrid | None = None,
    a: np.ndarray | None = None,
) -> float:
    """Total energy E of the coupled state (see module docstring for the display)."""
    if mode == "nonlocal":
        if kernel is None or a is None:
            raise ValueError("nonlocal total energy requires the kernel and a(x)")
        interface = e_nl(kernel, a, phi)
        f_weight = 2.0
    elif mode == "local":
        interface = e_local(grid, phi)
        f_weight = 1.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    f_int = potential.eta_f * field_integral(grid, potential.f(phi))
    two_e = (
        (interface + f_weight * f_int) / material.l_c
        + mac_l2_sq(grid, vel) / (material.K_cap * material.l_c)
        + field_integral(grid, theta * theta) / material.l_h
    )
    return 0.5 * two_e


def mac_deformation(grid: Grid, vel: MacVelocity) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetric gradient on the MAC grid.

    Returns (Dxx, Dyy) at cell centers and Dxy at cell corners; wall values use
    the no-slip antisymmetric ghost so tangential shear at the wall is resolved.
    """
    dxx = np.diff(vel.u, axis=0) / grid.dx
    dyy = np.diff(vel.v, axis=1) / grid.dy

    # du/dy at corners (nx+1, ny+1): ghost u = -u across the wall
    u_pad = np.empty((grid.nx + 1, grid.ny + 2))
    u_pad[:, 1:-1] = vel.u
    u_pad[:, 0] = -vel.u[:, 0]
    u_pad[:, -1] = -vel.u[:, -1]
    du_dy = np.diff(u_pad, axis=1) / grid.dy

    v_pad = np.empty((grid.nx + 2, grid.ny + 1))
    v_pad[1:-1, :] = vel.v
    v_pad[0, :] = -vel.v[0, :]
    v_pad[-1, :] = -vel.v[-1, :]
    dv_dx = np.diff(v_pad, axis=0) / grid.dx

    dxy = 0.5 * (du_dy + dv_dx)
    return dxx, dyy, dxy


def _corner_weights(grid: Grid) -> np.ndarray:
    wx = np.ones(grid.nx + 1)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(grid.ny + 1)
    wy[0] = wy[-1] = 0.5
    return wx[:, None] * wy[None, :] * grid.cell_area


def _nu_at_corners(grid: Grid, nu_centers: np.ndarray) -> np.ndarray:
    pad = np.pad(nu_centers, 1, mode="edge")
    return 0.25 * (pad[:-1, :-1] + pad[1:, :-1] + pad[:-1, 1:] + pad[1:, 1:])


def deformation_norm_sq(grid: Grid, vel: MacVelocity, nu_centers: np.ndarray) -> float:
    """int nu(phi) |D u|^2 on the staggered grid (|Du|^2 = Dxx^2 + Dyy^2 + 2 Dxy^2)."""
    dxx, dyy, dxy = mac_deformation(grid, vel)
    diag = float(np.sum(nu_centers * (dxx**2 + dyy**2)) * grid.cell_area)
    nu_c = _nu_at_corners(grid, nu_centers)
    off = float(np.sum(_corner_weights(grid) * nu_c * 2.0 * dxy**2))
    return diag + off


def dissipation(
    grid: Grid,
    phi: np.ndarray,
    mu: np.ndarray,
    vel: MacVelocity,
    theta: np.ndarray,
    material: MaterialParams,
) -> float:
    """D = (1/l_c)|grad mu|^2 + (2/(K l_c)) |sqrt(nu) D u|^2 + (kappa/l_h)|grad theta|^2."""
    gmx, gmy = gradient_cc(grid, mu)
    grad_mu_sq = float(np.sum(gmx**2 + gmy**2) * grid.cell_area)
    gtx, gty = gradient_cc(grid, theta)
    grad_th_sq = float(np.sum(gtx**2 + gty**2) * grid.cell_area)
    visc = deformation_norm_sq(grid, vel, viscosity(material, phi))
    return (
        grad_mu_sq / material.l_c
        + 2.0 * visc / (material.K_cap * material.l_c)
        + material.kappa * grad_th_sq / material.l_h
    )


def work_terms(
    grid: Grid,
    phi: np.ndarray,
    theta: np.ndarray,
    vel: MacVelocity,
    material: MaterialParams,
    q_faces: tuple[np.ndarray, np.ndarray] | None,
    z_centers: np.ndarray | None,
) -> dict[str, float]:
    """Forcing power entering the energy budget, with the combining prefactors.

    Returns the four named contributions; each already carries 1/(K l_c) (the
    momentum pair) or 1/l_h (the heat pair).
    """
    kl = material.K_cap * material.l_c
    out = {"work_q": 0.0, "work_buoy": 0.0, "work_z": 0.0, "work_gu": 0.0}

    if q_faces is not None:
        qx, qy = q_faces
        out["work_q"] = float((np.sum(qx * vel.u) + np.sum(qy * vel.v)) * grid.cell_area) / kl

    bx, by = buoyancy(grid, material, phi, theta)
    out["work_buoy"] = float((np.sum(bx * vel.u) + np.sum(by * vel.v)) * grid.cell_area) / kl

    if z_centers is not None:
        out["work_z"] = float(np.sum(z_centers * theta) * grid.cell_area) / material.l_h

    gx, gy = material.g
    if gx != 0.0 or gy != 0.0:
        u_c = 0.5 * (vel.u[1:, :] + vel.u[:-1, :])
        v_c = 0.5 * (vel.v[:, 1:] + vel.v[:, :-1])
        gu = gx * u_c + gy * v_c
        out["work_gu"] = float(np.sum(gu * theta) * grid.cell_area) / material.l_h
    return out


def energy_budget_residual(
    e_prev: float, e_next: float, dissipation_next: float, work_next: float, dt: float
) -> float:
    """Discrete defect of the energy inequality over one step.

    r = E(next) - E(prev) + dt D(next) - dt W(next); r <= tol is the discrete
    analogue of the continuous inequality (implicit-side quadrature in time).
    """
    return e_next - e_prev + dt * (dissipation_next - work_next)
