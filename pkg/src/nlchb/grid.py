"""Cell-centered rectangular grid, Neumann-compatible cosine transforms, and field reductions.

Scalar fields live at cell centers as (nx, ny) float64 arrays indexed [i, j]
with x first. Velocity components live on cell faces (MAC arrangement, see
`MacVelocity`). All spectral operations use the even-symmetric cosine basis,
whose modes are the exact eigenvectors of the 3-point Laplacian with
homogeneous Neumann boundary conditions realised by even ghost reflection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft

__all__ = [
    "Grid",
    "MacVelocity",
    "dct2_transform",
    "dct2_inverse",
    "laplacian_neumann",
    "helmholtz_solve",
    "gradient_cc",
    "centers_to_xfaces",
    "centers_to_yfaces",
    "field_integral",
    "field_mean",
    "l2_norm",
    "h1_seminorm",
    "field_reductions",
]

MIN_CELLS = 8


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered discretization of [0, Lx] x [0, Ly]."""

    nx: int
    ny: int
    Lx: float
    Ly: float

    def __post_init__(self) -> None:
        if self.nx < MIN_CELLS or self.ny < MIN_CELLS:
            raise ValueError(
                f"grid must have at least {MIN_CELLS} cells per direction, "
                f"got {self.nx} x {self.ny}"
            )
        if not (self.Lx > 0.0 and self.Ly > 0.0):
            raise ValueError(f"domain lengths must be positive, got {self.Lx}, {self.Ly}")

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dy(self) -> float:
        return self.Ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid (indexing='ij') of cell-center coordinates."""
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def x_faces(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.dx

    def y_faces(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.dy

    def laplacian_eigenvalues(self) -> np.ndarray:
        """Eigenvalues lambda[k, l] >= 0 of -Delta_N in the discrete cosine basis.

        These are the exact eigenvalues of the second-order 3-point stencil
        with even ghost reflection, so spectral division inverts the same
        operator the finite-difference residual checks use.
        """
        k = np.arange(self.nx)
        l = np.arange(self.ny)
        lx = (2.0 / self.dx**2) * (1.0 - np.cos(np.pi * k / self.nx))
        ly = (2.0 / self.dy**2) * (1.0 - np.cos(np.pi * l / self.ny))
        return lx[:, None] + ly[None, :]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


def make_grid(nx: int, ny: int, Lx: float, Ly: float) -> Grid:
    """Construct a validated grid (rejects undersized or non-positive input)."""
    return Grid(int(nx), int(ny), float(Lx), float(Ly))


@dataclass
class MacVelocity:
    """Staggered velocity: u on x-faces (nx+1, ny), v on y-faces (nx, ny+1).

    Normal components on the domain boundary are pinned to zero
    (no-penetration); the constructor enforces this.
    """

    grid: Grid
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    def __post_init__(self) -> None:
        nx, ny = self.grid.nx, self.grid.ny
        if self.u is None:
            self.u = np.zeros((nx + 1, ny))
        if self.v is None:
            self.v = np.zeros((nx, ny + 1))
        if self.u.shape != (nx + 1, ny) or self.v.shape != (nx, ny + 1):
            raise ValueError("MAC component shapes do not match grid")
        self.enforce_boundary()

    def enforce_boundary(self) -> None:
        self.u[0, :] = 0.0
        self.u[-1, :] = 0.0
        self.v[:, 0] = 0.0
        self.v[:, -1] = 0.0

    def copy(self) -> "MacVelocity":
        return MacVelocity(self.grid, self.u.copy(), self.v.copy())

    def divergence(self) -> np.ndarray:
        """Discrete divergence at cell centers."""
        g = self.grid
        return np.diff(self.u, axis=0) / g.dx + np.diff(self.v, axis=1) / g.dy

    def max_speed(self) -> float:
        mu = float(np.max(np.abs(self.u))) if self.u.size else 0.0
        mv = float(np.max(np.abs(self.v))) if self.v.size else 0.0
        return max(mu, mv)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")


def dct2_transform(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Forward cosine transform; coefficient (0, 0) equals nx*ny*mean(field).

    Normalization: scipy's unnormalized DCT-II divided by 4, fixed so that
    constants map to the single (0, 0) coefficient with the documented scale.
    """
    _check_finite(values)
    return _fft.dctn(values, type=2) / 4.0


def dct2_inverse(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Inverse of `dct2_transform` (exact round trip up to rounding)."""
    return _fft.idctn(coeffs * 4.0, type=2)


def laplacian_neumann(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Neumann Laplacian applied spectrally (zero-mean output by construction)."""
    coeffs = dct2_transform(grid, values)
    return dct2_inverse(grid, -grid.laplacian_eigenvalues() * coeffs)


def helmholtz_solve(grid: Grid, alpha: float, beta: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (alpha*I - beta*Delta_N) w = rhs by diagonal spectral division."""
    if alpha <= 0.0:
        raise ValueError("helmholtz_solve requires alpha > 0 (singular on constants otherwise)")
    if beta < 0.0:
        raise ValueError("helmholtz_solve requires beta >= 0")
    coeffs = dct2_transform(grid, rhs)
    return dct2_inverse(grid, coeffs / (alpha + beta * grid.laplacian_eigenvalues()))


def gradient_cc(grid: Grid, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centered gradient at cell centers with even-reflection ghost cells.

    The boundary stencil (f[1]-f[0])/(2 dx) is the centered difference with
    the ghost value f[-1] := f[0]; second order for Neumann-compatible fields.
    """
    _check_finite(values)
    px = np.empty((grid.nx + 2, grid.ny))
    px[1:-1] = values
    px[0] = values[0]
    px[-1] = values[-1]
    gx = (px[2:] - px[:-2]) / (2.0 * grid.dx)

    py = np.empty((grid.nx, grid.ny + 2))
    py[:, 1:-1] = values
    py[:, 0] = values[:, 0]
    py[:, -1] = values[:, -1]
    gy = (py[:, 2:] - py[:, :-2]) / (2.0 * grid.dy)
    return gx, gy


def centers_to_xfaces(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Interpolate a cell-centered field to x-faces (boundary faces copy the cell)."""
    out = np.empty((grid.nx + 1, grid.ny))
    out[1:-1] = 0.5 * (values[1:] + values[:-1])
    out[0] = values[0]
    out[-1] = values[-1]
    return out


def centers_to_yfaces(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Interpolate a cell-centered field to y-faces (boundary faces copy the cell)."""
    out = np.empty((grid.nx, grid.ny + 1))
    out[:, 1:-1] = 0.5 * (values[:, 1:] + values[:, :-1])
    out[:, 0] = values[:, 0]
    out[:, -1] = values[:, -1]
    return out


def field_integral(grid: Grid, values: np.ndarray) -> float:
    """Midpoint-rule integral over the domain."""
    return float(values.sum() * grid.cell_area)


def field_mean(grid: Grid, values: np.ndarray) -> float:
    return float(values.mean())


def l2_norm(grid: Grid, values: np.ndarray) -> float:
    return float(np.sqrt(np.sum(values * values) * grid.cell_area))


def h1_seminorm(grid: Grid, values: np.ndarray) -> float:
    gx, gy = gradient_cc(grid, values)
    return float(np.sqrt(np.sum(gx * gx + gy * gy) * grid.cell_area))


def field_reductions(grid: Grid, values: np.ndarray) -> dict[str, float]:
    """Integral, mean, L2 norm, and H1 seminorm of a scalar field."""
    _check_finite(values)
    return {
        "integral": field_integral(grid, values),
        "mean": field_mean(grid, values),
        "l2_norm": l2_norm(grid, values),
        "h1_seminorm": h1_seminorm(grid, values),
    }
