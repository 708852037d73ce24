"""First-order IMEX time integration of the coupled phase-field/heat/flow system.

One step advances phi -> theta -> velocity, each consuming the freshest
available fields:

  * phi: stabilized IMEX update. The chemical potential is frozen at the old
    state and augmented with S (phi^{n+1} - phi^n); in local mode the -Delta
    part of mu is taken implicitly as well (biharmonic symbol, diagonal in the
    cosine basis). Advection uses the conservative flux form, so the discrete
    mean of phi is conserved exactly when the carrier is discretely
    divergence-free.
  * theta: implicit diffusion for the Caginalp balance of h = theta - l_h phi,
    conservative advection of h, explicit g.u and source.
  * velocity: explicit momentum advection in the energy-conserving flux form
    (midpoint interpolations on the staggered grid), implicit constant-
    coefficient viscosity nu_bar (sine-basis solves respecting no-slip),
    explicit variable-viscosity remainder, explicit capillary and buoyancy
    forces, then projection onto the discretely divergence-free space through
    a Neumann pressure Poisson solve.

Scalars live in the cosine basis of the Neumann Laplacian; the velocity
deliberately uses the staggered-grid projection method instead of a solenoidal
eigenbasis (no closed form on a no-slip box), which is the one structural
liberty taken with the continuous formulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as _fft

from .energy import (
    EnergyLedger,
    dissipation,
    e_local,
    e_nl,
    energy_budget_residual,
    total_energy,
    work_terms,
)
from .grid import (
    Grid,
    MacVelocity,
    centers_to_xfaces,
    centers_to_yfaces,
    dct2_inverse,
    dct2_transform,
    helmholtz_solve,
    laplacian_neumann,
)
from .kernel import KernelGrid, calibrate_mollifier, compute_a, sample_kernel
from .physics import (
    MaterialParams,
    PotentialParams,
    buoyancy,
    mu_local,
    mu_nonlocal,
    viscosity,
)

__all__ = [
    "BlowUpError",
    "SimState",
    "SolverConfig",
    "Model",
    "Forcing",
    "step_ch",
    "step_heat",
    "step_ns",
    "project",
    "advance",
    "suggest_dt",
    "run_to",
]

SUGGEST_DT_CAP = 1.0


class BlowUpError(RuntimeError):
    """Raised when a step produces non-finite values; carries the last state."""

    def __init__(self, message: str, state: "SimState"):
        super().__init__(message)
        self.state = state


@dataclass
class SimState:
    """Time-stepped solution triple plus the last chemical potential."""

    t: float
    step: int
    phi: np.ndarray
    theta: np.ndarray
    vel: MacVelocity
    mu: np.ndarray | None = None

    def copy(self) -> "SimState":
        return SimState(
            t=self.t,
            step=self.step,
            phi=self.phi.copy(),
            theta=self.theta.copy(),
            vel=self.vel.copy(),
            mu=None if self.mu is None else self.mu.copy(),
        )

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.phi))
            and np.all(np.isfinite(self.theta))
            and self.vel.is_finite()
        )


@dataclass(frozen=True)
class SolverConfig:
    """Step-size, horizon, mode, and stabilization controls."""

    dt: float
    t_end: float
    mode: str = "nonlocal"
    epsilon: float = 0.1
    gamma: float = 0.5
    shape_id: str = "bump"
    stabilization: float | None = None  # None -> default rule
    safety: float = 0.4
    cadence: int = 50
    check_invariants: bool = False

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.mode not in ("nonlocal", "local"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.stabilization is not None and self.stabilization < 0.0:
            raise ValueError("stabilization must be nonnegative")
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("safety factor must lie in (0, 1]")


@dataclass
class Model:
    """Grid, physics, kernel data, and the resolved stabilization constant."""

    grid: Grid
    potential: PotentialParams
    material: MaterialParams
    mode: str
    kernel: KernelGrid | None = None
    a: np.ndarray | None = None
    stabilization: float = 0.0

    @classmethod
    def build(
        cls,
        grid: Grid,
        potential: PotentialParams,
        material: MaterialParams,
        config: SolverConfig,
    ) -> "Model":
        kernel = None
        a = None
        if config.mode == "nonlocal":
            mollifier = calibrate_mollifier(config.gamma, d=2, shape_id=config.shape_id)
            kernel = sample_kernel(mollifier, config.epsilon, grid)
            a = compute_a(kernel)
        S = config.stabilization
        if S is None:
            S = default_stabilization(potential, a)
        return cls(
            grid=grid,
            potential=potential,
            material=material,
            mode=config.mode,
            kernel=kernel,
            a=a,
            stabilization=float(S),
        )

    def chemical_potential(self, phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if self.mode == "nonlocal":
            return mu_nonlocal(phi, theta, self.kernel, self.a, self.potential, self.material)
        return mu_local(self.grid, phi, theta, self.potential, self.material)

    def interface_energy(self, phi: np.ndarray) -> float:
        if self.mode == "nonlocal":
            return e_nl(self.kernel, self.a, phi)
        return e_local(self.grid, phi)

    def total_energy(self, state: "SimState") -> float:
        return total_energy(
            self.grid,
            state.phi,
            state.theta,
            state.vel,
            self.mode,
            self.potential,
            self.material,
            self.kernel,
            self.a,
        )


def default_stabilization(potential: PotentialParams, a: np.ndarray | None) -> float:
    """S = (|a|_inf + eta_f max_{|s|<=2} |F''|) / 2 + 1.

    The sum (not the max) of the two stiffness scales is required: the explicit
    part of the phi update carries a(x) and eta_f F'' together, and 2S must
    dominate their sum for the large-step linear stability of the split.
    """
    s = np.linspace(-2.0, 2.0, 801)
    curvature = potential.eta_f * float(np.abs(potential.ddf(s)).max())
    a_inf = float(np.abs(a).max()) if a is not None else 0.0
    return (a_inf + curvature) / 2.0 + 1.0


@dataclass(frozen=True)
class Forcing:
    """External momentum force q (faces) and heat source z (centers).

    Presets: zero, constant, and a single standing cosine mode; file-backed
    fields are wired up by the i/o layer and arrive here as constant arrays.
    """

    q_fn: object = None  # callable (grid, t) -> (qx, qy) or None
    z_fn: object = None  # callable (grid, t) -> z or None

    @classmethod
    def none(cls) -> "Forcing":
        return cls()

    @classmethod
    def constant(cls, qx: float = 0.0, qy: float = 0.0, z: float = 0.0) -> "Forcing":
        def q_fn(grid: Grid, t: float):
            return (
                np.full((grid.nx + 1, grid.ny), qx),
                np.full((grid.nx, grid.ny + 1), qy),
            )

        def z_fn(grid: Grid, t: float):
            return np.full(grid.shape, z)

        return cls(q_fn=q_fn if (qx or qy) else None, z_fn=z_fn if z else None)

    @classmethod
    def single_mode(cls, amplitude: float, kx: int = 1, ky: int = 0, target: str = "z") -> "Forcing":
        def z_fn(grid: Grid, t: float):
            X, Y = grid.cell_centers()
            return amplitude * np.cos(np.pi * kx * X / grid.Lx) * np.cos(np.pi * ky * Y / grid.Ly)

        def q_fn(grid: Grid, t: float):
            xf = grid.x_faces()[:, None]
            yc = ((np.arange(grid.ny) + 0.5) * grid.dy)[None, :]
            qx = amplitude * np.sin(np.pi * kx * xf / grid.Lx) * np.cos(np.pi * ky * yc / grid.Ly)
            return qx, np.zeros((grid.nx, grid.ny + 1))

        if target == "z":
            return cls(z_fn=z_fn)
        return cls(q_fn=q_fn)

    @classmethod
    def from_fields(
        cls,
        q: tuple[np.ndarray, np.ndarray] | None = None,
        z: np.ndarray | None = None,
    ) -> "Forcing":
        q_fn = (lambda grid, t: q) if q is not None else None
        z_fn = (lambda grid, t: z) if z is not None else None
        return cls(q_fn=q_fn, z_fn=z_fn)

    def q_at(self, grid: Grid, t: float):
        return None if self.q_fn is None else self.q_fn(grid, t)

    def z_at(self, grid: Grid, t: float):
        return None if self.z_fn is None else self.z_fn(grid, t)


def advect_scalar(grid: Grid, vel: MacVelocity, c: np.ndarray) -> np.ndarray:
    """div(u c) in conservative flux form; discrete mass change is exactly zero."""
    fx = vel.u * centers_to_xfaces(grid, c)
    fy = vel.v * centers_to_yfaces(grid, c)
    return np.diff(fx, axis=0) / grid.dx + np.diff(fy, axis=1) / grid.dy


def step_ch(
    model: Model, state: SimState, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """One stabilized IMEX update of phi; returns (phi_next, mu_half)."""
    g = model.grid
    S = model.stabilization
    phi, theta = state.phi, state.theta
    adv = advect_scalar(g, state.vel, phi) if state.vel.max_speed() > 0.0 else 0.0

    if model.mode == "nonlocal":
        mu_n = model.chemical_potential(phi, theta)
        rhs = phi / dt - adv + laplacian_neumann(g, mu_n - S * phi)
        phi_next = helmholtz_solve(g, 1.0 / dt, S, rhs)
        mu_half = mu_n + S * (phi_next - phi)
    else:
        explicit = model.potential.eta_f * model.potential.df(phi) + model.material.l_c * theta
        rhs = phi / dt - adv + laplacian_neumann(g, explicit - S * phi)
        lam = g.laplacian_eigenvalues()
        coeffs = dct2_transform(g, rhs) / (1.0 / dt + S * lam + lam**2)
        phi_next = dct2_inverse(g, coeffs)
        mu_half = -laplacian_neumann(g, phi_next) + explicit + S * (phi_next - phi)

    if not np.all(np.isfinite(phi_next)):
        raise BlowUpError("phi step produced non-finite values", state)
    return phi_next, mu_half


def step_heat(
    model: Model,
    state: SimState,
    phi_next: np.ndarray,
    dt: float,
    z: np.ndarray | None,
) -> np.ndarray:
    """Implicit-diffusion update of theta via the latent balance h = theta - l_h phi."""
    g = model.grid
    mat = model.material
    h = state.theta - mat.l_h * state.phi
    adv = advect_scalar(g, state.vel, h) if state.vel.max_speed() > 0.0 else 0.0

    gx, gy = mat.g
    gu = 0.0
    if gx != 0.0 or gy != 0.0:
        u_c = 0.5 * (state.vel.u[1:, :] + state.vel.u[:-1, :])
        v_c = 0.5 * (state.vel.v[:, 1:] + state.vel.v[:, :-1])
        gu = gx * u_c + gy * v_c

    rhs = h / dt - adv + gu + (z if z is not None else 0.0) + mat.l_h * phi_next / dt
    theta_next = helmholtz_solve(g, 1.0 / dt, mat.kappa, rhs)
    if not np.all(np.isfinite(theta_next)):
        raise BlowUpError("theta step produced non-finite values", state)
    return theta_next


def _sine_eigs(n: int, d: float, count: int, offset: int) -> np.ndarray:
    k = np.arange(count) + offset
    return (2.0 / d**2) * (1.0 - np.cos(np.pi * k / n))


def _implicit_u_solve(grid: Grid, alpha: float, nu: float, rhs_int: np.ndarray) -> np.ndarray:
    """(alpha - nu Delta) on interior x-faces: sine-I in x, sine-II in y."""
    lamx = _sine_eigs(grid.nx, grid.dx, grid.nx - 1, 1)
    lamy = _sine_eigs(grid.ny, grid.dy, grid.ny, 1)
    chat = _fft.dst(_fft.dst(rhs_int, type=1, axis=0), type=2, axis=1)
    chat /= alpha + nu * (lamx[:, None] + lamy[None, :])
    return _fft.idst(_fft.idst(chat, type=2, axis=1), type=1, axis=0)


def _implicit_v_solve(grid: Grid, alpha: float, nu: float, rhs_int: np.ndarray) -> np.ndarray:
    lamx = _sine_eigs(grid.nx, grid.dx, grid.nx, 1)
    lamy = _sine_eigs(grid.ny, grid.dy, grid.ny - 1, 1)
    chat = _fft.dst(_fft.dst(rhs_int, type=2, axis=0), type=1, axis=1)
    chat /= alpha + nu * (lamx[:, None] + lamy[None, :])
    return _fft.idst(_fft.idst(chat, type=2, axis=0), type=1, axis=1)


def momentum_advection(grid: Grid, vel: MacVelocity) -> tuple[np.ndarray, np.ndarray]:
    """Flux-form self-advection with midpoint interpolation on interior faces.

    With a discretely divergence-free carrier this form is skew-symmetric:
    <adv(u), u> = 0 up to rounding.
    """
    u, v = vel.u, vel.v
    dx, dy = grid.dx, grid.dy

    # u-momentum: east/west fluxes at cell centers, north/south at corners
    uc = 0.5 * (u[:-1, :] + u[1:, :])               # (nx, ny) carrier and transported
    f_xx = uc * uc
    vcor = 0.5 * (v[:-1, :] + v[1:, :])             # (nx-1, ny+1) carrier at interior corners
    ucor = np.zeros((grid.nx - 1, grid.ny + 1))     # transported u at corners; walls stay 0
    ucor[:, 1:-1] = 0.5 * (u[1:-1, 1:] + u[1:-1, :-1])
    f_xy = vcor * ucor
    adv_u = np.diff(f_xx, axis=0) / dx + np.diff(f_xy, axis=1) / dy  # (nx-1, ny)

    # v-momentum
    vc = 0.5 * (v[:, :-1] + v[:, 1:])               # (nx, ny)
    f_yy = vc * vc
    ucor_v = 0.5 * (u[:, 1:] + u[:, :-1])           # (nx+1, ny-1) carrier at interior corners
    vcor_v = np.zeros((grid.nx + 1, grid.ny - 1))   # transported v at corners; walls stay 0
    vcor_v[1:-1, :] = 0.5 * (v[1:, 1:-1] + v[:-1, 1:-1])
    f_yx = ucor_v * vcor_v
    adv_v = np.diff(f_yy, axis=1) / dy + np.diff(f_yx, axis=0) / dx  # (nx, ny-1)

    return adv_u, adv_v


def viscous_remainder(
    grid: Grid, vel: MacVelocity, nu_centers: np.ndarray, nu_bar: float
) -> tuple[np.ndarray, np.ndarray]:
    """div(2 (nu - nu_bar) D u) on interior faces (explicit split part)."""
    from .energy import _nu_at_corners, mac_deformation

    dxx, dyy, dxy = mac_deformation(grid, vel)
    dnu_c = nu_centers - nu_bar
    dnu_cor = _nu_at_corners(grid, nu_centers) - nu_bar

    txx = 2.0 * dnu_c * dxx
    tyy = 2.0 * dnu_c * dyy
    txy = 2.0 * dnu_cor * dxy

    rem_u = np.diff(txx, axis=0) / grid.dx + np.diff(txy[1:-1, :], axis=1) / grid.dy
    rem_v = np.diff(tyy, axis=1) / grid.dy + np.diff(txy[:, 1:-1], axis=0) / grid.dx
    return rem_u, rem_v


def korteweg_force(
    grid: Grid,
    material: MaterialParams,
    mu_half: np.ndarray,
    theta: np.ndarray,
    phi: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """K (mu - l_c theta) grad phi, face-interpolated (zero at wall faces)."""
    scal = material.K_cap * (mu_half - material.l_c * theta)
    fx = np.zeros((grid.nx + 1, grid.ny))
    fx[1:-1, :] = centers_to_xfaces(grid, scal)[1:-1, :] * np.diff(phi, axis=0) / grid.dx
    fy = np.zeros((grid.nx, grid.ny + 1))
    fy[:, 1:-1] = centers_to_yfaces(grid, scal)[:, 1:-1] * np.diff(phi, axis=1) / grid.dy
    return fx, fy


def project(grid: Grid, vel: MacVelocity) -> MacVelocity:
    """Remove the discrete gradient part: u - grad psi with Delta_N psi = div u."""
    div = vel.divergence()
    coeffs = dct2_transform(grid, div)
    lam = grid.laplacian_eigenvalues()
    lam_safe = lam.copy()
    lam_safe[0, 0] = 1.0
    coeffs = -coeffs / lam_safe
    coeffs[0, 0] = 0.0
    psi = dct2_inverse(grid, coeffs)
    out = vel.copy()
    out.u[1:-1, :] -= np.diff(psi, axis=0) / grid.dx
    out.v[:, 1:-1] -= np.diff(psi, axis=1) / grid.dy
    return out


def step_ns(
    model: Model,
    state: SimState,
    phi_next: np.ndarray,
    theta_next: np.ndarray,
    mu_half: np.ndarray,
    dt: float,
    q: tuple[np.ndarray, np.ndarray] | None,
) -> MacVelocity:
    """Explicit forces + implicit mean viscosity + projection.

    The assembled right-hand side is projected before the viscous solve (and
    the result projected again after it), so purely gradient forces such as a
    uniform buoyancy on a constant state leave a resting fluid exactly at rest.
    """
    g = model.grid
    mat = model.material
    vel = state.vel

    rhs = MacVelocity(g)
    rhs.u[1:-1, :] = vel.u[1:-1, :] / dt
    rhs.v[:, 1:-1] = vel.v[:, 1:-1] / dt

    if vel.max_speed() > 0.0:
        adv_u, adv_v = momentum_advection(g, vel)
        rhs.u[1:-1, :] -= adv_u
        rhs.v[:, 1:-1] -= adv_v
        if mat.nu_max > mat.nu_min:
            rem_u, rem_v = viscous_remainder(g, vel, viscosity(mat, state.phi), mat.nu_bar)
            rhs.u[1:-1, :] += rem_u
            rhs.v[:, 1:-1] += rem_v

    kx, ky = korteweg_force(g, mat, mu_half, theta_next, phi_next)
    bx, by = buoyancy(g, mat, phi_next, theta_next)
    rhs.u[1:-1, :] += kx[1:-1, :] + bx[1:-1, :]
    rhs.v[:, 1:-1] += ky[:, 1:-1] + by[:, 1:-1]
    if q is not None:
        rhs.u[1:-1, :] += q[0][1:-1, :]
        rhs.v[:, 1:-1] += q[1][:, 1:-1]

    rhs = project(g, rhs)
    out = MacVelocity(g)
    out.u[1:-1, :] = _implicit_u_solve(g, 1.0 / dt, mat.nu_bar, rhs.u[1:-1, :])
    out.v[:, 1:-1] = _implicit_v_solve(g, 1.0 / dt, mat.nu_bar, rhs.v[:, 1:-1])
    out = project(g, out)
    if not out.is_finite():
        raise BlowUpError("velocity step produced non-finite values", state)
    return out


def suggest_dt(model: Model, state: SimState, config: SolverConfig) -> float:
    """Safety-scaled minimum of the advective, explicit-viscous, and kernel bounds."""
    g = model.grid
    candidates = [SUGGEST_DT_CAP]

    speed_x = float(np.max(np.abs(state.vel.u))) / g.dx
    speed_y = float(np.max(np.abs(state.vel.v))) / g.dy
    if speed_x + speed_y > 0.0:
        candidates.append(1.0 / (speed_x + speed_y))

    dnu = 0.5 * (model.material.nu_max - model.material.nu_min)
    if dnu > 0.0:
        candidates.append(min(g.dx, g.dy) ** 2 / (4.0 * dnu))

    if model.mode == "nonlocal" and model.a is not None:
        candidates.append(1.0 / float(np.abs(model.a).max()))

    return config.safety * min(candidates)


def _ledger_row(
    model: Model,
    state_next: SimState,
    e_prev: float,
    dt: float,
    forcing: Forcing,
) -> tuple[dict, float]:
    g = model.grid
    mat = model.material
    mu_next = state_next.mu
    e_next = model.total_energy(state_next)
    diss = dissipation(g, state_next.phi, mu_next, state_next.vel, state_next.theta, mat)
    works = work_terms(
        g,
        state_next.phi,
        state_next.theta,
        state_next.vel,
        mat,
        forcing.q_at(g, state_next.t),
        forcing.z_at(g, state_next.t),
    )
    work_sum = sum(works.values())
    resid = energy_budget_residual(e_prev, e_next, diss, work_sum, dt)
    row = {
        "t": state_next.t,
        "E_total": e_next,
        "E_interface": model.interface_energy(state_next.phi),
        "F_integral": model.potential.eta_f
        * float(np.sum(model.potential.f(state_next.phi)) * g.cell_area),
        "kinetic": float((np.sum(state_next.vel.u**2) + np.sum(state_next.vel.v**2)) * g.cell_area)
        / (2.0 * mat.K_cap * mat.l_c),
        "thermal": float(np.sum(state_next.theta**2) * g.cell_area) / (2.0 * mat.l_h),
        "dissipation": diss,
        "residual": resid,
        "mass_phi": float(state_next.phi.sum() * g.cell_area),
        "mean_h": float(np.mean(state_next.theta - mat.l_h * state_next.phi)),
        "max_div_u": float(np.abs(state_next.vel.divergence()).max()),
        "max_u": state_next.vel.max_speed(),
        "dt_used": dt,
        **works,
    }
    return row, e_next


def advance(
    model: Model,
    state: SimState,
    dt: float,
    forcing: Forcing | None = None,
    ledger: EnergyLedger | None = None,
    e_prev: float | None = None,
    check_invariants: bool = False,
) -> tuple[SimState, float | None]:
    """One full step (phi -> theta -> velocity); returns (state, energy) where
    energy is the ledger-consistent total energy of the new state (None when
    no ledger is kept)."""
    forcing = forcing or Forcing.none()
    g = model.grid
    t_next = state.t + dt

    try:
        phi_next, mu_half = step_ch(model, state, dt)
        theta_next = step_heat(model, state, phi_next, dt, forcing.z_at(g, state.t))
        vel_next = step_ns(model, state, phi_next, theta_next, mu_half, dt, forcing.q_at(g, state.t))
    except ValueError as exc:
        # overflow inside a sub-step surfaces as a finiteness error; report it
        # as a blow-up carrying the last good state
        if "non-finite" in str(exc):
            raise BlowUpError(f"step diverged: {exc}", state) from exc
        raise

    state_next = SimState(t=t_next, step=state.step + 1, phi=phi_next, theta=theta_next, vel=vel_next)
    if not state_next.is_finite():
        raise BlowUpError("state became non-finite", state)

    if check_invariants:
        drift = abs(float(phi_next.mean()) - float(state.phi.mean()))
        if drift > 1e-10:
            raise RuntimeError(f"mass conservation violated: drift {drift:.3e}")
        max_div = float(np.abs(vel_next.divergence()).max())
        if max_div > 1e-10:
            raise RuntimeError(f"incompressibility violated: max |div u| = {max_div:.3e}")

    energy_next: float | None = None
    if ledger is not None:
        try:
            state_next.mu = model.chemical_potential(phi_next, theta_next)
            if e_prev is None:
                e_prev = model.total_energy(state)
            row, energy_next = _ledger_row(model, state_next, e_prev, dt, forcing)
            ledger.append(row)
        except ValueError as exc:
            if "non-finite" in str(exc):
                raise BlowUpError(f"step diverged: {exc}", state) from exc
            raise
    return state_next, energy_next


def run_to(
    model: Model,
    state: SimState,
    config: SolverConfig,
    forcing: Forcing | None = None,
    ledger: EnergyLedger | None = None,
    on_output=None,
) -> SimState:
    """Advance to t_end with the configured fixed dt; cadence callback optional."""
    forcing = forcing or Forcing.none()
    e_prev = model.total_energy(state) if ledger is not None else None
    n_steps = int(round((config.t_end - state.t) / config.dt))
    for _ in range(max(n_steps, 0)):
        state, e_prev = advance(
            model,
            state,
            config.dt,
            forcing,
            ledger,
            e_prev,
            check_invariants=config.check_invariants,
        )
        if on_output is not None and state.step % config.cadence == 0:
            on_output(state)
    return state
