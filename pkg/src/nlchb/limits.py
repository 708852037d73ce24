"""Kernel-limit studies: energy convergence, weak operator limit, and full-solution sweeps.

Conventions: the sampled kernel family is normalized so that its lattice
quadratic form tends to the Dirichlet energy (1/2) int |grad phi|^2 as the
interaction length shrinks, and the bilinear operator form tends to
(1/2) int grad phi1 . grad phi2 accordingly. Solution sweeps compare nonlocal
runs against a local-mode reference; the end-time energy gap is evaluated
like-for-like through the local functional for both states, since the
nonlocal and local total-energy displays weight the bulk term differently.

Convergence is reported as error and ratio tables, never as fitted rates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyLedger, e_local, e_nl, total_energy
from .grid import Grid, gradient_cc
from .kernel import calibrate_mollifier, compute_a, convolve, sample_kernel
from .physics import MaterialParams, PotentialParams
from .solver import BlowUpError, Model, SimState, SolverConfig, advance, suggest_dt

__all__ = [
    "SweepReport",
    "gamma_sweep",
    "weak_operator_check",
    "solution_sweep",
]


@dataclass
class SweepReport:
    """Per-epsilon table of scalars plus metadata; epsilons strictly decreasing."""

    kind: str
    eps: list[float]
    columns: dict[str, list[float]]
    target: float | None = None
    metadata: dict = field(default_factory=dict)
    valid: list[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not all(a > b for a, b in zip(self.eps, self.eps[1:])):
            raise ValueError("eps values must be strictly decreasing")
        if not self.valid:
            self.valid = [True] * len(self.eps)

    def errors(self, column: str) -> list[float]:
        if self.target is None:
            raise ValueError("report has no scalar target")
        return [abs(v - self.target) for v in self.columns[column]]

    def ratios(self, column: str) -> list[float]:
        """Adjacent-epsilon ratios of |value - target| (valid rows only)."""
        errs = self.errors(column)
        out = []
        for i in range(len(errs) - 1):
            if self.valid[i] and self.valid[i + 1] and errs[i + 1] != 0.0:
                out.append(errs[i] / errs[i + 1])
            else:
                out.append(float("nan"))
        return out

    def csv_lines(self) -> list[str]:
        lines = [f"# kind = {self.kind}"]
        for k in sorted(self.metadata):
            lines.append(f"# {k} = {self.metadata[k]}")
        if self.target is not None:
            lines.append(f"# target = {self.target!r}")
        names = sorted(self.columns)
        lines.append(",".join(["eps"] + names + ["valid"]))
        for i, eps in enumerate(self.eps):
            row = [repr(eps)] + [repr(self.columns[n][i]) for n in names]
            row.append("1" if self.valid[i] else "0")
            lines.append(",".join(row))
        return lines


def _check_eps_list(eps_list) -> list[float]:
    eps = [float(e) for e in eps_list]
    if not eps or not all(a > b for a, b in zip(eps, eps[1:])):
        raise ValueError("eps list must be nonempty and strictly decreasing")
    return eps


def gamma_sweep(
    grid: Grid,
    phi_test: np.ndarray,
    eps_list,
    gamma: float,
    shape_id: str = "bump",
) -> SweepReport:
    """Interface-energy convergence table: E_nl^eps(phi) against E_l(phi)."""
    eps = _check_eps_list(eps_list)
    mollifier = calibrate_mollifier(gamma, d=2, shape_id=shape_id)
    target = e_local(grid, phi_test)
    values, resolved = [], []
    for e in eps:
        kernel = sample_kernel(mollifier, e, grid)
        a = compute_a(kernel)
        values.append(e_nl(kernel, a, phi_test))
        resolved.append(not kernel.under_resolved)
    return SweepReport(
        kind="gamma_sweep",
        eps=eps,
        columns={"e_nl": values, "abs_error": [abs(v - target) for v in values]},
        target=target,
        metadata={"gamma": gamma, "shape": shape_id, "nx": grid.nx, "ny": grid.ny},
        valid=resolved,
    )


def weak_operator_check(
    grid: Grid,
    phi1: np.ndarray,
    phi2: np.ndarray,
    eps_list,
    gamma: float,
    shape_id: str = "bump",
) -> SweepReport:
    """Bilinear operator form (a phi1 - J*phi1, phi2) against its gradient limit.

    The limit of the implemented form is (1/2) int grad phi1 . grad phi2.
    """
    eps = _check_eps_list(eps_list)
    mollifier = calibrate_mollifier(gamma, d=2, shape_id=shape_id)
    g1x, g1y = gradient_cc(grid, phi1)
    g2x, g2y = gradient_cc(grid, phi2)
    target = 0.5 * float(np.sum(g1x * g2x + g1y * g2y) * grid.cell_area)
    forms, sym_defects, resolved = [], [], []
    for e in eps:
        kernel = sample_kernel(mollifier, e, grid)
        a = compute_a(kernel)
        f12 = float(np.sum((a * phi1 - convolve(kernel, phi1)) * phi2) * grid.cell_area)
        f21 = float(np.sum((a * phi2 - convolve(kernel, phi2)) * phi1) * grid.cell_area)
        forms.append(f12)
        sym_defects.append(abs(f12 - f21))
        resolved.append(not kernel.under_resolved)
    return SweepReport(
        kind="weak_operator",
        eps=eps,
        columns={
            "form": forms,
            "abs_error": [abs(v - target) for v in forms],
            "symmetry_defect": sym_defects,
        },
        target=target,
        metadata={"gamma": gamma, "shape": shape_id, "nx": grid.nx, "ny": grid.ny},
        valid=resolved,
    )


def _trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@dataclass
class _RunResult:
    samples: list | None
    state: SimState | None
    ledger: EnergyLedger | None
    blew_up: bool = False


def _run_one(
    grid: Grid,
    potential: PotentialParams,
    material: MaterialParams,
    mode: str,
    eps: float,
    gamma: float,
    shape_id: str,
    state0: SimState,
    dt: float,
    n_steps: int,
    sample_every: int,
    stabilization: float | None,
    keep_ledger: bool,
) -> _RunResult:
    cfg = SolverConfig(
        dt=dt,
        t_end=n_steps * dt,
        mode=mode,
        epsilon=eps,
        gamma=gamma,
        shape_id=shape_id,
        stabilization=stabilization,
    )
    model = Model.build(grid, potential, material, cfg)
    state = state0.copy()
    ledger = EnergyLedger() if keep_ledger else None
    e_prev = model.total_energy(state) if keep_ledger else None
    samples = [(state.phi.copy(), state.theta.copy(), state.vel.u.copy(), state.vel.v.copy())]
    try:
        for k in range(n_steps):
            state, e_prev = advance(model, state, dt, ledger=ledger, e_prev=e_prev)
            if (k + 1) % sample_every == 0:
                samples.append(
                    (state.phi.copy(), state.theta.copy(), state.vel.u.copy(), state.vel.v.copy())
                )
    except BlowUpError:
        return _RunResult(samples=None, state=None, ledger=ledger, blew_up=True)
    return _RunResult(samples=samples, state=state, ledger=ledger)


def solution_sweep(
    grid: Grid,
    potential: PotentialParams,
    material: MaterialParams,
    state0: SimState,
    eps_list,
    gamma: float = 0.5,
    shape_id: str = "bump",
    t_end: float = 0.5,
    dt: float | None = None,
    stabilization: float | None = None,
    safety: float = 0.4,
    sample_count: int = 200,
    workers: int = 1,
    keep_ledgers: bool = False,
) -> SweepReport:
    """Run the nonlocal system per epsilon and a local reference; tabulate distances.

    All runs share identical initial data, dt, grid, and horizon. Reported per
    epsilon: space-time L2 distances of phi, theta, u to the reference
    (trapezoidal in time on the sampling grid), end-time L2 distances, and the
    end-time energy gap under the shared local functional. Diverged runs are
    marked invalid and excluded from ratio tables.
    """
    eps = _check_eps_list(eps_list)
    if dt is None:
        cfg0 = SolverConfig(
            dt=1.0, t_end=t_end, mode="nonlocal", epsilon=eps[-1], gamma=gamma,
            shape_id=shape_id, stabilization=stabilization, safety=safety,
        )
        model0 = Model.build(grid, potential, material, cfg0)
        dt = suggest_dt(model0, state0, cfg0)
    n_steps = max(1, int(round(t_end / dt)))
    sample_every = max(1, n_steps // max(2, sample_count))

    def run(mode: str, e: float) -> _RunResult:
        return _run_one(
            grid, potential, material, mode, e, gamma, shape_id,
            state0, dt, n_steps, sample_every, stabilization, keep_ledgers,
        )

    ref = run("local", eps[0])
    if ref.blew_up:
        raise RuntimeError("local reference run diverged; sweep aborted")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda e: run("nonlocal", e), eps))
    else:
        results = [run("nonlocal", e) for e in eps]

    e_ref_local = total_energy(
        grid, ref.state.phi, ref.state.theta, ref.state.vel, "local", potential, material
    )
    w = _trapezoid_weights(len(ref.samples), sample_every * dt)
    area = grid.cell_area

    cols: dict[str, list[float]] = {
        k: []
        for k in (
            "dist_phi",
            "dist_theta",
            "dist_u",
            "end_dist_phi",
            "end_dist_theta",
            "end_dist_u",
            "energy_gap",
        )
    }
    valid = []
    ledgers = {}
    for e, res in zip(eps, results):
        if res.blew_up:
            valid.append(False)
            for k in cols:
                cols[k].append(float("nan"))
            continue
        valid.append(True)
        dp = dth = du = 0.0
        for wi, sa, sb in zip(w, res.samples, ref.samples):
            dp += wi * float(np.sum((sa[0] - sb[0]) ** 2)) * area
            dth += wi * float(np.sum((sa[1] - sb[1]) ** 2)) * area
            du += wi * (
                float(np.sum((sa[2] - sb[2]) ** 2)) + float(np.sum((sa[3] - sb[3]) ** 2))
            ) * area
        st = res.state
        e_local_fn = total_energy(
            grid, st.phi, st.theta, st.vel, "local", potential, material
        )
        cols["dist_phi"].append(np.sqrt(dp))
        cols["dist_theta"].append(np.sqrt(dth))
        cols["dist_u"].append(np.sqrt(du))
        cols["end_dist_phi"].append(
            float(np.sqrt(np.sum((st.phi - ref.state.phi) ** 2) * area))
        )
        cols["end_dist_theta"].append(
            float(np.sqrt(np.sum((st.theta - ref.state.theta) ** 2) * area))
        )
        cols["end_dist_u"].append(
            float(
                np.sqrt(
                    (
                        np.sum((st.vel.u - ref.state.vel.u) ** 2)
                        + np.sum((st.vel.v - ref.state.vel.v) ** 2)
                    )
                    * area
                )
            )
        )
        cols["energy_gap"].append(abs(e_local_fn - e_ref_local))
        if keep_ledgers:
            ledgers[e] = res.ledger

    report = SweepReport(
        kind="solution_sweep",
        eps=eps,
        columns=cols,
        target=None,
        metadata={
            "gamma": gamma,
            "shape": shape_id,
            "nx": grid.nx,
            "ny": grid.ny,
            "dt": dt,
            "t_end": n_steps * dt,
            "n_steps": n_steps,
            "sample_every": sample_every,
            "mass_phi0": float(state0.phi.mean()),
        },
        valid=valid,
    )
    if keep_ledgers:
        report.metadata["ledgers"] = ledgers
    return report
