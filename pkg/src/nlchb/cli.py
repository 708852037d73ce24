"""Command-line entry points: run, sweep-eps, gamma-sweep, oracle, validate, resume.

Environment overrides: NLCHB_OUTPUT_DIR replaces the configured output
directory; NLCHB_THREADS sets the worker count for sweep commands (individual
runs always execute single-threaded for bit-reproducibility).

Exit codes: 0 success, 1 usage/config/check failure, 2 solver blow-up (with a
diagnostic snapshot and flushed ledger on disk).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .energy import EnergyLedger
from .kernel import (
    calibrate_mollifier,
    compute_a,
    compute_cd,
    convolve,
    convolve_direct,
    sample_kernel,
)
from .limits import gamma_sweep, solution_sweep
from .physics import validate_assumptions
from .solver import BlowUpError, Forcing, Model, SimState, advance, suggest_dt
from .snapshots import LedgerCsvWriter, read_snapshot, write_ppm, write_snapshot

ORACLE_MAX_CELLS = 32 * 32


def _load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _output_dir(config: RunConfig) -> str:
    out = os.environ.get("NLCHB_OUTPUT_DIR", config.output["directory"])
    os.makedirs(out, exist_ok=True)
    return out


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("NLCHB_THREADS", "1")))
    except ValueError:
        return 1


def _emit_outputs(config: RunConfig, outdir: str, state: SimState, dt: float) -> None:
    tag = f"{state.step:08d}"
    if config.output["write_snapshots"]:
        write_snapshot(
            os.path.join(outdir, f"snapshot_{tag}.bin"),
            state,
            config.grid,
            mode=config.mode,
            epsilon=config.epsilon,
            gamma=config.gamma,
            config_text=config.raw_text,
            dt=dt,
        )
    if config.output["write_images"]:
        write_ppm(os.path.join(outdir, f"phi_{tag}.ppm"), state.phi)
        write_ppm(os.path.join(outdir, f"theta_{tag}.ppm"), state.theta)


def _run_loop(
    config: RunConfig,
    model: Model,
    state: SimState,
    forcing: Forcing,
    dt: float,
    outdir: str,
    append_csv: bool,
) -> int:
    csv = None
    if config.output["write_csv"]:
        csv = LedgerCsvWriter(os.path.join(outdir, "ledger.csv"), append=append_csv)
    ledger = EnergyLedger()
    e_prev = model.total_energy(state)
    try:
        while state.t < config.t_end - 0.5 * dt:
            state, e_prev = advance(
                model,
                state,
                dt,
                forcing,
                ledger=ledger,
                e_prev=e_prev,
                check_invariants=config.check_invariants,
            )
            if csv is not None:
                csv.write_row(ledger.rows[-1])
                ledger.rows.clear()
            if state.step % config.cadence == 0:
                _emit_outputs(config, outdir, state, dt)
    except BlowUpError as exc:
        print(f"blow-up at t={exc.state.t:.6g} (step {exc.state.step}): {exc}", file=sys.stderr)
        write_snapshot(
            os.path.join(outdir, "blowup.bin"),
            exc.state,
            config.grid,
            mode=config.mode,
            epsilon=config.epsilon,
            gamma=config.gamma,
            config_text=config.raw_text,
            dt=dt,
        )
        if csv is not None:
            csv.close()
        return 2
    finally:
        if csv is not None:
            csv.close()

    write_snapshot(
        os.path.join(outdir, "checkpoint.bin"),
        state,
        config.grid,
        mode=config.mode,
        epsilon=config.epsilon,
        gamma=config.gamma,
        config_text=config.raw_text,
        dt=dt,
    )
    print(f"finished at t={state.t:.6g} after {state.step} steps")
    return 0


def cmd_run(config_path: str) -> int:
    config = _load_config(config_path)
    outdir = _output_dir(config)
    for w in config.warnings:
        print(f"warning: {w}", file=sys.stderr)

    model = config.build_model()
    report = validate_assumptions(model.kernel, model.a, config.potential, config.material)
    lines = report.lines()
    print("\n".join(lines))
    with open(os.path.join(outdir, "validation.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    state = config.initial_state()
    dt = config.dt
    if dt is None:
        dt = suggest_dt(model, state, config.solver_config(dt=1.0))
        print(f"auto dt = {dt:.6g}")
    _emit_outputs(config, outdir, state, dt)
    return _run_loop(config, model, state, config.forcing(), dt, outdir, append_csv=False)


def cmd_resume(checkpoint_path: str) -> int:
    state, meta = read_snapshot(checkpoint_path)
    if meta["config_text"] is None:
        print("checkpoint carries no embedded config; cannot resume", file=sys.stderr)
        return 1
    config = parse_config(
        meta["config_text"], base_dir=os.path.dirname(os.path.abspath(checkpoint_path))
    )
    outdir = _output_dir(config)
    model = config.build_model()
    dt = meta.get("dt")
    if dt is None or dt <= 0.0:
        dt = config.dt
    if dt is None:
        print("checkpoint carries no step size and config dt is auto", file=sys.stderr)
        return 1
    if state.t >= config.t_end - 0.5 * dt:
        print("checkpoint already at or beyond t_end; nothing to do")
        return 0
    has_csv = os.path.exists(os.path.join(outdir, "ledger.csv"))
    return _run_loop(config, model, state, config.forcing(), dt, outdir, append_csv=has_csv)


def cmd_validate(config_path: str) -> int:
    config = _load_config(config_path)
    model = config.build_model()
    report = validate_assumptions(model.kernel, model.a, config.potential, config.material)
    print("\n".join(report.lines()))
    for w in config.warnings:
        print(f"warning: {w}")
    return 0


def cmd_gamma_sweep(config_path: str, eps_list: list[float]) -> int:
    config = _load_config(config_path)
    outdir = _output_dir(config)
    state = config.initial_state()
    report = gamma_sweep(config.grid, state.phi, eps_list, config.gamma, config.shape_id)
    path = os.path.join(outdir, "gamma_sweep.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.csv_lines()) + "\n")
    print(f"target (local energy) = {report.target:.8f}")
    for eps, val, err in zip(report.eps, report.columns["e_nl"], report.columns["abs_error"]):
        print(f"  eps={eps:<8g} e_nl={val:.8f} |error|={err:.3e}")
    print(f"wrote {path}")
    return 0


def cmd_sweep_eps(config_path: str, eps_list: list[float]) -> int:
    config = _load_config(config_path)
    outdir = _output_dir(config)
    state = config.initial_state()
    report = solution_sweep(
        config.grid,
        config.potential,
        config.material,
        state,
        eps_list,
        gamma=config.gamma,
        shape_id=config.shape_id,
        t_end=config.t_end,
        dt=config.dt,
        stabilization=config.stabilization,
        safety=config.safety,
        workers=_workers(),
        keep_ledgers=True,
    )
    ledgers = report.metadata.pop("ledgers", {})
    for eps, ledger in ledgers.items():
        subdir = os.path.join(outdir, f"eps_{eps:g}")
        os.makedirs(subdir, exist_ok=True)
        with open(os.path.join(subdir, "ledger.csv"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(ledger.csv_lines()) + "\n")
    path = os.path.join(outdir, "sweep_eps.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.csv_lines()) + "\n")
    for i, eps in enumerate(report.eps):
        if report.valid[i]:
            print(
                f"  eps={eps:<8g} dist_phi={report.columns['dist_phi'][i]:.6e} "
                f"dist_theta={report.columns['dist_theta'][i]:.6e} "
                f"dist_u={report.columns['dist_u'][i]:.6e} "
                f"energy_gap={report.columns['energy_gap'][i]:.6e}"
            )
        else:
            print(f"  eps={eps:<8g} DIVERGED (excluded from ratios)")
    print(f"wrote {path}")
    return 0


def cmd_oracle(config_path: str, corrupt_kernel: bool = False) -> int:
    config = _load_config(config_path)
    grid = config.grid
    if grid.nx * grid.ny > ORACLE_MAX_CELLS:
        print(
            f"oracle requires a grid of at most {ORACLE_MAX_CELLS} cells "
            f"(got {grid.nx}x{grid.ny}); use a smaller config",
            file=sys.stderr,
        )
        return 1

    rows = []

    def check(name: str, value: float, tol: float) -> None:
        rows.append((name, value, tol, value <= tol))

    c2 = compute_cd(2)
    c3 = compute_cd(3)
    print(f"angular constants: C_2 = {c2:.12f} (pi = {np.pi:.12f}),")
    print(f"                   C_3 = {c3:.12f} (4 pi / 3 = {4 * np.pi / 3:.12f})")
    check("c2_vs_pi", abs(c2 - np.pi), 1e-8)
    check("c3_vs_4pi_over_3", abs(c3 - 4.0 * np.pi / 3.0), 1e-6)

    mollifier = calibrate_mollifier(config.gamma, d=2, shape_id=config.shape_id)
    check("mollifier_calibration", mollifier.renormalization_residual(), 1e-8)

    kernel = sample_kernel(mollifier, config.epsilon, grid)
    if corrupt_kernel:
        # test hook: break the even symmetry of the sampled kernel
        kernel.values[1, 2] *= 1.5

    ii = (-np.arange(2 * grid.nx)) % (2 * grid.nx)
    jj = (-np.arange(2 * grid.ny)) % (2 * grid.ny)
    sym = float(np.abs(kernel.values - kernel.values[np.ix_(ii, jj)]).max())
    check("kernel_symmetry", sym, 0.0)

    a = convolve(kernel, np.ones(grid.shape))
    rng = np.random.default_rng(config.seed)
    fft_err = adj_err = enl_err = 0.0
    for _ in range(3):
        phi = rng.standard_normal(grid.shape)
        psi = rng.standard_normal(grid.shape)
        fast = convolve(kernel, phi)
        slow = convolve_direct(kernel, phi)
        fft_err = max(fft_err, float(np.abs(fast - slow).max() / np.abs(slow).max()))
        s12 = float(np.sum(fast * psi))
        s21 = float(np.sum(convolve(kernel, psi) * phi))
        norm = float(np.sqrt(np.sum(phi**2) * np.sum(psi**2)))
        adj_err = max(adj_err, abs(s12 - s21) / norm)
        quad = float(np.sum(a * phi * phi - phi * fast) * grid.cell_area)
        direct = 0.0
        K = kernel.values
        for i in range(grid.nx):
            rsel = (i - np.arange(grid.nx)) % (2 * grid.nx)
            for j in range(grid.ny):
                csel = (j - np.arange(grid.ny)) % (2 * grid.ny)
                direct += float(np.sum(K[np.ix_(rsel, csel)] * (phi[i, j] - phi) ** 2))
        direct *= 0.5 * grid.cell_area**2
        enl_err = max(enl_err, abs(quad - direct) / max(abs(direct), 1e-300))
    check("fft_vs_direct_convolution", fft_err, 1e-12)
    check("adjoint_symmetry", adj_err, 1e-12)
    check("nonlocal_energy_identity", enl_err, 1e-10)

    h = 1e-6
    fd = (config.potential.f(0.3 + h) - config.potential.f(0.3 - h)) / (2.0 * h)
    check("potential_derivative_fd", abs(config.potential.df(0.3) - fd), 1e-8)

    all_pass = all(ok for _, _, _, ok in rows)
    print(f"{'oracle':<28} {'value':>12}  {'tolerance':>10}  result")
    for name, value, tol, ok in rows:
        print(f"{name:<28} {value:>12.3e}  {tol:>10.1e}  {'PASS' if ok else 'FAIL'}")
    print("oracle suite:", "PASS" if all_pass else "FAIL")
    return 0 if all_pass else 1


def _parse_eps(text: str) -> list[float]:
    return [float(p) for p in text.replace(",", " ").split()]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="nlchb",
        description="Nonlocal two-phase-flow simulator with convective heat transfer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a simulation to t_end")
    p_run.add_argument("config")

    p_resume = sub.add_parser("resume", help="continue from a checkpoint")
    p_resume.add_argument("checkpoint")

    p_validate = sub.add_parser("validate", help="check model assumptions for a config")
    p_validate.add_argument("config")

    p_gamma = sub.add_parser("gamma-sweep", help="interface-energy convergence study")
    p_gamma.add_argument("config")
    p_gamma.add_argument("--eps", required=True, help="comma/space-separated decreasing list")

    p_sweep = sub.add_parser("sweep-eps", help="full-solution convergence study")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--eps", required=True, help="comma/space-separated decreasing list")

    p_oracle = sub.add_parser("oracle", help="run the brute-force oracle battery")
    p_oracle.add_argument("config")
    p_oracle.add_argument(
        "--inject-kernel-asymmetry", action="store_true", help=argparse.SUPPRESS
    )

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "resume":
            return cmd_resume(args.checkpoint)
        if args.command == "validate":
            return cmd_validate(args.config)
        if args.command == "gamma-sweep":
            return cmd_gamma_sweep(args.config, _parse_eps(args.eps))
        if args.command == "sweep-eps":
            return cmd_sweep_eps(args.config, _parse_eps(args.eps))
        if args.command == "oracle":
            return cmd_oracle(args.config, corrupt_kernel=args.inject_kernel_asymmetry)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
