"""Run configuration: sectioned key-value format, total validation, state builders.

Format: `[section]` headers and `key = value` lines; `#` starts a comment; no
nesting. Parsing is total: the result is either a fully validated RunConfig or
a ConfigError carrying the complete list of problems (never just the first).
Unknown sections and keys are rejected (typo safety). Defaults reproduce the
standard spinodal-decomposition fixture on the unit square, so an empty file
is a valid configuration.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, MacVelocity, make_grid
from .physics import MaterialParams, PotentialParams
from .solver import Forcing, Model, SimState, SolverConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "DEFAULT_CONFIG_TEXT"]


class ConfigError(ValueError):
    """Carries every validation problem found in a config."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = errors


#: section -> key -> (default string, kind)
SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "grid": {
        "nx": ("64", "int"),
        "ny": ("64", "int"),
        "lx": ("1.0", "float"),
        "ly": ("1.0", "float"),
    },
    "physics": {
        "k_cap": ("0.05", "float"),
        "l_c": ("0.5", "float"),
        "l_h": ("0.5", "float"),
        "kappa": ("1.0", "float"),
        "nu_min": ("1.0", "float"),
        "nu_max": ("1.0", "float"),
        "nu_width": ("1.0", "float"),
        "alpha0": ("0.0", "float"),
        "alpha1": ("0.0", "float"),
        "alpha2": ("0.0", "float"),
        "g_x": ("0.0", "float"),
        "g_y": ("0.0", "float"),
        "eta_f": ("150.0", "float"),
        "f_coeffs": ("0.25, 0.0, -0.5, 0.0, 0.25", "floats"),
    },
    "kernel": {
        "mode": ("nonlocal", "choice:nonlocal,local"),
        "epsilon": ("0.2", "float"),
        "gamma": ("0.5", "float"),
        "shape": ("bump", "choice:bump,quartic"),
    },
    "solver": {
        "dt": ("auto", "float_or_auto"),
        "t_end": ("0.5", "float"),
        "stabilization": ("auto", "float_or_auto"),
        "safety": ("0.4", "float"),
        "cadence": ("50", "int"),
        "check_invariants": ("false", "bool"),
    },
    "initial": {
        "phi_preset": ("spinodal", "choice:spinodal,constant,random,file"),
        "phi_amplitude": ("0.2", "float"),
        "phi_mean": ("0.0", "float"),
        "phi_value": ("0.0", "float"),
        "phi_file": ("", "str"),
        "theta_preset": ("zero", "choice:zero,constant,file"),
        "theta_value": ("0.0", "float"),
        "theta_file": ("", "str"),
        "u_preset": ("zero", "choice:zero,file"),
        "u_file": ("", "str"),
    },
    "forcing": {
        "q_preset": ("zero", "choice:zero,constant,file"),
        "q_x": ("0.0", "float"),
        "q_y": ("0.0", "float"),
        "q_file": ("", "str"),
        "z_preset": ("zero", "choice:zero,constant,single_mode,file"),
        "z_value": ("0.0", "float"),
        "z_amplitude": ("0.0", "float"),
        "z_kx": ("1", "int"),
        "z_ky": ("0", "int"),
        "z_file": ("", "str"),
    },
    "output": {
        "directory": ("out", "str"),
        "write_snapshots": ("true", "bool"),
        "write_images": ("true", "bool"),
        "write_csv": ("true", "bool"),
    },
    "run": {
        "seed": ("0", "int"),
    },
}

DEFAULT_CONFIG_TEXT = "\n".join(
    f"[{section}]\n" + "\n".join(f"{k} = {v[0]}" for k, v in keys.items()) + "\n"
    for section, keys in SCHEMA.items()
)


def _convert(kind: str, raw: str):
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "floats":
        return tuple(float(p) for p in raw.replace(",", " ").split())
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "float_or_auto":
        return None if raw.lower() == "auto" else float(raw)
    if kind.startswith("choice:"):
        options = kind.split(":", 1)[1].split(",")
        if raw not in options:
            raise ValueError(f"must be one of {options}, got {raw!r}")
        return raw
    return raw


@dataclass
class RunConfig:
    """Validated run configuration with builders for the solver objects."""

    grid: Grid
    potential: PotentialParams
    material: MaterialParams
    mode: str
    epsilon: float
    gamma: float
    shape_id: str
    dt: float | None
    t_end: float
    stabilization: float | None
    safety: float
    cadence: int
    check_invariants: bool
    initial: dict
    forcing_spec: dict
    output: dict
    seed: int
    warnings: list[str] = field(default_factory=list)
    raw_text: str = ""
    base_dir: str = "."

    def solver_config(self, dt: float) -> SolverConfig:
        return SolverConfig(
            dt=dt,
            t_end=self.t_end,
            mode=self.mode,
            epsilon=self.epsilon,
            gamma=self.gamma,
            shape_id=self.shape_id,
            stabilization=self.stabilization,
            safety=self.safety,
            cadence=self.cadence,
            check_invariants=self.check_invariants,
        )

    def build_model(self) -> Model:
        return Model.build(self.grid, self.potential, self.material, self.solver_config(dt=1.0))

    def initial_state(self) -> SimState:
        from .snapshots import read_snapshot

        g = self.grid
        ini = self.initial
        preset = ini["phi_preset"]
        if preset == "spinodal":
            X, Y = g.cell_centers()
            phi = ini["phi_amplitude"] * np.cos(2.0 * np.pi * X / g.Lx) * np.cos(
                np.pi * Y / g.Ly
            ) + ini["phi_mean"]
        elif preset == "constant":
            phi = np.full(g.shape, ini["phi_value"])
        elif preset == "random":
            rng = np.random.default_rng(self.seed)
            phi = ini["phi_mean"] + ini["phi_amplitude"] * (rng.random(g.shape) - 0.5)
            phi -= phi.mean() - ini["phi_mean"]
        else:
            state, _ = read_snapshot(os.path.join(self.base_dir, ini["phi_file"]), g)
            phi = state.phi

        if ini["theta_preset"] == "zero":
            theta = g.zeros()
        elif ini["theta_preset"] == "constant":
            theta = np.full(g.shape, ini["theta_value"])
        else:
            state, _ = read_snapshot(os.path.join(self.base_dir, ini["theta_file"]), g)
            theta = state.theta

        vel = MacVelocity(g)
        if ini["u_preset"] == "file":
            state, _ = read_snapshot(os.path.join(self.base_dir, ini["u_file"]), g)
            vel = state.vel
        return SimState(t=0.0, step=0, phi=phi, theta=theta, vel=vel)

    def forcing(self) -> Forcing:
        from .snapshots import read_snapshot

        g = self.grid
        fs = self.forcing_spec
        q = None
        z = None
        if fs["q_preset"] == "constant":
            q = (
                np.full((g.nx + 1, g.ny), fs["q_x"]),
                np.full((g.nx, g.ny + 1), fs["q_y"]),
            )
        elif fs["q_preset"] == "file":
            state, _ = read_snapshot(os.path.join(self.base_dir, fs["q_file"]), g)
            q = (state.vel.u, state.vel.v)
        if fs["z_preset"] == "constant":
            z = np.full(g.shape, fs["z_value"])
        elif fs["z_preset"] == "single_mode":
            X, Y = g.cell_centers()
            z = fs["z_amplitude"] * np.cos(np.pi * fs["z_kx"] * X / g.Lx) * np.cos(
                np.pi * fs["z_ky"] * Y / g.Ly
            )
        elif fs["z_preset"] == "file":
            state, _ = read_snapshot(os.path.join(self.base_dir, fs["z_file"]), g)
            z = state.theta
        return Forcing.from_fields(q=q, z=z)


def _parse_lines(text: str, errors: list[str]) -> dict[str, dict[str, str]]:
    values: dict[str, dict[str, str]] = {s: {} for s in SCHEMA}
    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in SCHEMA:
                errors.append(f"line {lineno}: unknown section [{name}]")
                section = None
            else:
                section = name
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw_line.strip()!r}")
            continue
        key, _, raw_value = line.partition("=")
        key = key.strip().lower()
        raw_value = raw_value.strip()
        if section is None:
            errors.append(f"line {lineno}: key {key!r} outside any known section")
            continue
        if key not in SCHEMA[section]:
            errors.append(f"line {lineno}: unknown key {key!r} in section [{section}]")
            continue
        if key in values[section]:
            errors.append(f"line {lineno}: duplicate key {key!r} in section [{section}]")
            continue
        values[section][key] = raw_value
    return values


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    """Parse and validate; raises ConfigError with the complete error list."""
    errors: list[str] = []
    raw = _parse_lines(text, errors)

    parsed: dict[str, dict] = {}
    for section, keys in SCHEMA.items():
        parsed[section] = {}
        for key, (default, kind) in keys.items():
            raw_value = raw[section].get(key, default)
            try:
                parsed[section][key] = _convert(kind, raw_value)
            except ValueError as exc:
                errors.append(f"[{section}] {key}: {exc}")
                parsed[section][key] = _convert(kind, default)

    warnings: list[str] = []

    grid = None
    try:
        gp = parsed["grid"]
        grid = make_grid(gp["nx"], gp["ny"], gp["lx"], gp["ly"])
    except ValueError as exc:
        errors.append(f"[grid]: {exc}")

    potential = None
    try:
        potential = PotentialParams(
            coeffs=parsed["physics"]["f_coeffs"], eta_f=parsed["physics"]["eta_f"]
        )
    except ValueError as exc:
        errors.append(f"[physics] potential: {exc}")

    material = None
    try:
        p = parsed["physics"]
        material = MaterialParams(
            K_cap=p["k_cap"],
            l_c=p["l_c"],
            l_h=p["l_h"],
            kappa=p["kappa"],
            nu_min=p["nu_min"],
            nu_max=p["nu_max"],
            nu_width=p["nu_width"],
            alpha0=p["alpha0"],
            alpha1=p["alpha1"],
            alpha2=p["alpha2"],
            g=(p["g_x"], p["g_y"]),
        )
    except ValueError as exc:
        errors.append(f"[physics]: {exc}")

    k = parsed["kernel"]
    if k["mode"] == "nonlocal":
        if not 0.0 < k["gamma"] < 1.0:
            errors.append(
                f"[kernel] gamma: must lie in (0, 1) for the planar kernel family, got {k['gamma']}"
            )
        if k["epsilon"] <= 0.0:
            errors.append(f"[kernel] epsilon: must be positive, got {k['epsilon']}")
        elif grid is not None and k["epsilon"] < 2.0 * max(grid.dx, grid.dy):
            warnings.append(
                f"kernel epsilon {k['epsilon']} spans fewer than two cells; "
                "sampled kernel will be under-resolved"
            )

    s = parsed["solver"]
    if s["dt"] is not None and s["dt"] <= 0.0:
        errors.append(f"[solver] dt: must be positive or 'auto', got {s['dt']}")
    if s["t_end"] <= 0.0:
        errors.append(f"[solver] t_end: must be positive, got {s['t_end']}")
    if not 0.0 < s["safety"] <= 1.0:
        errors.append(f"[solver] safety: must lie in (0, 1], got {s['safety']}")
    if s["cadence"] < 1:
        errors.append(f"[solver] cadence: must be >= 1, got {s['cadence']}")
    if s["stabilization"] is not None and s["stabilization"] < 0.0:
        errors.append(f"[solver] stabilization: must be nonnegative or 'auto'")

    for section, key, preset_key, preset in (
        ("initial", "phi_file", "phi_preset", parsed["initial"]["phi_preset"]),
        ("initial", "theta_file", "theta_preset", parsed["initial"]["theta_preset"]),
        ("initial", "u_file", "u_preset", parsed["initial"]["u_preset"]),
        ("forcing", "q_file", "q_preset", parsed["forcing"]["q_preset"]),
        ("forcing", "z_file", "z_preset", parsed["forcing"]["z_preset"]),
    ):
        if preset == "file":
            path = parsed[section][key]
            if not path:
                errors.append(f"[{section}] {key}: required when {preset_key} = file")
            elif not os.path.exists(os.path.join(base_dir, path)):
                errors.append(f"[{section}] {key}: file not found: {path}")

    if errors:
        raise ConfigError(errors)

    return RunConfig(
        grid=grid,
        potential=potential,
        material=material,
        mode=k["mode"],
        epsilon=k["epsilon"],
        gamma=k["gamma"],
        shape_id=k["shape"],
        dt=s["dt"],
        t_end=s["t_end"],
        stabilization=s["stabilization"],
        safety=s["safety"],
        cadence=s["cadence"],
        check_invariants=s["check_invariants"],
        initial=parsed["initial"],
        forcing_spec=parsed["forcing"],
        output=parsed["output"],
        seed=parsed["run"]["seed"],
        warnings=warnings,
        raw_text=text,
        base_dir=base_dir,
    )
