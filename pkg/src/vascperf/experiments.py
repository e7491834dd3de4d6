"""Experiment drivers: condition tables, MinRes parameter sweep, perfusion run,
and the 3x3 scalar-model sweep.  Every driver writes a CSV table plus a JSON
manifest (config hash and library versions); outputs are deterministic given
the configuration, so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .coupling import assemble_averaging, assemble_trace
from .eigenproblems import PencilSpec, condition_number
from .fem import FunctionSpace, assemble_mass, assemble_stiffness, interpolate
from .linalg import generalized_symmetric_eig, minres
from .meshing import CurveMesh, embedded_curve, synthetic_vascular_tree, unit_cube_mesh, unit_square_mesh
from .preconditioning import (
    FractionalOperator,
    ProblemParameters,
    build_preconditioner,
    default_exponent,
    scalar_model_condition,
)
from .timestepping import State, TransientHistory, assemble_system, run_transient
from .vtkio import write_curve_vtk, write_mesh_vtk
from .fem import FemVector


@dataclass
class ExperimentConfig:
    experiment: str = "condition-table"
    dimension: int = 2
    resolutions: list[int] = field(default_factory=lambda: [32, 64, 128])
    d_gamma_values: list[float] = field(default_factory=lambda: [1.0, 1e2, 1e4, 1e6])
    beta_values: list[float] = field(default_factory=lambda: [1e-8, 1e-6, 1e-4])
    k_values: list[float] = field(default_factory=lambda: [1e-8, 1e-6, 1e-4])
    s: float | None = None
    radius: float = 0.02
    seed: int = 0
    out_dir: str = "results"
    atol: float = 1e-10
    maxiter: int = 200
    # perfusion geometry and physics (lengths in microns, times in seconds)
    box: float = 144.0
    tree_resolution: int = 12
    tree_depth: int = 4
    edges_per_branch: int = 2
    radius_root: float = 5.0
    n_steps: int = 90
    perfusion_d_omega: float = 1.87e2
    perfusion_d_gamma: float = 6.926e7
    perfusion_beta: float = 50.0
    perfusion_k: float = 1.0
    inlet_value: float = 1.0
    write_vtk: bool = True
    # scalar-model sweep
    grid_min: float = 1e-8
    grid_max: float = 1e8
    points_per_decade: int = 3
    n_random: int = 2000

    def __post_init__(self):
        known = {"condition-table", "iteration-sweep", "perfusion", "scalar-model"}
        if self.experiment not in known:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {sorted(known)}")
        if self.experiment in ("condition-table", "iteration-sweep"):
            if not self.resolutions:
                raise ValueError("resolution list is empty")
            bad = [n for n in self.resolutions if n % 4 != 0]
            if bad:
                raise ValueError(f"resolutions must be divisible by 4, got {bad}")
        if self.experiment == "iteration-sweep":
            if not (self.d_gamma_values and self.beta_values and self.k_values):
                raise ValueError("parameter grids must be non-empty")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        valid = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - valid
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def exponent(self) -> float:
        return self.s if self.s is not None else default_exponent(self.dimension)

    def sha256(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass
class PerfusionSummary:
    times: np.ndarray
    c_t: np.ndarray
    c_v: np.ndarray
    k_trans: np.ndarray   # per second; NaN where c_v - c_t vanishes
    nu: float


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _write_manifest(out: Path, config: ExperimentConfig, outputs: list[str]) -> None:
    manifest = {
        "experiment": config.experiment,
        "config": asdict(config),
        "config_sha256": config.sha256(),
        "outputs": sorted(outputs),
        "versions": {
            "vascperf": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_condition_table(config: ExperimentConfig) -> Path:
    """kappa of both pencils per resolution, in the wide table layout."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = config.exponent()
    header = ["kind", "s", "R"] + [str(n) for n in config.resolutions]
    rows = []
    for kind in ("mass_coupling", "energy_coupling"):
        row = [kind, "" if kind == "mass_coupling" else _fmt(s), _fmt(config.radius)]
        for n in config.resolutions:
            spec = PencilSpec(
                kind=kind, dimension=config.dimension, n=n,
                s=None if kind == "mass_coupling" else s, radius=config.radius,
            )
            try:
                row.append(_fmt(condition_number(spec).kappa))
            except Exception:
                row.append("error")
        rows.append(row)
    path = out / "condition_table.csv"
    _write_csv(path, header, rows)
    _write_manifest(out, config, [path.name])
    return path


def _smooth_load(space: FunctionSpace) -> np.ndarray:
    coords = space.dof_coords
    return np.prod(np.sin(np.pi * coords), axis=1)


def run_iteration_sweep(config: ExperimentConfig) -> Path:
    """Preconditioned MinRes counts over the (D_gamma, beta, k) grid.

    The right-hand side is the weak load of the smooth product-of-sines field
    in all three blocks, which excites the multiplier block deterministically.
    Cells that fail to converge are recorded as -1.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = config.exponent()
    counts: dict[tuple, dict[int, int]] = {}
    for n in config.resolutions:
        mesh = unit_square_mesh(n) if config.dimension == 2 else unit_cube_mesh(n)
        curve = embedded_curve(mesh, radius=config.radius)
        omega_space, gamma_space = FunctionSpace(mesh), FunctionSpace(curve)
        if config.dimension == 2:
            coupling = assemble_trace(omega_space, gamma_space, curve)
        else:
            coupling = assemble_averaging(omega_space, gamma_space, curve, radius=config.radius)
        mats = {
            "m_omega": assemble_mass(omega_space),
            "a_omega": assemble_stiffness(omega_space),
            "m_gamma": assemble_mass(gamma_space),
            "a_gamma": assemble_stiffness(gamma_space),
        }
        fractional = FractionalOperator(
            generalized_symmetric_eig(mats["a_gamma"] + mats["m_gamma"], mats["m_gamma"])
        )
        f_omega = _smooth_load(omega_space)
        f_gamma = _smooth_load(gamma_space)
        b = np.concatenate([
            mats["m_omega"] @ f_omega,
            mats["m_gamma"] @ f_gamma,
            mats["m_gamma"] @ f_gamma,
        ])
        for d_gamma in config.d_gamma_values:
            for beta in config.beta_values:
                for k in config.k_values:
                    params = ProblemParameters(
                        d_omega=1.0, d_gamma=d_gamma, beta=beta, k=k,
                        gamma=1.0, radius=config.radius, exponent_s=s,
                    )
                    system = assemble_system(omega_space, gamma_space, coupling, params,
                                             matrices=mats)
                    precond = build_preconditioner(omega_space, gamma_space, params,
                                                   fractional=fractional, matrices=mats)
                    try:
                        _, report = minres(system.apply, precond, b,
                                           atol=config.atol, maxiter=config.maxiter)
                        count = report.iterations if report.converged else -1
                    except Exception:
                        count = -1
                    counts.setdefault((d_gamma, beta, k), {})[n] = count

    header = ["d_gamma", "beta", "k"] + [str(n) for n in config.resolutions]
    rows = []
    for d_gamma in config.d_gamma_values:
        for beta in config.beta_values:
            for k in config.k_values:
                cell = counts[(d_gamma, beta, k)]
                rows.append([f"{d_gamma:g}", f"{beta:g}", f"{k:g}"]
                            + [str(cell[n]) for n in config.resolutions])
    path = out / "iteration_sweep.csv"
    _write_csv(path, header, rows)
    _write_manifest(out, config, [path.name])
    return path


def cross_section_weights(curve: CurveMesh) -> np.ndarray:
    """Weights w_i = int_curve pi R(x)^2 psi_i, exact for the P1 radius field."""
    w = np.zeros(curve.num_vertices)
    gauss = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))
    for a, b in curve.segments:
        xa, xb = curve.vertices[a], curve.vertices[b]
        length = float(np.linalg.norm(xb - xa))
        ra, rb = curve.radii[a], curve.radii[b]
        for g in gauss:
            r = (1 - g) * ra + g * rb
            common = np.pi * r**2 * length / 2.0
            w[a] += common * (1 - g)
            w[b] += common * g
    return w


def simulate_perfusion(config: ExperimentConfig) -> tuple[PerfusionSummary, TransientHistory, CurveMesh]:
    """Uptake followed by clearance on the synthetic tree; returns the summary."""
    curve, mesh = synthetic_vascular_tree(
        depth=config.tree_depth,
        box=config.box,
        resolution=config.tree_resolution,
        radius_root=config.radius_root,
        seed=config.seed,
        edges_per_branch=config.edges_per_branch,
    )
    omega_space, gamma_space = FunctionSpace(mesh), FunctionSpace(curve)
    coupling = assemble_averaging(omega_space, gamma_space, curve)
    params = ProblemParameters(
        d_omega=config.perfusion_d_omega,
        d_gamma=config.perfusion_d_gamma,
        beta=config.perfusion_beta,
        k=config.perfusion_k,
        gamma=1.0,
        radius=float(np.mean(curve.radii)),
        exponent_s=config.s if config.s is not None else default_exponent(3),
    )
    system = assemble_system(omega_space, gamma_space, coupling, params)
    zero_state = State(
        u=interpolate(omega_space, lambda x: 0.0),
        u_hat=interpolate(gamma_space, lambda x: 0.0),
        lam=FemVector(gamma_space, np.zeros(gamma_space.dof_count)),
    )
    switch = config.n_steps // 3

    def schedule(step_index: int) -> float:
        return config.inlet_value if step_index <= switch else 0.0

    weights = cross_section_weights(curve)
    history = run_transient(
        omega_space, gamma_space, system, zero_state, config.n_steps,
        inlet_schedule=schedule, inlet_dofs=np.array([curve.inlet]),
        weights_gamma=weights,
    )
    volume = float((system.mass_omega @ np.ones(system.n_omega)) @ np.ones(system.n_omega))
    nu = float(weights.sum()) / volume
    k_trans = estimate_transfer_constant(history.times, history.c_t, history.c_v, nu)
    summary = PerfusionSummary(
        times=history.times, c_t=history.c_t, c_v=history.c_v, k_trans=k_trans, nu=nu,
    )
    return summary, history, curve


def estimate_transfer_constant(times: np.ndarray, c_t: np.ndarray, c_v: np.ndarray,
                               nu: float) -> np.ndarray:
    """Pointwise transfer constant from dC_t/dt = (K/nu)(C_v - C_t).

    Centered differences inside, one-sided at the ends; entries where the
    concentration gap is below 1e-12 are NaN (undefined).
    """
    dct = np.gradient(c_t, times)
    gap = c_v - c_t
    k = np.full_like(c_t, np.nan)
    ok = np.abs(gap) > 1e-12
    k[ok] = nu * dct[ok] / gap[ok]
    return k


def run_perfusion(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary, history, curve = simulate_perfusion(config)
    header = ["time_s", "c_t_mol_per_l", "c_v_mol_per_l", "k_trans_per_s"]
    rows = []
    for t, ct, cv, kt in zip(summary.times, summary.c_t, summary.c_v, summary.k_trans):
        rows.append([_fmt(t), _fmt(ct), _fmt(cv), "" if np.isnan(kt) else _fmt(kt)])
    path = out / "perfusion.csv"
    _write_csv(path, header, rows)
    outputs = [path.name]
    nu_path = out / "perfusion_scalars.json"
    nu_path.write_text(json.dumps({"nu": summary.nu, "n_steps": config.n_steps,
                                   "switch_step": config.n_steps // 3}, indent=2,
                                  sort_keys=True) + "\n")
    outputs.append(nu_path.name)
    if config.write_vtk:
        state = history.final_state
        mesh_path = out / "tissue_final.vtk"
        write_mesh_vtk(mesh_path, state.u.space.mesh, {"concentration": state.u.coefficients})
        curve_path = out / "vessels_final.vtk"
        write_curve_vtk(curve_path, curve, {"concentration": state.u_hat.coefficients})
        outputs += [mesh_path.name, curve_path.name]
    _write_manifest(out, config, outputs)
    return path


def scalar_model_sweep(config: ExperimentConfig) -> dict:
    """Condition numbers over the scalar-model parameter space.

    Three families: the full cross of the decade endpoints and midpoint, five
    dense one-at-a-time sweeps at points_per_decade resolution, and a seeded
    random subsample of the full five-dimensional log lattice.
    """
    lo, hi = np.log10(config.grid_min), np.log10(config.grid_max)
    decades = int(round(hi - lo))
    dense = np.logspace(lo, hi, decades * config.points_per_decade + 1)
    coarse = np.logspace(lo, hi, 3)
    records: list[tuple[tuple[float, ...], float]] = []
    for a1 in coarse:
        for a2 in coarse:
            for b1 in coarse:
                for b2 in coarse:
                    for g in coarse:
                        point = (a1, a2, b1, b2, g)
                        records.append((point, scalar_model_condition(*point)))
    for i in range(5):
        for v in dense:
            point = [1.0] * 5
            point[i] = v
            point = tuple(point)
            records.append((point, scalar_model_condition(*point)))
    rng = np.random.default_rng(config.seed)
    for _ in range(config.n_random):
        point = tuple(dense[rng.integers(0, len(dense), size=5)])
        records.append((point, scalar_model_condition(*point)))
    conds = np.array([c for _, c in records])
    worst = records[int(np.argmax(conds))]
    return {
        "records": records,
        "max": float(conds.max()),
        "min": float(conds.min()),
        "argmax": worst[0],
        "grid_bounds": (config.grid_min, config.grid_max),
        "points_per_decade": config.points_per_decade,
    }


def run_scalar_model(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = scalar_model_sweep(config)
    header = ["alpha1", "alpha2", "beta1", "beta2", "gamma", "cond"]
    rows = [[_fmt(v) for v in point] + [_fmt(c)] for point, c in result["records"]]
    path = out / "scalar_model.csv"
    _write_csv(path, header, rows)
    report = {
        "max_cond": result["max"],
        "min_cond": result["min"],
        "max_over_min": result["max"] / result["min"],
        "argmax": list(result["argmax"]),
        "grid_bounds": list(result["grid_bounds"]),
        "points_per_decade": result["points_per_decade"],
    }
    (out / "scalar_model_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"scalar model: max cond {result['max']:.6g} at "
          f"{tuple(f'{v:g}' for v in result['argmax'])}, "
          f"grid [{config.grid_min:g}, {config.grid_max:g}]")
    _write_manifest(out, config, [path.name, "scalar_model_report.json"])
    return path


RUNNERS = {
    "condition-table": run_condition_table,
    "iteration-sweep": run_iteration_sweep,
    "perfusion": run_perfusion,
    "scalar-model": run_scalar_model,
}


def run_experiment(config: ExperimentConfig) -> Path:
    return RUNNERS[config.experiment](config)
