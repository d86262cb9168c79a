"""Declarative case setup and the driver that runs a case to disk.

A case is described by a :class:`CaseConfig`, usually read from a flat
``key = value`` TOML file. ``run_case`` validates it, builds the mesh,
operators and boundary set, marches in time and writes

* ``fields.csv``      nodal x, y, u, v, p, vorticity, speed
* ``profiles/*.csv``  sampled lines (cavity centerlines, channel sections)
* ``energy.csv``      time, energy, step increment, Newton iterations
* ``summary.json``    run metrics
* ``run.log``         solver log
* ``config.toml``     the resolved configuration
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import sys as _sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import ReferenceElement
from .fields import LineProfile, export_fields, extract_line_profile
from .mesh import Mesh2D, build_mesh, cosine_stretched_edges, uniform_edges
from .reference import compare_to_reference, load_reference, shipped_reference_path
from .sbp import SEGMENTS
from .system import DIRICHLET, OUTFLOW, BlockSystem, BoundarySegmentSpec
from .timestep import MarchResult, MarchSettings, NewtonSettings, march

if _sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

CASE_KINDS = ("mms", "cavity", "bfs", "custom")
MESH_KINDS = ("uniform", "cosine_stretched")
# wall: zero velocity; lid: u = lid_speed; step_inflow: channel inflow on y >= 0, wall below;
# outflow: natural outflow condition
BOUNDARY_KINDS = ("wall", "lid", "step_inflow", "outflow")
OUTPUTS = ("fields", "profiles", "energy")


class ConfigError(ValueError):
    """Invalid case configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class CaseConfig:
    case_kind: str = "cavity"
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0
    elements_x: int = 12
    elements_y: int = 12
    degree: int = 4
    mesh_kind: str = "cosine_stretched"
    reynolds: float | None = None
    epsilon: float | None = None
    dt: float = 0.1
    end_time: float | None = None
    steady_tol: float | None = 1e-8
    max_steps: int = 2000
    bc_north: str = "lid"
    bc_south: str = "wall"
    bc_east: str = "wall"
    bc_west: str = "wall"
    lid_speed: float = 1.0
    outputs: list = field(default_factory=lambda: list(OUTPUTS))
    profiles: list = field(default_factory=list)  # line specs such as "x=0.5"
    references: list = field(default_factory=list)  # CSV paths or shipped names
    comparison_threshold: float = 0.02
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    reuse_jacobian: bool = True
    log_every: int = 10
    # manufactured-solution sweep
    mms_degrees: list = field(default_factory=lambda: [1, 2, 3, 4])
    mms_nodes: list = field(default_factory=lambda: [13, 25])

    @property
    def viscosity(self) -> float:
        """The viscous coefficient, from ``epsilon`` or ``1 / reynolds``."""
        if self.epsilon is not None:
            return float(self.epsilon)
        return 1.0 / float(self.reynolds)

    @property
    def boundary_kinds(self) -> dict[str, str]:
        return {s: getattr(self, f"bc_{s}") for s in SEGMENTS}

    def validate(self) -> "CaseConfig":
        errors = []

        def positive(name, integer=False):
            v = getattr(self, name)
            ok = isinstance(v, int) and not isinstance(v, bool) if integer else isinstance(v, (int, float)) and not isinstance(v, bool)
            if not ok or not math.isfinite(v) or v <= 0:
                errors.append(f"{name}: must be a positive {'integer' if integer else 'number'}, got {v!r}")

        if self.case_kind not in CASE_KINDS:
            errors.append(f"case_kind: must be one of {CASE_KINDS}, got {self.case_kind!r}")
        if self.mesh_kind not in MESH_KINDS:
            errors.append(f"mesh_kind: must be one of {MESH_KINDS}, got {self.mesh_kind!r}")
        for a, b in (("x_min", "x_max"), ("y_min", "y_max")):
            lo, hi = getattr(self, a), getattr(self, b)
            if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in (lo, hi)):
                errors.append(f"{a}/{b}: must be finite numbers")
            elif not hi > lo:
                errors.append(f"{b}: must exceed {a} ({hi!r} <= {lo!r})")
        for name in ("elements_x", "elements_y", "max_steps", "newton_max_iter"):
            positive(name, integer=True)
        if not (isinstance(self.degree, int) and 1 <= self.degree <= 8):
            errors.append(f"degree: must be an integer in [1, 8], got {self.degree!r}")
        has_re = self.reynolds is not None
        has_eps = self.epsilon is not None
        if has_re == has_eps:
            errors.append("reynolds/epsilon: give exactly one of them")
        elif has_re:
            positive("reynolds")
        else:
            positive("epsilon")
        for name in ("dt", "newton_tol", "comparison_threshold"):
            positive(name)
        if self.end_time is None and self.steady_tol is None:
            errors.append("end_time/steady_tol: give at least one stopping criterion")
        if self.end_time is not None:
            positive("end_time")
        if self.steady_tol is not None:
            positive("steady_tol")
        for s, kind in self.boundary_kinds.items():
            if kind not in BOUNDARY_KINDS:
                errors.append(f"bc_{s}: must be one of {BOUNDARY_KINDS}, got {kind!r}")
        if "outflow" in self.boundary_kinds.values() and self.bc_east != "outflow":
            errors.append("outflow: only the east side supports the outflow condition")
        if "step_inflow" in self.boundary_kinds.values() and self.bc_west != "step_inflow":
            errors.append("step_inflow: only the west side supports the step inflow profile")
        if self.bc_west == "step_inflow" and not (self.y_min < 0.0 < self.y_max):
            errors.append("step_inflow: the inflow occupies y in [0, 0.5]; y_min must be negative and y_max positive")
        bad_out = [o for o in self.outputs if o not in OUTPUTS]
        if bad_out:
            errors.append(f"outputs: unknown entries {bad_out}; expected a subset of {OUTPUTS}")
        for spec in self.profiles:
            if not isinstance(spec, str) or spec[:2] not in ("x=", "y="):
                errors.append(f"profiles: bad line specification {spec!r}; expected e.g. 'x=0.5'")
        if self.case_kind == "mms":
            if not self.mms_degrees or any(not isinstance(k, int) or not 1 <= k <= 8 for k in self.mms_degrees):
                errors.append(f"mms_degrees: must be integers in [1, 8], got {self.mms_degrees!r}")
            elif not self.mms_nodes or any(not isinstance(n, int) or n < 2 for n in self.mms_nodes):
                errors.append(f"mms_nodes: must be integers >= 2, got {self.mms_nodes!r}")
            else:
                for k in self.mms_degrees:
                    for n in self.mms_nodes:
                        if (n - 1) % k:
                            errors.append(f"mms_nodes: {n} nodes cannot be built from degree-{k} elements")
        if errors:
            raise ConfigError(errors)
        return self


def preset(kind: str, full_scale: bool = False) -> CaseConfig:
    """Default configuration for one of the benchmark kinds."""
    if kind == "cavity":
        n = 25 if full_scale else 12
        return CaseConfig(
            case_kind="cavity", elements_x=n, elements_y=n, reynolds=100.0, profiles=["x=0.5", "y=0.5"],
        )
    if kind == "bfs":
        length, nx, ny = (30.0, 100, 14) if full_scale else (15.0, 40, 8)
        return CaseConfig(
            case_kind="bfs",
            x_min=0.0, x_max=length, y_min=-0.5, y_max=0.5,
            elements_x=nx, elements_y=ny, degree=4, mesh_kind="uniform",
            reynolds=800.0 if full_scale else 100.0,
            bc_north="wall", bc_south="wall", bc_east="outflow", bc_west="step_inflow",
            profiles=[s for s in ("x=0", "x=7", "x=15", f"x={length:g}") if float(s[2:]) <= length],
        )
    if kind == "mms":
        return CaseConfig(case_kind="mms", mesh_kind="uniform", epsilon=0.1, dt=6.4e-5, end_time=0.1, steady_tol=None)
    if kind == "custom":
        return CaseConfig(case_kind="custom", reynolds=100.0)
    raise ConfigError([f"case_kind: must be one of {CASE_KINDS}, got {kind!r}"])


_FIELDS = {f.name: f for f in dataclasses.fields(CaseConfig)}


def config_from_mapping(data: dict, full_scale: bool = False) -> CaseConfig:
    """Preset for ``data['case_kind']`` overridden by the remaining keys."""
    errors = []
    kind = data.get("case_kind", "custom")
    if kind not in CASE_KINDS:
        raise ConfigError([f"case_kind: must be one of {CASE_KINDS}, got {kind!r}"])
    cfg = preset(kind, full_scale)
    for key, value in data.items():
        if key not in _FIELDS:
            errors.append(f"{key}: unknown configuration key")
            continue
        f = _FIELDS[key]
        if f.type in ("float", "float | None") and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if key in ("reynolds", "epsilon") and isinstance(value, str) and value.lower() == "none":
            value = None
        setattr(cfg, key, value)
    # exactly one of reynolds / epsilon: a file that sets one replaces the preset's choice
    if "epsilon" in data and "reynolds" not in data:
        cfg.reynolds = None
    if "reynolds" in data and "epsilon" not in data:
        cfg.epsilon = None
    if "end_time" in data and "steady_tol" not in data:
        cfg.steady_tol = None
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path, full_scale: bool = False) -> CaseConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError([f"{k}: tables are not supported; the config is flat key = value" for k in nested])
    return config_from_mapping(data, full_scale).validate()


def dump_config(cfg: CaseConfig) -> str:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if v is None:
            continue
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, str):
            s = json.dumps(v)
        elif isinstance(v, list):
            s = "[" + ", ".join(json.dumps(x) for x in v) + "]"
        else:
            s = repr(v)
        lines.append(f"{name} = {s}")
    return "\n".join(lines) + "\n"


# -- case construction -------------------------------------------------------


def build_case_mesh(cfg: CaseConfig) -> Mesh2D:
    ref = ReferenceElement.from_degree(cfg.degree)
    if cfg.mesh_kind == "cosine_stretched":
        xe = cosine_stretched_edges(cfg.elements_x + 1, cfg.x_min, cfg.x_max)
        ye = cosine_stretched_edges(cfg.elements_y + 1, cfg.y_min, cfg.y_max)
    else:
        xe = uniform_edges(cfg.elements_x, cfg.x_min, cfg.x_max)
        ye = uniform_edges(cfg.elements_y, cfg.y_min, cfg.y_max)
    return build_mesh(xe, ye, ref)


def step_inflow_profile(y) -> np.ndarray:
    """Parabolic channel inflow ``24 y (0.5 - y)`` on 0 <= y <= 0.5, zero elsewhere (peak 1.5, mean 1)."""
    y = np.asarray(y, dtype=float)
    return np.where((y >= 0.0) & (y <= 0.5), 24.0 * y * (0.5 - y), 0.0)


def boundary_specs(cfg: CaseConfig) -> list[BoundarySegmentSpec]:
    specs = []
    for side, kind in cfg.boundary_kinds.items():
        if kind == "outflow":
            specs.append(BoundarySegmentSpec(side, OUTFLOW))
        elif kind == "wall":
            specs.append(BoundarySegmentSpec(side, DIRICHLET))
        elif kind == "lid":
            speed = cfg.lid_speed

            def lid(x, y, t, speed=speed):
                return np.full_like(x, speed), np.zeros_like(x)

            specs.append(BoundarySegmentSpec(side, DIRICHLET, lid))
        elif kind == "step_inflow":

            def inflow(x, y, t):
                return step_inflow_profile(y), np.zeros_like(y)

            specs.append(BoundarySegmentSpec(side, DIRICHLET, inflow))
    return specs


def build_case_system(cfg: CaseConfig, mesh: Mesh2D | None = None) -> tuple[Mesh2D, BlockSystem]:
    mesh = mesh or build_case_mesh(cfg)
    return mesh, BlockSystem(mesh.operators(), cfg.viscosity, boundary_specs(cfg))


def march_settings(cfg: CaseConfig) -> MarchSettings:
    return MarchSettings(
        dt=cfg.dt,
        t_end=cfg.end_time,
        steady_tol=cfg.steady_tol,
        max_steps=cfg.max_steps,
        newton=NewtonSettings(tol=cfg.newton_tol, max_iter=cfg.newton_max_iter, reuse_jacobian=cfg.reuse_jacobian),
        log_every=cfg.log_every,
    )


# -- diagnostics -------------------------------------------------------------


def side_flux(sys: BlockSystem, W, side: str) -> float:
    """Quadrature of the outward normal velocity over one side."""
    u, v, _ = sys.split(W)
    nx, ny = sys.segments[side].normals
    pb = sys.ops.segment_mass(side)
    return float(np.dot(pb, nx * u + ny * v))


def developed_channel_profile(y, mean: float, y_lo: float, y_hi: float) -> np.ndarray:
    """Plane Poiseuille profile with the given mean velocity between two walls."""
    h = y_hi - y_lo
    y = np.asarray(y, dtype=float)
    return 6.0 * mean * (y - y_lo) * (y_hi - y) / h**2


def case_metrics(cfg: CaseConfig, mesh: Mesh2D, sys: BlockSystem, W) -> dict:
    n = sys.n
    u, v = W[:n], W[n : 2 * n]
    metrics = {"max_abs_u": float(np.abs(u).max()), "max_abs_v": float(np.abs(v).max())}
    if cfg.case_kind == "bfs" or "outflow" in cfg.boundary_kinds.values():
        q_out = side_flux(sys, W, "east")
        q_in = -side_flux(sys, W, "west")
        metrics["inflow_flux"] = q_in
        metrics["outflow_flux"] = q_out
        metrics["flux_imbalance"] = abs(q_out - q_in) / abs(q_in) if q_in else float("nan")
        prof = extract_line_profile(W, mesh, "x", cfg.x_max, "u", ops=sys.ops)
        h = cfg.y_max - cfg.y_min
        mean = q_out / h
        parab = developed_channel_profile(prof.abscissa, mean, cfg.y_min, cfg.y_max)
        metrics["outflow_parabola_deviation"] = float(np.abs(prof.values - parab).max() / np.abs(parab).max())
    return metrics


# -- driver ------------------------------------------------------------------


@dataclass
class RunArtifacts:
    directory: Path
    config: CaseConfig
    mesh: Mesh2D | None = None
    system: BlockSystem | None = None
    result: MarchResult | None = None
    metrics: dict = field(default_factory=dict)
    comparisons: list = field(default_factory=list)
    files: list = field(default_factory=list)


def _write_profile(path: Path, prof: LineProfile) -> None:
    along = "y" if prof.axis == "x" else "x"
    with open(path, "w") as fh:
        fh.write(f"# quantity: {prof.quantity}\n# line: {prof.line}\n{along},{prof.quantity}\n")
        for a, b in zip(prof.abscissa, prof.values):
            fh.write(f"{float(a)!r},{float(b)!r}\n")


def _resolve_reference(name: str) -> Path:
    p = Path(name)
    return p if p.exists() else shipped_reference_path(name)


def _attach_log(directory: Path):
    handler = logging.FileHandler(directory / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("sbp_ins")
    root.addHandler(handler)
    if root.level == logging.NOTSET or root.level > logging.INFO:
        root.setLevel(logging.INFO)
    return handler


def run_case(cfg: CaseConfig, out_dir, initial_state=None) -> RunArtifacts:
    """Validate, build, march and write the artifacts of one case into ``out_dir``."""
    cfg.validate()
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    art = RunArtifacts(directory=directory, config=cfg)
    (directory / "config.toml").write_text(dump_config(cfg))
    handler = _attach_log(directory)
    try:
        if cfg.case_kind == "mms":
            _run_mms_sweep(cfg, art)
            return art
        mesh, sys = build_case_system(cfg)
        log.info("%s case, Re = %.6g (epsilon = %.6g); %s", cfg.case_kind, 1.0 / sys.epsilon, sys.epsilon, mesh.summary())
        W0 = np.zeros(3 * sys.n) if initial_state is None else np.asarray(initial_state, dtype=float)
        res = march(sys, W0, march_settings(cfg))
        log.info(
            "finished after %d steps at t=%.6g (steady=%s, %d factorisations, %.1fs)",
            res.steps, res.t, res.steady, res.factorizations, res.wall_time,
        )
        art.mesh, art.system, art.result = mesh, sys, res
        art.metrics = {"steps": res.steps, "t": res.t, "steady": res.steady, "wall_time": res.wall_time}
        art.metrics.update(case_metrics(cfg, mesh, sys, res.W))
        _write_outputs(cfg, art)
        return art
    finally:
        logging.getLogger("sbp_ins").removeHandler(handler)
        handler.close()


def _write_outputs(cfg: CaseConfig, art: RunArtifacts) -> None:
    d, mesh, sys, res = art.directory, art.mesh, art.system, art.result
    if "fields" in cfg.outputs:
        export_fields(res.W, sys.ops, d / "fields.csv")
        art.files.append(d / "fields.csv")
    if "energy" in cfg.outputs:
        with open(d / "energy.csv", "w") as fh:
            fh.write("step,t,energy,increment,newton_iterations\n")
            inc = [float("nan")] + list(res.increments)
            its = [0] + list(res.newton_iterations)
            for i, (t, e) in enumerate(zip(res.times, res.energy)):
                fh.write(f"{i},{t!r},{e!r},{inc[i]!r},{its[i]}\n")
        art.files.append(d / "energy.csv")
    if "profiles" in cfg.outputs and cfg.profiles:
        pdir = d / "profiles"
        pdir.mkdir(exist_ok=True)
        for spec in cfg.profiles:
            axis, coord = spec[0], float(spec[2:])
            for q in ("u", "v", "vorticity"):
                prof = extract_line_profile(res.W, mesh, axis, coord, q, ops=sys.ops)
                path = pdir / f"{q}_{axis}{coord:g}.csv"
                _write_profile(path, prof)
                art.files.append(path)
    for name in cfg.references:
        ref = load_reference(_resolve_reference(name))
        prof = extract_line_profile(res.W, mesh, ref.axis, ref.coordinate, ref.quantity, points=ref.abscissa, ops=sys.ops)
        rep = compare_to_reference(prof, ref)
        log.info("%s", rep.summary())
        art.comparisons.append(rep)
        art.metrics.setdefault("comparisons", []).append(
            {"reference": str(name), "line": rep.line, "quantity": rep.quantity, "max_abs": rep.max_abs, "mean_abs": rep.mean_abs}
        )
    (d / "summary.json").write_text(json.dumps(art.metrics, indent=2, default=float) + "\n")
    art.files.append(d / "summary.json")


def _run_mms_sweep(cfg: CaseConfig, art: RunArtifacts) -> None:
    from .mms import MmsField, convergence_table, run_mms, write_table

    fld = MmsField(epsilon=cfg.viscosity)
    newton = NewtonSettings(tol=cfg.newton_tol, max_iter=cfg.newton_max_iter, reuse_jacobian=cfg.reuse_jacobian)
    t_end = cfg.end_time if cfg.end_time is not None else 0.1
    runs = [run_mms(k, n, t_end=t_end, dt=cfg.dt, newton=newton, field=fld) for k in cfg.mms_degrees for n in cfg.mms_nodes]
    rows = convergence_table(runs)
    write_table(rows, art.directory / "mms_table.csv")
    art.files.append(art.directory / "mms_table.csv")
    art.metrics = {"mms": rows}
    (art.directory / "summary.json").write_text(json.dumps(art.metrics, indent=2, default=float) + "\n")


def load_run(directory) -> tuple[CaseConfig, Mesh2D, np.ndarray]:
    """Configuration, mesh and final state of a finished run directory."""
    from .fields import read_fields, state_from_fields

    directory = Path(directory)
    cfg = load_config(directory / "config.toml")
    mesh = build_case_mesh(cfg)
    cols = read_fields(directory / "fields.csv")
    W = state_from_fields(cols)
    if W.size != 3 * mesh.n_nodes:
        raise ValueError(f"{directory}: field dump has {W.size // 3} nodes, mesh has {mesh.n_nodes}")
    return cfg, mesh, W
