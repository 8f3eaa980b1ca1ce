"""Command-line runner: ``rodlim <subcommand> [--config file] [flags]``.

Configuration is a flat ``key = value`` file with dotted sections; flags given
on the command line override file entries. Results go to files or standard
output, logs to standard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cross_section as xs
from . import material as mat
from .cell_problem import (
    AffineStrainProfile,
    ConstraintViolation,
    QStarForm,
    SolverFailure,
    cell_problem,
    reduce_qstar,
    solve_constrained,
    solve_penalized,
)
from .rod_equilibrium import NotConverged, SolverOptions, minimize_J2, solve_isotropic_disk
from .rod_model import (
    ForceNotBalanced,
    ForceProfile,
    FrameField,
    Grid1D,
    MissingField,
    RodProfile,
    energy_alpha,
    energy_kirchhoff,
)
from .torsion import solve_torsion

log = logging.getLogger("rodlim")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4
DEFAULT_K_GRID = (10.0, 1e2, 1e3, 1e4, 1e5, 1e6)


class ConfigError(ValueError):
    pass


class MonotonicityViolation(RuntimeError):
    pass


# -- configuration ------------------------------------------------------------------------

def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; ``[section]`` headers prefix keys."""
    cfg: dict[str, str] = {}
    section = ""
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if section and "." not in key:
            key = f"{section}.{key}"
        cfg[key] = value.strip('"').strip("'")
    return cfg


def load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config_text(p.read_text())


def _inline_pairs(spec: str, prefix: str) -> dict[str, str]:
    out = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ConfigError(f"cannot parse {spec!r}; expected key=value pairs")
        k, v = part.split("=", 1)
        out[f"{prefix}.{k.strip()}"] = v.strip()
    return out


@dataclass
class RunConfig:
    task: str
    values: dict[str, str] = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def num(self, key: str, default: float | None = None) -> float:
        v = self.values.get(key)
        if v is None:
            if default is None:
                raise ConfigError(f"missing required setting {key}")
            return float(default)
        try:
            return float(v)
        except ValueError as exc:
            raise ConfigError(f"{key} = {v!r} is not a number") from exc

    def integer(self, key: str, default: int | None = None) -> int:
        x = self.num(key, default)
        if x != int(x):
            raise ConfigError(f"{key} must be an integer")
        return int(x)

    def flag(self, key: str) -> bool:
        return str(self.values.get(key, "false")).lower() in ("1", "true", "yes")

    def path(self, key: str, must_exist: bool = True) -> Path | None:
        v = self.values.get(key)
        if v is None:
            return None
        p = Path(v)
        if must_exist and not p.exists():
            raise ConfigError(f"{key}: file {v} not found")
        return p


def threads() -> int:
    raw = os.environ.get("RODLIM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"RODLIM_THREADS={raw!r} is not an integer") from exc


# -- builders ---------------------------------------------------------------------------------

def build_mesh(cfg: RunConfig) -> xs.CrossSection:
    shape = cfg.get("mesh.shape", "file" if cfg.get("mesh.file") else "disk")
    if shape == "disk":
        return xs.generate_disk(cfg.integer("mesh.refine", 2))
    if shape == "rect":
        return xs.generate_rectangle(cfg.num("mesh.aspect", 1.0), cfg.integer("mesh.refine", 2))
    if shape == "file":
        p = cfg.path("mesh.file")
        if p is None:
            raise ConfigError("mesh.shape = file needs mesh.file")
        return xs.load_mesh(p)
    raise ConfigError(f"unknown mesh.shape {shape!r}")


def build_material(cfg: RunConfig) -> mat.ElasticTensor:
    keys = {k: v for k, v in cfg.values.items() if k.startswith("material.")}
    try:
        return mat.from_config(keys)
    except KeyError as exc:
        raise ConfigError(f"missing material setting {exc}") from exc


def build_profile(cfg: RunConfig) -> AffineStrainProfile:
    return AffineStrainProfile.from_coords([cfg.num(f"cell.{k}", 0.0) for k in ("F12", "F13", "F23", "t")])


def read_csv_columns(path: Path, ncols: int) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if rows:
                    raise ConfigError(f"{path}: non-numeric row {row}")
                continue  # header
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < ncols:
        raise ConfigError(f"{path}: expected at least {ncols} numeric columns")
    return arr


def load_qstar(path: Path) -> QStarForm:
    try:
        d = json.loads(path.read_text())
        return QStarForm.from_dict(d.get("qstar", d))
    except (json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"{path}: not a Q* record ({exc})") from exc


def qstar_for(cfg: RunConfig) -> QStarForm:
    p = cfg.path("rod.qstar")
    if p is not None:
        return load_qstar(p)
    return reduce_qstar(build_mesh(cfg), build_material(cfg))


# -- output ----------------------------------------------------------------------------------

def atomic_write(path: Path | str, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def to_json(obj) -> str:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(type(o).__name__)

    return json.dumps(obj, indent=2, default=default) + "\n"


def to_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def emit(record: dict, out: Path | None) -> None:
    text = to_json(record)
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(out, text)


# -- gamma check -----------------------------------------------------------------------------

@dataclass
class GammaTable:
    rows: list[dict]
    constrained: float
    extrapolated: float
    relative_error: float
    max_gap_times_k: float

    def csv(self, extra: dict) -> str:
        cols = ["k", "value", "gap", "div_residual", "gap_times_k"]
        keys = list(extra)
        return to_csv(cols + keys, [[r[c] for c in cols] + [extra[k] for k in keys] for r in self.rows])


def richardson_limit(k: np.ndarray, v: np.ndarray, points: int = 3) -> float:
    """Polynomial extrapolation in s = 1/k to s = 0 through the largest ``points`` penalties."""
    order = np.argsort(k)[-points:]
    s, y = 1.0 / k[order], v[order]
    c = np.polyfit(s, y, len(s) - 1)
    return float(c[-1])


def gamma_check(cs: xs.CrossSection, L: mat.ElasticTensor, profile: AffineStrainProfile,
                k_grid=DEFAULT_K_GRID, tol: float = 1e-10, workers: int = 1) -> GammaTable:
    k = np.asarray(k_grid, dtype=float)
    if k.ndim != 1 or len(k) < 1 or np.any(k <= 0) or np.any(np.diff(k) <= 0):
        raise ConfigError("penalty grid must be positive and strictly increasing")
    if tol < 0:
        raise ConfigError("monotonicity tolerance must be nonnegative")
    prob = cell_problem(cs, L)
    constrained = solve_constrained(cs, L, profile).energy

    def one(kk):
        return prob.solve(profile, float(kk))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sols = list(pool.map(one, k))
    else:
        sols = [one(kk) for kk in k]
    rows = [{"k": float(kk), "value": s.energy, "gap": constrained - s.energy, "div_residual": s.div_residual,
             "gap_times_k": (constrained - s.energy) * kk} for kk, s in zip(k, sols)]
    vals = np.array([r["value"] for r in rows])
    slack = tol * max(1.0, abs(constrained))
    if np.any(np.diff(vals) < -slack):
        i = int(np.argmin(np.diff(vals)))
        raise MonotonicityViolation(f"Q_k* decreases from k={k[i]:g} to k={k[i + 1]:g}")
    if np.any(vals > constrained + slack):
        raise MonotonicityViolation("Q_k* exceeds the constrained value")
    extrap = richardson_limit(k, vals, min(3, len(k)))
    rel = abs(extrap - constrained) / max(abs(constrained), 1e-300)
    return GammaTable(rows, constrained, extrap, rel, float(max(r["gap_times_k"] for r in rows)))


# -- tasks -----------------------------------------------------------------------------------

def task_mesh(cfg: RunConfig) -> dict:
    cs = build_mesh(cfg)
    problems = cs.check()
    if problems:
        raise xs.DegenerateMesh("; ".join(problems))
    out = cfg.path("output.out", must_exist=False)
    if out is not None:
        atomic_write(out, xs.format_mesh(cs))
    else:
        sys.stdout.write(xs.format_mesh(cs))
    return {"task": "mesh", "mesh": cs.stats(), "file": None if out is None else str(out)}


def task_cell(cfg: RunConfig) -> dict:
    cs, L, xi = build_mesh(cfg), build_material(cfg), build_profile(cfg)
    penalty = cfg.get("cell.penalty")
    tol = cfg.num("solver.tol", 1e-8)
    if penalty is not None and cfg.flag("cell.constrained"):
        raise ConfigError("--penalty and --constrained are mutually exclusive")
    if penalty is None:
        sol = solve_constrained(cs, L, xi, tol=tol)
    else:
        k = cfg.num("cell.penalty")
        if k < 0:
            raise ConfigError("penalty must be nonnegative")
        sol = solve_penalized(cs, L, xi, k)
    rec = {
        "task": "cell", "profile": dict(zip(("F12", "F13", "F23", "t"), xi.coords.tolist())),
        "mode": "constrained" if penalty is None else "penalized", "penalty": sol.k,
        "energy": sol.energy, "div_residual": sol.div_residual, "div_l2": sol.div_l2,
        "gauge": sol.gauge.value, "algebraic_residual": sol.algebraic_residual,
        "tolerances": {"constraint": tol}, "mesh": cs.stats(),
    }
    if cfg.flag("cell.fields"):
        V = cell_problem(cs, L).V
        rec["fields"] = {"p2_nodes": V.nodes2, "beta": sol.beta, "p1_nodes": cs.vertices, "lambda": sol.lam}
    return rec


def task_qstar(cfg: RunConfig) -> dict:
    cs, L = build_mesh(cfg), build_material(cfg)
    penalty = cfg.get("cell.penalty")
    q = reduce_qstar(cs, L, None if penalty is None else cfg.num("cell.penalty"))
    rec = {"task": "qstar", "qstar": q.to_dict(), "mesh": cs.stats()}
    out = cfg.path("output.out", must_exist=False)
    if out is not None:
        names = ["F12", "F13", "F23", "t"]
        rows = [[names[i], *q.matrix[i]] for i in range(4)] + [["alpha", q.alpha, "", "", ""]]
        atomic_write(out.with_suffix(".csv"), to_csv(["row", *names], rows))
    return rec


def task_torsion(cfg: RunConfig) -> dict:
    cs = build_mesh(cfg)
    sol = solve_torsion(cs)
    rec = {"task": "torsion", "tau": sol.tau, "neumann_residual": sol.neumann_residual,
           "phi_l2": sol.phi_l2(), "dirichlet_energy": sol.dirichlet_energy, "mesh": cs.stats()}
    fields = cfg.path("output.fields", must_exist=False)
    if fields is not None:
        n = sol.spaces.nodes2
        atomic_write(fields, to_csv(["node", "x2", "x3", "phi"],
                                    [[i, n[i, 0], n[i, 1], sol.phi[i]] for i in range(len(n))]))
    return rec


def read_frame_csv(path: Path) -> FrameField:
    a = read_csv_columns(path, 5)
    return FrameField(Grid1D(a[:, 0]), a[:, 1:5])


def frame_csv(frame: FrameField) -> str:
    return to_csv(["x1", "qw", "qx", "qy", "qz"], np.column_stack([frame.grid.nodes, frame.quats]))


def task_rod_energy(cfg: RunConfig) -> dict:
    regime = str(cfg.get("rod.regime", "open23"))
    qp = cfg.path("rod.qstar")
    if qp is None:
        raise ConfigError("rod-energy needs --qstar")
    q = load_qstar(qp)
    if regime == "2":
        fp = cfg.path("rod.frame")
        if fp is None:
            raise ConfigError("regime 2 evaluates a frame field: pass --frame")
        frame = read_frame_csv(fp)
        energy, n = energy_kirchhoff(frame, q), frame.grid.n
    else:
        if regime not in ("open23", "3", "above3"):
            raise ConfigError(f"unknown regime {regime!r}")
        pp = cfg.path("rod.profile")
        if pp is None:
            raise ConfigError("rod-energy needs --profile")
        a = read_csv_columns(pp, 6)
        grid = Grid1D(a[:, 0])
        z = a[:, 6] if a.shape[1] > 6 else None
        prof = RodProfile(grid, a[:, [1, 3]], a[:, [2, 4]], a[:, 5], z)
        energy, n = energy_alpha(prof, regime, q), grid.n
    return {"task": "rod-energy", "regime": regime, "energy": energy, "nodes": n, "qstar": q.to_dict()}


def task_rod_solve(cfg: RunConfig) -> dict:
    method = str(cfg.get("rod.method", "minimize"))
    if method not in ("minimize", "shooting"):
        raise ConfigError(f"unknown method {method!r}")
    fp = cfg.path("rod.force")
    if fp is not None:
        a = read_csv_columns(fp, 4)
        force = ForceProfile(Grid1D(a[:, 0]), a[:, 1:4])
    else:
        force = ForceProfile.zero(Grid1D.uniform(cfg.num("rod.length", 1.0), cfg.integer("rod.nodes", 200)))
    tol = cfg.num("solver.tol", 1e-8)
    if method == "shooting":
        L = build_material(cfg)
        if L.kind != "isotropic":
            raise ConfigError("shooting solves the isotropic circular rod; material must be isotropic")
        res = solve_isotropic_disk(force, L.mu, opts=SolverOptions(tol=min(tol, 1e-9)))
    else:
        res = minimize_J2(force, qstar_for(cfg), opts=SolverOptions(tol=tol))
    out = cfg.path("output.out", must_exist=False)
    summary = {
        "task": "rod-solve", "method": method, "energy": res.energy, "el_residual": res.el_residual,
        "residuals": res.residual_report, "iterations": res.iterations, "converged": res.converged,
        "stop_value": res.stop_value, "nodes": force.grid.n, "length": force.grid.length,
        "tolerances": {"solver": tol},
    }
    if out is not None:
        atomic_write(out / "frame.csv", frame_csv(res.frame))
        atomic_write(out / "centerline.csv",
                     to_csv(["x1", "u1", "u2", "u3"], np.column_stack([force.grid.nodes, res.u])))
        atomic_write(out / "summary.json", to_json(summary))
    if not res.converged:
        raise NotConverged(f"{method} did not converge", res)
    return summary


def task_gamma_check(cfg: RunConfig) -> dict:
    cs, L, xi = build_mesh(cfg), build_material(cfg), build_profile(cfg)
    raw = cfg.get("gamma.k_grid")
    try:
        grid = DEFAULT_K_GRID if raw is None else tuple(float(v) for v in str(raw).strip("[]").split(","))
    except ValueError as exc:
        raise ConfigError(f"bad k grid {raw!r}") from exc
    tol = cfg.num("solver.tol", 1e-10)
    table = gamma_check(cs, L, xi, grid, tol=tol, workers=threads())
    stats = cs.stats()
    extra = {"monotonicity_tol": tol, "h_max": stats["h_max"], "n_triangles": stats["n_triangles"]}
    out = cfg.path("output.out", must_exist=False)
    if out is not None:
        atomic_write(out, table.csv(extra))
    return {"task": "gamma-check", "constrained": table.constrained, "extrapolated": table.extrapolated,
            "relative_error": table.relative_error, "max_gap_times_k": table.max_gap_times_k,
            "rows": table.rows, "profile": xi.coords, "tolerances": {"monotonicity": tol}, "mesh": stats}


TASKS = {
    "mesh": task_mesh, "cell": task_cell, "qstar": task_qstar, "torsion": task_torsion,
    "rod-energy": task_rod_energy, "rod-solve": task_rod_solve, "gamma-check": task_gamma_check,
}


# -- argument parsing ----------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _mesh_flags(p):
    p.add_argument("--mesh", dest="mesh_spec", help="mesh file, or disk:R, or rect:ASPECT:R")
    p.add_argument("--shape", dest="mesh.shape", choices=["disk", "rect", "file"])
    p.add_argument("--refine", dest="mesh.refine")
    p.add_argument("--aspect", dest="mesh.aspect")


def _material_flags(p):
    p.add_argument("--material", dest="material_spec",
                   help="key=value file or inline list such as kind=isotropic,lambda=1,mu=1")
    p.add_argument("--lambda", dest="material.lambda")
    p.add_argument("--mu", dest="material.mu")


def _profile_flags(p):
    for k in ("F12", "F13", "F23", "t"):
        p.add_argument(f"--{k}", dest=f"cell.{k}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rodlim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="task", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--out", dest="output.out")
        return p

    p = add("mesh", "generate or normalize a cross-section mesh")
    _mesh_flags(p)
    p = add("cell", "solve one cell problem")
    _mesh_flags(p), _material_flags(p), _profile_flags(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--penalty", dest="cell.penalty")
    g.add_argument("--constrained", dest="cell.constrained", action="store_const", const="true")
    p.add_argument("--fields", dest="cell.fields", action="store_const", const="true")
    p.add_argument("--tol", dest="solver.tol")
    p = add("qstar", "reduce Q* to its 4x4 matrix")
    _mesh_flags(p), _material_flags(p)
    p.add_argument("--penalty", dest="cell.penalty")
    p = add("torsion", "warping function and torsional rigidity")
    _mesh_flags(p)
    p.add_argument("--fields", dest="output.fields", help="CSV path for the warping function")
    p = add("rod-energy", "evaluate a limit energy")
    p.add_argument("--regime", dest="rod.regime", choices=["2", "open23", "3", "above3"])
    p.add_argument("--qstar", dest="rod.qstar")
    p.add_argument("--profile", dest="rod.profile")
    p.add_argument("--frame", dest="rod.frame")
    p = add("rod-solve", "equilibrium of the Kirchhoff-regime rod")
    _mesh_flags(p), _material_flags(p)
    p.add_argument("--qstar", dest="rod.qstar")
    p.add_argument("--force", dest="rod.force")
    p.add_argument("--length", dest="rod.length")
    p.add_argument("--nodes", dest="rod.nodes")
    p.add_argument("--method", dest="rod.method", choices=["minimize", "shooting"])
    p.add_argument("--tol", dest="solver.tol")
    p = add("gamma-check", "penalized approximations against the constrained value")
    _mesh_flags(p), _material_flags(p), _profile_flags(p)
    p.add_argument("--k-grid", dest="gamma.k_grid", help="comma-separated increasing penalties")
    p.add_argument("--tol", dest="solver.tol")
    return parser


def _expand_specs(ns: dict) -> dict[str, str]:
    out: dict[str, str] = {}
    spec = ns.pop("mesh_spec", None)
    if spec is not None:
        parts = spec.split(":")
        if parts[0] == "disk" and len(parts) == 2:
            out.update({"mesh.shape": "disk", "mesh.refine": parts[1]})
        elif parts[0] == "rect" and len(parts) == 3:
            out.update({"mesh.shape": "rect", "mesh.aspect": parts[1], "mesh.refine": parts[2]})
        else:
            out.update({"mesh.shape": "file", "mesh.file": spec})
    spec = ns.pop("material_spec", None)
    if spec is not None:
        if Path(spec).is_file():
            out.update({k if k.startswith("material.") else f"material.{k}": v
                        for k, v in parse_config_text(Path(spec).read_text()).items()})
        else:
            out.update(_inline_pairs(spec, "material"))
    out.update({k: str(v) for k, v in ns.items() if v is not None and "." in k})
    return out


def make_config(argv: list[str]) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    task, verbose, cfg_path = ns.pop("task"), ns.pop("verbose"), ns.pop("config", None)
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    values = load_config(cfg_path)
    if "task" in values and values["task"] != task:
        raise ConfigError(f"config file is for task {values['task']!r}, not {task!r}")
    values.update(_expand_specs(ns))
    return RunConfig(task, values)


def run(config: RunConfig) -> dict:
    if config.task not in TASKS:
        raise ConfigError(f"unknown task {config.task!r}")
    return TASKS[config.task](config)


def _error(code: int, kind: str, msg: str) -> int:
    sys.stderr.write(to_json({"error": kind, "message": msg, "exit_code": code}))
    return code


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = make_config(argv)
        record = run(config)
        out = config.path("output.out", must_exist=False)
        if config.task in ("mesh", "rod-solve") or out is None or config.task == "gamma-check":
            emit(record, None)
        else:
            emit(record, out)
        return EXIT_OK
    except (ConfigError, mat.NotCoercive, xs.DegenerateMesh, ForceNotBalanced, MissingField) as exc:
        return _error(EXIT_CONFIG, type(exc).__name__, str(exc))
    except (SolverFailure, NotConverged) as exc:
        return _error(EXIT_SOLVER, type(exc).__name__, str(exc))
    except (MonotonicityViolation, ConstraintViolation) as exc:
        return _error(EXIT_INVARIANT, type(exc).__name__, str(exc))
    except ValueError as exc:
        return _error(EXIT_CONFIG, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
