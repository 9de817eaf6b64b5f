"""Command-line pipeline: JSON config in, CSV/PGM/JSON artifacts out.

Subcommands
-----------
solve       dual ascent, map extraction and map-level checks
phase       everything in ``solve`` plus phase synthesis and ray residuals
check-cost  derivative, twist, Lipschitz and injectivity-bound checks
oracle      exact LP and/or brute-force Monge values only
trace       ray residuals from previously written maps/phase CSVs

Exit codes: 0 ok, 2 config, 3 mass imbalance, 4 injectivity (with
``--strict``), 5 oracle cap.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from . import __version__
from ._parallel import set_num_threads
from .cost import (
    CostError,
    build_metalens_cost,
    distance_sum_cost,
    finite_difference_grad_x1,
    finite_difference_mixed,
    grad_x1,
    hessian_det,
    injectivity_bound,
    lipschitz_estimate,
    mixed_hessian,
    product_size,
    surface_from_config,
    verify_twist,
)
from .domains import DomainError, build_grid, build_measure, check_mass_balance
from .dual_solver import (
    BRUTE_FORCE_MAX_ATOMS,
    OracleCapError,
    SolverError,
    duality_gap,
    lp_primal,
    maximize_dual,
    monge_bruteforce,
)
from .io import (
    json_text,
    maps_csv,
    pgm_text,
    phase_csv,
    read_csv_table,
    read_node_values,
    trace_csv,
    write_text,
)
from .metalens import (
    compatibility_from_coords,
    gsl_residual,
    gsl_residual_from_coords,
    synthesize_phase,
    t1_t2_compatibility,
    tangentiality_residual,
)
from .monge import extract_maps, pushforward_check, representation_residual

log = logging.getLogger("metalens_mmot")

EXIT_OK, EXIT_CONFIG, EXIT_MASS, EXIT_INJECTIVITY, EXIT_ORACLE = 0, 2, 3, 4, 5
MARGINALS = ("omega0", "omega1", "omega2")
EMIT_CHOICES = ("maps_csv", "phase_csv", "phase_pgm", "summary_json", "trace_csv")
ORACLES = ("none", "lp", "bruteforce", "both")
COST_TYPES = ("metalens", "distance_sum")
_MISSING = object()


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class ConfigError(CliError):
    def __init__(self, message: str):
        super().__init__(message, EXIT_CONFIG)


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SolverConfig:
    max_sweeps: int = 500
    tol_defect: float = 1e-8
    tol_tie: Optional[float] = None
    oracle: str = "lp"
    oracle_cap: int = 10_000
    mass_rel_tol: float = 1e-9


@dataclass(frozen=True)
class RunConfig:
    domains: tuple
    densities: tuple
    total_mass: Optional[float]
    surface: Optional[Mapping]
    optics: Optional[Mapping]
    cost: Mapping
    solver: SolverConfig
    out_dir: str = "out"
    emit: tuple = ("summary_json",)
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def is_metalens(self) -> bool:
        return self.cost["type"] == "metalens"


def _get(obj, key, path, default=_MISSING):
    if not isinstance(obj, Mapping):
        raise ConfigError(f"expected an object at {path or 'top level'}")
    where = f"{path}.{key}" if path else key
    if key not in obj:
        if default is _MISSING:
            raise ConfigError(f"missing field at {where}")
        return default, where
    return obj[key], where


def _number(value, where, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number at {where}")
    if integer and value != int(value):
        raise ConfigError(f"expected an integer at {where}")
    if not np.isfinite(value):
        raise ConfigError(f"non-finite value at {where}")
    if positive and value <= 0:
        raise ConfigError(f"must be positive at {where}")
    return int(value) if integer else float(value)


def _vector(value, where, length=2):
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise ConfigError(f"expected {length} numbers at {where}")
    return [_number(v, f"{where}[{i}]") for i, v in enumerate(value)]


def _parse_grid(entry, where):
    lo, w_lo = _get(entry, "min", where)
    hi, w_hi = _get(entry, "max", where)
    res, w_res = _get(entry, "resolution", where)
    res = _vector(res, w_res)
    for i, r in enumerate(res):
        if r != int(r) or r < 1:
            raise ConfigError(f"degenerate resolution at {w_res}[{i}]")
    return {"min": _vector(lo, w_lo), "max": _vector(hi, w_hi), "resolution": [int(r) for r in res]}


def _parse_density(entry, where):
    if isinstance(entry, str):
        if entry != "uniform":
            raise ConfigError(f"unknown density {entry!r} at {where}")
        return entry
    kind, w_kind = _get(entry, "type", where)
    if kind == "uniform":
        return dict(entry)
    if kind == "gaussian":
        _vector(_get(entry, "center", where)[0], f"{where}.center")
        _number(_get(entry, "sigma", where)[0], f"{where}.sigma", positive=True)
        return dict(entry)
    if kind == "array":
        values, w_values = _get(entry, "values", where)
        if not isinstance(values, list):
            raise ConfigError(f"expected a list at {w_values}")
        return {"type": "array", "values": [_number(v, f"{w_values}[{i}]") for i, v in enumerate(values)]}
    if kind == "csv":
        path, w_path = _get(entry, "path", where)
        if not isinstance(path, str):
            raise ConfigError(f"expected a path at {w_path}")
        return {"type": "csv", "path": path}
    raise ConfigError(f"unknown density type {kind!r} at {w_kind}")


def _parse_surface(entry, where):
    kind, w_kind = _get(entry, "type", where)
    if kind == "constant":
        return {"type": "constant", "value": _number(_get(entry, "value", where)[0], f"{where}.value")}
    if kind == "affine":
        a, w_a = _get(entry, "a", where)
        return {"type": "affine", "a": _vector(a, w_a), "b": _number(_get(entry, "b", where)[0], f"{where}.b")}
    if kind == "grid":
        path, w_path = _get(entry, "path", where)
        if not isinstance(path, str):
            raise ConfigError(f"expected a path at {w_path}")
        return {"type": "grid", "path": path}
    raise ConfigError(f"unknown surface type {kind!r} at {w_kind}")


def _parse_optics(entry):
    out = {}
    for key in ("n1", "n2"):
        value, where = _get(entry, key, "optics")
        v = _number(value, where)
        if v < 1:
            raise ConfigError(f"index below 1 at {where}")
        out[key] = v
    value, where = _get(entry, "beta", "optics")
    out["beta"] = _number(value, where, positive=True)
    return out


def _parse_solver(entry) -> SolverConfig:
    d = SolverConfig()
    if entry is None:
        return d
    max_sweeps, w = _get(entry, "max_sweeps", "solver", d.max_sweeps)
    max_sweeps = _number(max_sweeps, w, positive=True, integer=True)
    tol_defect, w = _get(entry, "tol_defect", "solver", d.tol_defect)
    tol_defect = _number(tol_defect, w, positive=True)
    tol_tie, w = _get(entry, "tol_tie", "solver", None)
    if tol_tie is not None:
        tol_tie = _number(tol_tie, w, positive=True)
    oracle, w = _get(entry, "oracle", "solver", d.oracle)
    if oracle not in ORACLES:
        raise ConfigError(f"oracle must be one of {ORACLES} at {w}")
    cap, w = _get(entry, "oracle_cap", "solver", d.oracle_cap)
    cap = _number(cap, w, positive=True, integer=True)
    mass_tol, w = _get(entry, "mass_rel_tol", "solver", d.mass_rel_tol)
    mass_tol = _number(mass_tol, w, positive=True)
    return SolverConfig(max_sweeps, tol_defect, tol_tie, oracle, cap, mass_tol)


def parse_config(text: str, base_dir=".") -> RunConfig:
    """Validate a JSON run configuration and fill in defaults.

    Relative CSV paths inside the config resolve against ``base_dir``.
    Every failure raises :class:`ConfigError` naming the offending field.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    if not isinstance(raw, Mapping):
        raise ConfigError("expected an object at top level")

    domains_raw, _ = _get(raw, "domains", "")
    domains = tuple(_parse_grid(_get(domains_raw, k, "domains")[0], f"domains.{k}") for k in MARGINALS)
    dens_raw, _ = _get(raw, "densities", "", {})
    densities = tuple(_parse_density(_get(dens_raw, k, "densities", "uniform")[0], f"densities.{k}")
                      for k in MARGINALS)
    total_mass, w = _get(dens_raw, "total_mass", "densities", None)
    if total_mass is not None:
        total_mass = _number(total_mass, w, positive=True)

    cost_raw, _ = _get(raw, "cost", "", {"type": "metalens"})
    kind, w_kind = _get(cost_raw, "type", "cost", "metalens")
    if kind not in COST_TYPES:
        raise ConfigError(f"cost type must be one of {COST_TYPES} at {w_kind}")
    cost = {"type": kind}
    if kind == "distance_sum":
        power, w = _get(cost_raw, "power", "cost", 1.0)
        cost["power"] = _number(power, w, positive=True)

    if kind == "metalens":
        surface = _parse_surface(_get(raw, "surface", "")[0], "surface")
        optics = _parse_optics(_get(raw, "optics", "")[0])
    else:
        surface = optics = None

    solver = _parse_solver(_get(raw, "solver", "", None)[0])
    out_raw, _ = _get(raw, "output", "", {})
    out_dir, w = _get(out_raw, "dir", "output", "out")
    if not isinstance(out_dir, str):
        raise ConfigError(f"expected a path at {w}")
    emit, w = _get(out_raw, "emit", "output", ["summary_json"])
    if not isinstance(emit, list) or any(e not in EMIT_CHOICES for e in emit):
        raise ConfigError(f"emit list must be a subset of {EMIT_CHOICES} at {w}")
    return RunConfig(domains, densities, total_mass, surface, optics, cost, solver,
                     out_dir, tuple(dict.fromkeys(emit)), Path(base_dir))


# --------------------------------------------------------------------------
# instance assembly


@dataclass
class Instance:
    grids: tuple
    measures: tuple
    cost: object
    surface: object
    balance: object


def _resolve(cfg: RunConfig, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else cfg.base_dir / p


def build_grids(cfg: RunConfig) -> tuple:
    grids = []
    for name, entry in zip(MARGINALS, cfg.domains):
        try:
            grids.append(build_grid(entry["min"], entry["max"], entry["resolution"]))
        except DomainError as exc:
            raise ConfigError(f"{exc} at domains.{name}") from None
    return tuple(grids)


def build_cost(cfg: RunConfig, grids):
    if not cfg.is_metalens:
        return distance_sum_cost(len(grids), power=cfg.cost["power"]), None
    entry = cfg.surface
    values = None
    try:
        if entry["type"] == "grid":
            values = read_node_values(_resolve(cfg, entry["path"]), grids[0])
        surface = surface_from_config(entry, cfg.optics["beta"], cfg.optics["n1"], cfg.optics["n2"],
                                    omega0=grids[0], values=values)
        return build_metalens_cost(surface, grids[0]), surface
    except (CostError, OSError, ValueError) as exc:
        raise ConfigError(f"{exc} at surface") from None


def build_instance(cfg: RunConfig, force_rescale: bool = False) -> Instance:
    """Grids, measures (mass-balanced), cost and surface for a config.

    Mass deviations up to ``solver.mass_rel_tol`` are rescaled silently;
    larger ones raise exit code 3 unless ``force_rescale``.
    """
    grids = build_grids(cfg)
    measures = []
    for name, grid, dens in zip(MARGINALS, grids, cfg.densities):
        try:
            if isinstance(dens, Mapping) and dens.get("type") == "csv":
                dens = read_node_values(_resolve(cfg, dens["path"]), grid)
            m = build_measure(grid, dens)
        except (DomainError, OSError, ValueError) as exc:
            raise ConfigError(f"{exc} at densities.{name}") from None
        if cfg.total_mass is not None:
            m = m.scaled(cfg.total_mass / m.total_mass)
        measures.append(m)
    balance = check_mass_balance(measures, cfg.solver.mass_rel_tol)
    if not balance.balanced and not force_rescale:
        worst = max(balance.deviations)
        raise CliError(f"mass imbalance: relative deviation {worst:.3g} exceeds "
                       f"{cfg.solver.mass_rel_tol:.3g} (masses {list(balance.masses)}); "
                       "pass --force-rescale to rescale", EXIT_MASS)
    cost, surface = build_cost(cfg, grids)
    return Instance(grids, balance.rescaled, cost, surface, balance)


def _injectivity(inst: Instance, strict: bool) -> dict:
    if inst.surface is None:
        return {"c0_bound": None, "gradf_max": None, "injectivity_passed": None}
    bound = injectivity_bound(inst.surface, inst.grids)
    if not bound.passed:
        msg = f"injectivity bound fails: max |grad f| = {bound.gradf_max:.6g} >= C0 = {bound.C0:.6g}"
        if strict:
            raise CliError(msg, EXIT_INJECTIVITY)
        log.warning(msg)
    return {"c0_bound": bound.C0, "gradf_max": bound.gradf_max, "injectivity_passed": bound.passed}


def _check_oracle_size(inst: Instance, oracle: str, cap: int) -> None:
    if oracle in ("lp", "both"):
        size = product_size(inst.grids)
        if size > cap:
            raise CliError(f"oracle instance too large: {size} tuples > cap {cap}", EXIT_ORACLE)
    if oracle in ("bruteforce", "both"):
        sizes = {g.size for g in inst.grids}
        if len(sizes) == 1 and sizes.pop() > BRUTE_FORCE_MAX_ATOMS:
            raise CliError(f"brute-force cap: more than {BRUTE_FORCE_MAX_ATOMS} atoms", EXIT_ORACLE)


def _run_oracles(inst: Instance, oracle: str, cap: int) -> dict:
    out = {"lp_value": None, "bruteforce_value": None, "bruteforce_unique": None, "bruteforce_maps": None}
    if oracle in ("lp", "both"):
        _, out["lp_value"] = lp_primal(inst.cost, inst.measures, cap)
    if oracle in ("bruteforce", "both"):
        try:
            res = monge_bruteforce(inst.cost, inst.measures)
        except OracleCapError as exc:
            raise CliError(str(exc), EXIT_ORACLE) from None
        except SolverError as exc:
            raise ConfigError(f"{exc} at solver.oracle") from None
        out["bruteforce_value"] = res.value
        out["bruteforce_unique"] = res.unique
        out["bruteforce_maps"] = [m.tolist() for m in res.maps]
    return out


# --------------------------------------------------------------------------
# pipeline


def run_pipeline(cfg: RunConfig, mode: str = "phase", strict: bool = False,
                 force_rescale: bool = False, threads: Optional[int] = None):
    """Run ``solve`` or ``phase``; returns ``(summary, artifacts)`` with artifacts as ``{filename: text}``."""
    if mode not in ("solve", "phase"):
        raise ValueError(f"unknown mode {mode!r}")
    inst = build_instance(cfg, force_rescale)
    summary = {"mode": mode, "version": __version__}
    summary["masses"] = list(inst.balance.masses)
    summary["rescaled"] = not inst.balance.balanced
    summary.update(_injectivity(inst, strict))
    sc = cfg.solver
    if sc.oracle != "none":
        _check_oracle_size(inst, sc.oracle, sc.oracle_cap)

    F, trace = maximize_dual(inst.cost, inst.measures, sc.max_sweeps, sc.tol_defect, threads=threads)
    log.info("dual ascent: %d sweeps, defect %.3g", trace.sweeps, trace.final_defect)
    maps = extract_maps(F, inst.cost, sc.tol_tie, threads=threads)
    dual_value = trace.records[-1].value
    summary.update({
        "dual_value": dual_value,
        "sweeps": trace.sweeps,
        "defect": trace.final_defect,
        "converged": trace.converged,
        "monotone": trace.is_monotone(),
        "sv_fraction": maps.sv_fraction,
        "tv_distances": list(pushforward_check(maps, inst.measures)),
    })
    try:
        summary["representation_residual"] = representation_residual(F, maps, inst.cost)
    except ValueError:
        summary["representation_residual"] = None
    summary["compatibility_max"] = t1_t2_compatibility(maps, inst.surface) if inst.surface else None
    summary.update({"gsl_refraction_max": None, "gsl_reflection_max": None, "tangentiality_max": None})

    artifacts = {}
    if mode == "phase" and inst.surface is not None:
        try:
            phase = synthesize_phase(F[0], inst.surface, inst.grids[0])
        except ValueError as exc:
            raise ConfigError(f"phase synthesis: {exc} at domains.omega0") from None
        gsl = gsl_residual(phase, maps, inst.surface)
        summary["gsl_refraction_max"] = gsl.refraction_max
        summary["gsl_reflection_max"] = gsl.reflection_max
        summary["tangentiality_max"] = tangentiality_residual(phase, inst.surface)
        if "phase_csv" in cfg.emit:
            artifacts["phase.csv"] = phase_csv(phase)
        if "phase_pgm" in cfg.emit:
            artifacts["phase_grad.pgm"], s_grad = pgm_text(phase.tangential_norm, inst.grids[0])
            artifacts["phase_curl.pgm"], s_curl = pgm_text(phase.curl, inst.grids[0])
            summary["pgm_scales"] = {"phase_grad": s_grad, "phase_curl": s_curl}

    summary["oracle"] = sc.oracle
    summary["oracle_value"] = summary["gap"] = None
    if sc.oracle != "none":
        res = _run_oracles(inst, sc.oracle, sc.oracle_cap)
        summary.update(res)
        oracle_value = res["lp_value"] if res["lp_value"] is not None else res["bruteforce_value"]
        summary["oracle_value"] = oracle_value
        summary["gap"] = duality_gap(dual_value, oracle_value)
        if summary["gap"] < -1e-9:
            log.warning("weak duality violated: gap %.3g", summary["gap"])

    if "maps_csv" in cfg.emit:
        artifacts["maps.csv"] = maps_csv(maps)
    if "trace_csv" in cfg.emit:
        artifacts["trace.csv"] = trace_csv(trace)
    if "summary_json" in cfg.emit:
        artifacts["summary.json"] = json_text(summary)
    return summary, artifacts


def check_cost(cfg: RunConfig, strict: bool = False, seed: int = 0, n_points: int = 100,
               n_pairs: int = 1000) -> dict:
    """Finite-difference, twist, Lipschitz and injectivity-bound checks for the configured cost."""
    grids = build_grids(cfg)
    cost, surface = build_cost(cfg, grids)
    rng = np.random.default_rng(seed)

    def sample(g):
        lo, hi = np.asarray(g.min_corner), np.asarray(g.max_corner)
        return lo + rng.random((n_points, 2)) * (hi - lo)

    x1, x2, x3 = (sample(g) for g in grids)
    if surface is not None:
        # keep the source points where f is defined without extrapolation
        x1 = grids[0].nodes[rng.integers(0, grids[0].size, n_points)]
    g = grad_x1(cost, x1, x2, x3)
    fd = finite_difference_grad_x1(cost, x1, x2, x3)
    scale = np.maximum(1.0, np.linalg.norm(g, axis=-1))
    out = {"seed": seed, "n_points": n_points,
           "grad_rel_error": float(np.max(np.linalg.norm(g - fd, axis=-1) / scale)),
           "lipschitz_estimate": lipschitz_estimate(cost, grids, n_pairs, seed)}
    if surface is not None:
        for which, y in (("c1", x2), ("c2", x3)):
            m = mixed_hessian(cost, which, x1, y)
            m_fd = finite_difference_mixed(cost, which, x1, y)
            det = hessian_det(cost, which, x1, y)
            out[f"mixed_hessian_{which}_error"] = float(np.max(np.abs(m - m_fd)))
            out[f"hessian_det_{which}_rel_error"] = float(np.max(np.abs(det - np.linalg.det(m_fd))
                                                                 / np.maximum(np.abs(det), 1e-300)))
        twist = verify_twist(cost, surface, grids, n_pairs, seed)
        out["twist"] = {"passed": twist.passed, "min_eig_c1": twist.min_eig_c1, "min_eig_c2": twist.min_eig_c2,
                        "nonpositive_eig": twist.nonpositive_eig,
                        "injectivity_violations": twist.injectivity_violations}
        out.update(_injectivity(Instance(grids, (), cost, surface, None), strict))
    return out


def trace_files(cfg: RunConfig, maps_path, phase_path) -> dict:
    """Ray residuals for externally supplied maps and phase tables on the configured surface."""
    if not cfg.is_metalens:
        raise ConfigError("trace needs a metalens configuration at cost.type")
    grids = build_grids(cfg)
    _, surface = build_cost(cfg, grids)
    try:
        maps = read_csv_table(maps_path, ("x", "y", "T2x", "T2y", "T3x", "T3y"))
        phase = read_csv_table(phase_path, ("x", "y", "phix", "phiy", "phiz"))
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if maps.shape[0] != phase.shape[0] or not np.allclose(maps[:, :2], phase[:, :2], rtol=0, atol=1e-12):
        raise ConfigError("maps and phase tables must list the same source nodes")
    x = maps[:, :2]
    res = gsl_residual_from_coords(x, maps[:, 2:4], maps[:, 4:6], phase[:, 2:5], surface)
    g = surface.grad_f(x)
    tang = np.abs(phase[:, 4] - phase[:, 2] * g[:, 0] - phase[:, 3] * g[:, 1])
    compat = np.linalg.norm(compatibility_from_coords(x, maps[:, 2:4], maps[:, 4:6], surface), axis=-1)
    return {"n_nodes": int(x.shape[0]),
            "gsl_refraction_max": res.refraction_max,
            "gsl_reflection_max": res.reflection_max,
            "tangentiality_max": float(tang.max()),
            "compatibility_max": float(compat.max())}


# --------------------------------------------------------------------------
# entry point


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON run configuration")
    common.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, default=None, help="worker threads for the transforms")
    common.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
    common.add_argument("--strict", action="store_true", help="fail (exit 4) when the injectivity bound fails")
    common.add_argument("--force-rescale", action="store_true",
                        help="rescale unbalanced marginals instead of failing (exit 3)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="metalens-mmot",
                                     description="Multi-marginal transport solver for refracting-reflecting metalenses.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="dual ascent and map extraction")
    sub.add_parser("phase", parents=[common], help="full pipeline including phase synthesis")
    sub.add_parser("check-cost", parents=[common], help="cost derivative and twist checks")
    sub.add_parser("oracle", parents=[common], help="exact LP / brute-force values only")
    p = sub.add_parser("trace", parents=[common], help="ray residuals from maps and phase CSVs")
    p.add_argument("--maps", required=True, help="maps CSV (x,y,T2x,T2y,T3x,T3y,...)")
    p.add_argument("--phase", required=True, help="phase CSV (x,y,phix,phiy,phiz,...)")
    return parser


def _emit(cfg: RunConfig, out_dir, artifacts: dict) -> None:
    for name, text in artifacts.items():
        write_text(Path(out_dir) / name, text)
        log.info("wrote %s", Path(out_dir) / name)


def _main(args) -> int:
    path = Path(args.config)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    cfg = parse_config(text, base_dir=path.parent)
    out_dir = args.out if args.out is not None else cfg.out_dir
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        set_num_threads(args.threads)

    if args.command in ("solve", "phase"):
        summary, artifacts = run_pipeline(cfg, args.command, args.strict, args.force_rescale, args.threads)
        _emit(cfg, out_dir, artifacts)
        report = summary
    elif args.command == "check-cost":
        report = check_cost(cfg, args.strict, args.seed)
        if "summary_json" in cfg.emit:
            _emit(cfg, out_dir, {"check_cost.json": json_text(report)})
    elif args.command == "oracle":
        inst = build_instance(cfg, args.force_rescale)
        oracle = "lp" if cfg.solver.oracle == "none" else cfg.solver.oracle
        _check_oracle_size(inst, oracle, cfg.solver.oracle_cap)
        report = {"oracle": oracle, **_run_oracles(inst, oracle, cfg.solver.oracle_cap)}
        if "summary_json" in cfg.emit:
            _emit(cfg, out_dir, {"oracle.json": json_text(report)})
    else:
        report = trace_files(cfg, args.maps, args.phase)
        if "summary_json" in cfg.emit:
            _emit(cfg, out_dir, {"trace.json": json_text(report)})
    sys.stdout.write(json_text(report))
    return EXIT_OK


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return _main(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
