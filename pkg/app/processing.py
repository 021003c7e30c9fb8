"""Orchestration: turns a validated RunConfig into a report, tables and grids."""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from app.config import equation_from_dict
from app.errors import GlueConflict, ValidationError
from app.grid import PotentialField, TrigPolynomial, geometry_from_dict
from app.kernel import compute_fm, cone_margin
from app.properties import run_property_suite
from app.psh import (
    RadialMollifier,
    SampledPotential,
    SingularPotential,
    box_points,
    compute_cn,
    glue_potentials,
    gluing_threshold,
    lelong_level,
    mollify,
    quadratic_smooth,
)
from app.solver import (
    SolverOptions,
    class_path_probe,
    cohomology_integrals,
    continuity_solve,
    manufacture,
)
from app.storage import read_grid, read_sidecar
from app.toric import check_criterion, coefficients_from_dict, pair_from_dict
from utils.constants import EXIT_CODES

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    seed: int = 0
    threads: int = 1


@dataclass
class CommandResult:
    report: dict
    tables: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    primary_table: str = None
    exit_code: int = EXIT_CODES["success"]


# --- kernel ---


def run_kernel_cone(config, ctx):
    coeffs = equation_from_dict(config["equation"])
    lam = np.sort(np.asarray(config["lambda"], dtype=float))
    report = cone_margin(coeffs, float(config.get("t", 1.0)), lam)
    frame = pd.DataFrame({"lambda": lam, "load": report.per_index_load})
    return CommandResult({"lambda": lam.tolist(), **report.to_dict()},
                         {"loads": frame}, primary_table="loads")


def run_kernel_fm(config, ctx):
    coeffs = equation_from_dict(config["equation"])
    budget = compute_fm(coeffs, float(config["classRatio"]))
    frame = pd.DataFrame({"term": ["garding", "quadratic", "power", "classRatio", "K"],
                          "value": budget.terms()})
    return CommandResult(budget.to_dict(), {"terms": frame}, primary_table="terms")


def run_kernel_identities(config, ctx):
    frame = run_property_suite(seed=ctx.seed, samples=int(config.get("samples", 200)),
                               max_dim=int(config.get("maxDim", 6)))
    passed = bool(frame["passed"].all())
    report = {"passed": passed, "seed": ctx.seed, "properties": frame.to_dict(orient="records")}
    code = EXIT_CODES["success"] if passed else EXIT_CODES["failure"]
    return CommandResult(report, {"properties": frame}, primary_table="properties", exit_code=code)


# --- solve ---


def _source_grid(config, geom):
    """f on the grid from a trig polynomial, a grid file, or zero."""
    if "f" in config.document and "fGridPath" in config.document:
        raise ValidationError("give either f or fGridPath, not both")
    if "fGridPath" in config.document:
        values, _ = read_grid(config.path("fGridPath"), geom.grid_shape)
        return values
    if "f" in config.document:
        return TrigPolynomial.from_dict(config["f"], geom.n).sample(geom)
    return np.zeros(geom.grid_shape)


def run_solve(config, ctx):
    geom = geometry_from_dict(config["geometry"])
    coeffs = equation_from_dict(config["equation"])
    f_grid = _source_grid(config, geom)
    options = SolverOptions.from_dict(config.get("solver"), threads=ctx.threads)
    state = continuity_solve(geom, coeffs, f_grid, options)
    report = {"state": state.to_dict(),
              "integrals": cohomology_integrals(geom, coeffs, f_grid).to_dict(),
              "geometry": geom.to_dict()}
    if config.get("referencePath"):
        reference, _ = read_grid(config.path("referencePath"), geom.grid_shape)
        error = state.phi.values - PotentialField(reference).values
        report["recovery"] = {"supError": float(np.max(np.abs(error)))}
    tables = {"stages": state.stage_frame(), "newton_trace": state.trace_frame()}
    return CommandResult(report, tables, {"phi": (state.phi.values, geom)}, primary_table="stages")


def run_manufacture(config, ctx):
    geom = geometry_from_dict(config["geometry"])
    coeffs = equation_from_dict(config["equation"])
    case = manufacture(geom, coeffs, TrigPolynomial.from_dict(config["phiStar"], geom.n))
    integrals = cohomology_integrals(geom, coeffs, case.f_grid)
    report = {"minConeMargin": case.min_cone_margin, "fMean": float(np.mean(case.f_grid)),
              "fMin": float(np.min(case.f_grid)), "integrals": integrals.to_dict(),
              "geometry": geom.to_dict()}
    grids = {"f": (case.f_grid, geom), "phi_star": (case.phi_star.values, geom)}
    return CommandResult(report, grids=grids)


def run_classpath(config, ctx):
    geom = geometry_from_dict(config["geometry"])
    coeffs = equation_from_dict(config["equation"])
    options = SolverOptions.from_dict(config.get("solver"), threads=ctx.threads)
    result = class_path_probe(geom, coeffs, _source_grid(config, geom), config["sList"], options)
    return CommandResult(result.to_dict(), {"classpath": result.to_frame()}, primary_table="classpath")


# --- toric ---


def run_toric_check(config, ctx):
    pair = pair_from_dict(config.document)
    coeffs = coefficients_from_dict(config["equation"], pair)
    report = check_criterion(pair, coeffs, restrict_to=config.get("restrictTo"))
    code = EXIT_CODES["success"] if report.passed else EXIT_CODES["criterion_fail"]
    return CommandResult({**report.to_dict(), "sharedFan": [list(v) for v in pair.shared_fan]},
                         {"faces": report.to_frame()}, primary_table="faces", exit_code=code)


# --- psh ---


def _sampled_potential(config, n):
    """Smooth part interpolated from a grid file over the box named in its sidecar."""
    clashing = [key for key in ("gamma", "center", "smooth") if key in config.document]
    if clashing:
        raise ValidationError("samplesPath takes gamma, center and box from its sidecar",
                              keys=clashing)
    path = config.path("samplesPath")
    values, _ = read_grid(path)
    sidecar = read_sidecar(path)
    if values.ndim != 2 * n:
        raise ValidationError(f"sampled grid must have {2 * n} axes for n={n}",
                              gridShape=list(values.shape))
    lower, upper = (np.asarray(bound, dtype=float) for bound in sidecar["box"])
    if lower.shape != (2 * n,) or upper.shape != (2 * n,) or np.any(lower >= upper):
        raise ValidationError("sidecar box must give 2n increasing lower and upper bounds",
                              box=sidecar["box"])
    if min(values.shape) < 2:
        raise ValidationError("sampled grid needs at least two points per axis",
                              gridShape=list(values.shape))
    axes = [np.linspace(lo, hi, count) for lo, hi, count in zip(lower, upper, values.shape)]
    return SingularPotential.from_samples(n, axes, values, float(sidecar.get("gamma", 0.0)),
                                          sidecar.get("center"))


def _singular_potential(config, n):
    if "samplesPath" in config.document:
        return _sampled_potential(config, n)
    smooth = config.get("smooth")
    return SingularPotential(n, float(config.get("gamma", 0.0)), config.get("center"),
                             quadratic_smooth(**smooth) if smooth else None)


def run_psh_mollify(config, ctx):
    n = int(config["n"])
    mollifier = RadialMollifier(n, config.get("kernel", "poly"))
    potential = _singular_potential(config, n)
    delta = float(config["delta"])
    rows = [{"point": list(p), "value": mollify(potential, mollifier, delta, p)}
            for p in config["points"]]
    report = {"delta": delta, "kernel": mollifier.kind,
              "normalizationDefect": mollifier.normalization_defect, "values": rows}
    return CommandResult(report, {"values": pd.DataFrame(rows)}, primary_table="values")


def run_psh_lelong(config, ctx):
    n = int(config["n"])
    potential = _singular_potential(config, n)
    result = lelong_level(potential, config.get("point"), config["deltas"], float(config["r"]))
    return CommandResult(result.to_dict(), {"lelong": result.to_frame()}, primary_table="lelong")


def run_psh_cn(config, ctx):
    n = int(config["n"])
    mollifier = RadialMollifier(n, config.get("kernel", "poly"))
    cn = compute_cn(mollifier, n)
    report = {"n": n, "kernel": mollifier.kind, "cn": cn,
              "logMoment": mollifier.log_moment,
              "normalizationDefect": mollifier.normalization_defect}
    if "eps" in config.document and "r" in config.document:
        report["gluingThreshold"] = gluing_threshold(cn, float(config["eps"]), float(config["r"]))
    return CommandResult(report)


def run_psh_glue(config, ctx):
    coeffs = equation_from_dict(config["equation"])
    n = coeffs.n
    box = config["box"]
    if any(len(corner) != n for corner in box):
        raise ValidationError(f"box corners must have {n} coordinates", path="box")
    points = box_points(box, int(config.get("points", 41)))
    local, global_ = (SampledPotential.quadratic(points, config[k]["Q"], config[k].get("b"),
                                                 config[k].get("c", 0.0))
                      for k in ("local", "global"))
    collar = None
    if "innerRadius" in config.document and "outerRadius" in config.document:
        collar = (config.get("center", [0.0] * n), float(config["innerRadius"]),
                  float(config["outerRadius"]))
    result = glue_potentials(local, global_, float(config["eta"]), float(config["offset"]),
                             coeffs, config["W0"], config["X"], collar)
    if result.conflicts:
        raise GlueConflict(f"gluing produced {len(result.conflicts)} conflict(s)",
                           **result.to_dict())
    region = pd.Series(result.region.ravel()).map({1: "local", 0: "blend", -1: "global"})
    frame = pd.DataFrame(points.reshape(-1, n), columns=[f"x{i}" for i in range(n)])
    frame["value"] = result.values.ravel()
    frame["margin"] = result.margins.ravel()
    frame["region"] = region
    return CommandResult(result.to_dict(), {"glued": frame}, primary_table="glued")


COMMANDS = {
    "kernel.cone": run_kernel_cone,
    "kernel.fm": run_kernel_fm,
    "kernel.identities": run_kernel_identities,
    "solve.run": run_solve,
    "solve.manufacture": run_manufacture,
    "solve.classpath": run_classpath,
    "toric.check": run_toric_check,
    "psh.mollify": run_psh_mollify,
    "psh.lelong": run_psh_lelong,
    "psh.cn": run_psh_cn,
    "psh.glue": run_psh_glue,
}


def run_command(config, ctx):
    logger.info("running %s from %s", config.command, config.source)
    return COMMANDS[config.command](config, ctx)
