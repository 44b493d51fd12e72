"""Command line entry point: ``coexist <command> <problem.json>``."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .conditions import BoundarySampler
from .geometry import BracketError, DomainError
from .hammerstein import (
    ConvergenceError,
    HammersteinSystem,
    PreconditionError,
    certify,
    kernel_constants,
    localization_specs,
    refined_residual,
    solve_system,
    verify_H2,
    verify_localization,
)
from .index2d import BoundaryZeroError, star_annulus_polygon, verify_star_bump_example
from .philap import (
    SearchError,
    apply_T_philap,
    certify_philap,
    check_asymptotics,
    cone_defects,
    richardson_ratio,
    search_small_r,
    solve_philap,
)
from .spec import HammersteinProblem, PhilapProblem, PlanarProblem, SpecError, load_spec, parse_spec

COMMANDS = ("constants", "certify", "solve", "index", "asymptotics", "report")
EXIT_OK, EXIT_INPUT, EXIT_FAIL, EXIT_NUMERIC = 0, 1, 2, 3

INDEX_SEMANTICS = (
    "index values are finite-dimensional surrogates (planar winding degree and sampled boundary "
    "conditions); fixed point indices of the infinite-dimensional operators are not computed"
)
REFERENCE_RTOL = 1e-6


class InputError(ValueError):
    pass


def _clean(obj):
    """JSON-ready copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_csv(path: Path, t, x1, x2) -> Path:
    data = np.column_stack([t, x1, x2])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header="t,x1,x2", comments="")
    return path


# ---------------------------------------------------------------------------
# hammerstein pipeline

def _ham_constants(spec: HammersteinProblem, ctx: dict):
    kernels, _ = spec.build()
    out, ok = [], True
    consts = []
    for j, k in enumerate(kernels):
        kc = kernel_constants(k, n=spec.options.constants_grid)
        h2 = verify_H2(k)
        consts.append(kc)
        ok = ok and h2.passed
        out.append({"component": j + 1, "kernel": k.label, "constants": kc.to_dict(), "H2": h2.to_dict()})
    names = {"d": "d", "D": "D", "S": "S", "Sc": "S_c", "s": "s_small", "sc": "s_small_c"}
    comparison = []
    for key, ref in sorted(spec.reference_constants.items()):
        m = re.fullmatch(r"([dDSs])([12])(c?)", key)
        if m is None:
            raise InputError(f"reference constant {key!r} is not of the form d1, D2, S1c, s2c, ...")
        j = int(m.group(2)) - 1
        val = getattr(consts[j], names[m.group(1) + m.group(3)])
        rel = abs(val - ref) / max(abs(ref), 1e-300)
        comparison.append({"name": key, "computed": val, "reference": ref, "relative_difference": rel,
                           "agrees": bool(rel <= REFERENCE_RTOL)})
    ctx["constants"] = consts
    section = {"kernels": out, "reference_comparison": comparison,
               "disagreements": [c["name"] for c in comparison if not c["agrees"]]}
    return section, ok


def _ham_certify(spec: HammersteinProblem, ctx: dict):
    kernels, nls = spec.build()
    if "constants" not in ctx:
        ctx["constants"] = [kernel_constants(k, n=spec.options.constants_grid) for k in kernels]
    cert = certify(spec.theorem, kernels, nls, spec.r, spec.R, spec.A, spec.B, constants=ctx["constants"],
                   grid=spec.options.box_grid)
    return cert.to_dict(), cert.passed


def _ham_solve(spec: HammersteinProblem, ctx: dict):
    kernels, nls = spec.build()
    o = spec.options
    system = HammersteinSystem(kernels, nls, n=ctx["grid"] or o.grid)
    init = None if o.init is None else tuple(np.full(system.n, v) for v in o.init)
    res = solve_system(system, init, tol=o.tol, max_iter=o.max_iter, acceleration=o.acceleration)
    loc = verify_localization(res, localization_specs(system, spec.theorem, spec.r, spec.R))
    sups = [float(np.max(res.x1)), float(np.max(res.x2))]
    nontrivial = all(s > 1e-3 for s in sups)
    section = {"grid": system.n, "solver": res.summary(), "localization": loc, "sup_norms": sups,
               "nontrivial": nontrivial, "refined_residual": refined_residual(system, res)}
    ok = res.residual < 10 * o.tol and all(item["pass"] for item in loc) and nontrivial
    scalars = []
    for sc in spec.scalar:
        j = sc.component - 1
        init_s = [np.full(system.n, 5.0), np.full(system.n, 5.0)]
        init_s[1 - j] = np.zeros(system.n)
        sres = solve_system(system, tuple(init_s), tol=o.tol, max_iter=o.max_iter,
                            acceleration=o.acceleration, active=(j,))
        s = float(np.max([sres.x1, sres.x2][j]))
        lo, hi = sc.sup_bounds
        scalars.append({"component": sc.component, "sup_norm": s, "bounds": [lo, hi], "pass": bool(lo <= s <= hi),
                        "residual": sres.residual, "iterations": sres.iterations})
        ok = ok and lo <= s <= hi
    section["scalar_problems"] = scalars
    ctx["solution"] = (res.t, res.x1, res.x2)
    ctx["bands"] = [(spec.r[j], spec.R[j]) for j in (0, 1)]
    return section, ok


# ---------------------------------------------------------------------------
# phi-laplacian pipeline

def _phi_asymptotics(spec: PhilapProblem, ctx: dict):
    prob = spec.build()
    phi_ev, f_ev = check_asymptotics(prob)
    section = {"phi_ratio": [e.to_dict() for e in phi_ev], "growth": [e.to_dict() for e in f_ev]}
    return section, all(e.verdict for e in phi_ev + f_ev)


def _phi_radii(spec: PhilapProblem, ctx: dict):
    if "radii" in ctx:
        return ctx["radii"]
    prob = spec.build()
    if spec.r is not None:
        cert = certify_philap(prob, spec.r, spec.R, spec.options.box_grid)
        radii = (list(spec.r), list(spec.R), cert, None)
    else:
        r, cert = search_small_r(prob, grid=spec.options.box_grid)
        radii = ([r, r], [p.a for p in prob.phis], cert, r)
    ctx["radii"] = radii
    return radii


def _phi_certify(spec: PhilapProblem, ctx: dict):
    try:
        r, R, cert, searched = _phi_radii(spec, ctx)
    except SearchError as exc:
        return {"search": {"error": str(exc), "evidence": exc.evidence}}, False
    section = cert.to_dict()
    if searched is not None:
        section["search"] = {"r": searched, "start": R[0] / 4.0, "ratio": 0.5}
    return section, cert.passed


def _phi_solve(spec: PhilapProblem, ctx: dict):
    o = spec.options
    try:
        r, R, cert, _ = _phi_radii(spec, ctx)
    except SearchError as exc:
        return {"search": {"error": str(exc), "evidence": exc.evidence}}, False
    prob = spec.build(ctx["grid"])
    res = solve_philap(prob, tol=o.tol, max_iter=o.max_iter, r=r, R=R, acceleration=o.acceleration)
    rich = richardson_ratio(prob, o.richardson, tol=o.tol, max_iter=o.max_iter, r=r, R=R,
                            acceleration=o.acceleration)
    ok = (cert.passed and not res.flags["semi_trivial"] and all(item["pass"] for item in res.localization))
    ctx["solution"] = (res.t, res.x1, res.x2)
    ctx["bands"] = [(r[j], R[j]) for j in (0, 1)]
    section = {"grid": prob.n, "radii": {"r": r, "R": R}, "solver": res.summary(),
               "localization": res.localization, "grid_refinement": rich}
    return section, ok


def _phi_operator_checks(spec: PhilapProblem, ctx: dict):
    prob = spec.build(ctx["grid"])
    rng = np.random.default_rng(ctx["seed"])
    worst = {}
    bounded = True
    for _ in range(spec.options.samples):
        comps = []
        for _j in (0, 1):
            # random concave nonincreasing: negative cumulative sums of nondecreasing slopes
            slopes = np.sort(rng.exponential(size=prob.n - 1))
            x = np.concatenate([[0.0], np.cumsum(slopes)])[::-1] / prob.n * rng.uniform(0.1, 2.0)
            comps.append(x)
        ys = apply_T_philap(prob, *comps)
        for j, y in enumerate(ys):
            for k, v in cone_defects(y).items():
                worst[k] = max(worst.get(k, -np.inf), v)
            if prob.phis[j].singular:
                bounded = bounded and float(np.max(y)) <= prob.phis[j].a
    tol = 1e-12
    return {"samples": spec.options.samples, "worst_defects": worst, "singular_bound_holds": bounded}, \
        all(v <= tol for v in worst.values()) and bounded


# ---------------------------------------------------------------------------
# planar example

def _planar(spec: PlanarProblem, ctx: dict):
    if "planar" not in ctx:
        sampler = BoundarySampler(n_directions=spec.n_directions, n_other=4, seed=ctx["seed"])
        radii = np.geomspace(0.1, 10.0, spec.n_radii)
        ctx["planar"] = verify_star_bump_example(spec.eps, radii, spec.n_angles, sampler)
    return ctx["planar"]


def _planar_certify(spec: PlanarProblem, ctx: dict):
    rep = _planar(spec, ctx)
    return {"norm_margins": rep.norm_margins, "annulus_witnesses": rep.annulus_witnesses,
            "annulus_fail_everywhere": rep.annulus_fail_everywhere}, rep.norm_pass


def _planar_solve(spec: PlanarProblem, ctx: dict):
    rep = _planar(spec, ctx)
    ctx["planar_points"] = rep.fixed_points
    return {"fixed_points": rep.fixed_points, "max_deviation": rep.fixed_point_error}, rep.fixed_point_error < 1e-8


def _planar_index(spec: PlanarProblem, ctx: dict):
    rep = _planar(spec, ctx)
    agree = all(p["winding_product"] == p["predicted"] for p in rep.product_checks)
    section = {"component_index": rep.component_index, "degree": rep.degree, "flag_products": rep.product_checks,
               "label": INDEX_SEMANTICS}
    return section, rep.component_index == 1 and agree


PIPELINES = {
    "hammerstein": {"constants": [_ham_constants], "certify": [_ham_certify], "solve": [_ham_solve],
                    "report": [_ham_constants, _ham_certify, _ham_solve]},
    "philap": {"asymptotics": [_phi_asymptotics], "certify": [_phi_certify], "solve": [_phi_solve],
               "report": [_phi_asymptotics, _phi_operator_checks, _phi_certify, _phi_solve]},
    "planar-example": {"certify": [_planar_certify], "solve": [_planar_solve], "index": [_planar_index],
                       "report": [_planar_certify, _planar_solve, _planar_index]},
}
SECTION_NAMES = {
    _ham_constants: "constants", _ham_certify: "certificate", _ham_solve: "solution",
    _phi_asymptotics: "asymptotics", _phi_operator_checks: "operator_checks", _phi_certify: "certificate",
    _phi_solve: "solution", _planar_certify: "conditions", _planar_solve: "fixed_points", _planar_index: "index",
}


# ---------------------------------------------------------------------------
# driver

def content_hash(report: dict) -> str:
    body = {k: v for k, v in report.items() if k not in ("timings", "content_hash")}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def _load(path: str):
    """A problem file, or a previous run report whose embedded config is replayed."""
    p = Path(path)
    if p.suffix == ".json" and p.exists():
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            data = None
        if isinstance(data, dict) and data.get("tool") == "coexist" and "config" in data:
            return parse_spec(json.dumps(data["config"]["problem"]), str(p)), data["config"]["flags"]
    return load_spec(path), {}


def run(command: str, spec, out: Path, grid: Optional[int] = None, seed: int = 0, svg: bool = False) -> tuple[int, dict]:
    """Execute ``command`` on a validated spec; returns ``(exit code, report)``."""
    steps = PIPELINES[spec.kind].get(command)
    if steps is None:
        raise InputError(f"command {command!r} does not apply to {spec.kind} problems "
                         f"(available: {', '.join(PIPELINES[spec.kind])})")
    if seed < 0:
        raise InputError("seed must be nonnegative")
    if isinstance(spec, PlanarProblem) and seed == 0:
        seed = spec.seed
    ctx = {"grid": grid, "seed": seed}
    flags = {"command": command, "grid": grid, "seed": seed, "svg": svg}
    report = {"tool": "coexist", "version": __version__, "command": command,
              "config": {"problem": spec.model_dump(mode="json"), "flags": flags},
              "index_semantics": INDEX_SEMANTICS, "results": {}, "status": {}}
    timings = {}
    code = EXIT_OK
    for step in steps:
        name = SECTION_NAMES[step]
        t0 = time.perf_counter()
        try:
            section, ok = step(spec, ctx)
            report["status"][name] = "pass" if ok else "fail"
            if not ok:
                code = max(code, EXIT_FAIL)
        except (ConvergenceError, BoundaryZeroError, BracketError, DomainError, FloatingPointError) as exc:
            section = {"error": f"{type(exc).__name__}: {exc}"}
            report["status"][name] = "numerical-failure"
            code = EXIT_NUMERIC
        timings[name] = time.perf_counter() - t0
        report["results"][name] = section
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if "solution" in ctx:
        files.append(write_csv(out / "solution.csv", *ctx["solution"]).name)
    want_fig = command == "report" or svg
    if want_fig:
        from .plotting import plot_planar, plot_solution
        ext = ".svg" if svg else ".png"
        if "solution" in ctx:
            t, x1, x2 = ctx["solution"]
            files.append(plot_solution(t, (x1, x2), out / f"solution{ext}", ctx.get("bands"),
                                       spec.name).name)
        if "planar_points" in ctx:
            files.append(plot_planar(ctx["planar_points"], star_annulus_polygon(2.0).vertices,
                                     out / f"fixed_points{ext}", spec.name).name)
    report["files"] = sorted(files)
    report = _clean(report)
    report["content_hash"] = content_hash(report)
    report["timings"] = _clean(timings)
    (out / f"{command}.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return code, report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coexist", description=__doc__.strip())
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("spec", help="problem JSON, a previous run report, or a bundled example name")
    ap.add_argument("--out", default="coexist-out", type=Path, help="output directory")
    ap.add_argument("--grid", type=int, default=None, help="override the solver grid size")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized boundary sampling")
    ap.add_argument("--svg", action="store_true", help="write figures as SVG (default PNG, report only)")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec, replay = _load(args.spec)
        grid = args.grid if args.grid is not None else replay.get("grid")
        seed = args.seed if args.seed else replay.get("seed", 0)
        if grid is not None and grid < 7:
            raise InputError("--grid must be at least 7")
        code, report = run(args.command, spec, args.out, grid, seed, args.svg)
    except SpecError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for name, status in report["status"].items():
        print(f"{name:16s} {status}")
        section = report["results"][name]
        for chk in section.get("checks", []) if isinstance(section, dict) else []:
            if not chk["passed"]:
                print(f"  failed: {chk['name']} (margin {chk['margin']})")
    print(f"report: {args.out / (args.command + '.json')}  hash {report['content_hash'][:16]}")
    return code


if __name__ == "__main__":
    sys.exit(main())
