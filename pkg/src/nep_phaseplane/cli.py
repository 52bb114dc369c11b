"""Command-line front end.

Exit codes: 0 success, 1 computational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .errors import NepError
from .nonlin import BUILTIN_NAMES, resolve_model
from .problem import DIRICHLET, ROBIN, ProblemSpec

COMMANDS = {
    "phase": "sample an energy curve and report its boundary intersections",
    "timemap": "tabulate a time-map branch L(C) over a range of C",
    "solve": "find all solutions by shooting and write their profiles",
    "spectrum": "linearized eigenvalues around a stored profile",
    "branch": "trace a solution branch by pseudo-arclength continuation",
    "count": "count solutions by type from the time maps",
    "verify": "check a stored profile against the boundary-value problem",
}


@dataclass
class RunConfig:
    command: str
    model: str | None = None
    params: dict = field(default_factory=dict)
    out: str | None = None
    fmt: str = "csv"


def threads() -> int:
    """Worker count from NEP_THREADS (0 or unset means one per CPU)."""
    raw = os.environ.get("NEP_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


# -- parsing -------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    table = "\n".join(f"  {name:<9} {text}" for name, text in COMMANDS.items())
    p = argparse.ArgumentParser(
        prog="nep-phaseplane",
        description="Phase-plane tools for u'' + lambda f(u) = 0 with Robin or Dirichlet conditions.",
        epilog=f"commands:\n{table}\n\nmodels: {', '.join(BUILTIN_NAMES)} or a JSON model file",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def problem_args(sp, need_lambda=True, need_length=False):
        sp.add_argument("--model", required=True, help="built-in name or JSON model file")
        sp.add_argument("--alpha", type=float, help="Robin coefficient (nonzero)")
        sp.add_argument("--bc", choices=(ROBIN, DIRICHLET), default=ROBIN)
        sp.add_argument("--lambda", dest="lam", type=float, required=need_lambda)
        if need_length:
            sp.add_argument("--length", type=float, required=True)

    sp = sub.add_parser("phase", help=COMMANDS["phase"])
    problem_args(sp)
    sp.add_argument("--C", dest="C", type=float, required=True)
    sp.add_argument("--n", type=int, default=201)
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("timemap", help=COMMANDS["timemap"])
    problem_args(sp)
    sp.add_argument("--branch", required=True,
                    choices=("dirichlet", "sym1", "sym2", "asym_monotone", "asym_nonmonotone", "asym"))
    sp.add_argument("--cmin", type=float, required=True)
    sp.add_argument("--cmax", type=float, required=True)
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--spacing", choices=("log", "linear"), default="log")
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("solve", help=COMMANDS["solve"])
    problem_args(sp, need_length=True)
    sp.add_argument("--smin", type=float, default=-30.0)
    sp.add_argument("--smax", type=float, default=30.0)
    sp.add_argument("--nscan", type=int, default=512)
    sp.add_argument("--n", type=int, default=2048)
    sp.add_argument("--out", default="solution", help="prefix for <out>_<k>.csv and <out>.json")

    sp = sub.add_parser("spectrum", help=COMMANDS["spectrum"])
    sp.add_argument("--profile", required=True)
    sp.add_argument("--model", help="override the model recorded in the profile")
    sp.add_argument("--k", type=int, default=4)
    sp.add_argument("--out")

    sp = sub.add_parser("branch", help=COMMANDS["branch"])
    problem_args(sp, need_lambda=False, need_length=False)
    sp.add_argument("--length", type=float, default=1.0)
    sp.add_argument("--seed", nargs="+", default=["trivial"], metavar="trivial | profile FILE")
    sp.add_argument("--direction", type=float, choices=(1.0, -1.0), default=1.0)
    sp.add_argument("--steps", type=int, default=400)
    sp.add_argument("--ds", type=float, default=0.05)
    sp.add_argument("--ds-max", type=float, default=0.5)
    sp.add_argument("--lambda-max", type=float, default=math.inf)
    sp.add_argument("--N", type=int, default=400)
    sp.add_argument("--snapshots", type=int, default=0, help="store the full state every k points")
    sp.add_argument("--snapshot-out")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("count", help=COMMANDS["count"])
    problem_args(sp, need_length=True)
    sp.add_argument("--nscan", type=int, default=400)
    sp.add_argument("--cmax", type=float)
    sp.add_argument("--out")

    sp = sub.add_parser("verify", help=COMMANDS["verify"])
    sp.add_argument("--profile", required=True)
    sp.add_argument("--model", help="override the model recorded in the profile")
    return p


def parse_args(argv: list[str] | None = None) -> RunConfig:
    """Parse and validate; usage errors exit with status 2."""
    parser = _parser()
    ns = parser.parse_args(argv)
    params = {k: v for k, v in vars(ns).items() if k not in ("command", "model", "out", "format")}
    bc = params.get("bc")
    if getattr(ns, "lam", None) is not None and not ns.lam > 0:
        parser.error("--lambda must be positive")
    if getattr(ns, "length", None) is not None and not ns.length > 0:
        parser.error("--length must be positive")
    if bc == ROBIN and ns.command in ("phase", "timemap", "solve", "branch", "count"):
        if ns.alpha is None or ns.alpha == 0:
            parser.error("--alpha must be given and nonzero for robin conditions")
    if ns.command == "timemap" and not (0 < ns.cmin < ns.cmax if ns.spacing == "log" else ns.cmin < ns.cmax):
        parser.error("need cmin < cmax (and cmin > 0 for log spacing)")
    if ns.command == "branch":
        seed = ns.seed
        if not (seed == ["trivial"] or (len(seed) == 2 and seed[0] == "profile")):
            parser.error("--seed takes 'trivial' or 'profile FILE'")
        if ns.snapshots and not ns.snapshot_out:
            parser.error("--snapshots needs --snapshot-out")
    for key in ("n", "nscan", "steps", "N", "k"):
        if key in params and params[key] is not None and params[key] <= 0:
            parser.error(f"--{key} must be positive")
    return RunConfig(ns.command, getattr(ns, "model", None), params, getattr(ns, "out", None), getattr(ns, "format", "csv"))


# -- commands -------------------------------------------------------------------


def _problem(cfg: RunConfig, L: float = 1.0, lam: float | None = None) -> ProblemSpec:
    p = cfg.params
    model = resolve_model(cfg.model)
    alpha = p.get("alpha") if p.get("bc") == ROBIN else None
    return ProblemSpec(L, lam if lam is not None else p["lam"], model, alpha, p.get("bc", ROBIN))


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        io.write_atomic(cfg.out, text)
    else:
        sys.stdout.write(text)


def _run_phase(cfg: RunConfig) -> int:
    from .phase import classify, dirichlet_geometry, intersections, phase_samples

    problem = _problem(cfg)
    pot = problem.potential()
    C = cfg.params["C"]
    geom = dirichlet_geometry(pot, C) if problem.is_dirichlet else intersections(pot, problem.gamma_star, C)
    trajs = classify(geom)
    v, u = phase_samples(pot, C, cfg.params["n"])
    meta = {
        "C": C, "regime": geom.regime(), "s0": geom.s0, "gamma_star": geom.gamma_star,
        "C_tilde": geom.C_tilde, "v_tangent": geom.v_tangent,
        "intersections_plus": [list(p) for p in geom.intersections_plus],
        "intersections_minus": [list(p) for p in geom.intersections_minus],
        "classes": [{"tag": t.tag, "indices": list(t.indices), "boundary_case": t.boundary_case} for t in trajs],
    }
    if cfg.fmt == "json":
        meta["v"], meta["u"] = v, u
        _emit(cfg, io.dumps(meta) + "\n")
    else:
        _emit(cfg, io.table("phase", ["v", "u"], zip(v, u), meta))
    if cfg.out:
        print(f"regime: {geom.regime()} classes: {' '.join(t.tag for t in trajs) or 'none'}")
    return 0


def _run_timemap(cfg: RunConfig) -> int:
    from .timemap import branch_length

    p = cfg.params
    problem = _problem(cfg)
    pot = problem.potential()
    g = None if problem.is_dirichlet else problem.gamma_star
    if p["spacing"] == "log":
        grid = np.geomspace(p["cmin"], p["cmax"], p["n"])
    else:
        grid = np.linspace(p["cmin"], p["cmax"], p["n"])

    def one(C):
        try:
            return branch_length(pot, problem.lam, g, float(C), p["branch"])
        except NepError:
            from .timemap import TimeMapSample
            return TimeMapSample(float(C), p["branch"], math.nan, False)

    with ThreadPoolExecutor(max_workers=threads()) as pool:
        samples = list(pool.map(one, grid))  # map preserves C order
    if cfg.fmt == "json":
        _emit(cfg, io.dumps({"branch": p["branch"], "C": [s.C for s in samples],
                              "length": [s.length for s in samples], "valid": [s.valid for s in samples]}) + "\n")
    else:
        rows = [(s.C, s.length, s.valid) for s in samples]
        _emit(cfg, io.table("timemap", ["C", "length", "valid"], rows,
                            {"branch": p["branch"], "lambda": problem.lam, "alpha": problem.alpha, "model": cfg.model}))
    if cfg.out:
        print(f"timemap: {sum(s.valid for s in samples)}/{len(samples)} valid samples written to {cfg.out}")
    return 0


def _run_solve(cfg: RunConfig) -> int:
    from .greens import integral_residual
    from .shoot import shoot_robin_report

    p = cfg.params
    problem = _problem(cfg, L=p["length"])
    rep = shoot_robin_report(problem, p["smin"], p["smax"], p["nscan"], p["n"])
    pot = problem.potential()
    summary = []
    for k, prof in enumerate(rep.profiles):
        path = f"{cfg.out}_{k}.csv"
        io.write_profile(path, prof, cfg.model)
        entry = {
            "file": Path(path).name, "class": prof.cls, "C": prof.C, "u_max": prof.u_max,
            "boundary_residuals": list(prof.boundary_residuals()), "energy_drift": prof.energy_drift(pot),
        }
        if not problem.is_dirichlet and abs(2.0 + problem.alpha * problem.L) > 1e-12:
            entry["integral_residual"] = integral_residual(problem, prof)
        summary.append(entry)
    counts: dict[str, int] = {}
    for prof in rep.profiles:
        counts[prof.cls] = counts.get(prof.cls, 0) + 1
    io.write_atomic(f"{cfg.out}.json", io.dumps({
        "model": cfg.model, "alpha": problem.alpha, "lambda": problem.lam, "length": problem.L,
        "bc": problem.bc, "solutions": summary,
        "skipped": [{"s": s, "x": x} for s, x in rep.skipped],
    }) + "\n")
    print(f"solutions: {len(rep.profiles)} " + "(" + " ".join(f"{k[0]}:{v}" for k, v in sorted(counts.items())) + ")")
    return 0 if rep.profiles else 1


def _run_spectrum(cfg: RunConfig) -> int:
    from .eig import linearized_spectrum

    prof = io.read_profile(cfg.params["profile"], cfg.model)
    problem = ProblemSpec(prof.L, prof.lam, prof.model, prof.alpha, prof.bc)
    res = linearized_spectrum(problem, prof, cfg.params["k"])
    text = io.dumps({"mu": res.eigenvalues, "error_estimate": res.error_estimate, "n": res.n,
                     "lambda": prof.lam, "class": prof.cls}) + "\n"
    _emit(cfg, text)
    if cfg.out:
        print(f"mu1: {res.mu1:.10g}")
    return 0


def _run_branch(cfg: RunConfig) -> int:
    from .continuation import Discretization, fold_lambdas, seed_from_profile, trace_branch, trivial_state

    p = cfg.params
    model = resolve_model(cfg.model)
    if p["seed"][0] == "profile":
        prof = io.read_profile(p["seed"][1], cfg.model)
        start, disc = seed_from_profile(prof, p["N"])
    else:
        disc = Discretization(p["length"], model, p.get("alpha"), p["bc"], p["N"])
        start = trivial_state(disc)
    br = trace_branch(disc, start, p["direction"], p["steps"], p["ds"], p["ds_max"], p["lambda_max"])
    rows = [(b.s, b.lam, b.u_max, b.turning, b.mu1_sign) for b in br.summary()]
    try:
        folds = fold_lambdas(disc, br)
    except (NepError, ArithmeticError, ValueError):
        folds = []
    meta = {"model": cfg.model, "alpha": disc.alpha, "bc": disc.bc, "L": disc.L, "N": disc.N,
            "stop": br.stop_reason, "stalled": br.stalled, "turning_points": br.turning_points,
            "fold_lambdas": folds}
    io.write_atomic(cfg.out, io.table("branch", ["s", "lambda", "u_max", "turning", "mu1_sign"], rows, meta))
    if p["snapshots"]:
        snaps = [{"index": k, "s": st.s, "lambda": st.lam, "u": st.u}
                 for k, st in enumerate(br.states) if k % p["snapshots"] == 0]
        io.write_atomic(p["snapshot_out"], io.dumps({"x": disc.x, "states": snaps}) + "\n")
    lam_max = max(b.lam for b in br.summary())
    fold_text = " folds " + " ".join(f"{f:.10g}" for f in folds) if folds else ""
    print(f"branch: {len(br.states)} points, {len(br.turning_points)} turning points, "
          f"max lambda {lam_max:.10g},{fold_text} stop: {br.stop_reason}")
    return 1 if br.stalled and len(br.states) < 2 else 0


def _run_count(cfg: RunConfig) -> int:
    from .timemap import count_solutions

    p = cfg.params
    problem = _problem(cfg, L=p["length"])
    res = count_solutions(problem, n_scan=p["nscan"], c_max=p.get("cmax"))
    print(res.summary())
    if cfg.out:
        io.write_atomic(cfg.out, io.dumps({
            "total": res.total, "by_type": res.by_type,
            "roots": [{"C": r.C, "branch": r.branch, "class": r.tag, "tangent": r.tangent,
                       "multiplicity": r.multiplicity} for r in res.roots],
        }) + "\n")
    return 0


def _run_verify(cfg: RunConfig) -> int:
    from .greens import integral_residual

    prof = io.read_profile(cfg.params["profile"], cfg.model)
    problem = ProblemSpec(prof.L, prof.lam, prof.model, prof.alpha, prof.bc)
    left, right = prof.boundary_residuals()
    drift = prof.energy_drift(problem.potential()) if math.isfinite(prof.C) else math.nan
    h = prof.h
    ok = max(left, right) <= 1e-8
    line = f"residual: boundary={max(left, right):.3e} energy={drift:.3e}"
    if not problem.is_dirichlet and abs(2.0 + problem.alpha * problem.L) > 1e-12:
        g = integral_residual(problem, prof)
        ok = ok and g <= 10.0 * h * h
        line += f" greens={g:.3e} (bound {10 * h * h:.3e})"
    if math.isfinite(drift):
        ok = ok and drift <= 1e-8 * max(1.0, prof.C)
    print(line + (" ok" if ok else " FAILED"))
    return 0 if ok else 1


_DISPATCH = {
    "phase": _run_phase,
    "timemap": _run_timemap,
    "solve": _run_solve,
    "spectrum": _run_spectrum,
    "branch": _run_branch,
    "count": _run_count,
    "verify": _run_verify,
}


def run(cfg: RunConfig) -> int:
    try:
        return _DISPATCH[cfg.command](cfg)
    except (NepError, ArithmeticError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
