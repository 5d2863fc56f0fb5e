"""Command line interface: ``degenop {analyze,reduce,solve,verify,selftest}``.

Exit codes: 0 success, 1 configuration error, 2 the requested realization is
not a generator, 3 numerical failure (including failed verification).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__
from .generation import (BoundaryCondition, GenerationError, RegimeFlag, check_generation,
                         domain_description, regime_flags)
from .operator_core import (ConfigError, NegativeDiscriminantError, OperatorParams, SpaceParams,
                            indicial_roots, validate)
from .solver import (NonGeneratingError, ResolventProblem, SolverError, parabolic_march,
                     solve_adaptive, solve_resolvent_1d, solve_resolvent_2d,
                     solve_via_pipeline)
from .transform_calculus import reduce_to_canonical
from .weighted_spaces import (GradedMesh, GridFunction, boundary_trace, sobolev_term_norms,
                              weighted_lp_norm, write_csv)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NONGEN, EXIT_NUMERIC = 0, 1, 2, 3


class CLIError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------- config handling

def load_schema() -> dict:
    text = resources.files("degenop").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CLIError(EXIT_CONFIG, f"cannot read config: {exc}") from exc
    try:
        if path.endswith((".yaml", ".yml")):
            cfg = yaml.safe_load(text)
        else:
            cfg = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise CLIError(EXIT_CONFIG, f"cannot parse config: {exc}") from exc
    if cfg is None:
        cfg = {}
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CLIError(EXIT_CONFIG, f"config schema error at {where}: {exc.message}") from exc
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _need(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise CLIError(EXIT_CONFIG, f"config is missing required sections: {missing}")


def _params(cfg: dict) -> OperatorParams:
    try:
        return OperatorParams.from_dict(cfg["operator"])
    except ConfigError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from exc


def _space(cfg: dict) -> SpaceParams:
    sp_ = cfg.get("space", {"p": 2.0, "m": 0.0})
    return SpaceParams(sp_["p"], sp_["m"])


def _bc(cfg: dict, default: str = "dirichlet") -> BoundaryCondition:
    doc = cfg.get("bc", {"kind": default})
    return BoundaryCondition(doc["kind"], doc.get("v"))


def _mesh(cfg: dict, dim_x: int) -> GradedMesh:
    m = cfg["mesh"]
    n_x = m.get("n_x", 64 if dim_x else 0)
    if dim_x and not n_x:
        raise CLIError(EXIT_CONFIG, "dim_x = 1 needs mesh.n_x > 0")
    if dim_x > 1:
        raise CLIError(EXIT_CONFIG, "grid solves support dim_x <= 1")
    try:
        return GradedMesh(m["J"], m["Y"], m.get("r", 2.0), n_x if dim_x else 0,
                          m.get("X", math.pi))
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from exc


def _lambda(cfg: dict) -> complex | float:
    lam = cfg.get("lambda", 1.0)
    if isinstance(lam, dict):
        im = lam.get("im", 0.0)
        return complex(lam["re"], im) if im else float(lam["re"])
    return float(lam)


def make_rhs(cfg: dict, dim_x: int):
    doc = cfg.get("rhs", {"kind": "bump"})
    c0 = doc.get("center", 1.0)
    w = doc.get("width", 1.0)
    a = doc.get("amplitude", 1.0)
    vanish = doc["kind"] == "bump"

    def f(x, y):
        prof = a * np.exp(-((y - c0) / w) ** 2) * (y if vanish else 1.0)
        if dim_x:
            prof = prof * np.exp(np.cos(x))
        return prof
    return f


# ---------------------------------------------------------------- output

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _header(cfg: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "tool_version": __version__,
            "config_hash": config_hash(cfg)}


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands

def analyze_report(cfg: dict) -> dict:
    P = _params(cfg)
    S = _space(cfg)
    rep = validate(P)
    out = {**_header(cfg), "operator": P.to_dict(), "space": S.to_dict(),
           "validation": rep.to_dict(), "indicial": None, "flags": None,
           "generation": {"oblique": None, "dirichlet": None},
           "domain_spec": {"oblique": None, "dirichlet": None},
           "pipeline": {"oblique": None, "dirichlet": None}, "notes": []}
    if P.dim_x == 0:
        out["notes"].append("dim_x = 0: alpha1 has no effect; alpha1^- is taken as 0")
    try:
        out["indicial"] = indicial_roots(P).to_dict()
    except NegativeDiscriminantError:
        pass
    if not rep.ok:
        out["notes"].append("inadmissible coefficients: no generation analysis")
        return out
    flags = regime_flags(P, S)
    out["flags"] = sorted(f.value for f in flags)
    if RegimeFlag.DIRICHLET_ENLARGED_WINDOW in flags:
        out["notes"].append("enlarged Dirichlet window uses the lower end c/gamma - 1 + alpha1^-")
    for mode in ("oblique", "dirichlet"):
        bc = BoundaryCondition(mode)
        try:
            gen = check_generation(P, S, bc)
        except GenerationError as exc:
            out["generation"][mode] = {"generates": False, "window": None,
                                       "value": S.scaling_index, "realization": mode,
                                       "reasons": [str(exc)]}
            continue
        out["generation"][mode] = gen.to_dict()
        if gen.generates:
            out["domain_spec"][mode] = domain_description(P, S, bc).to_dict()
        try:
            out["pipeline"][mode] = reduce_to_canonical(P, S, mode)[2].to_dict()
        except ValueError:
            pass
    return out


def cmd_analyze(cfg: dict, out: Path, args) -> int:
    _need(cfg, "operator")
    write_json(out / "analyze.json", analyze_report(cfg))
    return EXIT_OK


def cmd_reduce(cfg: dict, out: Path, args) -> int:
    _need(cfg, "operator")
    P, S = _params(cfg), _space(cfg)
    mode = _bc(cfg).mode
    try:
        _, _, pipe = reduce_to_canonical(P, S, mode)
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from exc
    write_json(out / "reduce.json", {**_header(cfg), **pipe.to_dict()})
    return EXIT_OK


def cmd_solve(cfg: dict, out: Path, args) -> int:
    _need(cfg, "operator", "space", "bc", "mesh")
    P, S, bc = _params(cfg), _space(cfg), _bc(cfg)
    rep = validate(P)
    if not rep.ok:
        raise CLIError(EXIT_CONFIG, f"inadmissible operator: {rep.violations}")
    try:
        gen = check_generation(P, S, bc)
    except GenerationError as exc:
        raise CLIError(EXIT_NONGEN, str(exc)) from exc
    if not gen.generates:
        raise CLIError(EXIT_NONGEN, "not a generator: " + "; ".join(gen.reasons))
    mesh = _mesh(cfg, P.dim_x)
    lam = _lambda(cfg)
    f = make_rhs(cfg, P.dim_x)
    method = cfg.get("solver", "pipeline")
    if P.dim_x == 0:
        solve = solve_resolvent_1d if method == "direct" else solve_via_pipeline
    else:
        solve = solve_resolvent_2d if method == "direct" else solve_via_pipeline
    timings = {}
    t0 = time.perf_counter()
    prob = ResolventProblem(P, S, lam, f, bc, mesh)
    if cfg["mesh"].get("auto_truncation"):
        u = solve_adaptive(prob, solve)
        mesh = u.mesh
    else:
        u = solve(prob)
    timings["solve"] = time.perf_counter() - t0
    sigma = indicial_roots(P).s2 if bc.mode == "dirichlet" else P.c / P.gamma
    tr = boundary_trace(u, sigma)
    metrics = {
        **_header(cfg),
        "method": u.meta.get("method"),
        "residual": u.meta.get("residual"),
        "lambda": lam,
        "mesh": {"J": mesh.J, "Y": mesh.Y, "r": mesh.r, "n_x": mesh.n_x, "X": mesh.X},
        "generation": gen.to_dict(),
        "norms": {"solution": weighted_lp_norm(u, S.m, S.p),
                  "terms": sobolev_term_norms(u, P, S)},
        "trace": {"exponent": sigma, "max_abs_limit": float(np.max(np.abs(tr.limit))),
                  "confidence": tr.confidence,
                  "low_confidence": tr.low_confidence},
    }
    if "time" in cfg:
        t1 = time.perf_counter()
        g = GridFunction.sample(f, mesh).values
        tm = cfg["time"]
        _, mr = parabolic_march(P, S, bc, lambda t: g, tm["tau"], tm["n_steps"], mesh,
                                tm.get("q", 2.0), method=method)
        metrics["maxreg"] = mr.to_dict()
        timings["march"] = time.perf_counter() - t1
    metrics["timings"] = timings
    if args.format == "csv":
        write_csv(u, out / "solution.csv")
    else:
        X, Y = mesh.points()
        doc = {**_header(cfg), "x": X[:, 0] if mesh.n_x else None, "y": Y,
               "value": np.real(u.values).reshape(-1)}
        if np.iscomplexobj(u.values):
            doc["value_imag"] = np.imag(u.values).reshape(-1)
        write_json(out / "solution.json", doc)
    write_json(out / "metrics.json", metrics)
    return EXIT_OK


def _run_suites(names, args):
    from .verify import SUITES
    seeded = {"conjugation", "group_laws", "pipeline", "isometry"}

    def run(name):
        fn = SUITES[name]
        return fn(seed=args.seed) if name in seeded and args.seed is not None else fn()

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        return list(pool.map(run, names))


def cmd_verify(cfg: dict, out: Path, args) -> int:
    from .verify import SUITES
    names = cfg.get("verify", {}).get("suites", list(SUITES))
    results = _run_suites(names, args)
    for r in results:
        write_json(out / f"verify_{r.name}.json", {**_header(cfg), **r.to_dict(),
                                                   "timings": {"seconds": r.seconds}})
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.summary}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_selftest(cfg: dict, out: Path, args) -> int:
    from .verify import QUICK_SUITES
    results = _run_suites(QUICK_SUITES, args)
    doc = {**_header(cfg), "suites": [r.to_dict() for r in results],
           "passed": all(r.passed for r in results)}
    write_json(out / "selftest.json", doc)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.summary}")
    return EXIT_OK if doc["passed"] else EXIT_NUMERIC


COMMANDS = {"analyze": cmd_analyze, "reduce": cmd_reduce, "solve": cmd_solve,
            "verify": cmd_verify, "selftest": cmd_selftest}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="degenop", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"degenop {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name not in ("selftest", "verify"),
                       help="JSON or YAML run configuration")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized suites")
        p.add_argument("--threads", type=int, default=1, help="worker threads for suites")
        p.add_argument("--format", choices=("json", "csv"), default="csv",
                       help="format of the solution file written by solve")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except CLIError as exc:
        print(f"degenop: {exc}", file=sys.stderr)
        return exc.code
    except NonGeneratingError as exc:
        print(f"degenop: not a generator: {exc}", file=sys.stderr)
        return EXIT_NONGEN
    except (ConfigError, GenerationError) as exc:
        print(f"degenop: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"degenop: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
