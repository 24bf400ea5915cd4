"""Command-line driver: orthocut {solve,round,alpha,gap,procrustes,rerun}.

Exit codes: 0 success, 2 unreadable or malformed input, 3 ill-posed instance
(not PSD, infeasible tuple, unsupported parameters).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .alpha import (
    AlphaEstimate,
    alpha_chi_1r,
    alpha_closed_form,
    alpha_complex_laguerre,
    alpha_lower_bounds,
    alpha_mc,
    phi_rho,
)
from .errors import CapacityError, FormatError, InputError, OrthoCutError, ShapeError, UnsupportedError
from .gap import GapConfig, measure_gap
from .linalg import RngSeed
from .problem import (
    BlockPsdMatrix,
    GroupTuple,
    StiefelTuple,
    build_procrustes,
    dump_json,
    load_tuple,
    objective,
    procrustes_residual,
)
from .rounding import RoundingConfig, round_best_of
from .solver import INITS, SolveConfig, local_ascent_group, solve_relaxation

log = logging.getLogger("orthocut")

EXIT_OK, EXIT_PARSE, EXIT_ILL_POSED = 0, 2, 3
ALPHA_COLUMNS = ["d", "r", "field", "method", "value", "se", "samples", "seed"]


class ParseFailure(Exception):
    """Input file could not be read into the expected structure."""


@dataclass
class RunManifest:
    subcommand: str
    argv: list
    config: dict
    seeds: dict
    version: str = __version__
    wall_clock: float = 0.0
    outputs: list = field(default_factory=list)
    python: str = field(default_factory=platform.python_version)
    numpy: str = field(default_factory=lambda: np.__version__)

    def to_json(self) -> dict:
        return asdict(self)


def default_seed() -> int:
    raw = os.environ.get("ORTHOCUT_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ParseFailure(f"ORTHOCUT_SEED must be an integer, got {raw!r}") from None


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseFailure(f"{path}: {exc}") from exc


def _load_instance(path: str) -> BlockPsdMatrix:
    obj = _read_json(path)
    try:
        return BlockPsdMatrix.from_json(obj)
    except (KeyError, TypeError) as exc:
        raise ParseFailure(f"{path}: not an instance file ({exc})") from exc


def _load_solution(path: str):
    obj = _read_json(path)
    try:
        return load_tuple(obj)
    except (KeyError, TypeError) as exc:
        raise ParseFailure(f"{path}: not a solution file ({exc})") from exc


def read_clouds(path: str) -> tuple[list, list]:
    """Point clouds from CSV with header cloud_id, point_id, x_1..x_d.

    Returns (cloud ids, list of d x k arrays); every cloud must list the same
    point ids, which fix the column order.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseFailure(f"{path}: {exc}") from exc
    if not rows:
        raise ParseFailure(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 2
    if d < 1 or header[:2] != ["cloud_id", "point_id"] or header[2:] != [f"x_{k + 1}" for k in range(d)]:
        raise ParseFailure(f"{path}: header must be cloud_id,point_id,x_1..x_d")
    clouds: dict = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 2:
            raise ShapeError(f"{path}:{lineno}: expected {d + 2} fields, got {len(row)}")
        try:
            coords = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise ParseFailure(f"{path}:{lineno}: {exc}") from exc
        pts = clouds.setdefault(row[0], {})
        if row[1] in pts:
            raise ParseFailure(f"{path}:{lineno}: duplicate point {row[1]!r} in cloud {row[0]!r}")
        pts[row[1]] = coords
    if len(clouds) < 2:
        raise ShapeError(f"{path}: need at least two clouds")
    ids = list(clouds)
    keys = sorted(clouds[ids[0]])
    for cid in ids:
        if sorted(clouds[cid]) != keys:
            raise ShapeError(f"{path}: cloud {cid!r} has a different point set")
    arrays = [np.array([clouds[cid][k] for k in keys]).T for cid in ids]
    return ids, arrays


def _write_json(obj, path: Optional[str], stdout):
    if path:
        with open(path, "w") as fh:
            dump_json(obj, fh, indent=2)
    else:
        dump_json(obj, stdout, indent=2)


def _solve_cfg(args) -> SolveConfig:
    return SolveConfig(
        max_sweeps=args.max_sweeps,
        rel_tol=args.rel_tol,
        restarts=args.restarts,
        init=args.init,
        seed=RngSeed(args.seed),
        shuffle=args.shuffle,
    )


def cmd_solve(args, out) -> dict:
    c = _load_instance(args.instance)
    x, rep = solve_relaxation(c, _solve_cfg(args))
    res = {"report": rep.to_json()}
    if args.out:
        with open(args.out, "w") as fh:
            dump_json(x.to_json(), fh)
        res["solution_path"] = args.out
    _write_json(res, args.report, out)
    return {"outputs": [p for p in (args.out, args.report) if p], "config": rep.config}


def _parse_target(text: str) -> tuple[str, Optional[int]]:
    if text == "group":
        return "group", None
    if text.startswith("stiefel:"):
        try:
            return "stiefel", int(text.split(":", 1)[1])
        except ValueError:
            pass
    raise argparse.ArgumentTypeError("target must be 'group' or 'stiefel:R'")


def cmd_round(args, out) -> dict:
    x = _load_solution(args.solution)
    c = _load_instance(args.instance)
    target, r = args.target
    cfg = RoundingConfig(target=target, r=r, draws=args.draws, seed=RngSeed(args.seed))
    best, value, stats = round_best_of(x, c, cfg)
    res = {"value": value, "draw_stats": stats.to_json()}
    if args.polish:
        polished, asc = local_ascent_group(c, best, SolveConfig(seed=RngSeed(args.seed)))
        best = polished
        res["polished_value"] = objective(c, polished)
        res["polish_sweeps"] = asc.sweeps
    if isinstance(x, StiefelTuple) and x.d == c.d:
        res["relaxation_value"] = objective(c, x)
        res["ratio"] = res.get("polished_value", value) / res["relaxation_value"]
    if args.out:
        with open(args.out, "w") as fh:
            dump_json(best.to_json(), fh)
        res["solution_path"] = args.out
    _write_json(res, args.report, out)
    return {"outputs": [p for p in (args.out, args.report) if p],
            "config": {"target": target, "r": r, "draws": args.draws, "polish": args.polish}}


def _alpha_rows(args) -> list:
    rows = []
    for d in args.d:
        r = args.r if args.r is not None else d
        if args.method == "mc":
            est = alpha_mc(d, r, args.field, args.samples, args.seed, jobs=args.jobs)
        elif args.method == "closed":
            if r != d:
                if d != 1 or args.field != "real":
                    raise UnsupportedError("closed form with r != d exists only for d = 1 real")
                est = alpha_chi_1r(r)
            else:
                est = alpha_closed_form(d, args.field)
        elif args.method == "laguerre":
            if args.field != "complex" or r != d:
                raise UnsupportedError("laguerre method is for complex, r = d")
            est = alpha_complex_laguerre(d)
        elif args.method == "phi":
            est = AlphaEstimate(phi_rho(r / d), "mp-limit", 0, 0.0, d, r, "real")
        else:
            est = AlphaEstimate(alpha_lower_bounds(d, args.field), "lower-bound", 0, 0.0, d, d, args.field)
        rows.append({
            "d": est.d, "r": est.r, "field": est.field, "method": est.method,
            "value": repr(est.value), "se": repr(est.std_error), "samples": est.samples,
            "seed": args.seed if args.method == "mc" else "",
        })
    return rows


def cmd_alpha(args, out) -> dict:
    rows = _alpha_rows(args)
    if args.json:
        dump_json({"rows": rows}, out, indent=2)
    else:
        w = csv.DictWriter(out, fieldnames=ALPHA_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return {"outputs": [], "config": {"method": args.method, "field": args.field, "d": args.d, "r": args.r,
                                      "samples": args.samples}}


def cmd_gap(args, out) -> dict:
    cfg = GapConfig(d=args.d, p=args.p, n=args.n, field=args.field, seed=args.seed, trials=args.trials,
                    draws=args.draws)
    rep = measure_gap(cfg, jobs=args.jobs)
    if args.json:
        dump_json(rep.to_json(), out, indent=2)
    else:
        out.write(rep.to_csv())
    return {"outputs": [], "config": asdict(cfg)}


def cmd_procrustes(args, out) -> dict:
    ids, clouds = read_clouds(args.clouds)
    c = build_procrustes(clouds)
    scfg = _solve_cfg(args)
    x, rep = solve_relaxation(c, scfg)
    rcfg = RoundingConfig(draws=args.draws, seed=RngSeed(args.seed).spawn(7))
    start, rounded, stats = round_best_of(x, c, rcfg)
    best, _ = local_ascent_group(c, start, SolveConfig(seed=RngSeed(args.seed)))
    value = objective(c, best)
    res = {
        "clouds": ids,
        "alignments": {cid: best.blocks[i].tolist() for i, cid in enumerate(ids)},
        "objective": value,
        "rounded_value": rounded,
        "relaxation_value": rep.objective,
        "relaxation_upper": rep.dual_bound,
        "ratio": value / rep.objective if rep.objective > 0 else 1.0,
        "residual": procrustes_residual(clouds, best),
        "residual_before": procrustes_residual(clouds, _identity_tuple(c)),
        "draw_stats": stats.to_json(),
    }
    _write_json(res, args.report, out)
    if args.aligned:
        with open(args.aligned, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            d = clouds[0].shape[0]
            w.writerow(["cloud_id", "point_id"] + [f"x_{k + 1}" for k in range(d)])
            for i, cid in enumerate(ids):
                pts = best.blocks[i].T @ clouds[i]
                for j in range(pts.shape[1]):
                    w.writerow([cid, j] + [repr(float(v)) for v in pts[:, j]])
    return {"outputs": [p for p in (args.report, args.aligned) if p], "config": scfg.to_json()}


def _identity_tuple(c: BlockPsdMatrix):
    return GroupTuple(np.broadcast_to(np.eye(c.d), (c.n, c.d, c.d)).copy())


def cmd_rerun(args, out) -> dict:
    man = _read_json(args.manifest)
    argv = man.get("argv")
    if not isinstance(argv, list) or not argv or argv[0] == "rerun":
        raise ParseFailure(f"{args.manifest}: manifest has no replayable argv")
    code = main(argv, stdout=out)
    if code:
        raise SystemExit(code)
    return {"outputs": [], "config": {"replayed": argv}}


def _add_solver_flags(p):
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--max-sweeps", type=int, default=1000)
    p.add_argument("--rel-tol", type=float, default=1e-9)
    p.add_argument("--init", choices=INITS, default="random")
    p.add_argument("--shuffle", action="store_true", help="random block order each sweep")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orthocut", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--manifest", help="write the run manifest here (default: stderr)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--seed", type=int, default=None, help="default: $ORTHOCUT_SEED or 0")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker threads; output does not depend on it")

    p = sub.add_parser("solve", help="solve the relaxation for an instance JSON")
    p.add_argument("instance")
    p.add_argument("--out", help="solution JSON path")
    p.add_argument("--report", help="report JSON path (default: stdout)")
    _add_solver_flags(p)
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("round", help="round a relaxation solution")
    p.add_argument("solution")
    p.add_argument("instance")
    p.add_argument("--target", type=_parse_target, default=("group", None), help="group or stiefel:R")
    p.add_argument("--draws", type=int, default=1)
    p.add_argument("--polish", action="store_true", help="local ascent from the best draw")
    p.add_argument("--out", help="rounded solution JSON path")
    p.add_argument("--report", help="stats JSON path (default: stdout)")
    common(p)
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("alpha", help="approximation constants as CSV")
    p.add_argument("--d", type=int, nargs="+", required=True)
    p.add_argument("--r", type=int, default=None, help="columns (default: d)")
    p.add_argument("--field", choices=("real", "complex"), default="real")
    p.add_argument("--method", choices=("mc", "closed", "laguerre", "phi", "lower"), default="mc")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", action="store_true", help="CSV output (the default)")
    common(p, jobs=True)
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("gap", help="measure the relaxation gap on random instances")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--field", choices=("real", "complex"), default="real")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--draws", type=int, default=16)
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", action="store_true", help="CSV output (the default)")
    common(p, jobs=True)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("procrustes", help="align point clouds from a CSV file")
    p.add_argument("clouds")
    p.add_argument("--draws", type=int, default=16)
    p.add_argument("--report", help="report JSON path (default: stdout)")
    p.add_argument("--aligned", help="write aligned clouds CSV here")
    _add_solver_flags(p)
    common(p)
    p.set_defaults(func=cmd_procrustes)

    p = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun, seed=0)
    return ap


def main(argv=None, stdout=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = stdout or sys.stdout
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        if args.seed is None:
            args.seed = default_seed()
        info = args.func(args, out)
    except (ParseFailure, FormatError, ShapeError) as exc:
        print(f"orthocut: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InputError, UnsupportedError, CapacityError) as exc:
        print(f"orthocut: ill-posed: {exc}", file=sys.stderr)
        return EXIT_ILL_POSED
    except OrthoCutError as exc:
        print(f"orthocut: {exc}", file=sys.stderr)
        return EXIT_ILL_POSED
    if args.command != "rerun":
        man = RunManifest(
            subcommand=args.command,
            argv=_pinned_argv(argv, args.seed),
            config=info["config"],
            seeds={"seed": args.seed},
            wall_clock=time.perf_counter() - t0,
            outputs=info["outputs"],
        )
        text = dump_json(man.to_json(), indent=2 if args.manifest else None)
        if args.manifest:
            with open(args.manifest, "w") as fh:
                fh.write(text + "\n")
        else:
            print(f"manifest: {text}", file=sys.stderr)
    return EXIT_OK


def _pinned_argv(argv: list, seed: int) -> list:
    """argv with an explicit --seed so a replay does not depend on the environment."""
    out, skip = [], False
    for i, a in enumerate(argv):
        if skip:
            skip = False
            continue
        if a == "--manifest":
            skip = True
            continue
        if a.startswith("--manifest="):
            continue
        out.append(a)
    if "--seed" not in out and not any(a.startswith("--seed=") for a in out):
        out += ["--seed", str(seed)]
    return out


if __name__ == "__main__":
    sys.exit(main())
