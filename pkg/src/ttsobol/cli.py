"""Command-line pipeline: build a surrogate, extract Sobol indices, aggregate, query, report.

Variables are numbered from 1 on the command line and in every output
file; grid indices passed to external evaluators are 0-based. Failures
exit with a nonzero status and a JSON object on stderr::

    {"error": "ChecksumError", "exit_code": 3, "message": "..."}

Exit codes: 0 ok, 2 usage, 3 data, 4 numerical, 5 capacity.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aggregate import AGGREGATIONS
from .als import tt_als_complete
from .cross import grid_evaluator, tt_cross
from .errors import CapacityError, DataError, NumericalError, TTSobolError, UsageError
from .grid import Grid, lhs, quantize
from .io import (
    ExternalEvaluator,
    build_report,
    ingest_samples,
    load_any,
    report_to_csv,
    save_sobol,
    save_tt,
    write_report,
    _read,
    _write,
)
from .models import MODELS, get_model
from .query import constrain_mask, hamming_mask, nonempty_mask, top_k
from .sobol import sobol_tensor
from .tt import tt_eval_batch, uniform_weights

log = logging.getLogger("ttsobol")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, usage=self.format_usage().strip())


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def _summary(meta: dict) -> dict:
    """Scalar fields of a metadata record, plus the rank chain."""
    return {k: v for k, v in meta.items() if k == "ranks" or not isinstance(v, (list, dict))}


def _read_meta(path) -> dict:
    p = _sidecar(path)
    if not p.exists():
        return {}
    try:
        return json.loads(_read(p).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise DataError(f"metadata file {p} is not valid JSON") from None


def _varlist(text: str | None) -> list[int]:
    """Parse a 1-based comma list into 0-based axis numbers."""
    if not text:
        return []
    try:
        out = [int(v) - 1 for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad variable list {text!r}") from None
    if any(v < 0 for v in out):
        raise UsageError(f"variables are numbered from 1: {text!r}")
    return out


def _orders(text: str) -> list[int]:
    """``"1..3"`` or ``"1,2"`` or ``"2"``."""
    out = []
    try:
        for part in text.split(","):
            if ".." in part:
                a, b = part.split("..")
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise UsageError(f"bad order list {text!r}") from None
    if not out:
        raise UsageError("no orders given")
    return out


def _load_sobol_tensor(path):
    obj = load_any(path)
    if isinstance(obj, tuple):
        s, meta = obj
        return s.S, meta
    return obj, _read_meta(path)


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_build_cross(args) -> dict:
    meta = {"builder": "cross", "bins": args.bins, "eps": args.eps, "seed": args.seed}
    if args.model:
        m = get_model(args.model, dim=args.dim, a_seed=args.seed)
        grid = Grid.uniform(m.ranges, args.bins, points=args.points)
        f = grid_evaluator(m.func, grid)
        meta.update(model=m.name, names=list(m.names), ranges=[list(r) for r in m.ranges], points=args.points)
        if m.spec is not None and hasattr(m.spec, "a"):
            meta["a"] = list(m.spec.a)
    else:
        if not args.dim:
            raise UsageError("--exec needs --dim")
        grid = Grid.uniform([(0, args.bins - 1)] * args.dim, args.bins)
        f = ExternalEvaluator(args.exec)
        meta.update(model="exec", command=args.exec, names=[f"x{n + 1}" for n in range(args.dim)])

    res = tt_cross(f, grid, eps=args.eps, max_evals=args.max_evals, seed=args.seed)
    meta.update(
        dims=list(grid.dims),
        ranks=list(res.tt.ranks),
        evals=res.evals,
        validation_error=res.error,
        converged=res.converged,
    )
    if args.lhs_test:
        # LHS design over the box, snapped to the nearest grid points
        u = lhs(args.lhs_test, grid.ndim, np.random.default_rng([args.seed, 1]))
        lo = np.array([ax[0] for ax in grid.axes])
        hi = np.array([ax[-1] for ax in grid.axes])
        idx = quantize(grid, lo + u * (hi - lo))
        y = np.asarray(f(idx), dtype=float)
        diff = tt_eval_batch(res.tt, idx) - y
        meta["lhs_test_points"] = args.lhs_test
        meta["lhs_test_error"] = float(np.linalg.norm(diff) / np.linalg.norm(y))
    save_tt(res.tt, args.output)
    _write(_sidecar(args.output), _dump(meta))
    return _summary(meta)


def cmd_build_als(args) -> dict:
    samples = ingest_samples(args.samples, seed=args.seed, levels=args.levels)
    if args.log_output:
        if np.any(samples.values <= 0):
            raise DataError("--log-output needs strictly positive values")
        samples.values = np.log(samples.values)
    if args.dims:
        dims = tuple(int(d) for d in args.dims.split(","))
    elif samples.levels is not None:
        dims = tuple(len(lv) for lv in samples.levels)
    else:
        dims = tuple(int(d) + 1 for d in samples.indices.max(axis=0))
    try:
        ranks = [int(r) for r in args.ranks.split(",")]
    except ValueError:
        raise UsageError(f"bad rank list {args.ranks!r}") from None
    ranks = ranks[0] if len(ranks) == 1 else ranks
    train, valid, test = (samples.subset(k) for k in ("train", "valid", "test"))
    if len(train) == 0:
        raise DataError("no training samples")
    res = tt_als_complete(
        train, dims, ranks, sweeps=args.sweeps, reg=args.reg, seed=args.seed, validation=valid, restarts=args.restarts
    )

    def rel(s):
        if len(s) == 0:
            return None
        y = s.values
        return float(np.linalg.norm(tt_eval_batch(res.tt, s.indices) - y) / np.linalg.norm(y))

    meta = {
        "builder": "als",
        "samples": str(args.samples),
        "dims": list(dims),
        "ranks": list(res.tt.ranks),
        "sweeps": args.sweeps,
        "restarts": args.restarts,
        "restart_kept": res.restart,
        "reg": args.reg,
        "seed": args.seed,
        "log_output": bool(args.log_output),
        "train_rmse": res.train_rmse,
        "n_train": len(train),
        "n_valid": len(valid),
        "n_test": len(test),
        "valid_error": rel(valid),
        "test_error": rel(test),
        "names": [f"x{n + 1}" for n in range(len(dims))],
    }
    if samples.levels is not None:
        meta["levels"] = [lv.tolist() for lv in samples.levels]
    save_tt(res.tt, args.output)
    _write(_sidecar(args.output), _dump(meta))
    return _summary(meta)


def cmd_sobol(args) -> dict:
    obj = load_any(args.input)
    if isinstance(obj, tuple):
        raise DataError(f"{args.input} already holds Sobol indices")
    meta = _read_meta(args.input)
    s = sobol_tensor(obj, uniform_weights(obj.dims), eps=args.eps)
    meta = {**meta, "sobol_eps": args.eps}
    save_sobol(s, args.output, meta)
    return {"total_variance": s.total_variance, "mean": s.mean, "ranks": list(s.S.ranks)}


def cmd_aggregate(args) -> dict:
    S, meta = _load_sobol_tensor(args.input)
    out = AGGREGATIONS[args.kind](S)
    save_tt(out, args.output)
    _write(_sidecar(args.output), _dump({**meta, "kind": args.kind}))
    return {"kind": args.kind, "ranks": list(out.ranks)}


def cmd_query(args) -> dict:
    T, meta = _load_sobol_tensor(args.input)
    N = T.ndim
    if args.order is not None and not 1 <= args.order <= N:
        raise UsageError(f"--order must lie in 1..{N}")
    frozen, forced = _varlist(args.freeze), _varlist(args.force)
    if any(v >= N for v in frozen + forced):
        raise UsageError(f"variables must lie in 1..{N}")
    both = sorted(set(frozen) & set(forced))
    if both:
        raise UsageError(f"variables both frozen and forced: {[v + 1 for v in both]}")
    if args.top < 1:
        raise UsageError("--top must be at least 1")
    m = hamming_mask(N, args.order) if args.order is not None else nonempty_mask(N)
    m = constrain_mask(m, frozen, forced)
    best = top_k(T, m, args.top, mode=args.mode, method=args.method, beam=args.beam, seed=args.seed)
    doc = {
        "input": str(args.input),
        "kind": meta.get("kind", "sobol"),
        "order": args.order,
        "freeze": sorted(v + 1 for v in m.frozen),
        "force": sorted(v + 1 for v in m.forced),
        "mode": args.mode,
        "method": args.method,
        "results": [
            {"variables": [a + 1 for a in alpha], "raw": v, "value": min(1.0, max(0.0, v))} for alpha, v in best
        ],
    }
    if args.output:
        _write(args.output, _dump(doc))
    return doc


def cmd_report(args) -> dict | None:
    obj = load_any(args.input)
    if not isinstance(obj, tuple):
        raise DataError(f"{args.input} is a TT file; report needs a Sobol file from the sobol command")
    s, meta = obj
    fmt = args.format
    target = args.output
    if target in ("json", "csv"):
        fmt, target = target, "-"
    if fmt is None:
        fmt = "csv" if str(target).lower().endswith(".csv") else "json"
    doc = build_report(s, _orders(args.orders), meta, top=args.top, timing=args.timing)
    if target == "-":
        sys.stdout.write(report_to_csv(doc) if fmt == "csv" else _dump(doc))
        return None
    write_report(doc, target, fmt)
    return {"output": str(target), "format": fmt, "order_contribution_sum": doc["order_contribution_sum"]}


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ttsobol", description="Sobol sensitivity analysis with tensor trains.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("build-cross", help="TT surrogate of a model by cross approximation")
    src = q.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", choices=MODELS)
    src.add_argument("--exec", metavar="CMD", help="external evaluator command (indices on stdin, values on stdout)")
    q.add_argument("--dim", type=int, help="number of variables (sobol-g; required with --exec)")
    q.add_argument("--bins", type=int, default=64)
    q.add_argument("--points", choices=("endpoints", "midpoints"), default="endpoints")
    q.add_argument("--eps", type=float, default=1e-6)
    q.add_argument("--max-evals", type=int, default=1_000_000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--lhs-test", type=int, default=0, metavar="K", help="report error on K LHS test points")
    q.add_argument("-o", "--output", required=True)
    q.set_defaults(func=cmd_build_cross)

    q = sub.add_parser("build-als", help="TT surrogate of scattered samples by ALS completion")
    q.add_argument("--samples", required=True)
    q.add_argument("--ranks", required=True, help="internal rank, or comma list of N-1 ranks")
    q.add_argument("--sweeps", type=int, default=25)
    q.add_argument("--reg", type=float, default=1e-8)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--restarts", type=int, default=3, help="random starts; the best on the valid split is kept")
    q.add_argument("--log-output", action="store_true", help="fit the logarithm of the values")
    q.add_argument("--levels", choices=("index", "auto"), default="index")
    q.add_argument("--dims", help="comma list of grid sizes (default: inferred)")
    q.add_argument("-o", "--output", required=True)
    q.set_defaults(func=cmd_build_als)

    q = sub.add_parser("sobol", help="extract the Sobol tensor from a TT surrogate")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--eps", type=float, default=1e-6)
    q.add_argument("-o", "--output", required=True)
    q.set_defaults(func=cmd_sobol)

    q = sub.add_parser("aggregate", help="superset, closed or total indices")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--kind", choices=sorted(AGGREGATIONS), required=True)
    q.add_argument("-o", "--output", required=True)
    q.set_defaults(func=cmd_aggregate)

    q = sub.add_parser("query", help="best variable subsets under order and membership constraints")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--order", type=int)
    q.add_argument("--freeze", help="comma list of variables to exclude")
    q.add_argument("--force", help="comma list of variables to include")
    q.add_argument("--mode", choices=("max", "min"), default="max")
    q.add_argument("--top", type=int, default=1)
    q.add_argument("--method", choices=("exhaustive", "heuristic"), default="exhaustive")
    q.add_argument("--beam", type=int, default=64)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("-o", "--output")
    q.set_defaults(func=cmd_query)

    q = sub.add_parser("report", help="JSON or CSV report of a Sobol file")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--orders", default="1..2", help='e.g. "1..3" or "1,2"')
    q.add_argument("--top", type=int, default=5)
    q.add_argument("--format", choices=("json", "csv"))
    q.add_argument("--timing", action="store_true", help="include query wall times")
    q.add_argument("-o", "--output", default="-", help='file, "-" for stdout, or just "json"/"csv"')
    q.set_defaults(func=cmd_report)
    return p


def _fail(code: int, kind: str, message: str, details: dict | None = None) -> int:
    doc = {"error": kind, "exit_code": code, "message": message}
    if details:
        doc["details"] = details
    sys.stderr.write(json.dumps(doc, sort_keys=True, default=str) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except TTSobolError as e:
        return _fail(e.exit_code, type(e).__name__, str(e), e.details)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(name)s: %(message)s")
    try:
        out = args.func(args)
    except TTSobolError as e:
        return _fail(e.exit_code, type(e).__name__, str(e), e.details)
    except np.linalg.LinAlgError as e:
        return _fail(NumericalError.exit_code, "LinAlgError", str(e))
    except MemoryError:
        return _fail(CapacityError.exit_code, "MemoryError", "out of memory")
    if out is not None:
        sys.stdout.write(_dump(out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
