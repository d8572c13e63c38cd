"""Command-line entry point: ``sphereforge <subcommand> ...``.

Exit codes: 0 success (an infeasibility certificate counts), 1 a run that
did not converge, failed verification or hit a solver failure, 2 bad usage
or unreadable input.

Artifacts embed the resolved configuration and seed but never output
paths or the thread count, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import sys
import warnings

import numpy as np

from sphereforge import __version__, records
from sphereforge import rng as rngmod
from sphereforge.design_uniform import PerturbConfig, ScaleWarning, random_start, solve_uniform_design
from sphereforge.design_weighted import (
    FarkasCertificate,
    WeightedDesign,
    min_separation,
    odd_features,
    solve_weights,
    verify_weighted_design,
)
from sphereforge.errors import DegenerateLPError, DimensionError, NonUnitError, RecordError
from sphereforge.hermite import gaussian_residuals
from sphereforge.mixture import MixtureInstance, build_instance, null_sample, sample
from sphereforge.parallel import ENV_THREADS, map_ordered, resolve_threads
from sphereforge.sq_harness import (
    MODES,
    InstanceHandle,
    PowerRow,
    StatOracleConfig,
    distinguisher_reports,
    power_csv,
    power_curve,
    report_csv,
)


class UsageError(Exception):
    pass


def _digest(path) -> str:
    try:
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError as exc:
        raise RecordError(f"cannot read {path}: {exc}") from exc


def _write_text(path, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _emit(path, record: dict) -> None:
    _write_text(path, records.dumps(record))


def _degrees(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part or ".." in part:
            lo, hi = part.replace("..", "-").split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if any(d < 1 for d in out):
        raise UsageError("degrees must be positive")
    return sorted(set(out))


def read_points(path) -> np.ndarray:
    """Points from a design record or from plain text with one point per line
    (comma or whitespace separated; ``#`` starts a comment)."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise RecordError(f"cannot read {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        rec = records.loads(text)
        if rec.get("kind") != "design":
            raise RecordError(f"expected a design record, found {rec.get('kind')!r}")
        return WeightedDesign.from_record(rec).points
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.replace(",", " ").split()])
        except ValueError as exc:
            raise RecordError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise RecordError(f"{path}: no points found")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise RecordError(f"{path}: rows have differing lengths {sorted(widths)}")
    pts = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise RecordError(f"{path}: non-finite coordinates")
    return pts


def _config(args, *drop) -> dict:
    skip = {"func", "threads", "out", "report", "samples", "queries", *drop}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# subcommands -----------------------------------------------------------------


def cmd_design_uniform(args) -> int:
    if args.t < 1 or args.t % 2 == 0:
        raise UsageError(f"--t must be a positive odd integer, got {args.t}")
    if args.start:
        y = read_points(args.start)
        if y.shape[1] != args.d:
            raise UsageError(f"start points have dimension {y.shape[1]}, --d is {args.d}")
        if args.r is not None and args.r != y.shape[0]:
            raise UsageError(f"start file has {y.shape[0]} points, --r is {args.r}")
        inputs = {"start_sha256": _digest(args.start)}
    else:
        if args.r is None:
            raise UsageError("--r is required without --start")
        y = random_start(args.r, args.d, args.seed)
        inputs = {}
    cfg = PerturbConfig(
        delta=args.delta,
        max_iterations=args.max_iterations,
        tolerance=args.tolerance,
        gauss_newton=not args.no_gauss_newton,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ScaleWarning)
        z, report = solve_uniform_design(y, args.t, cfg)
    body = WeightedDesign.uniform(z).to_record()
    body["t"] = args.t
    body["solve_report"] = report.to_record()
    body["warnings"] = [str(w.message) for w in caught if issubclass(w.category, ScaleWarning)]
    body["inputs"] = inputs
    conf = _config(args)
    conf["resolved"] = cfg.resolved(args.t, args.d).as_dict()
    _emit(args.out, records.wrap("design", body, config=conf, seed=args.seed))
    if args.report:
        _emit(args.report, records.wrap("solve-report", report.to_record(), config=conf, seed=args.seed))
    return 0 if report.converged else 1


def cmd_design_weighted(args) -> int:
    if args.k < 2:
        raise UsageError("--k must be at least 2")
    pts = read_points(args.points)
    try:
        result = solve_weights(pts, args.k)
    except (NonUnitError, DimensionError) as exc:
        raise RecordError(str(exc)) from exc
    conf = _config(args, "points")
    inputs = {"points_sha256": _digest(args.points)}
    if isinstance(result, FarkasCertificate):
        body = result.to_record()
        body["terms"] = [[list(a), c] for a, c in result.terms().items()]
        body["points"] = [float(v) for v in pts.ravel()]
        body["r"] = int(pts.shape[0])
        body["inputs"] = inputs
        _emit(args.out, records.wrap("certificate", body, config=conf))
        return 0
    body = result.to_record()
    body["k"] = args.k
    body["inputs"] = inputs
    body["residuals"] = verify_weighted_design(result, args.k).to_record()
    _emit(args.out, records.wrap("design", body, config=conf))
    return 0


def _verify_design(rec: dict, args) -> tuple:
    design = WeightedDesign.from_record(rec)
    if args.t is not None and args.k is not None:
        raise UsageError("give --t or --k, not both")
    if args.t is not None:
        if args.t < 1 or args.t % 2 == 0:
            raise UsageError("--t must be a positive odd integer")
        k = args.t + 1
    elif args.k is not None:
        k = args.k
    elif "t" in rec:
        k = int(rec["t"]) + 1
    elif "k" in rec:
        k = int(rec["k"])
    else:
        raise UsageError("design record carries no degree; pass --t or --k")
    sphere = verify_weighted_design(design, k).per_degree
    gauss = gaussian_residuals(design.points, design.weights, k)
    tol = args.tolerance
    ok = all(v <= tol for v in sphere.values()) and all(v <= tol for v in gauss.values())
    body = {
        "target": "design",
        "odd_degrees_below": k,
        "sphere_residuals": {str(s): v for s, v in sorted(sphere.items())},
        "gaussian_residuals": {str(s): v for s, v in sorted(gauss.items())},
        "separation": min_separation(design.points) if design.r >= 2 else None,
        "passed": ok,
    }
    return ok, body


def _verify_certificate(rec: dict, args) -> tuple:
    records.require(rec, "d", "k", "coeffs", "points", "r", "margin")
    pts = np.reshape(np.asarray(rec["points"], dtype=np.float64), (rec["r"], rec["d"]))
    vals = odd_features(pts, rec["k"]) @ np.asarray(rec["coeffs"], dtype=np.float64)
    ok = bool(vals.min() > 0)
    return ok, {"target": "certificate", "min_value": float(vals.min()), "passed": ok}


def _verify_instance(rec: dict, args) -> tuple:
    inst = MixtureInstance.from_record(rec)
    u = inst.projection
    body = {
        "target": "instance",
        "orthonormality_error": float(np.abs(u @ u.T - np.eye(inst.m)).max()),
        "separation_design": min_separation(inst.design.points) if inst.design.r >= 2 else None,
        "separation_embedded": min_separation(inst.directions) if inst.design.r >= 2 else None,
        "passed": True,
    }
    return True, body


def cmd_verify(args) -> int:
    rec = records.read(args.file)
    kind = rec.get("kind")
    handlers = {"design": _verify_design, "certificate": _verify_certificate, "instance": _verify_instance}
    if kind not in handlers:
        raise RecordError(f"cannot verify records of kind {kind!r}")
    ok, body = handlers[kind](rec, args)
    body["inputs"] = {"file_sha256": _digest(args.file)}
    _emit(args.out, records.wrap("verify-report", body, config=_config(args, "file")))
    return 0 if ok else 1


def _samples_csv(x: np.ndarray, y: np.ndarray) -> str:
    buf = io.StringIO()
    n = x.shape[1]
    buf.write(",".join([f"x_{i + 1}" for i in range(n)] + ["y"]) + "\n")
    if y.shape[0]:
        np.savetxt(buf, np.column_stack([x, y]), fmt=["%.17g"] * n + ["%d"], delimiter=",")
    return buf.getvalue()


def cmd_instance(args) -> int:
    rec = records.read(args.design, "design")
    design = WeightedDesign.from_record(rec)
    if args.n < design.d:
        raise UsageError(f"--n={args.n} is smaller than the design dimension {design.d}")
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    inst = build_instance(design, args.n, args.seed)
    # round-trip through the record so the written file is exactly what gets re-verified
    meta = records.wrap("instance", inst.to_record(), config=_config(args, "design"), seed=args.seed)
    meta["inputs"] = {"design_sha256": _digest(args.design)}
    MixtureInstance.from_record(records.loads(records.dumps(meta)))
    _emit(args.out, meta)
    if args.samples:
        s = sample(inst, args.count, args.seed, threads=args.threads)
        _write_text(args.samples, _samples_csv(s.x, s.y))
    return 0


def cmd_sample(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    if args.null:
        if args.n is None:
            raise UsageError("--null needs --n")
        s = null_sample(args.n, args.count, args.seed, threads=args.threads)
    else:
        if args.instance is None:
            raise UsageError("give --instance or --null")
        inst = MixtureInstance.from_record(records.read(args.instance, "instance"))
        s = sample(inst, args.count, args.seed, threads=args.threads)
    _write_text(args.out, _samples_csv(s.x, s.y))
    return 0


def _oracle(args) -> StatOracleConfig:
    if args.mode not in MODES:
        raise UsageError(f"unknown mode {args.mode!r}; choose from {', '.join(MODES)}")
    return StatOracleConfig(mode=args.mode, budget=args.budget, tau=args.tau, seed=args.seed)


def cmd_sq(args) -> int:
    oracle = _oracle(args)
    degrees = _degrees(args.degrees)
    inst = MixtureInstance.from_record(records.read(args.instance, "instance"))
    handle = InstanceHandle(inst)

    def one(i: int):
        seed = int(rngmod.stream(args.seed, "sq-run", i).integers(0, 2**63 - 1))
        return distinguisher_reports(handle, degrees, oracle.with_seed(seed))

    runs = map_ordered(one, range(args.runs), args.threads)
    rows = [PowerRow(0, D, args.runs, sum(int(r[D].detected) for r in runs)) for D in degrees]
    _write_text(args.out, power_csv(rows))
    if args.queries and runs and degrees:
        _write_text(args.queries, report_csv(runs[0][degrees[-1]], per_query=True))
    if args.report:
        body = {
            "oracle": oracle.as_dict(),
            "rows": [{"degree": r.degree, "runs": r.runs, "detections": r.detections, "rate": r.rate} for r in rows],
            "first_run": [runs[0][D].to_record() for D in degrees] if runs else [],
            "inputs": {"instance_sha256": _digest(args.instance)},
        }
        _emit(args.report, records.wrap("sq-report", body, config=_config(args, "instance"), seed=args.seed))
    return 0


def cmd_power(args) -> int:
    oracle = _oracle(args)
    degrees = _degrees(args.degrees)
    designs = None
    if args.design:
        designs = [WeightedDesign.from_record(records.read(p, "design")) for p in args.design]
        for d in designs:
            if d.d > args.n:
                raise UsageError(f"design dimension {d.d} exceeds --n={args.n}")
    rows = power_curve(designs, args.n, degrees, oracle, args.runs, threads=args.threads)
    _write_text(args.out, power_csv(rows))
    return 0


# parser ----------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads", type=_positive_int, default=None, help=f"worker cap (default: ${ENV_THREADS} or 1)"
    )

    p = argparse.ArgumentParser(prog="sphereforge", description="Odd spherical designs and moment-matched mixture instances.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("design-uniform", parents=[common], help="equal-weight design by perturbing seeded points")
    s.add_argument("--d", type=_positive_int, required=True)
    s.add_argument("--t", type=int, required=True)
    s.add_argument("--r", type=_positive_int)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--start", help="file of starting points instead of a seeded draw")
    s.add_argument("--delta", type=float)
    s.add_argument("--tolerance", type=float, default=1e-10)
    s.add_argument("--max-iterations", type=int, default=10_000)
    s.add_argument("--no-gauss-newton", action="store_true")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_design_uniform)

    s = sub.add_parser("design-weighted", parents=[common], help="solve for weights or a certificate")
    s.add_argument("--points", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_design_weighted)

    s = sub.add_parser("verify", parents=[common], help="re-check an artifact file")
    s.add_argument("file")
    s.add_argument("--t", type=int, help="check odd degrees <= t")
    s.add_argument("--k", type=int, help="check odd degrees < k")
    s.add_argument("--tolerance", type=float, default=1e-9)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("instance", parents=[common], help="embed a design and draw samples")
    s.add_argument("--design", required=True)
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--count", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--samples")
    s.set_defaults(func=cmd_instance)

    s = sub.add_parser("sample", parents=[common], help="draw labelled samples")
    s.add_argument("--instance")
    s.add_argument("--null", action="store_true")
    s.add_argument("--n", type=_positive_int)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    for name, helptext in (("sq", "distinguisher runs on one instance"), ("power", "detection rates over fresh embeddings")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        if name == "sq":
            s.add_argument("--instance", required=True)
            s.add_argument("--queries", help="per-query z-scores of the first run, as CSV")
            s.add_argument("--report")
        else:
            s.add_argument("--design", action="append", help="design file (repeatable); omit for null vs null")
            s.add_argument("--n", type=_positive_int, required=True)
        s.add_argument("--degrees", required=True, help="e.g. 1-3 or 1,3,5")
        s.add_argument("--mode", default="sampled")
        s.add_argument("--budget", type=_positive_int)
        s.add_argument("--tau", type=float)
        s.add_argument("--runs", type=_positive_int, default=1)
        s.add_argument("--seed", type=_seed, default=0)
        s.add_argument("--out", required=True)
        s.set_defaults(func=cmd_sq if name == "sq" else cmd_power)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.threads = resolve_threads(args.threads)
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (RecordError, ValueError) as exc:
        print(f"sphereforge: error: {exc}", file=sys.stderr)
        return 2
    except DegenerateLPError as exc:
        print(f"sphereforge: solver failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
