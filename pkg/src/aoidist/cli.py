"""Command-line surface: analyze, simulate, compare, sweep, selftest.

Reports are emitted as JSON (full) or CSV (one row per abscissa, metadata and
scalar metrics as ``#``-prefixed header lines, 17 significant digits).  File
writes are whole-file atomic.  Exit codes: 0 ok, 2 invalid input,
3 insufficient data, 4 tolerance failure in compare.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .age import (
    age_ccdf,
    age_cdf,
    age_density,
    age_mean,
    age_moment,
    age_quantile,
)
from .chain import ParameterError, SystemParams
from .exppoly import ep_eval, ep_integral, ep_tail_closed
from .palm import age_at_informative, components
from .sim import (
    InsufficientDataError,
    SimConfig,
    empirical_age_cdf,
    ks_distance,
    mean_age_se,
    simulate,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INSUFFICIENT = 3
EXIT_TOLERANCE = 4

DEFAULT_EPSILONS = (0.5, 0.1, 0.01, 1e-3)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _flatten(prefix: str, obj, out: list[tuple[str, str]]) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, (list, tuple)):
        out.append((prefix, " ".join(_fmt(v) if isinstance(v, float) else str(v)
                                     for v in obj)))
    elif isinstance(obj, float):
        out.append((prefix, _fmt(obj)))
    else:
        out.append((prefix, str(obj)))


def _to_csv(report: dict, columns: list[tuple[str, list[float]]],
            skip: tuple[str, ...]) -> str:
    """Tabular emission: the grid-indexed sections become columns, everything
    else becomes ``# key: value`` header lines."""
    lines = []
    meta: list[tuple[str, str]] = []
    for key, val in report.items():
        if key not in skip:
            _flatten(key, val, meta)
    for k, v in meta:
        lines.append(f"# {k}: {v}")
    lines.append(",".join(name for name, _ in columns))
    n_rows = len(columns[0][1]) if columns else 0
    for i in range(n_rows):
        lines.append(",".join(_fmt(vals[i]) for _, vals in columns))
    return "\n".join(lines) + "\n"


def _emit(report: dict, columns: list[tuple[str, list[float]]],
          fmt: str, output: str | None, command: str,
          csv_skip: tuple[str, ...] = ()) -> None:
    if fmt == "json":
        text = json.dumps(report, indent=2) + "\n"
    else:
        text = _to_csv(report, columns, csv_skip)
    if output is None and os.environ.get("OUTPUT_DIR"):
        output = str(Path(os.environ["OUTPUT_DIR"]) / f"{command}.{fmt}")
    if output is None:
        sys.stdout.write(text)
    else:
        _atomic_write(Path(output), text)


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

def _parse_grid(spec: str) -> np.ndarray:
    try:
        start_s, stop_s, count_s = spec.split(":")
        start, stop, count = float(start_s), float(stop_s), int(count_s)
    except ValueError as exc:
        raise ValueError(f"grid must be 'start:stop:count', got {spec!r}") from exc
    if count < 2 or not stop > start or start < 0:
        raise ValueError(f"grid must be non-empty and strictly increasing, got {spec!r}")
    return np.linspace(start, stop, count)


def _parse_rates(spec: str) -> list[float]:
    vals = [float(v) for v in spec.split(",") if v.strip()]
    if not vals:
        raise ValueError(f"empty rate list {spec!r}")
    return vals


def _params(args) -> SystemParams:
    return SystemParams(args.lam, args.mu, args.imax)


def _add_param_flags(p: argparse.ArgumentParser, rates_as_list: bool = False) -> None:
    conv = _parse_rates if rates_as_list else float
    p.add_argument("--lambda", dest="lam", type=conv, required=True,
                   help="message generation rate")
    p.add_argument("--mu", type=conv, required=True,
                   help="per-message delivery rate")
    p.add_argument("--imax", type=int, required=True,
                   help="window limit on informative messages in flight")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--output", default=None, help="output path (default stdout)")


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--messages", type=lambda s: int(float(s)), default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--warmup", type=float, default=0.05)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="aoidist", description=__doc__)
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="closed-form age distribution and metrics")
    _add_param_flags(pa)
    pa.add_argument("--grid", default=None, help="abscissae as start:stop:count")
    pa.add_argument("--epsilons", default=None, help="comma list of quantile levels")
    _add_output_flags(pa)

    ps = sub.add_parser("simulate", help="discrete-event simulation report")
    _add_param_flags(ps)
    ps.add_argument("--grid", default=None)
    _add_sim_flags(ps)
    _add_output_flags(ps)

    pc = sub.add_parser("compare", help="analytic vs simulated, with verdict")
    _add_param_flags(pc)
    pc.add_argument("--grid", default=None)
    _add_sim_flags(pc)
    pc.add_argument("--ks-tol", type=float, default=0.02,
                    help="KS-distance tolerance for both CDF overlays")
    pc.add_argument("--mean-tol-se", type=float, default=3.0,
                    help="allowed |mean difference| in batch-means SES")
    _add_output_flags(pc)

    pw = sub.add_parser("sweep", help="metrics over a Cartesian rate grid")
    _add_param_flags(pw, rates_as_list=True)
    pw.add_argument("--epsilons", default=None)
    pw.add_argument("--jobs", type=int, default=1)
    _add_output_flags(pw)

    pt = sub.add_parser("selftest", help="run the embedded worked-example suite")
    return top


def _epsilons(args) -> tuple[float, ...]:
    if getattr(args, "epsilons", None) is None:
        return DEFAULT_EPSILONS
    eps = tuple(float(v) for v in args.epsilons.split(",") if v.strip())
    if not eps or any(not 0.0 < e < 1.0 for e in eps):
        raise ValueError(f"quantile levels must lie in (0, 1), got {args.epsilons!r}")
    return eps


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _meta(args, params: SystemParams, **extra) -> dict:
    meta = {
        "command": args.command,
        "params": {"lambda": params.lam, "mu": params.mu, "imax": params.i_max},
        "seed": getattr(args, "seed", None),
        "version": __version__,
    }
    meta.update(extra)
    return meta


def _metrics(dist, epsilons) -> dict:
    quantiles = {}
    for eps in epsilons:
        q = age_quantile(dist, eps)
        if abs(age_ccdf(dist, q) - eps) > 1e-6:
            raise RuntimeError(f"quantile consistency violated at eps={eps}")
        quantiles[_fmt(eps)] = q
    return {
        "mean": age_mean(dist),
        "m2": age_moment(dist, 2),
        "m3": age_moment(dist, 3),
        "quantiles": quantiles,
    }


def _check_curves(pdf, cdf, ccdf) -> None:
    cdfa = np.asarray(cdf)
    if np.any(np.asarray(pdf) < -1e-9) or np.any(np.diff(cdfa) < -1e-12):
        raise RuntimeError("emitted curves violate density/CDF invariants")
    if np.any(np.abs(cdfa + np.asarray(ccdf) - 1.0) > 1e-12):
        raise RuntimeError("CDF + CCDF must equal 1")


def cmd_analyze(args) -> int:
    params = _params(args)
    dist = age_density(params)
    comp = components(params)
    grid = (_parse_grid(args.grid) if args.grid is not None
            else np.linspace(0.0, age_quantile(dist, 1e-4), 512))
    tail = ep_tail_closed(dist.density)
    pdf = [ep_eval(dist.density, x) for x in grid]
    ccdf = [ep_eval(tail, x) for x in grid]
    cdf = [1.0 - c for c in ccdf]
    arrival_density = age_at_informative(params)
    arrival_tail = ep_tail_closed(arrival_density)
    at_ccdf = [ep_eval(arrival_tail, x) for x in grid]
    _check_curves(pdf, cdf, ccdf)

    report = {
        "meta": _meta(args, params),
        "stationary": list(comp.fwd.p),
        "exit_rates": {"forward": list(comp.fwd.d_tilde),
                       "reversed": list(comp.rev.d_prime)},
        "palm_weights": {f"{a}->{b}": w
                         for (a, b), w in sorted(comp.weights.weights.items())},
        "age": {"grid": list(grid), "pdf": pdf, "cdf": cdf, "ccdf": ccdf},
        "at_arrival": {"grid": list(grid), "ccdf": at_ccdf},
        "metrics": _metrics(dist, _epsilons(args)),
    }
    columns = [("x", list(grid)), ("age_pdf", pdf), ("age_cdf", cdf),
               ("age_ccdf", ccdf), ("at_arrival_ccdf", at_ccdf)]
    _emit(report, columns, args.format, args.output, "analyze",
          csv_skip=("age", "at_arrival"))
    return EXIT_OK


def _run_sim(args, params: SystemParams):
    config = SimConfig(params, n_messages=args.messages, seed=args.seed,
                       warmup_fraction=args.warmup)
    result = simulate(config)
    if result.n_cycles < 1:
        raise InsufficientDataError("run produced fewer than 2 informative arrivals")
    return result


def cmd_simulate(args) -> int:
    params = _params(args)
    result = _run_sim(args, params)
    grid = (_parse_grid(args.grid) if args.grid is not None
            else np.linspace(0.0, float(np.max(result.informative_ages)) * 1.5, 512))
    ecdf = [empirical_age_cdf(result, x) for x in grid]
    ages = np.sort(result.informative_ages)
    at_ccdf = [float(1.0 - np.searchsorted(ages, x, side="right") / len(ages))
               for x in grid]
    se = mean_age_se(result)
    report = {
        "meta": _meta(args, params, messages=args.messages, warmup=args.warmup),
        "counters": result.counters,
        "age": {"grid": list(grid), "cdf": ecdf},
        "at_arrival": {"grid": list(grid), "ccdf": at_ccdf},
        "metrics": {"mean": result.mean_age_timeavg,
                    "mean_palm": result.mean_age_palm,
                    "se": se,
                    "cycles": result.n_cycles},
    }
    columns = [("x", list(grid)), ("age_cdf_empirical", ecdf),
               ("at_arrival_ccdf_empirical", at_ccdf)]
    _emit(report, columns, args.format, args.output, "simulate",
          csv_skip=("age", "at_arrival"))
    return EXIT_OK


def cmd_compare(args) -> int:
    params = _params(args)
    dist = age_density(params)
    result = _run_sim(args, params)
    grid = (_parse_grid(args.grid) if args.grid is not None
            else np.linspace(0.0, age_quantile(dist, 1e-4), 512))

    tail = ep_tail_closed(dist.density)
    ana_cdf = [1.0 - ep_eval(tail, x) for x in grid]
    emp_cdf = [empirical_age_cdf(result, x) for x in grid]
    arrival_density = age_at_informative(params)
    arrival_tail = ep_tail_closed(arrival_density)
    ana_at = [ep_eval(arrival_tail, x) for x in grid]
    ages = np.sort(result.informative_ages)
    emp_at = [float(1.0 - np.searchsorted(ages, x, side="right") / len(ages))
              for x in grid]

    ks_cdf = float(np.max(np.abs(np.asarray(ana_cdf) - np.asarray(emp_cdf))))
    ks_at = ks_distance(result.informative_ages,
                        lambda x: 1.0 - ep_eval(arrival_tail, x))
    mae = float(np.mean(np.abs(np.asarray(ana_cdf) - np.asarray(emp_cdf))))
    se = mean_age_se(result)
    mean_ana = age_mean(dist)
    mean_diff_se = abs(mean_ana - result.mean_age_timeavg) / se

    ok = (ks_cdf < args.ks_tol and ks_at < args.ks_tol
          and mean_diff_se <= args.mean_tol_se)
    report = {
        "meta": _meta(args, params, messages=args.messages, warmup=args.warmup),
        "tolerances": {"ks": args.ks_tol, "mean_se": args.mean_tol_se},
        "grid": list(grid),
        "age_cdf": {"analytic": ana_cdf, "empirical": emp_cdf},
        "at_arrival_ccdf": {"analytic": ana_at, "empirical": emp_at},
        "metrics": {"ks_cdf": ks_cdf, "ks_at_arrival": ks_at, "mae_cdf": mae,
                    "mean_analytic": mean_ana, "mean_sim": result.mean_age_timeavg,
                    "se_sim": se, "mean_diff_se": mean_diff_se},
        "verdict": "pass" if ok else "fail",
    }
    columns = [("x", list(grid)),
               ("age_cdf_analytic", ana_cdf), ("age_cdf_empirical", emp_cdf),
               ("at_arrival_ccdf_analytic", ana_at),
               ("at_arrival_ccdf_empirical", emp_at)]
    _emit(report, columns, args.format, args.output, "compare",
          csv_skip=("grid", "age_cdf", "at_arrival_ccdf"))
    return EXIT_OK if ok else EXIT_TOLERANCE


def _sweep_point(item) -> dict:
    lam, mu, imax, epsilons = item
    params = SystemParams(lam, mu, imax)
    dist = age_density(params)
    point = {"lambda": lam, "mu": mu, "imax": imax}
    point.update(_metrics(dist, epsilons))
    return point


def cmd_sweep(args) -> int:
    epsilons = _epsilons(args)
    items = [(lam, mu, args.imax, epsilons) for lam in args.lam for mu in args.mu]
    # validate up front so bad params fail before any work is farmed out
    for lam, mu, imax, _ in items:
        SystemParams(lam, mu, imax)
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            points = list(pool.map(_sweep_point, items))
    else:
        points = [_sweep_point(it) for it in items]
    report = {
        "meta": {"command": "sweep", "imax": args.imax, "version": __version__,
                 "epsilons": [float(e) for e in epsilons]},
        "points": points,
    }
    columns = [("lambda", [p["lambda"] for p in points]),
               ("mu", [p["mu"] for p in points]),
               ("mean", [p["mean"] for p in points]),
               ("m2", [p["m2"] for p in points]),
               ("m3", [p["m3"] for p in points])]
    for eps in epsilons:
        key = _fmt(eps)
        columns.append((f"q_{key}", [p["quantiles"][key] for p in points]))
    _emit(report, columns, args.format, args.output, "sweep",
          csv_skip=("points",))
    return EXIT_OK


def cmd_selftest(args) -> int:
    failures = 0

    def check(name: str, got, want, tol=1e-10) -> None:
        nonlocal failures
        got_a, want_a = np.atleast_1d(got), np.atleast_1d(want)
        ok = got_a.shape == want_a.shape and np.all(np.abs(got_a - want_a) <= tol)
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures += 1
            print(f"      got {got!r}, want {want!r}")

    p2 = SystemParams(1.0, 1.0, 2)
    comp = components(p2)
    check("window=2 stationary law", comp.fwd.p, [0.5, 1 / 3, 1 / 6])
    check("window=2 mean in flight", comp.fwd.n_bar, 2 / 3)
    check("window=2 arrival intensity", comp.fwd.lambda_hat, 2 / 3)
    check("window=2 reversed departure rates", comp.rev.lambda_prime[1:], [1.5, 2.0])
    check("window=2 reversed batch rates",
          [comp.rev.mu_prime[0, 1], comp.rev.mu_prime[0, 2], comp.rev.mu_prime[1, 2]],
          [2 / 3, 1 / 3, 0.5])
    check("window=2 exit rates coincide", comp.rev.d_prime, comp.fwd.d_tilde)
    check("window=2 transition weights",
          [comp.weights.weights[k] for k in [(1, 0), (2, 0), (2, 1)]],
          [0.5, 0.25, 0.25])
    for n in range(3):
        check(f"window=2 forward transform at origin, state {n}",
              ep_integral(comp.forward.h[n]), 1.0, tol=1e-9)

    p1 = SystemParams(1.0, 1.0, 1)
    dist = age_density(p1)
    check("window=1 mean age", age_mean(dist), 2.5)
    check("window=1 density at 1", ep_eval(dist.density, 1.0),
          0.5 * (1 + 0.5) * math.exp(-1.0))
    check("window=1 age transform", ep_integral(age_at_informative(p1)), 1.0, tol=1e-9)

    print(f"{'OK' if failures == 0 else 'FAILED'}: "
          f"{failures} failure(s)")
    return EXIT_OK if failures == 0 else 1


# ---------------------------------------------------------------------------

_COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except (ParameterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT


if __name__ == "__main__":
    sys.exit(main())
