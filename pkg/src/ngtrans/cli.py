"""Command-line entry point.

Exit status: 0 success, 1 check failure, 2 configuration error, 3 I/O error.
"""

import argparse
import json
import math
import os
import re
import sys
import tempfile
import time

import numpy as np

from . import stats, translation
from .config import SimulationSpec, parse_text, spec_from_mapping
from .distributions import PANEL_DISTRIBUTIONS, make_gaussian, parse_distribution
from .errors import ConfigError, NgtransError
from .sde import Scheme, TimeGrid, simulate_ensemble, translation_from_driver
from .validation import LEVELS, Check, at_most, run_validation, table1_rows, table1_checks, within_se

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

ENDPOINTS_HEADER = "path_index,seed,t,value,clamps"
PATHS_HEADER = "path_index,k,t,b,z"
HISTOGRAM_HEADER = (
    "x_left,x_right,density_theoretical,density_rw_drift,"
    "density_rw_nodrift,density_normal,density_exact"
)
CORNISH_FISHER_HEADER = "x,b,delta,transform_cf,sensitivity_skew,sensitivity_kurt"

FIGURE_BINS = 80
FIGURE_TAIL = 0.001

# endpoint KS thresholds per scheme (exact and brownian use the 1% critical value)
KS_FULL_SAMPLE = 10_000
KS_THRESHOLD = {Scheme.RW_DRIFT: 0.05, Scheme.RW_NODRIFT: 0.12, Scheme.BINARY_WALK: 0.12}


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def fmt(x):
    """Shortest round-trip decimal for floats; plain digits for integers."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


def atomic_write(path, text):
    path = os.path.abspath(path)
    directory = os.path.dirname(path)
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else repr(float(obj))
    return obj


def dump_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


def endpoints_csv(ens):
    t = ens.grid.horizon
    lines = [ENDPOINTS_HEADER]
    for row in range(ens.n_paths):
        lines.append(",".join((
            fmt(ens.path_indices[row]), fmt(int(ens.seeds[row])), fmt(t),
            fmt(ens.values[row, -1]), fmt(ens.clamp_counts[row]),
        )))
    return "\n".join(lines) + "\n"


def paths_csv(ens):
    times = [fmt(t) for t in ens.grid.times]
    lines = [PATHS_HEADER]
    for row in range(ens.n_paths):
        idx = fmt(ens.path_indices[row])
        for k in range(ens.grid.n_steps):
            lines.append(f"{idx},{k + 1},{times[k]},{fmt(ens.driver[row, k])},{fmt(ens.values[row, k])}")
    return "\n".join(lines) + "\n"


def figure_range(d, horizon):
    st = math.sqrt(horizon)
    return st * float(d.quantile(FIGURE_TAIL)), st * float(d.quantile(1 - FIGURE_TAIL))


def histogram_rows(d, horizon, endpoints, bins=FIGURE_BINS):
    """Rows for the histogram CSV.

    ``endpoints`` maps Scheme to endpoint samples; missing schemes give
    empty cells.  Theoretical and normal columns are bin averages of the
    densities of F(x / sqrt T) and Normal(0, T).
    """
    lo, hi = figure_range(d, horizon)
    edges = np.linspace(lo, hi, bins + 1)
    st = math.sqrt(horizon)
    theo = stats.bin_average_density(lambda x: d.cdf(x / st), edges)
    gauss = make_gaussian()
    normal = stats.bin_average_density(lambda x: gauss.cdf(x / st), edges)
    cols = {}
    for scheme in (Scheme.RW_DRIFT, Scheme.RW_NODRIFT, Scheme.EXACT):
        if scheme in endpoints:
            cols[scheme] = stats.histogram(endpoints[scheme], bins, range=(lo, hi)).density
    rows = []
    for j in range(bins):
        cell = lambda s: fmt(cols[s][j]) if s in cols else ""
        rows.append(",".join((
            fmt(edges[j]), fmt(edges[j + 1]), fmt(theo[j]), cell(Scheme.RW_DRIFT),
            cell(Scheme.RW_NODRIFT), fmt(normal[j]), cell(Scheme.EXACT),
        )))
    return HISTOGRAM_HEADER + "\n" + "\n".join(rows) + "\n"


def endpoint_checks(d, scheme, horizon, samples):
    """Marginal and moment checks for a translation-process endpoint sample."""
    out = []
    target = make_gaussian() if scheme == Scheme.BROWNIAN else d
    ks = stats.ks_one_sample(samples, target, horizon)
    thr = KS_THRESHOLD.get(scheme, ks.critical_1pct)
    if scheme in KS_THRESHOLD and ks.n < KS_FULL_SAMPLE:
        # below the full sample size the fixed thresholds get the 1% sampling allowance
        thr += ks.critical_1pct
    out.append(at_most(f"{scheme.value}/ks_marginal", ks.statistic, thr))
    ms = stats.empirical_moments(samples)
    out.append(within_se(f"{scheme.value}/endpoint_mean", ms.mean, 0.0, ms.std_error_mean, 4))
    finite_k4 = scheme == Scheme.BROWNIAN or math.isfinite(d.kappa4)
    if finite_k4 and scheme in (Scheme.EXACT, Scheme.RW_DRIFT, Scheme.BROWNIAN):
        # small heavy-tailed samples understate kurtosis, so the law's own kappa4 floors the error
        k4 = 0.0 if scheme == Scheme.BROWNIAN else d.kappa4
        se_law = horizon * math.sqrt(2.0 / (ms.n - 1) + k4 / ms.n)
        se = max(ms.std_error_variance, se_law)
        out.append(within_se(f"{scheme.value}/endpoint_variance", ms.variance, horizon, se, 4))
    return out


def moments_json(samples):
    ms = stats.empirical_moments(samples)
    return {
        "n": ms.n, "mean": ms.mean, "variance": ms.variance, "skewness": ms.skewness,
        "excess_kurtosis": ms.excess_kurtosis, "std_error_mean": ms.std_error_mean,
        "std_error_variance": ms.std_error_variance,
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def build_spec(args):
    raw = {"output": []}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = parse_text(fh.read())
    if args.dist is not None:
        raw["distribution"] = args.dist
    if args.scheme is not None:
        raw["scheme"] = args.scheme
    if args.paths is not None:
        raw["n_paths"] = str(args.paths)
    if args.seed is not None:
        raw["base_seed"] = str(args.seed)
    if args.dt is not None:
        raw["dt"] = str(args.dt)
    if args.horizon is not None:
        raw["horizon"] = str(args.horizon)
        raw.pop("n_steps", None)
    raw.setdefault("dt", "0.01")
    if "n_steps" not in raw and "horizon" not in raw:
        raw["horizon"] = "10"
    out_dir = args.out or "."
    outputs = raw.get("output") or ["endpoints_csv:endpoints.csv", "report_json:report.json"]
    rebased = []
    for item in outputs:
        kind, sep, path = item.partition(":")
        if sep and not os.path.isabs(path.strip()):
            path = os.path.join(out_dir, path.strip())
        rebased.append(f"{kind}:{path}" if sep else item)
    raw["output"] = rebased
    return spec_from_mapping(raw)


def cmd_simulate(args):
    spec = build_spec(args)
    t0 = time.perf_counter()
    ens = simulate_ensemble(spec, workers=args.workers)
    wall = time.perf_counter() - t0
    T = spec.grid.horizon
    d = spec.distribution
    checks = []
    translation_like = spec.coefficients is None
    if translation_like and ens.n_paths >= 10:
        checks = endpoint_checks(d, spec.scheme, T, ens.endpoints)
    files = {}
    for kind, path in spec.outputs:
        if kind == "endpoints_csv":
            files[path] = endpoints_csv(ens)
        elif kind == "paths_csv":
            files[path] = paths_csv(ens)
        elif kind == "histogram_csv":
            files[path] = histogram_rows(d, T, _histogram_endpoints(spec, ens))
    report = {
        "command": "simulate",
        "spec": spec.echo(),
        "checks": [c.to_json() for c in checks],
        "clamp_counts": {
            "total": ens.total_clamps,
            "paths_with_clamps": int(np.count_nonzero(ens.clamp_counts)),
        },
        "aborted": [{"path_index": i, "step": k} for i, k in sorted(ens.aborted.items())],
        "wall_time": wall,
        "moments": moments_json(ens.endpoints) if ens.n_paths >= 4 else None,
    }
    for kind, path in spec.outputs:
        if kind == "report_json":
            files[path] = dump_json(report)
    for path, text in files.items():
        atomic_write(path, text)
    print(f"simulated {ens.n_paths} paths ({len(ens.aborted)} aborted) in {wall:.2f}s")
    for path in files:
        print(f"wrote {path}")
    for c in checks:
        if not c.passed:
            print(f"FAIL {c.name}: value={c.value:.6g} threshold={c.threshold:.6g}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK


def _histogram_endpoints(spec, ens):
    """Endpoints for each translation scheme from the ensemble's driver."""
    out = {}
    if spec.scheme in (Scheme.EXACT, Scheme.RW_DRIFT, Scheme.RW_NODRIFT) and spec.coefficients is None:
        dist = spec.distribution.with_quantile_table() if spec.quantile_table else spec.distribution
        for scheme in (Scheme.EXACT, Scheme.RW_DRIFT, Scheme.RW_NODRIFT):
            if scheme == spec.scheme:
                out[scheme] = ens.endpoints
            else:
                Z, _ = translation_from_driver(dist, spec.grid, scheme, ens.driver)
                out[scheme] = Z[:, -1]
    elif spec.scheme in (Scheme.EXACT, Scheme.RW_DRIFT, Scheme.RW_NODRIFT):
        out[spec.scheme] = ens.endpoints
    return out


def cmd_table1(args):
    rows = table1_rows()
    checks = table1_checks(rows)
    print(f"{'distribution':<26}{'m':>12}{'s':>12}{'quad mean':>14}{'quad var':>14}")
    for r in rows:
        print(f"{r['distribution']:<26}{r['m']:>12.6f}{r['s']:>12.6f}{r['quad_mean']:>14.2e}{r['quad_variance']:>14.10f}")
    for r in rows:
        d = parse_distribution(r["distribution"])
        r["kappa3"], r["kappa4"] = d.cumulants()
    if args.out:
        atomic_write(os.path.join(args.out, "table1.json"),
                     dump_json({"rows": rows, "checks": [c.to_json() for c in checks]}))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK


def _slug(text):
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")


def figure_panel(d, n_paths, dt, horizon, seed, quantile_table=True):
    """Endpoints of the three translation schemes over one shared driver."""
    from .sde import brownian_from_increments, normal_increments, path_seed

    grid = TimeGrid.from_horizon(dt, horizon)
    dist = d.with_quantile_table() if quantile_table else d
    ends = {}
    for start in range(0, n_paths, 1000):
        seeds = [path_seed(seed, i) for i in range(start, min(start + 1000, n_paths))]
        B = brownian_from_increments(normal_increments(seeds, grid))
        for scheme in (Scheme.EXACT, Scheme.RW_DRIFT, Scheme.RW_NODRIFT):
            Z, _ = translation_from_driver(dist, grid, scheme, B)
            ends.setdefault(scheme, []).append(Z[:, -1])
    return {s: np.concatenate(v) for s, v in ends.items()}


def cmd_figure1(args):
    panels = list(PANEL_DISTRIBUTIONS) + list(args.dist or [])
    out_dir = args.out or "figure1"
    n = args.paths or 10_000
    dt = args.dt or 0.01
    T = args.horizon or 10.0
    seed = 20240611 if args.seed is None else args.seed
    summary = {"n_paths": n, "dt": dt, "horizon": T, "base_seed": seed, "bins": FIGURE_BINS, "panels": []}
    files = {}
    t0 = time.perf_counter()
    for text in panels:
        d = parse_distribution(text)
        ends = figure_panel(d, n, dt, T, seed)
        name = f"panel_{_slug(d.descriptor())}.csv"
        files[os.path.join(out_dir, name)] = histogram_rows(d, T, ends)
        ks = {s.value: stats.ks_one_sample(v, d, T).statistic for s, v in ends.items()}
        summary["panels"].append({"distribution": d.descriptor(), "file": name, "ks": ks,
                                  "range": list(figure_range(d, T))})
        print(f"{d.descriptor():<28} ks exact={ks['exact']:.4f} rw_drift={ks['rw_drift']:.4f} "
              f"rw_nodrift={ks['rw_nodrift']:.4f}")
    summary["wall_time"] = time.perf_counter() - t0
    files[os.path.join(out_dir, "figure1.json")] = dump_json(summary)
    for path, text in files.items():
        atomic_write(path, text)
    return EXIT_OK


def cmd_validate(args):
    level = args.level or "fast"
    seed = 20240611 if args.seed is None else args.seed
    report = run_validation(level, selection=args.dist, seed=seed,
                            progress=lambda name: print(f"... {name}", file=sys.stderr))
    for c in report.checks:
        tag = "PASS" if c.passed else "FAIL"
        se = f" se={c.std_error:.3g}" if c.std_error is not None else ""
        print(f"{tag} {c.name}: value={c.value:.6g}{se} threshold={c.threshold:.6g}")
    for s in report.skipped:
        print(f"SKIP {s['name']}: {s['reason']}")
    for e in report.errors:
        print(f"ERROR {e['name']}: {e['error']}")
    print(f"{'PASSED' if report.passed else 'FAILED'}: {len(report.checks)} checks, "
          f"{len(report.failed)} failed, {len(report.errors)} errors, {report.wall_time:.1f}s")
    if args.out:
        atomic_write(os.path.join(args.out, "validate_report.json"), dump_json(report.to_json()))
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_cornish_fisher(args):
    if args.dist:
        d = parse_distribution(args.dist)
        k3, k4 = d.cumulants()
        if args.kappa3 is not None or args.kappa4 is not None:
            raise ConfigError("give either --dist or --kappa3/--kappa4", field="dist")
    else:
        d = None
        k3 = args.kappa3 or 0.0
        k4 = args.kappa4 or 0.0
    try:
        c = translation.CornishFisherCoeffs(k3, k4)
    except NgtransError as exc:
        raise ConfigError(str(exc), field="dist") from exc
    T = args.horizon or 1.0
    if not T > 0:
        raise ConfigError("must be > 0", field="horizon")
    if args.points < 2 or not args.xmax > 0:
        raise ConfigError("need --points >= 2 and --xmax > 0", field="points")
    x = np.linspace(-args.xmax, args.xmax, args.points)
    b = x * math.sqrt(T)
    cols = [x, b, translation.delta_cf(x, c), translation.transform_cf(b, T, c),
            translation.sensitivity_skew(b, T), translation.sensitivity_kurt(b, T)]
    header = CORNISH_FISHER_HEADER
    if d is not None:
        cols.append(translation.transform(b, T, d))
        header += ",transform"
    lines = [header] + [",".join(fmt(col[i]) for col in cols) for i in range(x.size)]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write(os.path.join(args.out, "cornish_fisher.csv"), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="ngtrans", description="Non-Gaussian translation process toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dist_multi=False):
        sp.add_argument("--seed", type=_u64, help="base seed (u64)")
        sp.add_argument("--paths", type=int, help="number of paths")
        sp.add_argument("--dt", type=float, help="time step")
        sp.add_argument("--horizon", type=float, help="final time T")
        if dist_multi:
            sp.add_argument("--dist", action="append", help="distribution descriptor (repeatable)")
        else:
            sp.add_argument("--dist", help="distribution descriptor, e.g. student_t{nu=10}")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("simulate", help="simulate an ensemble")
    sp.add_argument("--config", help="key = value configuration file")
    common(sp)
    sp.add_argument("--scheme", choices=[s.value for s in Scheme])
    sp.add_argument("--workers", type=int, default=1, help="worker threads")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("table1", help="standardizing location and scale parameters")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_table1)

    sp = sub.add_parser("figure1", help="marginal density panels at the horizon")
    common(sp, dist_multi=True)
    sp.set_defaults(func=cmd_figure1)

    sp = sub.add_parser("validate", help="run the property and numerics checks")
    sp.add_argument("--level", choices=sorted(LEVELS), default="fast")
    sp.add_argument("--dist", action="append", help="restrict to these distributions (repeatable)")
    sp.add_argument("--seed", type=_u64)
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("cornish-fisher", help="Cornish-Fisher deviation and sensitivities on a grid")
    sp.add_argument("--kappa3", type=float)
    sp.add_argument("--kappa4", type=float)
    sp.add_argument("--dist", help="take cumulants from this distribution")
    sp.add_argument("--horizon", type=float, help="time t (default 1)")
    sp.add_argument("--points", type=int, default=81)
    sp.add_argument("--xmax", type=float, default=4.0)
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_cornish_fisher)
    return p


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return v


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NgtransError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
