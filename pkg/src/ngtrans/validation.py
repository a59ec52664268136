"""Check suites behind ``ngtrans validate``.

Each check records an effect size, optional standard error, threshold and a
boolean.  ``fast`` runs 10^3 paths per ensemble and widens Kolmogorov-Smirnov
thresholds by the 1% sampling allowance 1.63/sqrt(n); ``full`` runs 10^4.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import specfun, stats, translation
from .distributions import (
    Family,
    PANEL_DISTRIBUTIONS,
    parse_distribution,
    standardization_check,
)
from .errors import NgtransError
from .sde import (
    Scheme,
    TimeGrid,
    brownian_from_increments,
    coin_flips,
    binary_walk_from_flips,
    normal_increments,
    path_seed,
    pin_terminal,
    stratified_terminals,
    subsample_driver,
    translation_from_driver,
)

ROUNDTRIP_U = (0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99)

# reference (m, s) values: (descriptor, m, s, tolerance); None means "check standardization"
TABLE1_EXPECTED = (
    ("student_t{nu=10}", 0.0, 0.894, 1e-3),
    ("student_t{nu=2.1}", 0.0, 0.218, 1e-3),
    ("asym_laplace{kappa=1.5}", 0.508, 0.609, 1e-3),
    ("asym_laplace{kappa=9}", 0.988, 0.111, 1e-3),
    ("egb2{p=0.95,q=0.45}", -0.566, 0.361, 2e-2),
    ("egb2{p=4,q=0.1}", None, None, None),
)

DEFAULT_SELECTION = ("gaussian{}",) + PANEL_DISTRIBUTIONS


@dataclass(frozen=True)
class Level:
    name: str
    n_paths: int
    property_paths: int
    ks_allowance: bool
    refine_paths: int


LEVELS = {
    "fast": Level("fast", 1_000, 20_000, True, 10_000),
    "full": Level("full", 10_000, 500_000, False, 100_000),
}


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    std_error: Optional[float] = None
    comparison: str = ""

    def to_json(self):
        return {
            "name": self.name,
            "value": _num(self.value),
            "std_error": _num(self.std_error),
            "threshold": _num(self.threshold),
            "comparison": self.comparison,
            "pass": bool(self.passed),
        }


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def at_most(name, value, threshold):
    return Check(name, value, threshold, bool(value <= threshold), comparison="value <= threshold")


def within_se(name, value, target, se, k):
    ok = bool(abs(value - target) <= k * se)
    return Check(name, value, k, ok, std_error=se, comparison=f"|value - {target!r}| <= threshold * std_error")


def beyond_se(name, value, se, k):
    ok = bool(abs(value) > k * se)
    return Check(name, value, k, ok, std_error=se, comparison="|value| > threshold * std_error")


def is_true(name, flag):
    return Check(name, float(bool(flag)), 1.0, bool(flag), comparison="value == 1")


@dataclass
class Report:
    level: str
    checks: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self):
        return not self.errors and all(c.passed for c in self.checks)

    @property
    def failed(self):
        return [c.name for c in self.checks if not c.passed]

    def to_json(self):
        return {
            "level": self.level,
            "pass": self.passed,
            "failed": self.failed,
            "checks": [c.to_json() for c in self.checks],
            "skipped": self.skipped,
            "errors": self.errors,
            "wall_time": self.wall_time,
        }


# ---------------------------------------------------------------------------
# numerics
# ---------------------------------------------------------------------------

def numerics_checks():
    out = []
    x = np.linspace(-8, 8, 1601)
    out.append(at_most("numerics/normal_cdf_symmetry",
                       float(np.max(np.abs(specfun.std_normal_cdf(x) + specfun.std_normal_cdf(-x) - 1))), 1e-14))
    p = np.concatenate([np.logspace(-10, -1, 50), np.linspace(0.1, 0.9, 81), 1 - np.logspace(-10, -1, 50)])
    back = specfun.std_normal_cdf(specfun.std_normal_quantile(p))
    out.append(at_most("numerics/normal_quantile_roundtrip", float(np.max(np.abs(back - p) / p.clip(max=1 - p))), 1e-10))
    xs = np.linspace(0.1, 50, 400)
    out.append(at_most("numerics/digamma_recurrence",
                       float(np.max(np.abs(specfun.digamma(xs + 1) - specfun.digamma(xs) - 1 / xs))), 1e-12))
    out.append(at_most("numerics/trigamma_recurrence",
                       float(np.max(np.abs(specfun.trigamma(xs + 1) - specfun.trigamma(xs) + 1 / xs**2))), 1e-12))
    lg = np.abs(specfun.log_gamma(xs + 1) - specfun.log_gamma(xs) - np.log(xs))
    out.append(at_most("numerics/log_gamma_recurrence", float(np.max(lg / np.maximum(1, np.abs(specfun.log_gamma(xs + 1))))), 1e-12))
    rng = np.random.default_rng(20240611)
    a = rng.uniform(0.1, 20, 200)
    b = rng.uniform(0.1, 20, 200)
    xx = rng.uniform(0, 1, 200)
    refl = np.abs(specfun.reg_inc_beta(a, b, xx) - (1 - specfun.reg_inc_beta(b, a, 1 - xx)))
    out.append(at_most("numerics/inc_beta_reflection", float(np.max(refl)), 1e-12))
    pg = rng.uniform(0, 1, 200)
    fwd = specfun.reg_inc_beta(a, b, specfun.inv_reg_inc_beta(a, b, pg))
    out.append(at_most("numerics/inc_beta_inverse_p_roundtrip", float(np.max(np.abs(fwd - pg))), 1e-10))
    # x-space roundtrip where I is not saturated (x is ill-conditioned once I rounds to 1)
    xg = rng.uniform(0.02, 0.98, 200)
    ig = specfun.reg_inc_beta(a, b, xg)
    ok = np.minimum(ig, 1 - ig) > 1e-3
    inv = specfun.inv_reg_inc_beta(a[ok], b[ok], ig[ok])
    out.append(at_most("numerics/inc_beta_inverse_x_roundtrip", float(np.max(np.abs(inv - xg[ok]))), 1e-9))
    return out


# ---------------------------------------------------------------------------
# standardizing parameters
# ---------------------------------------------------------------------------

def table1_rows():
    rows = []
    for text, m_ref, s_ref, tol in TABLE1_EXPECTED:
        d = parse_distribution(text)
        mean, var = standardization_check(d)
        rows.append({
            "distribution": text,
            "m": d.loc,
            "s": d.scale,
            "m_expected": m_ref,
            "s_expected": s_ref,
            "tolerance": tol,
            "quad_mean": mean,
            "quad_variance": var,
        })
    return rows


def table1_checks(rows=None):
    out = []
    for row in rows or table1_rows():
        name = f"table1/{row['distribution']}"
        if row["tolerance"] is None:
            out.append(at_most(name + "/standardization",
                               max(abs(row["quad_mean"]), abs(row["quad_variance"] - 1)), 1e-6))
        else:
            out.append(at_most(name + "/m", abs(row["m"] - row["m_expected"]), row["tolerance"]))
            out.append(at_most(name + "/s", abs(row["s"] - row["s_expected"]), row["tolerance"]))
    return out


# ---------------------------------------------------------------------------
# per-distribution checks
# ---------------------------------------------------------------------------

def calculus_errors(d, n_points=100, seed=11):
    """Max relative error of ito_partials vs central differences of transform,
    and max drift-identity error, over random (b, t)."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.2, 10.0, n_points)
    z = rng.uniform(-2.5, 2.5, n_points)
    if d.family == Family.ASYM_LAPLACE:
        # keep away from the density kink at x = loc
        zk = specfun.std_normal_quantile(float(d.cdf(d.loc)))
        z = np.where(np.abs(z - zk) < 0.05, z + 0.1, z)
    b = z * np.sqrt(t)
    P = translation.ito_partials(b, t, d)

    def g(bb, tt):
        return translation.transform(bb, tt, d)

    # step sizes balance truncation against cancellation for each derivative
    h1 = 1e-4 * np.sqrt(t)
    h2 = 1e-3 * np.sqrt(t)
    ht = 1e-4 * t
    fd_y = (g(b + h1, t) - g(b - h1, t)) / (2 * h1)
    fd_yy = (g(b + h2, t) - 2 * g(b, t) + g(b - h2, t)) / h2**2
    fd_t = (g(b, t + ht) - g(b, t - ht)) / (2 * ht)

    def rel(a, ref):
        return float(np.max(np.abs(a - ref) / np.maximum(np.abs(ref), 1e-12)))

    err = max(rel(P.dg_dy, fd_y), rel(P.dg_dt, fd_t), rel(P.d2g_dy2, fd_yy))
    r = translation.drift_r(b, t, d)
    ident = float(np.max(np.abs(P.dg_dt + 0.5 * P.d2g_dy2 - r) / np.maximum(np.abs(r), 1e-300)))
    return err, ident


def _ks_threshold(base, n, level):
    return base + (stats.ks_critical_one_sample(n) if level.ks_allowance else 0.0)


def h_squared_mean(d):
    """E[h(Z, 1)^2] for Z standard normal, by quadrature."""
    from scipy.integrate import quad

    def f(z):
        return translation.h(z, 1.0, d) ** 2 * specfun.std_normal_pdf(z)

    pieces = (-8.0, -3.0, 0.0, 3.0, 8.0)
    return sum(quad(f, a, b, limit=200)[0] for a, b in zip(pieces[:-1], pieces[1:]))


def distribution_checks(text, level, seed, horizon=10.0, dt=0.01):
    d = parse_distribution(text)
    pre = f"{text}/"
    out = []
    mean, var = standardization_check(d)
    out.append(at_most(pre + "standardization", max(abs(mean), abs(var - 1)), 1e-6))
    u = np.array(ROUNDTRIP_U)
    out.append(at_most(pre + "quantile_cdf_roundtrip", float(np.max(np.abs(d.cdf(d.quantile(u)) - u))), 1e-9))

    if d.family == Family.GAUSSIAN:
        rng = np.random.default_rng(seed)
        tt = rng.uniform(0.01, 10, 100)
        bb = rng.uniform(-4, 4, 100) * np.sqrt(tt)
        out.append(at_most(pre + "h_identically_one", float(np.max(np.abs(translation.h(bb, tt, d) - 1))), 1e-12))
        out.append(at_most(pre + "drift_identically_zero", float(np.max(np.abs(translation.drift_r(bb, tt, d)))), 1e-12))
    else:
        err, ident = calculus_errors(d)
        out.append(at_most(pre + "ito_partials_vs_finite_differences", err, 1e-5))
        out.append(at_most(pre + "drift_identity", ident, 1e-8))

    n = level.n_paths
    grid = TimeGrid.from_horizon(dt, horizon)
    dist = d.with_quantile_table()
    seeds = [path_seed(seed, i) for i in range(n)]
    B = brownian_from_increments(normal_increments(seeds, grid))
    ends = {}
    for scheme in (Scheme.EXACT, Scheme.RW_DRIFT, Scheme.RW_NODRIFT):
        Z, _ = translation_from_driver(dist, grid, scheme, B)
        ends[scheme] = Z[:, -1]
        if d.family == Family.GAUSSIAN:
            out.append(at_most(pre + f"{scheme.value}/equals_driver", float(np.max(np.abs(Z - B))), 1e-10))
    flips = coin_flips(seeds, grid.n_steps)
    Zb, Wb, _ = binary_walk_from_flips(dist, grid, flips)
    if d.family == Family.GAUSSIAN:
        out.append(at_most(pre + "binary_walk/equals_driver", float(np.max(np.abs(Zb - Wb))), 1e-10))

    ks = {s: stats.ks_one_sample(v, d, horizon) for s, v in ends.items()}
    out.append(at_most(pre + "exact/ks_marginal", ks[Scheme.EXACT].statistic, ks[Scheme.EXACT].critical_1pct))
    out.append(at_most(pre + "rw_drift/ks_marginal", ks[Scheme.RW_DRIFT].statistic, _ks_threshold(0.05, n, level)))
    out.append(at_most(pre + "rw_nodrift/ks_marginal", ks[Scheme.RW_NODRIFT].statistic, _ks_threshold(0.12, n, level)))

    # sample variance has no finite standard error when the fourth moment is infinite
    finite_k4 = math.isfinite(d.kappa4)
    for scheme in (Scheme.EXACT, Scheme.RW_DRIFT):
        ms = stats.empirical_moments(ends[scheme])
        out.append(within_se(pre + f"{scheme.value}/endpoint_mean", ms.mean, 0.0, ms.std_error_mean, 4))
        if finite_k4:
            out.append(within_se(pre + f"{scheme.value}/endpoint_variance", ms.variance, horizon,
                                 ms.std_error_variance, 4))
    ms = stats.empirical_moments(ends[Scheme.RW_NODRIFT])
    out.append(within_se(pre + "rw_nodrift/endpoint_mean", ms.mean, 0.0, ms.std_error_mean, 4))
    if finite_k4:
        # the drift-free walk has variance t_1 + (T - t_1) E[h^2], not T
        target = dt + (horizon - dt) * h_squared_mean(d)
        out.append(within_se(pre + "rw_nodrift/endpoint_variance_vs_isometry", ms.variance, target,
                             ms.std_error_variance, 4))

    k3 = d.kappa3
    if math.isfinite(k3) and abs(k3) > 1e-12:
        out.append(is_true(pre + "rw_nodrift/skew_sign_matches_target", np.sign(ms.skewness) == np.sign(k3)))

    ks_bin = stats.ks_two_sample(Zb[:, -1], ends[Scheme.EXACT])
    ks_nod = stats.ks_two_sample(ends[Scheme.RW_NODRIFT], ends[Scheme.EXACT])
    out.append(at_most(pre + "binary_walk/ks_vs_exact", ks_bin.statistic, ks_nod.statistic + ks_bin.critical_1pct))

    if d.descriptor() in REFINEMENT_DISTRIBUTIONS:
        # KS ordering is below sampling resolution at 10^4 paths; fast runs only the pathwise part
        out.extend(refinement_checks(text, level.refine_paths, seed, horizon, dt, with_ks=not level.ks_allowance))

    # self-similarity with c = 4 on disjoint seed sets
    c = 4.0
    seeds2 = [path_seed(seed, n + i) for i in range(n)]
    B2 = brownian_from_increments(normal_increments(seeds2, grid))
    Z2, _ = translation_from_driver(dist, grid, Scheme.EXACT, B2)
    ks_ss = stats.ks_two_sample(Z2[:, grid.index_of(horizon / c)], ends[Scheme.EXACT] / math.sqrt(c))
    out.append(at_most(pre + "self_similarity_ks", ks_ss.statistic, ks_ss.critical_1pct))
    return out


REFINEMENT_DISTRIBUTIONS = ("student_t{nu=10.0}", "asym_laplace{kappa=1.5}")
REFINEMENT_FACTORS = (4, 2, 1)


def refinement_errors(d, n, seed, horizon=10.0, dt=0.01, block=5_000):
    """RwDrift endpoint KS and mean max-over-grid |RwDrift - Exact| at dt*4, dt*2, dt.

    Terminal Brownian values are stratified at the n midpoint normal quantiles and
    each path is the Brownian bridge to its terminal value, so the exact scheme's
    endpoint KS is 0.5/n and the walk's KS reflects discretization, not sampling.
    """
    grid = TimeGrid.from_horizon(dt, horizon)
    dist = d.with_quantile_table()
    terminals = stratified_terminals(n, horizon)
    ends = {f: [] for f in REFINEMENT_FACTORS}
    gap = {f: 0.0 for f in REFINEMENT_FACTORS}
    for start in range(0, n, block):
        idx = range(start, min(start + block, n))
        W = brownian_from_increments(normal_increments([path_seed(seed, i) for i in idx], grid))
        B = pin_terminal(W, grid, terminals[idx.start : idx.stop])
        for f in REFINEMENT_FACTORS:
            g = TimeGrid(dt * f, grid.n_steps // f)
            Bf = subsample_driver(B, f)
            Zw, _ = translation_from_driver(dist, g, Scheme.RW_DRIFT, Bf)
            Ze, _ = translation_from_driver(dist, g, Scheme.EXACT, Bf)
            ends[f].append(Zw[:, -1])
            gap[f] += float(np.sum(np.max(np.abs(Zw - Ze), axis=1)))
    ks = [stats.ks_one_sample(np.concatenate(ends[f]), d, horizon).statistic for f in REFINEMENT_FACTORS]
    return ks, [gap[f] / n for f in REFINEMENT_FACTORS]


def refinement_checks(text, n, seed, horizon=10.0, dt=0.01, with_ks=True):
    d = parse_distribution(text)
    ks, gap = refinement_errors(d, n, seed, horizon, dt)
    pre = f"{text}/rw_drift/"
    out = [Check(pre + "pathwise_gap_decreases_under_refinement", gap[2], gap[1], gap[0] > gap[1] > gap[2],
                 comparison="gap(dt=0.04) > gap(dt=0.02) > gap(dt=0.01)")]
    if with_ks:
        out.append(Check(pre + "ks_decreases_under_refinement", ks[2], ks[1], ks[0] > ks[1] > ks[2],
                         comparison="ks(dt=0.04) > ks(dt=0.02) > ks(dt=0.01)"))
    return out


# ---------------------------------------------------------------------------
# process-level suites
# ---------------------------------------------------------------------------

def increment_checks(text, level, seed):
    """Properties of increments on a coarse exact grid (t = 1..6)."""
    from .sde import Ensemble

    d = parse_distribution(text)
    grid = TimeGrid(1.0, 6)
    n = level.property_paths
    values = np.empty((n, grid.n_steps))
    for start in range(0, n, 10_000):
        seeds = [path_seed(seed, i) for i in range(start, min(start + 10_000, n))]
        B = brownian_from_increments(normal_increments(seeds, grid))
        values[start : start + len(seeds)], _ = translation_from_driver(d, grid, Scheme.EXACT, B)
    e = _ArrayEnsemble(grid, values)
    cov, se_c = stats.increment_covariance(e, 1, 2, 5, 6)
    dv, se_v = stats.increment_variance_difference(e, (1, 2), (5, 6))
    pre = f"{text}/"
    if d.family == Family.GAUSSIAN:
        return [
            within_se(pre + "increment_covariance_control", cov, 0.0, se_c, 3),
            within_se(pre + "increment_variance_control", dv, 0.0, se_v, 3),
        ]
    return [
        beyond_se(pre + "increment_covariance_nonzero", cov, se_c, 4),
        beyond_se(pre + "increment_variance_nonstationary", dv, se_v, 4),
    ]


@dataclass
class _ArrayEnsemble:
    grid: TimeGrid
    values: np.ndarray

    def cross_section(self, t):
        return self.values[:, self.grid.index_of(t)]


def isometry_check(text, level, seed, horizon=10.0, dt=0.01):
    d = parse_distribution(text)
    lhs, rhs, se = stats.ito_isometry_check(TimeGrid.from_horizon(dt, horizon), d, level.n_paths, seed)
    return within_se(f"{text}/ito_isometry", lhs - rhs, 0.0, se, 3)


def error_growth_checks(text, level, seed, dt=0.01):
    d = parse_distribution(text)
    rep = stats.error_growth(d, TimeGrid.from_horizon(dt, 50.0), level.n_paths, seed)
    pre = f"{text}/error_growth"
    if d.family == Family.GAUSSIAN:
        return [at_most(pre + "/rms_zero", max(rep.rms_error), 1e-10)]
    r5 = rep.bound_ratio[rep.horizons.index(5.0)]
    r50 = rep.bound_ratio[rep.horizons.index(50.0)]
    return [at_most(pre + "/ratio_T50_over_T5", r50 / r5, 3.0)]


def run_validation(level="fast", selection=None, seed=20240611, progress=None):
    """Run every suite applicable to ``selection`` (distribution descriptors)."""
    lv = LEVELS[level]
    selection = list(selection or DEFAULT_SELECTION)
    report = Report(level)
    t0 = time.perf_counter()

    def attempt(name, fn):
        if progress:
            progress(name)
        try:
            res = fn()
            report.checks.extend(res if isinstance(res, list) else [res])
        except NgtransError as exc:
            report.errors.append({"name": name, "error": f"{type(exc).__name__}: {exc}"})

    attempt("numerics", numerics_checks)
    attempt("table1", table1_checks)
    canon = {}
    for text in selection:
        try:
            canon[text] = parse_distribution(text).descriptor()
        except NgtransError as exc:
            report.errors.append({"name": text, "error": f"{type(exc).__name__}: {exc}"})
    for text in canon:
        attempt(text, lambda text=text: distribution_checks(text, lv, seed))
        if not math.isfinite(parse_distribution(text).kappa4):
            report.skipped.append({
                "name": f"{text}/endpoint variance checks",
                "reason": "infinite fourth moment: the sample variance has no finite standard error",
            })
    names = {v: k for k, v in canon.items()}
    for key in ("gaussian{}", "student_t{nu=10.0}", "asym_laplace{kappa=1.5}"):
        if key in names:
            attempt(key + "/isometry", lambda k=names[key]: isometry_check(k, lv, seed))
    for key in ("gaussian{}", "asym_laplace{kappa=9.0}"):
        if key in names:
            attempt(key + "/error_growth", lambda k=names[key]: error_growth_checks(k, lv, seed))
    if "gaussian{}" in names:
        attempt("gaussian{}/increments", lambda: increment_checks(names["gaussian{}"], lv, seed))
    if "asym_laplace{kappa=9.0}" in names:
        if lv.name == "full":
            attempt("asym_laplace/increments", lambda: increment_checks(names["asym_laplace{kappa=9.0}"], lv, seed))
        else:
            report.skipped.append({
                "name": "asym_laplace{kappa=9}/increment effects",
                "reason": "effects are about 0.1 standard deviations per 10^4 paths; run --level full",
            })
    report.wall_time = time.perf_counter() - t0
    return report
