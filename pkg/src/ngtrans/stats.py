"""Estimators and fixed-level checks over samples and ensembles.

Checks report an effect size, its standard error and a boolean at a fixed
1% level; there is no p-value machinery.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import sde
from .errors import DomainError, InsufficientDataError
from .sde import Scheme
from .translation import evaluate_kernel

# asymptotic 1% Kolmogorov-Smirnov coefficient
KS_COEFF_1PCT = 1.63

ERROR_GROWTH_HORIZONS = (2.0, 5.0, 10.0, 20.0, 50.0)


@dataclass(frozen=True)
class MomentSummary:
    n: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    std_error_mean: float
    std_error_variance: float = float("nan")

    def mean_z(self, target=0.0):
        return (self.mean - target) / self.std_error_mean

    def variance_z(self, target):
        return (self.variance - target) / self.std_error_variance


@dataclass(frozen=True)
class KsResult:
    statistic: float
    n: int
    critical_1pct: float
    reject: bool


@dataclass(frozen=True)
class ErrorGrowthReport:
    horizons: list
    rms_error: list
    bound_ratio: list
    n_paths: int = 0


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    n: int

    @property
    def left(self):
        return self.edges[:-1]

    @property
    def right(self):
        return self.edges[1:]

    @property
    def widths(self):
        return np.diff(self.edges)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def empirical_moments(samples):
    """Unbiased mean/variance plus k-statistic skewness and excess kurtosis.

    Sums use math.fsum, so a sample concatenated with its negation has mean
    and skewness exactly 0.  Skewness and kurtosis are NaN when the sample is
    constant.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 4:
        raise InsufficientDataError(f"need at least 4 samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    mean = math.fsum(x) / n
    d = x - mean
    d2 = d * d
    m2 = math.fsum(d2) / n
    m3 = math.fsum(d2 * d) / n
    m4 = math.fsum(d2 * d2) / n
    var = m2 * n / (n - 1)
    if m2 > 0:
        g1 = m3 / m2**1.5
        g2 = m4 / (m2 * m2) - 3.0
        skew = math.sqrt(n * (n - 1)) / (n - 2) * g1
        kurt = (n - 1) / ((n - 2) * (n - 3)) * ((n + 1) * g2 + 6.0)
    else:
        skew = kurt = float("nan")
    # large-sample standard error of the unbiased variance
    se_var = math.sqrt(max(m4 - m2 * m2 * (n - 3) / (n - 1), 0.0) / n)
    return MomentSummary(n, mean, var, skew, kurt, math.sqrt(var / n), se_var)


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov
# ---------------------------------------------------------------------------

def ks_critical_one_sample(n):
    return KS_COEFF_1PCT / math.sqrt(n)


def ks_critical_two_sample(n_a, n_b):
    return KS_COEFF_1PCT * math.sqrt((n_a + n_b) / (n_a * n_b))


def ks_statistic_cdf(samples, cdf):
    """sup |ECDF - cdf| evaluated at the sorted sample points."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    u = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def ks_one_sample(samples, d, t=1.0):
    """KS distance between samples and the law F(x / sqrt(t))."""
    n = np.size(samples)
    if n < 10:
        raise InsufficientDataError(f"need at least 10 samples, got {n}")
    if not t > 0:
        raise DomainError("t must be > 0")
    st = math.sqrt(t)
    stat = ks_statistic_cdf(samples, lambda x: d.cdf(x / st))
    crit = ks_critical_one_sample(n)
    return KsResult(stat, n, crit, stat > crit)


def ks_two_sample(a, b):
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    na, nb = a.size, b.size
    if na < 10 or nb < 10:
        raise InsufficientDataError("need at least 10 samples in each set")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / na
    fb = np.searchsorted(b, pts, side="right") / nb
    stat = float(np.max(np.abs(fa - fb)))
    crit = ks_critical_two_sample(na, nb)
    return KsResult(stat, na, crit, stat > crit)


# ---------------------------------------------------------------------------
# increments
# ---------------------------------------------------------------------------

def _cov_jackknife(x, y):
    """Sample covariance and its leave-one-out replicates."""
    n = x.size
    if n < 3:
        raise InsufficientDataError("need at least 3 paths")
    xc = x - x.mean()
    yc = y - y.mean()
    sx, sy, sxy = xc.sum(), yc.sum(), np.dot(xc, yc)
    cov = (sxy - sx * sy / n) / (n - 1)
    m = n - 1
    sx_i, sy_i = sx - xc, sy - yc
    loo = (sxy - xc * yc - sx_i * sy_i / m) / (m - 1)
    return cov, loo


def _jackknife_se(loo):
    n = loo.size
    return float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def _increment(e, a, b):
    return e.cross_section(b) - e.cross_section(a)


def increment_covariance(e, s1, s2, t1, t2):
    """Cov(Z_t2 - Z_t1, Z_s2 - Z_s1) across paths with a jackknife standard error."""
    if not (s1 < s2 <= t1 < t2):
        raise DomainError("need s1 < s2 <= t1 < t2")
    x = _increment(e, s1, s2)
    y = _increment(e, t1, t2)
    cov, loo = _cov_jackknife(x, y)
    return float(cov), _jackknife_se(loo)


def increment_variance_difference(e, first, second):
    """Var(second increment) - Var(first increment), jackknife standard error.

    ``first`` and ``second`` are (start, end) time pairs on the grid.
    """
    (a1, a2), (b1, b2) = first, second
    if not (a1 < a2 and b1 < b2):
        raise DomainError("increments need start < end")
    x = _increment(e, a1, a2)
    y = _increment(e, b1, b2)
    vx, lx = _cov_jackknife(x, x)
    vy, ly = _cov_jackknife(y, y)
    return float(vy - vx), _jackknife_se(ly - lx)


# ---------------------------------------------------------------------------
# error growth and isometry
# ---------------------------------------------------------------------------

def growth_horizons(grid):
    out = []
    for T in ERROR_GROWTH_HORIZONS:
        try:
            grid.index_of(T)
        except DomainError:
            continue
        out.append(T)
    return out


def error_growth_report(horizons, errors, n_paths):
    """Aggregate per-path errors (one column per horizon) into RMS and ratios."""
    errors = np.asarray(errors, dtype=float)
    rms = [float(math.sqrt(np.mean(errors[:, j] ** 2))) for j in range(len(horizons))]
    ratio = [r / math.sqrt(T * math.log(T)) for r, T in zip(rms, horizons)]
    return ErrorGrowthReport(list(horizons), rms, ratio, n_paths)


def error_growth(d, grid, n_paths, base_seed, block_size=1000, quantile_table=True):
    """RMS of E_T = Z_T(rw_drift) - Z_T(rw_nodrift) over a shared driver."""
    if grid.horizon < 2:
        raise DomainError("grid horizon must be >= 2")
    horizons = growth_horizons(grid)
    if not horizons:
        raise DomainError("no standard horizon lies on the grid")
    idx = [grid.index_of(T) for T in horizons]
    dist = d.with_quantile_table() if quantile_table else d
    errors = np.empty((n_paths, len(idx)))
    for start in range(0, n_paths, block_size):
        seeds = [sde.path_seed(base_seed, i) for i in range(start, min(start + block_size, n_paths))]
        B = sde.brownian_from_increments(sde.normal_increments(seeds, grid))
        E = _walk_difference(dist, grid, B)
        errors[start : start + len(seeds)] = E[:, idx]
    return error_growth_report(horizons, errors, n_paths)


def _walk_difference(d, grid, B):
    drift, _ = sde.translation_from_driver(d, grid, Scheme.RW_DRIFT, B)
    nodrift, _ = sde.translation_from_driver(d, grid, Scheme.RW_NODRIFT, B)
    return drift - nodrift


def ito_isometry_check(grid, d, n_paths, base_seed, block_size=1000, quantile_table=True):
    """(lhs, rhs, std_error) for E[(sum h dB)^2] = sum E[h^2] dt.

    The sum runs over grid intervals [t_k, t_{k+1}], k = 1..n-1, matching
    the walks (h is singular at t = 0).  ``std_error`` is that of the mean of
    the per-path differences I^2 - sum h^2 dt.
    """
    if n_paths < 2:
        raise InsufficientDataError("need at least 2 paths")
    if grid.n_steps < 2:
        raise DomainError("grid needs at least 2 steps")
    if quantile_table:
        d = d.with_quantile_table()
    lhs_terms = np.empty(n_paths)
    rhs_terms = np.empty(n_paths)
    for start in range(0, n_paths, block_size):
        seeds = [sde.path_seed(base_seed, i) for i in range(start, min(start + block_size, n_paths))]
        B = sde.brownian_from_increments(sde.normal_increments(seeds, grid))
        _, hh, _, _ = evaluate_kernel(B[:, :-1], grid.times[:-1], d, need_drift=False)
        integral = np.sum(hh * np.diff(B, axis=1), axis=1)
        sl = slice(start, start + len(seeds))
        lhs_terms[sl] = integral**2
        rhs_terms[sl] = np.sum(hh * hh, axis=1) * grid.dt
    diff = lhs_terms - rhs_terms
    se = float(np.std(diff, ddof=1) / math.sqrt(n_paths))
    return float(lhs_terms.mean()), float(rhs_terms.mean()), se


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------

def histogram(samples, bins, range=None):
    """Density histogram normalized by the total sample count.

    Bin densities integrate to 1 when every sample falls inside the range.
    The default range is [min, max] padded by 1% of the span on each side.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if int(bins) != bins or bins < 2:
        raise DomainError("bins must be an integer >= 2")
    if x.size == 0:
        raise InsufficientDataError("no samples")
    if range is None:
        lo, hi = float(x.min()), float(x.max())
        pad = 0.01 * (hi - lo)
        lo, hi = lo - pad, hi + pad
    else:
        lo, hi = map(float, range)
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise DomainError(f"degenerate histogram range ({lo}, {hi})")
    edges = np.linspace(lo, hi, int(bins) + 1)
    counts, _ = np.histogram(x, bins=edges)
    density = counts / (x.size * np.diff(edges))
    return Histogram(edges, counts, density, x.size)


def bin_average_density(cdf, edges):
    """Average of a density over each bin, from its CDF."""
    c = np.asarray(cdf(np.asarray(edges, dtype=float)), dtype=float)
    return np.diff(c) / np.diff(edges)


def histogram_envelope_z(hist, cdf):
    """Per-bin z-scores of the observed densities against binomial counts."""
    p = np.diff(np.asarray(cdf(hist.edges), dtype=float))
    expected = hist.n * p
    sd = np.sqrt(np.maximum(hist.n * p * (1 - p), 1e-300))
    return (hist.counts - expected) / sd
