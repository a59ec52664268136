"""Special functions used by the standardized marginal laws.

All functions accept scalars or array-likes and return a Python float for
scalar input, a numpy array otherwise.  They are pure; there is no module
state beyond constants.

The regularized incomplete beta function and its inverse are also available
in *logit coordinates* (``x = 1 / (1 + exp(-w))``).  Working in ``w`` keeps
both ``x`` and ``1 - x`` at full relative precision, which is what the
heavy-tailed Student-t and EGB2 quantiles need far out in the tails.
"""

import math

import numpy as np
from scipy import special as _sp

from .errors import ConvergenceError, DomainError, InfiniteQuantileError

SQRT_2PI = math.sqrt(2.0 * math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
EULER_GAMMA = 0.57721566490153286061

BETA_CF_MAXIT = 300
BETA_CF_EPS = 1e-15
_FPMIN = 1e-300

# Shift target for the digamma/polygamma recurrence.
_PSI_XMIN = 10.0
# B_2, B_4, ..., B_20
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
)


def _asarray(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    if scalar:
        return float(arr)
    return arr


def _require_finite(arr, name="x"):
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")


def _require_positive(arr, name="x"):
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be finite and > 0")


# ---------------------------------------------------------------------------
# Standard normal
# ---------------------------------------------------------------------------

def std_normal_pdf(x):
    """phi(x) = exp(-x^2/2) / sqrt(2 pi)."""
    arr, scalar = _asarray(x)
    _require_finite(arr)
    return _out(np.exp(-0.5 * arr * arr) / SQRT_2PI, scalar)


def std_normal_logpdf(x):
    arr, scalar = _asarray(x)
    _require_finite(arr)
    return _out(-0.5 * arr * arr - LOG_SQRT_2PI, scalar)


def std_normal_cdf(x):
    """Phi(x); accurate to full relative precision in the lower tail."""
    arr, scalar = _asarray(x)
    _require_finite(arr)
    return _out(_sp.ndtr(arr), scalar)


def std_normal_sf(x):
    """1 - Phi(x) computed without cancellation."""
    arr, scalar = _asarray(x)
    _require_finite(arr)
    return _out(_sp.ndtr(-arr), scalar)


def std_normal_quantile(p):
    """Phi^{-1}(p) for 0 < p < 1."""
    arr, scalar = _asarray(p)
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise DomainError("p must lie in [0, 1]")
    if np.any((arr == 0) | (arr == 1)):
        raise InfiniteQuantileError("normal quantile is infinite at p = 0 or 1")
    return _out(_sp.ndtri(arr), scalar)


# ---------------------------------------------------------------------------
# Gamma family
# ---------------------------------------------------------------------------

def log_gamma(x):
    """ln Gamma(x) for x > 0."""
    arr, scalar = _asarray(x)
    _require_positive(arr)
    return _out(_sp.gammaln(arr), scalar)


def log_beta(a, b):
    return log_gamma(a) + log_gamma(b) - log_gamma(np.add(a, b))


def polygamma(n, x):
    """psi^(n)(x) for n in {0, 1, 2, 3} and x > 0.

    Upward recurrence moves the argument to at least ``_PSI_XMIN`` and the
    asymptotic (Bernoulli) series finishes the job.
    """
    if n not in (0, 1, 2, 3):
        raise DomainError("polygamma order must be 0, 1, 2 or 3")
    arr, scalar = _asarray(x)
    _require_positive(arr)
    x = np.array(arr, dtype=float, copy=True)
    acc = np.zeros_like(x)
    sign = -1.0 if n % 2 == 0 else 1.0
    nfact = math.factorial(n)
    small = x < _PSI_XMIN
    while np.any(small):
        acc[small] += sign * nfact / x[small] ** (n + 1)
        x[small] += 1.0
        small = x < _PSI_XMIN

    inv = 1.0 / x
    inv2 = inv * inv
    if n == 0:
        series = np.log(x) - 0.5 * inv
        power = np.ones_like(x)
        for k, b2k in enumerate(_BERNOULLI_EVEN, start=1):
            power = power * inv2
            series -= b2k / (2 * k) * power
    else:
        series = math.factorial(n - 1) * inv**n + 0.5 * nfact * inv ** (n + 1)
        power = inv**n
        for k, b2k in enumerate(_BERNOULLI_EVEN, start=1):
            power = power * inv2
            coef = math.factorial(2 * k + n - 1) / math.factorial(2 * k)
            series += b2k * coef * power
        if n % 2 == 0:
            series = -series
    # the recurrence terms carry the (-1)^(n+1) sign themselves
    return _out(series + acc, scalar)


def digamma(x):
    """psi(x) = d/dx ln Gamma(x), x > 0."""
    return polygamma(0, x)


def trigamma(x):
    """psi'(x), x > 0."""
    return polygamma(1, x)


# ---------------------------------------------------------------------------
# Regularized incomplete beta
# ---------------------------------------------------------------------------

def _betacf(a, b, x):
    """Continued fraction for I_x(a, b) (modified Lentz), elementwise."""
    a, b, x = np.broadcast_arrays(a, b, x)
    out = np.empty(x.shape)
    a = a.ravel().copy()
    b = b.ravel().copy()
    x = x.ravel().copy()
    idx = np.arange(x.size)
    flat_out = out.reshape(-1)

    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    for m in range(1, BETA_CF_MAXIT + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        h = h * d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        done = np.abs(delta - 1.0) <= BETA_CF_EPS
        if np.any(done):
            flat_out[idx[done]] = h[done]
            keep = ~done
            if not np.any(keep):
                return out
            a, b, x, c, d, h, idx = (v[keep] for v in (a, b, x, c, d, h, idx))
            qab, qap, qam = qab[keep], qap[keep], qam[keep]
    raise ConvergenceError(
        f"incomplete beta continued fraction did not converge in "
        f"{BETA_CF_MAXIT} iterations (a={a[0]!r}, b={b[0]!r}, x={x[0]!r})"
    )


def _inc_beta_core(a, b, x, y, lnx, lny):
    """Return (I, 1 - I, log I, log(1 - I)) for 0 < x < 1, y = 1 - x.

    Whichever tail the continued fraction evaluates directly has full
    relative accuracy; the other is its complement.
    """
    a, b, x, y, lnx, lny = np.broadcast_arrays(a, b, x, y, lnx, lny)
    lnbeta = _sp.gammaln(a) + _sp.gammaln(b) - _sp.gammaln(a + b)
    log_front = a * lnx + b * lny - lnbeta
    direct = x < (a + 1.0) / (a + b + 2.0)

    log_lower = np.empty(x.shape)
    log_upper = np.empty(x.shape)
    if np.any(direct):
        cf = _betacf(a[direct], b[direct], x[direct])
        lv = log_front[direct] - np.log(a[direct]) + np.log(cf)
        log_lower[direct] = lv
        log_upper[direct] = np.log1p(-np.exp(lv))
    flip = ~direct
    if np.any(flip):
        cf = _betacf(b[flip], a[flip], y[flip])
        lv = log_front[flip] - np.log(b[flip]) + np.log(cf)
        log_upper[flip] = lv
        log_lower[flip] = np.log1p(-np.exp(lv))
    lower = np.exp(log_lower)
    upper = np.exp(log_upper)
    return lower, upper, log_lower, log_upper


def _check_shapes(a, b):
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    _require_positive(a_arr, "a")
    _require_positive(b_arr, "b")
    return a_arr, b_arr


def reg_inc_beta(a, b, x):
    """Regularized incomplete beta I_x(a, b)."""
    a_arr, b_arr = _check_shapes(a, b)
    x_arr, scalar = _asarray(x)
    scalar = scalar and a_arr.ndim == 0 and b_arr.ndim == 0
    if np.any(np.isnan(x_arr)) or np.any(x_arr < 0) or np.any(x_arr > 1):
        raise DomainError("x must lie in [0, 1]")
    a_arr, b_arr, x_arr = np.broadcast_arrays(a_arr, b_arr, x_arr)
    res = np.empty(x_arr.shape)
    res[x_arr == 0] = 0.0
    res[x_arr == 1] = 1.0
    inner = (x_arr > 0) & (x_arr < 1)
    if np.any(inner):
        xi = x_arr[inner]
        with np.errstate(divide="ignore"):
            lower, _, _, _ = _inc_beta_core(
                a_arr[inner], b_arr[inner], xi, 1.0 - xi, np.log(xi), np.log1p(-xi)
            )
        res[inner] = lower
    return _out(res, scalar)


def log_expit(w):
    """log(1 / (1 + exp(-w))) without overflow."""
    return -np.logaddexp(0.0, -np.asarray(w, dtype=float))


def reg_inc_beta_logit(a, b, w):
    """I_x(a, b) and 1 - I_x(a, b) with x = expit(w), both accurate.

    Returns a pair ``(lower, upper)`` of floats or arrays.
    """
    a_arr, b_arr = _check_shapes(a, b)
    w_arr, scalar = _asarray(w)
    scalar = scalar and a_arr.ndim == 0 and b_arr.ndim == 0
    if np.any(np.isnan(w_arr)):
        raise DomainError("w must not be NaN")
    a_arr, b_arr, w_arr = np.broadcast_arrays(a_arr, b_arr, w_arr)
    lower = np.empty(w_arr.shape)
    upper = np.empty(w_arr.shape)
    lower[w_arr == -np.inf] = 0.0
    upper[w_arr == -np.inf] = 1.0
    lower[w_arr == np.inf] = 1.0
    upper[w_arr == np.inf] = 0.0
    fin = np.isfinite(w_arr)
    if np.any(fin):
        lo, up = _inc_beta_logit_fin(a_arr[fin], b_arr[fin], w_arr[fin])[:2]
        lower[fin] = lo
        upper[fin] = up
    if scalar:
        return float(lower), float(upper)
    return lower, upper


def _inc_beta_logit_fin(a, b, w):
    lnx = log_expit(w)
    lny = log_expit(-w)
    return _inc_beta_core(a, b, np.exp(lnx), np.exp(lny), lnx, lny)


def inv_reg_inc_beta_logit(a, b, p, q=None, maxiter=100):
    """Solve I_{expit(w)}(a, b) = p for w.

    ``q`` is the complementary probability 1 - p; pass it explicitly when it
    is known more accurately than ``1 - p`` (upper-tail problems).

    Newton's method runs on log I (for p <= 1/2) or log(1 - I) otherwise.
    In logit coordinates the beta density is log-concave, so both tail
    functions are log-concave and Newton started from the tail-asymptotic
    bound converges monotonically.
    """
    a_arr, b_arr = _check_shapes(a, b)
    p_arr, scalar = _asarray(p)
    scalar = scalar and a_arr.ndim == 0 and b_arr.ndim == 0
    q_arr = 1.0 - p_arr if q is None else np.asarray(q, dtype=float)
    if (
        np.any(np.isnan(p_arr))
        or np.any(p_arr < 0)
        or np.any(p_arr > 1)
        or np.any(q_arr < 0)
        or np.any(q_arr > 1)
    ):
        raise DomainError("probabilities must lie in [0, 1]")
    a_arr, b_arr, p_arr, q_arr = np.broadcast_arrays(a_arr, b_arr, p_arr, q_arr)
    w_out = np.empty(p_arr.shape)
    w_out[p_arr == 0] = -np.inf
    w_out[q_arr == 0] = np.inf
    inner = (p_arr > 0) & (q_arr > 0)
    if np.any(inner):
        w_out[inner] = _newton_logit(
            a_arr[inner], b_arr[inner], p_arr[inner], q_arr[inner], maxiter
        )
    return _out(w_out, scalar)


def _newton_logit(a, b, p, q, maxiter):
    lnbeta = _sp.gammaln(a) + _sp.gammaln(b) - _sp.gammaln(a + b)
    use_upper = q < p
    target = np.where(use_upper, np.log(q), np.log(p))
    # I <= e^{a w} / (a B) and 1 - I <= e^{-b w} / (b B): start on the
    # concave side of the root.
    w = np.where(
        use_upper,
        -(target + np.log(b) + lnbeta) / b,
        (target + np.log(a) + lnbeta) / a,
    )
    out = np.empty_like(w)
    idx = np.arange(w.size)
    prev_step = np.full(w.shape, np.inf)
    for _ in range(maxiter):
        lnx = log_expit(w)
        lny = log_expit(-w)
        _, _, log_lo, log_up = _inc_beta_core(a, b, np.exp(lnx), np.exp(lny), lnx, lny)
        log_dens = a * lnx + b * lny - lnbeta
        g = np.where(use_upper, log_up, log_lo) - target
        dg = np.where(use_upper, -np.exp(log_dens - log_up), np.exp(log_dens - log_lo))
        step = g / dg
        w_new = w - step
        tol = 4e-16 * np.maximum(1.0, np.abs(w))
        done = (np.abs(step) <= tol) | (np.abs(step) >= np.abs(prev_step)) & (
            np.abs(step) < 1e-11 * np.maximum(1.0, np.abs(w))
        )
        w = np.where(done, w, w_new)
        prev_step = step
        if np.any(done):
            out[idx[done]] = w[done]
            keep = ~done
            if not np.any(keep):
                return out
            a, b, p, q, w, idx = a[keep], b[keep], p[keep], q[keep], w[keep], idx[keep]
            lnbeta, use_upper, target = lnbeta[keep], use_upper[keep], target[keep]
            prev_step = prev_step[keep]
    raise ConvergenceError(
        f"inverse incomplete beta did not converge in {maxiter} iterations"
    )


def inv_reg_inc_beta(a, b, p):
    """x in [0, 1] with I_x(a, b) = p; p = 0 and p = 1 map to 0 and 1."""
    w = inv_reg_inc_beta_logit(a, b, p)
    arr, scalar = _asarray(w)
    x = _sp.expit(arr)
    return _out(x, scalar)
