"""Standardized (mean 0, variance 1) marginal laws.

Each law is a location-scale family member ``x = m + s * z`` whose base
variable ``z`` has a known density.  The location ``m`` and scale ``s`` are
chosen so that the law has zero mean and unit variance.

The hot path used by the simulation layer is :meth:`quantile_from_normal`,
which evaluates ``F^{-1}(Phi(z))`` while keeping both tails at full precision.
"""

import dataclasses
import math
import re
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from . import specfun
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    InfiniteQuantileError,
    InfiniteVarianceError,
    NonDifferentiableError,
)

TABLE_KNOTS = 4096
TABLE_U_MIN = 1e-6


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "student_t"
    ASYM_LAPLACE = "asym_laplace"
    EGB2 = "egb2"


def _arr(x):
    a = np.asarray(x, dtype=float)
    return a, a.ndim == 0


def _ret(a, scalar):
    return float(a) if scalar else a


class QuantileTable:
    """Cubic Hermite table of ``z -> F^{-1}(Phi(z))``.

    Knots are uniform in the normal score over ``[Phi^{-1}(u_min),
    Phi^{-1}(1 - u_min)]``; slopes are the exact derivative
    ``phi(z) / f(F^{-1}(Phi(z)))``, so the interpolant is fourth-order.
    """

    def __init__(self, dist, n_knots=TABLE_KNOTS, u_min=TABLE_U_MIN):
        self.z_max = -specfun.std_normal_quantile(u_min)
        z = np.linspace(-self.z_max, self.z_max, n_knots)
        x = dist._quantile_from_normal_exact(z)
        slope = np.exp(specfun.std_normal_logpdf(z) - dist.logpdf(x))
        self.knots = z
        self.values = x
        self.slopes = slope
        self._spline = CubicHermiteSpline(z, x, slope)

    def is_monotone(self):
        """Fritsch-Carlson sufficient condition on every interval."""
        secant = np.diff(self.values) / np.diff(self.knots)
        if np.any(secant <= 0):
            return False
        alpha = self.slopes[:-1] / secant
        beta = self.slopes[1:] / secant
        return bool(np.all(alpha * alpha + beta * beta <= 9.0))

    def __call__(self, z):
        return self._spline(z)


@dataclass(frozen=True)
class StandardizedDistribution:
    """Base class; subclasses define the base law in ``z = (x - m) / s``."""

    loc: float
    scale: float
    table: QuantileTable = field(
        default=None, compare=False, repr=False, kw_only=True
    )

    family = None
    # whether the quantile needs an iterative solve (and so benefits from a table)
    iterative_quantile = False

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise DomainError("scale must be finite and > 0")
        if not math.isfinite(self.loc):
            raise DomainError("location must be finite")

    # -- base-law hooks -----------------------------------------------------
    def _logpdf_z(self, z):
        raise NotImplementedError

    def _score_z(self, z):
        raise NotImplementedError

    def _cdf_sf_z(self, z):
        raise NotImplementedError

    def _ppf_z(self, u, v):
        """Base quantile given u and v = 1 - u (both supplied accurately)."""
        raise NotImplementedError

    def shape_params(self):
        raise NotImplementedError

    @property
    def kappa3(self):
        return self.cumulants()[0]

    @property
    def kappa4(self):
        return self.cumulants()[1]

    # -- public API -----------------------------------------------------------
    def _z(self, x):
        a, scalar = _arr(x)
        if not np.all(np.isfinite(a)):
            raise DomainError("x must be finite")
        return (a - self.loc) / self.scale, scalar

    def logpdf(self, x):
        z, scalar = self._z(x)
        return _ret(self._logpdf_z(z) - math.log(self.scale), scalar)

    def pdf(self, x):
        z, scalar = self._z(x)
        return _ret(np.exp(self._logpdf_z(z)) / self.scale, scalar)

    def cdf(self, x):
        z, scalar = self._z(x)
        return _ret(self._cdf_sf_z(z)[0], scalar)

    def sf(self, x):
        z, scalar = self._z(x)
        return _ret(self._cdf_sf_z(z)[1], scalar)

    def score(self, x):
        """d/dx log f(x)."""
        z, scalar = self._z(x)
        return _ret(self._score_z(z) / self.scale, scalar)

    def pdf_prime(self, x):
        """f'(x)."""
        z, scalar = self._z(x)
        dens = np.exp(self._logpdf_z(z)) / self.scale
        return _ret(dens * self._score_z(z) / self.scale, scalar)

    def quantile(self, u):
        """F^{-1}(u) for 0 < u < 1 (always exact, never tabulated)."""
        a, scalar = _arr(u)
        if np.any(np.isnan(a)) or np.any(a < 0) or np.any(a > 1):
            raise DomainError("u must lie in [0, 1]")
        if np.any((a == 0) | (a == 1)):
            raise InfiniteQuantileError("quantile is infinite at u = 0 or 1")
        z = self._ppf_z(a, 1.0 - a)
        return _ret(self.loc + self.scale * z, scalar)

    def _quantile_from_normal_exact(self, z):
        u = specfun.std_normal_cdf(z)
        v = specfun.std_normal_sf(z)
        return self.loc + self.scale * self._ppf_z(u, v)

    def quantile_from_normal(self, z):
        """F^{-1}(Phi(z)), using the quantile table inside its range if set."""
        a, scalar = _arr(z)
        if not np.all(np.isfinite(a)):
            raise DomainError("z must be finite")
        if self.table is None:
            return _ret(self._quantile_from_normal_exact(a), scalar)
        inside = np.abs(a) <= self.table.z_max
        out = np.empty(a.shape)
        out[inside] = self.table(a[inside])
        if not np.all(inside):
            out[~inside] = self._quantile_from_normal_exact(a[~inside])
        return _ret(out, scalar)

    def with_quantile_table(self, n_knots=TABLE_KNOTS):
        """Copy carrying a quantile table; no-op for closed-form quantiles."""
        if not self.iterative_quantile or (self.table is not None and self.table.knots.size == n_knots):
            return self
        new = dataclasses.replace(self)
        object.__setattr__(new, "table", QuantileTable(self, n_knots=n_knots))
        return new

    def without_quantile_table(self):
        return dataclasses.replace(self, table=None)

    def cumulants(self):
        """(kappa3, kappa4): skewness and excess kurtosis of the law."""
        raise NotImplementedError

    def support_breakpoints(self):
        return [self.loc]

    def moment(self, order, about=0.0):
        """E[(X - about)^order] by adaptive quadrature."""

        def integrand(x):
            return (x - about) ** order * self.pdf(x)

        pts = sorted(self.support_breakpoints())
        lo, hi = pts[0], pts[-1]
        pieces = [(-np.inf, lo)] + list(zip(pts[:-1], pts[1:])) + [(hi, np.inf)]
        total = 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                for a, b in pieces:
                    if a == b:
                        continue
                    val, _ = integrate.quad(
                        integrand, a, b, epsabs=1e-12, epsrel=1e-12, limit=500
                    )
                    total += val
            except integrate.IntegrationWarning as exc:
                raise ConvergenceError(f"quadrature failed: {exc}") from exc
        return total

    def descriptor(self):
        """Configuration string, e.g. ``egb2{p=0.95,q=0.45}``."""
        parts = [f"{k}={v!r}" for k, v in self.shape_params().items()]
        ref = make_distribution(self.family, **self.shape_params())
        if self.loc != ref.loc:
            parts.append(f"m={self.loc!r}")
        if self.scale != ref.scale:
            parts.append(f"s={self.scale!r}")
        return f"{self.family.value}{{{','.join(parts)}}}"

    def __str__(self):
        return self.descriptor()


def standardization_check(d):
    """Quadrature (mean, variance) of ``d``; both should be (0, 1)."""
    mean = d.moment(1)
    var = d.moment(2, about=mean)
    return mean, var


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian(StandardizedDistribution):
    family = Family.GAUSSIAN

    def shape_params(self):
        return {}

    def _logpdf_z(self, z):
        return -0.5 * z * z - specfun.LOG_SQRT_2PI

    def _score_z(self, z):
        return -z

    def _cdf_sf_z(self, z):
        return specfun.std_normal_cdf(z), specfun.std_normal_sf(z)

    def _ppf_z(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        out = np.zeros(u.shape)
        lower = u < v
        upper = v < u
        out[lower] = specfun.std_normal_quantile(u[lower])
        out[upper] = -specfun.std_normal_quantile(v[upper])
        return out

    def _quantile_from_normal_exact(self, z):
        # F = Phi: the composition is the identity
        return self.loc + self.scale * np.asarray(z, dtype=float)

    def cumulants(self):
        return 0.0, 0.0


@dataclass(frozen=True)
class StudentT(StandardizedDistribution):
    nu: float
    iterative_quantile = True
    family = Family.STUDENT_T

    def __post_init__(self):
        super().__post_init__()
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise DomainError("nu must be finite and > 0")

    def shape_params(self):
        return {"nu": self.nu}

    @property
    def _lognorm(self):
        nu = self.nu
        return (
            math.lgamma(0.5 * (nu + 1.0))
            - math.lgamma(0.5 * nu)
            - 0.5 * math.log(nu * math.pi)
        )

    def _logpdf_z(self, z):
        return self._lognorm - 0.5 * (self.nu + 1.0) * np.log1p(z * z / self.nu)

    def _score_z(self, z):
        return -(self.nu + 1.0) * z / (self.nu + z * z)

    def _cdf_sf_z(self, z):
        z = np.asarray(z, dtype=float)
        # x = nu / (nu + z^2) = expit(w)
        with np.errstate(divide="ignore"):
            w = math.log(self.nu) - 2.0 * np.log(np.abs(z))
        i_lo, i_up = specfun.reg_inc_beta_logit(0.5 * self.nu, 0.5, w)
        tail = 0.5 * np.asarray(i_lo)
        body = 0.5 + 0.5 * np.asarray(i_up)
        neg = z < 0
        return np.where(neg, tail, body), np.where(neg, body, tail)

    def _ppf_z(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        out = np.zeros(u.shape)
        small = np.minimum(u, v)
        off = u != v
        if np.any(off):
            s = small[off]
            w = specfun.inv_reg_inc_beta_logit(
                0.5 * self.nu, 0.5, 2.0 * s, np.abs(u[off] - v[off])
            )
            mag = math.sqrt(self.nu) * np.exp(-0.5 * np.asarray(w))
            out[off] = np.where(u[off] < v[off], -mag, mag)
        return out

    def cumulants(self):
        k3 = 0.0 if self.nu > 3 else math.nan
        k4 = 6.0 / (self.nu - 4.0) if self.nu > 4 else math.inf
        return k3, k4

    def support_breakpoints(self):
        return [self.loc - 10 * self.scale, self.loc, self.loc + 10 * self.scale]


@dataclass(frozen=True)
class AsymmetricLaplace(StandardizedDistribution):
    kappa: float
    family = Family.ASYM_LAPLACE

    def __post_init__(self):
        super().__post_init__()
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise DomainError("kappa must be finite and > 0")

    def shape_params(self):
        return {"kappa": self.kappa}

    @property
    def _mass_below(self):
        k2 = self.kappa * self.kappa
        return k2 / (1.0 + k2)

    def _logpdf_z(self, z):
        k = self.kappa
        base = math.log(k / (1.0 + k * k))
        return base + np.where(z >= 0, -k * z, z / k)

    def _score_z(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z == 0):
            raise NonDifferentiableError(
                "asymmetric Laplace density is not differentiable at x = m"
            )
        return np.where(z > 0, -self.kappa, 1.0 / self.kappa)

    def _cdf_sf_z(self, z):
        k = self.kappa
        pm = self._mass_below
        z = np.asarray(z, dtype=float)
        neg = z < 0
        with np.errstate(over="ignore"):
            lower_branch = pm * np.exp(np.where(neg, z, 0.0) / k)
            upper_tail = np.exp(-k * np.where(neg, 0.0, z)) / (1.0 + k * k)
        cdf = np.where(neg, lower_branch, 1.0 - upper_tail)
        sf = np.where(neg, 1.0 - lower_branch, upper_tail)
        return cdf, sf

    def _ppf_z(self, u, v):
        k = self.kappa
        pm = self._mass_below
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        below = u <= pm
        with np.errstate(divide="ignore", invalid="ignore"):
            zl = k * np.log(u / pm)
            zu = -np.log(v * (1.0 + k * k)) / k
        return np.where(below, zl, zu)

    def cumulants(self):
        k = self.kappa
        pm = self._mass_below
        raw = [
            math.factorial(n) * (pm * (-k) ** n + (1.0 - pm) * k ** (-n))
            for n in range(1, 5)
        ]
        m1, m2, m3, m4 = raw
        mu2 = m2 - m1**2
        mu3 = m3 - 3 * m1 * m2 + 2 * m1**3
        mu4 = m4 - 4 * m1 * m3 + 6 * m1**2 * m2 - 3 * m1**4
        return mu3 / mu2**1.5, mu4 / mu2**2 - 3.0


@dataclass(frozen=True)
class EGB2(StandardizedDistribution):
    p: float
    q: float
    iterative_quantile = True
    family = Family.EGB2

    def __post_init__(self):
        super().__post_init__()
        for name in ("p", "q"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise DomainError(f"{name} must be finite and > 0")

    def shape_params(self):
        return {"p": self.p, "q": self.q}

    @property
    def _log_beta(self):
        return math.lgamma(self.p) + math.lgamma(self.q) - math.lgamma(self.p + self.q)

    def _logpdf_z(self, z):
        return self.p * z - (self.p + self.q) * np.logaddexp(0.0, z) - self._log_beta

    def _score_z(self, z):
        return self.p - (self.p + self.q) * np.exp(specfun.log_expit(z))

    def _cdf_sf_z(self, z):
        lo, up = specfun.reg_inc_beta_logit(self.p, self.q, z)
        return np.asarray(lo), np.asarray(up)

    def _ppf_z(self, u, v):
        return np.asarray(specfun.inv_reg_inc_beta_logit(self.p, self.q, u, v))

    def cumulants(self):
        p, q = self.p, self.q
        var = specfun.polygamma(1, p) + specfun.polygamma(1, q)
        k3 = (specfun.polygamma(2, p) - specfun.polygamma(2, q)) / var**1.5
        k4 = (specfun.polygamma(3, p) + specfun.polygamma(3, q)) / var**2
        return k3, k4

    def support_breakpoints(self):
        # logistic kernel: tails decay like exp(-p z) and exp(-q z)
        return [
            self.loc - 40.0 * self.scale / self.p,
            self.loc,
            self.loc + 40.0 * self.scale / self.q,
        ]


# ---------------------------------------------------------------------------
# Factories
# ---------------------------------------------------------------------------

def make_gaussian():
    return Gaussian(loc=0.0, scale=1.0)


def make_student_t(nu):
    nu = float(nu)
    if not nu > 2:
        raise InfiniteVarianceError(f"Student t needs nu > 2 for finite variance, got {nu}")
    return StudentT(loc=0.0, scale=math.sqrt((nu - 2.0) / nu), nu=nu)


def make_asymmetric_laplace(kappa):
    k = float(kappa)
    if not k > 0:
        raise DomainError(f"kappa must be > 0, got {k}")
    s = math.sqrt(k * k / (1.0 + k**4))
    m = -s * (1.0 - k * k) / k
    return AsymmetricLaplace(loc=m, scale=s, kappa=k)


def make_egb2(p, q):
    p, q = float(p), float(q)
    if not (p > 0 and q > 0):
        raise DomainError(f"EGB2 needs p > 0 and q > 0, got p={p}, q={q}")
    s = (specfun.trigamma(p) + specfun.trigamma(q)) ** -0.5
    m = (specfun.digamma(q) - specfun.digamma(p)) * s
    return EGB2(loc=m, scale=s, p=p, q=q)


_FACTORIES = {
    Family.GAUSSIAN: (make_gaussian, ()),
    Family.STUDENT_T: (make_student_t, ("nu",)),
    Family.ASYM_LAPLACE: (make_asymmetric_laplace, ("kappa",)),
    Family.EGB2: (make_egb2, ("p", "q")),
}


def make_distribution(family, **params):
    family = Family(family)
    factory, names = _FACTORIES[family]
    if set(params) != set(names):
        raise ConfigError(
            f"{family.value} expects parameters {sorted(names)}, got {sorted(params)}",
            field="distribution",
        )
    return factory(*(params[n] for n in names))


_DESCRIPTOR = re.compile(r"^\s*([a-z_0-9]+)\s*\{(.*)\}\s*$")


def parse_distribution(text):
    """Parse ``family{key=value,...}``.

    Besides the shape parameters, the optional keys ``m`` and ``s`` override
    the standardizing location/scale (useful for negative controls).
    """
    match = _DESCRIPTOR.match(text)
    if not match:
        raise ConfigError(f"malformed distribution descriptor {text!r}", field="distribution")
    name, body = match.groups()
    try:
        family = Family(name)
    except ValueError:
        raise ConfigError(f"unknown distribution family {name!r}", field="distribution") from None
    params = {}
    for item in filter(None, (s.strip() for s in body.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {item!r}", field="distribution")
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"non-numeric value in {item!r}", field="distribution") from None
    overrides = {k: params.pop(k) for k in ("m", "s") if k in params}
    try:
        dist = make_distribution(family, **params)
        if overrides:
            dist = dataclasses.replace(
                dist,
                loc=overrides.get("m", dist.loc),
                scale=overrides.get("s", dist.scale),
            )
    except DomainError as exc:
        raise ConfigError(str(exc), field="distribution") from exc
    return dist


# reference parameter sets and the six marginal panels
PANEL_DISTRIBUTIONS = (
    "student_t{nu=2.1}",
    "student_t{nu=10}",
    "asym_laplace{kappa=1.5}",
    "asym_laplace{kappa=9}",
    "egb2{p=0.95,q=0.45}",
    "egb2{p=4,q=0.1}",
)
