"""The translation map g(b, t) = sqrt(t) F^{-1}(Phi(b / sqrt(t))) and its calculus.

Notation used below, for a Brownian value ``b`` at time ``t``:

* ``z = b / sqrt(t)`` is the normal score,
* ``q = F^{-1}(Phi(z))`` is the matching quantile of the standardized law,
* ``h = phi(z) / f(q)`` is the diffusion modulator (``dg/db``),
* ``r`` is the Ito drift ``dg/dt + (1/2) d2g/db2``.

Everything is vectorized over ``b`` and ``t``.
"""

from dataclasses import dataclass

import numpy as np

from . import specfun
from .errors import DomainError, TailSaturationError

# Simulation clamps the normal score to this value before transforming.
CLAMP_Z = 8.0


@dataclass(frozen=True)
class ItoPartials:
    dg_dt: float
    dg_dy: float
    d2g_dy2: float


@dataclass(frozen=True)
class CornishFisherCoeffs:
    kappa3: float
    kappa4: float

    def __post_init__(self):
        if not (np.isfinite(self.kappa3) and np.isfinite(self.kappa4)):
            raise DomainError("Cornish-Fisher coefficients must be finite")

    @classmethod
    def from_distribution(cls, d):
        return cls(*d.cumulants())


def _prepare(b, t):
    b = np.asarray(b, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)) or not np.all(np.isfinite(t)):
        raise DomainError("t must be finite and > 0")
    if not np.all(np.isfinite(b)):
        raise DomainError("b must be finite")
    scalar = b.ndim == 0 and t.ndim == 0
    b, t = np.broadcast_arrays(b, t)
    return b, t, np.sqrt(t), scalar


def _check_saturation(z):
    # Phi(|z|) == 1.0 means the upper tail is lost in double precision.
    if np.any(specfun.std_normal_cdf(np.abs(z)) == 1.0):
        raise TailSaturationError(
            "normal score too extreme: Phi(b / sqrt(t)) rounds to 0 or 1"
        )


def _ret(x, scalar):
    return float(x) if scalar else x


def _pieces(b, t, d, clamp=False):
    """Shared evaluation: (sqrt t, z, q, log h).

    With ``clamp=True`` the normal score is clipped to +-CLAMP_Z instead of
    raising; the caller is responsible for counting clamps.
    """
    b, t, st, _ = _prepare(b, t)
    z = b / st
    if clamp:
        z = np.clip(z, -CLAMP_Z, CLAMP_Z)
    else:
        _check_saturation(z)
    q = d.quantile_from_normal(z)
    log_f = np.asarray(d.logpdf(q))
    if np.any(np.isneginf(log_f)):
        raise TailSaturationError("density underflow at the transformed point")
    log_h = specfun.std_normal_logpdf(z) - log_f
    return st, z, np.asarray(q), np.asarray(log_h)


def transform(b, t, d):
    """sqrt(t) F^{-1}(Phi(b / sqrt(t)))."""
    b_, t_, st, scalar = _prepare(b, t)
    z = b_ / st
    _check_saturation(z)
    return _ret(st * d.quantile_from_normal(z), scalar)


def h(b, t, d):
    """Diffusion modulator phi(z) / f(F^{-1}(Phi(z))) with z = b / sqrt(t)."""
    scalar = np.ndim(b) == 0 and np.ndim(t) == 0
    _, _, _, log_h = _pieces(b, t, d)
    return _ret(np.exp(log_h), scalar)


def drift_r(b, t, d):
    """Ito drift of Z_t = g(B_t, t).

    r = q / (2 sqrt t) - (b / t) h - h^2 f'(q) / (2 sqrt(t) f(q))

    The last term phi^2 f' / f^3 is regrouped as the density
    score times h^2 so that no power of f is formed explicitly.
    """
    scalar = np.ndim(b) == 0 and np.ndim(t) == 0
    st, z, q, log_h = _pieces(b, t, d)
    return _ret(_drift_from_pieces(z, st, q, log_h, d), scalar)


def _drift_from_pieces(z, st, q, log_h, d):
    # b / t is written as z / sqrt(t) so the Gaussian case cancels exactly
    hh = np.exp(log_h)
    score = np.asarray(d.score(q))
    return q / (2.0 * st) - (z / st) * hh - 0.5 * hh * hh * score / st


def ito_partials(b, t, d):
    """Closed-form partial derivatives of g(y, t) at y = b."""
    scalar = np.ndim(b) == 0 and np.ndim(t) == 0
    st, z, q, log_h = _pieces(b, t, d)
    hh = np.exp(log_h)
    score = np.asarray(d.score(q))
    dg_dt = (q - z * hh) / (2.0 * st)
    dg_dy = hh
    d2g_dy2 = -(z * hh + hh * hh * score) / st
    if scalar:
        return ItoPartials(float(dg_dt), float(dg_dy), float(d2g_dy2))
    return ItoPartials(dg_dt, dg_dy, d2g_dy2)


def evaluate_kernel(b, t, d, need_drift=True):
    """Vectorized (q, h, r) with clamping, for the simulation layer.

    Returns ``(q, h, r, clamped)`` where ``clamped`` flags entries whose
    normal score was clipped to +-CLAMP_Z.  ``q`` is the unscaled quantile,
    so the exact transform is ``sqrt(t) * q``.  ``r`` is None when
    ``need_drift`` is false (the density derivative is then never touched).
    """
    b_, t_, st, _ = _prepare(b, t)
    clamped = np.abs(b_ / st) > CLAMP_Z
    st, z, q, log_h = _pieces(b_, t_, d, clamp=True)
    r = _drift_from_pieces(z, st, q, log_h, d) if need_drift else None
    return q, np.exp(log_h), r, clamped


# ---------------------------------------------------------------------------
# Cornish-Fisher view
# ---------------------------------------------------------------------------

def delta_cf(x, c):
    """Three-term Cornish-Fisher deviation of the quantile from x."""
    x = np.asarray(x, dtype=float)
    k3, k4 = c.kappa3, c.kappa4
    val = (
        k3 / 6.0 * (x * x - 1.0)
        + k4 / 24.0 * (x**3 - 3.0 * x)
        - k3 * k3 / 36.0 * (2.0 * x**3 - 5.0 * x)
    )
    return float(val) if val.ndim == 0 else val


def transform_cf(b, t, c):
    """b + sqrt(t) delta(b / sqrt(t))."""
    b_, t_, st, scalar = _prepare(b, t)
    return _ret(b_ + st * np.asarray(delta_cf(b_ / st, c)), scalar)


def sensitivity_skew(b, t):
    """d/d(kappa3) of the Cornish-Fisher path: (b^2 - t) / (6 sqrt t)."""
    b_, t_, st, scalar = _prepare(b, t)
    return _ret((b_ * b_ - t_) / (6.0 * st), scalar)


def sensitivity_kurt(b, t):
    """d/d(kappa4) of the Cornish-Fisher path: (b^3 / t - 3 b) / 24."""
    b_, t_, _, scalar = _prepare(b, t)
    return _ret((b_**3 / t_ - 3.0 * b_) / 24.0, scalar)
