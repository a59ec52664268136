"""Path generation for translation processes and SDEs driven by them.

Every path owns an independent random stream: a Philox counter-based
generator keyed by ``(base_seed + path_index) mod 2**64``.  Draws for step
``k`` are the ``k``-th draws of that stream, so a path is a pure function of
its seed and ensembles do not depend on block size, ordering or the number
of worker threads.

The walks start at the first grid point ``t_1 = dt`` from the exact value
``Z_{t_1} = g(B_{t_1}, t_1)``; ``h`` and ``r`` are singular at ``t = 0``.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import specfun
from .errors import AbortedPathError, ConfigError, DomainError
from .translation import evaluate_kernel

SEED_MASK = (1 << 64) - 1


class Scheme(str, Enum):
    EXACT = "exact"
    RW_DRIFT = "rw_drift"
    RW_NODRIFT = "rw_nodrift"
    BINARY_WALK = "binary_walk"
    BROWNIAN = "brownian"


WALK_SCHEMES = (Scheme.RW_DRIFT, Scheme.RW_NODRIFT)
TRANSLATION_SCHEMES = (Scheme.EXACT, Scheme.RW_DRIFT, Scheme.RW_NODRIFT)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k * dt for k = 1..n_steps (t = 0 is excluded)."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError("dt must be finite and > 0")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError("n_steps must be a positive integer")

    @classmethod
    def from_horizon(cls, dt, horizon):
        n = int(round(horizon / dt))
        if n < 1 or not math.isclose(n * dt, horizon, rel_tol=1e-9):
            raise DomainError(f"horizon {horizon} is not a multiple of dt {dt}")
        return cls(dt, n)

    @property
    def horizon(self):
        return self.n_steps * self.dt

    @property
    def times(self):
        return self.dt * np.arange(1, self.n_steps + 1)

    def index_of(self, t):
        """Array index of grid time ``t``; DomainError if ``t`` is off-grid."""
        k = int(round(t / self.dt))
        if k < 1 or k > self.n_steps or not math.isclose(k * self.dt, t, rel_tol=1e-9, abs_tol=1e-12):
            raise DomainError(f"time {t} is not a point of the grid")
        return k - 1


@dataclass(frozen=True)
class CoefficientSpec:
    """Named drift alpha(x, t) and diffusion sigma(x, t).

    drift: ``zero``, ``constant`` (alpha = a) or ``mean_revert``
    (alpha = theta (mu - x)).  diffusion: ``constant`` (sigma = sigma0) or
    ``proportional`` (sigma = sigma0 * x).
    """

    drift: str = "zero"
    a: float = 0.0
    theta: float = 0.0
    mu: float = 0.0
    diffusion: str = "constant"
    sigma0: float = 1.0

    def __post_init__(self):
        if self.drift not in ("zero", "constant", "mean_revert"):
            raise ConfigError(f"unknown drift {self.drift!r}", field="drift")
        if self.diffusion not in ("constant", "proportional"):
            raise ConfigError(f"unknown diffusion {self.diffusion!r}", field="diffusion")
        for name in ("a", "theta", "mu", "sigma0"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError("must be finite", field=name)

    def alpha(self, x, t):
        if self.drift == "zero":
            return np.zeros_like(x)
        if self.drift == "constant":
            return np.full_like(x, self.a)
        return self.theta * (self.mu - x)

    def sigma(self, x, t):
        if self.diffusion == "constant":
            return np.full_like(x, self.sigma0)
        return self.sigma0 * x

    def drift_descriptor(self):
        if self.drift == "zero":
            return "zero{}"
        if self.drift == "constant":
            return f"constant{{a={self.a!r}}}"
        return f"mean_revert{{theta={self.theta!r},mu={self.mu!r}}}"

    def diffusion_descriptor(self):
        return f"{self.diffusion}{{sigma={self.sigma0!r}}}"


@dataclass
class Path:
    grid: TimeGrid
    values: np.ndarray
    scheme: Scheme
    seed: int
    driver_values: Optional[np.ndarray] = None
    clamp_count: int = 0

    @property
    def times(self):
        return self.grid.times


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

def path_seed(base_seed, index):
    return (int(base_seed) + int(index)) & SEED_MASK


def path_rng(seed):
    return np.random.Generator(np.random.Philox(key=int(seed) & SEED_MASK))


def normal_increments(seeds, grid):
    """Brownian increments, one row per seed."""
    out = np.empty((len(seeds), grid.n_steps))
    sq = math.sqrt(grid.dt)
    for row, seed in enumerate(seeds):
        out[row] = path_rng(seed).standard_normal(grid.n_steps) * sq
    return out


def coin_flips(seeds, n_steps):
    """Independent fair +-1 draws, one row per seed."""
    out = np.empty((len(seeds), n_steps))
    for row, seed in enumerate(seeds):
        out[row] = 2.0 * path_rng(seed).integers(0, 2, n_steps) - 1.0
    return out


def brownian_from_increments(increments):
    return np.cumsum(increments, axis=-1)


def stratified_terminals(n, horizon):
    """Terminal Brownian values at the n midpoint quantiles of N(0, horizon)."""
    u = (np.arange(n) + 0.5) / n
    return specfun.std_normal_quantile(u) * math.sqrt(horizon)


def pin_terminal(driver, grid, terminal):
    """Brownian bridges: shift each row linearly so it ends at ``terminal``."""
    driver = np.asarray(driver, dtype=float)
    shift = driver[:, -1] - np.asarray(terminal, dtype=float)
    return driver - np.outer(shift, grid.times / grid.horizon)


def subsample_driver(driver, factor):
    """Driver on a grid ``factor`` times coarser (same Brownian path)."""
    return np.asarray(driver)[..., factor - 1 :: factor]


# ---------------------------------------------------------------------------
# vectorized kernels (rows are paths, columns are grid points)
# ---------------------------------------------------------------------------

def translation_from_driver(d, grid, scheme, driver):
    """Apply a translation scheme to Brownian values on ``grid``.

    Returns ``(values, clamp_counts)``.  ``driver`` has shape
    ``(n_paths, n_steps)`` (a 1-D array is treated as one path).
    """
    scheme = Scheme(scheme)
    B = np.atleast_2d(np.asarray(driver, dtype=float))
    t = grid.times
    if scheme == Scheme.BROWNIAN:
        return B.copy(), np.zeros(B.shape[0], dtype=int)
    if scheme == Scheme.EXACT:
        q, _, _, clamped = evaluate_kernel(B, t, d, need_drift=False)
        return np.sqrt(t) * q, clamped.sum(axis=1)
    if scheme not in WALK_SCHEMES:
        raise DomainError(f"scheme {scheme.value} is not a translation scheme")
    need_drift = scheme == Scheme.RW_DRIFT
    # h and r are needed at t_1..t_{n-1}; t_1 alone when there is one step
    cols = max(B.shape[1] - 1, 1)
    q, hh, r, clamped = evaluate_kernel(B[:, :cols], t[:cols], d, need_drift=need_drift)
    m = B.shape[1] - 1
    inc = hh[:, :m] * np.diff(B, axis=1)
    if need_drift:
        inc = inc + r[:, :m] * grid.dt
    Z = np.empty_like(B)
    Z[:, 0] = math.sqrt(t[0]) * q[:, 0]
    Z[:, 1:] = Z[:, :1] + np.cumsum(inc, axis=1)
    return Z, clamped.sum(axis=1)


def binary_walk_from_flips(d, grid, flips):
    """Z_{k+1} = Z_k + h(W_k, t_k) sqrt(dt) xi_{k+1} driven by W = sum sqrt(dt) xi."""
    xi = np.atleast_2d(np.asarray(flips, dtype=float))
    W = np.cumsum(math.sqrt(grid.dt) * xi, axis=1)
    Z, clamps = translation_from_driver(d, grid, Scheme.RW_NODRIFT, W)
    return Z, W, clamps


def sde_from_driver(coef, d, grid, scheme, x0, driver):
    """Euler iteration of dX = (alpha + [r]) dt + sigma h dB.

    Returns ``(X, clamp_counts, aborted)`` where ``aborted`` maps row index
    to the first grid index with a non-finite state; aborted rows are NaN
    from that index on.
    """
    scheme = Scheme(scheme)
    if scheme not in WALK_SCHEMES:
        raise DomainError("sde paths need scheme rw_drift or rw_nodrift")
    B = np.atleast_2d(np.asarray(driver, dtype=float))
    n, N = B.shape
    t = grid.times
    dt = grid.dt
    need_drift = scheme == Scheme.RW_DRIFT
    cols = max(N - 1, 1)
    q, hh, r, clamped = evaluate_kernel(B[:, :cols], t[:cols], d, need_drift=need_drift)
    dB = np.diff(B, axis=1)
    X = np.empty_like(B)
    x_start = np.full(n, float(x0))
    z1 = math.sqrt(t[0]) * q[:, 0]
    with np.errstate(over="ignore", invalid="ignore"):
        X[:, 0] = x_start + coef.alpha(x_start, 0.0) * dt + coef.sigma(x_start, 0.0) * z1
    aborted = {}
    alive = np.isfinite(X[:, 0])
    for i in np.flatnonzero(~alive):
        aborted[int(i)] = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N - 1):
            xk = X[:, k]
            drift = coef.alpha(xk, t[k])
            if need_drift:
                drift = drift + r[:, k]
            X[:, k + 1] = xk + drift * dt + coef.sigma(xk, t[k]) * hh[:, k] * dB[:, k]
            bad = alive & ~np.isfinite(X[:, k + 1])
            if np.any(bad):
                for i in np.flatnonzero(bad):
                    aborted[int(i)] = k + 1
                alive &= ~bad
    for i, k in aborted.items():
        X[i, k:] = np.nan
    return X, clamped.sum(axis=1), aborted


# ---------------------------------------------------------------------------
# single paths
# ---------------------------------------------------------------------------

def brownian_path(grid, seed):
    B = brownian_from_increments(normal_increments([seed], grid))[0]
    return Path(grid, B, Scheme.BROWNIAN, int(seed), driver_values=B.copy())


def translation_path(d, grid, scheme, seed):
    scheme = Scheme(scheme)
    if scheme not in TRANSLATION_SCHEMES:
        raise DomainError("translation_path needs scheme exact, rw_drift or rw_nodrift")
    B = brownian_from_increments(normal_increments([seed], grid))
    Z, clamps = translation_from_driver(d, grid, scheme, B)
    return Path(grid, Z[0], scheme, int(seed), driver_values=B[0], clamp_count=int(clamps[0]))


def binary_walk_path(d, grid, seed):
    Z, W, clamps = binary_walk_from_flips(d, grid, coin_flips([seed], grid.n_steps))
    return Path(grid, Z[0], Scheme.BINARY_WALK, int(seed), driver_values=W[0],
                clamp_count=int(clamps[0]))


def sde_path(coef, d, grid, scheme, x0, seed):
    B = brownian_from_increments(normal_increments([seed], grid))
    X, clamps, aborted = sde_from_driver(coef, d, grid, scheme, x0, B)
    if aborted:
        step = aborted[0]
        raise AbortedPathError(f"non-finite state at step {step}", step=step)
    return Path(grid, X[0], Scheme(scheme), int(seed), driver_values=B[0],
                clamp_count=int(clamps[0]))


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

@dataclass
class Ensemble:
    """Paths sharing grid, scheme and distribution.

    ``values`` and ``driver`` hold the successful paths row by row (in path
    index order); ``aborted`` maps failed path indices to the step at which
    they failed.
    """

    spec: object
    values: np.ndarray
    driver: np.ndarray
    path_indices: np.ndarray
    seeds: np.ndarray
    clamp_counts: np.ndarray
    aborted: dict = field(default_factory=dict)
    _paths: list = field(default=None, repr=False)

    @property
    def grid(self):
        return self.spec.grid

    @property
    def n_paths(self):
        return self.values.shape[0]

    @property
    def total_clamps(self):
        return int(self.clamp_counts.sum())

    def path(self, row):
        return Path(
            self.grid,
            self.values[row],
            self.spec.scheme,
            int(self.seeds[row]),
            driver_values=self.driver[row],
            clamp_count=int(self.clamp_counts[row]),
        )

    @property
    def paths(self):
        if self._paths is None:
            self._paths = [self.path(i) for i in range(self.n_paths)]
        return self._paths

    def cross_section(self, t):
        """Values of every path at grid time ``t``."""
        return self.values[:, self.grid.index_of(t)]

    def driver_section(self, t):
        return self.driver[:, self.grid.index_of(t)]

    @property
    def endpoints(self):
        return self.values[:, -1]


def _simulate_block(spec, dist, seeds):
    grid = spec.grid
    scheme = Scheme(spec.scheme)
    if scheme == Scheme.BINARY_WALK:
        Z, W, clamps = binary_walk_from_flips(dist, grid, coin_flips(seeds, grid.n_steps))
        return Z, W, clamps, {}
    B = brownian_from_increments(normal_increments(seeds, grid))
    if spec.coefficients is not None:
        X, clamps, aborted = sde_from_driver(spec.coefficients, dist, grid, scheme, spec.x0, B)
        return X, B, clamps, aborted
    Z, clamps = translation_from_driver(dist, grid, scheme, B)
    return Z, B, clamps, {}


def simulate_ensemble(spec, workers=1, block_size=1000):
    """Simulate ``spec.n_paths`` paths.

    Results are bit-identical for any ``workers`` and ``block_size``.
    """
    if spec.n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    dist = spec.distribution
    if getattr(spec, "quantile_table", False):
        dist = dist.with_quantile_table()
    seeds = np.array([path_seed(spec.base_seed, i) for i in range(spec.n_paths)], dtype=np.uint64)
    starts = list(range(0, spec.n_paths, block_size))

    def run(start):
        return _simulate_block(spec, dist, [int(s) for s in seeds[start : start + block_size]])

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, starts))
    else:
        blocks = [run(s) for s in starts]

    values = np.concatenate([b[0] for b in blocks])
    driver = np.concatenate([b[1] for b in blocks])
    clamps = np.concatenate([b[2] for b in blocks]).astype(int)
    aborted = {}
    for start, block in zip(starts, blocks):
        for row, step in block[3].items():
            aborted[start + row] = step
    keep = np.ones(spec.n_paths, dtype=bool)
    keep[list(aborted)] = False
    idx = np.flatnonzero(keep)
    return Ensemble(
        spec=spec,
        values=values[keep],
        driver=driver[keep],
        path_indices=idx,
        seeds=seeds[keep],
        clamp_counts=clamps[keep],
        aborted=aborted,
    )
