"""SimulationSpec and its flat ``key = value`` text format.

Example::

    # lines starting with '#' are comments
    distribution = student_t{nu=10}
    dt = 0.01
    n_steps = 1000            # or: horizon = 10
    scheme = rw_drift
    n_paths = 10000
    base_seed = 42
    x0 = 0.0
    quantile_table = true
    drift = mean_revert{theta=0.5,mu=0}   # optional; enables the SDE driver
    diffusion = constant{sigma=0.3}       # optional
    output = endpoints_csv:out/endpoints.csv
    output = report_json:out/report.json

``output`` may repeat; order is preserved.  Unknown keys are errors.
"""

import math
import re
from dataclasses import dataclass, field
from typing import Optional

from .distributions import StandardizedDistribution, parse_distribution
from .errors import ConfigError, NgtransError
from .sde import WALK_SCHEMES, CoefficientSpec, Scheme, TimeGrid, SEED_MASK

OUTPUT_KINDS = ("paths_csv", "endpoints_csv", "histogram_csv", "report_json")

KEYS = (
    "distribution", "dt", "n_steps", "horizon", "scheme", "n_paths", "base_seed",
    "x0", "quantile_table", "drift", "diffusion", "output",
)

_BRACED = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\{(.*)\}\s*$")


@dataclass(frozen=True)
class SimulationSpec:
    distribution: StandardizedDistribution
    grid: TimeGrid
    scheme: Scheme = Scheme.EXACT
    n_paths: int = 1000
    base_seed: int = 0
    coefficients: Optional[CoefficientSpec] = None
    x0: float = 0.0
    outputs: tuple = ()
    quantile_table: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scheme", _scheme(self.scheme))
        if isinstance(self.n_paths, bool) or int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ConfigError("must be an integer >= 1", field="n_paths")
        if int(self.base_seed) != self.base_seed or not 0 <= self.base_seed <= SEED_MASK:
            raise ConfigError("must be an integer in [0, 2**64)", field="base_seed")
        if not math.isfinite(self.x0):
            raise ConfigError("must be finite", field="x0")
        if self.coefficients is not None and self.scheme not in WALK_SCHEMES:
            raise ConfigError("drift/diffusion need scheme rw_drift or rw_nodrift", field="scheme")
        outs = tuple((str(k), str(p)) for k, p in self.outputs)
        for kind, path in outs:
            if kind not in OUTPUT_KINDS:
                raise ConfigError(f"unknown output kind {kind!r}", field="output")
            if not path.strip():
                raise ConfigError("output path must be nonempty", field="output")
        object.__setattr__(self, "outputs", outs)

    def to_text(self):
        return serialize_spec(self)

    def echo(self):
        """JSON-friendly summary used in reports."""
        out = {
            "distribution": self.distribution.descriptor(),
            "dt": self.grid.dt,
            "n_steps": self.grid.n_steps,
            "horizon": self.grid.horizon,
            "scheme": self.scheme.value,
            "n_paths": self.n_paths,
            "base_seed": self.base_seed,
            "x0": self.x0,
            "quantile_table": self.quantile_table,
            "outputs": [list(o) for o in self.outputs],
        }
        if self.coefficients is not None:
            out["drift"] = self.coefficients.drift_descriptor()
            out["diffusion"] = self.coefficients.diffusion_descriptor()
        return out


def _scheme(value):
    try:
        return Scheme(value)
    except ValueError:
        names = ", ".join(s.value for s in Scheme)
        raise ConfigError(f"unknown scheme {value!r} (expected one of {names})", field="scheme") from None


def _braced(text, fld):
    m = _BRACED.match(text)
    if not m:
        raise ConfigError(f"expected name{{key=value,...}}, got {text!r}", field=fld)
    name, body = m.groups()
    params = {}
    for item in filter(None, (s.strip() for s in body.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {item!r}", field=fld)
        params[key.strip()] = _float(value, fld)
    return name, params


def _float(text, fld):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {text!r}", field=fld) from None


def _int(text, fld):
    try:
        return int(str(text).strip(), 0)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}", field=fld) from None


def _bool(text, fld):
    v = str(text).strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected true or false, got {text!r}", field=fld)


def parse_coefficients(drift_text, diffusion_text):
    """CoefficientSpec from descriptors such as ``mean_revert{theta=0.5,mu=0}``."""
    kw = {}
    if drift_text is not None:
        name, params = _braced(drift_text, "drift")
        allowed = {"zero": (), "constant": ("a",), "mean_revert": ("theta", "mu")}
        if name not in allowed:
            raise ConfigError(f"unknown drift {name!r}", field="drift")
        extra = set(params) - set(allowed[name])
        if extra:
            raise ConfigError(f"unexpected parameter(s) {sorted(extra)}", field="drift")
        kw["drift"] = name
        kw.update(params)
    if diffusion_text is not None:
        name, params = _braced(diffusion_text, "diffusion")
        if name not in ("constant", "proportional"):
            raise ConfigError(f"unknown diffusion {name!r}", field="diffusion")
        extra = set(params) - {"sigma"}
        if extra:
            raise ConfigError(f"unexpected parameter(s) {sorted(extra)}", field="diffusion")
        kw["diffusion"] = name
        if "sigma" in params:
            kw["sigma0"] = params["sigma"]
    return CoefficientSpec(**kw)


def parse_text(text):
    """Raw ``{key: value}`` mapping; ``output`` maps to a list."""
    raw = {"output": []}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value", field=key.split()[0])
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key", field=key)
        if key == "output":
            raw["output"].append(value)
        elif key in raw:
            raise ConfigError(f"line {lineno}: duplicate key", field=key)
        else:
            raw[key] = value
    return raw


def spec_from_mapping(raw):
    """Build a SimulationSpec from raw string values (file values plus flag overrides)."""
    if "distribution" not in raw:
        raise ConfigError("required", field="distribution")
    dist = parse_distribution(raw["distribution"])
    if "dt" not in raw:
        raise ConfigError("required", field="dt")
    dt = _float(raw["dt"], "dt")
    try:
        if "n_steps" in raw:
            grid = TimeGrid(dt, _int(raw["n_steps"], "n_steps"))
            if "horizon" in raw and not math.isclose(grid.horizon, _float(raw["horizon"], "horizon")):
                raise ConfigError("disagrees with n_steps * dt", field="horizon")
        elif "horizon" in raw:
            grid = TimeGrid.from_horizon(dt, _float(raw["horizon"], "horizon"))
        else:
            raise ConfigError("one of n_steps or horizon is required", field="n_steps")
    except ConfigError:
        raise
    except NgtransError as exc:
        raise ConfigError(str(exc), field="dt") from exc
    coef = None
    if raw.get("drift") is not None or raw.get("diffusion") is not None:
        coef = parse_coefficients(raw.get("drift"), raw.get("diffusion"))
    outputs = []
    for item in raw.get("output", []):
        kind, sep, path = item.partition(":")
        if not sep:
            raise ConfigError(f"expected kind:path, got {item!r}", field="output")
        outputs.append((kind.strip(), path.strip()))
    return SimulationSpec(
        distribution=dist,
        grid=grid,
        scheme=raw.get("scheme", "exact"),
        n_paths=_int(raw.get("n_paths", "1000"), "n_paths"),
        base_seed=_int(raw.get("base_seed", "0"), "base_seed"),
        coefficients=coef,
        x0=_float(raw.get("x0", "0"), "x0"),
        outputs=tuple(outputs),
        quantile_table=_bool(raw.get("quantile_table", "true"), "quantile_table"),
    )


def parse_spec(text):
    return spec_from_mapping(parse_text(text))


def serialize_spec(spec):
    lines = [
        f"distribution = {spec.distribution.descriptor()}",
        f"dt = {spec.grid.dt!r}",
        f"n_steps = {spec.grid.n_steps}",
        f"scheme = {spec.scheme.value}",
        f"n_paths = {spec.n_paths}",
        f"base_seed = {spec.base_seed}",
        f"x0 = {spec.x0!r}",
        f"quantile_table = {'true' if spec.quantile_table else 'false'}",
    ]
    if spec.coefficients is not None:
        lines.append(f"drift = {spec.coefficients.drift_descriptor()}")
        lines.append(f"diffusion = {spec.coefficients.diffusion_descriptor()}")
    lines.extend(f"output = {kind}:{path}" for kind, path in spec.outputs)
    return "\n".join(lines) + "\n"
