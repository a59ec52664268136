import csv
import io
import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ngtrans import cli
from ngtrans.config import SimulationSpec, parse_coefficients, parse_spec, parse_text, serialize_spec
from ngtrans.distributions import PANEL_DISTRIBUTIONS, parse_distribution
from ngtrans.errors import ConfigError
from ngtrans.sde import CoefficientSpec, Scheme, TimeGrid


def run(argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- config -------------------------------------------------------------------

CONFIG = """
# example run
distribution = asym_laplace{kappa=1.5}
dt = 0.05
horizon = 2
scheme = rw_drift
n_paths = 400
base_seed = 0x10
output = endpoints_csv:ends.csv
output = report_json:report.json
"""


def test_parse_config_text():
    spec = parse_spec(CONFIG)
    assert spec.distribution == parse_distribution("asym_laplace{kappa=1.5}")
    assert spec.grid == TimeGrid(0.05, 40)
    assert spec.scheme == Scheme.RW_DRIFT
    assert spec.base_seed == 16
    assert spec.outputs == (("endpoints_csv", "ends.csv"), ("report_json", "report.json"))
    assert parse_spec(serialize_spec(spec)) == spec


@pytest.mark.parametrize("text,field", [
    ("dt = 0.1\nn_steps = 3", "distribution"),
    ("distribution = gaussian{}\nn_steps = 3", "dt"),
    ("distribution = gaussian{}\ndt = 0.1", "n_steps"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\nbogus = 1", "bogus"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\ndt = 0.2", "dt"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\nscheme = leapfrog", "scheme"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 0", "dt"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\nn_paths = 0", "n_paths"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\nbase_seed = -1", "base_seed"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\noutput = movie:x.mp4", "output"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\noutput = x.csv", "output"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\nhorizon = 7", "horizon"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\ndrift = cubic{}", "drift"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\ndrift = zero{}\nscheme = exact", "scheme"),
    ("distribution = nope{}\ndt = 0.1\nn_steps = 3", "distribution"),
    ("distribution = gaussian{}\ndt = 0.1\nn_steps = 3\nquantile_table = maybe", "quantile_table"),
    ("distribution gaussian", "distribution"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as err:
        parse_spec(text)
    assert err.value.field == field


def test_coefficient_descriptors():
    c = parse_coefficients("mean_revert{theta=0.5,mu=1}", "proportional{sigma=0.2}")
    assert c == CoefficientSpec("mean_revert", theta=0.5, mu=1.0, diffusion="proportional", sigma0=0.2)
    assert parse_coefficients(c.drift_descriptor(), c.diffusion_descriptor()) == c
    with pytest.raises(ConfigError):
        parse_coefficients("constant{b=1}", None)
    with pytest.raises(ConfigError):
        parse_coefficients(None, "constant{s=1}")


descriptors = st.one_of(
    st.builds(lambda nu: f"student_t{{nu={nu!r}}}", st.floats(2.05, 100)),
    st.builds(lambda k: f"asym_laplace{{kappa={k!r}}}", st.floats(0.1, 20)),
    st.builds(lambda p, q: f"egb2{{p={p!r},q={q!r}}}", st.floats(0.1, 20), st.floats(0.1, 20)),
    st.just("gaussian{}"),
)


@settings(max_examples=60, deadline=None)
@given(
    descriptors,
    st.sampled_from([0.01, 0.02, 0.05, 0.1, 0.25]),
    st.integers(1, 5000),
    st.sampled_from(list(Scheme)),
    st.integers(1, 10**6),
    st.integers(0, 2**64 - 1),
    st.floats(-1e6, 1e6, allow_nan=False),
    st.booleans(),
    st.booleans(),
)
def test_config_roundtrip(dist, dt, n_steps, scheme, n_paths, seed, x0, table, with_coef):
    coef = None
    if with_coef and scheme in (Scheme.RW_DRIFT, Scheme.RW_NODRIFT):
        coef = CoefficientSpec("mean_revert", theta=0.3, mu=-1.5, diffusion="constant", sigma0=0.7)
    spec = SimulationSpec(
        distribution=parse_distribution(dist), grid=TimeGrid(dt, n_steps), scheme=scheme,
        n_paths=n_paths, base_seed=seed, coefficients=coef, x0=x0,
        outputs=(("endpoints_csv", "a b/ends.csv"), ("report_json", "r.json")), quantile_table=table,
    )
    assert parse_spec(serialize_spec(spec)) == spec


def test_parse_text_comments_and_repeats():
    raw = parse_text("dt = 0.1 # step\n\noutput = paths_csv:p.csv\n")
    assert raw == {"output": ["paths_csv:p.csv"], "dt": "0.1"}


# -- simulate -----------------------------------------------------------------

def test_simulate_gaussian_outputs(tmp_path):
    code = run(["simulate", "--dist", "gaussian{}", "--paths", 10, "--horizon", 1, "--dt", 0.1, "--out", tmp_path])
    assert code == 0
    rows = read_csv(tmp_path / "endpoints.csv")
    assert ",".join(rows[0]) == cli.ENDPOINTS_HEADER
    assert len(rows) == 11
    assert [int(r[0]) for r in rows[1:]] == list(range(10))
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["spec"]["distribution"] == "gaussian{}"
    assert report["clamp_counts"]["total"] == 0
    assert report["aborted"] == []
    assert {c["name"] for c in report["checks"]} >= {"exact/ks_marginal"}


def test_simulate_config_is_reproducible(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CONFIG + "output = paths_csv:paths.csv\noutput = histogram_csv:hist.csv\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--config", cfg, "--out", a]) == 0
    assert run(["simulate", "--config", cfg, "--out", b, "--workers", 3]) == 0
    for name in ("ends.csv", "paths.csv", "hist.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    paths = read_csv(a / "paths.csv")
    assert ",".join(paths[0]) == cli.PATHS_HEADER
    assert len(paths) == 1 + 400 * 40
    hist = read_csv(a / "hist.csv")
    assert ",".join(hist[0]) == cli.HISTOGRAM_HEADER


def test_simulate_flags_override_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CONFIG)
    assert run(["simulate", "--config", cfg, "--paths", 300, "--scheme", "exact", "--out", tmp_path]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["spec"]["n_paths"] == 300 and report["spec"]["scheme"] == "exact"


def test_simulate_sde_run(tmp_path):
    cfg = tmp_path / "sde.cfg"
    cfg.write_text("distribution = student_t{nu=5}\ndt = 0.01\nhorizon = 1\nscheme = rw_drift\nn_paths = 20\n"
                   "drift = mean_revert{theta=0.5,mu=0}\ndiffusion = constant{sigma=0.3}\nx0 = 1\n"
                   "output = report_json:r.json\n")
    assert run(["simulate", "--config", cfg, "--out", tmp_path]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["spec"]["drift"] == "mean_revert{theta=0.5,mu=0.0}"


def test_simulate_exit_codes(tmp_path):
    assert run(["simulate", "--dist", "cauchy{}", "--out", tmp_path]) == 2
    assert run(["simulate", "--dist", "gaussian{}", "--dt", 0.03, "--horizon", 1, "--out", tmp_path]) == 2
    assert run(["simulate", "--config", tmp_path / "missing.cfg"]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(["simulate", "--dist", "gaussian{}", "--paths", 10, "--horizon", 1, "--out", blocker / "sub"]) == 3
    with pytest.raises(SystemExit) as err:
        cli.main(["simulate", "--scheme", "leapfrog"])
    assert err.value.code == 2


def test_simulate_negative_control_fails(tmp_path):
    # a deliberately mis-scaled law fails its own marginal check
    code = run(["simulate", "--dist", "student_t{nu=10,s=0.95}", "--paths", 10000, "--horizon", 1, "--dt", 0.1,
                "--seed", 5, "--out", tmp_path])
    report = json.loads((tmp_path / "report.json").read_text())
    failed = [c["name"] for c in report["checks"] if not c["pass"]]
    assert code == 1 and failed


def test_no_partial_files_on_failure(tmp_path):
    run(["simulate", "--dist", "student_t{nu=10,s=0.95}", "--paths", 2000, "--horizon", 1, "--dt", 0.1,
         "--out", tmp_path])
    assert not [p for p in os.listdir(tmp_path) if p.startswith(".") or p.endswith(".tmp")]


# -- other commands -----------------------------------------------------------

def test_table1_command(tmp_path, capsys):
    assert run(["table1", "--out", tmp_path]) == 0
    out = capsys.readouterr().out
    assert "asym_laplace{kappa=9}" in out
    data = json.loads((tmp_path / "table1.json").read_text())
    assert len(data["rows"]) == 6
    assert all(c["pass"] for c in data["checks"])


def test_figure1_structure(tmp_path):
    assert run(["figure1", "--paths", 200, "--dt", 0.1, "--horizon", 2, "--out", tmp_path,
                "--dist", "student_t{nu=30}"]) == 0
    summary = json.loads((tmp_path / "figure1.json").read_text())
    assert len(summary["panels"]) == len(PANEL_DISTRIBUTIONS) + 1
    for panel in summary["panels"]:
        rows = read_csv(tmp_path / panel["file"])
        assert ",".join(rows[0]) == cli.HISTOGRAM_HEADER
        assert len(rows) == 1 + cli.FIGURE_BINS
        x = np.array([[float(v) for v in r] for r in rows[1:]])
        assert np.all(np.diff(x[:, 0]) > 0)
        assert np.allclose(x[:-1, 1], x[1:, 0])
        assert np.all(x >= 0) or np.all(x[:, 2:] >= 0)


def test_figure1_al9_walk_ks(tmp_path):
    assert run(["figure1", "--paths", 2000, "--dt", 0.01, "--horizon", 10, "--out", tmp_path]) == 0
    summary = json.loads((tmp_path / "figure1.json").read_text())
    al9 = next(p for p in summary["panels"] if p["distribution"] == "asym_laplace{kappa=9.0}")
    # 0.05 plus the 1% sampling allowance at this reduced path count
    assert al9["ks"]["rw_drift"] < 0.05 + 1.63 / math.sqrt(2000)


def test_cornish_fisher_command(capsys):
    assert run(["cornish-fisher", "--kappa3", 0.6, "--points", 5, "--horizon", 4]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert ",".join(rows[0]) == cli.CORNISH_FISHER_HEADER
    mid = rows[3]
    assert float(mid[0]) == 0.0 and float(mid[3]) == pytest.approx(-0.2)
    assert run(["cornish-fisher", "--dist", "student_t{nu=30}", "--points", 3]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0][-1] == "transform"
    assert run(["cornish-fisher", "--dist", "student_t{nu=3}"]) == 2
    assert run(["cornish-fisher", "--dist", "gaussian{}", "--kappa3", 1]) == 2


def test_validate_fast_gaussian(tmp_path, capsys):
    assert run(["validate", "--level", "fast", "--dist", "gaussian{}", "--out", tmp_path]) == 0
    out = capsys.readouterr().out
    assert "PASS gaussian{}/exact/equals_driver" in out
    report = json.loads((tmp_path / "validate_report.json").read_text())
    assert report["level"] == "fast" and not report["errors"]


def test_validate_negative_control(tmp_path):
    assert run(["validate", "--level", "fast", "--dist", "student_t{nu=10,s=0.95}", "--out", tmp_path]) == 1
    report = json.loads((tmp_path / "validate_report.json").read_text())
    names = {c["name"] for c in report["checks"] if not c["pass"]}
    assert any("standardization" in n for n in names)


def test_formatting_is_roundtrip_exact():
    for v in (0.1, 1 / 3, -2.5e-300, 12345678.9):
        assert float(cli.fmt(v)) == v
