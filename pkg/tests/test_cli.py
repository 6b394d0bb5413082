import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from fsolink import cli
from fsolink.config import ConfigError, parse_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

SMALL = """\
[channel]
k = 6
beta = 23.0
l_km = 0.5
detection = {detection}

[pointing]
sigma = 1.0

[sweep]
mu_db_start = 10
mu_db_stop = 30
mu_db_step = 20

[tmos]
gamma_T_db = 7.1
gamma_TH_OUT_db = 11.8
H = 3

[pdf]
bins = 20

[mc]
n_samples = 20000
seed = 5
{extra}
"""


def write(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def small(tmp_path, detection="hd", extra=""):
    return write(tmp_path, SMALL.format(detection=detection, extra=extra))


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# --- config parsing -----------------------------------------------------------


def test_parse_defaults_and_grid():
    cfg = parse_scenario(SMALL.format(detection="imdd", extra=""))
    assert cfg.mu_db == (10.0, 30.0)
    assert cfg.detection == 2
    assert cfg.geometry.alpha_d == pytest.approx(math.pi / 8)
    assert cfg.tmos.H == 3 and cfg.mc.seed == 5
    assert cfg.method == "auto" and cfg.pdf_bins == 20


def test_parse_angle_arithmetic():
    text = SMALL.format(detection="hd", extra="").replace("sigma = 1.0", "sigma = 1.0\nbeta_d_rad = 5*pi/8")
    assert parse_scenario(text).geometry.beta_d == pytest.approx(5 * math.pi / 8, rel=1e-15)


@pytest.mark.parametrize("edit,message", [
    (("sigma = 1.0", "sigma = 1.0\nsigmaa = 2"), r"scenario>:9: unknown key 'sigmaa'"),
    (("k = 6", "fog = light\nk = 6"), "either fog or k/beta"),
    (("k = 6", "k = six"), r"scenario>:2: not a number"),
    (("detection = hd", "detection = coherent"), "unknown detection"),
    (("mu_db_step = 20", "mu_db_step = -1"), "mu_db_step > 0"),
    (("[pdf]", "[plot]"), "unknown section"),
    (("sigma = 1.0", "sigma = -1.0"), "sigma must be nonnegative"),
    (("H = 3", "H = 2.5"), "expected an integer"),
])
def test_parse_errors_are_located(edit, message):
    text = SMALL.format(detection="hd", extra="").replace(*edit)
    with pytest.raises(ConfigError, match=message):
        parse_scenario(text)


def test_closed_method_needs_integer_shape():
    text = SMALL.format(detection="hd", extra="[series]\nmethod = closed\n").replace("k = 6", "k = 5.5")
    with pytest.raises(ConfigError, match="integer k"):
        parse_scenario(text)


def test_table_path_resolves_against_config_dir(tmp_path):
    (tmp_path / "codes.csv").write_text((SCENARIOS / "synthetic_codes.csv").read_text())
    path = small(tmp_path, extra="[acm]\ntable = codes.csv\n")
    cfg = cli.load_scenario(path)
    assert cfg.table.n_max == 4
    missing = small(tmp_path, extra="[acm]\ntable = nowhere.csv\n")
    with pytest.raises(ConfigError, match="not readable"):
        cli.load_scenario(missing)


def test_shipped_scenarios_parse():
    for path in sorted(SCENARIOS.glob("*.ini")):
        cli.load_scenario(path)


# --- verbs ------------------------------------------------------------------


def test_outage_sweep_table(tmp_path, capsys):
    code, out, _ = run(["outage", "--config", small(tmp_path)], capsys)
    assert code == cli.EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == list(cli.SWEEP_COLUMNS)
    assert [float(r["mu_db"]) for r in rows] == [10.0, 30.0]
    assert all(r["path"] == "closed" for r in rows)
    values = [float(r["analytic"]) for r in rows]
    assert values[1] <= values[0]
    for r in rows:
        assert abs(float(r["analytic"]) - float(r["mc"])) < 4 * float(r["mc_se"])


def test_json_output_and_per_beam_ase(tmp_path, capsys):
    path = small(tmp_path, detection="imdd")
    _, system, _ = run(["ase", "--config", path, "--format", "json"], capsys)
    _, per_beam, _ = run(["ase", "--config", path, "--format", "json", "--per-beam"], capsys)
    system, per_beam = json.loads(system), json.loads(per_beam)
    assert system["columns"] == list(cli.SWEEP_COLUMNS)
    for s, p in zip(system["rows"], per_beam["rows"]):
        assert p["analytic"] <= 8.5 < 3 * 8.5
        assert s["analytic"] <= 3 * p["analytic"] + 1e-12


def test_ansb_and_ber_verbs(tmp_path, capsys):
    path = small(tmp_path)
    code, out, _ = run(["ansb", "--config", path], capsys)
    assert code == 0 and all(0 <= float(r["analytic"]) <= 3 for r in csv.DictReader(io.StringIO(out)))
    code, out, _ = run(["ber", "--config", path], capsys)
    assert code == 0
    assert all(float(r["analytic"]) <= 1.1e-3 for r in csv.DictReader(io.StringIO(out)))


def test_pdf_table(tmp_path, capsys):
    text = SMALL.format(detection="hd", extra="").replace("n_samples = 20000", "n_samples = 400000")
    code, out, _ = run(["pdf", "--config", write(tmp_path, text)], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 20
    assert list(rows[0]) == list(cli.PDF_COLUMNS)
    peak = max(float(r["analytic_pdf"]) for r in rows)
    assert max(float(r["abs_diff"]) for r in rows) < 0.05 * peak


def test_output_file_is_deterministic(tmp_path, capsys):
    path = small(tmp_path)
    a, b, c = (str(tmp_path / n) for n in ("a.csv", "b.csv", "c.csv"))
    assert cli.main(["outage", "--config", path, "--out", a]) == 0
    assert cli.main(["outage", "--config", path, "--out", b]) == 0
    assert cli.main(["outage", "--config", path, "--out", c, "--workers", "2"]) == 0
    assert Path(a).read_bytes() == Path(b).read_bytes() == Path(c).read_bytes()
    assert cli.main(["outage", "--config", path, "--out", c, "--seed", "6"]) == 0
    assert Path(a).read_bytes() != Path(c).read_bytes()


def test_csv_uses_dot_decimals():
    text = cli.render([{"mu_db": 10.0, "analytic": 0.125, "mc": math.nan, "mc_se": 1e-7, "path": "closed"}],
                      cli.SWEEP_COLUMNS, "csv")
    assert text == "mu_db,analytic,mc,mc_se,path\n10.0,0.125,nan,1e-07,closed\n"
    data = json.loads(cli.render([{"mu_db": 1.0, "analytic": math.nan, "mc": 0.5, "mc_se": 0.1,
                                   "path": "undefined"}], cli.SWEEP_COLUMNS, "json"))
    assert data["rows"][0]["analytic"] is None


# --- validation and exit codes ----------------------------------------------


def test_validate_passes(tmp_path, capsys):
    code, out, _ = run(["validate", "--config", small(tmp_path), "--format", "json"], capsys)
    report = json.loads(out)
    assert report["columns"] == list(cli.REPORT_COLUMNS)
    names = [r["check"] for r in report["rows"]]
    assert "density_normalization" in names and "cdf_closed_vs_quadrature" in names
    assert "pdf_l1_vs_mc" in names and "outage_nonincreasing_in_mu" in names
    assert all(r["verdict"] == "pass" for r in report["rows"]), report
    assert code == cli.EXIT_OK


def test_validate_failure_exit_code(tmp_path, capsys):
    path = small(tmp_path, extra="[acm]\ntarget_ber = 1e-12\n")
    code, out, _ = run(["validate", "--config", path], capsys)
    assert code == cli.EXIT_VALIDATION
    assert any(r["verdict"] == "fail" and r["check"].startswith("ber_below_target")
               for r in csv.DictReader(io.StringIO(out)))


def test_config_error_exit_code(tmp_path, capsys):
    path = write(tmp_path, "[channel]\nfog = light\nl_km = 0.5\nwhatever = 1\n")
    code, _, err = run(["outage", "--config", path], capsys)
    assert code == cli.EXIT_CONFIG
    assert "scenario.ini:4" in err
    code, _, err = run(["outage", "--config", str(tmp_path / "absent.ini")], capsys)
    assert code == cli.EXIT_CONFIG


def test_numeric_failure_exit_code(tmp_path, capsys):
    path = small(tmp_path, extra="[series]\nmethod = closed\nmax_terms = 1\nabs_tol = 1e-300\n")
    code, _, err = run(["outage", "--config", path], capsys)
    assert code == cli.EXIT_NUMERIC
    assert "numerical failure" in err


def test_bad_flag_override_is_config_error(tmp_path, capsys):
    code, _, _ = run(["outage", "--config", small(tmp_path), "--workers", "0"], capsys)
    assert code == cli.EXIT_CONFIG


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "fsolink", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("fsolink ")
