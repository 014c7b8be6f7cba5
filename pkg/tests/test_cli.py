import json
import math

import numpy as np
import pytest

from torusgpe.cli import dumps, load_config, main, merge_flags, validate_config
from torusgpe.cli_support import ConvergenceReport, bounded, fitRate, rate_ok, strictly_decreasing
from torusgpe.errors import ConfigError, NonPositiveValue

OM = [64.0, 256.0, 1024.0]


def test_fit_exact_power_law():
    slope, icpt, res = fitRate(OM, [3 * o**-0.5 for o in OM])
    assert slope == pytest.approx(-0.5, abs=1e-12)
    assert icpt == pytest.approx(math.log(3), abs=1e-12)
    assert res < 1e-12


def test_fit_constant():
    assert fitRate(OM, [2.0, 2.0, 2.0])[0] == pytest.approx(0.0, abs=1e-14)


def test_fit_noisy():
    rng = np.random.default_rng(11)
    om = np.geomspace(16, 4096, 9)
    vals = 2 * om**-0.5 * (1 + 0.05 * rng.normal(size=om.size))
    assert fitRate(om, vals)[0] == pytest.approx(-0.5, abs=0.08)


def test_fit_rejects_nonpositive():
    with pytest.raises(NonPositiveValue):
        fitRate(OM, [1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        fitRate(OM[:2], [1.0, 2.0])


def test_verdict_helpers():
    assert bounded([1, 2, 3]) and not bounded([1, 4]) and not bounded([0, 1])
    assert strictly_decreasing([3, 2, 1]) and not strictly_decreasing([3, 3, 1])
    assert rate_ok(-0.5, 0.1) and not rate_ok(-0.3, 0.0) and not rate_ok(-0.5, 0.2)
    d = ConvergenceReport(OM, "x", [1, 2, 3], passed=True).as_dict()
    assert d["pass"] is True and d["omega_list"] == OM


def test_dumps_format():
    s = dumps({"b": 0.1, "a": [1, 2.0, True, None], "c": float("nan")})
    assert s == '{"a": [1, 2, true, null], "b": 0.10000000000000001, "c": "nan"}\n'
    assert json.loads(s)["b"] == 0.1


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        validate_config({"task": "gn", "bogus": 1})
    with pytest.raises(ConfigError, match="grid"):
        validate_config({"grid": {"N_q": 3}})
    with pytest.raises(ConfigError, match="omegas"):
        validate_config({"omegas": []})
    with pytest.raises(ConfigError, match="omegas"):
        validate_config({"omegas": [64, 64]})
    cfg = validate_config({"omegas": [256, 64]})
    assert cfg["omegas"] == [64.0, 256.0] and cfg["potential"]["variant"] == "Quadratic"
    p = tmp_path / "bad.json"
    p.write_text('{"task": "gn",\n "mass": }')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)


def test_flag_precedence():
    file_cfg = {"task": "gn", "mass": 30.0}
    assert merge_flags(file_cfg, {"mass": 10.0}, strict=False)["mass"] == 30.0
    assert merge_flags(file_cfg, {"kappa": 1}, strict=False)["kappa"] == 1
    with pytest.raises(ConfigError, match="conflicts"):
        merge_flags(file_cfg, {"mass": 10.0}, strict=True)
    assert merge_flags(file_cfg, {"mass": 30.0}, strict=True)["mass"] == 30.0


def test_elliptic_command(capsys):
    assert main(["elliptic", "--mass", "30"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["k"] == pytest.approx(0.9949344411366984, abs=1e-15)
    assert out["mass"] == pytest.approx(30.0, rel=1e-12)


def test_ground1d_command(tmp_path, capsys):
    p = tmp_path / "q.csv"
    assert main(["ground1d", "--mass", "30", "--N-theta", "64", "--csv", str(p)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["branch"] == "Dnoidal"
    assert p.read_text().splitlines()[0] == "theta,re,im"


def test_evolve1d_command(capsys):
    assert main(["evolve1d", "--mass", "30", "--dt", "1e-3", "--T", "0.05", "--perturb", "0.1"]) == 0
    assert json.loads(capsys.readouterr().out)["mass_drift"] < 1e-10


def test_usage_error_exit_code(capsys):
    assert_exit(["sweep", "--omegas"], 1)
    assert_exit(["nonsense"], 1)


def assert_exit(argv, code):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == code


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"task": "spectrum", "omegas": []}))
    assert main(["sweep", "--config", str(p)]) == 1
    assert "omegas" in capsys.readouterr().err


def test_spectrum_sweep_metric_failure_and_determinism(tmp_path, capsys):
    out = tmp_path / "o"
    argv = ["sweep", "--task", "spectrum", "--omegas", "64", "256", "1024", "--output-dir", str(out)]
    # |lambda - 1| falls like 1/omega, faster than the declared sqrt(omega) scale
    assert main(argv) == 2
    files = sorted(p.name for p in out.iterdir())
    assert files == ["spectrum.csv", "spectrum_omega1024.json", "spectrum_omega256.json",
                     "spectrum_omega64.json", "spectrum_report.json"]
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(argv) == 2
    assert first == {p.name: p.read_bytes() for p in out.iterdir()}
    rep = json.loads((out / "spectrum_report.json").read_text())
    assert rep["fitted_rate"] == pytest.approx(-1.0, abs=0.05)


def test_gn_sweep_passes(tmp_path):
    argv = ["gn-check", "--omegas", "64", "256", "--output-dir", str(tmp_path)]
    assert main(argv) == 0
    rep = json.loads((tmp_path / "gn_report.json").read_text())
    assert rep["metric_name"] == "C_GN" and rep["pass"] is True
