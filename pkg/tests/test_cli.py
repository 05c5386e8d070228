import json
import math

import pytest

from nozzleshock.nozzle import Profile1D
from nozzleshock.shock_locator import kdot
from nozzleshock.cli import load_config, main, run, validate


def write_config(tmp_path, body):
    path = tmp_path / "run.toml"
    path.write_text(body)
    return str(path)


def read(path):
    return json.loads(path.read_text())


def test_locate_only_sine(tmp_path, bg):
    theta = Profile1D.from_expression("sin(4*pi*x/L)", 0.0, 1.0, constants={"L": 1.0})
    # the centred level of R for a sine with two periods: -Kdot/(4 pi)
    level = float(-kdot(bg) / (4 * math.pi) / bg.elliptic_coefficient("+"))
    assert theta.integral(0.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    cfg = write_config(tmp_path, f'[nozzle]\ntheta = "sin(4*pi*x/L)"\n[exit_pressure]\nexpression = "{level!r}"\n')
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "--mode", "locate-only"]) == 0
    summary = read(out / "summary.json")
    assert summary["solutions"] == 4
    assert sum(r["admissible"] for r in read(out / "locations.json")["roots"]) == 4


def test_malformed_expression(tmp_path, capsys):
    cfg = write_config(tmp_path, '[nozzle]\ntheta = "x^^3"\n')
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2


def test_unknown_mode(tmp_path):
    assert main(["--out", str(tmp_path / "o"), "--threads", "0"]) == 2


def test_out_of_range(tmp_path):
    cfg = write_config(tmp_path, '[exit_pressure]\nexpression = "5"\n')
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out)]) == 3
    diag = read(out / "diagnostics.json")["failures"][0]
    assert diag["p_star"] > diag["r_upper"]
    assert read(out / "summary.json")["solutions"] == 0


def test_zero_sigma_full(tmp_path):
    cfg = write_config(tmp_path, '[nozzle]\nsigma = 0.0\n[exit_pressure]\nexpression = "0"\n')
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out)]) == 0
    roots = read(out / "summary.json")["roots"]
    assert roots and all(r["iterations"] == 0 and r["converged"] for r in roots)


def test_environment_override(monkeypatch):
    monkeypatch.setenv("NOZZLESHOCK_NOZZLE__SIGMA", "0.002")
    monkeypatch.setenv("NOZZLESHOCK_ITERATION__BALL", "abort")
    cfg = load_config()
    assert cfg["nozzle"]["sigma"] == 0.002 and cfg["iteration"]["ball"] == "abort"
    cfg = load_config(overrides={"nozzle": {"sigma": 0.003}})
    assert cfg["nozzle"]["sigma"] == 0.003


def test_validate_verdicts(capsys):
    report = validate(load_config())
    assert report["ok"] and report["verdict"] == "1 admissible location expected"
    report = validate(load_config(overrides={"exit_pressure": {"expression": "5"}}))
    assert report["verdict"] == "no admissible location" and not report["ok"]
    report = validate(load_config(overrides={"upstream": {"mach": 0.8}}))
    check = next(c for c in report["checks"] if c["check"] == "upstream_supersonic")
    assert not check["ok"]
    assert main(["--validate"]) == 0
    assert json.loads(capsys.readouterr().out)["ok"]


def test_full_run_outputs(tmp_path):
    out = tmp_path / "out"
    assert run(load_config(), out) == 0
    summary = read(out / "summary.json")
    assert summary["solutions"] == summary["non_uniqueness_count"] == 1
    root = out / "root_0"
    for name in ("linear/minus.csv", "linear/plus.csv", "linear/shock.csv", "linear/manifest.json",
                 "nonlinear/plus.csv", "nonlinear/shock.csv", "nonlinear/manifest.json"):
        assert (root / name).is_file(), name
    assert (out / "supersonic" / "fields.csv").is_file()
    assert summary["roots"][0]["residuals"]["rh_max"] <= 1e-8


def test_deterministic(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    cfg = load_config(overrides={"threads": 2})
    for d in dirs:
        assert run(cfg, d) == 0
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (dirs[0] / rel).read_bytes() == (dirs[1] / rel).read_bytes(), rel


@pytest.mark.parametrize("bad", ['[grids]\nn_xi = 3\n', '[tolerances]\niter_tol = -1\n', '[iteration]\nball = "maybe"\n'])
def test_bad_settings(tmp_path, bad):
    assert main(["--config", write_config(tmp_path, bad), "--out", str(tmp_path / "o")]) == 2
