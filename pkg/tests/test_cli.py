import json
import logging

import pytest

from cli import RunConfig, UsageError, main, parse_config, write_manifest
from verify import DEFAULT_CASES


@pytest.fixture
def base(constants_path, consts):
    return ["--p", "3", "--M", "1", "--constants", constants_path]


def test_solve_defaults(base, caplog):
    with caplog.at_level(logging.WARNING):
        cfg = parse_config(["solve", *base, "--c", "8"])
    assert cfg.command == "solve"
    assert (cfg.p, cfg.M, cfg.c) == (3.0, 1.0, 8.0)
    assert (cfg.L, cfg.N) == (256.0, 4096)
    assert cfg.method == "petviashvili"
    # c = 8 clears the admissibility floor but not the full existence threshold
    assert cfg.admissible is False
    assert "full threshold" in caplog.text


def test_c_below_floor_is_a_usage_error(base):
    with pytest.raises(UsageError, match=r"max\{\(alpha M\)"):
        parse_config(["solve", *base, "--c", "0.5"])


def test_strict_refuses_inadmissible_c(base):
    with pytest.raises(UsageError, match="full threshold"):
        parse_config(["solve", *base, "--c", "8", "--strict"])


@pytest.mark.parametrize("p", ["2", "5", "6.5"])
def test_p_out_of_range(constants_path, p):
    with pytest.raises(UsageError, match="p must lie in"):
        parse_config(["solve", "--p", p, "--c", "8", "--constants", constants_path])


def test_malformed_flags():
    with pytest.raises(UsageError):
        parse_config(["solve", "--c", "fast"])
    with pytest.raises(UsageError):
        parse_config(["explode"])
    with pytest.raises(UsageError):
        parse_config([])


def test_file_and_flag_precedence(tmp_path, base):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"c": 8, "N": 1024, "out": str(tmp_path / "from_file")}), encoding="utf-8")
    from_file = parse_config(["solve", *base, "--config", str(path)])
    assert from_file.c == 8.0
    assert from_file.N == 1024
    cfg = parse_config(["solve", *base, "--config", str(path), "--c", "16"])
    assert cfg.c == 16.0
    write_manifest(cfg)
    manifest = json.loads((tmp_path / "from_file" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["schema_version"] == 1
    assert manifest["config"]["c"] == 16.0
    assert manifest["config"]["L"] == 256.0


def test_config_file_as_argument(tmp_path, base):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"c": 32}), encoding="utf-8")
    assert parse_config(["solve", *base], config_file=str(path)).c == 32.0


def test_unknown_config_key(tmp_path, base):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"c": 8, "speed_of_light": 3e8}), encoding="utf-8")
    with pytest.raises(UsageError, match="speed_of_light"):
        parse_config(["solve", *base, "--config", str(path)])


def test_output_directory_from_environment(monkeypatch, tmp_path, base):
    monkeypatch.setenv("RELSOL_OUT", str(tmp_path / "env"))
    assert parse_config(["solve", *base, "--c", "16"]).out == str(tmp_path / "env")
    assert parse_config(["solve", *base, "--c", "16", "--out", "explicit"]).out == "explicit"


def test_run_config_round_trip(base):
    cfg = parse_config(["limit", *base, "--c-list", "16", "32"])
    assert cfg.c_list == [16.0, 32.0]
    again = RunConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()


def test_verify_cases_from_flags(constants_path, consts, caplog):
    argv = ["verify", "--constants", constants_path, "--case", "3", "1", "8", "--case", "3", "1", "16",
            "--checks", "el_residual"]
    with caplog.at_level(logging.WARNING):
        cfg = parse_config(argv)
    assert cfg.cases == [[3.0, 1.0, 8.0], [3.0, 1.0, 16.0]]
    vc = cfg.verify_config()
    assert vc.cases == [(3.0, 1.0, 8.0), (3.0, 1.0, 16.0)]
    assert vc.checks == ["el_residual"]
    # c = 8 is admissible only by the floor
    assert cfg.admissible is False
    assert "full threshold" in caplog.text
    with pytest.raises(UsageError):
        parse_config(["verify", "--case", "7", "1", "8"])


def test_verify_cases_are_checked_for_admissibility(constants_path, consts, caplog):
    below_floor = ["verify", "--constants", constants_path, "--case", "3", "1", "0.5"]
    with caplog.at_level(logging.WARNING):
        cfg = parse_config(below_floor)
    assert cfg.admissible is False
    assert "admissibility floor" in caplog.text
    with pytest.raises(UsageError, match="admissibility floor"):
        parse_config([*below_floor, "--strict"])
    with pytest.raises(UsageError, match="full threshold"):
        parse_config(["verify", "--constants", constants_path, "--case", "3", "1", "8", "--strict"])
    with pytest.raises(UsageError):
        parse_config(["verify", "--constants", constants_path, "--case", "3", "-1", "8"])


def test_default_verify_cases(constants_path, consts):
    cfg = RunConfig.from_dict({"command": "verify"})
    assert [tuple(case) for case in cfg.cases] == DEFAULT_CASES
    assert cfg.verify_config().cases == DEFAULT_CASES


def test_main_usage_error_exit_code(capsys):
    assert main(["solve", "--p", "9"]) == 2
    assert "usage error" in capsys.readouterr().err


def test_main_constants(tmp_path, constants_path, consts):
    out = tmp_path / "out"
    assert main(["constants", "--p", "3", "--constants", constants_path, "--out", str(out)]) == 0
    data = json.loads((out / "constants.json").read_text(encoding="utf-8"))
    assert data["alpha"] == consts.alpha
    assert (out / "manifest.json").exists()


def test_main_solve_writes_snapshot(tmp_path, base):
    out = tmp_path / "solve"
    assert main(["solve", *base, "--c", "16", "--N", "1024", "--out", str(out)]) == 0
    for name in ("groundstate.bin", "groundstate.json", "groundstate.record.json", "manifest.json"):
        assert (out / name).exists()
    record = json.loads((out / "groundstate.record.json").read_text(encoding="utf-8"))
    assert record["residuals"]["el"] <= 1e-10
    assert record["grid"] == {"L": 256.0, "N": 1024}


def test_main_solver_failure_exit_code(tmp_path, base):
    assert main(["solve", *base, "--c", "16", "--N", "1024", "--max-inner", "2", "--out", str(tmp_path)]) == 3


def test_main_spectrum(tmp_path, base):
    out = tmp_path / "spectrum"
    assert main(["spectrum", *base, "--c", "16", "--N", "512", "--save-vector", "--out", str(out)]) == 0
    data = json.loads((out / "spectrum.json").read_text(encoding="utf-8"))
    assert data["lambda_min"] > 0.0
    assert data["coercivity_ratio"] > 0.0
    assert (out / "eigenvector.bin").exists()


def test_main_evolve_and_stability(tmp_path, base):
    out = tmp_path / "evolve"
    args = [*base, "--c", "16", "--N", "512", "--dt", "0.01", "--T", "0.2", "--sample-stride", "5"]
    assert main(["evolve", *args, "--out", str(out)]) == 0
    lines = (out / "evolve.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 5
    assert json.loads((out / "evolve.json").read_text(encoding="utf-8"))["mass_drift"] <= 1e-12
    out = tmp_path / "stability"
    assert main(["stability", *args, "--delta", "1e-3", "--out", str(out)]) == 0
    report = json.loads((out / "stability.json").read_text(encoding="utf-8"))
    assert report["sup_distance"] <= 1e-2
    assert report["gwp"]["status"] == "ok"


def test_main_verify_exit_codes(tmp_path, constants_path, consts):
    out = tmp_path / "verify"
    args = ["verify", "--constants", constants_path, "--case", "3", "1", "8",
            "--checks", "constants_consistency", "symbol_bounds"]
    assert main([*args, "--N", "1024", "--out", str(out)]) == 0
    report = json.loads((out / "verify.json").read_text(encoding="utf-8"))
    assert report["passed"] is True
    assert [c["name"] for c in report["checks"]] == ["constants_consistency", "symbol_bounds"]
    # a box of length 10 cannot hold the ground state: checks error out, exit code 1
    small = tmp_path / "small.json"
    small.write_text(json.dumps({"L": 10}), encoding="utf-8")
    assert main([*args, "--config", str(small), "--out", str(tmp_path / "small")]) == 1
    report = json.loads((tmp_path / "small" / "verify.json").read_text(encoding="utf-8"))
    assert all("GridTooSmallError" in c["error"] for c in report["checks"])


@pytest.mark.slow
def test_main_limit(tmp_path, base):
    out = tmp_path / "limit"
    assert main(["limit", *base, "--c-list", "16", "32", "64", "--N", "1024", "--out", str(out)]) == 0
    rows = json.loads((out / "limit.json").read_text(encoding="utf-8"))["rows"]
    assert [r["c"] for r in rows] == [16.0, 32.0, 64.0]
    assert (out / "limit.csv").read_text(encoding="utf-8").startswith("c,")
