import json

import pytest

from boltzgap.cli import main
from boltzgap.config import ConfigError, RunConfig, parse_config
from boltzgap.report import dumps


def test_parse_config_grammar():
    cfg = parse_config("""
        # theorem run
        kernel = quintic
        N = 4
        initial = random(3)
        delta = default
        l1 = false
        t_end = 2.5
    """)
    assert cfg.kernel == "quintic" and cfg.N == 4 and cfg.delta is None and cfg.l1 is False
    assert cfg.t_end == 2.5
    assert parse_config(cfg.to_text()) == cfg


@pytest.mark.parametrize("text,msg", [
    ("colour = red", "unknown key"),
    ("N = six", "bad value"),
    ("N", "expected key = value"),
    ("N = 4\nN = 5", "duplicate"),
    ("initial = sideways", "bad initial"),
    ("initial = product-gaussian(1,1)", "three variances"),
])
def test_parse_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_output_dir_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv("BOLTZGAP_OUTPUT_DIR", str(tmp_path))
    assert RunConfig(output_dir="elsewhere").resolved_output_dir() == tmp_path


def test_dumps_17_digits_and_sorted():
    text = dumps({"b": 0.1, "a": [1, 2.0], "c": {"x": True}})
    assert text.index('"a"') < text.index('"b"')
    assert "0.10000000000000001" in text
    assert json.loads(text)["a"] == [1, 2.0]


def run(capsys, *args):
    code = main(list(args))
    return code, capsys.readouterr().out


def test_cli_gap(capsys):
    code, out = run(capsys, "gap", "--kernel", "linear")
    d = json.loads(out)
    assert code == 0 and abs(d["gap"] + 1 / 3) < 1e-15 and abs(d["delta"] - 1 / 48) < 1e-15
    code, _ = run(capsys, "gap", "--kernel", "family:1")
    assert code == 2


def test_cli_check_kernel(capsys):
    assert run(capsys, "check-kernel", "--kernel", "quintic")[0] == 0
    code, out = run(capsys, "check-kernel", "--kernel", "raw:1")
    assert code == 1
    assert abs(json.loads(out)["symmetry_residual_at_half"] - 0.42264973081037427) < 1e-12


def test_cli_usage_errors(capsys):
    assert main(["nonsense"]) == 2
    assert main(["oracle", "--entry", "1,x"]) == 2
    assert main(["gaussian-example", "--sigma2", "1,2"]) == 2


def test_cli_verify(capsys, tmp_path):
    code, out = run(capsys, "verify", "--kernel", "linear", "--N", "4", "--oracle-entries", "2",
                    "--oracle-samples", "20000", "--output-dir", str(tmp_path))
    assert code == 0 and json.loads(out)["pass"]
    assert (tmp_path / "verify.json").exists()
    code, out = run(capsys, "verify", "--kernel", "raw:1", "--output-dir", str(tmp_path))
    assert code == 1 and not json.loads(out)["check_kernel"]["pass"]


def test_cli_verify_low_degree_not_stabilized(capsys, tmp_path):
    code, out = run(capsys, "verify", "--N", "2", "--oracle-entries", "0", "--output-dir", str(tmp_path))
    d = json.loads(out)
    assert code == 0 and d["gap_consistency"]["status"] == "not stabilized"


def test_cli_theorem_outcomes(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("N = 4\nt_end = 3\nl1_stride = 4\n")
    code, out = run(capsys, "theorem", "--config", str(cfg), "--output-dir", str(tmp_path / "a"))
    assert code == 0 and json.loads(out)["status"] == "pass"
    header = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,theta,sup_norm,C_star_bound")
    code, out = run(capsys, "theorem", "--config", str(cfg), "--scale", "3", "--output-dir", str(tmp_path / "b"))
    assert code == 1 and json.loads(out)["status"] == "hypothesis_failed"
    code, out = run(capsys, "theorem", "--config", str(cfg), "--initial", "product-gaussian(1.00643,1,0.99357)",
                    "--output-dir", str(tmp_path / "c"))
    assert code == 0


def test_cli_outputs_are_byte_identical(capsys, tmp_path):
    for d in ("x", "y"):
        assert main(["evolve", "--N", "4", "--t-end", "2", "--initial", "random(4)", "--output-dir", str(tmp_path / d)]) == 0
        assert main(["picard", "--N", "4", "--t-end", "2", "--initial", "random(4)", "--output-dir", str(tmp_path / d)]) == 0
    capsys.readouterr()
    for name in ("trajectory.csv", "evolve.json", "picard_trajectory.csv", "picard_history.json"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_cli_gaussian_example(capsys, tmp_path):
    code, out = run(capsys, "gaussian-example", "--sigma2", "1.1,1,0.9", "--sigma2", "1,1,1",
                    "--output-dir", str(tmp_path))
    rows = [r.split(",") for r in out.splitlines()[2:]]
    assert code == 0
    assert rows[0][-1] == "false" and rows[1][-1] == "true"
    assert abs(float(rows[0][3]) - (1 / 0.99 - 1)) < 1e-15


def test_cli_oracle_and_assemble(capsys, tmp_path):
    code, out = run(capsys, "oracle", "--N", "2", "--entry", "4,4", "--samples", "20000")
    assert code == 0 and json.loads(out)["indices"][0] == [2, 0, 0]
    code, out = run(capsys, "assemble", "--N", "3", "--output-dir", str(tmp_path))
    assert code == 0 and (tmp_path / "L.txt").exists() and (tmp_path / "R.txt").exists()
