import numpy as np
import pytest

from vmhd.cli import ConfigError, format_config, main, parse_config, parse_config_text
from vmhd.sim import PRESETS, SimConfig


def test_minimal_preset_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("preset = torus-small\n")
    cfg = parse_config(p)
    assert cfg == SimConfig.from_preset("torus-small")


def test_comments_and_overrides():
    cfg = parse_config_text("# run\ndt = 0.005   # finer\npreset = shear\n\nb_uniform = 0, 0, 1\nantithetic = no\n")
    assert cfg.dt == 0.005 and cfg.preset == "shear" and cfg.n == 32
    assert cfg.b_uniform == (0.0, 0.0, 1.0) and cfg.antithetic is False


@pytest.mark.parametrize("text,fragment", [
    ("dt = -1\n", ":1: dt: must be positive"),
    ("n = 32\nspeed = 3\n", ":2: unknown key 'speed'"),
    ("n 32\n", ":1: malformed line"),
    ("n = 32\nn = 16\n", ":2: duplicate key"),
    ("\n\nn = many\n", ":3: n:"),
    ("dt =\n", ":1: missing value"),
    ("b_uniform = 1, 2\n", ":1: b_uniform:"),
    ("preset = other\n", ":1: unknown preset"),
])
def test_errors_carry_line_numbers(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text, "run.cfg")
    assert fragment in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "absent.cfg")


@pytest.mark.parametrize("name", list(PRESETS) + ["custom"])
def test_echo_round_trip(name):
    cfg = SimConfig.from_preset(name) if name != "custom" else SimConfig(dt=0.1 / 3.0, single_v=(0.1, 0.2, 0.3))
    assert parse_config_text(format_config(cfg)) == cfg


def test_help_lists_keys_and_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for key in ("dt", "n_particles", "nonlinear_form", "hist_vmax"):
        assert key in out


def test_identities_command(capsys):
    assert main(["identities", "--seeds", "3", "--n", "16"]) == 0
    out = capsys.readouterr().out
    assert "PASS identity_curl_b_cross_b" in out and "FAIL" not in out


def test_linear_check_then_fit_and_plot(tmp_path, capsys):
    assert main(["linear-check", "--output", str(tmp_path)]) == 0
    csv = tmp_path / "decay_curves.csv"
    assert csv.read_text().startswith("t,l2_norm,grad_norm\n")
    assert main(["fit", str(csv), "--model", "algebraic", "--column", "grad_norm", "--expect", "-1.25"]) == 0
    assert "exponent=-1.25" in capsys.readouterr().out
    assert main(["fit", str(csv), "--model", "algebraic", "--column", "l2_norm", "--expect", "-1.25"]) == 1
    fail = [line for line in capsys.readouterr().out.splitlines() if line.startswith("FAIL")]
    assert len(fail) == 1 and fail[0].startswith("FAIL fit_exponent value=-0.75")
    svg = tmp_path / "curves.svg"
    assert main(["plot", str(csv), "--columns", "l2_norm,grad_norm", "--logy", "--output", str(svg)]) == 0
    assert "<svg" in svg.read_text()


def test_plot_empty_csv_writes_nothing(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    out = tmp_path / "out.svg"
    assert main(["plot", str(empty), "--columns", "a", "--output", str(out)]) != 0
    assert not out.exists()
    assert capsys.readouterr().out.startswith("FAIL plot error=")


def test_fit_unknown_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("t,a\n" + "".join(f"{i},{np.exp(-i)}\n" for i in range(12)))
    assert main(["fit", str(p), "--column", "b"]) == 2
    assert main(["fit", str(p), "--column", "a", "--expect", "1.0", "--tol", "1e-9"]) == 0


def test_run_command(tmp_path, capsys):
    cfg = tmp_path / "r.cfg"
    cfg.write_text("preset = picard-small\nt_end = 0.05\n")
    assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "series.csv").exists()
    assert "PASS support_bound_slack" in capsys.readouterr().out


def test_run_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "r.cfg"
    cfg.write_text("dt = -1\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "dt: must be positive" in capsys.readouterr().out


def test_picard_command(capsys):
    assert main(["picard", "--set", "t_end=0.2"]) == 0
    out = capsys.readouterr().out
    assert "surrogate" in out and "PASS picard_strictly_decreasing" in out
