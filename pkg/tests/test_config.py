import pytest

from mlpurcell import config
from mlpurcell.errors import ConfigError
from mlpurcell.models import DimerParams, JCParams


def test_parse_values_and_comments():
    cfg = config.parse_text("# header\ng_c = 2.5  # inline\nL_v = 3\ninclude_double_excited = yes\nomega_c = auto\n")
    assert cfg.values == {"g_c": 2.5, "L_v": 3, "include_double_excited": True, "omega_c": None}
    assert cfg.lines == {"g_c": 2, "L_v": 3, "include_double_excited": 4, "omega_c": 5}
    assert not cfg.diagnostics


def test_line_numbered_errors():
    cfg = config.parse_text("g_c = 1\n\nnot an assignment\ng_c = 2\nL_v = three\n")
    msgs = [str(d) for d in cfg.errors]
    assert msgs[0].startswith("error: line 3:")
    assert "duplicate" in msgs[1] and "line 4" in msgs[1]
    assert msgs[2].startswith("error: line 5:")


def test_unknown_key_warns():
    cfg = config.parse_text("colour = blue\n")
    assert not cfg.errors
    assert cfg.warnings[0].line == 1 and "colour" in cfg.warnings[0].message


def test_non_finite_rejected():
    assert config.parse_text("g_c = inf\n").errors


def test_params_from_reports_line():
    cfg = config.parse_text("L_v = 4\nQ = -1\n")
    with pytest.raises(ConfigError) as info:
        config.params_from(cfg, DimerParams)
    assert info.value.line == 2
    assert "line 2" in str(info.value)


def test_round_trip():
    p = DimerParams(g_c=3.25, L_v=3, omega_c=18500.0, include_double_excited=True)
    assert config.loads(config.dumps(p)) == p
    j = JCParams(g_c=0.7, omega_c=1.2)
    assert config.loads(config.dumps(j), JCParams) == j


def test_parse_sweep_and_window():
    assert config.parse_sweep("g_c=0:3:7") == ("g_c", 0.0, 3.0, 7)
    for bad in ("g_c", "g_c=0:3", "g_c=0:3:0", "g_c=1:1:5"):
        with pytest.raises(ValueError):
            config.parse_sweep(bad)
    assert config.parse_window("5:") == (5.0, None)
    assert config.parse_window(":20") == (None, 20.0)
    with pytest.raises(ValueError):
        config.parse_window("5:2")


def test_validate_collects_everything(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("command = dimer-spectrum\nQ = 0\nsweep = g_c=0:1\njobs = 0\nomega0 = 2.0\nfoo = 1\n")
    diags = config.validate(path)
    lines = [(d.line, d.severity) for d in diags]
    assert (2, "error") in lines and (3, "error") in lines and (4, "error") in lines
    assert (5, "warning") in lines and (6, "warning") in lines
    assert [d.line for d in diags] == sorted(d.line for d in diags)


def test_validate_clean_file(tmp_path):
    path = tmp_path / "ok.cfg"
    path.write_text(config.dumps(DimerParams(), {"command": "dynamics"}))
    assert config.validate(path) == []


def test_unreadable_file():
    with pytest.raises(ConfigError):
        config.read_config("/nonexistent/run.cfg")
