import math

import pytest

from asfkit.config import DEFAULTS, Config, load_config
from asfkit.errors import ConfigError


def test_defaults_materialize():
    cfg = load_config(None)
    assert cfg["system"]["name"] == "tipping-pitchfork"
    assert cfg.system().params["A"] == 0.25
    st = cfg.solve_settings()
    assert st.rel_tol == 1e-10 and st.method == "implicit-adaptive"
    assert cfg.tracking_hypotheses().X == ((-0.5, 0.5),)
    assert cfg.source is None


def test_as_dict_is_json_safe():
    import json

    d = load_config(None).as_dict()
    assert d["solver"]["max_step"] == "inf"
    json.dumps(d, allow_nan=False)
    assert set(d) == set(DEFAULTS)


def test_load_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[system]\nname = "tracking-cubic"\nA = 0.1\n[solver]\neps = 5e-4\n')
    cfg = load_config(p)
    assert cfg.system().name == "tracking-cubic" and cfg.system().params["A"] == 0.1
    assert cfg["solver"]["eps"] == 5e-4
    assert cfg.source == str(p)


def test_custom_system_from_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[system]\nname = "custom"\nrhs = "(2*g - 1)*x + eps"\n'
                 '[system.seeds]\nminus = [0.0]\nplus = [0.0]\n')
    sys = load_config(p).system()
    assert sys.rhs([0.3], 1.0, 0.0, 0.0, 0.0)[0] == pytest.approx(0.3)


def test_expression_ramp(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[ramp]\nexpression = "0.5 + 0.5*z/(1 + abs(z))"\nasymptotic_order = 1\n')
    r = load_config(p).system().ramp
    assert r(0.0) == pytest.approx(0.5) and r.asymptotic_order == 1


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[system\nname = 1", "line"),
        ("[nope]\na = 1", "unknown section"),
        ("[system]\nbogus = 1", "unknown key"),
        ('[system]\nA = "big"', "must be a number"),
        ('[solver]\ndense_output = "yes"', "true or false"),
        ('[system]\nname = "unknown"', "name must be one of"),
        ('[system]\nrhs = "x"', "only apply"),
        ("[system]\nrho = -1", "rho must be positive"),
        ("[system]\nmu = 0", "mu must be positive"),
        ('[melnikov]\nnormalization = "max"', "normalization"),
        ('[melnikov]\ncase = "I"', "case"),
        ("[melnikov]\nsigma_bracket = [1, 0]", "increasing"),
        ("[solver]\neps = 0", "eps must be positive"),
        ("[solver]\nrel_tol = 0", "[solver]"),
        ('[solver]\nmethod = "euler"', "method"),
        ("[solver]\nescape_radius = 0.5", "diameter"),
        ("[tracking]\nX = [0.5, 0.5]", "[tracking]"),
        ("[tracking]\nM = 0.1", "[tracking]"),
        ('[ramp]\nname = "tanh"', "[ramp]"),
        ('[system]\nname = "custom"\nrhs = "x +"', "[system]"),
        ('[ramp]\nexpression = "z +"', "[ramp]"),
        ('[ramp]\nexpression = "x"', "[ramp]"),
    ],
)
def test_rejections(tmp_path, text, fragment):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert fragment in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")


def test_non_utf8(tmp_path):
    p = tmp_path / "b.toml"
    p.write_bytes(b"\xff\xfe")
    with pytest.raises(ConfigError, match="UTF-8"):
        load_config(p)


def test_overrides_revalidate():
    cfg = load_config(None)
    new = cfg.with_overrides(system={"sigma": 0.37, "A": None})
    assert new["system"]["sigma"] == 0.37 and new["system"]["A"] == 0.25
    assert cfg["system"]["sigma"] == 0.3
    with pytest.raises(ConfigError):
        cfg.with_overrides(system={"mu": -1.0})


def test_from_dict_does_not_alias_defaults():
    cfg = Config.from_dict({"melnikov": {"sigma_bracket": [0.1, 0.9]}})
    assert DEFAULTS["melnikov"]["sigma_bracket"] == [0.0, 1.0]
    assert cfg["melnikov"]["sigma_bracket"] == [0.1, 0.9]


def test_infinite_max_step_round_trip(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[solver]\nmax_step = inf\n")
    assert math.isinf(load_config(p).solve_settings().max_step)
