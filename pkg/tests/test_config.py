import pytest

from harnack_lab.config import ConfigError, load_config, parse_config, scenario_from_config

TEXT = """
# hyperbolic heat run
manifold.kappa = 1.0
operator.kind = pucci_minus
operator.lambda = 1
operator.Lambda = 2   # case matters
grid.h = 0.1
initial.kind = bump
initial.base = 0.2
harnack.R = 0.5
harnack.center = 0.1, -0.2
harnack.p = 0.2 0.4
"""


def test_parse_types_and_case():
    cfg = parse_config(TEXT)
    assert cfg["operator.lambda"] == 1.0 and cfg["operator.Lambda"] == 2.0
    assert cfg["harnack.center"] == (0.1, -0.2) and cfg["harnack.p"] == (0.2, 0.4)
    assert cfg["operator.kind"] == "pucci_minus"


def test_scenario_from_config():
    scn = scenario_from_config(parse_config(TEXT), grid_scale=0.5)
    assert scn.h == pytest.approx(0.05) and scn.R == 0.5
    assert scn.operator.ell.Lam == 2.0 and scn.initial.kind == "bump"
    assert scn.manifold.kappa == 1.0


@pytest.mark.parametrize("text", ["bogus.key = 1", "grid.h = fast", "manifold.dim = 2.5", "no equals sign"])
def test_bad_input_is_config_error(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_semantic_errors_are_config_errors():
    with pytest.raises(ConfigError):
        scenario_from_config(parse_config("operator.kind = laplacian\noperator.Lambda = 2"))
    with pytest.raises(ConfigError):
        scenario_from_config(parse_config("manifold.kappa = -1"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_shipped_scenarios_parse():
    from pathlib import Path

    files = sorted((Path(__file__).parents[1] / "scenarios").glob("*.cfg"))
    assert files
    for f in files:
        scenario_from_config(load_config(f))
