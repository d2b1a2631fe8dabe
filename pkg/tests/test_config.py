from pathlib import Path

import pytest

from frt_reach.config import ConfigError, load_config, parse_config, parse_params
from frt_reach.experiments import CONFIG_1D, CONFIG_DI
from frt_reach.solver import Formulation

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
[system]
name = integrator1d
[grid]
min = 0
max = 6
count = 61
[target]
kind = analytic
function = ramp_1d
"""


def test_bundled_configs_match_the_canned_runners():
    for name, text in (("1d_comparison.cfg", CONFIG_1D), ("di_frt.cfg", CONFIG_DI)):
        assert (CONFIGS / name).read_text() == text


def test_bundled_configs_parse():
    for path in sorted(CONFIGS.glob("*.cfg")):
        load_config(path)


def test_di_config_contents():
    cfg = parse_config(CONFIG_DI)
    assert [t.shape for t in cfg.targets] == ["Sa", "Sb", "Sc", "Sd"]
    assert cfg.targets[0].params == {"p1": 2.0, "p2": 3.0, "r": 2.5}
    assert cfg.grid().shape == (401, 301)
    assert cfg.solver.formulations == [Formulation.FRT]
    assert cfg.check.expect["Sb"] == "strict_superset"


def test_1d_config_contents():
    cfg = parse_config(CONFIG_1D)
    assert cfg.solver.formulations == [Formulation.FRT, Formulation.BRT,
                                       Formulation.BRT_NODISCOUNT, Formulation.CBVF]
    assert cfg.solver.params.max_iters == 20000 and cfg.profile


def test_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.stages == ["solve"] and cfg.solver.engine == "auto"
    assert cfg.simulation is None


def test_params_list():
    assert parse_params("p1:2, p2:3, r:2.5") == {"p1": 2.0, "p2": 3.0, "r": 2.5}
    with pytest.raises(ConfigError):
        parse_params("p1=2")


@pytest.mark.parametrize("text, needle", [
    (MINIMAL.replace("[grid]\nmin = 0\nmax = 6\ncount = 61\n", ""), "[grid]"),
    (MINIMAL + "[solver]\ngama = 2\n", "gama"),
    (MINIMAL + "[plotting]\ncolor = red\n", "[plotting]"),
    (MINIMAL.replace("integrator1d", "unicycle"), "unicycle"),
    (MINIMAL + "[solver]\ngamma = nan\n", "gamma"),
    (MINIMAL + "[solver]\ngamma = 0\n", "gamma"),
    (MINIMAL + "[solver]\nformulation = frt, hjb\n", "hjb"),
    (MINIMAL + "[solver]\ndt_vi_cells = 4\n", "dt_vi_cells"),
    (MINIMAL.replace("count = 61", "count = 61, 31"), "2 dims"),
    (MINIMAL.replace("max = 6", "max = -1"), "[grid]"),
    (MINIMAL + "[experiment]\nstages = solve, simulate\n", "[simulation]"),
    (MINIMAL.replace("ramp_1d", "cubic"), "function"),
    ("[system\nname = x", "malformed"),
])
def test_config_errors_name_the_offender(text, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert needle in str(exc.value)


def test_unknown_shape_is_rejected():
    text = MINIMAL.replace("kind = analytic\nfunction = ramp_1d", "kind = clipped_sdf_shape\nshape = hexagon")
    with pytest.raises(ConfigError, match="hexagon"):
        parse_config(text)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.cfg")


def test_field_target_resolves_relative_paths(tmp_path):
    import numpy as np
    from frt_reach.grid import ScalarField, make_grid
    from frt_reach.io import save_field
    g = make_grid([{"min": 0, "max": 6, "count": 61}])
    save_field(tmp_path / "h.hjf", ScalarField(g, np.linspace(1, -1, 61)))
    text = MINIMAL.replace("kind = analytic\nfunction = ramp_1d", "kind = clipped_sdf_field\nfield = h.hjf")
    (tmp_path / "run.cfg").write_text(text)
    cfg = load_config(tmp_path / "run.cfg")
    (_, h), = cfg.target_fields()
    assert h.values[0] == 1.0
