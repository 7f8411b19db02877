import pytest

from ferrosim.cells import CellConfig
from ferrosim.config import ConfigError, activate, deactivate, load_config
from ferrosim.engine import SolverConfig
from ferrosim.presets import get_variant, load_presets


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_file_gives_defaults(tmp_path):
    cfg = load_config([write(tmp_path, "empty.toml", "")])
    base = load_config()
    assert cfg.to_dict() == base.to_dict()
    assert cfg.cell == CellConfig()
    assert cfg.solver == SolverConfig()
    for name, dv in load_presets().items():
        assert cfg.devices[name].stack == dv.stack


def test_unknown_device_key_path(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config([write(tmp_path, "bad.toml", "[device.A]\nprr = 2e-5\n")])
    assert "device.A.prr" in str(exc.value)


@pytest.mark.parametrize("text, key", [
    ("[cell]\nc_nn = 1e-15\n", "cell.c_nn"),
    ("[solver]\nreltol2 = 1\n", "solver.reltol2"),
    ("[bogus]\nx = 1\n", "bogus"),
])
def test_unknown_keys_named(tmp_path, text, key):
    with pytest.raises(ConfigError) as exc:
        load_config([write(tmp_path, "bad.toml", text)])
    assert key in str(exc.value)


def test_overlay_order(tmp_path):
    a = write(tmp_path, "a.toml", "[device.A]\npr = 2.1e-5\n[cell]\nc_n = 3e-15\n")
    b = write(tmp_path, "b.toml", "[device.A]\npr = 2.2e-5\n")
    cfg = load_config([a, b], [{"cell": {"c_n": 4e-15}}])
    assert cfg.devices["A"].stack.pr == 2.2e-5
    assert cfg.cell.c_n == 4e-15
    assert cfg.devices["B"].stack == get_variant("B").stack


def test_to_dict_round_trip(tmp_path):
    cfg = load_config([write(tmp_path, "a.toml", "[device.C]\nea_mean = 1.3e7\n[solver]\nreltol = 1e-4\n")])
    again = load_config((), [cfg.to_dict()])
    assert again.to_dict() == cfg.to_dict()
    assert again.devices["C"].stack == cfg.devices["C"].stack


def test_activate_installs_presets(tmp_path):
    cfg = load_config([write(tmp_path, "a.toml", "[device.A]\npr = 2.2e-5\n")])
    try:
        activate(cfg)
        assert get_variant("A").stack.pr == 2.2e-5
    finally:
        deactivate()
    assert get_variant("A").stack.pr == 2e-5


def test_bad_value_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config([write(tmp_path, "bad.toml", "[cell]\nc_n = -1.0\n")])
