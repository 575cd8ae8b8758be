import pytest

from morphoseek.config import RunConfig, load_config
from morphoseek.exceptions import ConfigurationError
from morphoseek.kernel import DESK_GRID, GridDims


def test_defaults():
    cfg = load_config()
    assert cfg == RunConfig()
    assert cfg.dims(DESK_GRID) == DESK_GRID
    assert cfg.search_config(DESK_GRID).p_accept == 0.02


def test_file_then_flags(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('seed = 3\ngrid = "2x5x5"\ntolerance = 1\nspacing_max = 3\n')
    cfg = load_config(path, {"seed": 9, "kernel": None})
    assert cfg.seed == 9
    assert cfg.dims(DESK_GRID) == GridDims(2, 5, 5)
    assert cfg.tolerance == 1.0 and isinstance(cfg.tolerance, float)
    assert cfg.ranges.spacing == (0.5, 3.0)


@pytest.mark.parametrize("text", ['seed = "x"\n', "holdout = 0\n", 'kernel = "fft"\n', "seed = true\n",
                                  "spacing_min = -1\n", "nonsense = 1\n", "seed = \n"])
def test_bad_files(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text)
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.toml")


def test_hash_ignores_output_location():
    assert RunConfig(out="a").hash() == RunConfig(out="b").hash()
    assert RunConfig(seed=1).hash() != RunConfig(seed=2).hash()
