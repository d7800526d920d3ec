import pytest

from implicit_sdf.config import ConfigError, build_config, load_config_file


def test_defaults_validate():
    cfg = build_config("sdf-probe")
    assert cfg.iters == 10000 and cfg.batch_size == 512 and cfg.layers == 4 and cfg.width == 128
    assert build_config("theory-verify").seeds == 100


def test_overrides_beat_file_values():
    cfg = build_config("reconstruct", {"input": "a.xyz", "iters": 10}, {"iters": 20})
    assert cfg.iters == 20 and cfg.input == "a.xyz"


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="bogus: unknown key for reconstruct"):
        build_config("reconstruct", {"input": "a.xyz", "bogus": 1})


@pytest.mark.parametrize("key,value", [("lam", 0.0), ("tau", 0.5), ("iters", -1), ("resolution", 1)])
def test_out_of_range_values_are_named(key, value):
    with pytest.raises(ConfigError, match=f"^{key}:"):
        build_config("reconstruct", {"input": "a.xyz", key: value})


def test_type_mismatch_is_rejected():
    with pytest.raises(ConfigError, match="iters"):
        build_config("reconstruct", {"input": "a.xyz", "iters": "many"})
    with pytest.raises(ConfigError, match="iters"):
        build_config("reconstruct", {"input": "a.xyz", "iters": 1.5})


def test_integers_promote_to_floats():
    cfg = build_config("reconstruct", {"input": "a.xyz", "lam": 1})
    assert isinstance(cfg.lam, float)


def test_interpolate_weights_must_sum_to_one():
    with pytest.raises(ConfigError, match="weights"):
        build_config("interpolate", {"checkpoint": "c", "latents": "l", "ids": ["a", "b"], "weights": [0.5, 0.6]})


def test_theory_eigvals_checked():
    with pytest.raises(ConfigError, match="eigvals"):
        build_config("theory-verify", {"dim": 2, "eigvals": [1.0, 0.5]})


def test_yaml_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("iters: 7\nlam: 0.2\n")
    assert load_config_file(path) == {"iters": 7, "lam": 0.2}
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config_file(path)
    path.write_text("a: [\n")
    with pytest.raises(ConfigError):
        load_config_file(path)
