import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nswatermark.config import ConfigError, RunConfig, WatermarkConfig, dump_config, key_from_env, load_config


def test_empty_file_gives_defaults(tmp_path):
    f = tmp_path / "c.conf"
    f.write_text("")
    cfg = load_config(f)
    w = cfg.watermark
    assert (w.gamma, w.Z, w.alpha, w.beta, w.T_max, w.beam_k) == (0.01, 4.0, 1.0, 0.0, 100, 1)
    assert cfg.mode == "ns"


def test_comments_and_values(tmp_path):
    f = tmp_path / "c.conf"
    f.write_text("# header\ngamma = 0.1  # inline\n\nkey = 0xDEADBEEF\nmode=soft\ndelta = 6\ndelta_grid = 1,2,3\n")
    cfg = load_config(f)
    assert cfg.watermark.gamma == 0.1 and cfg.watermark.key == 0xDEADBEEF
    assert cfg.mode == "soft" and cfg.delta == 6.0
    assert cfg.watermark.delta_grid == (1.0, 2.0, 3.0)


def test_typo_names_the_line(tmp_path):
    f = tmp_path / "c.conf"
    f.write_text("z = 4\ngama = 0.1\n")
    with pytest.raises(ConfigError, match=r":2: unknown key 'gama'"):
        load_config(f)


def test_bad_value_and_missing_equals(tmp_path):
    f = tmp_path / "c.conf"
    f.write_text("tmax = many\n")
    with pytest.raises(ConfigError, match=":1:"):
        load_config(f)
    f.write_text("gamma 0.1\n")
    with pytest.raises(ConfigError, match=":1: expected"):
        load_config(f)


@pytest.mark.parametrize(
    "text, message",
    [
        ("gamma = 1.5", "gamma must be in"),
        ("gamma = 0", "gamma must be in"),
        ("beta = -0.1", "beta"),
        ("alpha = 0.5", "alpha"),
        ("tmax = 1", "tmax"),
        ("beam = 0", "beam"),
        ("delta_grid = 3,2", "ascending"),
        ("mode = wild", "unknown mode"),
        ("model = a\nendpoint = h:1", "mutually exclusive"),
        ("gamma = 0.6\nbeta = 0.5", "gamma \\+ beta"),
    ],
)
def test_invariants_checked_at_load(tmp_path, text, message):
    f = tmp_path / "c.conf"
    f.write_text(text + "\n")
    with pytest.raises(ConfigError, match=message):
        load_config(f)


def test_round_trip_is_canonical(tmp_path):
    f = tmp_path / "c.conf"
    f.write_text("key=ff\n  gamma=0.001\nmodel = m.json # comment\n")
    once = dump_config(load_config(f))
    g = tmp_path / "d.conf"
    g.write_text(once)
    assert dump_config(load_config(g)) == once
    assert "key = 0x00000000000000ff" in once


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.0001, 0.5),
    st.floats(0, 8),
    st.floats(0, 0.4),
    st.integers(2, 500),
    st.integers(1, 8),
    st.integers(0, 2**64 - 1),
)
def test_dump_load_identity(tmp_path_factory, gamma, Z, beta, T_max, k, key):
    if gamma + beta >= 1:
        return
    cfg = RunConfig(WatermarkConfig(gamma=gamma, Z=Z, beta=beta, T_max=T_max, beam_k=k, key=key))
    f = tmp_path_factory.mktemp("c") / "c.conf"
    f.write_text(dump_config(cfg))
    assert load_config(f) == cfg


def test_key_from_env(monkeypatch):
    monkeypatch.delenv("NSWM_KEY", raising=False)
    assert key_from_env(7) == 7
    monkeypatch.setenv("NSWM_KEY", "0x10")
    assert key_from_env() == 16
