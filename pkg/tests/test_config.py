import pytest

from croprl.config import (
    PROFILES,
    build_run_config,
    defaults_path,
    load_raw,
    load_run_config,
    merged_raw,
)
from croprl.env import N_LEVELS, REWARD_PRESETS, W_LEVELS
from croprl.errors import ConfigurationError, InputError
from croprl.serialization import (
    CLS_ID,
    SEP_ID,
    VALUE_TOKEN_MAX,
    default_ranges,
)


def test_defaults_file_builds_a_valid_run_config():
    rc = load_run_config()
    assert rc.profile.name == "florida_like"
    assert rc.weights == REWARD_PRESETS["RF1"]
    assert rc.agent.kind == "transformer"
    assert rc.train.gamma == 0.99
    assert rc.train.episodes == 200
    assert rc.seeds == (0, 1, 2, 3, 4)
    assert rc.noise is None
    assert rc.architectures == ("mlp3", "mlp5", "transformer")


def test_defaults_reward_presets_match_env_table():
    raw = load_raw(defaults_path())
    for label, weights in REWARD_PRESETS.items():
        cells = tuple(float(x) for x in raw["rewards"][label.lower()].split())
        assert cells == (weights.w1, weights.w2, weights.w3, weights.w4), label


def test_defaults_action_grid_matches_env():
    raw = load_raw(defaults_path())
    assert tuple(float(x) for x in raw["actions"]["n_levels"].split()) == N_LEVELS
    assert tuple(float(x) for x in raw["actions"]["w_levels"].split()) == W_LEVELS


def test_defaults_token_ids_match_serializer():
    raw = load_raw(defaults_path())
    assert int(raw["tokens"]["value_max"]) == VALUE_TOKEN_MAX
    assert int(raw["tokens"]["cls"]) == CLS_ID
    assert int(raw["tokens"]["sep"]) == SEP_ID


def test_defaults_ranges_match_serializer_table():
    rc = load_run_config()
    assert rc.ranges == default_ranges()


def test_user_file_overrides_defaults(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[run]\nprofile = zaragoza_like\nreward = RF5\n"
                   "[train]\nepisodes = 3\n")
    rc = load_run_config(cfg)
    assert rc.profile.name == "zaragoza_like"
    assert rc.weights.label == "RF5"
    assert rc.weights.w4 == 5.0
    assert rc.train.episodes == 3
    assert rc.train.gamma == 0.99  # untouched default


def test_include_later_file_wins(tmp_path):
    (tmp_path / "base.cfg").write_text("[train]\nepisodes = 9\nlr = 2e-4\n")
    (tmp_path / "child.cfg").write_text("include base.cfg\n[train]\nlr = 7e-4\n")
    raw = load_raw(tmp_path / "child.cfg")
    assert raw["train"] == {"episodes": "9", "lr": "7e-4"}


def test_include_cycle_detected(tmp_path):
    (tmp_path / "a.cfg").write_text("include b.cfg\n")
    (tmp_path / "b.cfg").write_text("include a.cfg\n")
    with pytest.raises(ConfigurationError, match="cycle"):
        load_raw(tmp_path / "a.cfg")


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(InputError, match="nowhere.cfg"):
        load_raw(tmp_path / "nowhere.cfg")


def test_syntax_errors_carry_line_numbers(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[train]\nepisodes\n")
    with pytest.raises(ConfigurationError, match=r"bad\.cfg:2"):
        load_raw(cfg)
    cfg.write_text("episodes = 3\n")
    with pytest.raises(ConfigurationError, match="before any"):
        load_raw(cfg)
    cfg.write_text("[train\n")
    with pytest.raises(ConfigurationError, match="malformed section"):
        load_raw(cfg)
    cfg.write_text("[train]\n = 3\n")
    with pytest.raises(ConfigurationError, match="empty key"):
        load_raw(cfg)
    cfg.write_text("include\n")
    with pytest.raises(ConfigurationError, match=r"include\b"):
        load_raw(cfg)


def test_type_errors_name_section_and_key(tmp_path):
    cfg = tmp_path / "types.cfg"
    cfg.write_text("[train]\nepisodes = soon\n")
    with pytest.raises(ConfigurationError, match=r"\[train\] episodes"):
        load_run_config(cfg)
    cfg.write_text("[train]\ndouble_dqn = perhaps\n")
    with pytest.raises(ConfigurationError, match="not a boolean"):
        load_run_config(cfg)
    cfg.write_text("[train]\nlr = fast\n")
    with pytest.raises(ConfigurationError, match=r"\[train\] lr"):
        load_run_config(cfg)


def test_unknown_names_list_alternatives(tmp_path):
    cfg = tmp_path / "u.cfg"
    cfg.write_text("[run]\nprofile = mars_like\n")
    with pytest.raises(ConfigurationError, match="zaragoza_like"):
        load_run_config(cfg)
    cfg.write_text("[run]\nreward = RF9\n")
    with pytest.raises(ConfigurationError, match="RF9"):
        load_run_config(cfg)
    cfg.write_text("[agent]\nkind = resnet\n")
    with pytest.raises(ConfigurationError, match="transformer"):
        load_run_config(cfg)
    cfg.write_text("[run]\narchitectures = mlp3 resnet\n")
    with pytest.raises(ConfigurationError, match="architectures"):
        load_run_config(cfg)


def test_custom_reward_weights(tmp_path):
    cfg = tmp_path / "w.cfg"
    cfg.write_text("[run]\nreward = custom\n[rewards]\ncustom = 0.2 0.5 0.9 2.0\n")
    rc = load_run_config(cfg)
    assert (rc.weights.w1, rc.weights.w2, rc.weights.w3, rc.weights.w4) == \
        (0.2, 0.5, 0.9, 2.0)
    cfg.write_text("[run]\nreward = custom\n[rewards]\ncustom = 0.2 0.5\n")
    with pytest.raises(ConfigurationError, match="4 weights"):
        load_run_config(cfg)


def test_noise_entries_parse_into_spec(tmp_path):
    cfg = tmp_path / "n.cfg"
    cfg.write_text("[noise]\nentries = soil_water_fraction:absolute_uniform:0.02; "
                   "srad:relative_uniform:0.1\n")
    rc = load_run_config(cfg)
    assert len(rc.noise.entries) == 2
    assert rc.noise.entries[0].feature == "soil_water_fraction"
    assert rc.noise.entries[1].magnitude == 0.1
    cfg.write_text("[noise]\nentries = srad-relative-0.1\n")
    with pytest.raises(ConfigurationError, match="feature:kind:magnitude"):
        load_run_config(cfg)
    cfg.write_text("[noise]\nentries = srad:relative_uniform:much\n")
    with pytest.raises(ConfigurationError, match="much"):
        load_run_config(cfg)


def test_output_dir_falls_back_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CROPRL_OUT", str(tmp_path / "envout"))
    rc = load_run_config()
    assert rc.out_dir == str(tmp_path / "envout")
    monkeypatch.delenv("CROPRL_OUT")
    assert load_run_config().out_dir == "runs"
    cfg = tmp_path / "o.cfg"
    cfg.write_text("[run]\nout = explicit\n")
    monkeypatch.setenv("CROPRL_OUT", "ignored")
    assert load_run_config(cfg).out_dir == "explicit"


def test_structural_validation(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("[run]\nseeds =\n")
    with pytest.raises(ConfigurationError, match="seeds"):
        load_run_config(cfg)
    cfg.write_text("[run]\nworkers = 0\n")
    with pytest.raises(ConfigurationError, match="workers"):
        load_run_config(cfg)
    cfg.write_text("[noise]\nruns = 0\n")
    with pytest.raises(ConfigurationError, match="runs"):
        load_run_config(cfg)
    cfg.write_text("[ranges]\nlai = 0\n")
    with pytest.raises(ConfigurationError, match="two numbers"):
        load_run_config(cfg)


def test_merged_raw_applies_overrides():
    raw = merged_raw(overrides={"train": {"seed": "9"}})
    assert raw["train"]["seed"] == "9"
    rc = build_run_config(raw)
    assert rc.train.seed == 9


def test_profiles_table_is_complete():
    for name, builder in PROFILES.items():
        assert builder().name == name
