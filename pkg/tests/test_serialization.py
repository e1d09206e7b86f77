"""Token and sentence serialization tests."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from croprl.env import FEATURE_NAMES, CropEnv, Observation, reward_preset
from croprl.errors import ConfigurationError, InputError
from croprl.serialization import (
    CLS_ID,
    SEP_ID,
    SEQ_LEN,
    VALUE_TOKEN_MAX,
    VOCAB_SIZE,
    FeatureRange,
    default_ranges,
    dequantize_token,
    normalize_value,
    sentence_templates,
    to_sentences,
    tokenize,
    validate_ranges,
)
from croprl.simulator import florida_like


def _obs_from_values(values) -> Observation:
    return Observation(**dict(zip(FEATURE_NAMES, values)))


def _zero_obs() -> Observation:
    return _obs_from_values([0.0] * 25)


finite_features = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
    min_size=25,
    max_size=25,
)


def test_vocab_constants():
    assert VALUE_TOKEN_MAX == 300
    assert CLS_ID == 301
    assert SEP_ID == 302
    assert VOCAB_SIZE == 303
    assert SEQ_LEN == 27


def test_normalize_endpoints_and_midpoint():
    r = FeatureRange("lai", 0.0, 6.0)
    assert normalize_value(0.0, r) == 0
    assert normalize_value(6.0, r) == 300
    assert normalize_value(3.0, r) == 150


def test_normalize_clamps_out_of_range():
    r = FeatureRange("tmax", -5.0, 45.0)
    assert normalize_value(-40.0, r) == 0
    assert normalize_value(99.0, r) == 300


def test_normalize_rejects_non_finite():
    r = FeatureRange("lai", 0.0, 6.0)
    with pytest.raises(InputError):
        normalize_value(float("nan"), r)
    with pytest.raises(InputError):
        normalize_value(float("inf"), r)


@settings(max_examples=300, deadline=None)
@given(
    a=st.floats(min_value=-50.0, max_value=50.0, allow_nan=False),
    b=st.floats(min_value=-50.0, max_value=50.0, allow_nan=False),
)
def test_normalize_is_monotone(a, b):
    r = FeatureRange("tmean", -10.0, 40.0)
    lo, hi = sorted((a, b))
    assert normalize_value(lo, r) <= normalize_value(hi, r)


@settings(max_examples=300, deadline=None)
@given(
    v=st.floats(min_value=0.0, max_value=6.0, allow_nan=False),
    w=st.floats(min_value=0.0, max_value=6.0, allow_nan=False),
)
def test_adjacent_value_stability(v, w):
    # token distance is bounded by the number of bins the values span
    r = FeatureRange("lai", 0.0, 6.0)
    jump = abs(normalize_value(v, r) - normalize_value(w, r))
    assert jump <= math.ceil(300.0 * abs(v - w) / r.width)


@settings(max_examples=300, deadline=None)
@given(v=st.floats(min_value=-5.0, max_value=45.0, allow_nan=False))
def test_dequantize_round_trip_bound(v):
    r = FeatureRange("tmax", -5.0, 45.0)
    recovered = dequantize_token(normalize_value(v, r), r)
    assert abs(recovered - v) <= r.width / 600.0 + 1e-12


def test_dequantize_rejects_bad_token():
    r = FeatureRange("lai", 0.0, 6.0)
    with pytest.raises(InputError):
        dequantize_token(301, r)
    with pytest.raises(InputError):
        dequantize_token(-1, r)


def test_default_ranges_cover_all_features():
    ranges = default_ranges()
    validate_ranges(ranges)
    assert set(ranges) == set(FEATURE_NAMES)
    assert ranges["soil_water_fraction"].vmax == 1.0
    assert ranges["stage_code"].vmax == 5.0


def test_validate_ranges_rejects_gaps_and_strangers():
    ranges = default_ranges()
    del ranges["lai"]
    with pytest.raises(ConfigurationError):
        validate_ranges(ranges)
    ranges = default_ranges()
    ranges["bogus"] = FeatureRange("lai", 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        validate_ranges(ranges)


def test_feature_range_validation():
    with pytest.raises(ConfigurationError):
        FeatureRange("lai", 2.0, 2.0).validate()
    with pytest.raises(ConfigurationError):
        FeatureRange("nope", 0.0, 1.0).validate()


@settings(max_examples=500, deadline=None)
@given(values=finite_features)
def test_tokenize_structure_property(values):
    seq = tokenize(_obs_from_values(values))
    seq.validate()
    assert len(seq) == 27
    assert seq.tokens[0] == CLS_ID
    assert seq.tokens[-1] == SEP_ID
    assert all(0 <= t <= VALUE_TOKEN_MAX for t in seq.tokens[1:-1])


def test_tokenize_at_minimums_gives_zeros():
    ranges = default_ranges()
    obs = _obs_from_values([ranges[name].vmin for name in FEATURE_NAMES])
    seq = tokenize(obs, ranges)
    assert seq.tokens == (CLS_ID, *([0] * 25), SEP_ID)


def test_tokenize_missing_range_is_configuration_error():
    ranges = default_ranges()
    del ranges["srad"]
    with pytest.raises(ConfigurationError):
        tokenize(_zero_obs(), ranges)


def test_sub_resolution_changes_do_not_move_tokens():
    ranges = default_ranges()
    env = CropEnv(florida_like(), seed=3, weights=reward_preset("RF1"))
    obs = env.reset()
    for _ in range(30):
        obs, _, _, _ = env.step(7)
    # nudge every feature by strictly less than one bin and away from the
    # bin edge it sits on
    nudged = {}
    for name in FEATURE_NAMES:
        r = ranges[name]
        value = getattr(obs, name)
        bin_width = r.width / 300.0
        token = normalize_value(value, r)
        left = r.vmin + token * bin_width
        inset = min(value - left, (left + bin_width) - value, bin_width / 4.0)
        nudged[name] = value + 0.9 * max(inset, 0.0)
    assert tokenize(obs, ranges) == tokenize(dataclasses.replace(obs, **nudged), ranges)


def test_token_array_dtype():
    arr = tokenize(_zero_obs()).as_array()
    assert arr.dtype == np.int64
    assert arr.shape == (27,)


def test_sentences_pinned_example():
    obs = dataclasses.replace(_zero_obs(), cum_n_applied=120.0)
    text = to_sentences(obs)
    assert "The cumulative nitrogen applied is 120.0 kilograms per hectare." in text


def test_sentences_cover_all_features_in_order():
    text = to_sentences(_zero_obs())
    sentences = [s for s in text.split(". ") if s]
    assert len(sentences) == 25
    assert text.count("{value}") == 0
    assert sentences[0].startswith("The day of the season is 0.0")
    assert text.rstrip().endswith("The cumulative nitrogen uptake is 0.0 kilograms per hectare.")


def test_sentences_deterministic():
    env = CropEnv(florida_like(), seed=14, weights=reward_preset("RF1"))
    obs = env.reset()
    assert to_sentences(obs) == to_sentences(obs)


def test_templates_each_end_with_period():
    for name, template in sentence_templates().items():
        assert template.endswith("."), name
        assert "{value}" in template
