"""Observation serializers: descriptive sentences and compact token ids.

Two views of the same 25 features. The sentence form renders one template
per feature for logs and reports. The token form quantizes each feature
into an integer in [0, 300] and frames the 25 value tokens with [CLS] and
[SEP], giving a fixed 27-token sequence where position carries feature
identity. The token vocabulary therefore has 303 entries and no subword
machinery: one token per number means a small change in a value can only
ever move its token by the corresponding number of quantization bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .env import FEATURE_NAMES, N_FEATURES, Observation
from .errors import ConfigurationError, InputError

VALUE_TOKEN_MAX = 300          # value ids occupy 0..300 inclusive
CLS_ID = 301
SEP_ID = 302
VOCAB_SIZE = 303
SEQ_LEN = N_FEATURES + 2       # 27


@dataclass(frozen=True)
class FeatureRange:
    """Quantization bounds for one feature, in its own units."""

    feature: str
    vmin: float
    vmax: float

    def validate(self) -> None:
        if self.feature not in FEATURE_NAMES:
            raise ConfigurationError(f"unknown observation feature {self.feature!r}")
        if not (math.isfinite(self.vmin) and math.isfinite(self.vmax)):
            raise ConfigurationError(f"range bounds for {self.feature} must be finite")
        if not self.vmax > self.vmin:
            raise ConfigurationError(
                f"range for {self.feature} needs vmax > vmin, got [{self.vmin}, {self.vmax}]"
            )

    @property
    def width(self) -> float:
        return self.vmax - self.vmin


# Physical bounds used for quantization. Cumulative fields are sized to a
# generous season maximum (e.g. the costliest action on every one of up to
# 200 days) rather than a theoretical supremum; out-of-range values clamp.
_DEFAULT_RANGE_TABLE = (
    ("day_index", 0.0, 200.0),
    ("thermal_time", 0.0, 2000.0),
    ("stage_code", 0.0, 5.0),
    ("biomass", 0.0, 40000.0),
    ("lai", 0.0, 6.0),
    ("soil_water_fraction", 0.0, 1.0),
    ("soil_nitrate", 0.0, 400.0),
    ("cum_n_applied", 0.0, 3200.0),
    ("cum_irrigation", 0.0, 2400.0),
    ("rain_today", 0.0, 150.0),
    ("tmax", -5.0, 45.0),
    ("tmin", -15.0, 35.0),
    ("tmean", -10.0, 40.0),
    ("srad", 0.0, 40.0),
    ("et_today", 0.0, 15.0),
    ("drain_today", 0.0, 150.0),
    ("leach_today", 0.0, 50.0),
    ("cum_leach", 0.0, 400.0),
    ("water_stress", 0.0, 1.0),
    ("n_stress", 0.0, 1.0),
    ("cum_et", 0.0, 2000.0),
    ("cum_rain", 0.0, 3000.0),
    ("days_since_fert", 0.0, 200.0),
    ("days_since_irrig", 0.0, 200.0),
    ("cum_uptake", 0.0, 600.0),
)


def default_ranges() -> dict[str, FeatureRange]:
    return {name: FeatureRange(name, lo, hi) for name, lo, hi in _DEFAULT_RANGE_TABLE}


def validate_ranges(ranges: dict[str, FeatureRange]) -> None:
    """Check that a range table covers every feature exactly once."""
    missing = [name for name in FEATURE_NAMES if name not in ranges]
    if missing:
        raise ConfigurationError(f"feature ranges missing entries: {missing}")
    extra = [name for name in ranges if name not in FEATURE_NAMES]
    if extra:
        raise ConfigurationError(f"feature ranges name unknown features: {extra}")
    for r in ranges.values():
        r.validate()


def normalize_value(value: float, feature_range: FeatureRange) -> int:
    """Quantize one value into its integer token id in [0, 300].

    Values outside the range clamp to the endpoints, so quantization is
    total (noisy observations never crash an episode). Monotone
    nondecreasing in the value by construction.
    """
    if not math.isfinite(value):
        raise InputError(f"cannot tokenize non-finite value for {feature_range.feature}")
    fraction = (value - feature_range.vmin) / feature_range.width
    fraction = min(1.0, max(0.0, fraction))
    return int(math.floor(fraction * VALUE_TOKEN_MAX))


def dequantize_token(token: int, feature_range: FeatureRange) -> float:
    """Map a token back to a representative value (its bin midpoint).

    Recovers any in-range value to within half a bin, (vmax - vmin)/600.
    """
    if not 0 <= token <= VALUE_TOKEN_MAX:
        raise InputError(f"value token {token} outside [0, {VALUE_TOKEN_MAX}]")
    if token == VALUE_TOKEN_MAX:
        return feature_range.vmax
    return feature_range.vmin + (token + 0.5) * feature_range.width / VALUE_TOKEN_MAX


@dataclass(frozen=True)
class TokenSequence:
    """[CLS] + 25 value tokens (observation order) + [SEP]."""

    tokens: tuple[int, ...]

    def validate(self) -> None:
        if len(self.tokens) != SEQ_LEN:
            raise InputError(f"token sequence must have {SEQ_LEN} tokens, got {len(self.tokens)}")
        if self.tokens[0] != CLS_ID or self.tokens[-1] != SEP_ID:
            raise InputError("token sequence must start with CLS and end with SEP")
        for t in self.tokens[1:-1]:
            if not 0 <= t <= VALUE_TOKEN_MAX:
                raise InputError(f"value token {t} outside [0, {VALUE_TOKEN_MAX}]")

    def as_array(self) -> np.ndarray:
        return np.array(self.tokens, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(obs: Observation, ranges: dict[str, FeatureRange] | None = None) -> TokenSequence:
    """Serialize an observation to its 27-token training representation."""
    if ranges is None:
        ranges = default_ranges()
    validate_ranges(ranges)
    values = [
        normalize_value(getattr(obs, name), ranges[name]) for name in FEATURE_NAMES
    ]
    return TokenSequence(tokens=(CLS_ID, *values, SEP_ID))


def _load_templates() -> dict[str, str]:
    text = resources.files("croprl.data").joinpath("sentences.cfg").read_text("utf-8")
    templates: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"sentences.cfg line {lineno}: expected 'name = template'")
        name, template = (part.strip() for part in line.split("=", 1))
        if name not in FEATURE_NAMES:
            raise ConfigurationError(f"sentences.cfg line {lineno}: unknown feature {name!r}")
        if "{value}" not in template:
            raise ConfigurationError(f"sentences.cfg line {lineno}: template lacks {{value}}")
        templates[name] = template
    missing = [name for name in FEATURE_NAMES if name not in templates]
    if missing:
        raise ConfigurationError(f"sentences.cfg lacks templates for: {missing}")
    return templates


_TEMPLATES: dict[str, str] | None = None


def sentence_templates() -> dict[str, str]:
    global _TEMPLATES
    if _TEMPLATES is None:
        _TEMPLATES = _load_templates()
    return _TEMPLATES


def to_sentences(obs: Observation) -> str:
    """Render the observation as 25 fixed-template sentences, one per feature."""
    obs.validate()
    templates = sentence_templates()
    parts = [
        templates[name].format(value=f"{getattr(obs, name):.1f}")
        for name in FEATURE_NAMES
    ]
    return " ".join(parts)
