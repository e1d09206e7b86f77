"""Run configuration: sectioned key=value files, includes, and RunConfig.

The file format is deliberately small:

    # comment
    include base.cfg
    [section]
    key = value

``include`` lines pull in another file (path relative to the including
file) before the including file's own assignments, so later files win
key by key. The shipped ``data/defaults.cfg`` is always loaded first and
carries every tuning constant, so any run can be described as a short
override file.
"""

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .agents import AGENT_KINDS, AgentConfig
from .dqn import TrainConfig
from .env import NoiseEntry, NoiseSpec, RewardWeights
from .errors import ConfigurationError, InputError
from .serialization import FeatureRange, validate_ranges
from .simulator import SiteProfile, florida_like, zaragoza_like

RawConfig = dict[str, dict[str, str]]

PROFILES = {"florida_like": florida_like, "zaragoza_like": zaragoza_like}


def _parse_file(path: Path, raw: RawConfig, seen: set) -> None:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    key = str(path.resolve())
    if key in seen:
        raise ConfigurationError(f"config include cycle at {path}")
    seen.add(key)

    section: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped == "include" or stripped.startswith("include "):
            target = stripped[len("include"):].strip()
            if not target:
                raise ConfigurationError(f"{path}:{lineno}: include needs a path")
            _parse_file(path.parent / target, raw, seen)
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]") or len(stripped) < 3:
                raise ConfigurationError(f"{path}:{lineno}: malformed section header {stripped!r}")
            section = stripped[1:-1].strip()
            raw.setdefault(section, {})
            continue
        if "=" not in stripped:
            raise ConfigurationError(
                f"{path}:{lineno}: expected 'key = value', got {stripped!r}"
            )
        if section is None:
            raise ConfigurationError(
                f"{path}:{lineno}: assignment before any [section] header"
            )
        name, _, value = stripped.partition("=")
        name = name.strip()
        if not name:
            raise ConfigurationError(f"{path}:{lineno}: empty key")
        raw[section][name] = value.strip()


def load_raw(path) -> RawConfig:
    """Parse one config file (plus its includes) into raw string values."""
    raw: RawConfig = {}
    _parse_file(Path(path), raw, set())
    return raw


def defaults_path() -> Path:
    return Path(resources.files("croprl").joinpath("data", "defaults.cfg"))


def merged_raw(user_path=None, overrides: RawConfig | None = None) -> RawConfig:
    """defaults.cfg, then the user file, then explicit overrides."""
    raw = load_raw(defaults_path())
    if user_path is not None:
        for section, entries in load_raw(user_path).items():
            raw.setdefault(section, {}).update(entries)
    for section, entries in (overrides or {}).items():
        raw.setdefault(section, {}).update(entries)
    return raw


class _Required:
    def __repr__(self):
        return "<required>"


_REQUIRED = _Required()


class _View:
    """Typed access to one raw config with section.key diagnostics."""

    def __init__(self, raw: RawConfig, origin: str = "config"):
        self.raw = raw
        self.origin = origin

    def _fetch(self, section: str, key: str, default):
        try:
            return self.raw[section][key]
        except KeyError:
            if default is not _REQUIRED:
                return default
            raise ConfigurationError(
                f"{self.origin}: missing [{section}] {key}"
            ) from None

    def text(self, section, key, default=_REQUIRED):
        return self._fetch(section, key, default)

    def _convert(self, section, key, value, kind, conv):
        try:
            return conv(value)
        except (TypeError, ValueError):
            raise ConfigurationError(
                f"{self.origin}: [{section}] {key}: {value!r} is not {kind}"
            ) from None

    def integer(self, section, key, default=_REQUIRED):
        value = self._fetch(section, key, default)
        if not isinstance(value, str):
            return value
        return self._convert(section, key, value, "an integer", int)

    def number(self, section, key, default=_REQUIRED):
        value = self._fetch(section, key, default)
        if not isinstance(value, str):
            return value
        return self._convert(section, key, value, "a number", float)

    def flag(self, section, key, default=_REQUIRED):
        value = self._fetch(section, key, default)
        if not isinstance(value, str):
            return value
        lowered = value.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ConfigurationError(
            f"{self.origin}: [{section}] {key}: {value!r} is not a boolean"
        )

    def numbers(self, section, key, default=_REQUIRED):
        value = self._fetch(section, key, default)
        if not isinstance(value, str):
            return value
        return tuple(
            self._convert(section, key, part, "a number", float)
            for part in value.split()
        )

    def integers(self, section, key, default=_REQUIRED):
        value = self._fetch(section, key, default)
        if not isinstance(value, str):
            return value
        return tuple(
            self._convert(section, key, part, "an integer", int)
            for part in value.split()
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything one command needs, resolved and validated."""

    profile: SiteProfile
    weights: RewardWeights
    agent: AgentConfig
    train: TrainConfig
    noise: NoiseSpec | None
    seeds: tuple[int, ...]
    eval_seeds: tuple[int, ...]
    out_dir: str
    workers: int
    architectures: tuple[str, ...]
    noise_runs: int
    noise_weather_seed: int
    ranges: dict[str, FeatureRange] = field(repr=False, default_factory=dict)
    raw: RawConfig = field(repr=False, default_factory=dict)


def _reward_weights(view: _View, label: str) -> RewardWeights:
    key = label.lower()
    values = view.numbers("rewards", key, default=None)
    if values is None:
        known = sorted(k.upper() for k in view.raw.get("rewards", {}))
        raise ConfigurationError(
            f"{view.origin}: reward preset {label!r} not defined; "
            f"known presets: {known}"
        )
    if len(values) != 4:
        raise ConfigurationError(
            f"{view.origin}: [rewards] {key} needs 4 weights, got {len(values)}"
        )
    weights = RewardWeights(*values, label=label.upper())
    weights.validate()
    return weights


def _noise_spec(view: _View) -> NoiseSpec | None:
    text = view.text("noise", "entries", default="")
    if not text:
        return None
    entries = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigurationError(
                f"{view.origin}: [noise] entries: {chunk!r} is not "
                "feature:kind:magnitude"
            )
        feature, kind, magnitude = (p.strip() for p in parts)
        try:
            mag = float(magnitude)
        except ValueError:
            raise ConfigurationError(
                f"{view.origin}: [noise] entries: magnitude {magnitude!r} "
                "is not a number"
            ) from None
        entries.append(NoiseEntry(feature, kind, mag))
    spec = NoiseSpec(tuple(entries))
    spec.validate()
    return spec


def _feature_ranges(view: _View) -> dict[str, FeatureRange]:
    section = view.raw.get("ranges", {})
    ranges = {}
    for feature in section:
        lo, hi = _pair(view, "ranges", feature)
        ranges[feature] = FeatureRange(feature, lo, hi)
    validate_ranges(ranges)
    return ranges


def _pair(view: _View, section: str, key: str) -> tuple[float, float]:
    values = view.numbers(section, key)
    if len(values) != 2:
        raise ConfigurationError(
            f"{view.origin}: [{section}] {key} needs two numbers, got {len(values)}"
        )
    return values


def build_run_config(raw: RawConfig, origin: str = "config") -> RunConfig:
    """Resolve raw strings into validated domain objects."""
    view = _View(raw, origin)

    profile_name = view.text("run", "profile")
    try:
        profile = PROFILES[profile_name]()
    except KeyError:
        raise ConfigurationError(
            f"{origin}: unknown profile {profile_name!r}; "
            f"known: {sorted(PROFILES)}"
        ) from None

    weights = _reward_weights(view, view.text("run", "reward"))

    kind = view.text("agent", "kind")
    if kind not in AGENT_KINDS:
        raise ConfigurationError(
            f"{origin}: [agent] kind: {kind!r} is not one of {AGENT_KINDS}"
        )
    agent = AgentConfig(
        kind=kind,
        encoder_dim=view.integer("agent", "encoder_dim"),
        encoder_layers=view.integer("agent", "encoder_layers"),
        heads=view.integer("agent", "heads"),
        ff_dim=view.integer("agent", "ff_dim"),
        head_dims=view.integers("agent", "head_dims"),
        mlp_hidden=view.integer("agent", "mlp_hidden"),
    )
    agent.validate()

    decay = view.integer("train", "epsilon_decay_episodes", default=None)
    min_buffer = view.integer("train", "min_buffer", default=None)
    train = TrainConfig(
        episodes=view.integer("train", "episodes"),
        gamma=view.number("train", "gamma"),
        lr=view.number("train", "lr"),
        batch_size=view.integer("train", "batch_size"),
        target_sync_interval=view.integer("train", "target_sync_interval"),
        epsilon_start=view.number("train", "epsilon_start"),
        epsilon_end=view.number("train", "epsilon_end"),
        epsilon_decay_episodes=decay,
        replay_capacity=view.integer("train", "replay_capacity"),
        seed=view.integer("train", "seed"),
        grad_clip=view.number("train", "grad_clip"),
        double_dqn=view.flag("train", "double_dqn"),
        reward_scale=view.number("train", "reward_scale"),
        min_buffer=min_buffer,
        eval_every=view.integer("train", "eval_every"),
        eval_episodes=view.integer("train", "eval_episodes"),
    )
    train.validate()

    out_dir = view.text("run", "out", default="") or os.environ.get(
        "CROPRL_OUT", "runs")

    config = RunConfig(
        profile=profile,
        weights=weights,
        agent=agent,
        train=train,
        noise=_noise_spec(view),
        seeds=view.integers("run", "seeds"),
        eval_seeds=view.integers("run", "eval_seeds"),
        out_dir=out_dir,
        workers=view.integer("run", "workers"),
        architectures=tuple(view.text("run", "architectures").split()),
        noise_runs=view.integer("noise", "runs"),
        noise_weather_seed=view.integer("noise", "weather_seed"),
        ranges=_feature_ranges(view),
        raw=raw,
    )
    if not config.seeds:
        raise ConfigurationError(f"{origin}: [run] seeds must not be empty")
    if config.workers < 1:
        raise ConfigurationError(f"{origin}: [run] workers must be >= 1")
    if config.noise_runs < 1:
        raise ConfigurationError(f"{origin}: [noise] runs must be >= 1")
    for arch in config.architectures:
        if arch not in AGENT_KINDS:
            raise ConfigurationError(
                f"{origin}: [run] architectures: {arch!r} is not one of {AGENT_KINDS}"
            )
    return config


def load_run_config(user_path=None, overrides: RawConfig | None = None) -> RunConfig:
    """Load defaults + optional user file + overrides into a RunConfig."""
    raw = merged_raw(user_path, overrides)
    origin = str(user_path) if user_path is not None else str(defaults_path())
    return build_run_config(raw, origin=origin)


__all__ = [
    "PROFILES",
    "RawConfig",
    "RunConfig",
    "build_run_config",
    "defaults_path",
    "load_raw",
    "load_run_config",
    "merged_raw",
]
