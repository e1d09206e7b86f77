"""Episodic management environment over the crop simulator.

The environment exposes a reset/step interface on daily timesteps. Each
step applies one fertilizer/irrigation action from a 5x5 grid, advances
the simulator, and pays a reward that prices nitrogen, water, nitrate
leaching, and (on the harvest day) yield revenue.

Observations are 25 named real features in a fixed, documented order; the
serialization module depends on that order. Measurement noise, when
configured, perturbs only what the agent sees: rewards, info totals, and
the simulator trajectory always use ground truth.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError, ProtocolError
from .simulator import (
    SimState,
    SiteProfile,
    Stage,
    finalize_harvest,
    initial_state,
    step_day,
)
from .weather import WeatherDay, WeatherParams, generate_weather

N_LEVELS = (0.0, 40.0, 80.0, 120.0, 160.0)   # kg/ha per application
W_LEVELS = (0.0, 6.0, 12.0, 18.0, 24.0)      # L/m2 == mm per application
N_ACTIONS = len(N_LEVELS) * len(W_LEVELS)

_NOISE_STREAM = 2  # keeps noise draws independent of the weather stream


@dataclass(frozen=True)
class ManagementAction:
    """One cell of the 25-way management grid."""

    index: int
    n_amount: float  # kg/ha
    w_amount: float  # L/m2

    def validate(self) -> None:
        if not 0 <= self.index < N_ACTIONS:
            raise InputError(f"action index {self.index} outside [0, {N_ACTIONS - 1}]")
        if decode_action(self.index) != self:
            raise InputError(
                f"action fields ({self.n_amount}, {self.w_amount}) do not match "
                f"index {self.index}"
            )


def decode_action(index: int) -> ManagementAction:
    """Map an integer in [0, 24] to its (N, W) amounts.

    The grid is enumerated row-major in nitrogen then water:
    index = 5 * (n_amount / 40) + (w_amount / 6).
    """
    index = int(index)
    if not 0 <= index < N_ACTIONS:
        raise InputError(f"action index {index} outside [0, {N_ACTIONS - 1}]")
    return ManagementAction(
        index=index,
        n_amount=N_LEVELS[index // len(W_LEVELS)],
        w_amount=W_LEVELS[index % len(W_LEVELS)],
    )


def all_actions() -> list[ManagementAction]:
    return [decode_action(i) for i in range(N_ACTIONS)]


@dataclass(frozen=True)
class RewardWeights:
    """Prices on yield, nitrogen, water, and leached nitrate, in $ per unit."""

    w1: float  # $ per kg/ha of yield
    w2: float  # $ per kg/ha of applied N
    w3: float  # $ per L/m2 of irrigation
    w4: float  # $ per kg/ha of leached N
    label: str = ""

    def validate(self) -> None:
        for name in ("w1", "w2", "w3", "w4"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"{name} must be finite and >= 0, got {value}")


REWARD_PRESETS = {
    "RF1": RewardWeights(0.158, 0.79, 1.1, 0.0, label="RF1"),
    "RF2": RewardWeights(0.158, 0.79, 0.0, 0.0, label="RF2"),
    "RF3": RewardWeights(0.158, 0.0, 1.1, 0.0, label="RF3"),
    "RF4": RewardWeights(0.158, 1.58, 1.1, 0.0, label="RF4"),
    "RF5": RewardWeights(0.2, 1.0, 1.0, 5.0, label="RF5"),
}


def reward_preset(label: str) -> RewardWeights:
    try:
        return REWARD_PRESETS[label]
    except KeyError:
        raise ConfigurationError(
            f"unknown reward preset {label!r}; expected one of {sorted(REWARD_PRESETS)}"
        ) from None


def daily_reward(
    n_t: float,
    w_t: float,
    leach_t: float,
    yield_if_harvest: float | None,
    weights: RewardWeights,
) -> float:
    """One day's reward in $.

    Management costs and the leaching penalty are charged every day; yield
    revenue is paid once, on the harvest day, by passing the final yield.
    """
    for name, value in (("n_t", n_t), ("w_t", w_t), ("leach_t", leach_t)):
        if value < 0:
            raise InputError(f"{name} must be >= 0, got {value}")
    if yield_if_harvest is not None and yield_if_harvest < 0:
        raise InputError(f"yield must be >= 0, got {yield_if_harvest}")
    reward = -weights.w2 * n_t - weights.w3 * w_t - weights.w4 * leach_t
    if yield_if_harvest is not None:
        reward += weights.w1 * yield_if_harvest
    return reward


# Canonical observation layout. Everything downstream (tokenization,
# sentence rendering, MLP input scaling) indexes into this order.
FEATURE_NAMES = (
    "day_index",            # days since sowing
    "thermal_time",         # degree-days
    "stage_code",           # 0..5 phenology code
    "biomass",              # kg/ha
    "lai",                  # m2/m2
    "soil_water_fraction",  # fraction of bucket capacity
    "soil_nitrate",         # kg/ha
    "cum_n_applied",        # kg/ha
    "cum_irrigation",       # L/m2
    "rain_today",           # mm
    "tmax",                 # deg C
    "tmin",                 # deg C
    "tmean",                # deg C
    "srad",                 # MJ/m2
    "et_today",             # mm
    "drain_today",          # mm
    "leach_today",          # kg/ha
    "cum_leach",            # kg/ha
    "water_stress",         # 0..1, 1 = unstressed
    "n_stress",             # 0..1, 1 = unstressed
    "cum_et",               # mm
    "cum_rain",             # mm
    "days_since_fert",      # days
    "days_since_irrig",     # days
    "cum_uptake",           # kg/ha
)

N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class Observation:
    """What the agent sees each morning, before choosing an action.

    Weather fields describe the current day (the day about to be managed);
    flux fields (et_today, drain_today, leach_today) describe the previous
    day and are zero on day 0. days_since_fert / days_since_irrig count
    days since the last nonzero application, zero meaning "applied
    yesterday" (and also zero on day 0, before any application).
    """

    day_index: float
    thermal_time: float
    stage_code: float
    biomass: float
    lai: float
    soil_water_fraction: float
    soil_nitrate: float
    cum_n_applied: float
    cum_irrigation: float
    rain_today: float
    tmax: float
    tmin: float
    tmean: float
    srad: float
    et_today: float
    drain_today: float
    leach_today: float
    cum_leach: float
    water_stress: float
    n_stress: float
    cum_et: float
    cum_rain: float
    days_since_fert: float
    days_since_irrig: float
    cum_uptake: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "Observation":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (N_FEATURES,):
            raise InputError(f"expected {N_FEATURES} features, got shape {values.shape}")
        return cls(**{name: float(v) for name, v in zip(FEATURE_NAMES, values)})

    def validate(self) -> None:
        for name in FEATURE_NAMES:
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"non-finite observation feature: {name}")


NOISE_KINDS = ("absolute_uniform", "relative_uniform", "rain_accuracy")


@dataclass(frozen=True)
class NoiseEntry:
    """Measurement noise on one observation feature."""

    feature: str
    kind: str
    magnitude: float

    def validate(self) -> None:
        if self.feature not in FEATURE_NAMES:
            raise ConfigurationError(f"unknown observation feature {self.feature!r}")
        if self.kind not in NOISE_KINDS:
            raise ConfigurationError(
                f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}"
            )
        if self.magnitude < 0 or not math.isfinite(self.magnitude):
            raise ConfigurationError(f"noise magnitude must be finite and >= 0")
        if self.kind == "rain_accuracy":
            if self.feature != "rain_today":
                raise ConfigurationError("rain_accuracy noise applies only to rain_today")
            if not 0.0 <= self.magnitude <= 1.0:
                raise ConfigurationError("rain accuracy must be a probability in [0, 1]")


@dataclass(frozen=True)
class NoiseSpec:
    entries: tuple[NoiseEntry, ...] = ()

    def validate(self) -> None:
        for entry in self.entries:
            entry.validate()

    def __bool__(self) -> bool:
        return bool(self.entries)


def inject_noise(
    obs: Observation,
    spec: NoiseSpec,
    rng: np.random.Generator,
    rain_params: WeatherParams | None = None,
) -> Observation:
    """Perturb the targeted features of one observation.

    absolute_uniform adds Uniform[-m, +m]; relative_uniform multiplies by
    (1 + Uniform[-m, +m]); rain_accuracy keeps the true rainfall with
    probability m and otherwise substitutes an independent draw from the
    site's rain distribution (which requires ``rain_params``). Values are
    not clamped to physical ranges here; the token serializer clamps.
    """
    spec.validate()
    updates: dict[str, float] = {}
    for entry in spec.entries:
        value = getattr(obs, entry.feature)
        if entry.kind == "absolute_uniform":
            value = value + rng.uniform(-entry.magnitude, entry.magnitude)
        elif entry.kind == "relative_uniform":
            value = value * (1.0 + rng.uniform(-entry.magnitude, entry.magnitude))
        else:  # rain_accuracy
            if rain_params is None:
                raise ConfigurationError(
                    "rain_accuracy noise needs the site rain distribution"
                )
            if rng.random() >= entry.magnitude:
                wet = rng.random() < rain_params.wet_day_prob
                value = rng.exponential(rain_params.rain_wet_mean) if wet else 0.0
        updates[entry.feature] = value
    return dataclasses.replace(obs, **updates) if updates else obs


@dataclass(frozen=True)
class Transition:
    """One (s, a, r, s', done) tuple as stored for replay."""

    obs: Observation
    action: ManagementAction
    reward: float
    next_obs: Observation
    done: bool


@dataclass(frozen=True)
class EpisodeTotals:
    """Ground-truth running totals, exposed as the step info payload."""

    yield_final: float
    n_total: float
    irrigation_total: float
    leach_total: float
    reward_total: float
    days: int


class CropEnv:
    """Single-season management environment.

    Each instance is single-threaded and owns its simulator state, weather
    realization, and noise RNG; many instances can run side by side. An
    episode ends on the maturity day (when yield revenue is paid) or when
    the season runs out of days, whichever comes first.
    """

    def __init__(
        self,
        profile: SiteProfile,
        seed: int,
        weights: RewardWeights,
        noise: NoiseSpec | None = None,
        weather: list[WeatherDay] | None = None,
    ):
        profile.validate()
        weights.validate()
        if noise is not None:
            noise.validate()
        self.profile = profile
        self.weights = weights
        self.noise = noise
        self._seed = int(seed)
        self._fixed_weather = weather
        self._state: SimState | None = None
        self._done = True
        self.reset()

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    @property
    def done(self) -> bool:
        return self._done

    @property
    def day(self) -> int:
        """Index of the next day to be simulated."""
        return self._day

    @property
    def true_observation(self) -> Observation:
        """Last noise-free observation (equals the noisy one when noise is off)."""
        return self._true_obs

    def reset(self, seed: int | None = None) -> Observation:
        if seed is not None:
            self._seed = int(seed)
        self._weather = self._fixed_weather or generate_weather(
            self.profile.weather, self.profile.season_length, self._seed
        )
        self._noise_rng = np.random.default_rng(
            np.random.SeedSequence([self._seed, _NOISE_STREAM])
        )
        self._state = initial_state(self.profile)
        self._day = 0
        self._done = False
        self._days_since_fert = 0.0
        self._days_since_irrig = 0.0
        self._cum_et = 0.0
        self._cum_rain = 0.0
        self._reward_total = 0.0
        return self._observe()

    def step(self, action: ManagementAction | int):
        """Apply one grid action. Returns (obs, reward, done, totals)."""
        if isinstance(action, ManagementAction):
            action.validate()
        else:
            action = decode_action(action)
        return self.step_amounts(action.n_amount, action.w_amount)

    def step_amounts(self, n_amount: float, w_amount: float):
        """Apply exact amounts, on-grid or not (used by calendar baselines)."""
        if self._done:
            raise ProtocolError("step called on a finished episode")
        wd = self._weather[self._day]
        self._state = step_day(self._state, wd, float(n_amount), float(w_amount), self.profile)
        self._day += 1
        self._days_since_fert = 0.0 if n_amount > 0 else self._days_since_fert + 1.0
        self._days_since_irrig = 0.0 if w_amount > 0 else self._days_since_irrig + 1.0
        self._cum_et += self._state.today_et
        self._cum_rain += wd.rain

        harvested = self._state.stage == Stage.MATURITY
        self._done = harvested or self._day >= len(self._weather)
        if self._done and not harvested:
            # season ran out during grain fill: harvest what stands
            self._state = finalize_harvest(self._state, self.profile.crop)
            harvested = True
        reward = daily_reward(
            n_amount,
            w_amount,
            self._state.today_leach,
            self._state.yield_final if harvested else None,
            self.weights,
        )
        self._reward_total += reward
        return self._observe(), reward, self._done, self._totals()

    def _totals(self) -> EpisodeTotals:
        return EpisodeTotals(
            yield_final=self._state.yield_final,
            n_total=self._state.cum_n_applied,
            irrigation_total=self._state.cum_irrigation,
            leach_total=self._state.cum_leach,
            reward_total=self._reward_total,
            days=self._day,
        )

    def _observe(self) -> Observation:
        state = self._state
        # On the terminal day there is no next morning to forecast; repeat
        # the last day's weather so the observation stays well formed.
        wd = self._weather[min(self._day, len(self._weather) - 1)]
        obs = Observation(
            day_index=float(self._day),
            thermal_time=state.thermal_time,
            stage_code=float(state.stage),
            biomass=state.biomass,
            lai=state.lai,
            soil_water_fraction=state.soil_water / self.profile.soil_capacity,
            soil_nitrate=state.soil_nitrate,
            cum_n_applied=state.cum_n_applied,
            cum_irrigation=state.cum_irrigation,
            rain_today=wd.rain,
            tmax=wd.tmax,
            tmin=wd.tmin,
            tmean=0.5 * (wd.tmax + wd.tmin),
            srad=wd.srad,
            et_today=state.today_et,
            drain_today=state.today_drain,
            leach_today=state.today_leach,
            cum_leach=state.cum_leach,
            water_stress=state.water_stress,
            n_stress=state.n_stress,
            cum_et=self._cum_et,
            cum_rain=self._cum_rain,
            days_since_fert=self._days_since_fert,
            days_since_irrig=self._days_since_irrig,
            cum_uptake=state.cum_uptake,
        )
        self._true_obs = obs
        if self.noise:
            obs = inject_noise(obs, self.noise, self._noise_rng, self.profile.weather)
        return obs


def reset(
    profile: SiteProfile,
    seed: int,
    weights: RewardWeights,
    noise: NoiseSpec | None = None,
) -> tuple[CropEnv, Observation]:
    """Build a fresh environment and return it with its first observation."""
    env = CropEnv(profile, seed, weights, noise)
    return env, env.reset()
