"""Daily-timestep maize crop and soil simulator.

A deliberately small process model: single-bucket soil water, single-pool
soil nitrate, thermal-time phenology, radiation-use-efficiency biomass
growth, and stress-weighted yield formation. Everything is driven by one
:func:`step_day` transition so that water and nitrogen mass balances close
exactly by construction.

State variables and units
-------------------------
- water in mm (1 L/m2 of irrigation == 1 mm of water, adopted throughout)
- nitrogen pools and flows in kg N/ha
- biomass and yield in kg/ha of dry matter
- thermal time in degree-days above the base temperature

The phenology scale runs sowing -> emergence -> vegetative -> flowering ->
grain_fill -> maturity on cumulative degree-days; the episode is over once
maturity is reached and the yield is formed on that day.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError, InputError, SimulationError
from .weather import WeatherDay, WeatherParams, generate_weather


class Stage(enum.IntEnum):
    SOWING = 0
    EMERGENCE = 1
    VEGETATIVE = 2
    FLOWERING = 3
    GRAIN_FILL = 4
    MATURITY = 5


@dataclass(frozen=True)
class SimParams:
    """Crop coefficients of the growth model. Defaults are maize-flavoured."""

    gdd_base: float = 8.0
    # cumulative degree-days at which each stage begins (sowing starts at 0)
    stage_thresholds: tuple[float, float, float, float, float] = (
        80.0,    # emergence
        400.0,   # vegetative
        800.0,   # flowering
        1100.0,  # grain fill
        1600.0,  # maturity
    )
    # crop coefficient per stage: initial, development, mid (x2), late; unused
    # after maturity because the season ends there
    kc: tuple[float, float, float, float, float, float] = (0.4, 0.8, 1.15, 1.15, 0.7, 0.0)
    # radiation use efficiency, kg/ha of biomass per MJ/m2 intercepted
    # (1.8 g/MJ expressed in field units)
    rue: float = 18.0
    extinction_coeff: float = 0.6
    lai_per_kg: float = 0.012
    lai_max: float = 6.0
    lai_initial: float = 0.05
    lai_senescence: float = 0.08  # per day during grain fill
    # fraction of new biomass partitioned to leaf area, by stage
    leaf_partition: tuple[float, float, float, float, float, float] = (
        0.0, 0.5, 0.35, 0.1, 0.0, 0.0,
    )
    n_demand_per_kg: float = 0.015
    harvest_index: float = 0.5

    def stage_for(self, thermal_time: float) -> Stage:
        stage = Stage.SOWING
        for i, threshold in enumerate(self.stage_thresholds):
            if thermal_time >= threshold:
                stage = Stage(i + 1)
        return stage

    def validate(self) -> None:
        if list(self.stage_thresholds) != sorted(self.stage_thresholds):
            raise ConfigurationError("stage_thresholds must be nondecreasing")
        if self.rue <= 0 or self.lai_max <= 0 or not 0 < self.harvest_index <= 1:
            raise ConfigurationError("invalid crop parameters")


@dataclass(frozen=True)
class SiteProfile:
    """Soil and climate description of one simulated site."""

    name: str
    soil_capacity: float          # mm of plant-available water the bucket holds
    initial_soil_water: float     # mm
    initial_soil_nitrate: float   # kg N/ha
    mineralization_rate: float    # kg N/ha/day released from organic matter
    leach_coeff: float            # fraction of nitrate exposed to drainage loss
    weather: WeatherParams
    season_length: int
    crop: SimParams = field(default_factory=SimParams)

    def validate(self) -> None:
        if self.soil_capacity <= 0:
            raise ConfigurationError("soil_capacity must be > 0")
        if not 0 <= self.initial_soil_water <= self.soil_capacity:
            raise ConfigurationError(
                "initial_soil_water must be in [0, soil_capacity]"
            )
        if self.initial_soil_nitrate < 0 or self.mineralization_rate < 0:
            raise ConfigurationError("nitrogen pools and rates must be >= 0")
        if not 0.0 <= self.leach_coeff <= 1.0:
            raise ConfigurationError("leach_coeff must be in [0, 1]")
        if self.season_length < 1:
            raise ConfigurationError("season_length must be >= 1")
        self.weather.validate()
        self.crop.validate()


def florida_like() -> SiteProfile:
    """Humid-subtropical default site: frequent rain, warm season."""
    return SiteProfile(
        name="florida_like",
        soil_capacity=150.0,
        initial_soil_water=90.0,
        initial_soil_nitrate=50.0,
        mineralization_rate=0.6,
        leach_coeff=0.25,
        weather=WeatherParams(
            tmin_mean=13.6, tmin_std=2.0,
            trange_mean=11.0, trange_std=1.5,
            srad_mean=18.0, srad_std=4.0,
            wet_day_prob=0.35, rain_wet_mean=12.0,
        ),
        season_length=150,
    )


def zaragoza_like() -> SiteProfile:
    """Semi-arid default site: sparse rain, irrigation-dependent."""
    return SiteProfile(
        name="zaragoza_like",
        soil_capacity=120.0,
        initial_soil_water=70.0,
        initial_soil_nitrate=120.0,
        mineralization_rate=1.3,
        leach_coeff=0.2,
        weather=WeatherParams(
            tmin_mean=11.3, tmin_std=2.0,
            trange_mean=12.0, trange_std=1.5,
            srad_mean=20.0, srad_std=4.5,
            wet_day_prob=0.12, rain_wet_mean=8.0,
        ),
        season_length=160,
    )


SITE_PROFILES = {"florida_like": florida_like, "zaragoza_like": zaragoza_like}


@dataclass(frozen=True)
class SimState:
    """Full state of one simulated field-day (end-of-day snapshot)."""

    day: int = 0
    thermal_time: float = 0.0
    stage: Stage = Stage.SOWING
    biomass: float = 0.0
    lai: float = 0.0
    soil_water: float = 0.0
    soil_nitrate: float = 0.0
    cum_n_applied: float = 0.0
    cum_irrigation: float = 0.0
    cum_leach: float = 0.0
    cum_uptake: float = 0.0
    today_et: float = 0.0
    today_drain: float = 0.0
    today_leach: float = 0.0
    water_stress: float = 1.0
    n_stress: float = 1.0
    yield_final: float = 0.0  # 0 until maturity
    # running mean ingredients for the grain stress factor (flowering window)
    flower_stress_sum: float = 0.0
    flower_days: int = 0


def initial_state(profile: SiteProfile) -> SimState:
    profile.validate()
    return SimState(
        soil_water=profile.initial_soil_water,
        soil_nitrate=profile.initial_soil_nitrate,
    )


def step_day(
    state: SimState,
    weather: WeatherDay,
    n_applied: float,
    irrigation: float,
    profile: SiteProfile,
) -> SimState:
    """Advance the field one day.

    The water balance is exact: new soil_water - old soil_water equals
    rain + irrigation - today_et - today_drain. The nitrogen balance is
    exact: new soil_nitrate - old soil_nitrate equals
    n_applied + mineralization - uptake - today_leach.
    """
    if state.stage == Stage.MATURITY:
        raise SimulationError("step_day called after maturity")
    if n_applied < 0 or irrigation < 0:
        raise InputError(
            f"management amounts must be >= 0, got N={n_applied}, W={irrigation}"
        )
    for name in ("tmax", "tmin", "srad", "rain"):
        if not math.isfinite(getattr(weather, name)):
            raise SimulationError(f"non-finite weather input: {name}")

    crop = profile.crop
    stage = state.stage
    tmean = 0.5 * (weather.tmax + weather.tmin)
    gdd = max(0.0, tmean - crop.gdd_base)

    # --- water bucket
    fw = min(1.0, max(0.0, state.soil_water / (0.5 * profile.soil_capacity)))
    et0 = max(0.0, 0.0135 * (tmean + 17.8) * (weather.srad / 2.45))
    inflow = weather.rain + irrigation
    et = min(et0 * crop.kc[stage] * fw, state.soil_water + inflow)
    drain = max(0.0, state.soil_water + inflow - et - profile.soil_capacity)
    soil_water = state.soil_water + inflow - et - drain

    # --- biomass growth with the more limiting of water / nitrogen stress
    growth_pot = crop.rue * weather.srad * (1.0 - math.exp(-crop.extinction_coeff * state.lai))
    demand = crop.n_demand_per_kg * growth_pot
    available_n = state.soil_nitrate + n_applied + profile.mineralization_rate
    uptake = min(available_n, demand)
    if demand <= 0.0:
        fn = 1.0
    else:
        fn = min(1.0, max(0.0, uptake / (demand + 1e-9)))
    growth = growth_pot * min(fw, fn)
    biomass = state.biomass + growth

    # --- nitrate pool: fertilizer and mineralization in, uptake out, then
    # drainage-coupled leaching on what remains
    n_after_uptake = available_n - uptake
    leach = profile.leach_coeff * n_after_uptake * min(1.0, drain / profile.soil_capacity)
    soil_nitrate = n_after_uptake - leach

    # --- canopy
    if stage == Stage.GRAIN_FILL:
        lai = max(0.0, state.lai - crop.lai_senescence)
    else:
        lai = min(crop.lai_max, state.lai + crop.lai_per_kg * growth * crop.leaf_partition[stage])

    thermal_time = state.thermal_time + gdd
    new_stage = crop.stage_for(thermal_time)
    if stage == Stage.SOWING and new_stage >= Stage.EMERGENCE:
        lai = max(lai, crop.lai_initial)

    flower_stress_sum = state.flower_stress_sum
    flower_days = state.flower_days
    if stage == Stage.FLOWERING:
        flower_stress_sum += min(fw, fn)
        flower_days += 1

    yield_final = state.yield_final
    if new_stage == Stage.MATURITY:
        grain_stress = flower_stress_sum / flower_days if flower_days > 0 else 1.0
        yield_final = crop.harvest_index * biomass * grain_stress

    return replace(
        state,
        day=state.day + 1,
        thermal_time=thermal_time,
        stage=new_stage,
        biomass=biomass,
        lai=lai,
        soil_water=soil_water,
        soil_nitrate=soil_nitrate,
        cum_n_applied=state.cum_n_applied + n_applied,
        cum_irrigation=state.cum_irrigation + irrigation,
        cum_leach=state.cum_leach + leach,
        cum_uptake=state.cum_uptake + uptake,
        today_et=et,
        today_drain=drain,
        today_leach=leach,
        water_stress=fw,
        n_stress=fn,
        yield_final=yield_final,
        flower_stress_sum=flower_stress_sum,
        flower_days=flower_days,
    )


def finalize_harvest(state: SimState, crop: SimParams | None = None) -> SimState:
    """Harvest a crop that ran out of season before thermal maturity.

    Uses the same grain formula as the maturity transition, so a season
    that ends during grain fill still produces a yield instead of zero.
    States that already carry a yield pass through unchanged.
    """
    crop = crop or SimParams()
    if state.stage == Stage.MATURITY or state.yield_final > 0.0:
        return state
    grain_stress = (
        state.flower_stress_sum / state.flower_days if state.flower_days > 0
        else 1.0
    )
    return replace(
        state,
        yield_final=crop.harvest_index * state.biomass * grain_stress,
    )


@dataclass(frozen=True)
class EpisodeTrace:
    """Everything one simulated season produced."""

    profile_name: str
    seed: int
    weather: list[WeatherDay]
    states: list[SimState]          # states[0] is the initial state
    n_applied: list[float]          # per executed day
    irrigation: list[float]

    @property
    def final(self) -> SimState:
        return self.states[-1]

    @property
    def n_total(self) -> float:
        return self.final.cum_n_applied

    @property
    def irrigation_total(self) -> float:
        return self.final.cum_irrigation

    @property
    def leach_total(self) -> float:
        return self.final.cum_leach

    @property
    def yield_final(self) -> float:
        return self.final.yield_final

    @property
    def length(self) -> int:
        return len(self.n_applied)


def run_episode(
    profile: SiteProfile,
    seed: int,
    schedule,
    weather: list[WeatherDay] | None = None,
) -> EpisodeTrace:
    """Run one season open-loop.

    ``schedule`` is either a list of (n_applied, irrigation) pairs covering at
    least ``season_length`` days, or a callable ``schedule(day, state) ->
    (n, irrigation)``. The episode stops at maturity or when the weather runs
    out, whichever comes first. Deterministic for fixed inputs.
    """
    profile.validate()
    if weather is None:
        weather = generate_weather(profile.weather, profile.season_length, seed)
    callback = callable(schedule)
    if not callback and len(schedule) < len(weather):
        raise InputError(
            f"schedule covers {len(schedule)} days, season needs {len(weather)}"
        )

    state = initial_state(profile)
    states = [state]
    applied_n: list[float] = []
    applied_w: list[float] = []
    for day, wd in enumerate(weather):
        n, w = schedule(day, state) if callback else schedule[day]
        if n < 0 or w < 0:
            raise InputError(f"schedule entry for day {day} is negative: ({n}, {w})")
        state = step_day(state, wd, float(n), float(w), profile)
        states.append(state)
        applied_n.append(float(n))
        applied_w.append(float(w))
        if state.stage == Stage.MATURITY:
            break
    if states[-1].stage != Stage.MATURITY:
        states[-1] = finalize_harvest(states[-1], profile.crop)
    return EpisodeTrace(profile.name, seed, weather, states, applied_n, applied_w)
