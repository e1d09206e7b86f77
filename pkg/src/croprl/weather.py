"""Seeded synthetic daily weather and CSV weather ingestion.

A site's weather is described by seasonal statistics (temperature means and
spreads, radiation mean and spread, wet-day probability and wet-day rain
mean). :func:`generate_weather` turns those statistics plus a seed into a
reproducible season of daily records; :func:`read_weather_csv` loads the same
records from a file instead.

Units: temperatures in degrees C, solar radiation in MJ/m2/day, rain in mm.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InputError


@dataclass(frozen=True)
class WeatherDay:
    """One day of weather forcing.

    ``day_index`` counts days since planting, starting at 0.
    """

    day_index: int
    tmax: float
    tmin: float
    srad: float
    rain: float

    def validate(self) -> None:
        for name in ("tmax", "tmin", "srad", "rain"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"weather day {self.day_index}: {name} is not finite")
        if self.tmax < self.tmin:
            raise InputError(
                f"weather day {self.day_index}: tmax {self.tmax} < tmin {self.tmin}"
            )
        if self.srad < 0:
            raise InputError(f"weather day {self.day_index}: srad {self.srad} < 0")
        if self.rain < 0:
            raise InputError(f"weather day {self.day_index}: rain {self.rain} < 0")


@dataclass(frozen=True)
class WeatherParams:
    """Seasonal statistics driving the synthetic generator.

    Daily minimum temperature is drawn as N(tmin_mean, tmin_std); the diurnal
    range as N(trange_mean, trange_std) floored at zero, so tmax >= tmin by
    construction. Radiation is N(srad_mean, srad_std) floored at zero. A day
    is wet with probability ``wet_day_prob`` and wet-day rain is exponential
    with mean ``rain_wet_mean`` mm.
    """

    tmin_mean: float
    tmin_std: float
    trange_mean: float
    trange_std: float
    srad_mean: float
    srad_std: float
    wet_day_prob: float
    rain_wet_mean: float

    @property
    def mean_daily_rain(self) -> float:
        """Configured seasonal mean of daily rain, mm/day."""
        return self.wet_day_prob * self.rain_wet_mean

    def validate(self) -> None:
        for name in ("tmin_std", "trange_std", "srad_std", "rain_wet_mean"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"weather parameter {name} must be >= 0")
        if not 0.0 <= self.wet_day_prob <= 1.0:
            raise ConfigurationError(
                f"wet_day_prob must be in [0, 1], got {self.wet_day_prob}"
            )
        for name in ("tmin_mean", "trange_mean", "srad_mean"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"weather parameter {name} is not finite")


def generate_weather(params: WeatherParams, season_length: int, seed: int) -> list[WeatherDay]:
    """Generate one season of daily weather, deterministic in (params, seed)."""
    params.validate()
    if season_length < 1:
        raise ConfigurationError(f"season_length must be >= 1, got {season_length}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _WEATHER_STREAM]))
    days = []
    for d in range(season_length):
        tmin = params.tmin_mean + params.tmin_std * rng.standard_normal()
        trange = max(0.0, params.trange_mean + params.trange_std * rng.standard_normal())
        srad = max(0.0, params.srad_mean + params.srad_std * rng.standard_normal())
        wet = rng.random() < params.wet_day_prob
        rain = float(rng.exponential(params.rain_wet_mean)) if wet else 0.0
        days.append(WeatherDay(d, tmin + trange, tmin, srad, rain))
    return days


_WEATHER_STREAM = 0  # stream tag keeping weather draws apart from other RNG users

_CSV_HEADER = ["day", "tmax_c", "tmin_c", "srad_mj", "rain_mm"]


def read_weather_csv(path: str | Path) -> list[WeatherDay]:
    """Load a weather season from CSV.

    Expected header: ``day,tmax_c,tmin_c,srad_mj,rain_mm``, one row per day,
    UTF-8 with LF line endings. Day indices must start at 0 and be contiguous.
    """
    path = Path(path)
    days: list[WeatherDay] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty weather file") from None
        if [h.strip() for h in header] != _CSV_HEADER:
            raise InputError(
                f"{path}: bad header {header!r}, expected {','.join(_CSV_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise InputError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                day = int(row[0])
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            if day != len(days):
                raise InputError(
                    f"{path}:{lineno}: day index {day} out of order (expected {len(days)})"
                )
            wd = WeatherDay(day, *values)
            try:
                wd.validate()
            except InputError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            days.append(wd)
    if not days:
        raise InputError(f"{path}: no weather rows")
    return days


def write_weather_csv(days: list[WeatherDay], path: str | Path) -> None:
    """Inverse of :func:`read_weather_csv`; used by tests and exports."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(_CSV_HEADER) + "\n")
        for d in days:
            fh.write(f"{d.day_index},{d.tmax!r},{d.tmin!r},{d.srad!r},{d.rain!r}\n")
