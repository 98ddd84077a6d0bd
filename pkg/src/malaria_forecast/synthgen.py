"""Seeded synthetic surveillance datasets with known ground truth.

Generates Burundi-shaped monthly series for the 18 old provinces: seasonal
climate (period-12 sinusoids plus noise), annually constant populations, and
case counts driven by population and 1-2 month lagged climate. A masked copy
with climate values removed completely at random accompanies the truth, so
imputation and forecasting can be scored against known values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .core_math import Rng
from .data_model import (
    OLD_PROVINCES,
    Dataset,
    MonthKey,
    MonthlyRecord,
    expand_population,
)
from .errors import ConfigError

__all__ = ["SynthConfig", "ClimateParams", "generate", "case_rate"]


@dataclass(frozen=True)
class ClimateParams:
    """Per-province seasonal parameters: level, amplitude, phase (months)."""

    temp_mean: float
    temp_amp: float
    temp_phase: float
    rain_mean: float
    rain_amp: float
    rain_phase: float
    hum_mean: float
    hum_amp: float
    hum_phase: float


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for one synthetic dataset.

    ``case_noise`` interpolates between the deterministic case rate (0.0) and
    full Poisson sampling (1.0); counts stay integral and non-negative either
    way. ``rain_weight``/``temp_weight`` act on rainfall lagged one month and
    temperature lagged two months. With all noise at zero, next-month cases
    are an exact function of the current covariates.
    """

    seed: int = 0
    months: int = 156
    start_year: int = 2010
    start_month: int = 1
    provinces: tuple[str, ...] = tuple(OLD_PROVINCES)
    missing_rate: float = 0.05
    climate_noise: float = 1.0
    case_noise: float = 1.0
    baseline: float = 0.004
    rain_weight: float = 0.35
    temp_weight: float = 0.2
    pop_growth: float = 0.02
    climate_params: dict[str, ClimateParams] | None = field(default=None)

    def validate(self):
        if self.months < 22:
            raise ConfigError(f"months must be >= 22, got {self.months}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError(f"missing_rate must be in [0, 1), got {self.missing_rate}")
        if self.climate_noise < 0 or self.case_noise < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.baseline <= 0:
            raise ConfigError(f"baseline incidence must be positive, got {self.baseline}")
        if not self.provinces:
            raise ConfigError("province list must be non-empty")
        for name in ("rain_weight", "temp_weight", "pop_growth"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        MonthKey(self.start_year, self.start_month)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SynthConfig":
        """Build from a flat key-value mapping (strings allowed for values)."""
        kwargs = {}
        casts = {f.name: f.type for f in fields(cls)}
        for key, raw in mapping.items():
            if key not in casts:
                raise ConfigError(f"unknown synth config key {key!r}")
            if key in ("seed", "months", "start_year", "start_month"):
                kwargs[key] = int(raw)
            elif key in ("provinces", "climate_params"):
                raise ConfigError(f"{key} cannot be set from a key-value file")
            else:
                kwargs[key] = float(raw)
        return cls(**kwargs)


def _draw_climate_params(rng: Rng) -> ClimateParams:
    return ClimateParams(
        temp_mean=rng.uniform(18.0, 24.0),
        temp_amp=rng.uniform(2.0, 4.0),
        temp_phase=rng.uniform(0.0, 12.0),
        rain_mean=rng.uniform(90.0, 140.0),
        rain_amp=rng.uniform(30.0, 60.0),
        rain_phase=rng.uniform(0.0, 12.0),
        hum_mean=rng.uniform(60.0, 80.0),
        hum_amp=rng.uniform(5.0, 12.0),
        hum_phase=rng.uniform(0.0, 12.0),
    )


def _season(level: float, amp: float, phase: float, t: int) -> float:
    return level + amp * math.sin(2.0 * math.pi * (t + phase) / 12.0)


def case_rate(
    cfg: SynthConfig,
    params: ClimateParams,
    population: int,
    rain_lag1: float | None,
    temp_lag2: float | None,
) -> float:
    """Deterministic incidence rate for one province-month.

    Lagged climate enters as a standardized anomaly of the seasonal signal;
    unavailable lags (series start) contribute zero.
    """
    z_rain = 0.0
    if rain_lag1 is not None and params.rain_amp > 0:
        z_rain = (rain_lag1 - params.rain_mean) / (params.rain_amp / math.sqrt(2.0))
    z_temp = 0.0
    if temp_lag2 is not None and params.temp_amp > 0:
        z_temp = (temp_lag2 - params.temp_mean) / (params.temp_amp / math.sqrt(2.0))
    return (
        cfg.baseline
        * population
        * math.exp(cfg.rain_weight * z_rain + cfg.temp_weight * z_temp)
    )


def generate(cfg: SynthConfig) -> tuple[Dataset, Dataset]:
    """Produce ``(truth, masked)`` datasets for the configured provinces.

    Both datasets share population and case columns; the masked copy has
    climate cells removed uniformly at random at ``cfg.missing_rate``.
    Identical configs produce bit-identical output.
    """
    cfg.validate()
    root = Rng(cfg.seed)
    r_params, r_climate, r_cases, r_mask = root.split(4)

    months = [MonthKey(cfg.start_year, cfg.start_month)]
    while len(months) < cfg.months:
        months.append(months[-1].next())
    years = sorted({m.year for m in months})

    climate_params = {}
    annual_pop: dict[tuple[str, int], int] = {}
    for province in cfg.provinces:
        if cfg.climate_params and province in cfg.climate_params:
            climate_params[province] = cfg.climate_params[province]
            _draw_climate_params(r_params)  # keep the stream layout stable
        else:
            climate_params[province] = _draw_climate_params(r_params)
        base = r_params.uniform(250_000.0, 950_000.0)
        for year in years:
            grown = base * (1.0 + cfg.pop_growth) ** (year - cfg.start_year)
            annual_pop[(province, year)] = max(1, round(grown))
    monthly_pop = expand_population(annual_pop, months)

    truth_series: dict[str, list[MonthlyRecord]] = {}
    masked_series: dict[str, list[MonthlyRecord]] = {}
    for province in cfg.provinces:
        p = climate_params[province]
        temps, rains, hums = [], [], []
        for t in range(cfg.months):
            noise_t = r_climate.normal(0.0, 1.0)
            noise_r = r_climate.normal(0.0, 1.0)
            noise_h = r_climate.normal(0.0, 1.0)
            temps.append(_season(p.temp_mean, p.temp_amp, p.temp_phase, t) + cfg.climate_noise * 0.4 * noise_t)
            rains.append(max(0.0, _season(p.rain_mean, p.rain_amp, p.rain_phase, t) + cfg.climate_noise * 8.0 * noise_r))
            hums.append(min(100.0, max(0.0, _season(p.hum_mean, p.hum_amp, p.hum_phase, t) + cfg.climate_noise * 2.0 * noise_h)))

        truth_records = []
        masked_records = []
        for t, month in enumerate(months):
            population = monthly_pop[(province, month)]
            rate = case_rate(
                cfg,
                p,
                population,
                rains[t - 1] if t >= 1 else None,
                temps[t - 2] if t >= 2 else None,
            )
            cases = round(rate)
            if cfg.case_noise > 0:
                drawn = int(r_cases.poisson(rate))
                cases = round(rate + cfg.case_noise * (drawn - rate))
            cases = max(0, cases)

            truth_records.append(
                MonthlyRecord(province, month, temps[t], rains[t], hums[t], population, cases)
            )
            keep_t = r_mask.uniform(0.0, 1.0) >= cfg.missing_rate
            keep_r = r_mask.uniform(0.0, 1.0) >= cfg.missing_rate
            keep_h = r_mask.uniform(0.0, 1.0) >= cfg.missing_rate
            masked_records.append(
                MonthlyRecord(
                    province,
                    month,
                    temps[t] if keep_t else None,
                    rains[t] if keep_r else None,
                    hums[t] if keep_h else None,
                    population,
                    cases,
                )
            )
        truth_series[province] = truth_records
        masked_series[province] = masked_records

    return Dataset("old", truth_series), Dataset("old", masked_series)
