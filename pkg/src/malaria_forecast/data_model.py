"""Monthly province records, CSV ingestion, and administrative aggregation.

Burundi's 18 former provinces were regrouped into 5 (Bujumbura, Gitega,
Buhumuza, Butanyerera, Burunga). Aggregation combines member series with the
arithmetic mean for climate fields and the sum for population and malaria
cases; the same rules collapse the 5 provinces into one country-level series.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import CoverageError, DataError

__all__ = [
    "MonthKey",
    "MonthlyRecord",
    "RedistrictingMap",
    "Dataset",
    "BURUNDI_REDISTRICTING",
    "OLD_PROVINCES",
    "NEW_PROVINCES",
    "COUNTRY_NAME",
    "ingest_csv",
    "write_csv",
    "read_map_csv",
    "expand_population",
    "aggregate_provinces",
    "to_country_level",
]

COUNTRY_NAME = "Burundi"

CSV_HEADER = [
    "province",
    "year",
    "month",
    "temp_mean",
    "rainfall",
    "rel_humidity",
    "population",
    "cases",
]
# Alternative ingest layout: raw min/max temperatures instead of the mean.
CSV_HEADER_MINMAX = [
    "province",
    "year",
    "month",
    "temp_min",
    "temp_max",
    "rainfall",
    "rel_humidity",
    "population",
    "cases",
]


@dataclass(frozen=True, order=True)
class MonthKey:
    """A calendar month; totally ordered, with gap detection via ``next``."""

    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise DataError(f"month must be in 1..12, got {self.month}")

    def next(self) -> "MonthKey":
        if self.month == 12:
            return MonthKey(self.year + 1, 1)
        return MonthKey(self.year, self.month + 1)

    def __str__(self):
        return f"{self.year:04d}-{self.month:02d}"


def _check_climate(name: str, value, lo=None, hi=None):
    if value is None:
        return None
    value = float(value)
    if not math.isfinite(value):
        raise DataError(f"{name} must be finite, got {value}")
    if lo is not None and value < lo or hi is not None and value > hi:
        raise DataError(f"{name} out of range [{lo}, {hi}]: {value}")
    return value


@dataclass(frozen=True)
class MonthlyRecord:
    """One province-month observation. Only climate fields may be missing."""

    province: str
    month: MonthKey
    temp_mean: float | None
    rainfall: float | None
    rel_humidity: float | None
    population: int
    cases: int

    def __post_init__(self):
        if not self.province:
            raise DataError("province name must be non-empty")
        object.__setattr__(self, "temp_mean", _check_climate("temp_mean", self.temp_mean))
        object.__setattr__(self, "rainfall", _check_climate("rainfall", self.rainfall))
        object.__setattr__(
            self, "rel_humidity", _check_climate("rel_humidity", self.rel_humidity, 0.0, 100.0)
        )
        if self.population <= 0:
            raise DataError(f"population must be > 0, got {self.population}")
        if self.cases < 0:
            raise DataError(f"cases must be >= 0, got {self.cases}")

    def has_missing_climate(self) -> bool:
        return self.temp_mean is None or self.rainfall is None or self.rel_humidity is None


# The five new provinces and their former members.
BURUNDI_REDISTRICTING_GROUPS = {
    "Bujumbura": ["Bujumbura Mairie", "Bujumbura Rural", "Bubanza", "Cibitoke"],
    "Gitega": ["Gitega", "Mwaro", "Karuzi", "Muramvya"],
    "Buhumuza": ["Cankuzo", "Muyinga", "Ruyigi"],
    "Butanyerera": ["Kirundo", "Ngozi", "Kayanza"],
    "Burunga": ["Bururi", "Makamba", "Rumonge", "Rutana"],
}

NEW_PROVINCES = sorted(BURUNDI_REDISTRICTING_GROUPS)
OLD_PROVINCES = sorted(
    old for members in BURUNDI_REDISTRICTING_GROUPS.values() for old in members
)


class RedistrictingMap:
    """Total mapping from old provinces onto a smaller set of new provinces."""

    def __init__(self, mapping: Mapping[str, str]):
        if not mapping:
            raise DataError("redistricting map must not be empty")
        self.mapping = dict(mapping)

    def new_provinces(self) -> list[str]:
        return sorted(set(self.mapping.values()))

    def members(self, new_province: str) -> list[str]:
        return sorted(old for old, new in self.mapping.items() if new == new_province)

    def __contains__(self, old_province: str) -> bool:
        return old_province in self.mapping


BURUNDI_REDISTRICTING = RedistrictingMap(
    {old: new for new, members in BURUNDI_REDISTRICTING_GROUPS.items() for old in members}
)


class Dataset:
    """Chronologically sorted province series sharing one month range.

    ``scheme`` records which administrative level the series are on:
    ``old`` (pre-reform), ``new`` (five provinces), or ``country``.
    """

    def __init__(self, scheme: str, series: Mapping[str, Sequence[MonthlyRecord]]):
        if scheme not in ("old", "new", "country"):
            raise DataError(f"unknown scheme {scheme!r}")
        if not series:
            raise DataError("dataset must contain at least one province")
        self.scheme = scheme
        self.series = {name: list(records) for name, records in series.items()}
        self._validate()

    def _validate(self):
        ranges = set()
        for name, records in self.series.items():
            if not records:
                raise DataError(f"province {name} has no records")
            for rec in records:
                if rec.province != name:
                    raise DataError(
                        f"record for {rec.province!r} filed under {name!r}"
                    )
            for prev, cur in zip(records, records[1:]):
                if cur.month <= prev.month:
                    raise DataError(
                        f"months not strictly increasing for {name} at {cur.month}"
                    )
                if cur.month != prev.month.next():
                    raise DataError(
                        f"month gap for province {name} between {prev.month} and {cur.month}"
                    )
            ranges.add((records[0].month, records[-1].month))
        if len(ranges) > 1:
            raise DataError(f"provinces cover different month ranges: {sorted(ranges)}")

    @property
    def provinces(self) -> list[str]:
        return sorted(self.series)

    def months(self) -> list[MonthKey]:
        first = next(iter(self.series.values()))
        return [rec.month for rec in first]

    def month_range(self) -> tuple[MonthKey, MonthKey]:
        months = self.months()
        return months[0], months[-1]

    def has_missing_climate(self) -> bool:
        return any(
            rec.has_missing_climate() for records in self.series.values() for rec in records
        )


def _infer_scheme(provinces: Iterable[str]) -> str:
    names = set(provinces)
    if names == set(NEW_PROVINCES):
        return "new"
    if names == {COUNTRY_NAME}:
        return "country"
    return "old"


def _parse_cell(raw: str, kind: str, column: str, line_no: int):
    raw = raw.strip()
    if raw == "":
        if kind == "climate":
            return None
        raise DataError(f"line {line_no}: empty {column} cell")
    try:
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise DataError(f"line {line_no}: malformed {column} cell {raw!r}") from None


def ingest_csv(source, known_provinces: Iterable[str] | None = None, scheme: str | None = None) -> Dataset:
    """Read a monthly dataset CSV from a path or an open text stream.

    Accepts either the ``temp_mean`` header or the ``temp_min,temp_max``
    variant (the two are averaged). Empty climate cells become missing
    values. Errors carry the offending 1-based file line number.
    """
    if hasattr(source, "read"):
        return _ingest_rows(source, source, known_provinces, scheme)
    with open(source, "r", encoding="utf-8", newline="") as fh:
        return _ingest_rows(fh, source, known_provinces, scheme)


def _ingest_rows(fh, path, known_provinces, scheme) -> Dataset:
    known = set(known_provinces) if known_provinces is not None else None
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    header = [h.strip() for h in header]
    if header == CSV_HEADER:
        minmax = False
    elif header == CSV_HEADER_MINMAX:
        minmax = True
    else:
        raise DataError(f"{path}: unrecognized header {header!r}")

    series: dict[str, list[MonthlyRecord]] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"line {line_no}: expected {len(header)} cells, got {len(row)}")
        province = row[0].strip()
        if not province:
            raise DataError(f"line {line_no}: empty province cell")
        if known is not None and province not in known:
            raise DataError(f"line {line_no}: unknown province {province!r}")
        year = _parse_cell(row[1], "int", "year", line_no)
        month = _parse_cell(row[2], "int", "month", line_no)
        if minmax:
            tmin = _parse_cell(row[3], "climate", "temp_min", line_no)
            tmax = _parse_cell(row[4], "climate", "temp_max", line_no)
            if (tmin is None) != (tmax is None):
                raise DataError(
                    f"line {line_no}: temp_min and temp_max must be both present or both empty"
                )
            temp = None if tmin is None else (tmin + tmax) / 2.0
            rest = row[5:]
        else:
            temp = _parse_cell(row[3], "climate", "temp_mean", line_no)
            rest = row[4:]
        rainfall = _parse_cell(rest[0], "climate", "rainfall", line_no)
        humidity = _parse_cell(rest[1], "climate", "rel_humidity", line_no)
        population = _parse_cell(rest[2], "int", "population", line_no)
        cases = _parse_cell(rest[3], "int", "cases", line_no)
        try:
            month_key = MonthKey(year, month)
            record = MonthlyRecord(
                province, month_key, temp, rainfall, humidity, population, cases
            )
        except DataError as exc:
            raise DataError(f"line {line_no}: {exc}") from None
        series.setdefault(province, []).append(record)

    if not series:
        raise DataError(f"{path}: no data rows")
    for records in series.values():
        records.sort(key=lambda r: r.month)
    return Dataset(scheme or _infer_scheme(series), series)


def _fmt_climate(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_csv(dataset: Dataset, path) -> None:
    """Emit a dataset in the canonical CSV layout, provinces sorted."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for province in dataset.provinces:
            for rec in dataset.series[province]:
                writer.writerow(
                    [
                        province,
                        rec.month.year,
                        rec.month.month,
                        _fmt_climate(rec.temp_mean),
                        _fmt_climate(rec.rainfall),
                        _fmt_climate(rec.rel_humidity),
                        rec.population,
                        rec.cases,
                    ]
                )


def read_map_csv(path) -> RedistrictingMap:
    """Read a two-column ``old_province,new_province`` mapping."""
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["old_province", "new_province"]:
            raise DataError(f"{path}: unrecognized map header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or not row[0].strip() or not row[1].strip():
                raise DataError(f"line {line_no}: malformed map row {row!r}")
            old = row[0].strip()
            if old in mapping:
                raise DataError(f"line {line_no}: duplicate old province {old!r}")
            mapping[old] = row[1].strip()
    return RedistrictingMap(mapping)


def expand_population(
    annual: Mapping[tuple[str, int], int], months: Sequence[MonthKey]
) -> dict[tuple[str, MonthKey], int]:
    """Spread annual population counts over months, constant within a year."""
    provinces = sorted({province for province, _ in annual})
    out: dict[tuple[str, MonthKey], int] = {}
    for province in provinces:
        for month in months:
            key = (province, month.year)
            if key not in annual:
                raise CoverageError(
                    f"no population for province {province} in year {month.year}"
                )
            out[(province, month)] = annual[key]
    return out


def _mean(values: Sequence[float]) -> float:
    return float(sum(values) / len(values))


def _combine(records: Sequence[MonthlyRecord], name: str) -> MonthlyRecord:
    for rec in records:
        if rec.has_missing_climate():
            raise DataError(
                f"missing climate value for {rec.province} at {rec.month}; "
                "run imputation before aggregating"
            )
    return MonthlyRecord(
        province=name,
        month=records[0].month,
        temp_mean=_mean([r.temp_mean for r in records]),
        rainfall=_mean([r.rainfall for r in records]),
        rel_humidity=_mean([r.rel_humidity for r in records]),
        population=sum(r.population for r in records),
        cases=sum(r.cases for r in records),
    )


def aggregate_provinces(dataset: Dataset, redistricting: RedistrictingMap) -> Dataset:
    """Regroup old provinces into the new scheme.

    Climate fields average over member provinces; population and cases sum.
    Members are combined in sorted order, so the result is exactly invariant
    to the ordering of the input mapping.
    """
    for province in dataset.provinces:
        if province not in redistricting:
            raise DataError(f"province {province!r} is not in the redistricting map")
    for old in redistricting.mapping:
        if old not in dataset.series:
            raise CoverageError(f"dataset is missing mapped province {old!r}")

    months = dataset.months()
    series: dict[str, list[MonthlyRecord]] = {}
    for new_province in redistricting.new_provinces():
        members = redistricting.members(new_province)
        rows = [dataset.series[m] for m in members]
        series[new_province] = [
            _combine([rows[j][i] for j in range(len(members))], new_province)
            for i in range(len(months))
        ]
    return Dataset("new", series)


def to_country_level(dataset: Dataset) -> Dataset:
    """Collapse province series into one national series (same combine rules)."""
    months = dataset.months()
    provinces = dataset.provinces
    rows = [dataset.series[p] for p in provinces]
    records = [
        _combine([rows[j][i] for j in range(len(provinces))], COUNTRY_NAME)
        for i in range(len(months))
    ]
    return Dataset("country", {COUNTRY_NAME: records})
