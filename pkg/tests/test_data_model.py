import csv

import pytest

from conftest import make_record, make_series, month_seq
from malaria_forecast.data_model import (
    BURUNDI_REDISTRICTING,
    BURUNDI_REDISTRICTING_GROUPS,
    COUNTRY_NAME,
    NEW_PROVINCES,
    OLD_PROVINCES,
    Dataset,
    MonthKey,
    MonthlyRecord,
    RedistrictingMap,
    aggregate_provinces,
    expand_population,
    ingest_csv,
    read_map_csv,
    to_country_level,
    write_csv,
)
from malaria_forecast.errors import CoverageError, DataError


class TestMonthKey:
    def test_ordering(self):
        assert MonthKey(2010, 1) < MonthKey(2010, 2) < MonthKey(2011, 1)

    def test_next_rollover(self):
        assert MonthKey(2010, 12).next() == MonthKey(2011, 1)
        assert MonthKey(2010, 3).next() == MonthKey(2010, 4)

    def test_invalid_month(self):
        with pytest.raises(DataError):
            MonthKey(2010, 13)

    def test_str(self):
        assert str(MonthKey(2010, 3)) == "2010-03"


class TestMonthlyRecord:
    def test_rejects_nonpositive_population(self):
        with pytest.raises(DataError):
            make_record("A", MonthKey(2010, 1), population=0)

    def test_rejects_negative_cases(self):
        with pytest.raises(DataError):
            make_record("A", MonthKey(2010, 1), cases=-1)

    def test_rejects_humidity_out_of_range(self):
        with pytest.raises(DataError):
            make_record("A", MonthKey(2010, 1), hum=101.0)

    def test_climate_may_be_missing(self):
        rec = MonthlyRecord("A", MonthKey(2010, 1), None, None, None, 10, 0)
        assert rec.has_missing_climate()


class TestDatasetInvariants:
    def test_detects_month_gap(self):
        records = make_series("A", 3)
        del records[1]
        with pytest.raises(DataError, match="gap.*A"):
            Dataset("old", {"A": records})

    def test_detects_mismatched_ranges(self):
        with pytest.raises(DataError, match="different month ranges"):
            Dataset("old", {"A": make_series("A", 3), "B": make_series("B", 4)})

    def test_rejects_wrong_scheme(self):
        with pytest.raises(DataError):
            Dataset("weird", {"A": make_series("A", 3)})


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


HEADER = "province,year,month,temp_mean,rainfall,rel_humidity,population,cases".split(",")


class TestIngest:
    def test_well_formed_two_provinces(self, tmp_path):
        rows = []
        for name in ("Alpha", "Beta"):
            for month in (1, 2, 3):
                rows.append([name, 2010, month, 20.5, 100.0, 70.0, 1000, 10])
        path = tmp_path / "data.csv"
        write_rows(path, HEADER, rows)
        ds = ingest_csv(path)
        assert sum(len(s) for s in ds.series.values()) == 6
        assert ds.provinces == ["Alpha", "Beta"]

    def test_month_gap_names_province(self, tmp_path):
        rows = [
            ["Alpha", 2010, 1, 20.0, 90.0, 70.0, 1000, 5],
            ["Alpha", 2010, 3, 20.0, 90.0, 70.0, 1000, 5],
        ]
        path = tmp_path / "gap.csv"
        write_rows(path, HEADER, rows)
        with pytest.raises(DataError, match="gap.*Alpha"):
            ingest_csv(path)

    def test_empty_rainfall_becomes_missing(self, tmp_path):
        path = tmp_path / "missing.csv"
        write_rows(path, HEADER, [["Alpha", 2010, 1, 20.0, "", 70.0, 1000, 5]])
        ds = ingest_csv(path)
        rec = ds.series["Alpha"][0]
        assert rec.rainfall is None
        assert rec.temp_mean == 20.0

    def test_min_max_temperature_is_averaged(self, tmp_path):
        header = "province,year,month,temp_min,temp_max,rainfall,rel_humidity,population,cases".split(",")
        path = tmp_path / "minmax.csv"
        write_rows(path, header, [["Alpha", 2010, 1, 15.0, 25.0, 90.0, 70.0, 1000, 5]])
        ds = ingest_csv(path)
        assert ds.series["Alpha"][0].temp_mean == 20.0

    def test_unknown_province_with_explicit_list(self, tmp_path):
        path = tmp_path / "unknown.csv"
        write_rows(path, HEADER, [["Nowhere", 2010, 1, 20.0, 90.0, 70.0, 1000, 5]])
        with pytest.raises(DataError, match="line 2.*Nowhere"):
            ingest_csv(path, known_provinces=["Alpha"])

    def test_malformed_cell_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_rows(
            path,
            HEADER,
            [
                ["Alpha", 2010, 1, 20.0, 90.0, 70.0, 1000, 5],
                ["Alpha", 2010, 2, "oops", 90.0, 70.0, 1000, 5],
            ],
        )
        with pytest.raises(DataError, match="line 3"):
            ingest_csv(path)

    def test_negative_cases_reports_line(self, tmp_path):
        path = tmp_path / "neg.csv"
        write_rows(path, HEADER, [["Alpha", 2010, 1, 20.0, 90.0, 70.0, 1000, -2]])
        with pytest.raises(DataError, match="line 2"):
            ingest_csv(path)

    def test_unrecognized_header(self, tmp_path):
        path = tmp_path / "hdr.csv"
        write_rows(path, ["province", "cases"], [["Alpha", 1]])
        with pytest.raises(DataError, match="header"):
            ingest_csv(path)

    def test_round_trip(self, tmp_path, two_province_dataset):
        path = tmp_path / "round.csv"
        write_csv(two_province_dataset, path)
        again = ingest_csv(path)
        assert again.series == two_province_dataset.series

    def test_accepts_open_stream(self, tmp_path, two_province_dataset):
        path = tmp_path / "stream.csv"
        write_csv(two_province_dataset, path)
        with open(path, "r", encoding="utf-8", newline="") as fh:
            again = ingest_csv(fh)
        assert again.series == two_province_dataset.series


class TestExpandPopulation:
    def test_constant_within_year(self):
        months = month_seq(2010, 1, 12)
        out = expand_population({("A", 2010): 100}, months)
        assert all(out[("A", m)] == 100 for m in months)

    def test_year_boundary(self):
        months = month_seq(2010, 12, 2)
        out = expand_population({("A", 2010): 100, ("A", 2011): 110}, months)
        assert out[("A", MonthKey(2010, 12))] == 100
        assert out[("A", MonthKey(2011, 1))] == 110

    def test_single_month(self):
        out = expand_population({("A", 2012): 7}, [MonthKey(2012, 6)])
        assert out == {("A", MonthKey(2012, 6)): 7}

    def test_missing_year(self):
        with pytest.raises(CoverageError, match="2011"):
            expand_population({("A", 2010): 100}, month_seq(2010, 12, 2))


class TestRedistrictingMap:
    def test_builtin_covers_18_onto_5(self):
        assert len(BURUNDI_REDISTRICTING.mapping) == 18
        assert BURUNDI_REDISTRICTING.new_provinces() == NEW_PROVINCES
        assert len(OLD_PROVINCES) == 18

    def test_builtin_group_sizes(self):
        sizes = sorted(len(m) for m in BURUNDI_REDISTRICTING_GROUPS.values())
        assert sizes == [3, 3, 4, 4, 4]

    def test_map_csv_round_trip(self, tmp_path):
        path = tmp_path / "map.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["old_province", "new_province"])
            for old, new in sorted(BURUNDI_REDISTRICTING.mapping.items()):
                writer.writerow([old, new])
        again = read_map_csv(path)
        assert again.mapping == BURUNDI_REDISTRICTING.mapping

    def test_map_csv_rejects_duplicates(self, tmp_path):
        path = tmp_path / "dup.csv"
        with open(path, "w", newline="") as fh:
            fh.write("old_province,new_province\nA,X\nA,Y\n")
        with pytest.raises(DataError, match="duplicate"):
            read_map_csv(path)


def grouped_dataset(case_sets, temp_sets, n_months=3):
    series = {}
    for idx, (cases, temp) in enumerate(zip(case_sets, temp_sets)):
        name = f"P{idx}"
        series[name] = make_series(name, n_months, cases=[cases] * n_months, temp=temp)
    return Dataset("old", series)


class TestAggregation:
    def test_cases_sum(self):
        ds = grouped_dataset([10, 20, 30, 40], [20.0, 20.0, 20.0, 20.0])
        mapping = RedistrictingMap({f"P{i}": "Merged" for i in range(4)})
        out = aggregate_provinces(ds, mapping)
        assert all(rec.cases == 100 for rec in out.series["Merged"])

    def test_climate_mean(self):
        ds = grouped_dataset([1, 1, 1, 1], [20.0, 22.0, 24.0, 26.0])
        mapping = RedistrictingMap({f"P{i}": "Merged" for i in range(4)})
        out = aggregate_provinces(ds, mapping)
        assert all(rec.temp_mean == 23.0 for rec in out.series["Merged"])

    def test_singleton_group_is_identity(self):
        ds = grouped_dataset([10, 20], [20.0, 25.0])
        mapping = RedistrictingMap({"P0": "A", "P1": "B"})
        out = aggregate_provinces(ds, mapping)
        for new, old in (("A", "P0"), ("B", "P1")):
            for rec_new, rec_old in zip(out.series[new], ds.series[old]):
                assert rec_new.cases == rec_old.cases
                assert rec_new.temp_mean == rec_old.temp_mean
                assert rec_new.population == rec_old.population

    def test_refuses_missing_climate(self):
        records = make_series("P0", 3)
        broken = records[1]
        records[1] = MonthlyRecord(
            broken.province, broken.month, None, broken.rainfall, broken.rel_humidity,
            broken.population, broken.cases,
        )
        ds = Dataset("old", {"P0": records})
        with pytest.raises(DataError, match="imputation"):
            aggregate_provinces(ds, RedistrictingMap({"P0": "A"}))

    def test_unmapped_province(self):
        ds = grouped_dataset([1], [20.0])
        with pytest.raises(DataError, match="redistricting map"):
            aggregate_provinces(ds, RedistrictingMap({"Somewhere": "A"}))

    def test_missing_mapped_province(self):
        ds = grouped_dataset([1], [20.0])
        mapping = RedistrictingMap({"P0": "A", "P9": "A"})
        with pytest.raises(CoverageError, match="P9"):
            aggregate_provinces(ds, mapping)

    def test_permutation_invariance(self):
        ds = grouped_dataset([3, 7, 11], [19.0, 23.0, 27.0])
        fwd = RedistrictingMap({"P0": "A", "P1": "A", "P2": "A"})
        rev = RedistrictingMap({"P2": "A", "P1": "A", "P0": "A"})
        out1 = aggregate_provinces(ds, fwd)
        out2 = aggregate_provinces(ds, rev)
        assert out1.series == out2.series


class TestCountryLevel:
    def make_new_dataset(self):
        series = {}
        hums = [50.0, 60.0, 70.0, 80.0, 90.0]
        for name, hum in zip(NEW_PROVINCES, hums):
            series[name] = make_series(name, 4, cases=[100] * 4, hum=hum)
        return Dataset("new", series)

    def test_cases_sum(self):
        country = to_country_level(self.make_new_dataset())
        assert all(rec.cases == 500 for rec in country.series[COUNTRY_NAME])

    def test_humidity_mean(self):
        country = to_country_level(self.make_new_dataset())
        assert all(rec.rel_humidity == 70.0 for rec in country.series[COUNTRY_NAME])

    def test_month_count_preserved(self):
        ds = self.make_new_dataset()
        country = to_country_level(ds)
        assert len(country.series[COUNTRY_NAME]) == len(ds.months())


class TestConservation:
    def test_cases_conserved_through_both_stages(self):
        # Direct recomputation oracle: monthly sums straight from the raw records.
        from malaria_forecast.synthgen import SynthConfig, generate

        truth, _ = generate(SynthConfig(seed=5, months=30, missing_rate=0.0))
        new = aggregate_provinces(truth, BURUNDI_REDISTRICTING)
        country = to_country_level(new)
        months = truth.months()
        for i in range(len(months)):
            old_sum = sum(truth.series[p][i].cases for p in truth.provinces)
            new_sum = sum(new.series[p][i].cases for p in new.provinces)
            country_cases = country.series[COUNTRY_NAME][i].cases
            assert old_sum == new_sum == country_cases
            old_pop = sum(truth.series[p][i].population for p in truth.provinces)
            assert country.series[COUNTRY_NAME][i].population == old_pop
