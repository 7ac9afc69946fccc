import datetime as dt
import io
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltu_eval.errors import EmptyDay, EmptyFile, InvalidWindow, MissingColumn, UnsortedInput
from ltu_eval.panel_ingest import (
    COVARIATE_FAMILIES,
    ContractRecord,
    ContractTable,
    ContractType,
    Education,
    FirstJobAge,
    Region,
    Sector,
    Sex,
    aggregate_cells,
    build_spells,
    daily_collapse,
    emit_contracts,
    ingest,
    parse_contracts,
    read_cells,
    read_contract_table,
    share_column,
    to_daynum,
    write_cells,
)
from ltu_eval.panel_ingest.records import CONTRACT_TYPES, EDUCATIONS, FIRST_JOB_AGES, REGIONS, SECTORS, SEXES

D = dt.date.fromisoformat


def rec(worker, start, end, ctype="permanent", region=Region.LAZIO, sex=Sex.FEMALE, education=Education.ELEMENTARY):
    return ContractRecord(
        worker_id=worker,
        firm_id="f1",
        start_date=D(start),
        end_date=D(end) if end else None,
        contract_type=ContractType(ctype),
        region=region,
        sector=Sector.SERVICES,
        sex=sex,
        education=education,
        first_job_age=FirstJobAge.AGE_20_24,
        foreign=False,
    )


def random_table(n_workers, seed, lo="2008-01-01", hi="2012-12-31"):
    """Random contract histories with overlaps, touching contracts and ongoing ends."""
    rng = np.random.default_rng(seed)
    lo_d, hi_d = to_daynum(lo), to_daynum(hi)
    rows = defaultdict(list)
    for w in range(n_workers):
        t = lo_d - int(rng.integers(0, 400))
        for _ in range(int(rng.integers(1, 7))):
            start = t + int(rng.integers(-30, 500))
            length = int(rng.integers(0, 400))
            ongoing = rng.random() < 0.05
            rows["worker_id"].append(f"w{w:05d}")
            rows["firm_id"].append(f"f{int(rng.integers(100))}")
            rows["start"].append(start)
            rows["end"].append(0 if ongoing else start + length)
            rows["ongoing"].append(ongoing)
            rows["contract_type"].append(int(rng.integers(len(CONTRACT_TYPES))))
            rows["region"].append(int(rng.integers(len(REGIONS))))
            rows["sector"].append(int(rng.integers(len(SECTORS))))
            rows["sex"].append(int(rng.integers(len(SEXES))))
            rows["education"].append(int(rng.integers(len(EDUCATIONS))))
            rows["first_job_age"].append(int(rng.integers(len(FIRST_JOB_AGES))))
            rows["foreign"].append(bool(rng.random() < 0.1))
            t = start + length
            if t > hi_d + 200:
                break
    return ContractTable(
        worker_id=np.array(rows["worker_id"], dtype=object),
        firm_id=np.array(rows["firm_id"], dtype=object),
        start=np.array(rows["start"], dtype=np.int64),
        end=np.array(rows["end"], dtype=np.int64),
        ongoing=np.array(rows["ongoing"], dtype=bool),
        **{k: np.array(rows[k], dtype=np.int8) for k in
           ("contract_type", "region", "sector", "sex", "education", "first_job_age")},
        foreign=np.array(rows["foreign"], dtype=bool),
    )


def brute_force_cells(table, window, days, durations, hire_types=None):
    """Day-by-day per-worker enumeration, independent of the vectorized path."""
    wlo, whi = (to_daynum(w) for w in window)
    by_worker = defaultdict(list)
    for k in range(len(table)):
        end = whi if table.ongoing[k] else min(int(table.end[k]), whi)
        if table.start[k] > whi or end < wlo:
            continue
        by_worker[table.worker_id[k]].append((int(table.start[k]), end, int(table.contract_type[k]), k))
    group = defaultdict(int)
    hires = defaultdict(int)
    female = defaultdict(int)
    census = defaultdict(int)
    for contracts in by_worker.values():
        employed = set()
        for s, e, _, _ in contracts:
            employed.update(range(s, e + 1))
        first_start = {}
        for s, e, t, _ in contracts:
            first_start.setdefault(s, []).append(t)
        last_end = None
        last_row = None
        # walk every day from the first contract start to window end
        day0 = min(c[0] for c in contracts)
        ends_by_day = defaultdict(list)
        for s, e, t, k in contracts:
            ends_by_day[e].append(k)
        for day in range(day0, whi + 1):
            if day in employed:
                if last_end is not None and day - 1 not in employed:
                    # hire today after a spell
                    i = day - last_end
                    if days[0] <= day <= days[1] and durations[0] <= i <= durations[1]:
                        group[(i, day)] += 1
                        female[(i, day)] += int(table.sex[last_row] == 1)
                        t = min(first_start[day])
                        if hire_types is None or t in hire_types:
                            hires[(i, day)] += 1
                    if days[0] <= day <= days[1]:
                        census[day] += 1
                    last_end = None
                if day in ends_by_day and day + 1 not in employed:
                    last_end = day
                    # covariates from the contract with the latest end, ties to the last in sort order
                    cands = [c for c in contracts if c[1] == day]
                    cands.sort(key=lambda c: (c[0], c[1], c[2]))
                    last_row = cands[-1][3]
            elif last_end is not None:
                i = day - last_end
                if days[0] <= day <= days[1]:
                    census[day] += 1
                    if durations[0] <= i <= durations[1]:
                        group[(i, day)] += 1
                        female[(i, day)] += int(table.sex[last_row] == 1)
    return group, hires, female, census


class TestParse:
    HEADER = "worker_id,firm_id,start_date,end_date,contract_type,region,sector,sex,education,first_job_age,foreign\n"

    def test_clean_file(self):
        body = (
            "w1,f1,2010-01-01,2010-06-30,permanent,lazio,services,female,elementary,20-24,0\n"
            "w1,f2,2010-07-11,,temporary,lazio,services,female,elementary,20-24,0\n"
            "w2,f1,2009-03-01,2009-03-31,other,sicilia,industry,male,tertiary_univ,45+,1\n"
        )
        records, diags = parse_contracts(io.BytesIO((self.HEADER + body).encode()))
        assert len(records) == 3 and diags == []
        assert records[1].end_date is None
        assert records[2].region is Region.SICILIA and records[2].foreign

    def test_end_before_start_reported(self):
        body = "w1,f1,2010-06-30,2010-01-01,permanent,lazio,services,female,elementary,20-24,0\n"
        records, diags = parse_contracts((self.HEADER + body).encode())
        assert records == []
        assert len(diags) == 1 and diags[0].line == 2 and "end_date before start_date" in diags[0].reason

    def test_unknown_enum_and_bad_date(self):
        body = (
            "w1,f1,2010-02-30,2010-06-30,permanent,lazio,services,female,elementary,20-24,0\n"
            "w1,f1,2010-01-01,2010-06-30,seasonal,atlantis,services,female,elementary,20-24,0\n"
            "w1,f1,2010-01-01\n"
        )
        records, diags = parse_contracts((self.HEADER + body).encode())
        assert records == []
        assert [d.line for d in diags] == [2, 3, 4]
        assert "invalid start_date" in diags[0].reason
        assert "unknown contract_type" in diags[1].reason and "unknown region" in diags[1].reason
        assert "fields" in diags[2].reason

    def test_missing_column(self):
        with pytest.raises(MissingColumn, match="foreign"):
            parse_contracts(self.HEADER.replace(",foreign", "").encode())

    def test_empty(self):
        with pytest.raises(EmptyFile):
            parse_contracts(b"")

    def test_delimiter(self):
        text = (self.HEADER + "w1,f1,2010-01-01,2010-06-30,permanent,lazio,services,female,elementary,20-24,0\n")
        records, diags = parse_contracts(text.replace(",", ";").encode(), delimiter=";")
        assert len(records) == 1 and not diags

    def test_round_trip_10k(self):
        table = random_table(3000, seed=1)
        table = table.take(np.arange(10_000))
        assert len(table) == 10_000
        back, diags = read_contract_table(emit_contracts(table))
        assert diags == []
        assert back.to_records() == table.to_records()


class TestSpells:
    def test_single_gap_convention(self):
        table = ContractTable.from_records([rec("a", "2010-01-01", "2010-06-30"), rec("a", "2010-07-11", None)])
        spells = build_spells(table, ("2010-01-01", "2011-12-31"))
        assert len(spells) == 1
        assert spells.end[0] == to_daynum("2010-06-30")
        assert spells.length[0] == 11 and spells.hired[0]
        panel = aggregate_cells(spells, ("2010-07-01", "2010-07-11"), (1, 12))
        hit = panel.hires > 0
        assert panel.duration[hit].tolist() == [11]
        assert panel.day[hit].tolist() == [to_daynum("2010-07-11")]
        # one member in cells i = 1..11 along the diagonal
        members = panel.group_size > 0
        assert panel.duration[members].tolist() == list(range(1, 12))

    def test_overlap_merged(self):
        table = ContractTable.from_records([
            rec("a", "2010-01-01", "2010-06-30"),
            rec("a", "2010-03-01", "2010-09-30"),
        ])
        spells = build_spells(table, ("2010-01-01", "2010-12-31"))
        assert len(spells) == 1
        assert not spells.hired[0]
        assert spells.end[0] == to_daynum("2010-09-30")

    def test_touching_merged(self):
        table = ContractTable.from_records([rec("a", "2010-01-01", "2010-06-30"), rec("a", "2010-07-01", "2010-07-31")])
        spells = build_spells(table, ("2010-01-01", "2010-12-31"))
        assert spells.end.tolist() == [to_daynum("2010-07-31")]

    def test_ongoing_opens_no_spell(self):
        table = ContractTable.from_records([rec("a", "2009-01-01", None)])
        assert len(build_spells(table, ("2010-01-01", "2010-12-31"))) == 0

    def test_window_start_guard(self):
        table = ContractTable.from_records([rec("a", "2009-01-01", None)])
        with pytest.raises(InvalidWindow):
            build_spells(table, ("2007-12-31", "2010-12-31"))

    def test_unsorted_detected(self):
        table = ContractTable.from_records([rec("a", "2010-05-01", "2010-06-30"), rec("a", "2010-01-01", "2010-02-01")])
        with pytest.raises(UnsortedInput):
            build_spells(table, ("2010-01-01", "2010-12-31"), sort=False)

    def test_covariates_from_last_contract(self):
        table = ContractTable.from_records([
            rec("a", "2010-01-01", "2010-03-31", sex=Sex.MALE),
            rec("a", "2010-02-01", "2010-02-28", sex=Sex.FEMALE),
        ])
        spells = build_spells(table, ("2010-01-01", "2010-12-31"))
        assert spells.sex.tolist() == [0]

    def test_person_day_accounting(self):
        table = random_table(500, seed=7)
        window = ("2009-01-01", "2012-12-31")
        wlo, whi = (to_daynum(w) for w in window)
        spells = build_spells(table, window)
        # oracle: per worker, days from first episode end to window end not covered by any contract
        employed_after = 0
        possible = 0
        by_worker = defaultdict(list)
        for k in range(len(table)):
            end = whi if table.ongoing[k] else min(int(table.end[k]), whi)
            if table.start[k] > whi or end < wlo:
                continue
            by_worker[table.worker_id[k]].append((int(table.start[k]), end))
        for intervals in by_worker.values():
            days = set()
            for s, e in intervals:
                days.update(range(s, e + 1))
            first_end = min(e for s, e in intervals if all(not (s2 <= e + 1 <= e2) for s2, e2 in intervals))
            span = range(first_end + 1, whi + 1)
            possible += len(span)
            employed_after += sum(1 for d in span if d in days)
        assert int(spells.nonemployed_days().sum()) == possible - employed_after


class TestAggregate:
    def test_observation_count(self):
        table = ContractTable.from_records([rec("a", "2008-01-01", "2009-01-01")])
        spells = build_spells(table, ("2008-01-01", "2015-12-31"))
        panel = aggregate_cells(spells, ("2011-01-01", "2014-12-31"), (714, 744))
        assert len(panel) == 31 * 1461 == 45_291
        series_days = np.arange(to_daynum("2010-01-01"), to_daynum("2015-12-31") + 1)
        assert series_days.size == 2191

    def test_hand_enumeration_five_workers(self):
        recs = [
            rec("a", "2010-01-01", "2010-01-05"), rec("a", "2010-01-09", "2010-01-20", "temporary"),
            rec("b", "2010-01-03", "2010-01-04", sex=Sex.MALE), rec("b", "2010-01-07", None),
            rec("c", "2010-01-01", "2010-01-06"),
            rec("d", "2009-12-01", "2010-01-10"), rec("d", "2010-01-05", "2010-01-06"),
            rec("e", "2010-01-02", "2010-01-02", sex=Sex.MALE), rec("e", "2010-01-05", "2010-01-05", "other", sex=Sex.MALE),
        ]
        spells = build_spells(ContractTable.from_records(recs), ("2010-01-01", "2010-01-12"))
        panel = aggregate_cells(spells, ("2010-01-05", "2010-01-09"), (1, 4))
        got = {(int(i), str(np.datetime64(int(j), "D"))): (int(n), int(h))
               for i, j, n, h in zip(panel.duration, panel.day, panel.group_size, panel.hires) if n}
        # a: out 01-06..01-08, hired 01-09 (i=4)
        # b: out 01-05..01-06, hired 01-07 (i=3)
        # c: out from 01-07 (censored)
        # d: employed throughout until 01-10
        # e: out 01-03..01-04, hired 01-05 (i=3); out from 01-06
        expected = {
            (1, "2010-01-05"): (1, 0),  # b
            (3, "2010-01-05"): (1, 1),  # e hired
            (2, "2010-01-06"): (1, 0),  # b
            (1, "2010-01-06"): (2, 0),  # a, e
            (2, "2010-01-07"): (2, 0),  # a, e
            (3, "2010-01-07"): (1, 1),  # b hired
            (1, "2010-01-07"): (1, 0),  # c
            (3, "2010-01-08"): (2, 0),  # a, e
            (2, "2010-01-08"): (1, 0),  # c
            (4, "2010-01-09"): (2, 1),  # a hired, e
            (3, "2010-01-09"): (1, 0),  # c
        }
        assert got == expected
        female = panel.share(share_column("sex", "female"))
        k = np.flatnonzero((panel.duration == 4) & (panel.day == to_daynum("2010-01-09")))[0]
        assert female[k] == 0.5

    @pytest.mark.parametrize("hire_types", [None, ("permanent",)])
    def test_matches_brute_force(self, hire_types):
        table = random_table(300, seed=3)
        window = ("2009-01-01", "2012-12-31")
        days, durations = ("2010-06-01", "2011-05-31"), (1, 400)
        panel = ingest(table, window, days, durations, hire_types=hire_types)
        codes = None if hire_types is None else {0}
        group, hires, female, census = brute_force_cells(
            table, window, (to_daynum(days[0]), to_daynum(days[1])), durations, codes
        )
        n = {(int(i), int(j)): int(v) for i, j, v in zip(panel.duration, panel.day, panel.group_size) if v}
        h = {(int(i), int(j)): int(v) for i, j, v in zip(panel.duration, panel.day, panel.hires) if v}
        f = {(int(i), int(j)): int(v) for i, j, v in
             zip(panel.duration, panel.day, panel.counts[share_column("sex", "female")]) if v}
        assert n == dict(group)
        assert h == {k: v for k, v in hires.items() if v}
        assert f == {k: v for k, v in female.items() if v}
        assert panel.census.tolist() == [census.get(int(d), 0) for d in panel.census_days]

    def test_invariants(self):
        table = random_table(400, seed=5)
        panel = ingest(table, ("2008-01-01", "2012-12-31"), ("2010-01-01", "2010-12-31"), (1, 800))
        assert np.all(panel.hires <= panel.group_size)
        live = panel.group_size > 0
        for family, cats in COVARIATE_FAMILIES.items():
            total = sum(panel.share(share_column(family, c)) for c in cats)
            np.testing.assert_allclose(total[live], 1.0, atol=1e-9)
        # partition: in-range members plus remainder equal the daily census
        inside = np.bincount(panel.day - panel.census_days[0], weights=panel.group_size)
        np.testing.assert_array_equal(inside + panel.out_of_range(), panel.census)
        assert np.all(panel.out_of_range() >= 0)
        # sorted by day then duration
        key = panel.day * 10_000 + panel.duration
        assert np.all(np.diff(key) > 0)

    def test_mezzogiorno_filter_commutes(self):
        table = random_table(400, seed=11)
        window, days, durs = ("2008-01-01", "2012-12-31"), ("2010-01-01", "2010-12-31"), (1, 500)
        with_filter = ingest(table, window, days, durs, regions="mezzogiorno")
        spells = build_spells(table, window)
        south = [i for i, r in enumerate(Region) if r.mezzogiorno]
        pre_filtered = aggregate_cells(spells.take(np.isin(spells.region, south)), days, durs)
        np.testing.assert_array_equal(with_filter.group_size, pre_filtered.group_size)
        np.testing.assert_array_equal(with_filter.hires, pre_filtered.hires)
        for k in with_filter.counts:
            np.testing.assert_array_equal(with_filter.counts[k], pre_filtered.counts[k])

    @pytest.mark.parametrize("threads", [2, 3, 8])
    def test_threads_and_order_invariance(self, threads):
        table = random_table(600, seed=13)
        args = (("2008-01-01", "2012-12-31"), ("2010-01-01", "2011-12-31"), (300, 760))
        base = ingest(table, *args, threads=1)
        perm = np.random.default_rng(0).permutation(len(table))
        other = ingest(table.take(perm), *args, threads=threads)
        assert base.to_frame().equals(other.to_frame())

    def test_cells_file_round_trip(self, tmp_path):
        table = random_table(200, seed=17)
        panel = ingest(table, ("2008-01-01", "2012-12-31"), ("2010-01-01", "2010-03-31"), (1, 200))
        write_cells(panel, tmp_path / "cells.csv")
        back = read_cells(tmp_path / "cells.csv")
        np.testing.assert_array_equal(back.group_size, panel.group_size)
        np.testing.assert_array_equal(back.day, panel.day)
        for k in panel.counts:
            np.testing.assert_array_equal(back.counts[k], panel.counts[k])
        assert back.meta["duration_range"] == [1, 200]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_hire_in_range_lands_once(self, seed):
        table = random_table(20, seed=seed)
        spells = build_spells(table, ("2008-01-01", "2012-12-31"))
        panel = aggregate_cells(spells, ("2008-01-01", "2012-12-31"), (1, 2000), covariates=False)
        in_range = spells.hired & (spells.length <= 2000) & (spells.end + spells.length >= to_daynum("2008-01-01"))
        assert panel.hires.sum() == in_range.sum()


class TestDailyCollapse:
    def test_weighted_pooling(self):
        from ltu_eval.panel_ingest import CellPanel

        panel = CellPanel(
            duration=np.array([1, 2]), day=np.array([100, 100]), group_size=np.array([10, 30]),
            hires=np.array([1, 0]), counts={},
        )
        series = daily_collapse(panel)
        assert series.y.tolist() == [1 / 40]

    def test_empty_day_omitted_with_diagnostic(self):
        from ltu_eval.panel_ingest import CellPanel

        panel = CellPanel(
            duration=np.array([1, 1]), day=np.array([100, 101]), group_size=np.array([0, 4]),
            hires=np.array([0, 1]), counts={},
        )
        series = daily_collapse(panel)
        assert series.day.tolist() == [101] and series.omitted_days == ("1970-04-11",)
        with pytest.raises(EmptyDay):
            daily_collapse(panel, strict=True)

    def test_matches_raw_spells(self):
        table = random_table(500, seed=19)
        window = ("2008-01-01", "2012-12-31")
        panel = ingest(table, window, ("2010-01-01", "2011-12-31"), (200, 700))
        series = daily_collapse(panel)
        spells = build_spells(table, window)
        for day, y in list(zip(series.day, series.y))[::37]:
            i = day - spells.end
            members = (i >= 200) & (i <= 700) & (i <= spells.length)
            hired = members & spells.hired & (i == spells.length)
            assert y == hired.sum() / members.sum()

    def test_december_exclusion_count(self):
        from ltu_eval.panel_ingest import DailySeries

        days = np.arange(to_daynum("2010-01-01"), to_daynum("2015-12-31") + 1)
        series = DailySeries(day=days, y=np.zeros(days.size), group_size=np.ones(days.size, int),
                             hires=np.zeros(days.size, int))
        assert len(series) == 2191
        assert len(series.exclude_months([(2015, 12)])) == 2160
