"""Aggregation of spells into the (duration, day) cell panel."""

from __future__ import annotations

import datetime as dt
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import EmptyDay, InvalidWindow
from .records import (
    CONTRACT_TYPES,
    COVARIATE_FAMILIES,
    EARLIEST_RELIABLE,
    MEZZOGIORNO_REGION_CODES,
    REGION_TO_AREA_CODE,
    REGIONS,
    ContractTable,
    ContractType,
    Region,
    daynums_to_iso,
    from_daynum,
    share_column,
    to_daynum,
)
from .spells import SpellTable, build_spells


def _as_day(value) -> int:
    if isinstance(value, (int, np.integer)):
        return int(value)
    return to_daynum(value)


def _day_range(day_range) -> tuple[int, int]:
    lo, hi = (_as_day(v) for v in day_range)
    if hi < lo:
        raise InvalidWindow("empty day range")
    return lo, hi


def _duration_range(duration_range) -> tuple[int, int]:
    lo, hi = (int(v) for v in duration_range)
    if hi < lo or lo < 0:
        raise InvalidWindow("empty or negative duration range")
    return lo, hi


def _family_codes(spells: SpellTable, family: str) -> np.ndarray:
    if family == "citizenship":
        return spells.foreign.astype(np.int64)
    if family == "area":
        return REGION_TO_AREA_CODE[spells.region].astype(np.int64)
    return getattr(spells, family).astype(np.int64)


def region_codes(regions) -> tuple[int, ...]:
    """Region filter spec (``'mezzogiorno'`` or iterable of regions) to codes."""
    if regions is None:
        return tuple(range(len(REGIONS)))
    if isinstance(regions, str):
        if regions.lower() == "mezzogiorno":
            return MEZZOGIORNO_REGION_CODES
        regions = [regions]
    return tuple(sorted({REGIONS.index(Region(r)) for r in regions}))


def contract_type_codes(types) -> tuple[int, ...] | None:
    if types is None:
        return None
    if isinstance(types, str):
        types = [types]
    return tuple(sorted({CONTRACT_TYPES.index(ContractType(t)) for t in types}))


@dataclass(frozen=True)
class UnitCell:
    """Aggregate of workers with ``duration_days`` days out of work on ``day``."""

    duration_days: int
    day: dt.date
    group_size: int
    hires: int
    covariate_shares: dict = field(default_factory=dict)

    @property
    def outcome(self) -> float:
        return self.hires / self.group_size if self.group_size > 0 else float("nan")


@dataclass(frozen=True)
class CellPanel:
    """Cell panel in columnar form, sorted by day then duration.

    ``counts`` holds integer category counts per covariate column
    (``"family:category"``); shares are derived from them. ``census`` is the
    number of workers in any non-employment spell on each day of
    ``census_days`` regardless of duration, so the out-of-range remainder is
    ``census - sum(group_size)`` per day.
    """

    duration: np.ndarray
    day: np.ndarray
    group_size: np.ndarray
    hires: np.ndarray
    counts: dict
    meta: dict = field(default_factory=dict)
    census_days: np.ndarray | None = None
    census: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.duration.shape[0])

    @property
    def share_columns(self) -> tuple[str, ...]:
        return tuple(self.counts)

    @property
    def shares(self) -> dict:
        with np.errstate(invalid="ignore", divide="ignore"):
            return {k: np.where(self.group_size > 0, v / self.group_size, np.nan) for k, v in self.counts.items()}

    def share(self, column: str) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.group_size > 0, self.counts[column] / self.group_size, np.nan)

    @property
    def outcome(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.group_size > 0, self.hires / self.group_size, np.nan)

    @property
    def estimable(self) -> np.ndarray:
        return self.group_size > 0

    @property
    def n_empty(self) -> int:
        return int(np.count_nonzero(self.group_size == 0))

    def take(self, index) -> CellPanel:
        return CellPanel(
            duration=self.duration[index],
            day=self.day[index],
            group_size=self.group_size[index],
            hires=self.hires[index],
            counts={k: v[index] for k, v in self.counts.items()},
            meta=dict(self.meta),
        )

    def select(self, durations=None, days=None) -> CellPanel:
        """Sub-panel restricted to inclusive duration and day ranges."""
        mask = np.ones(len(self), dtype=bool)
        if durations is not None:
            lo, hi = durations
            mask &= (self.duration >= lo) & (self.duration <= hi)
        if days is not None:
            lo, hi = (_as_day(d) for d in days)
            mask &= (self.day >= lo) & (self.day <= hi)
        return self.take(mask)

    def out_of_range(self) -> np.ndarray | None:
        """Per-day count of spell-days outside the duration range."""
        if self.census is None:
            return None
        inside = np.bincount(self.day - self.census_days[0], weights=self.group_size, minlength=self.census.size)
        return self.census - inside.astype(np.int64)

    def cells(self):
        shares = self.shares
        days = self.day.astype("datetime64[D]").tolist()
        for k in range(len(self)):
            yield UnitCell(
                duration_days=int(self.duration[k]),
                day=days[k],
                group_size=int(self.group_size[k]),
                hires=int(self.hires[k]),
                covariate_shares={c: float(v[k]) for c, v in shares.items()},
            )

    def to_frame(self, counts: bool = False) -> pd.DataFrame:
        data = {
            "i": self.duration,
            "j": daynums_to_iso(self.day),
            "group_size": self.group_size,
            "hires": self.hires,
        }
        data.update(self.counts if counts else self.shares)
        return pd.DataFrame(data)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, meta: dict | None = None) -> CellPanel:
        """Rebuild a panel from :meth:`to_frame` output (shares or counts)."""
        group = frame["group_size"].to_numpy(np.int64)
        counts = {}
        for col in frame.columns:
            if ":" not in col:
                continue
            values = frame[col].to_numpy(float)
            if np.issubdtype(frame[col].dtype, np.integer):
                counts[col] = values.astype(np.int64)
            else:
                counts[col] = np.rint(np.nan_to_num(values) * group).astype(np.int64)
        day = pd.to_datetime(frame["j"]).to_numpy().astype("datetime64[D]").astype(np.int64)
        return cls(
            duration=frame["i"].to_numpy(np.int64),
            day=day,
            group_size=group,
            hires=frame["hires"].to_numpy(np.int64),
            counts=counts,
            meta=dict(meta or {}),
        )


def _counts(
    spells: SpellTable,
    days: tuple[int, int],
    durations: tuple[int, int],
    families,
    hire_codes,
) -> dict:
    """Integer cell counts for one shard of spells."""
    jlo, jhi = days
    dlo, dhi = durations
    n_days = jhi - jlo + 1
    n_dur = dhi - dlo + 1
    cmin = jlo - dhi
    n_coh = (jhi - dlo) - cmin + 1
    stride = n_dur + 1

    e = spells.end
    length = spells.length
    a = np.maximum.reduce([np.full_like(e, dlo), jlo - e, np.ones_like(e)])
    b = np.minimum.reduce([np.full_like(e, dhi), length, jhi - e])
    ok = a <= b
    ci = (e - cmin)[ok]
    first = ci * stride + (a[ok] - dlo)
    last = ci * stride + (b[ok] - dlo + 1)
    flat = np.concatenate([first, last])
    sign = np.concatenate([np.ones(first.size), -np.ones(last.size)])

    jj = np.arange(n_days)[:, None]
    ii = np.arange(n_dur)[None, :]
    gather = ((jj - ii + (n_dur - 1)) * stride + ii).ravel()

    def accumulate(weights) -> np.ndarray:
        grid = np.bincount(flat, weights=weights, minlength=n_coh * stride).reshape(n_coh, stride)
        return np.cumsum(grid, axis=1).ravel()[gather]

    out = {"group_size": np.rint(accumulate(sign)).astype(np.int64)}

    for family in families:
        codes = np.tile(_family_codes(spells, family)[ok], 2)
        for k, cat in enumerate(COVARIATE_FAMILIES[family]):
            out[share_column(family, cat)] = np.rint(accumulate(sign * (codes == k))).astype(np.int64)

    hired = spells.hired & (length >= dlo) & (length <= dhi)
    hire_day = e + length
    hired &= (hire_day >= jlo) & (hire_day <= jhi)
    if hire_codes is not None:
        hired &= np.isin(spells.next_type, hire_codes)
    pos = (hire_day[hired] - jlo) * n_dur + (length[hired] - dlo)
    out["hires"] = np.bincount(pos, minlength=n_days * n_dur).astype(np.int64)

    # workers in any spell on each day: active on end+1 .. end+length
    lo = np.maximum(e + 1, jlo)
    hi = np.minimum(e + length, jhi)
    act = lo <= hi
    diff = np.bincount(lo[act] - jlo, minlength=n_days + 1) - np.bincount(hi[act] - jlo + 1, minlength=n_days + 1)
    out["census"] = np.cumsum(diff)[:n_days].astype(np.int64)
    return out


def _filter_spells(spells: SpellTable, regions) -> SpellTable:
    if regions is None:
        return spells
    return spells.take(np.isin(spells.region, region_codes(regions)))


def _resolve_families(covariates) -> tuple[str, ...]:
    if covariates is True or covariates is None:
        return tuple(COVARIATE_FAMILIES)
    if covariates is False:
        return ()
    families = tuple(covariates)
    unknown = [f for f in families if f not in COVARIATE_FAMILIES]
    if unknown:
        raise ValueError(f"unknown covariate families: {unknown}")
    return families


def _assemble(parts: list[dict], days, durations, families, meta) -> CellPanel:
    total = {k: sum(p[k] for p in parts) for k in parts[0]}
    jlo, jhi = days
    dlo, dhi = durations
    n_days = jhi - jlo + 1
    n_dur = dhi - dlo + 1
    counts = {
        share_column(f, c): total[share_column(f, c)] for f in families for c in COVARIATE_FAMILIES[f]
    }
    panel = CellPanel(
        duration=np.tile(np.arange(dlo, dhi + 1, dtype=np.int64), n_days),
        day=np.repeat(np.arange(jlo, jhi + 1, dtype=np.int64), n_dur),
        group_size=total["group_size"],
        hires=total["hires"],
        counts=counts,
        census_days=np.arange(jlo, jhi + 1, dtype=np.int64),
        census=total["census"],
        meta=meta,
    )
    panel.meta["n_cells"] = len(panel)
    panel.meta["n_empty_cells"] = panel.n_empty
    panel.meta["out_of_range_spell_days"] = int(panel.out_of_range().sum())
    return panel


def _meta(days, durations, regions, hire_types, families) -> dict:
    return {
        "day_range": [from_daynum(days[0]).isoformat(), from_daynum(days[1]).isoformat()],
        "duration_range": [int(durations[0]), int(durations[1])],
        "regions": None if regions is None else (
            "mezzogiorno" if isinstance(regions, str) and regions.lower() == "mezzogiorno"
            else [REGIONS[c].value for c in region_codes(regions)]
        ),
        "hire_types": None if hire_types is None else [CONTRACT_TYPES[c].value for c in contract_type_codes(hire_types)],
        "covariate_families": list(families),
    }


def aggregate_cells(
    spells: SpellTable,
    day_range,
    duration_range,
    *,
    regions=None,
    hire_types=None,
    covariates=True,
) -> CellPanel:
    """Aggregate spells into one cell per (duration, day) in the ranges.

    ``group_size`` counts workers whose spell has lasted exactly ``i`` days
    on day ``j``; ``hires`` counts those whose next contract, of a type in
    ``hire_types`` (all types if None), starts on day ``j``. Covariate
    shares are computed over the whole group. ``regions`` restricts the
    population (a list of regions or ``'mezzogiorno'``).
    """
    days = _day_range(day_range)
    durations = _duration_range(duration_range)
    families = _resolve_families(covariates)
    hire_codes = contract_type_codes(hire_types)
    part = _counts(_filter_spells(spells, regions), days, durations, families, hire_codes)
    return _assemble([part], days, durations, families, _meta(days, durations, regions, hire_types, families))


def ingest(
    contracts: ContractTable,
    window,
    day_range,
    duration_range,
    *,
    regions=None,
    hire_types=None,
    covariates=True,
    ignore_types=(),
    threads: int = 1,
    min_start=EARLIEST_RELIABLE,
) -> CellPanel:
    """Contracts to cell panel, processing worker shards in parallel.

    Workers are assigned to shards by a hash of their identifier, so every
    shard holds complete histories; shard counts are integer sums, hence the
    panel does not depend on ``threads`` or on record order.
    """
    days = _day_range(day_range)
    durations = _duration_range(duration_range)
    families = _resolve_families(covariates)
    hire_codes = contract_type_codes(hire_types)
    if not isinstance(contracts, ContractTable):
        contracts = ContractTable.from_records(contracts)
    n_shards = max(1, int(threads))

    if n_shards == 1:
        shards = [contracts]
    else:
        shard_of = pd.util.hash_array(contracts.worker_id.astype(object)) % np.uint64(n_shards)
        shards = [contracts.take(shard_of == s) for s in range(n_shards)]

    def run(shard):
        spells = build_spells(shard, window, ignore_types=ignore_types, min_start=min_start)
        return _counts(_filter_spells(spells, regions), days, durations, families, hire_codes)

    if n_shards == 1:
        parts = [run(shards[0])]
    else:
        with ThreadPoolExecutor(max_workers=n_shards) as pool:
            parts = list(pool.map(run, shards))
    meta = _meta(days, durations, regions, hire_types, families)
    meta["window"] = [from_daynum(_as_day(w)).isoformat() for w in window]
    meta["n_contracts"] = len(contracts)
    return _assemble(parts, days, durations, families, meta)


@dataclass(frozen=True)
class DailySeries:
    """Daily pooled outcome ``y = total hires / total group size``."""

    day: np.ndarray
    y: np.ndarray
    group_size: np.ndarray
    hires: np.ndarray
    shares: dict = field(default_factory=dict)
    omitted_days: tuple = ()

    def __len__(self) -> int:
        return int(self.day.shape[0])

    def take(self, index) -> DailySeries:
        return DailySeries(
            day=self.day[index],
            y=self.y[index],
            group_size=self.group_size[index],
            hires=self.hires[index],
            shares={k: v[index] for k, v in self.shares.items()},
            omitted_days=self.omitted_days,
        )

    def exclude_months(self, months) -> DailySeries:
        """Drop observations in the given ``(year, month)`` pairs."""
        if not months:
            return self
        ym = self.day.astype("datetime64[D]").astype("datetime64[M]").astype(np.int64)
        drop = np.isin(ym, [(y - 1970) * 12 + (m - 1) for y, m in months])
        return self.take(~drop)

    def restrict(self, start=None, end=None) -> DailySeries:
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= self.day >= _as_day(start)
        if end is not None:
            mask &= self.day <= _as_day(end)
        return self.take(mask)

    def to_frame(self) -> pd.DataFrame:
        data = {"day": daynums_to_iso(self.day), "y": self.y, "group_size": self.group_size, "hires": self.hires}
        data.update(self.shares)
        return pd.DataFrame(data)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> DailySeries:
        day = pd.to_datetime(frame["day"]).to_numpy().astype("datetime64[D]").astype(np.int64)
        group = frame["group_size"].to_numpy(np.int64) if "group_size" in frame else np.ones(len(frame), np.int64)
        y = frame["y"].to_numpy(float)
        hires = frame["hires"].to_numpy(np.int64) if "hires" in frame else np.zeros(len(frame), np.int64)
        shares = {c: frame[c].to_numpy(float) for c in frame.columns if ":" in c}
        return cls(day=day, y=y, group_size=group, hires=hires, shares=shares)


def daily_collapse(panel: CellPanel, durations=None, days=None, *, strict: bool = False) -> DailySeries:
    """Pool the cells of a duration window into one observation per day.

    Days whose total group size is zero are omitted and listed in
    ``omitted_days``; with ``strict=True`` they raise ``EmptyDay`` instead.
    """
    sub = panel.select(durations=durations, days=days) if (durations or days) else panel
    if len(sub) == 0:
        raise InvalidWindow("no cells in the requested window")
    uniq, inv = np.unique(sub.day, return_inverse=True)
    total = np.bincount(inv, weights=sub.group_size, minlength=uniq.size).astype(np.int64)
    hires = np.bincount(inv, weights=sub.hires, minlength=uniq.size).astype(np.int64)
    pooled = {
        k: np.bincount(inv, weights=v, minlength=uniq.size) for k, v in sub.counts.items()
    }
    empty = total == 0
    omitted = tuple(from_daynum(d).isoformat() for d in uniq[empty])
    if strict and omitted:
        raise EmptyDay(f"{len(omitted)} day(s) with no workers in the window, first {omitted[0]}")
    keep = ~empty
    tot = total[keep]
    return DailySeries(
        day=uniq[keep],
        y=hires[keep] / tot,
        group_size=tot,
        hires=hires[keep],
        shares={k: v[keep] / tot for k, v in pooled.items()},
        omitted_days=omitted,
    )


def write_cells(panel: CellPanel, path, manifest_path=None) -> None:
    """Write the panel as CSV and its metadata as a JSON sidecar."""
    frame = panel.to_frame(counts=False)
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    manifest_path = manifest_path or f"{os.fspath(path)}.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(panel.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_cells(path, manifest_path=None) -> CellPanel:
    frame = pd.read_csv(path)
    manifest_path = manifest_path or f"{os.fspath(path)}.json"
    meta = {}
    if os.path.exists(manifest_path):
        with open(manifest_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    return CellPanel.from_frame(frame, meta)
