"""Per-worker non-employment spells from contract histories."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import InvalidWindow, UnsortedInput
from .records import CONTRACT_TYPES, EARLIEST_RELIABLE, ContractTable, ContractType, to_daynum


@dataclass(frozen=True)
class SpellTable:
    """Non-employment spells, one row per spell.

    ``end`` is the day the last contract of the preceding employment episode
    ended; on day ``end + i`` the worker has duration ``i``. A hired spell
    has ``length = hire_day - end`` and the worker is counted, and hired, in
    cell ``(length, hire_day)``. A censored spell runs until the window end,
    ``length = window_end - end``.
    """

    worker: np.ndarray
    end: np.ndarray
    length: np.ndarray
    hired: np.ndarray
    next_type: np.ndarray
    sex: np.ndarray
    education: np.ndarray
    first_job_age: np.ndarray
    foreign: np.ndarray
    sector: np.ndarray
    region: np.ndarray
    window: tuple[int, int]

    def __len__(self) -> int:
        return int(self.end.shape[0])

    def take(self, index) -> SpellTable:
        fields = {k: getattr(self, k)[index] for k in self.__dataclass_fields__ if k != "window"}
        return SpellTable(window=self.window, **fields)

    def nonemployed_days(self) -> np.ndarray:
        """Days actually spent out of employment (the hire day is employed)."""
        return self.length - self.hired.astype(np.int64)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({k: getattr(self, k) for k in self.__dataclass_fields__ if k != "window"})


def _window_days(window) -> tuple[int, int]:
    lo, hi = window
    lo = to_daynum(lo) if not isinstance(lo, (int, np.integer)) else int(lo)
    hi = to_daynum(hi) if not isinstance(hi, (int, np.integer)) else int(hi)
    if hi < lo:
        raise InvalidWindow("observation window ends before it starts")
    return lo, hi


def build_spells(
    table: ContractTable,
    window,
    *,
    sort: bool = True,
    ignore_types=(),
    min_start: dt.date | None = EARLIEST_RELIABLE,
) -> SpellTable:
    """Extract non-employment spells inside an observation window.

    Overlapping or touching contracts of one worker are merged into a single
    employment episode. Every gap between consecutive episodes is a hired
    spell; the gap after the last episode, if the worker is not employed at
    the window end, is a censored spell. Contracts without an end date keep
    the worker employed through the window end.

    Parameters
    ----------
    table : ContractTable
    window : (date, date)
        Inclusive observation window. Its start may not precede
        ``min_start`` (records before 2008 are unreliable).
    sort : bool
        If False the table must already be ordered by worker and start date.
    ignore_types : iterable of ContractType
        Contract types that do not interrupt a non-employment spell.
    """
    if not isinstance(table, ContractTable):
        table = ContractTable.from_records(table)
    win_lo, win_hi = _window_days(window)
    if min_start is not None and win_lo < to_daynum(min_start):
        raise InvalidWindow(f"observation window may not start before {min_start.isoformat()}")

    eff_end = np.where(table.ongoing, win_hi, np.minimum(table.end, win_hi))
    keep = (table.start <= win_hi) & (eff_end >= win_lo)
    if ignore_types:
        codes = [CONTRACT_TYPES.index(ContractType(t)) for t in ignore_types]
        keep &= ~np.isin(table.contract_type, codes)
    idx = np.flatnonzero(keep)

    worker_codes, _ = pd.factorize(table.worker_id[idx], sort=True)
    worker_codes = worker_codes.astype(np.int64)
    start = table.start[idx]
    end = eff_end[idx]
    ctype = table.contract_type[idx].astype(np.int64)

    if sort:
        order = np.lexsort((ctype, end, start, worker_codes))
    else:
        dw = np.diff(worker_codes)
        ds = np.diff(start)
        if np.any(dw < 0) or np.any((dw == 0) & (ds < 0)):
            raise UnsortedInput("contracts are not ordered by worker and start date")
        order = np.arange(idx.size)
    rows = idx[order]
    worker = worker_codes[order]
    start = start[order]
    end = end[order]
    n = rows.size

    empty = np.zeros(0, dtype=np.int64)
    if n == 0:
        return SpellTable(
            worker=empty, end=empty, length=empty, hired=empty.astype(bool), next_type=empty.astype(np.int8),
            sex=empty.astype(np.int8), education=empty.astype(np.int8), first_job_age=empty.astype(np.int8),
            foreign=empty.astype(bool), sector=empty.astype(np.int8), region=empty.astype(np.int8),
            window=(win_lo, win_hi),
        )

    # running max of end dates within each worker, via an offset key
    span = np.int64(win_hi - min(int(end.min()), win_lo) + 2)
    base = min(int(end.min()), win_lo)
    key = worker * span + (end - base)
    run_max = np.maximum.accumulate(key) - worker * span + base

    first_of_worker = np.ones(n, dtype=bool)
    first_of_worker[1:] = worker[1:] != worker[:-1]
    new_episode = first_of_worker.copy()
    new_episode[1:] |= start[1:] > run_max[:-1] + 1

    ep_first = np.flatnonzero(new_episode)
    ep_end = np.maximum.reduceat(end, ep_first)
    ep_id = np.cumsum(new_episode) - 1
    position = np.arange(n)
    last_row = np.maximum.reduceat(np.where(end == ep_end[ep_id], position, -1), ep_first)

    ep_worker = worker[ep_first]
    n_ep = ep_first.size
    has_next = np.zeros(n_ep, dtype=bool)
    has_next[:-1] = ep_worker[1:] == ep_worker[:-1]

    next_first = np.zeros(n_ep, dtype=np.int64)
    next_first[:-1] = ep_first[1:]
    length = np.where(has_next, start[next_first] - ep_end, win_hi - ep_end)
    is_spell = has_next | (ep_end < win_hi)

    src = rows[last_row]
    sel = np.flatnonzero(is_spell)
    next_type = np.where(has_next, table.contract_type[rows[next_first]], -1).astype(np.int8)

    return SpellTable(
        worker=ep_worker[sel],
        end=ep_end[sel],
        length=length[sel],
        hired=has_next[sel],
        next_type=next_type[sel],
        sex=table.sex[src][sel],
        education=table.education[src][sel],
        first_job_age=table.first_job_age[src][sel],
        foreign=table.foreign[src][sel],
        sector=table.sector[src][sel],
        region=table.region[src][sel],
        window=(win_lo, win_hi),
    )
