"""Worker-level simulation of contract histories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..panel_ingest.records import (
    AREAS,
    CONTRACT_TYPES,
    REGION_AREA,
    REGIONS,
    ContractTable,
    ContractType,
    to_daynum,
)
from .config import DgpConfig
from .hazard import hire_hazard, year_of

_CAP = 1_000.0  # cumulative hazard cap; -log(u) never gets near it
_CELLS_PER_BLOCK = 2_000_000

PERMANENT = CONTRACT_TYPES.index(ContractType.PERMANENT)
TEMPORARY = CONTRACT_TYPES.index(ContractType.TEMPORARY)
PARASUBORDINATE = CONTRACT_TYPES.index(ContractType.PARASUBORDINATE)
OTHER = CONTRACT_TYPES.index(ContractType.OTHER)


def make_rng(seed, *stream) -> np.random.Generator:
    """Portable generator for a seed and an optional stream index."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True)
class SpellTruth:
    """Latent and observed length of every simulated non-employment spell.

    ``potential_length`` is the length the spell would have had without the
    policy, drawn with the same uniform as the observed length. Censored
    spells (no hire before the period end) have ``hired`` False and lengths
    measured to the period end.
    """

    worker: np.ndarray
    end: np.ndarray
    potential_length: np.ndarray
    observed_length: np.ndarray
    hired: np.ndarray


@dataclass(frozen=True)
class SyntheticCorpus:
    table: ContractTable
    truth: SpellTruth
    config: DgpConfig

    def __len__(self) -> int:
        return len(self.table)

    def __iter__(self):
        return iter(self.table.to_records())

    def records(self):
        return self.table.to_records()


def draw_spell_lengths(config: DgpConfig, ends: np.ndarray, uniforms: np.ndarray, horizon: int, *, potential=False):
    """Inverse-CDF spell lengths for spells starting after day ``ends``.

    Returns ``(length, hired)``; a spell with no hire by ``horizon`` gets
    ``length = horizon - end`` and ``hired`` False.
    """
    ends = np.asarray(ends, dtype=np.int64)
    length = np.zeros(ends.size, dtype=np.int64)
    hired = np.zeros(ends.size, dtype=bool)
    if ends.size == 0:
        return length, hired
    cohorts, inv = np.unique(ends, return_inverse=True)
    target = -np.log(uniforms)
    max_len = int(horizon - cohorts.min())
    if max_len <= 0:
        return np.maximum(horizon - ends, 0), hired
    durations = np.arange(1, max_len + 1)
    block = max(1, _CELLS_PER_BLOCK // max_len)
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(cohorts.size + 1))
    for b0 in range(0, cohorts.size, block):
        cb = cohorts[b0:b0 + block]
        haz = hire_hazard(config, durations[None, :], cb[:, None] + durations[None, :], potential=potential)
        with np.errstate(divide="ignore"):
            cum = np.minimum(np.cumsum(-np.log1p(-haz), axis=1), _CAP)
        rows = np.arange(cb.size)
        flat = (cum + (rows[:, None] * 2 * _CAP)).ravel()
        members = order[bounds[b0]:bounds[min(b0 + block, cohorts.size)]]
        row_of = inv[members] - b0
        pos = np.searchsorted(flat, row_of * 2 * _CAP + target[members], side="right") - row_of * max_len
        room = horizon - ends[members]
        got = pos + 1 <= room
        length[members] = np.where(got, pos + 1, room)
        hired[members] = got
    return length, hired


def _categorical(rng, probs, size) -> np.ndarray:
    return np.searchsorted(np.cumsum(probs)[:-1], rng.random(size), side="right").astype(np.int8)


def simulate_corpus(config: DgpConfig, *, seed=None, rng: np.random.Generator | None = None) -> SyntheticCorpus:
    """Simulate contract histories for ``config.n_workers`` workers.

    Each worker starts one contract during the period; after each contract
    ends the spell length is drawn by inverse CDF from the daily hire hazard
    and the next contract starts on the hire day. Same config and seed give
    an identical corpus.
    """
    if rng is None:
        rng = make_rng(config.seed if seed is None else seed)
    p0, p1 = (to_daynum(d) for d in config.period)
    n = int(config.n_workers)
    mix = config.covariate_mixture.probabilities

    sex = _categorical(rng, mix["sex"], n)
    education = _categorical(rng, mix["education"], n)
    first_job_age = _categorical(rng, mix["first_job_age"], n)
    foreign = _categorical(rng, mix["citizenship"], n).astype(bool)
    area = _categorical(rng, mix["area"], n)
    region_of_area = [np.array([k for k, r in enumerate(REGIONS) if REGION_AREA[r] is a], dtype=np.int8) for a in AREAS]
    region = np.empty(n, dtype=np.int8)
    for a, members in enumerate(region_of_area):
        sel = np.flatnonzero(area == a)
        region[sel] = members[rng.integers(0, members.size, sel.size)]

    latest_first = max(p0, p1 - 365)
    start = rng.integers(p0, latest_first + 1, n).astype(np.int64)
    active = np.arange(n)
    chunks, truth = [], []
    endings = config.endings

    while active.size:
        m = active.size
        u = rng.random(m)
        ctype = np.full(m, PERMANENT, dtype=np.int8)
        ctype[u < config.temporary_share + config.other_share] = OTHER
        ctype[u < config.temporary_share + config.other_share / 2] = PARASUBORDINATE
        ctype[u < config.temporary_share] = TEMPORARY
        mean = np.where(ctype == PERMANENT, config.permanent_mean_days, config.temporary_mean_days)
        length = rng.geometric(1.0 / mean)
        end = start + length - 1
        # December-heavy endings: snap some temporary contracts to 31 December
        snap = (ctype == TEMPORARY) & (rng.random(m) < config.year_end_snap)
        dec31 = (year_of(end) - 1969).astype("datetime64[Y]").astype("datetime64[D]").astype(np.int64) - 1
        end = np.where(snap, dec31, end)
        # thin endings by the monthly ending profile, pushing the rest a month on
        keep = rng.random(m) < endings[(end.astype("datetime64[D]").astype("datetime64[M]").astype(np.int64) % 12)] / endings.max()
        end = np.where(keep | snap, end, end + 30)
        ongoing = (ctype == PERMANENT) & (end > p1)
        chunks.append({
            "worker": active,
            "start": start,
            "end": np.where(ongoing, 0, end),
            "ongoing": ongoing,
            "contract_type": ctype,
            "sector": _categorical(rng, mix["sector"], m),
            "firm": rng.integers(0, config.n_firms, m),
        })
        open_spell = (~ongoing) & (end < p1)
        if not open_spell.any():
            break
        who = active[open_spell]
        e = end[open_spell]
        uni = rng.random(who.size)
        obs_len, hired = draw_spell_lengths(config, e, uni, p1)
        pot_len, _ = draw_spell_lengths(config, e, uni, p1, potential=True)
        truth.append((who, e, pot_len, obs_len, hired))
        active = who[hired]
        start = (e + obs_len)[hired]

    def cat(key, dtype=None):
        arr = np.concatenate([c[key] for c in chunks]) if chunks else np.zeros(0, dtype=dtype or np.int64)
        return arr if dtype is None else arr.astype(dtype)

    worker = cat("worker", np.int64)
    order = np.lexsort((cat("start"), worker))
    width = max(7, len(str(max(n - 1, 0))))
    ids = np.array([f"w{k:0{width}d}" for k in range(n)], dtype=object)
    firm_ids = np.array([f"f{k:05d}" for k in range(config.n_firms)], dtype=object)
    table = ContractTable(
        worker_id=ids[worker[order]],
        firm_id=firm_ids[cat("firm", np.int64)[order]],
        start=cat("start", np.int64)[order],
        end=cat("end", np.int64)[order],
        ongoing=cat("ongoing", bool)[order],
        contract_type=cat("contract_type", np.int8)[order],
        region=region[worker[order]],
        sector=cat("sector", np.int8)[order],
        sex=sex[worker[order]],
        education=education[worker[order]],
        first_job_age=first_job_age[worker[order]],
        foreign=foreign[worker[order]],
    )
    if truth:
        parts = [np.concatenate(x) for x in zip(*truth)]
    else:
        parts = [np.zeros(0, np.int64)] * 4 + [np.zeros(0, bool)]
    spell_truth = SpellTruth(*parts)
    return SyntheticCorpus(table=table, truth=spell_truth, config=config)
