"""Reading and writing contract files (delimiter-separated, ISO dates)."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import EmptyFile, MissingColumn
from .records import (
    CONTRACT_TYPES,
    EDUCATIONS,
    FIRST_JOB_AGES,
    REGIONS,
    SECTORS,
    SEXES,
    ContractTable,
    daynums_to_iso,
)

REQUIRED_COLUMNS = (
    "worker_id",
    "firm_id",
    "start_date",
    "end_date",
    "contract_type",
    "region",
    "sector",
    "sex",
    "education",
    "first_job_age",
    "foreign",
)

_ENUM_COLUMNS = {
    "contract_type": CONTRACT_TYPES,
    "region": REGIONS,
    "sector": SECTORS,
    "sex": SEXES,
    "education": EDUCATIONS,
    "first_job_age": FIRST_JOB_AGES,
}
_BOOL_VALUES = {"0": False, "1": True, "false": False, "true": True, "no": False, "yes": True}


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    reason: str


def _text_stream(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8-sig"))
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8-sig", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")


def _parse_dates(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    parsed = pd.to_datetime(pd.Series(values, dtype=object), format="%Y-%m-%d", errors="coerce")
    ok = parsed.notna().to_numpy()
    days = np.zeros(values.shape[0], dtype=np.int64)
    days[ok] = parsed[ok].to_numpy().astype("datetime64[D]").astype(np.int64)
    return days, ok


def read_contract_table(source, delimiter: str = ",") -> tuple[ContractTable, list[ParseDiagnostic]]:
    """Parse a contract file into a :class:`ContractTable`.

    Every malformed row is skipped and reported with its 1-based line
    number; a header lacking a required column raises ``MissingColumn``.
    """
    stream = _text_stream(source)
    try:
        reader = csv.reader(stream, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyFile("input has no header row") from None
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"header lacks required column(s): {', '.join(missing)}")
        pos = [header.index(c) for c in REQUIRED_COLUMNS]

        diagnostics: list[ParseDiagnostic] = []
        rows: list[list[str]] = []
        lines: list[int] = []
        width = len(header)
        for row in reader:
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != width:
                diagnostics.append(ParseDiagnostic(reader.line_num, f"expected {width} fields, found {len(row)}"))
                continue
            rows.append([row[p].strip() for p in pos])
            lines.append(reader.line_num)
    finally:
        if isinstance(source, (str, os.PathLike)):
            stream.close()

    n = len(rows)
    cols = np.array(rows, dtype=object).reshape(n, len(REQUIRED_COLUMNS))
    col = {name: cols[:, k] for k, name in enumerate(REQUIRED_COLUMNS)}
    problems: list[list[str]] = [[] for _ in range(n)]

    def flag(mask, reason_fn):
        for k in np.flatnonzero(mask):
            problems[k].append(reason_fn(k))

    flag(col["worker_id"] == "", lambda k: "empty worker_id")
    flag(col["firm_id"] == "", lambda k: "empty firm_id")

    start, start_ok = _parse_dates(col["start_date"])
    flag(~start_ok, lambda k: f"invalid start_date {col['start_date'][k]!r}")
    ongoing = col["end_date"] == ""
    end, end_ok = _parse_dates(np.where(ongoing, "1970-01-01", col["end_date"]))
    flag(~end_ok, lambda k: f"invalid end_date {col['end_date'][k]!r}")
    flag(start_ok & end_ok & ~ongoing & (end < start), lambda k: "end_date before start_date")

    codes = {}
    for name, members in _ENUM_COLUMNS.items():
        lookup = {m.value: i for i, m in enumerate(members)}
        mapped = np.array([lookup.get(v, -1) for v in col[name]], dtype=np.int16)
        flag(mapped < 0, lambda k, name=name: f"unknown {name} {col[name][k]!r}")
        codes[name] = mapped.astype(np.int8)
    foreign = np.array([_BOOL_VALUES.get(v.lower(), None) for v in col["foreign"]], dtype=object)
    flag(foreign == None, lambda k: f"invalid foreign flag {col['foreign'][k]!r}")  # noqa: E711

    bad = np.array([bool(p) for p in problems], dtype=bool)
    for k in np.flatnonzero(bad):
        diagnostics.append(ParseDiagnostic(lines[k], "; ".join(problems[k])))
    diagnostics.sort(key=lambda d: d.line)

    good = ~bad
    table = ContractTable(
        worker_id=col["worker_id"][good].astype(object),
        firm_id=col["firm_id"][good].astype(object),
        start=start[good],
        end=np.where(ongoing, 0, end)[good],
        ongoing=ongoing[good],
        contract_type=codes["contract_type"][good],
        region=codes["region"][good],
        sector=codes["sector"][good],
        sex=codes["sex"][good],
        education=codes["education"][good],
        first_job_age=codes["first_job_age"][good],
        foreign=foreign[good].astype(bool),
    )
    return table, diagnostics


def parse_contracts(source, delimiter: str = ","):
    """Parse contract events into ``(records, diagnostics)``."""
    table, diagnostics = read_contract_table(source, delimiter)
    return table.to_records(), diagnostics


def contracts_frame(table: ContractTable) -> pd.DataFrame:
    if not isinstance(table, ContractTable):
        table = ContractTable.from_records(table)
    end = daynums_to_iso(table.end).astype(object)
    end[table.ongoing] = ""
    return pd.DataFrame({
        "worker_id": table.worker_id,
        "firm_id": table.firm_id,
        "start_date": daynums_to_iso(table.start),
        "end_date": end,
        "contract_type": np.array([t.value for t in CONTRACT_TYPES])[table.contract_type],
        "region": np.array([r.value for r in REGIONS])[table.region],
        "sector": np.array([s.value for s in SECTORS])[table.sector],
        "sex": np.array([s.value for s in SEXES])[table.sex],
        "education": np.array([e.value for e in EDUCATIONS])[table.education],
        "first_job_age": np.array([a.value for a in FIRST_JOB_AGES])[table.first_job_age],
        "foreign": table.foreign.astype(np.int8),
    })


def write_contracts(table, destination, delimiter: str = ",") -> None:
    """Write contracts (table or records) in the ingest input format."""
    frame = contracts_frame(table)
    if isinstance(destination, (str, os.PathLike)):
        frame.to_csv(destination, sep=delimiter, index=False, lineterminator="\n")
    else:
        destination.write(frame.to_csv(sep=delimiter, index=False, lineterminator="\n"))


def emit_contracts(table, delimiter: str = ",") -> bytes:
    buf = io.StringIO()
    write_contracts(table, buf, delimiter)
    return buf.getvalue().encode("utf-8")
