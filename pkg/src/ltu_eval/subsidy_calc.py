"""Per-hire tax credits under the targeted and the untargeted hiring subsidy.

The targeted credit (law 407/90) refunds a firm-class-dependent fraction of
social-security and work-insurance contributions; the untargeted one
(law 190/2014) refunds social-security contributions in full. Amounts are
annual.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyYear, NonPositiveWage, UnknownFirmClass

FIRM_CLASSES = ("regular", "artisan", "mezzogiorno")


@dataclass(frozen=True)
class SubsidyRates:
    social_security_rate: float = 0.298
    work_insurance_rate: float = 0.029
    law407_fraction: dict = field(default_factory=lambda: {"regular": 0.5, "artisan": 1.0, "mezzogiorno": 1.0})
    law190_fraction: float = 1.0

    def __post_init__(self):
        values = [self.social_security_rate, self.work_insurance_rate, self.law190_fraction, *self.law407_fraction.values()]
        if any(not 0 <= v <= 1 for v in values):
            raise ValueError("rates and fractions must lie in [0, 1]")

    @property
    def law407_base_rate(self) -> float:
        return self.social_security_rate + self.work_insurance_rate

    def fraction_407(self, firm_class: str) -> float:
        try:
            return self.law407_fraction[firm_class]
        except KeyError:
            raise UnknownFirmClass(f"unknown firm class {firm_class!r}; expected one of {sorted(self.law407_fraction)}") from None


DEFAULT_RATES = SubsidyRates()


def _check_wage(wage) -> np.ndarray:
    w = np.asarray(wage, dtype=float)
    if np.any(~(w > 0)):
        raise NonPositiveWage("annual wage must be positive")
    return w


def credit_407(annual_wage, firm_class: str, rates: SubsidyRates = DEFAULT_RATES):
    """Targeted-law credit: class fraction times (social security + work insurance) times wage."""
    w = _check_wage(annual_wage)
    out = rates.fraction_407(firm_class) * rates.law407_base_rate * w
    return float(out) if out.ndim == 0 else out


def credit_190(annual_wage, rates: SubsidyRates = DEFAULT_RATES):
    """Untargeted-law credit: social-security contributions on the wage."""
    w = _check_wage(annual_wage)
    out = rates.law190_fraction * rates.social_security_rate * w
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ComparisonRow:
    year: int
    avg_407: float
    avg_190: float
    relative_diff: float
    n_hires: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def comparison_row(year: int, avg_407: float, avg_190: float, n_hires: int | None = None) -> ComparisonRow:
    """Relative difference ``(avg_407 - avg_190) / avg_190`` of yearly averages."""
    if not avg_190 > 0:
        raise NonPositiveWage("average untargeted credit must be positive")
    return ComparisonRow(int(year), float(avg_407), float(avg_190), (avg_407 - avg_190) / avg_190, n_hires)


@dataclass(frozen=True)
class HireRecord:
    year: int
    wage: float
    firm_class: str


def compare_yearly(
    records=None,
    years=None,
    rates: SubsidyRates = DEFAULT_RATES,
    *,
    fraction_mode: str = "class",
    blended_fraction: float | None = None,
    averages=None,
) -> list[ComparisonRow]:
    """Yearly average credits under both laws over the same hires.

    ``fraction_mode='class'`` applies each hire's firm-class fraction;
    ``'blended'`` applies one fraction to every hire (by default the
    hire-weighted mean of the class fractions over all records).
    Alternatively ``averages`` gives precomputed ``(year, avg_407, avg_190)``
    triples, which are compared as they stand.
    """
    if averages is not None:
        if records is not None:
            raise ValueError("pass either records or averages, not both")
        rows = [comparison_row(y, a, b) for y, a, b in averages]
        if years is not None:
            wanted = {int(y) for y in years}
            missing = wanted - {r.year for r in rows}
            if missing:
                raise EmptyYear(f"no averages for {sorted(missing)}")
            rows = [r for r in rows if r.year in wanted]
        return rows
    if records is None:
        raise ValueError("need records or averages")
    records = [r if isinstance(r, HireRecord) else HireRecord(int(r[0]), float(r[1]), str(r[2])) for r in records]
    if fraction_mode not in ("class", "blended"):
        raise ValueError("fraction_mode must be 'class' or 'blended'")
    for r in records:
        rates.fraction_407(r.firm_class)
    if fraction_mode == "blended" and blended_fraction is None:
        blended_fraction = float(np.mean([rates.fraction_407(r.firm_class) for r in records])) if records else 0.0
    years = sorted({r.year for r in records}) if years is None else [int(y) for y in years]
    rows = []
    for year in years:
        sel = [r for r in records if r.year == year]
        if not sel:
            raise EmptyYear(f"no hires recorded in {year}")
        wages = np.array([r.wage for r in sel])
        if fraction_mode == "class":
            c407 = np.array([credit_407(r.wage, r.firm_class, rates) for r in sel])
        else:
            c407 = blended_fraction * rates.law407_base_rate * _check_wage(wages)
        c190 = credit_190(wages, rates)
        rows.append(comparison_row(year, float(np.mean(c407)), float(np.mean(c190)), len(sel)))
    return rows


def read_subsidy_csv(source):
    """Parse either hire records ``(year, wage, firm_class)`` or yearly averages
    ``(year, avg_407, avg_190)``; the header decides which.

    Returns ``("records", [HireRecord])`` or ``("averages", [(year, a407, a190)])``.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8-sig", newline="") as fh:
            text = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8-sig")
    else:
        text = source.read()
    reader = csv.DictReader(io.StringIO(text))
    fields = set(reader.fieldnames or ())
    if {"year", "wage", "firm_class"} <= fields:
        return "records", [HireRecord(int(r["year"]), float(r["wage"]), r["firm_class"].strip()) for r in reader]
    if {"year", "avg_407", "avg_190"} <= fields:
        return "averages", [(int(r["year"]), float(r["avg_407"]), float(r["avg_190"])) for r in reader]
    raise ValueError("subsidy CSV needs columns (year, wage, firm_class) or (year, avg_407, avg_190)")


def compare_from_csv(source, rates: SubsidyRates = DEFAULT_RATES, **kwargs) -> list[ComparisonRow]:
    kind, rows = read_subsidy_csv(source)
    if kind == "records":
        return compare_yearly(rows, rates=rates, **kwargs)
    return compare_yearly(averages=rows)
