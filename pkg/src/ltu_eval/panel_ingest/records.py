"""Contract records, closed enums and the columnar contract table."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from enum import Enum

import numpy as np

EPOCH = dt.date(1970, 1, 1)
EARLIEST_RELIABLE = dt.date(2008, 1, 1)


def to_daynum(day) -> int:
    """Days since 1970-01-01 for a ``date`` or ISO string."""
    if isinstance(day, str):
        day = dt.date.fromisoformat(day)
    return (day - EPOCH).days


def from_daynum(n) -> dt.date:
    return EPOCH + dt.timedelta(days=int(n))


def daynums_to_iso(days) -> np.ndarray:
    return np.datetime_as_string(np.asarray(days, dtype="int64").astype("datetime64[D]"), unit="D")


class ContractType(str, Enum):
    PERMANENT = "permanent"
    TEMPORARY = "temporary"
    PARASUBORDINATE = "parasubordinate"
    OTHER = "other"


class Sector(str, Enum):
    AGRICULTURE = "agriculture"
    INDUSTRY = "industry"
    CONSTRUCTIONS = "constructions"
    SERVICES = "services"


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"


class Education(str, Enum):
    ELEMENTARY = "elementary"
    LOW_SECONDARY = "low_secondary"
    UPPER_SECONDARY = "upper_secondary"
    TERTIARY_NON_UNIV = "tertiary_non_univ"
    TERTIARY_UNIV = "tertiary_univ"
    DEGREE_PLUS = "degree_plus"


class FirstJobAge(str, Enum):
    AGE_15_19 = "15-19"
    AGE_20_24 = "20-24"
    AGE_25_29 = "25-29"
    AGE_30_44 = "30-44"
    AGE_45_PLUS = "45+"


class Area(str, Enum):
    NW = "nw"
    NE = "ne"
    CENTER = "center"
    SOUTH_ISLANDS = "south_islands"


class Region(str, Enum):
    PIEMONTE = "piemonte"
    VALLE_D_AOSTA = "valle_d_aosta"
    LOMBARDIA = "lombardia"
    LIGURIA = "liguria"
    TRENTINO_ALTO_ADIGE = "trentino_alto_adige"
    VENETO = "veneto"
    FRIULI_VENEZIA_GIULIA = "friuli_venezia_giulia"
    EMILIA_ROMAGNA = "emilia_romagna"
    TOSCANA = "toscana"
    UMBRIA = "umbria"
    MARCHE = "marche"
    LAZIO = "lazio"
    ABRUZZO = "abruzzo"
    MOLISE = "molise"
    CAMPANIA = "campania"
    PUGLIA = "puglia"
    BASILICATA = "basilicata"
    CALABRIA = "calabria"
    SICILIA = "sicilia"
    SARDEGNA = "sardegna"

    @property
    def area(self) -> Area:
        return REGION_AREA[self]

    @property
    def mezzogiorno(self) -> bool:
        return REGION_AREA[self] is Area.SOUTH_ISLANDS


_AREA_MEMBERS = {
    Area.NW: ("piemonte", "valle_d_aosta", "lombardia", "liguria"),
    Area.NE: ("trentino_alto_adige", "veneto", "friuli_venezia_giulia", "emilia_romagna"),
    Area.CENTER: ("toscana", "umbria", "marche", "lazio"),
    Area.SOUTH_ISLANDS: ("abruzzo", "molise", "campania", "puglia", "basilicata", "calabria", "sicilia", "sardegna"),
}
REGION_AREA = {Region(r): area for area, members in _AREA_MEMBERS.items() for r in members}

# enum -> integer code (position in declaration order)
CONTRACT_TYPES = list(ContractType)
SECTORS = list(Sector)
SEXES = list(Sex)
EDUCATIONS = list(Education)
FIRST_JOB_AGES = list(FirstJobAge)
REGIONS = list(Region)
AREAS = list(Area)
REGION_TO_AREA_CODE = np.array([AREAS.index(REGION_AREA[r]) for r in REGIONS], dtype=np.int8)
MEZZOGIORNO_REGION_CODES = tuple(i for i, r in enumerate(REGIONS) if r.mezzogiorno)

#: covariate families for cell shares; the first category is the regression baseline
COVARIATE_FAMILIES: dict[str, tuple[str, ...]] = {
    "sex": tuple(s.value for s in SEXES),
    "education": tuple(e.value for e in EDUCATIONS),
    "first_job_age": tuple(a.value for a in FIRST_JOB_AGES),
    "citizenship": ("native", "foreign"),
    "sector": tuple(s.value for s in SECTORS),
    "area": tuple(a.value for a in AREAS),
}


def share_column(family: str, category: str) -> str:
    return f"{family}:{category}"


ALL_SHARE_COLUMNS = tuple(share_column(f, c) for f, cats in COVARIATE_FAMILIES.items() for c in cats)
NON_BASELINE_SHARE_COLUMNS = tuple(
    share_column(f, c) for f, cats in COVARIATE_FAMILIES.items() for c in cats[1:]
)
#: balance-test covariates: women, every education level, every first-job age
#: class, foreign citizens, every sector and every area
DEFAULT_BALANCE_COVARIATES = (
    (share_column("sex", "female"),)
    + tuple(share_column("education", c) for c in COVARIATE_FAMILIES["education"])
    + tuple(share_column("first_job_age", c) for c in COVARIATE_FAMILIES["first_job_age"])
    + (share_column("citizenship", "foreign"),)
    + tuple(share_column("sector", c) for c in COVARIATE_FAMILIES["sector"])
    + tuple(share_column("area", c) for c in COVARIATE_FAMILIES["area"])
)


@dataclass(frozen=True)
class ContractRecord:
    """One employment contract event."""

    worker_id: str
    firm_id: str
    start_date: dt.date
    end_date: dt.date | None
    contract_type: ContractType
    region: Region
    sector: Sector
    sex: Sex
    education: Education
    first_job_age: FirstJobAge
    foreign: bool

    def __post_init__(self):
        if self.end_date is not None and self.end_date < self.start_date:
            raise ValueError("end_date precedes start_date")


@dataclass(frozen=True)
class ContractTable:
    """Columnar storage of contract records.

    Dates are day numbers (days since 1970-01-01); enums are integer codes
    into the module-level lists (``CONTRACT_TYPES``, ``REGIONS``, ...).
    ``ongoing`` marks contracts without an end date, whose ``end`` entry
    is meaningless.
    """

    worker_id: np.ndarray
    firm_id: np.ndarray
    start: np.ndarray
    end: np.ndarray
    ongoing: np.ndarray
    contract_type: np.ndarray
    region: np.ndarray
    sector: np.ndarray
    sex: np.ndarray
    education: np.ndarray
    first_job_age: np.ndarray
    foreign: np.ndarray

    def __len__(self) -> int:
        return int(self.start.shape[0])

    def __iter__(self):
        return iter(self.to_records())

    def take(self, index) -> ContractTable:
        return ContractTable(**{name: getattr(self, name)[index] for name in self.__dataclass_fields__})

    @classmethod
    def concat(cls, tables) -> ContractTable:
        tables = list(tables)
        return cls(**{
            name: np.concatenate([getattr(t, name) for t in tables]) for name in cls.__dataclass_fields__
        })

    @classmethod
    def from_records(cls, records) -> ContractTable:
        records = list(records)
        return cls(
            worker_id=np.array([r.worker_id for r in records], dtype=object),
            firm_id=np.array([r.firm_id for r in records], dtype=object),
            start=np.array([to_daynum(r.start_date) for r in records], dtype=np.int64),
            end=np.array([to_daynum(r.end_date) if r.end_date else 0 for r in records], dtype=np.int64),
            ongoing=np.array([r.end_date is None for r in records], dtype=bool),
            contract_type=np.array([CONTRACT_TYPES.index(r.contract_type) for r in records], dtype=np.int8),
            region=np.array([REGIONS.index(r.region) for r in records], dtype=np.int8),
            sector=np.array([SECTORS.index(r.sector) for r in records], dtype=np.int8),
            sex=np.array([SEXES.index(r.sex) for r in records], dtype=np.int8),
            education=np.array([EDUCATIONS.index(r.education) for r in records], dtype=np.int8),
            first_job_age=np.array([FIRST_JOB_AGES.index(r.first_job_age) for r in records], dtype=np.int8),
            foreign=np.array([r.foreign for r in records], dtype=bool),
        )

    def to_records(self) -> list[ContractRecord]:
        starts = self.start.astype("datetime64[D]").tolist()
        ends = self.end.astype("datetime64[D]").tolist()
        return [
            ContractRecord(
                worker_id=str(self.worker_id[k]),
                firm_id=str(self.firm_id[k]),
                start_date=starts[k],
                end_date=None if self.ongoing[k] else ends[k],
                contract_type=CONTRACT_TYPES[self.contract_type[k]],
                region=REGIONS[self.region[k]],
                sector=SECTORS[self.sector[k]],
                sex=SEXES[self.sex[k]],
                education=EDUCATIONS[self.education[k]],
                first_job_age=FIRST_JOB_AGES[self.first_job_age[k]],
                foreign=bool(self.foreign[k]),
            )
            for k in range(len(self))
        ]
