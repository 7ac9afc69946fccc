"""Contract ingestion, spell construction and cell aggregation."""

from .cells import (
    CellPanel,
    DailySeries,
    UnitCell,
    aggregate_cells,
    daily_collapse,
    ingest,
    read_cells,
    write_cells,
)
from .io import (
    REQUIRED_COLUMNS,
    ParseDiagnostic,
    contracts_frame,
    emit_contracts,
    parse_contracts,
    read_contract_table,
    write_contracts,
)
from .records import (
    ALL_SHARE_COLUMNS,
    COVARIATE_FAMILIES,
    DEFAULT_BALANCE_COVARIATES,
    EARLIEST_RELIABLE,
    NON_BASELINE_SHARE_COLUMNS,
    Area,
    ContractRecord,
    ContractTable,
    ContractType,
    Education,
    FirstJobAge,
    Region,
    Sector,
    Sex,
    from_daynum,
    share_column,
    to_daynum,
)
from .spells import SpellTable, build_spells

__all__ = [
    "ALL_SHARE_COLUMNS",
    "COVARIATE_FAMILIES",
    "DEFAULT_BALANCE_COVARIATES",
    "EARLIEST_RELIABLE",
    "NON_BASELINE_SHARE_COLUMNS",
    "REQUIRED_COLUMNS",
    "Area",
    "CellPanel",
    "ContractRecord",
    "ContractTable",
    "ContractType",
    "DailySeries",
    "Education",
    "FirstJobAge",
    "ParseDiagnostic",
    "Region",
    "Sector",
    "Sex",
    "SpellTable",
    "UnitCell",
    "aggregate_cells",
    "build_spells",
    "contracts_frame",
    "daily_collapse",
    "emit_contracts",
    "from_daynum",
    "ingest",
    "parse_contracts",
    "read_cells",
    "read_contract_table",
    "share_column",
    "to_daynum",
    "write_cells",
    "write_contracts",
]
