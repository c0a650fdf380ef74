"""
Prescription Data Models
Condition drug lists, GP practices, prescription rows and per-area rates
"""

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, Field

from ..exceptions import IngestionError


class Condition(str, Enum):
    """Health outcome tracked through prescriptions"""
    DIABETES = "diabetes"
    HYPERTENSION = "hypertension"
    ASTHMA = "asthma"
    DEPRESSION = "depression"
    ANXIETY = "anxiety"
    OPIOIDS = "opioids"
    TOTAL = "total"


# chapter (2 digits) followed by section/paragraph/chemical characters
BNF_PREFIX = re.compile(r"^[0-9]{2}[0-9A-Z]*$")


@dataclass(frozen=True)
class ConditionList:
    """BNF code prefixes associated with one condition"""
    condition: Condition
    bnf_codes: FrozenSet[str] = field(default_factory=frozenset)
    drug_names: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.condition != Condition.TOTAL and not self.bnf_codes:
            raise IngestionError(f"condition list '{self.condition.value}' has no BNF codes")
        bad = sorted(code for code in self.bnf_codes if not BNF_PREFIX.match(code))
        if bad:
            raise IngestionError(f"condition list '{self.condition.value}' has malformed BNF codes: {bad[:5]}")

    def longest_prefix(self, bnf_code: str) -> Optional[str]:
        """Longest listed prefix of `bnf_code`; the total list matches everything with ''"""
        if self.condition == Condition.TOTAL:
            return ""
        best = None
        for length in range(len(bnf_code), 1, -1):
            candidate = bnf_code[:length]
            if candidate in self.bnf_codes:
                best = candidate
                break
        return best

    def matches(self, bnf_code: str) -> bool:
        return self.longest_prefix(bnf_code) is not None


@dataclass(frozen=True)
class GpPractice:
    """General practice with its registered patients per area"""
    gp_code: str
    location: Tuple[float, float] = (0.0, 0.0)
    patients_by_area: Dict[str, float] = field(default_factory=dict)
    status: str = "active"

    @property
    def n_patients(self) -> float:
        return float(sum(self.patients_by_area.values()))


@dataclass(frozen=True)
class PrescriptionRow:
    """One practice-level prescribing line"""
    gp_code: str
    bnf_code: str
    items: float
    quantity: float
    cost: float

    COLUMNS = ("gp_code", "bnf_code", "items", "quantity", "cost")

    def __post_init__(self):
        for name in ("items", "quantity", "cost"):
            if getattr(self, name) < 0:
                raise IngestionError(f"prescription row {self.gp_code}/{self.bnf_code}: negative {name}")


class AreaPrescriptionRate(BaseModel):
    """Per-capita prescription quantity and cost for one area and condition"""
    area_id: str
    condition: Condition
    quantity_per_capita: Optional[float] = Field(None, ge=0.0)
    cost_per_capita: Optional[float] = Field(None, ge=0.0)
    quantity_total: float = Field(0.0, ge=0.0)
    cost_total: float = Field(0.0, ge=0.0)
    patients: float = Field(0.0, ge=0.0)


class IngestionReport(BaseModel):
    """What the prescription ingestion kept, dropped and noticed"""
    rows_read: int = 0
    rows_used: int = 0
    quarantined_unknown_gp: int = 0
    quarantined_excluded_status: int = 0
    unknown_gp_codes: List[str] = Field(default_factory=list)
    excluded_gps: List[str] = Field(default_factory=list, description="Closed/prison practices and zero-patient practices")
    months_present: List[str] = Field(default_factory=list)
    months_missing: List[str] = Field(default_factory=list)
    matched_rows_by_condition: Dict[str, int] = Field(default_factory=dict)
    matched_drugs_by_condition: Dict[str, List[str]] = Field(default_factory=dict)
    patients_population_correlation: Optional[float] = None
    warnings: List[str] = Field(default_factory=list)
