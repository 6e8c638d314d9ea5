"""Report rows written as CSV/JSON by the evaluation and analysis pipelines."""

import csv
import io
from typing import List, Optional, Sequence, Type

from pydantic import BaseModel, Field


class PlanReport(BaseModel):
    """Measured cost of one compression plan."""
    plan: str
    bases_bpv: Optional[float] = None
    qualities_bpv: Optional[float] = None
    packed_bpv: Optional[float] = None
    header_bpv: float = 0.0
    selector_bpv: float = 0.0
    total_bytes: int = 0
    total_bpv: float = 0.0
    selected: bool = False
    fallback: Optional[str] = None


class EvaluationReport(BaseModel):
    """All plan rows plus the winner."""
    symbols: int
    reads: int
    rows: List[PlanReport]
    best: Optional[str] = None


class AnalysisSummary(BaseModel):
    """Headline numbers of an analyze run."""
    field: str
    context: str
    order: int
    windows: int
    contexts: int
    full_bpv: float
    order0_bpv: float
    chosen_bins: int
    chosen_penalty_bpv: float
    clusters: Optional[int] = None
    clustered_bpv: Optional[float] = None
    header_flat_bpv: Optional[float] = None
    header_entropy_bpv: Optional[float] = None


class BlockScanRow(BaseModel):
    """One adapt-scan block (CSV columns: blockIndex, etaBest, halfLife, bpvBest)."""
    block_index: int = Field(serialization_alias="blockIndex")
    eta_best: float = Field(serialization_alias="etaBest")
    half_life: float = Field(serialization_alias="halfLife")
    bpv_best: float = Field(serialization_alias="bpvBest")
    flat: bool = False


def column_names(model: Type[BaseModel]) -> List[str]:
    return [info.serialization_alias or name for name, info in model.model_fields.items()]


def rows_to_csv(rows: Sequence[BaseModel], header: Optional[Sequence[str]] = None) -> str:
    """CSV of pydantic rows, columns in field order under their serialization aliases."""
    out = io.StringIO()
    if not rows:
        if header:
            csv.writer(out).writerow(header)
        return out.getvalue()
    names = column_names(type(rows[0]))
    writer = csv.DictWriter(out, fieldnames=names)
    writer.writeheader()
    for row in rows:
        writer.writerow(row.model_dump(by_alias=True))
    return out.getvalue()
