"""Models package for plans, archive headers and reports."""

from .plan_models import (
    CompressionPlan,
    FieldPlan,
    ModelKind,
    PRESET_PLANS,
    get_plan
)

from .archive_models import (
    ArchiveHeader,
    FieldModelHeader,
    StreamInfo
)

from .report_models import (
    AnalysisSummary,
    BlockScanRow,
    EvaluationReport,
    PlanReport,
    column_names,
    rows_to_csv
)

__all__ = [
    "CompressionPlan",
    "FieldPlan",
    "ModelKind",
    "PRESET_PLANS",
    "get_plan",
    "ArchiveHeader",
    "FieldModelHeader",
    "StreamInfo",
    "AnalysisSummary",
    "BlockScanRow",
    "EvaluationReport",
    "PlanReport",
    "column_names",
    "rows_to_csv"
]
