"""Service layer binding the core models into compression and analysis pipelines."""

from .container import Archive, archive_fallbacks, compress, decompress
from .evaluation_service import evaluate_plans, plan_report
from .analysis_service import AnalysisService, position_ranges

__all__ = [
    "Archive",
    "compress",
    "decompress",
    "archive_fallbacks",
    "evaluate_plans",
    "plan_report",
    "AnalysisService",
    "position_ranges"
]
