"""Plan evaluation: compress with every candidate plan and pick the cheapest."""

import logging
from typing import List, Optional, Sequence

from ..core.seqio import Dataset
from ..models.plan_models import CompressionPlan
from ..models.report_models import EvaluationReport, PlanReport
from ..utils.output_handler import OutputEventType, OutputHandler
from .container import Archive, archive_fallbacks, compress

logger = logging.getLogger(__name__)


def plan_report(archive: Archive, symbols: int) -> PlanReport:
    """Per-field, selector and header bpv of one archive (bits per read position)."""
    header = archive.header
    scale = 8.0 / symbols if symbols else 0.0
    total_bytes = len(archive.to_bytes())
    report = PlanReport(plan=header.plan_name, total_bytes=total_bytes, total_bpv=total_bytes * scale)
    coded = 0
    for field_header in header.fields:
        name = field_header.field
        payload = header.stream_size(name)
        coded += payload
        setattr(report, f"{name}_bpv", payload * scale)
        selectors = f"{name}.selectors"
        if any(info.name == selectors for info in header.streams):
            selector_bytes = header.stream_size(selectors)
            report.selector_bpv += selector_bytes * scale
            coded += selector_bytes
    report.header_bpv = (total_bytes - coded) * scale
    fallbacks = archive_fallbacks(archive)
    if fallbacks:
        report.fallback = "; ".join(f"{name}: {reason}" for name, reason in fallbacks.items())
    return report


def evaluate_plans(data: Dataset, plans: Sequence[CompressionPlan], seed: Optional[int] = None,
                   threads: Optional[int] = None,
                   output_handler: Optional[OutputHandler] = None) -> EvaluationReport:
    """Compress with each plan and select the smallest archive.

    Plans coding qualities are restricted to bases when the data has none.

    Raises:
        ValueError: If no plan is given
    """
    if not plans:
        raise ValueError("evaluate_plans needs at least one plan")
    symbols = data.total_symbols
    rows: List[PlanReport] = []
    for plan in plans:
        if data.reads and not data.has_qualities and (plan.qualities or plan.packed):
            plan = plan.without_qualities()
        if output_handler:
            output_handler.notify(f"Evaluating plan {plan.name}", OutputEventType.PROGRESS)
        archive = compress(data, plan, seed=seed, threads=threads)
        row = plan_report(archive, symbols)
        logger.info(f"Plan {plan.name}: {row.total_bytes} bytes, {row.total_bpv:.4f} bpv")
        if row.fallback and output_handler:
            output_handler.notify(f"Plan {plan.name} not honoured: {row.fallback}", OutputEventType.WARNING)
        rows.append(row)

    best = min(range(len(rows)), key=lambda i: (rows[i].total_bytes, i))
    rows[best].selected = True
    if output_handler:
        output_handler.notify(f"Best plan: {rows[best].plan} ({rows[best].total_bpv:.4f} bpv)",
                              OutputEventType.RESULT)
    return EvaluationReport(symbols=symbols, reads=len(data.reads), rows=rows, best=rows[best].plan)
