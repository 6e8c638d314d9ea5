"""Analysis reports: context statistics, merge trees, penalty curves, clusters, half-lives."""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.adaptive import scan_blocks
from ..core.binner import BinningTable, CutCriterion, build_merge_tree, cut_tree, penalty_curve
from ..core.clusterer import bpv_histogram, header_cost, kmeans_cluster
from ..core.ctxstats import ContextKind, ContextSpec, collect_stats, rate
from ..core.seqio import Dataset, Field, field_alphabet, field_view
from ..models.report_models import AnalysisSummary, BlockScanRow, column_names, rows_to_csv
from ..utils.output_handler import OutputEventType, OutputHandler

logger = logging.getLogger(__name__)

CONTEXTS_FILE = "contexts.csv"
MERGE_TREE_FILE = "merge_tree.json"
PENALTY_CURVE_FILE = "penalty_curve.csv"
SUMMARY_FILE = "summary.json"
CLUSTERS_FILE = "clusters.csv"
HALF_LIFE_FILE = "half_life.csv"


def context_spec(kind: ContextKind, order: int, alphabet_size: int, max_pos: int = 128) -> ContextSpec:
    """Context specification for an analysis context kind."""
    if kind == ContextKind.POSITION:
        return ContextSpec.position(max_pos, alphabet_size)
    if kind == ContextKind.POSITION_AND_PREV:
        return ContextSpec.position_and_prev(max_pos, alphabet_size)
    return ContextSpec.order_l(order, alphabet_size)


def position_ranges(table: BinningTable) -> List[Tuple[int, int, int]]:
    """(bin, first position, last position) runs of consecutive positions sharing a bin."""
    runs: List[Tuple[int, int, int]] = []
    start = 0
    for position in range(1, table.context_count + 1):
        if position == table.context_count or table.bins[position] != table.bins[start]:
            runs.append((int(table.bins[start]), start, position - 1))
            start = position
    return runs


def _curve_csv(curve: Sequence[Tuple[int, float]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["bins", "penalty_bpv"])
    for bins, penalty in curve:
        writer.writerow([bins, f"{penalty:.9g}"])
    return out.getvalue()


def _histogram_csv(rows: Sequence[Tuple[int, float, float, int]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["cluster", "bpv_low", "bpv_high", "reads"])
    for cluster, low, high, count in rows:
        writer.writerow([cluster, f"{low:.6g}", f"{high:.6g}", count])
    return out.getvalue()


class AnalysisService:
    """Computes the numeric tables behind binning, clustering and adaptivity reports."""

    def __init__(self, output_handler: Optional[OutputHandler] = None, threads: int = 1, seed: int = 0):
        self.output_handler = output_handler
        self.threads = threads
        self.seed = seed

    def _notify(self, message: str, event_type: OutputEventType = OutputEventType.PROGRESS) -> None:
        if self.output_handler:
            self.output_handler.notify(message, event_type)

    def run_analyze(self, data: Dataset, out_dir: Path, field: Field = Field.QUALITIES,
                    kind: ContextKind = ContextKind.ORDER, order: int = 1, max_pos: int = 128,
                    bins: Optional[int] = None, penalty: Optional[float] = None,
                    clusters: Optional[int] = None, block_size: Optional[int] = None,
                    eta_grid: Optional[Sequence[float]] = None) -> AnalysisSummary:
        """Write the analysis reports for one field and context kind into ``out_dir``.

        Always writes contexts.csv, merge_tree.json, penalty_curve.csv and
        summary.json; clusters.csv when ``clusters`` > 1 and half_life.csv when a
        block size is given. An empty dataset yields empty reports.

        Raises:
            AlphabetError: If a quality field is requested on data without qualities
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        m = field_alphabet(data, field).size
        view = field_view(data, field)
        spec = context_spec(kind, order, m, max_pos)
        stats = collect_stats(view, spec, threads=self.threads)
        files: Dict[str, str] = {CONTEXTS_FILE: stats.to_csv()}

        summary = AnalysisSummary(field=field.value, context=kind.value, order=order,
                                  windows=stats.window_total, contexts=stats.context_count,
                                  full_bpv=0.0, order0_bpv=0.0, chosen_bins=0, chosen_penalty_bpv=0.0)
        if stats.empty:
            logger.warning("No windows to analyze; writing empty reports")
            files[MERGE_TREE_FILE] = "{}"
            files[PENALTY_CURVE_FILE] = _curve_csv([])
        else:
            first = spec.mapper().order
            summary.full_bpv = rate(stats).bpv
            summary.order0_bpv = rate(collect_stats(view, ContextSpec.order_l(0, m), first=first)).bpv
            tree = build_merge_tree(stats)
            files[MERGE_TREE_FILE] = tree.to_json()
            files[PENALTY_CURVE_FILE] = _curve_csv(penalty_curve(tree))
            if penalty is not None:
                criterion = CutCriterion.max_penalty(penalty)
            else:
                criterion = CutCriterion.max_bins(bins or m)
            table = cut_tree(tree, criterion)
            summary.chosen_bins = table.n_bins
            summary.chosen_penalty_bpv = table.penalty_bpv
            self._notify(f"{field.value}: full-context {summary.full_bpv:.4f} bpv, "
                         f"order-0 {summary.order0_bpv:.4f} bpv", OutputEventType.RESULT)

            if clusters and clusters > 1 and len(view.reads) >= clusters:
                model_set = kmeans_cluster(view, spec, clusters, seed=self.seed, threads=self.threads)
                cost = header_cost(clusters, model_set.assignment, view.total_symbols)
                summary.clusters = clusters
                summary.clustered_bpv = model_set.total_bits / view.total_symbols
                summary.header_flat_bpv = cost.flat_bpv
                summary.header_entropy_bpv = cost.entropy_bpv
                files[CLUSTERS_FILE] = _histogram_csv(bpv_histogram(model_set, view))
            elif clusters and clusters > 1:
                logger.warning(f"Only {len(view.reads)} reads; skipping {clusters}-means clustering")

        if block_size:
            symbols = (np.concatenate([read.bases for read in view.reads]) if view.reads
                       else np.zeros(0, dtype=np.int64))
            scans = scan_blocks(symbols, block_size, eta_grid, m)
            rows = [BlockScanRow(block_index=scan.block_index, eta_best=scan.result.eta_best,
                                 half_life=scan.result.half_life, bpv_best=scan.result.bpv_best,
                                 flat=scan.result.flat) for scan in scans]
            files[HALF_LIFE_FILE] = rows_to_csv(rows, column_names(BlockScanRow))

        files[SUMMARY_FILE] = json.dumps(summary.model_dump(), indent=2)
        for name, content in files.items():
            (out_dir / name).write_text(content)
        logger.info(f"Wrote {len(files)} reports to {out_dir}")
        return summary
