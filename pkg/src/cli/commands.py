"""Command-line surface: analyze, bin, cluster, hscm, adapt-scan, compress, decompress, eval.

Exit codes: 0 on success, 1 on usage errors, 2 on data or format errors.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..config.settings import get_settings
from ..core.adaptive import DEFAULT_ETA_GRID, scan_blocks
from ..core.binner import CutCriterion, build_merge_tree, cut_tree
from ..core.clusterer import header_cost, kmeans_cluster
from ..core.ctxstats import ContextKind, collect_stats, empirical_bpv, rate
from ..core.errors import GenobinError
from ..core.hscm import (
    RadixLayout,
    build_hcb_transition,
    determinize,
    optimize_soft,
    train_hcb_binnings,
)
from ..core.seqio import Dataset, Field, field_alphabet, field_view, read_dataset, to_fasta_bytes, to_fastq_bytes
from ..models.plan_models import PRESET_PLANS, CompressionPlan, get_plan
from ..models.report_models import BlockScanRow, column_names, rows_to_csv
from ..services.analysis_service import AnalysisService, context_spec, position_ranges
from ..services.container import Archive, archive_fallbacks, archive_summary, compress, decompress
from ..services.evaluation_service import evaluate_plans
from ..utils.output_handler import OutputEventType, OutputHandler, create_console_output_handler

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    """Bad command-line arguments (exit code 1)."""


class ToolArgumentParser(argparse.ArgumentParser):
    """ArgumentParser reporting usage problems with exit code 1 instead of 2."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> ToolArgumentParser:
    settings = get_settings()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=settings.threads,
                        help="Worker threads (default: GENOBIN_THREADS or all cores)")
    common.add_argument("--seed", type=int, default=settings.seed, help="Seed for every randomized step")
    common.add_argument("--log-level", default=settings.log_level,
                        choices=["debug", "info", "warning", "error"], help="Logging level")
    common.add_argument("--quiet", action="store_true", help="Suppress progress messages")

    field_args = argparse.ArgumentParser(add_help=False)
    field_args.add_argument("input", help="FASTQ or FASTA file ('-' for stdin)")
    field_args.add_argument("--field", choices=[f.value for f in Field], default=Field.QUALITIES.value)
    field_args.add_argument("--context", choices=[ContextKind.ORDER.value, ContextKind.POSITION.value,
                                                  ContextKind.POSITION_AND_PREV.value],
                            default=ContextKind.ORDER.value)
    field_args.add_argument("--order", type=int, default=1, help="Context order")
    field_args.add_argument("--max-pos", type=int, default=128, help="Positions kept by position contexts")

    parser = ToolArgumentParser(prog="genobin", description="Context binning, clustering and adaptive "
                                                            "coding for sequencing reads")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ToolArgumentParser)

    analyze = commands.add_parser("analyze", parents=[common, field_args], help="Write analysis reports")
    analyze.add_argument("--out", type=Path, default=Path("analysis"), help="Report directory")
    analyze.add_argument("--bins", type=int, help="Bin budget for the chosen cut")
    analyze.add_argument("--penalty", type=float, help="Penalty budget (bpv) for the chosen cut")
    analyze.add_argument("--clusters", type=int, help="Also cluster reads into this many models")
    analyze.add_argument("--block-size", type=int, help="Also scan half-lives over blocks of this size")

    bin_cmd = commands.add_parser("bin", parents=[common, field_args], help="Bin contexts from a merge tree")
    cut = bin_cmd.add_mutually_exclusive_group()
    cut.add_argument("--bins", type=int, help="Maximum number of bins")
    cut.add_argument("--penalty", type=float, help="Maximum penalty in bpv")
    cut.add_argument("--step-cost", type=float, help="Stop splitting below this merge cost (bpv)")
    bin_cmd.add_argument("--out", type=Path, help="Write the CBN1 binning table here")
    bin_cmd.add_argument("--tree-csv", type=Path, help="Write the merge tree as CSV here")

    cluster = commands.add_parser("cluster", parents=[common, field_args], help="k-means over read models")
    cluster.add_argument("-k", "--clusters", type=int, default=4, help="Number of centroids")
    cluster.add_argument("--max-iter", type=int, default=settings.kmeans_max_iter)
    cluster.add_argument("--out", type=Path, help="Write the CMS1 model set here")
    cluster.add_argument("--summary", type=Path, help="Write per-cluster summary CSV here")

    hscm_cmd = commands.add_parser("hscm", parents=[common], help="Build a hidden-state context model")
    hscm_cmd.add_argument("input")
    hscm_cmd.add_argument("--field", choices=[f.value for f in Field], default=Field.QUALITIES.value)
    hscm_cmd.add_argument("--method", choices=["hcb", "soft"], default="hcb")
    hscm_cmd.add_argument("--levels", type=_int_list, default=[8, 4, 2], help="HCB bins per level")
    hscm_cmd.add_argument("--states", type=int, default=8, help="Soft model state count")
    hscm_cmd.add_argument("--steps", type=int, default=50, help="Soft ascent steps")
    hscm_cmd.add_argument("--step-size", type=float, default=1.0)
    hscm_cmd.add_argument("--out", type=Path, help="Write the HSC1 transition table here")

    scan = commands.add_parser("adapt-scan", parents=[common], help="Best forgetting rate per block")
    scan.add_argument("input")
    scan.add_argument("--field", choices=[f.value for f in Field], default=Field.QUALITIES.value)
    scan.add_argument("--block-size", type=int, default=settings.block_size)
    scan.add_argument("--adaptive-order", type=int, choices=[0, 1], default=0)
    scan.add_argument("--eta-grid", type=_float_list, help="Comma-separated eta values")
    scan.add_argument("--out", type=Path, help="CSV output (default: stdout)")

    compress_cmd = commands.add_parser("compress", parents=[common], help="Compress reads to a CGC1 archive")
    compress_cmd.add_argument("input")
    compress_cmd.add_argument("output", type=Path)
    plan_source = compress_cmd.add_mutually_exclusive_group()
    plan_source.add_argument("--plan", default="default", help=f"Preset: {', '.join(PRESET_PLANS)}")
    plan_source.add_argument("--plan-file", type=Path, help="JSON compression plan")
    compress_cmd.add_argument("--selector-coding", choices=["entropy", "flat"])

    decompress_cmd = commands.add_parser("decompress", parents=[common], help="Restore reads from an archive")
    decompress_cmd.add_argument("input", type=Path)
    decompress_cmd.add_argument("output", type=Path)
    decompress_cmd.add_argument("--format", choices=["auto", "fastq", "fasta"], default="auto")

    eval_cmd = commands.add_parser("eval", parents=[common], help="Compare compression plans")
    eval_cmd.add_argument("input")
    eval_cmd.add_argument("--plans", default="order0,order1,order1-binned,default",
                          help="Comma-separated preset names")
    eval_cmd.add_argument("--out", type=Path, help="CSV output (default: stdout)")
    return parser


def _load(path: str) -> Dataset:
    settings = get_settings()
    return read_dataset(path, quality_alphabet_size=settings.quality_alphabet_size,
                        quality_offset=settings.quality_offset, n_policy=settings.n_policy,
                        n_substitute=settings.n_substitute)


def _field_view(data: Dataset, name: str):
    field = Field(name)
    return field_view(data, field), field_alphabet(data, field).size


def _write_text(path: Optional[Path], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _criterion(args: argparse.Namespace, alphabet_size: int) -> CutCriterion:
    if getattr(args, "penalty", None) is not None:
        return CutCriterion.max_penalty(args.penalty)
    if getattr(args, "step_cost", None) is not None:
        return CutCriterion.max_step_cost(args.step_cost)
    return CutCriterion.max_bins(args.bins or alphabet_size)


def cmd_analyze(args: argparse.Namespace, output: OutputHandler) -> int:
    data = _load(args.input)
    service = AnalysisService(output, threads=args.workers, seed=args.seed)
    summary = service.run_analyze(data, args.out, Field(args.field), ContextKind(args.context), args.order,
                                  args.max_pos, args.bins, args.penalty, args.clusters, args.block_size)
    output.result("windows", summary.windows)
    output.result("full-context bpv", summary.full_bpv)
    output.result("order-0 bpv", summary.order0_bpv)
    output.notify(f"Reports written to {args.out}", OutputEventType.SYSTEM)
    return EXIT_OK


def cmd_bin(args: argparse.Namespace, output: OutputHandler) -> int:
    data = _load(args.input)
    view, m = _field_view(data, args.field)
    kind = ContextKind(args.context)
    stats = collect_stats(view, context_spec(kind, args.order, m, args.max_pos), threads=args.workers)
    tree = build_merge_tree(stats)
    table = cut_tree(tree, _criterion(args, m))
    output.result("full-context bpv", rate(stats).bpv)
    output.result("bins", table.n_bins)
    output.result("penalty", table.penalty_bpv, "bpv")
    if kind == ContextKind.POSITION:
        for bin_id, first, last in position_ranges(table):
            output.notify(f"bin {bin_id}: positions {first}-{last}", OutputEventType.RESULT)
    if args.out:
        args.out.write_bytes(table.to_bytes())
    if args.tree_csv:
        args.tree_csv.write_text(tree.to_csv())
    return EXIT_OK


def cmd_cluster(args: argparse.Namespace, output: OutputHandler) -> int:
    data = _load(args.input)
    view, m = _field_view(data, args.field)
    spec = context_spec(ContextKind(args.context), args.order, m, args.max_pos)
    model_set = kmeans_cluster(view, spec, args.clusters, max_iter=args.max_iter, seed=args.seed,
                               threads=args.workers)
    symbols = max(view.total_symbols, 1)
    cost = header_cost(model_set.k, model_set.assignment, view.total_symbols)
    output.result("clustered bpv", model_set.total_bits / symbols)
    output.result("header bpv (flat)", cost.flat_bpv)
    output.result("header bpv (entropy)", cost.entropy_bpv)
    output.result("cluster sizes", ",".join(str(int(n)) for n in model_set.cluster_sizes))
    if args.out:
        args.out.write_bytes(model_set.to_bytes())
    if args.summary:
        args.summary.write_text(model_set.summary_csv(view))
    return EXIT_OK


def cmd_hscm(args: argparse.Namespace, output: OutputHandler) -> int:
    data = _load(args.input)
    view, m = _field_view(data, args.field)
    if args.method == "hcb":
        binnings = train_hcb_binnings(view, args.levels, m)
        layout = RadixLayout(tuple(table.n_bins for table in binnings))
        table = build_hcb_transition(binnings, layout, data=view, alphabet_size=m)
    else:
        soft = optimize_soft(view, args.states, args.steps, args.step_size, seed=args.seed,
                             threads=args.workers)
        table = determinize(soft, view, threads=args.workers)
    output.result("states", table.state_count)
    output.result("bpv", empirical_bpv(view, table.model()))
    if args.out:
        args.out.write_bytes(table.to_bytes())
    return EXIT_OK


def cmd_adapt_scan(args: argparse.Namespace, output: OutputHandler) -> int:
    data = _load(args.input)
    view, m = _field_view(data, args.field)
    symbols = (np.concatenate([read.bases for read in view.reads]) if view.reads
               else np.zeros(0, dtype=np.int64))
    scans = scan_blocks(symbols, args.block_size, args.eta_grid or DEFAULT_ETA_GRID, m, args.adaptive_order)
    rows = [BlockScanRow(block_index=s.block_index, eta_best=s.result.eta_best,
                         half_life=s.result.half_life, bpv_best=s.result.bpv_best, flat=s.result.flat)
            for s in scans]
    _write_text(args.out, rows_to_csv(rows, column_names(BlockScanRow)))
    output.notify(f"Scanned {len(rows)} blocks", OutputEventType.PROGRESS)
    return EXIT_OK


def _plan(args: argparse.Namespace) -> CompressionPlan:
    if args.plan_file:
        plan = CompressionPlan.model_validate_json(args.plan_file.read_text())
    else:
        try:
            plan = get_plan(args.plan)
        except KeyError as e:
            raise UsageError(str(e.args[0])) from e
    if args.selector_coding:
        plan = plan.model_copy(update={"selector_coding": args.selector_coding})
    return plan


def cmd_compress(args: argparse.Namespace, output: OutputHandler) -> int:
    data = _load(args.input)
    plan = _plan(args)
    if data.reads and not data.has_qualities and (plan.qualities or plan.packed):
        output.notify("Input has no qualities; coding bases only", OutputEventType.WARNING)
        plan = plan.without_qualities()
    archive = compress(data, plan, seed=args.seed, threads=args.workers)
    for name, reason in archive_fallbacks(archive).items():
        output.notify(f"{name}: plan not honoured, {reason}", OutputEventType.WARNING)
    blob = archive.to_bytes()
    args.output.write_bytes(blob)
    for name, size in archive_summary(archive).items():
        output.result(f"{name} bytes", size)
    symbols = data.total_symbols
    output.result("total", len(blob), "bytes")
    if symbols:
        output.result("bits per read position", 8.0 * len(blob) / symbols)
    return EXIT_OK


def cmd_decompress(args: argparse.Namespace, output: OutputHandler) -> int:
    archive = Archive.from_bytes(args.input.read_bytes())
    data = decompress(archive)
    fmt = args.format
    if fmt == "auto":
        fmt = "fastq" if archive.header.has_qualities else "fasta"
    if fmt == "fastq" and data.reads and not data.has_qualities:
        raise UsageError("archive holds no qualities; use --format fasta")
    settings = get_settings()
    blob = to_fastq_bytes(data, settings.quality_offset) if fmt == "fastq" else to_fasta_bytes(data)
    args.output.write_bytes(blob)
    output.result("reads", len(data.reads))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, output: OutputHandler) -> int:
    names = [name for name in args.plans.split(",") if name]
    try:
        plans = [get_plan(name) for name in names]
    except KeyError as e:
        raise UsageError(str(e.args[0])) from e
    if not plans:
        raise UsageError("--plans names no plan")
    data = _load(args.input)
    report = evaluate_plans(data, plans, seed=args.seed, threads=args.workers, output_handler=output)
    _write_text(args.out, rows_to_csv(report.rows))
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "bin": cmd_bin,
    "cluster": cmd_cluster,
    "hscm": cmd_hscm,
    "adapt-scan": cmd_adapt_scan,
    "compress": cmd_compress,
    "decompress": cmd_decompress,
    "eval": cmd_eval,
}


def main(argv: Optional[List[str]] = None, output_handler: Optional[OutputHandler] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args.workers = args.threads or get_settings().worker_count
    output = output_handler or create_console_output_handler(quiet=args.quiet)
    try:
        return COMMANDS[args.command](args, output)
    except UsageError as e:
        output.notify(str(e), OutputEventType.ERROR)
        return EXIT_USAGE
    except (GenobinError, OSError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        output.notify(str(e), OutputEventType.ERROR)
        return EXIT_DATA


def run() -> None:
    sys.exit(main())
