"""Core package: parsing, context statistics, binning, hidden-state models, clustering and coding."""

from .errors import (
    AlphabetError,
    CodingError,
    FormatError,
    GenobinError,
    ModelError,
    ParseError,
    StatsError
)
from .seqio import Alphabet, Dataset, Field, Read, parse_fasta, parse_fastq, read_dataset
from .context_model import ConditionalModel, ContextMapper, OrderMapper, mapper_from_descriptor
from .ctxstats import ContextSpec, ContextStats, collect_stats, empirical_bpv, entropy, rate
from .binner import BinningTable, CutCriterion, MergeTree, build_merge_tree, cut_tree, enumerate_for_shift
from .nesting import NestingScheme, nested_binning
from .hscm import SoftHscm, TransitionTable, build_hcb_transition, determinize, forward_evaluate, optimize_soft
from .clusterer import ModelSet, header_cost, kmeans_cluster, read_model_cost
from .adaptive import AdaptiveCdf, EmaEstimator, cdf_update, ema_update, search_half_life
from .rans import FreqTable, decode, encode, normalize_freqs

__all__ = [
    "AlphabetError",
    "CodingError",
    "FormatError",
    "GenobinError",
    "ModelError",
    "ParseError",
    "StatsError",
    "Alphabet",
    "Dataset",
    "Field",
    "Read",
    "parse_fasta",
    "parse_fastq",
    "read_dataset",
    "ConditionalModel",
    "ContextMapper",
    "OrderMapper",
    "mapper_from_descriptor",
    "ContextSpec",
    "ContextStats",
    "collect_stats",
    "empirical_bpv",
    "entropy",
    "rate",
    "BinningTable",
    "CutCriterion",
    "MergeTree",
    "build_merge_tree",
    "cut_tree",
    "enumerate_for_shift",
    "NestingScheme",
    "nested_binning",
    "SoftHscm",
    "TransitionTable",
    "build_hcb_transition",
    "determinize",
    "forward_evaluate",
    "optimize_soft",
    "ModelSet",
    "header_cost",
    "kmeans_cluster",
    "read_model_cost",
    "AdaptiveCdf",
    "EmaEstimator",
    "cdf_update",
    "ema_update",
    "search_half_life",
    "FreqTable",
    "decode",
    "encode",
    "normalize_freqs"
]
