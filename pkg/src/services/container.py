"""CGC1 archive: compress and decompress pipelines.

Layout::

    "CGC1" | u16 version | u32 header length | zlib(JSON ArchiveHeader) | streams

Streams follow in the order listed by the header: ``lengths``, ``ids``, then
for every coded field ``<field>.model`` (zlib'd uint16 frequency tables, one
set per centroid), ``<field>.selectors`` when the field is clustered, and
``<field>`` (the rANS payload).
"""

import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config.settings import get_settings
from ..core import hscm, nesting  # noqa: F401  (registers mapper kinds)
from ..core.adaptive import AdaptiveProvider
from ..core.binner import CutCriterion, bin_contexts
from ..core.clusterer import kmeans_cluster
from ..core.context_model import (
    BinnedMapper,
    ConditionalModel,
    ContextMapper,
    OrderMapper,
    PositionMapper,
    PositionPrevMapper,
    StaticReadProvider,
    mapper_from_descriptor,
)
from ..core.ctxstats import ContextSpec, collect_stats
from ..core.errors import FormatError, ModelError, StatsError
from ..core.hscm import RadixLayout, build_hcb_transition, train_hcb_binnings
from ..core.nesting import NestingScheme, nested_binning
from ..core.rans import FreqTable, StaticProvider, decode, encode, normalize_freqs
from ..core.seqio import (
    Alphabet,
    Dataset,
    Field,
    Read,
    SourceFormat,
    decode_id,
    encode_id,
    field_alphabet,
    field_view,
    unpack_symbols,
)
from ..models.archive_models import ArchiveHeader, FieldModelHeader, StreamInfo
from ..models.plan_models import CompressionPlan, FieldPlan, ModelKind

logger = logging.getLogger(__name__)

ARCHIVE_MAGIC = b"CGC1"
ARCHIVE_VERSION = 1
LENGTH_BYTES = 4
LENGTH_RATE = 4
FALLBACK_CONTEXTS = 1 << 12


@dataclass
class Archive:
    """Header plus named stream payloads in header order."""
    header: ArchiveHeader
    streams: Dict[str, bytes] = field(default_factory=dict)

    @property
    def stream_bytes(self) -> int:
        return sum(len(payload) for payload in self.streams.values())

    def to_bytes(self) -> bytes:
        header = zlib.compress(self.header.model_dump_json().encode("utf-8"), 9)
        out = bytearray(ARCHIVE_MAGIC + struct.pack("<HI", self.header.version, len(header)) + header)
        for info in self.header.streams:
            out += self.streams[info.name]
        return bytes(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Archive":
        """Parse an archive.

        Raises:
            FormatError: On bad magic, unsupported version or stream length mismatch
        """
        if blob[:4] != ARCHIVE_MAGIC:
            raise FormatError("not a CGC1 archive (bad magic)")
        if len(blob) < 10:
            raise FormatError("archive truncated inside the preamble")
        version, header_length = struct.unpack_from("<HI", blob, 4)
        if version != ARCHIVE_VERSION:
            raise FormatError(f"unsupported archive version {version}")
        offset = 10 + header_length
        try:
            header = ArchiveHeader.model_validate_json(zlib.decompress(blob[10:offset]))
        except (zlib.error, ValueError) as e:
            raise FormatError(f"archive header is unreadable: {e}") from e
        streams = {}
        for info in header.streams:
            payload = blob[offset: offset + info.size]
            if len(payload) != info.size:
                raise FormatError(f"stream {info.name!r} truncated ({len(payload)} of {info.size} bytes)")
            streams[info.name] = payload
            offset += info.size
        if offset != len(blob):
            raise FormatError(f"{len(blob) - offset} trailing bytes after the last stream")
        return cls(header, streams)


def _length_mapper() -> PositionMapper:
    return PositionMapper(256, LENGTH_BYTES)


def _encode_lengths(lengths: Sequence[int]) -> bytes:
    raw = np.asarray(lengths, dtype="<u4").tobytes()
    provider = AdaptiveProvider(_length_mapper(), [LENGTH_BYTES] * len(lengths), LENGTH_RATE, update_period=1)
    return encode(list(raw), provider)


def _decode_lengths(payload: bytes, count: int) -> np.ndarray:
    provider = AdaptiveProvider(_length_mapper(), [LENGTH_BYTES] * count, LENGTH_RATE, update_period=1)
    raw = bytes(decode(payload, count * LENGTH_BYTES, provider))
    return np.frombuffer(raw, dtype="<u4").astype(np.int64)


def build_mapper(view: Dataset, plan: FieldPlan, alphabet_size: int,
                 threads: int = 1) -> Tuple[ContextMapper, Optional[str]]:
    """Train (where needed) the context mapper a field plan names.

    Returns:
        The mapper and, when the plan could not be honoured, the reason an
        order model was used instead
    """
    if plan.model in (ModelKind.ORDER, ModelKind.ADAPTIVE):
        return OrderMapper(alphabet_size, plan.order), None
    if plan.model == ModelKind.POSITION:
        return PositionMapper(alphabet_size, plan.max_pos), None
    if plan.model == ModelKind.POSITION_PREV:
        return PositionPrevMapper(alphabet_size, plan.max_pos), None
    if not any(len(read) > plan.order for read in view.reads):
        reason = f"too little data to train a {plan.model.value} model"
    else:
        try:
            return _trained_mapper(view, plan, alphabet_size, threads), None
        except (ModelError, StatsError) as e:
            reason = f"{plan.model.value} training failed ({e})"
    mapper = _fallback_mapper(alphabet_size, plan.order)
    logger.warning(f"{reason}; using an order-{mapper.order} model")
    return mapper, f"{reason}; used order {mapper.order}"


def _fallback_mapper(alphabet_size: int, order: int) -> OrderMapper:
    """Plain order-l mapper with l lowered until m^l fits FALLBACK_CONTEXTS."""
    while order > 0 and alphabet_size ** order > FALLBACK_CONTEXTS:
        order -= 1
    return OrderMapper(alphabet_size, order)


def _trained_mapper(view: Dataset, plan: FieldPlan, alphabet_size: int, threads: int) -> ContextMapper:
    if plan.model == ModelKind.BINNED:
        stats = collect_stats(view, ContextSpec.order_l(plan.order, alphabet_size), threads=threads)
        if plan.penalty is not None:
            criterion = CutCriterion.max_penalty(plan.penalty)
        else:
            criterion = CutCriterion.max_bins(plan.bins or alphabet_size)
        return BinnedMapper(alphabet_size, plan.order, [bin_contexts(stats, criterion)])
    if plan.model == ModelKind.NESTED:
        model = nested_binning(view, NestingScheme(plan.scheme), plan.order, plan.budgets,
                               alphabet_size, threads=threads)
        return model.mapper
    if plan.model == ModelKind.HSCM:
        binnings = train_hcb_binnings(view, plan.levels or [alphabet_size], alphabet_size)
        layout = RadixLayout(tuple(table.n_bins for table in binnings))
        return build_hcb_transition(binnings, layout, alphabet_size=alphabet_size).mapper()
    raise ModelError(f"unsupported model kind {plan.model}")


@dataclass
class FieldModel:
    """Trained coding model of one field: mapper, per-centroid tables, selectors."""
    mapper: ContextMapper
    tables: List[List[FreqTable]]
    selectors: np.ndarray
    models: List[ConditionalModel] = field(default_factory=list)
    fallback: Optional[str] = None


def fit_field_model(view: Dataset, plan: FieldPlan, alphabet_size: int, precision: int,
                    seed: int = 0, threads: int = 1, max_iter: int = 50) -> FieldModel:
    """Mapper, optional clustering and quantized tables for a static field plan."""
    mapper, fallback = build_mapper(view, plan, alphabet_size, threads)
    reads = [read.bases for read in view.reads]
    k = min(plan.clusters, max(len(reads), 1))
    if k < plan.clusters:
        logger.warning(f"Clamping {plan.clusters} clusters to {k} reads")
    if k > 1:
        model_set = kmeans_cluster(view, mapper, k, max_iter=max_iter, seed=seed, threads=threads)
        models = model_set.centroids
        selectors = model_set.assignment.astype(np.int64)
    else:
        models = [ConditionalModel.fit(mapper, reads)]
        selectors = np.zeros(len(reads), dtype=np.int64)
    tables = [model.freq_tables(precision) for model in models]
    return FieldModel(mapper, tables, selectors, models, fallback)


def _tables_blob(tables: List[List[FreqTable]]) -> bytes:
    array = np.array([[table.freqs for table in centroid] for centroid in tables], dtype="<u2")
    return zlib.compress(array.tobytes(), 9)


def _tables_from_blob(blob: bytes, centroids: int, contexts: int, alphabet_size: int,
                      precision: int) -> List[List[FreqTable]]:
    try:
        raw = zlib.decompress(blob)
    except zlib.error as e:
        raise FormatError(f"model tables are corrupted: {e}") from e
    array = np.frombuffer(raw, dtype="<u2")
    if array.size != centroids * contexts * alphabet_size:
        raise FormatError("model table stream has the wrong size")
    array = array.reshape(centroids, contexts, alphabet_size)
    try:
        return [[FreqTable.from_freqs(row, precision) for row in centroid] for centroid in array]
    except ValueError as e:
        raise FormatError(f"invalid frequency table in archive: {e}") from e


def _selector_table(header: FieldModelHeader, coding: str, precision: int) -> FreqTable:
    if coding == "flat" or not header.selector_freqs:
        return normalize_freqs(np.ones(header.centroids), precision)
    return FreqTable.from_freqs(header.selector_freqs, precision)


def _field_symbols(data: Dataset, name: str) -> Tuple[Dataset, int]:
    view = field_view(data, Field(name))
    return view, field_alphabet(data, Field(name)).size


def compress(data: Dataset, plan: CompressionPlan, seed: Optional[int] = None,
             threads: Optional[int] = None) -> Archive:
    """Model every field the plan names and entropy-code it.

    Raises:
        ModelError: If the plan codes qualities and the dataset has none
    """
    settings = get_settings()
    seed = settings.seed if seed is None else seed
    threads = threads or settings.worker_count
    precision = settings.rans_precision
    has_qualities = data.has_qualities
    for name, _ in plan.field_plans():
        if name in ("qualities", "packed") and data.reads and not has_qualities:
            raise ModelError(f"plan {plan.name!r} codes {name} but the dataset has no qualities")

    lengths = data.lengths
    streams: Dict[str, bytes] = {}
    infos: List[StreamInfo] = []

    def add(name: str, payload: bytes, symbols: int = 0) -> None:
        streams[name] = payload
        infos.append(StreamInfo(name=name, size=len(payload), symbols=symbols))

    add("lengths", _encode_lengths(lengths), len(lengths))
    has_ids = any(read.id for read in data.reads)
    add("ids", zlib.compress(b"\n".join(encode_id(read.id) for read in data.reads), 9) if has_ids else b"")

    field_headers: List[FieldModelHeader] = []
    for name, field_plan in plan.field_plans():
        view, m = _field_symbols(data, name)
        symbols = np.concatenate([read.bases for read in view.reads]).astype(np.int64) \
            if data.reads else np.zeros(0, dtype=np.int64)
        if field_plan.model == ModelKind.ADAPTIVE:
            mapper = OrderMapper(m, field_plan.order)
            provider = AdaptiveProvider(mapper, lengths, field_plan.rate, precision, field_plan.update_period)
            field_headers.append(FieldModelHeader(field=name, alphabet_size=m, plan=field_plan,
                                                  mapper=mapper.descriptor(), adaptive=True))
            add(name, encode(symbols, provider), len(symbols))
            logger.info(f"{name}: adaptive order-{field_plan.order}, {len(streams[name])} bytes")
            continue

        model = fit_field_model(view, field_plan, m, precision, seed, threads, settings.kmeans_max_iter)
        k = len(model.tables)
        field_header = FieldModelHeader(field=name, alphabet_size=m, plan=field_plan,
                                        mapper=model.mapper.descriptor(), centroids=k,
                                        fallback=model.fallback)
        add(f"{name}.model", _tables_blob(model.tables))
        if k > 1:
            if plan.selector_coding == "entropy":
                field_header.selector_freqs = list(normalize_freqs(
                    np.bincount(model.selectors, minlength=k) + 0.5, precision).freqs)
            table = _selector_table(field_header, plan.selector_coding, precision)
            add(f"{name}.selectors", encode(model.selectors, StaticProvider(table)), len(model.selectors))
        field_headers.append(field_header)
        provider = StaticReadProvider(model.mapper, lengths, model.tables, model.selectors)
        add(name, encode(symbols, provider), len(symbols))
        logger.info(f"{name}: {field_plan.model.value} model, k={k}, {len(streams[name])} bytes")

    header = ArchiveHeader(
        version=ARCHIVE_VERSION,
        plan_name=plan.name,
        read_count=len(data.reads),
        source_format=data.source_format.value,
        has_qualities=has_qualities,
        has_ids=has_ids,
        quality_alphabet_size=(data.quality_alphabet or Alphabet.quality(settings.quality_alphabet_size)).size,
        quality_offset=settings.quality_offset,
        precision=precision,
        selector_coding=plan.selector_coding,
        fields=field_headers,
        streams=infos,
    )
    return Archive(header, streams)


def decompress(archive: Archive) -> Dataset:
    """Rebuild the dataset from an archive.

    Raises:
        FormatError: On missing streams or inconsistent sizes
        CodingError: On corrupted payloads (rANS final-state check)
    """
    header = archive.header
    count = header.read_count
    try:
        lengths = _decode_lengths(archive.streams["lengths"], count)
        ids_blob = archive.streams["ids"]
    except KeyError as e:
        raise FormatError(f"archive is missing stream {e}") from e
    ids = [decode_id(raw) for raw in zlib.decompress(ids_blob).split(b"\n")] if header.has_ids else [""] * count
    if len(ids) != count:
        raise FormatError("id block does not match the read count")

    decoded: Dict[str, List[np.ndarray]] = {}
    bounds = np.concatenate([[0], np.cumsum(lengths)])
    for field_header in header.fields:
        name = field_header.field
        m = field_header.alphabet_size
        try:
            mapper = mapper_from_descriptor(field_header.mapper)
            payload = archive.streams[name]
            if field_header.adaptive:
                plan = field_header.plan
                provider = AdaptiveProvider(mapper, lengths, plan.rate, header.precision, plan.update_period)
            else:
                tables = _tables_from_blob(archive.streams[f"{name}.model"], field_header.centroids,
                                           mapper.n_contexts, m, header.precision)
                selectors = np.zeros(count, dtype=np.int64)
                if field_header.centroids > 1:
                    table = _selector_table(field_header, header.selector_coding, header.precision)
                    selectors = np.array(decode(archive.streams[f"{name}.selectors"], count,
                                                StaticProvider(table)), dtype=np.int64)
                provider = StaticReadProvider(mapper, lengths, tables, selectors)
        except KeyError as e:
            raise FormatError(f"archive is missing stream {e}") from e
        flat = np.array(decode(payload, int(bounds[-1]), provider), dtype=np.int64)
        decoded[name] = [flat[bounds[i]: bounds[i + 1]] for i in range(count)]

    quality_alphabet = Alphabet.quality(header.quality_alphabet_size) if header.has_qualities else None
    reads = []
    for i in range(count):
        if "packed" in decoded:
            qualities, bases = unpack_symbols(decoded["packed"][i])
        else:
            bases = decoded["bases"][i].astype(np.uint8) if "bases" in decoded else np.zeros(lengths[i], np.uint8)
            qualities = decoded["qualities"][i].astype(np.uint8) if "qualities" in decoded else None
        reads.append(Read(np.ascontiguousarray(bases), qualities, ids[i]))
    return Dataset(tuple(reads), Alphabet.bases(), quality_alphabet,
                   source_format=SourceFormat(header.source_format))


def archive_summary(archive: Archive) -> Dict[str, int]:
    """Byte size of every stream plus the header, for reports."""
    summary = {info.name: info.size for info in archive.header.streams}
    summary["header"] = len(archive.to_bytes()) - archive.stream_bytes
    return summary


def archive_fallbacks(archive: Archive) -> Dict[str, str]:
    """Fields whose plan could not be honoured, with the reason."""
    return {f.field: f.fallback for f in archive.header.fields if f.fallback}


def header_json(archive: Archive) -> str:
    return json.dumps(json.loads(archive.header.model_dump_json()), indent=2)
