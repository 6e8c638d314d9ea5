"""Archive header models (serialised as compressed JSON inside CGC1 archives)."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel

from .plan_models import FieldPlan


class StreamInfo(BaseModel):
    """One named payload in stream order."""
    name: str
    size: int
    symbols: int = 0


class FieldModelHeader(BaseModel):
    """Everything the decoder needs to rebuild one field's coding model."""
    field: str
    alphabet_size: int
    plan: FieldPlan
    mapper: Dict[str, Any]
    centroids: int = 1
    selector_freqs: Optional[List[int]] = None
    adaptive: bool = False
    fallback: Optional[str] = None


class ArchiveHeader(BaseModel):
    """Self-describing archive header."""
    version: int
    plan_name: str
    read_count: int
    source_format: str = "fastq"
    has_qualities: bool = False
    has_ids: bool = True
    quality_alphabet_size: int = 64
    quality_offset: int = 33
    precision: int = 12
    selector_coding: str = "entropy"
    fields: List[FieldModelHeader] = []
    streams: List[StreamInfo] = []

    def stream_size(self, name: str) -> int:
        for stream in self.streams:
            if stream.name == name:
                return stream.size
        raise KeyError(name)
