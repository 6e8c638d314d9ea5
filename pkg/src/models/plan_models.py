"""Compression plan models."""

from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, Field as PydanticField, field_validator


class ModelKind(str, Enum):
    """Model pipelines a field can be coded with."""
    ORDER = "order"
    POSITION = "position"
    POSITION_PREV = "position_prev"
    BINNED = "binned"
    NESTED = "nested"
    HSCM = "hscm"
    ADAPTIVE = "adaptive"


class FieldPlan(BaseModel):
    """How one field (bases, qualities or packed) is modelled."""
    model: ModelKind = ModelKind.ORDER
    order: int = PydanticField(default=1, ge=0)
    bins: Optional[int] = PydanticField(default=None, ge=1)     # binned: max bins
    penalty: Optional[float] = PydanticField(default=None, ge=0)  # binned: max penalty in bpv
    scheme: Literal["symmetric", "asymmetric", "hierarchical"] = "symmetric"
    budgets: List[int] = PydanticField(default_factory=list)
    levels: List[int] = PydanticField(default_factory=list)     # hscm: bins per HCB level
    max_pos: int = PydanticField(default=128, ge=1)
    clusters: int = PydanticField(default=1, ge=1)
    rate: int = PydanticField(default=4, ge=1)
    update_period: int = PydanticField(default=16, ge=1)

    @field_validator("clusters")
    @classmethod
    def adaptive_is_unclustered(cls, value, info):
        if value > 1 and info.data.get("model") == ModelKind.ADAPTIVE:
            raise ValueError("adaptive models are not clustered")
        return value


class CompressionPlan(BaseModel):
    """Per-field model pipelines plus selector coding."""
    name: str
    bases: Optional[FieldPlan] = None
    qualities: Optional[FieldPlan] = None
    packed: Optional[FieldPlan] = None
    selector_coding: Literal["entropy", "flat"] = "entropy"

    @field_validator("packed")
    @classmethod
    def packed_excludes_fields(cls, value, info):
        if value is not None and (info.data.get("bases") or info.data.get("qualities")):
            raise ValueError("a packed plan codes bases and qualities together")
        return value

    def field_plans(self):
        """(field name, plan) pairs in stream order."""
        pairs = [("bases", self.bases), ("qualities", self.qualities), ("packed", self.packed)]
        return [(name, plan) for name, plan in pairs if plan is not None]

    def without_qualities(self) -> "CompressionPlan":
        """Same plan restricted to bases (for inputs without qualities)."""
        bases = self.bases or FieldPlan(order=2)
        return CompressionPlan(name=self.name, bases=bases, selector_coding=self.selector_coding)


PRESET_PLANS = {
    "order0": CompressionPlan(name="order0", bases=FieldPlan(order=0), qualities=FieldPlan(order=0)),
    "order1": CompressionPlan(name="order1", bases=FieldPlan(order=1), qualities=FieldPlan(order=1)),
    "order2": CompressionPlan(name="order2", bases=FieldPlan(order=2), qualities=FieldPlan(order=2)),
    "order1-binned": CompressionPlan(
        name="order1-binned",
        bases=FieldPlan(model=ModelKind.BINNED, order=3, bins=32),
        qualities=FieldPlan(model=ModelKind.BINNED, order=1, penalty=0.01),
    ),
    "position": CompressionPlan(
        name="position",
        bases=FieldPlan(order=2),
        qualities=FieldPlan(model=ModelKind.POSITION_PREV, max_pos=128),
    ),
    "default": CompressionPlan(
        name="default",
        bases=FieldPlan(model=ModelKind.BINNED, order=3, bins=32),
        qualities=FieldPlan(model=ModelKind.NESTED, order=4, budgets=[64, 256], clusters=4),
    ),
    "adaptive": CompressionPlan(
        name="adaptive",
        bases=FieldPlan(model=ModelKind.ADAPTIVE, order=2),
        qualities=FieldPlan(model=ModelKind.ADAPTIVE, order=1),
    ),
    "hscm": CompressionPlan(
        name="hscm",
        bases=FieldPlan(order=2),
        qualities=FieldPlan(model=ModelKind.HSCM, levels=[8, 4, 2]),
    ),
    "packed": CompressionPlan(name="packed", packed=FieldPlan(order=1)),
}


def get_plan(name: str) -> CompressionPlan:
    """Preset plan by name.

    Raises:
        KeyError: If no preset has that name
    """
    if name not in PRESET_PLANS:
        raise KeyError(f"unknown plan {name!r}; choose from {', '.join(PRESET_PLANS)}")
    return PRESET_PLANS[name].model_copy(deep=True)
