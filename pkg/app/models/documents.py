"""JSON documents for genomes, generators and composition trees"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.models.config import GenParams, TileEntry


class NodeGeneDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int
    role: Literal["input", "output", "hidden", "bias"]


class ConnectionGeneDocument(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    innov: int
    from_node: int = Field(alias="from")
    to_node: int = Field(alias="to")
    weight: float
    enabled: bool = True


class GenomeDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    nodes: List[NodeGeneDocument]
    connections: List[ConnectionGeneDocument]


class GeneratorDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    genome: GenomeDocument
    params: GenParams
    tileset: List[TileEntry]
    ndim: Literal[2, 3] = 2
    metadata: Dict[str, Any] = Field(default_factory=dict)


class TreeNodeDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    generator: str
    subtile_size: Optional[List[int]] = None
    child_height: Optional[int] = Field(None, ge=1)
    mapping: Dict[str, str] = Field(default_factory=dict)
    coalesce: bool = True
    lift_fill: str = "air"


class TreeDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    root: str
    nodes: Dict[str, TreeNodeDocument]
