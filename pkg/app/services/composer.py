"""Recursive composition of generators.

A node generates an abstract map at ``size / scale(node)``. Without a mapping
that map is the result. Otherwise the map is coalesced into rectangles and each
rectangle is filled by composing the mapped child at ``scale(node) * extent``.
``subtile_size`` counts abstract tiles of the child per parent tile, so with
leaf children a tile becomes an ``S_g`` block and deeper trees multiply out.

A 2D node with ``child_height`` lifts its output to 3D: 3D children get the
full column, 2D children are laid on the ground layer and the rest of the
column is ``lift_fill``.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.exceptions import FormatError, MappingError, SizeError, StructureError
from app.models.documents import TreeDocument, TreeNodeDocument
from app.models.level import CoalescedRect, Grid, Tileset
from app.services.generator import GeneratorSpec, generate, load_generator, save_generator
from app.services.grid import coalesce as coalesce_rects
from app.services.grid import remap
from app.services.seeding import SeedLike, as_sequence, child_sequence, generator as make_generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CompositionNode:
    generator: GeneratorSpec
    subtile_size: Optional[Tuple[int, ...]] = None
    mapping: Optional[Mapping[int, "CompositionNode"]] = None
    child_height: Optional[int] = None
    coalesce: bool = True
    lift_fill: str = "air"
    name: str = ""

    def __post_init__(self):
        ndim = self.generator.ndim
        size = tuple(self.subtile_size) if self.subtile_size is not None else (1,) * ndim
        if len(size) != ndim or any(s < 1 for s in size):
            raise StructureError(f"subtile_size {size} invalid for a {ndim}D generator")
        object.__setattr__(self, "subtile_size", tuple(int(s) for s in size))
        if self.mapping:
            mapping = {}
            for tile, child in self.mapping.items():
                mapping[self.generator.tileset.check_index(tile)] = child
            object.__setattr__(self, "mapping", dict(sorted(mapping.items())))
        else:
            object.__setattr__(self, "mapping", None)
        if self.is_leaf and any(s != 1 for s in self.subtile_size):
            raise StructureError("a leaf returns its map directly, so its subtile_size must be all ones")
        if self.child_height is not None:
            if self.is_leaf or ndim != 2:
                raise StructureError("child_height only applies to 2D nodes with a mapping")
            if self.child_height < 1:
                raise StructureError(f"child_height must be positive, got {self.child_height}")

    @property
    def is_leaf(self) -> bool:
        return not self.mapping

    @property
    def output_ndim(self) -> int:
        return 3 if self.generator.ndim == 3 or self.child_height is not None else 2

    def children(self) -> List["CompositionNode"]:
        return list(self.mapping.values()) if self.mapping else []


@dataclass(frozen=True)
class CoalescedPlacement:
    child: CompositionNode = field(repr=False)
    origin: Tuple[int, ...]
    size: Tuple[int, ...]
    tile: int

    def slices(self) -> Tuple[slice, ...]:
        return tuple(slice(o, o + s) for o, s in zip(self.origin, self.size))


def placements(node: CompositionNode, abstract: Grid, coalesce: Optional[bool] = None) -> List[CoalescedPlacement]:
    """Child placements for an abstract map, in output coordinates"""
    if node.is_leaf:
        raise StructureError("a leaf node has no placements")
    step = scale(node)
    use_coalesce = node.coalesce if coalesce is None else coalesce
    if use_coalesce:
        rects = coalesce_rects(abstract)
    else:
        rects = [
            CoalescedRect(pos, (1,) * abstract.ndim, int(abstract.tiles[pos]))
            for pos in _row_major(abstract.dims)
        ]
    result = []
    for rect in rects:
        child = node.mapping.get(rect.tile)
        if child is None:
            raise MappingError(
                f"tile '{abstract.tileset.names[rect.tile]}' has no child generator in node '{node.name or '?'}'"
            )
        origin = tuple(o * s for o, s in zip(rect.origin, step))
        size = tuple(e * s for e, s in zip(rect.extent, step))
        result.append(CoalescedPlacement(child, origin, size, rect.tile))
    return result


def _row_major(dims: Sequence[int]):
    for rev in np.ndindex(*reversed(dims)):
        yield tuple(int(i) for i in reversed(rev))


def composite_tileset(node: CompositionNode) -> Tileset:
    """Ordered union of every tileset the node's output can contain"""
    if node.is_leaf:
        return node.generator.tileset
    tileset: Optional[Tileset] = None
    for child in node.children():
        child_tiles = composite_tileset(child)
        tileset = child_tiles if tileset is None else tileset.union(child_tiles)
    if node.child_height is not None:
        tileset = tileset.union(Tileset.from_names([node.lift_fill]))
    return tileset


def _output_size(node: CompositionNode, size: Sequence[int]) -> Tuple[int, ...]:
    size = tuple(int(s) for s in size)
    if node.child_height is not None and len(size) == 2:
        size = size + (node.child_height,)
    if len(size) != node.output_ndim:
        raise SizeError(f"node with {node.output_ndim}D output asked for size {size}")
    if any(s <= 0 for s in size):
        raise SizeError(f"size must be positive, got {size}")
    if node.child_height is not None and size[2] != node.child_height:
        raise SizeError(f"lifted node has height {node.child_height}, asked for {size[2]}")
    return size


def compose(node: CompositionNode, size: Sequence[int], seed: SeedLike = 0, coalesce: Optional[bool] = None) -> Grid:
    """Generate a level of ``size`` from the tree rooted at ``node``.

    ``coalesce`` overrides every node's own flag when not None.
    """
    return _compose(node, _output_size(node, size), as_sequence(seed), coalesce)


def _compose(node, size, seq, coalesce) -> Grid:
    planar = size[: node.generator.ndim]
    step = scale(node) or (1,) * node.generator.ndim
    if any(s % g for s, g in zip(planar, step)):
        raise SizeError(f"size {planar} not divisible by scale {step}")
    abstract_size = tuple(s // g for s, g in zip(planar, step))
    abstract = generate(node.generator, abstract_size, make_generator(seq, 0))
    if node.is_leaf:
        return abstract

    out_tiles = composite_tileset(node)
    fill = out_tiles.index(node.lift_fill) if node.child_height is not None else -1
    out = np.full(size, fill, dtype=np.int64)
    for placement in placements(node, abstract, coalesce):
        child = placement.child
        region = placement.slices()
        child_size = placement.size
        if node.child_height is not None:
            if child.output_ndim == 3:
                child_size = child_size + (node.child_height,)
            else:
                region = region + (0,)
        elif child.output_ndim != node.generator.ndim:
            raise StructureError(f"{child.output_ndim}D child under a {node.generator.ndim}D node needs child_height")
        key = child_sequence(seq, 1, *placement.origin)
        sub = _compose(child, child_size, key, coalesce)
        out[region] = remap(sub, out_tiles).tiles
        logger.debug("placed %s at %s size %s", child.name or "child", placement.origin, child_size)
    if (out < 0).any():
        raise StructureError("placements left part of the level empty")
    return Grid(out, out_tiles)


def rebind(node: CompositionNode, tile: int, child: CompositionNode) -> CompositionNode:
    """Copy of ``node`` whose ``tile`` expands through ``child``"""
    if node.is_leaf:
        raise StructureError("cannot rebind a tile of a leaf node")
    tile = node.generator.tileset.check_index(tile)
    mapping = dict(node.mapping)
    mapping[tile] = child
    return replace(node, mapping=mapping)


def scale(node: CompositionNode) -> Optional[Tuple[int, ...]]:
    """Expansion factor from the node's abstract map to its output; None for scale-free leaves"""
    if node.is_leaf:
        return None
    ndim = node.generator.ndim
    child_scales = {s[:ndim] for s in (scale(c) for c in node.children()) if s is not None}
    if len(child_scales) > 1:
        raise StructureError(f"children of '{node.name or '?'}' expand at different scales {sorted(child_scales)}")
    common = child_scales.pop() if child_scales else (1,) * ndim
    return tuple(a * b for a, b in zip(node.subtile_size, common))


def total_size(node: CompositionNode, abstract_size: Sequence[int]) -> Tuple[int, ...]:
    factor = scale(node) or (1,) * len(abstract_size)
    size = tuple(int(a) * f for a, f in zip(abstract_size, factor))
    if node.child_height is not None:
        size = size + (node.child_height,)
    return size


def depth(node: CompositionNode) -> int:
    return 1 + max((depth(c) for c in node.children()), default=0)


# Tree documents

def tree_to_document(node: CompositionNode) -> Tuple[TreeDocument, Dict[str, GeneratorSpec]]:
    """Document plus the generator each relative path must hold"""
    names: Dict[int, str] = {}
    nodes: Dict[str, TreeNodeDocument] = {}
    generators: Dict[str, GeneratorSpec] = {}
    claimed = set()
    stack = [node]
    while stack:
        n = stack.pop()
        if n.name:
            claimed.add(n.name)
        stack.extend(n.children())

    def visit(n: CompositionNode) -> str:
        if id(n) in names:
            return names[id(n)]
        name = n.name
        if not name or name in nodes:
            k = len(names)
            while f"node{k}" in nodes or f"node{k}" in claimed:
                k += 1
            name = f"node{k}"
        names[id(n)] = name
        nodes[name] = None  # reserve
        path = f"generators/{name}.json"
        generators[path] = n.generator
        mapping = {}
        for tile, child in (n.mapping or {}).items():
            mapping[n.generator.tileset.names[tile]] = visit(child)
        nodes[name] = TreeNodeDocument(
            generator=path,
            subtile_size=list(n.subtile_size),
            child_height=n.child_height,
            mapping=mapping,
            coalesce=n.coalesce,
            lift_fill=n.lift_fill,
        )
        return name

    root = visit(node)
    return TreeDocument(root=root, nodes=nodes), generators


def save_tree(node: CompositionNode, directory: Path) -> TreeDocument:
    directory = Path(directory)
    document, generators = tree_to_document(node)
    for rel, spec in generators.items():
        (directory / rel).parent.mkdir(parents=True, exist_ok=True)
        save_generator(spec, directory / rel)
    (directory / "tree.json").write_text(document.model_dump_json(indent=2, exclude_none=True))
    return document


def load_tree(document: Union[TreeDocument, dict, Path, str], base_dir: Optional[Path] = None) -> CompositionNode:
    """Build the tree; generator paths resolve against ``base_dir``"""
    if isinstance(document, (str, Path)):
        path = Path(document)
        if not path.exists():
            raise FormatError(f"tree file {path} does not exist")
        base_dir = base_dir or path.parent
        try:
            document = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"tree file {path} is not valid JSON: {e}") from e
    if isinstance(document, dict):
        try:
            document = TreeDocument.model_validate(document)
        except ValidationError as e:
            raise FormatError(f"invalid tree document: {e}") from e
    base_dir = Path(base_dir or ".")
    built: Dict[str, CompositionNode] = {}
    loaded: Dict[str, GeneratorSpec] = {}

    def build(name: str, visiting: Tuple[str, ...]) -> CompositionNode:
        if name in visiting:
            raise FormatError(f"cyclic reference through node '{name}'")
        if name in built:
            return built[name]
        if name not in document.nodes:
            raise FormatError(f"unknown node '{name}'")
        entry = document.nodes[name]
        if entry.generator not in loaded:
            path = base_dir / entry.generator
            if not path.exists():
                raise FormatError(f"node '{name}' references missing generator file {path}")
            loaded[entry.generator] = load_generator(path)
        spec = loaded[entry.generator]
        mapping = {}
        for tile_name, child_name in entry.mapping.items():
            if tile_name not in spec.tileset.names:
                raise FormatError(f"node '{name}' maps unknown tile '{tile_name}'")
            mapping[spec.tileset.index(tile_name)] = build(child_name, visiting + (name,))
        node = CompositionNode(
            generator=spec,
            subtile_size=tuple(entry.subtile_size) if entry.subtile_size else None,
            mapping=mapping or None,
            child_height=entry.child_height,
            coalesce=entry.coalesce,
            lift_fill=entry.lift_fill,
            name=name,
        )
        built[name] = node
        return node

    return build(document.root, ())
