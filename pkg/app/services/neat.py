"""Minimal feed-forward NEAT.

Node ids are laid out as inputs ``0..n_in-1``, bias ``n_in``, outputs
``n_in+1..n_in+n_out``; hidden ids come from the InnovationRegistry so two
genomes that split the same connection get the same hidden node.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import ArityError, EvaluationError, FormatError, SizeError
from app.models.config import NeatParams
from app.models.documents import ConnectionGeneDocument, GenomeDocument, NodeGeneDocument
from app.services import kernels

logger = logging.getLogger(__name__)


class NodeRole(str, Enum):
    INPUT = "input"
    OUTPUT = "output"
    HIDDEN = "hidden"
    BIAS = "bias"


@dataclass(frozen=True)
class NodeGene:
    id: int
    role: NodeRole


@dataclass(frozen=True)
class ConnectionGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool = True


@dataclass(frozen=True)
class Genome:
    nodes: Tuple[NodeGene, ...]
    connections: Tuple[ConnectionGene, ...]

    @property
    def input_ids(self) -> List[int]:
        return [n.id for n in self.nodes if n.role is NodeRole.INPUT]

    @property
    def output_ids(self) -> List[int]:
        return [n.id for n in self.nodes if n.role is NodeRole.OUTPUT]

    @property
    def bias_id(self) -> int:
        return next(n.id for n in self.nodes if n.role is NodeRole.BIAS)

    @property
    def n_inputs(self) -> int:
        return len(self.input_ids)

    @property
    def n_outputs(self) -> int:
        return len(self.output_ids)

    def structure(self) -> Tuple[Tuple[NodeGene, ...], Tuple[Tuple[int, int, int], ...]]:
        """Topology without weights or enabled flags"""
        return self.nodes, tuple((c.innovation, c.src, c.dst) for c in self.connections)


class InnovationRegistry:
    """Run-wide bookkeeping of structural mutations"""

    def __init__(self, n_inputs: int, n_outputs: int):
        self._connections: Dict[Tuple[int, int], int] = {}
        self._splits: Dict[int, int] = {}
        self.next_innovation = 0
        self.next_node = n_inputs + 1 + n_outputs
        # Same numbering init_genome uses
        for src in range(n_inputs + 1):
            for o in range(n_outputs):
                self.connection(src, n_inputs + 1 + o)

    def connection(self, src: int, dst: int) -> int:
        key = (src, dst)
        if key not in self._connections:
            self._connections[key] = self.next_innovation
            self.next_innovation += 1
        return self._connections[key]

    def split(self, innovation: int) -> int:
        if innovation not in self._splits:
            self._splits[innovation] = self.next_node
            self.next_node += 1
        return self._splits[innovation]


def init_genome(n_inputs: int, n_outputs: int, rng: np.random.Generator) -> Genome:
    """Fully connected inputs (and bias) to outputs, no hidden layer"""
    if n_inputs < 1 or n_outputs < 1:
        raise SizeError(f"genome needs at least one input and output, got {n_inputs}, {n_outputs}")
    nodes = [NodeGene(i, NodeRole.INPUT) for i in range(n_inputs)]
    nodes.append(NodeGene(n_inputs, NodeRole.BIAS))
    outputs = [n_inputs + 1 + o for o in range(n_outputs)]
    nodes += [NodeGene(o, NodeRole.OUTPUT) for o in outputs]
    weights = rng.uniform(-1.0, 1.0, size=(n_inputs + 1) * n_outputs)
    connections = []
    for src in range(n_inputs + 1):
        for o, dst in enumerate(outputs):
            innovation = src * n_outputs + o
            connections.append(ConnectionGene(innovation, src, dst, float(weights[innovation])))
    return Genome(tuple(nodes), tuple(connections))


def _successors(connections: Sequence[ConnectionGene]) -> Dict[int, List[int]]:
    succ: Dict[int, List[int]] = {}
    for c in connections:
        succ.setdefault(c.src, []).append(c.dst)
    return succ


def _reaches(succ: Dict[int, List[int]], start: int, target: int) -> bool:
    stack, seen = [start], set()
    while stack:
        node = stack.pop()
        if node == target:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(succ.get(node, ()))
    return False


def topological_order(genome: Genome) -> List[int]:
    """Kahn's algorithm over every connection; raises on a cycle"""
    indegree = {n.id: 0 for n in genome.nodes}
    for c in genome.connections:
        indegree[c.dst] += 1
    succ = _successors(genome.connections)
    ready = sorted(n for n, d in indegree.items() if d == 0)
    order = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for nxt in sorted(succ.get(node, ())):
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                ready.append(nxt)
        ready.sort()
    if len(order) != len(indegree):
        raise FormatError("genome contains a cycle")
    return order


def is_acyclic(genome: Genome) -> bool:
    try:
        topological_order(genome)
    except FormatError:
        return False
    return True


def validate_genome(genome: Genome) -> Genome:
    ids = [n.id for n in genome.nodes]
    if len(set(ids)) != len(ids):
        raise FormatError("duplicate node ids")
    innovations = [c.innovation for c in genome.connections]
    if len(set(innovations)) != len(innovations):
        raise FormatError("duplicate innovation ids")
    known = set(ids)
    roles = {n.id: n.role for n in genome.nodes}
    for c in genome.connections:
        if c.src not in known or c.dst not in known:
            raise FormatError(f"connection {c.innovation} references a missing node")
        if roles[c.dst] in (NodeRole.INPUT, NodeRole.BIAS):
            raise FormatError(f"connection {c.innovation} feeds an input node")
    if sum(1 for n in genome.nodes if n.role is NodeRole.BIAS) != 1:
        raise FormatError("genome needs exactly one bias node")
    topological_order(genome)
    return genome


@dataclass(frozen=True)
class Network:
    """Array form of a genome, evaluated by ``kernels.network_forward``"""

    n_inputs: int
    n_slots: int
    order: np.ndarray
    indptr: np.ndarray
    src: np.ndarray
    weights: np.ndarray
    out_slots: np.ndarray


def compile_network(genome: Genome) -> Network:
    inputs = genome.input_ids
    slot = {node: i for i, node in enumerate(inputs)}
    slot[genome.bias_id] = len(inputs)
    computed = [n for n in topological_order(genome) if n not in slot]
    for node in computed:
        slot[node] = len(slot)
    incoming: Dict[int, List[ConnectionGene]] = {}
    for c in genome.connections:
        if c.enabled:
            incoming.setdefault(c.dst, []).append(c)
    indptr, src, weights = [0], [], []
    for node in computed:
        for c in sorted(incoming.get(node, ()), key=lambda c: c.innovation):
            src.append(slot[c.src])
            weights.append(c.weight)
        indptr.append(len(src))
    return Network(
        n_inputs=len(inputs),
        n_slots=len(slot),
        order=np.array([slot[n] for n in computed], dtype=np.int64),
        indptr=np.array(indptr, dtype=np.int64),
        src=np.array(src, dtype=np.int64),
        weights=np.array(weights, dtype=np.float64),
        out_slots=np.array([slot[o] for o in genome.output_ids], dtype=np.int64),
    )


def forward(genome: Genome, inputs: Sequence[float], network: Optional[Network] = None) -> np.ndarray:
    network = network or compile_network(genome)
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape != (network.n_inputs,):
        raise ArityError(f"expected {network.n_inputs} inputs, got {inputs.shape[0] if inputs.ndim else 0}")
    values = np.zeros(network.n_slots)
    values[: network.n_inputs] = inputs
    values[network.n_inputs] = 1.0
    out = np.zeros(network.out_slots.shape[0])
    kernels.network_forward(
        values, network.order, network.indptr, network.src, network.weights, network.out_slots, out
    )
    return out


def mutate(genome: Genome, params: NeatParams, registry: InnovationRegistry, rng: np.random.Generator) -> Genome:
    connections = list(genome.connections)
    nodes = list(genome.nodes)
    if rng.random() < params.weight_mutate_rate:
        perturbed = []
        for c in connections:
            if rng.random() < params.weight_reset_prob:
                weight = rng.uniform(-1.0, 1.0)
            else:
                weight = c.weight + rng.normal(0.0, params.weight_sigma)
            perturbed.append(replace(c, weight=float(weight)))
        connections = perturbed
    if rng.random() < params.add_connection_rate:
        connections = _add_connection(nodes, connections, registry, rng)
    if rng.random() < params.add_node_rate:
        nodes, connections = _add_node(nodes, connections, registry, rng)
    return Genome(tuple(nodes), tuple(sorted(connections, key=lambda c: c.innovation)))


def _add_connection(nodes, connections, registry, rng) -> List[ConnectionGene]:
    existing = {(c.src, c.dst) for c in connections}
    succ = _successors(connections)
    sources = [n.id for n in nodes if n.role is not NodeRole.OUTPUT]
    targets = [n.id for n in nodes if n.role in (NodeRole.HIDDEN, NodeRole.OUTPUT)]
    candidates = [
        (s, d)
        for s in sources
        for d in targets
        if s != d and (s, d) not in existing and not _reaches(succ, d, s)
    ]
    if not candidates:
        return connections
    s, d = candidates[int(rng.integers(len(candidates)))]
    weight = float(rng.uniform(-1.0, 1.0))
    return connections + [ConnectionGene(registry.connection(s, d), s, d, weight)]


def _add_node(nodes, connections, registry, rng):
    enabled = [i for i, c in enumerate(connections) if c.enabled]
    if not enabled:
        return nodes, connections
    i = enabled[int(rng.integers(len(enabled)))]
    old = connections[i]
    node_id = registry.split(old.innovation)
    if any(n.id == node_id for n in nodes):
        return nodes, connections
    connections = list(connections)
    connections[i] = replace(old, enabled=False)
    connections.append(ConnectionGene(registry.connection(old.src, node_id), old.src, node_id, 1.0))
    connections.append(ConnectionGene(registry.connection(node_id, old.dst), node_id, old.dst, old.weight))
    return nodes + [NodeGene(node_id, NodeRole.HIDDEN)], connections


def crossover(fitter: Genome, other: Genome, rng: np.random.Generator, disable_prob: float = 0.75) -> Genome:
    """Matching genes from a random parent, disjoint and excess from ``fitter``"""
    other_genes = {c.innovation: c for c in other.connections}
    genes = []
    for gene in fitter.connections:
        match = other_genes.get(gene.innovation)
        if match is None:
            genes.append(gene)
            continue
        chosen = gene if rng.random() < 0.5 else match
        enabled = True
        if not gene.enabled or not match.enabled:
            enabled = not (rng.random() < disable_prob)
        genes.append(replace(chosen, enabled=enabled))
    return Genome(fitter.nodes, tuple(genes))


def compatibility(a: Genome, b: Genome, params: NeatParams) -> float:
    """delta = c1*E/N + c2*D/N + c3*mean|dw| over matching genes"""
    genes_a = {c.innovation: c for c in a.connections}
    genes_b = {c.innovation: c for c in b.connections}
    if not genes_a and not genes_b:
        return 0.0
    matching = genes_a.keys() & genes_b.keys()
    cutoff = min(max(genes_a, default=-1), max(genes_b, default=-1))
    unmatched = genes_a.keys() ^ genes_b.keys()
    excess = sum(1 for k in unmatched if k > cutoff)
    disjoint = len(unmatched) - excess
    n = max(len(genes_a), len(genes_b), 1)
    weight_diff = 0.0
    if matching:
        weight_diff = sum(abs(genes_a[k].weight - genes_b[k].weight) for k in matching) / len(matching)
    return params.c1 * excess / n + params.c2 * disjoint / n + params.c3 * weight_diff


def speciate(population: Sequence[Genome], params: NeatParams) -> List[List[int]]:
    """Group indices; each species is represented by its first member"""
    species: List[List[int]] = []
    for i, genome in enumerate(population):
        for members in species:
            if compatibility(population[members[0]], genome, params) < params.compatibility_threshold:
                members.append(i)
                break
        else:
            species.append([i])
    return species


def ranked(fitnesses: Sequence[float]) -> List[int]:
    """Indices by descending fitness, ties by index"""
    return sorted(range(len(fitnesses)), key=lambda i: (-fitnesses[i], i))


def allocate_offspring(shares: Sequence[float], total: int) -> List[int]:
    """Largest-remainder split of ``total`` proportional to ``shares``"""
    shares = np.asarray(shares, dtype=np.float64)
    if total <= 0:
        return [0] * len(shares)
    exact = shares / shares.sum() * total
    counts = np.floor(exact).astype(int)
    remainder = exact - counts
    for i in sorted(range(len(shares)), key=lambda i: (-remainder[i], i))[: total - counts.sum()]:
        counts[i] += 1
    return [int(c) for c in counts]


def evolve_step(
    population: Sequence[Genome],
    fitnesses: Sequence[float],
    params: NeatParams,
    registry: InnovationRegistry,
    rng: np.random.Generator,
) -> List[Genome]:
    """Next generation; the first ``params.elitism`` entries are the unchanged elites.

    Offspring per species follow its summed raw fitness, so a species of equal
    members gets children in proportion to its size; keep totals, not means.
    """
    if len(fitnesses) != len(population):
        raise ArityError(f"{len(fitnesses)} fitnesses for {len(population)} genomes")
    f = [float(x) for x in fitnesses]
    if not all(math.isfinite(x) for x in f):
        raise EvaluationError("fitness values must be finite")

    order = ranked(f)
    next_population = [population[i] for i in order[: min(params.elitism, params.population_size)]]
    species = speciate(population, params)

    # Offspring follow species total fitness, or species size when every total is 0
    totals = [max(sum(f[i] for i in members), 0.0) for members in species]
    shares = totals if sum(totals) > 0 else [len(m) for m in species]
    allocation = allocate_offspring(shares, params.population_size - len(next_population))

    for members, n_children in zip(species, allocation):
        members = sorted(members, key=lambda i: (-f[i], i))
        parents = members[: max(1, math.ceil(params.survival_fraction * len(members)))]
        for _ in range(n_children):
            if len(parents) >= 2 and rng.random() < params.crossover_rate:
                a, b = (parents[int(j)] for j in rng.choice(len(parents), size=2, replace=False))
                if (f[b], -b) > (f[a], -a):
                    a, b = b, a
                child = crossover(population[a], population[b], rng, params.disable_inherit_prob)
            else:
                child = population[parents[int(rng.integers(len(parents)))]]
            next_population.append(mutate(child, params, registry, rng))
    logger.debug("evolve_step: %d species, allocation %s", len(species), allocation)
    return next_population


def genome_to_document(genome: Genome) -> GenomeDocument:
    return GenomeDocument(
        nodes=[NodeGeneDocument(id=n.id, role=n.role.value) for n in genome.nodes],
        connections=[
            ConnectionGeneDocument(innov=c.innovation, from_node=c.src, to_node=c.dst, weight=c.weight, enabled=c.enabled)
            for c in genome.connections
        ],
    )


def genome_from_document(document: GenomeDocument) -> Genome:
    genome = Genome(
        tuple(NodeGene(n.id, NodeRole(n.role)) for n in document.nodes),
        tuple(
            ConnectionGene(c.innov, c.from_node, c.to_node, c.weight, c.enabled)
            for c in sorted(document.connections, key=lambda c: c.innov)
        ),
    )
    return validate_genome(genome)
