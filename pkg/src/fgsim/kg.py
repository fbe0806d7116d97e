"""Typed supply-chain knowledge graphs.

Nodes carry one of four closed types, directed edges one of four closed
relations, and every relation has a fixed (head type, tail type) signature.
Graphs are immutable after construction; all operations here are pure
functions of their inputs and seeds.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx

from .errors import (
    EmptyRelation,
    ExhaustedCandidates,
    ParseError,
    SchemaViolation,
    SelfLoop,
    TooFewEdges,
    UnknownNode,
)
from .seeding import mix


class NodeType(Enum):
    COMPANY = "company"
    CUSTOMER = "customer"
    PRODUCT = "product"
    CERTIFICATE = "certificate"


class RelationType(Enum):
    SUPPLIES_TO = "supplies_to"
    BUYS = "buys"
    MADE_BY = "made_by"
    HAS_CERT = "has_cert"


# Fixed (head type, tail type) signature per relation.
RELATION_SIGNATURES: dict[RelationType, tuple[NodeType, NodeType]] = {
    RelationType.SUPPLIES_TO: (NodeType.COMPANY, NodeType.CUSTOMER),
    RelationType.BUYS: (NodeType.CUSTOMER, NodeType.PRODUCT),
    RelationType.MADE_BY: (NodeType.PRODUCT, NodeType.COMPANY),
    RelationType.HAS_CERT: (NodeType.COMPANY, NodeType.CERTIFICATE),
}


class Direction(Enum):
    IN = "in"
    OUT = "out"
    BOTH = "both"


class SplitPart(Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


@dataclass(frozen=True)
class Triple:
    """One directed, typed edge: (head node id, relation, tail node id)."""

    head: int
    relation: RelationType
    tail: int

    def sort_key(self) -> tuple[str, int, int]:
        return (self.relation.value, self.head, self.tail)


RawTriple = tuple[str, NodeType, RelationType, str, NodeType]


@dataclass(frozen=True)
class KnowledgeGraph:
    """Immutable typed graph with per-direction adjacency.

    ``labels[i]`` and ``types[i]`` describe node ``i``; ``edges`` is the
    deduplicated edge list in canonical (relation, head, tail) order.
    """

    country_tag: str
    labels: tuple[str, ...]
    types: tuple[NodeType, ...]
    edges: tuple[Triple, ...]
    edge_set: frozenset[Triple]
    out_adj: tuple[tuple[tuple[int, RelationType], ...], ...]
    in_adj: tuple[tuple[tuple[int, RelationType], ...], ...]
    nodes_by_type: dict[NodeType, tuple[int, ...]]

    @property
    def num_nodes(self) -> int:
        return len(self.labels)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edges_of(self, relation: RelationType) -> tuple[Triple, ...]:
        return tuple(t for t in self.edges if t.relation is relation)

    def relations_present(self) -> tuple[RelationType, ...]:
        present = {t.relation for t in self.edges}
        return tuple(r for r in RelationType if r in present)

    def distinct_neighbors(self, node: int, direction: Direction) -> tuple[int, ...]:
        """Distinct neighbor node ids (relations collapsed), sorted."""
        if node < 0 or node >= self.num_nodes:
            raise UnknownNode(f"node id {node} not in graph")
        if direction is Direction.OUT:
            seen = {n for n, _ in self.out_adj[node]}
        elif direction is Direction.IN:
            seen = {n for n, _ in self.in_adj[node]}
        else:
            seen = {n for n, _ in self.out_adj[node]} | {n for n, _ in self.in_adj[node]}
        return tuple(sorted(seen))


@dataclass(frozen=True)
class EdgeSplit:
    """Train/valid/test partition of a graph's edges plus sampled negatives.

    Positive sets partition the graph's edges per relation; negative sets
    match each positive set in size, are type-consistent, absent from the
    graph, and disjoint across splits.
    """

    positives: dict[SplitPart, dict[RelationType, tuple[Triple, ...]]]
    negatives: dict[SplitPart, dict[RelationType, tuple[Triple, ...]]]

    @property
    def train(self) -> dict[RelationType, tuple[Triple, ...]]:
        return self.positives[SplitPart.TRAIN]

    @property
    def valid(self) -> dict[RelationType, tuple[Triple, ...]]:
        return self.positives[SplitPart.VALID]

    @property
    def test(self) -> dict[RelationType, tuple[Triple, ...]]:
        return self.positives[SplitPart.TEST]


@dataclass(frozen=True)
class NetworkStats:
    num_head_nodes: int
    num_tail_nodes: int
    num_edges: int
    average_degree: float
    clustering_coefficient: float
    density: float
    closeness: float
    betweenness: float


def build_graph(triples: Iterable[RawTriple], country_tag: str) -> KnowledgeGraph:
    """Intern labels to dense node ids and assemble an immutable graph.

    Duplicate triples collapse to one edge.  Raises SchemaViolation when a
    triple's endpoint types do not match its relation signature (or when one
    label is used with two different types), SelfLoop when head == tail.
    """
    labels: list[str] = []
    types: list[NodeType] = []
    index: dict[str, int] = {}

    def intern(label: str, node_type: NodeType) -> int:
        node = index.get(label)
        if node is None:
            node = len(labels)
            index[label] = node
            labels.append(label)
            types.append(node_type)
            return node
        if types[node] is not node_type:
            raise SchemaViolation(
                f"label {label!r} used as both {types[node].value} and {node_type.value}"
            )
        return node

    edge_set: set[Triple] = set()
    for head_label, head_type, relation, tail_label, tail_type in triples:
        if head_label == tail_label:
            raise SelfLoop(f"triple {head_label!r} -{relation.value}-> itself")
        want_head, want_tail = RELATION_SIGNATURES[relation]
        if head_type is not want_head or tail_type is not want_tail:
            raise SchemaViolation(
                f"{relation.value} requires ({want_head.value}, {want_tail.value}), "
                f"got ({head_type.value}, {tail_type.value})"
            )
        edge_set.add(Triple(intern(head_label, head_type), relation, intern(tail_label, tail_type)))

    edges = tuple(sorted(edge_set, key=Triple.sort_key))
    n = len(labels)
    out_adj: list[list[tuple[int, RelationType]]] = [[] for _ in range(n)]
    in_adj: list[list[tuple[int, RelationType]]] = [[] for _ in range(n)]
    for t in edges:
        out_adj[t.head].append((t.tail, t.relation))
        in_adj[t.tail].append((t.head, t.relation))
    adj_key = lambda pair: (pair[0], pair[1].value)
    nodes_by_type = {
        nt: tuple(i for i in range(n) if types[i] is nt) for nt in NodeType
    }
    return KnowledgeGraph(
        country_tag=country_tag,
        labels=tuple(labels),
        types=tuple(types),
        edges=edges,
        edge_set=frozenset(edges),
        out_adj=tuple(tuple(sorted(a, key=adj_key)) for a in out_adj),
        in_adj=tuple(tuple(sorted(a, key=adj_key)) for a in in_adj),
        nodes_by_type=nodes_by_type,
    )


def neighbors(
    kg: KnowledgeGraph, node: int, direction: Direction
) -> tuple[tuple[int, RelationType], ...]:
    """Adjacency of one node in deterministic sorted order."""
    if node < 0 or node >= kg.num_nodes:
        raise UnknownNode(f"node id {node} not in graph")
    if direction is Direction.OUT:
        return kg.out_adj[node]
    if direction is Direction.IN:
        return kg.in_adj[node]
    merged = list(kg.in_adj[node]) + list(kg.out_adj[node])
    return tuple(sorted(merged, key=lambda pair: (pair[0], pair[1].value)))


def split_edges(
    kg: KnowledgeGraph,
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
    negatives_mode: str = "tail",
) -> EdgeSplit:
    """Seeded uniform train/valid/test split with equal-size negatives.

    Per relation with n edges: |valid| = floor(r_valid * n),
    |test| = floor(r_test * n), |train| = remainder.  Negatives are sampled
    independently per split and relation, each set disjoint from the
    graph's edges and duplicate-free; two splits may draw the same
    negative.  ``negatives_mode`` is passed to sample_negatives; "both"
    avoids exhaustion when some heads are tail-saturated.
    """
    r_train, r_valid, r_test = ratios
    if abs(r_train + r_valid + r_test - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    positives: dict[SplitPart, dict[RelationType, tuple[Triple, ...]]] = {
        part: {} for part in SplitPart
    }
    for relation in kg.relations_present():
        pool = sorted(kg.edges_of(relation), key=Triple.sort_key)
        n = len(pool)
        if n < 3:
            raise TooFewEdges(f"{relation.value} has {n} edges; need at least 3")
        rng = random.Random(mix(seed, _relation_code(relation)))
        rng.shuffle(pool)
        n_valid = int(r_valid * n)
        n_test = int(r_test * n)
        positives[SplitPart.VALID][relation] = tuple(pool[:n_valid])
        positives[SplitPart.TEST][relation] = tuple(pool[n_valid : n_valid + n_test])
        positives[SplitPart.TRAIN][relation] = tuple(pool[n_valid + n_test :])

    negatives: dict[SplitPart, dict[RelationType, tuple[Triple, ...]]] = {
        part: {} for part in SplitPart
    }
    for part_idx, part in enumerate(SplitPart):
        for relation, pos in positives[part].items():
            negatives[part][relation] = sample_negatives(
                kg,
                pos,
                seed=mix(seed, 1 + part_idx, _relation_code(relation)),
                corrupt=negatives_mode,
            )
    return EdgeSplit(positives=positives, negatives=negatives)


def sample_negatives(
    kg: KnowledgeGraph,
    positives: Sequence[Triple] | frozenset[Triple],
    seed: int,
    exclude: Iterable[Triple] = (),
    corrupt: str = "tail",
) -> tuple[Triple, ...]:
    """Corrupt each positive into a type-consistent non-edge.

    The default corrupts the tail (head preserved).  ``corrupt="head"``
    swaps the corrupted side; ``"both"`` picks a side uniformly per attempt,
    which sidesteps exhaustion when a head already touches every possible
    tail.  Returns exactly one negative per positive, none of which is an
    edge of the graph, appears twice, or is listed in ``exclude``.
    Deterministic given the seed.  Raises ExhaustedCandidates once the
    rejection budget (100 draws per positive) is spent.
    """
    if corrupt not in ("tail", "head", "both"):
        raise ValueError(f"corrupt must be tail/head/both, got {corrupt!r}")
    ordered = sorted(positives, key=Triple.sort_key)
    per_relation: dict[RelationType, int] = {}
    for t in ordered:
        per_relation[t.relation] = per_relation.get(t.relation, 0) + 1
    for relation, needed in per_relation.items():
        head_type, tail_type = RELATION_SIGNATURES[relation]
        capacity = len(kg.nodes_by_type[head_type]) * len(kg.nodes_by_type[tail_type])
        existing = sum(1 for t in kg.edges if t.relation is relation)
        if capacity - existing < needed:
            raise ExhaustedCandidates(
                f"{relation.value}: {needed} negatives requested but only "
                f"{capacity - existing} non-edges exist"
            )

    rng = random.Random(seed)
    used: set[Triple] = set(exclude)
    out: list[Triple] = []
    budget = 100 * len(ordered)
    for t in ordered:
        heads = kg.nodes_by_type[RELATION_SIGNATURES[t.relation][0]]
        tails = kg.nodes_by_type[RELATION_SIGNATURES[t.relation][1]]
        while True:
            if budget <= 0:
                raise ExhaustedCandidates(
                    f"rejection budget spent while corrupting {t.relation.value} edges"
                )
            budget -= 1
            side = corrupt if corrupt != "both" else ("tail" if rng.random() < 0.5 else "head")
            if side == "tail":
                candidate = Triple(t.head, t.relation, tails[rng.randrange(len(tails))])
            else:
                candidate = Triple(heads[rng.randrange(len(heads))], t.relation, t.tail)
            if candidate in kg.edge_set or candidate in used:
                continue
            used.add(candidate)
            out.append(candidate)
            break
    return tuple(out)


def relation_network_stats(kg: KnowledgeGraph, relation: RelationType) -> NetworkStats:
    """Structural metrics of one relation's undirected projection."""
    rel_edges = kg.edges_of(relation)
    if not rel_edges:
        raise EmptyRelation(f"no {relation.value} edges in graph {kg.country_tag!r}")
    pairs = [(t.head, t.tail) for t in rel_edges]
    heads = {t.head for t in rel_edges}
    tails = {t.tail for t in rel_edges}
    return undirected_stats(pairs, num_head_nodes=len(heads), num_tail_nodes=len(tails))


def undirected_stats(
    pairs: Sequence[tuple[int, int]], *, num_head_nodes: int = 0, num_tail_nodes: int = 0
) -> NetworkStats:
    """Metrics of the undirected simple graph spanned by ``pairs``.

    Closeness uses the per-node reachable-set form
    (reachable - 1) / (sum of distances), without per-component rescaling;
    betweenness is normalized by the number of node pairs excluding the
    node itself.  Isolated nodes contribute 0 to both means.
    """
    graph = nx.Graph()
    graph.add_edges_from(sorted(set((min(a, b), max(a, b)) for a, b in pairs)))
    n = graph.number_of_nodes()
    m = graph.number_of_edges()
    clustering = nx.clustering(graph)
    closeness = nx.closeness_centrality(graph, wf_improved=False)
    betweenness = nx.betweenness_centrality(graph, normalized=True)
    return NetworkStats(
        num_head_nodes=num_head_nodes,
        num_tail_nodes=num_tail_nodes,
        num_edges=m,
        average_degree=2.0 * m / n,
        clustering_coefficient=sum(clustering.values()) / n,
        density=2.0 * m / (n * (n - 1)) if n > 1 else 0.0,
        closeness=sum(closeness.values()) / n,
        betweenness=sum(betweenness.values()) / n,
    )


def _relation_code(relation: RelationType) -> int:
    return list(RelationType).index(relation)


def with_extra_nodes(kg: KnowledgeGraph, nodes: Iterable[tuple[str, NodeType]]) -> KnowledgeGraph:
    """Append edge-less nodes (skipping labels already present)."""
    labels = list(kg.labels)
    types = list(kg.types)
    have = {label: t for label, t in zip(labels, types)}
    for label, node_type in nodes:
        known = have.get(label)
        if known is None:
            have[label] = node_type
            labels.append(label)
            types.append(node_type)
        elif known is not node_type:
            raise SchemaViolation(
                f"label {label!r} used as both {known.value} and {node_type.value}"
            )
    extra = len(labels) - kg.num_nodes
    if extra == 0:
        return kg
    return KnowledgeGraph(
        country_tag=kg.country_tag,
        labels=tuple(labels),
        types=tuple(types),
        edges=kg.edges,
        edge_set=kg.edge_set,
        out_adj=kg.out_adj + tuple(() for _ in range(extra)),
        in_adj=kg.in_adj + tuple(() for _ in range(extra)),
        nodes_by_type={
            nt: tuple(i for i in range(len(labels)) if types[i] is nt) for nt in NodeType
        },
    )


# ---------------------------------------------------------------------------
# Line-oriented interchange format: one triple per line,
# head_label <TAB> head_type <TAB> relation <TAB> tail_label <TAB> tail_type


@dataclass(frozen=True)
class GraphFile:
    """Parsed interchange file: triples plus header metadata."""

    triples: tuple[RawTriple, ...]
    country: str | None
    isolated_nodes: tuple[tuple[str, NodeType], ...]


def write_triples(kg: KnowledgeGraph, path: str | Path) -> None:
    """Write a graph in the tab-separated interchange format.

    Edge-less nodes are preserved through `# node=` comment directives so
    a round-trip keeps exact node counts.
    """
    lines = [f"# country={kg.country_tag}"]
    connected = {t.head for t in kg.edges} | {t.tail for t in kg.edges}
    for i in range(kg.num_nodes):
        if i not in connected:
            lines.append(f"# node={kg.labels[i]}\t{kg.types[i].value}")
    for t in kg.edges:
        lines.append(
            "\t".join(
                (
                    kg.labels[t.head],
                    kg.types[t.head].value,
                    t.relation.value,
                    kg.labels[t.tail],
                    kg.types[t.tail].value,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_triples(path: str | Path) -> GraphFile:
    """Parse an interchange file; raises ParseError with the line number."""
    country: str | None = None
    triples: list[RawTriple] = []
    isolated: list[tuple[str, NodeType]] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            comment = line[1:].strip()
            if comment.startswith("country="):
                country = comment.split("=", 1)[1]
            elif comment.startswith("node="):
                body = comment.split("=", 1)[1]
                try:
                    label, type_name = body.split("\t")
                    isolated.append((label, NodeType(type_name)))
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad node directive: {exc}") from exc
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ParseError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}")
        head_label, head_type, relation, tail_label, tail_type = fields
        try:
            triples.append(
                (
                    head_label,
                    NodeType(head_type),
                    RelationType(relation),
                    tail_label,
                    NodeType(tail_type),
                )
            )
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return GraphFile(triples=tuple(triples), country=country, isolated_nodes=tuple(isolated))


def load_graph(path: str | Path, country_tag: str | None = None) -> KnowledgeGraph:
    """Read an interchange file and build the graph it describes."""
    parsed = read_triples(path)
    tag = country_tag or parsed.country or Path(path).stem
    kg = build_graph(parsed.triples, country_tag=tag)
    return with_extra_nodes(kg, parsed.isolated_nodes)
