"""Similarity and citation graphs over a document set, with summary statistics.

The k-nearest-neighbour graph links every document to its k most
cosine-similar peers; an edge exists when either endpoint selected the other
(union symmetrization), so degrees range between k and 2k.  A density-matched
uniform random graph serves as the structural null model.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .corpus import Corpus
from .embedder import EmbeddingMatrix
from .errors import ValidationError
from .fileio import format_float, read_tsv, require_columns, write_tsv


class Graph:
    """Undirected weighted simple graph with string node ids."""

    def __init__(self, ids: Sequence[str]):
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate node ids")
        self.ids: list[str] = list(ids)
        self._adj: dict[str, dict[str, float]] = {i: {} for i in self.ids}
        self._edge_count = 0

    @classmethod
    def from_edges(cls, ids: Sequence[str], edges: Iterable[tuple[str, str, float]]) -> "Graph":
        g = cls(ids)
        for a, b, w in edges:
            g.add_edge(a, b, w)
        return g

    def add_edge(self, a: str, b: str, weight: float = 1.0) -> None:
        if a == b:
            raise ValidationError(f"self-loop on {a!r}")
        if a not in self._adj or b not in self._adj:
            missing = a if a not in self._adj else b
            raise ValidationError(f"edge endpoint {missing!r} is not a node")
        if b in self._adj[a]:
            raise ValidationError(f"duplicate edge {a!r} -- {b!r}")
        if not math.isfinite(weight):
            raise ValidationError(f"non-finite weight on edge {a!r} -- {b!r}")
        self._adj[a][b] = weight
        self._adj[b][a] = weight
        self._edge_count += 1

    @property
    def node_count(self) -> int:
        return len(self.ids)

    @property
    def edge_count(self) -> int:
        return self._edge_count

    def degree(self, node: str) -> int:
        return len(self._adj[node])

    def has_edge(self, a: str, b: str) -> bool:
        return b in self._adj.get(a, {})

    def weight(self, a: str, b: str) -> float:
        return self._adj[a][b]

    def neighbors(self, node: str) -> list[tuple[str, float]]:
        """Neighbors of ``node`` sorted by id."""
        return sorted(self._adj[node].items())

    def neighbor_ids(self, node: str) -> set[str]:
        return set(self._adj[node])

    def edges(self) -> Iterator[tuple[str, str, float]]:
        """All edges once, endpoints ordered ascending, sorted lexicographically."""
        for a in sorted(self.ids):
            for b, w in sorted(self._adj[a].items()):
                if a < b:
                    yield a, b, w

    def edge_set(self) -> set[tuple[str, str]]:
        return {(a, b) for a, b, _ in self.edges()}


@dataclass
class GraphStats:
    nodes: int
    edges: int
    average_degree: float
    density: float
    component_count: int
    is_connected: bool
    isolated_nodes: int
    clustering_coefficient: float
    average_shortest_path: float
    path_sample_size: int


def build_knn_graph(matrix: EmbeddingMatrix, k: int = 20) -> Graph:
    """Exact cosine k-nearest-neighbour graph with union symmetrization.

    Similarities are computed exhaustively in blocks; within a row, ties are
    broken by ascending document id.
    """
    n = len(matrix)
    if n < 2:
        raise ValidationError("k-NN graph needs at least 2 documents")
    if not 1 <= k < n:
        raise ValidationError(f"k must lie in [1, {n - 1}], got {k}")

    norms = np.linalg.norm(matrix.vectors, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError("zero vector in embedding matrix; cosine undefined")
    unit = matrix.vectors / norms[:, None]

    # Lexicographic rank of each row's id, for deterministic tie-breaking.
    id_array = np.array(matrix.ids)
    rank = np.empty(n, dtype=int)
    rank[np.argsort(id_array)] = np.arange(n)

    pair_weight: dict[tuple[int, int], float] = {}
    block = 512
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = unit[start:stop] @ unit.T
        for local, i in enumerate(range(start, stop)):
            row = sims[local].copy()
            row[i] = -np.inf
            top = np.lexsort((rank, -row))[:k]
            for j in top:
                key = (i, int(j)) if i < j else (int(j), i)
                pair_weight.setdefault(key, float(sims[local, j]))
    g = Graph(matrix.ids)
    for (i, j), w in pair_weight.items():
        g.add_edge(matrix.ids[i], matrix.ids[j], w)
    return g


def build_citation_graph(corpus: Corpus) -> Graph:
    """Unweighted undirected graph with one edge per resolvable citation pair."""
    g = Graph([doc.id for doc in corpus])
    seen: set[tuple[str, str]] = set()
    for doc in corpus:
        for ref in doc.references:
            if not corpus.resolvable(ref.cited_id):
                continue
            key = (doc.id, ref.cited_id) if doc.id < ref.cited_id else (ref.cited_id, doc.id)
            if key in seen:
                continue
            seen.add(key)
            g.add_edge(key[0], key[1], 1.0)
    return g


def connected_components(g: Graph) -> list[list[str]]:
    """Components as sorted id lists, ordered by their smallest member."""
    seen: set[str] = set()
    components: list[list[str]] = []
    for start in sorted(g.ids):
        if start in seen:
            continue
        comp = []
        queue = deque([start])
        seen.add(start)
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in g._adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        components.append(sorted(comp))
    return components


def local_clustering(g: Graph, node: str) -> float:
    """Fraction of a node's neighbour pairs that are themselves linked; 0 below degree 2."""
    neigh = list(g._adj[node])
    d = len(neigh)
    if d < 2:
        return 0.0
    neigh_set = set(neigh)
    links = 0
    for v in neigh:
        links += len(g._adj[v].keys() & neigh_set)
    links //= 2
    return links / (d * (d - 1) / 2)


def _bfs_distances(g: Graph, source: str) -> dict[str, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g._adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def graph_statistics(
    g: Graph,
    path_sample_size: int = 10000,
    seed: int = 0,
    clustering: str = "local",
) -> GraphStats:
    """Summary statistics; shortest paths are averaged over sampled BFS sources.

    ``clustering="local"`` is the mean of per-node clustering coefficients
    (nodes of degree < 2 contribute 0); ``clustering="global"`` is the
    transitivity ratio 3 * triangles / connected triples.
    """
    if clustering not in ("local", "global"):
        raise ValidationError(f"unknown clustering variant {clustering!r}")
    n = g.node_count
    m = g.edge_count
    if n == 0:
        return GraphStats(0, 0, 0.0, 0.0, 0, True, 0, 0.0, 0.0, 0)
    avg_degree = 2.0 * m / n
    density = 0.0 if n < 2 else 2.0 * m / (n * (n - 1))
    components = connected_components(g)
    isolated = sum(1 for node in g.ids if g.degree(node) == 0)

    if clustering == "local":
        coeff = sum(local_clustering(g, node) for node in g.ids) / n
    else:
        closed = 0
        triads = 0
        for node in g.ids:
            d = g.degree(node)
            triads += d * (d - 1)
            neigh = set(g._adj[node])
            for v in neigh:
                closed += len(g._adj[v].keys() & neigh)
        coeff = closed / triads if triads else 0.0  # closed counts each triangle 6x, triads 2x per pair

    sample = min(path_sample_size, n)
    sources = random.Random(seed).sample(sorted(g.ids), sample)
    total = 0
    pairs = 0
    for s in sources:
        for target, dist in _bfs_distances(g, s).items():
            if target != s:
                total += dist
                pairs += 1
    avg_path = total / pairs if pairs else 0.0
    return GraphStats(
        nodes=n,
        edges=m,
        average_degree=avg_degree,
        density=density,
        component_count=len(components),
        is_connected=len(components) <= 1,
        isolated_nodes=isolated,
        clustering_coefficient=coeff,
        average_shortest_path=avg_path,
        path_sample_size=sample,
    )


def edge_overlap(g1: Graph, g2: Graph) -> dict[str, int]:
    """Counts of shared and exclusive edges between two graphs on any node sets."""
    e1 = g1.edge_set()
    e2 = g2.edge_set()
    return {
        "shared": len(e1 & e2),
        "only_first": len(e1 - e2),
        "only_second": len(e2 - e1),
    }


def random_graph_like(g: Graph, seed: int = 0) -> Graph:
    """Uniform simple graph with the same node set and edge count as ``g``."""
    n = g.node_count
    if n < 2:
        raise ValidationError("random rewiring needs at least 2 nodes")
    m = g.edge_count
    max_pairs = n * (n - 1) // 2
    if m > max_pairs:
        raise ValidationError(f"{m} edges exceed the {max_pairs} possible pairs")
    rng = random.Random(seed)
    nodes = sorted(g.ids)
    chosen: set[tuple[int, int]] = set()
    while len(chosen) < m:
        i = rng.randrange(n)
        j = rng.randrange(n)
        if i == j:
            continue
        chosen.add((i, j) if i < j else (j, i))
    out = Graph(g.ids)
    for i, j in sorted(chosen):
        out.add_edge(nodes[i], nodes[j], 1.0)
    return out


def write_edge_list(g: Graph, path: str, meta_lines: Sequence[str] = ()) -> None:
    """Tab-separated edges (id_a < id_b).  Isolated nodes are preserved via a comment line."""
    meta = list(meta_lines)
    isolated = sorted(node for node in g.ids if g.degree(node) == 0)
    if isolated:
        meta.append("isolated_nodes=" + ",".join(isolated))
    rows = ((a, b, format_float(w)) for a, b, w in g.edges())
    write_tsv(path, ["id_a", "id_b", "weight"], rows, meta)


def read_edge_list(path: str) -> Graph:
    isolated: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# isolated_nodes="):
                isolated = line.strip()[len("# isolated_nodes=") :].split(",")
                break
    columns, rows = read_tsv(path)
    require_columns(path, columns, ["id_a", "id_b", "weight"])
    ids: list[str] = []
    seen: set[str] = set()
    for r in rows:
        for node in (r[0], r[1]):
            if node not in seen:
                seen.add(node)
                ids.append(node)
    for node in isolated:
        if node and node not in seen:
            seen.add(node)
            ids.append(node)
    g = Graph(sorted(ids))
    for r in rows:
        g.add_edge(r[0], r[1], float(r[2]))
    return g
