"""Community detection and cluster quality measurement.

Implements the Leiden algorithm from scratch: queue-based local moving,
refinement of communities into well-connected subcommunities, and graph
aggregation, repeated until no node moves.  The constant Potts model (CPM)
is the default quality function; modularity with a resolution parameter is
also available.  Communities in the returned partition are always internally
connected, and the recorded quality never decreases across outer iterations.

Cluster quality against labels: the accuracy of a partition is the sum of
pairwise label similarities over same-community pairs, normalized by the
total number of document pairs.  Finer partitions can only lose credit, so
accuracy decreases with granularity; methods are compared by their accuracy
relative to the per-level mean.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .corpus import Corpus, Document
from .errors import ValidationError
from .fileio import format_float, read_tsv, require_columns, write_tsv
from .netgraph import Graph

CPM = "cpm"
MODULARITY = "modularity"
_EPS = 1e-12
_MAX_LEVELS = 100


@dataclass
class Partition:
    """Document id → community id (positive integers), with the quality achieved."""

    assignment: dict[str, int]
    quality: float
    resolution: float
    quality_function: str
    quality_history: list[float] = field(default_factory=list)

    @property
    def community_count(self) -> int:
        return len(set(self.assignment.values()))

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = defaultdict(list)
        for doc_id, c in self.assignment.items():
            out[c].append(doc_id)
        return dict(out)


class _Level:
    """One aggregation level: indexed nodes with sizes, self-loop weights, adjacency."""

    __slots__ = ("adj", "node_size", "self_w")

    def __init__(self, adj: list[list[tuple[int, float]]], node_size: list[int], self_w: list[float]):
        self.adj = adj
        self.node_size = node_size
        self.self_w = self_w

    @property
    def n(self) -> int:
        return len(self.adj)

    def strength(self, i: int) -> float:
        return 2.0 * self.self_w[i] + sum(w for _, w in self.adj[i])


def _level_from_graph(g: Graph) -> tuple[_Level, list[str]]:
    ids = list(g.ids)
    pos = {doc_id: i for i, doc_id in enumerate(ids)}
    adj: list[list[tuple[int, float]]] = [[] for _ in ids]
    for a, b, w in g.edges():
        adj[pos[a]].append((pos[b], w))
        adj[pos[b]].append((pos[a], w))
    return _Level(adj, [1] * len(ids), [0.0] * len(ids)), ids


def _level_quality(level: _Level, comm: list[int], qf: str, gamma: float, m_total: float) -> float:
    internal: dict[int, float] = defaultdict(float)
    size: dict[int, int] = defaultdict(int)
    strength: dict[int, float] = defaultdict(float)
    for i in range(level.n):
        c = comm[i]
        internal[c] += level.self_w[i]
        size[c] += level.node_size[i]
        strength[c] += level.strength(i)
        for j, w in level.adj[i]:
            if j > i and comm[j] == c:
                internal[c] += w
    if qf == CPM:
        return sum(internal.values()) - gamma * sum(s * (s - 1) / 2.0 for s in size.values())
    return sum(internal[c] / m_total - gamma * (strength[c] / (2.0 * m_total)) ** 2 for c in internal)


def _local_move(
    level: _Level,
    comm: list[int],
    qf: str,
    gamma: float,
    m_total: float,
    rng: random.Random,
) -> bool:
    """Greedy queue-based node moving; returns True when any node moved."""
    n = level.n
    comm_size: dict[int, int] = defaultdict(int)
    comm_strength: dict[int, float] = defaultdict(float)
    for i in range(n):
        comm_size[comm[i]] += level.node_size[i]
        comm_strength[comm[i]] += level.strength(i)
    fresh = max(comm) + 1 if comm else 0

    order = list(range(n))
    rng.shuffle(order)
    queue = deque(order)
    in_queue = [True] * n
    moved_any = False

    while queue:
        v = queue.popleft()
        in_queue[v] = False
        a = comm[v]
        s_v = level.node_size[v]
        k_v = level.strength(v)
        w_to: dict[int, float] = defaultdict(float)
        for u, w in level.adj[v]:
            w_to[comm[u]] += w
        w_va = w_to.get(a, 0.0)
        size_a_rest = comm_size[a] - s_v
        strength_a_rest = comm_strength[a] - k_v

        best_c = a
        best_delta = 0.0
        for c in sorted(w_to):
            if c == a:
                continue
            if qf == CPM:
                delta = (w_to[c] - w_va) - gamma * s_v * (comm_size[c] - size_a_rest)
            else:
                delta = (w_to[c] - w_va) / m_total - gamma * k_v * (
                    comm_strength[c] - strength_a_rest
                ) / (2.0 * m_total * m_total)
            if delta > best_delta + _EPS:
                best_delta = delta
                best_c = c
        if size_a_rest > 0:  # moving out into a fresh empty community
            if qf == CPM:
                delta = -w_va + gamma * s_v * size_a_rest
            else:
                delta = -w_va / m_total + gamma * k_v * strength_a_rest / (2.0 * m_total * m_total)
            if delta > best_delta + _EPS:
                best_delta = delta
                best_c = fresh

        if best_c != a:
            if best_c == fresh:
                fresh += 1
            comm[v] = best_c
            comm_size[a] -= s_v
            comm_strength[a] -= k_v
            if comm_size[a] == 0:
                del comm_size[a]
                del comm_strength[a]
            comm_size[best_c] += s_v
            comm_strength[best_c] += k_v
            moved_any = True
            for u, _ in level.adj[v]:
                if comm[u] != best_c and not in_queue[u]:
                    queue.append(u)
                    in_queue[u] = True
    return moved_any


def _refine(
    level: _Level,
    comm: list[int],
    qf: str,
    gamma: float,
    m_total: float,
    rng: random.Random,
) -> list[int]:
    """Split each community into connected subcommunities.

    Starting from singletons, nodes that are still alone may merge into a
    neighbouring subcommunity of their own community when that improves
    quality, so every refined community grows connected by construction.
    """
    n = level.n
    ref = list(range(n))
    ref_size = {i: level.node_size[i] for i in range(n)}
    ref_strength = {i: level.strength(i) for i in range(n)}
    comm_size: dict[int, int] = defaultdict(int)
    for i in range(n):
        comm_size[comm[i]] += level.node_size[i]

    order = list(range(n))
    rng.shuffle(order)
    for v in order:
        if ref_size[ref[v]] != level.node_size[v]:
            continue  # already absorbed someone; no longer a lone node
        a = comm[v]
        s_v = level.node_size[v]
        k_v = level.strength(v)
        w_to: dict[int, float] = defaultdict(float)
        w_subset = 0.0
        for u, w in level.adj[v]:
            if comm[u] == a:
                w_subset += w
                w_to[ref[u]] += w
        if qf == CPM and w_subset + _EPS < gamma * s_v * (comm_size[a] - s_v):
            continue  # poorly connected within its community; keep singleton
        best_d = ref[v]
        best_delta = 0.0
        for d in sorted(w_to):
            if d == ref[v]:
                continue
            if qf == CPM:
                delta = w_to[d] - gamma * s_v * ref_size[d]
            else:
                delta = w_to[d] / m_total - gamma * k_v * ref_strength[d] / (2.0 * m_total * m_total)
            if delta > best_delta + _EPS:
                best_delta = delta
                best_d = d
        if best_d != ref[v]:
            del ref_size[ref[v]]
            del ref_strength[ref[v]]
            ref[v] = best_d
            ref_size[best_d] += s_v
            ref_strength[best_d] += k_v
    return ref


def _aggregate(level: _Level, ref: list[int]) -> tuple[_Level, list[int]]:
    """Contract refined communities into nodes; returns the new level and node map."""
    remap: dict[int, int] = {}
    node_of: list[int] = [0] * level.n
    for i in range(level.n):
        r = ref[i]
        if r not in remap:
            remap[r] = len(remap)
        node_of[i] = remap[r]
    new_n = len(remap)
    new_size = [0] * new_n
    new_self = [0.0] * new_n
    between: list[dict[int, float]] = [defaultdict(float) for _ in range(new_n)]
    for i in range(level.n):
        ci = node_of[i]
        new_size[ci] += level.node_size[i]
        new_self[ci] += level.self_w[i]
        for j, w in level.adj[i]:
            if j <= i:
                continue
            cj = node_of[j]
            if ci == cj:
                new_self[ci] += w
            else:
                between[ci][cj] += w
                between[cj][ci] += w
    new_adj = [sorted(d.items()) for d in between]
    return _Level(new_adj, new_size, new_self), node_of


def partition_quality(g: Graph, assignment: dict[str, int], quality_function: str = CPM, resolution: float = 1.0) -> float:
    """Quality of an assignment on the original graph (CPM or modularity)."""
    _check_qf(quality_function, resolution)
    size: dict[int, int] = defaultdict(int)
    internal: dict[int, float] = defaultdict(float)
    strength: dict[int, float] = defaultdict(float)
    for node in g.ids:
        size[assignment[node]] += 1
    m_total = 0.0
    for a, b, w in g.edges():
        m_total += w
        strength[assignment[a]] += w
        strength[assignment[b]] += w
        if assignment[a] == assignment[b]:
            internal[assignment[a]] += w
    if quality_function == CPM:
        return sum(internal.values()) - resolution * sum(s * (s - 1) / 2.0 for s in size.values())
    if m_total <= 0.0:
        raise ValidationError("modularity is undefined on a graph without edges")
    return sum(
        internal[c] / m_total - resolution * (strength[c] / (2.0 * m_total)) ** 2 for c in size
    )


def _check_qf(quality_function: str, resolution: float) -> None:
    if quality_function not in (CPM, MODULARITY):
        raise ValidationError(f"unknown quality function {quality_function!r}")
    if resolution <= 0.0:
        raise ValidationError("resolution must be positive")


def _split_disconnected(g: Graph, assignment: dict[str, int]) -> dict[str, int]:
    """Replace any disconnected community by its connected components.

    Splitting a disconnected community never lowers CPM or modularity, so this
    final safety pass preserves the monotone-quality guarantee.
    """
    groups: dict[int, list[str]] = defaultdict(list)
    for node in g.ids:
        groups[assignment[node]].append(node)
    out: dict[str, int] = {}
    next_label = 0
    for c in sorted(groups):
        members = groups[c]
        member_set = set(members)
        seen: set[str] = set()
        for start in members:
            if start in seen:
                continue
            next_label += 1
            queue = deque([start])
            seen.add(start)
            while queue:
                u = queue.popleft()
                out[u] = next_label
                for v in g.neighbor_ids(u):
                    if v in member_set and v not in seen:
                        seen.add(v)
                        queue.append(v)
    return out


def _renumber(g: Graph, assignment: dict[str, int]) -> dict[str, int]:
    relabel: dict[int, int] = {}
    out: dict[str, int] = {}
    for node in g.ids:
        c = assignment[node]
        if c not in relabel:
            relabel[c] = len(relabel) + 1
        out[node] = relabel[c]
    return out


def _leiden_pass(
    level0: _Level,
    init_comm: list[int],
    quality_function: str,
    resolution: float,
    m_total: float,
    rng: random.Random,
    history: list[float],
) -> list[int]:
    """One full move/refine/aggregate descent from ``init_comm``; returns the flat partition."""
    level = level0
    comm = list(init_comm)
    member_of = list(range(level.n))
    for _ in range(_MAX_LEVELS):
        moved = _local_move(level, comm, quality_function, resolution, m_total, rng)
        history.append(_level_quality(level, comm, quality_function, resolution, m_total))
        if not moved:
            break
        ref = _refine(level, comm, quality_function, resolution, m_total, rng)
        new_level, node_of = _aggregate(level, ref)
        new_comm: list[int] = [0] * new_level.n
        for i in range(level.n):
            new_comm[node_of[i]] = comm[i]
        relabel: dict[int, int] = {}
        comm = []
        for c in new_comm:
            if c not in relabel:
                relabel[c] = len(relabel)
            comm.append(relabel[c])
        member_of = [node_of[m] for m in member_of]
        level = new_level
    return [comm[member_of[i]] for i in range(level0.n)]


_MAX_PASSES = 20


def leiden(g: Graph, quality_function: str = CPM, resolution: float = 1.0, seed: int = 0) -> Partition:
    """Detect communities by local moving, refinement, and aggregation.

    The three-phase descent is repeated, each pass starting from the previous
    partition, until a pass no longer improves quality; the later passes let
    refined chunks be rearranged at the original granularity, which escapes
    local optima a single descent can get stuck in.  Deterministic for a fixed
    seed.  The returned partition's communities are internally connected,
    community ids are positive integers numbered in order of first appearance,
    and ``quality_history`` records the quality after every local-moving phase
    (non-decreasing).
    """
    _check_qf(quality_function, resolution)
    if g.node_count == 0:
        raise ValidationError("cannot cluster an empty graph")
    level0, ids = _level_from_graph(g)
    m_total = sum(w for _, _, w in g.edges())
    if quality_function == MODULARITY and m_total <= 0.0:
        raise ValidationError("modularity is undefined on a graph without edges")

    rng = random.Random(seed)
    comm = list(range(level0.n))
    history: list[float] = []
    prev_quality = -math.inf
    for _ in range(_MAX_PASSES):
        comm = _leiden_pass(level0, comm, quality_function, resolution, m_total, rng, history)
        quality = history[-1]
        if quality <= prev_quality + _EPS:
            break
        prev_quality = quality

    assignment = {ids[i]: comm[i] for i in range(len(ids))}
    assignment = _split_disconnected(g, assignment)
    assignment = _renumber(g, assignment)
    quality = partition_quality(g, assignment, quality_function, resolution)
    return Partition(
        assignment=assignment,
        quality=quality,
        resolution=resolution,
        quality_function=quality_function,
        quality_history=history,
    )


# ---------------------------------------------------------------------------
# Accuracy against document labels
# ---------------------------------------------------------------------------


def label_similarity(doc_a: Document, doc_b: Document) -> float:
    """Binary cosine of the two label sets: |A ∩ B| / sqrt(|A| |B|)."""
    a = set(doc_a.labels)
    b = set(doc_b.labels)
    if not a or not b:
        return 0.0
    return len(a & b) / (len(a) * len(b)) ** 0.5


def clustering_accuracy(
    partition: Partition,
    corpus: Corpus,
    similarity: Callable[[Document, Document], float] | None = None,
) -> float:
    """Mean same-community label similarity over all document pairs.

    Cross-community pairs contribute 0, so the score rewards grouping related
    documents but never rewards merging unrelated ones outright: the
    normalizer is the total pair count n(n-1)/2, not the same-community pair
    count.
    """
    n = len(corpus)
    if n < 2:
        raise ValidationError("accuracy needs at least 2 documents")
    sim = similarity or label_similarity
    groups: dict[int, list[Document]] = defaultdict(list)
    for doc in corpus:
        if doc.id not in partition.assignment:
            raise ValidationError(f"partition does not cover document {doc.id!r}")
        groups[partition.assignment[doc.id]].append(doc)
    total = 0.0
    for members in groups.values():
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                r = sim(members[i], members[j])
                if not 0.0 <= r <= 1.0:
                    raise ValidationError(f"similarity {r} outside [0, 1] for pair "
                                          f"({members[i].id!r}, {members[j].id!r})")
                total += r
    return total / (n * (n - 1) / 2.0)


@dataclass(frozen=True)
class AccuracyRow:
    method: str
    resolution: float
    communities: int
    accuracy: float


@dataclass
class AccuracyTable:
    rows: list[AccuracyRow] = field(default_factory=list)

    def methods(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def resolutions(self) -> list[float]:
        seen = []
        for r in self.rows:
            if r.resolution not in seen:
                seen.append(r.resolution)
        return seen


def granularity_sweep(
    g: Graph,
    corpus: Corpus,
    quality_function: str = CPM,
    resolutions: Sequence[float] = (),
    seed: int = 0,
    method: str = "similarity-knn",
    similarity: Callable[[Document, Document], float] | None = None,
) -> AccuracyTable:
    """Cluster at each resolution and measure accuracy; one table row per level."""
    if not resolutions:
        raise ValidationError("granularity sweep needs at least one resolution")
    table = AccuracyTable()
    for res in resolutions:
        p = leiden(g, quality_function=quality_function, resolution=res, seed=seed)
        acc = clustering_accuracy(p, corpus, similarity)
        table.rows.append(
            AccuracyRow(method=method, resolution=res, communities=p.community_count, accuracy=acc)
        )
    return table


def relative_accuracy(table: AccuracyTable) -> dict[str, float]:
    """Per-method mean of accuracy divided by the per-level mean across methods.

    A method matching the cross-method average at every level scores exactly
    1.0; scores over all methods sum to the number of methods.
    """
    methods = table.methods()
    levels = table.resolutions()
    if not methods or not levels:
        raise ValidationError("relative accuracy needs a non-empty table")
    acc: dict[tuple[str, float], float] = {}
    for r in table.rows:
        acc[(r.method, r.resolution)] = r.accuracy
    for m in methods:
        for lv in levels:
            if (m, lv) not in acc:
                raise ValidationError(f"method {m!r} missing at resolution {lv}")
    scores: dict[str, float] = {}
    for m in methods:
        ratios = []
        for lv in levels:
            level_mean = sum(acc[(other, lv)] for other in methods) / len(methods)
            if level_mean <= 0.0:
                raise ValidationError(f"all methods score 0 at resolution {lv}; ratio undefined")
            ratios.append(acc[(m, lv)] / level_mean)
        scores[m] = sum(ratios) / len(ratios)
    return scores


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_partition(partition: Partition, path: str, meta_lines: Sequence[str] = ()) -> None:
    meta = list(meta_lines) + [
        f"quality_function={partition.quality_function}",
        f"resolution={format_float(partition.resolution)}",
        f"quality={format_float(partition.quality)}",
    ]
    rows = ((doc_id, c) for doc_id, c in partition.assignment.items())
    write_tsv(path, ["doc_id", "community"], rows, meta)


def read_partition(path: str) -> Partition:
    qf = CPM
    resolution = 1.0
    quality = 0.0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("# "):
                continue
            body = line[2:].strip()
            if body.startswith("quality_function="):
                qf = body.split("=", 1)[1]
            elif body.startswith("resolution="):
                resolution = float(body.split("=", 1)[1])
            elif body.startswith("quality="):
                quality = float(body.split("=", 1)[1])
    columns, rows = read_tsv(path)
    require_columns(path, columns, ["doc_id", "community"])
    assignment = {r[0]: int(r[1]) for r in rows}
    return Partition(assignment=assignment, quality=quality, resolution=resolution, quality_function=qf)


def write_accuracy_table(table: AccuracyTable, path: str, meta_lines: Sequence[str] = ()) -> None:
    rows = ((r.method, format_float(r.resolution), r.communities, format_float(r.accuracy)) for r in table.rows)
    write_tsv(path, ["method", "resolution", "communities", "accuracy"], rows, meta_lines)


def read_accuracy_table(path: str) -> AccuracyTable:
    columns, rows = read_tsv(path)
    require_columns(path, columns, ["method", "resolution", "communities", "accuracy"])
    return AccuracyTable(
        rows=[AccuracyRow(method=r[0], resolution=float(r[1]), communities=int(r[2]), accuracy=float(r[3])) for r in rows]
    )
