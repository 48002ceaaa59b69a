"""Science maps: topics from communities, 2-D layout, and thematic overlays.

A topic is a community of documents represented by the mean of its members'
embedding vectors.  Topics are placed in the plane either by principal
component projection or by stress majorization seeded from it.  Overlays
summarise each topic: its modal broad field, an interdisciplinarity score
(variety x balance x disparity over the member category distribution), and
the mean publication year.  Maps export as a delimited table plus an
optional standalone SVG with one circle per topic, dot area proportional to
topic size.
"""

from __future__ import annotations

import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .communities import Partition
from .corpus import Corpus
from .embedder import EmbeddingMatrix
from .errors import ValidationError
from .fileio import format_float, read_tsv, require_columns, write_tsv


@dataclass
class Topic:
    community: int
    member_ids: list[str]
    vector: np.ndarray
    size: int
    x: float = 0.0
    y: float = 0.0
    field: str = ""
    interdisciplinarity: float = 0.0
    mean_year: float = 0.0


@dataclass
class CategorySimilarity:
    """Symmetric similarity in [0, 1] between subject categories, unit diagonal."""

    categories: list[str]
    matrix: np.ndarray

    def __post_init__(self):
        k = len(self.categories)
        if self.matrix.shape != (k, k):
            raise ValidationError("similarity matrix shape does not match category count")
        if not np.allclose(self.matrix, self.matrix.T):
            raise ValidationError("similarity matrix must be symmetric")
        if not np.allclose(np.diag(self.matrix), 1.0):
            raise ValidationError("similarity matrix must have a unit diagonal")
        if self.matrix.min() < 0.0 or self.matrix.max() > 1.0 + 1e-12:
            raise ValidationError("similarities must lie in [0, 1]")
        self._pos = {c: i for i, c in enumerate(self.categories)}

    @classmethod
    def identity(cls, categories: Sequence[str]) -> "CategorySimilarity":
        return cls(categories=list(categories), matrix=np.eye(len(categories)))

    def get(self, a: str, b: str) -> float:
        if a not in self._pos or b not in self._pos:
            missing = a if a not in self._pos else b
            raise ValidationError(f"category {missing!r} not covered by the similarity matrix")
        return float(self.matrix[self._pos[a], self._pos[b]])


def topic_vectors(partition: Partition, matrix: EmbeddingMatrix) -> list[Topic]:
    """One topic per community: member ids, member count, and mean vector."""
    for doc_id in matrix.ids:
        if doc_id not in partition.assignment:
            raise ValidationError(f"partition does not cover embedded document {doc_id!r}")
    for doc_id in partition.assignment:
        if doc_id not in matrix:
            raise ValidationError(f"partition references {doc_id!r} which has no embedding")
    groups: dict[int, list[str]] = defaultdict(list)
    for doc_id in matrix.ids:
        groups[partition.assignment[doc_id]].append(doc_id)
    topics = []
    for c in sorted(groups):
        members = groups[c]
        vec = np.mean([matrix.row(d) for d in members], axis=0)
        topics.append(Topic(community=c, member_ids=members, vector=vec, size=len(members)))
    return topics


def _pca_coords(vectors: np.ndarray) -> np.ndarray:
    centered = vectors - vectors.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2].copy()
    if comps.shape[0] < 2:
        comps = np.vstack([comps, np.zeros((2 - comps.shape[0], comps.shape[1]))])
    # Deterministic orientation: the largest-magnitude loading of each axis is positive.
    for axis in range(2):
        j = int(np.argmax(np.abs(comps[axis])))
        if comps[axis, j] < 0.0:
            comps[axis] = -comps[axis]
    return centered @ comps.T


def _stress_coords(vectors: np.ndarray, seed: int) -> np.ndarray:
    t = vectors.shape[0]
    diff = vectors[:, None, :] - vectors[None, :, :]
    target = np.sqrt((diff**2).sum(axis=2))
    coords = _pca_coords(vectors)
    if np.allclose(coords, 0.0):
        coords = np.random.default_rng(seed).standard_normal((t, 2)) * 1e-3
    prev_stress = np.inf
    for _ in range(500):
        delta = coords[:, None, :] - coords[None, :, :]
        dist = np.sqrt((delta**2).sum(axis=2))
        off = ~np.eye(t, dtype=bool)
        stress = float(((target - dist)[off] ** 2).sum()) / 2.0
        if prev_stress < np.inf and (prev_stress - stress) / max(prev_stress, 1e-30) < 1e-6:
            break
        prev_stress = stress
        # Guttman transform with uniform weights.
        ratio = np.zeros_like(dist)
        np.divide(target, dist, out=ratio, where=(dist > 1e-12) & off)
        b_diag = ratio.sum(axis=1)
        coords = (b_diag[:, None] * coords - ratio @ coords) / t
    return coords


def layout_2d(topics: Sequence[Topic], method: str = "pca", seed: int = 0) -> np.ndarray:
    """Coordinates (one row per topic) by PCA or stress majorization.

    Identical topic vectors cannot be laid out meaningfully; they receive
    small seeded jitter and a warning.
    """
    if method not in ("pca", "stress"):
        raise ValidationError(f"unknown layout method {method!r}")
    if len(topics) < 2:
        raise ValidationError("layout needs at least 2 topics")
    vectors = np.vstack([t.vector for t in topics])
    spread = np.abs(vectors - vectors[0]).max()
    if spread < 1e-12:
        warnings.warn("all topic vectors identical; using jittered coordinates", stacklevel=2)
        return np.random.default_rng(seed).standard_normal((len(topics), 2)) * 1e-3
    if method == "pca":
        return _pca_coords(vectors)
    return _stress_coords(vectors, seed)


def apply_layout(topics: Sequence[Topic], coords: np.ndarray) -> None:
    for t, (x, y) in zip(topics, coords):
        t.x = float(x)
        t.y = float(y)


# ---------------------------------------------------------------------------
# Overlays
# ---------------------------------------------------------------------------


def overlay_field(partition: Partition, corpus: Corpus) -> dict[int, str]:
    """Modal member field per community; lexicographic tie-break; 'unknown' when empty."""
    counts: dict[int, Counter] = defaultdict(Counter)
    for doc_id, c in partition.assignment.items():
        for f in corpus.get(doc_id).fields:
            counts[c][f] += 1
    out: dict[int, str] = {}
    for c in sorted({v for v in partition.assignment.values()}):
        counter = counts.get(c)
        if not counter:
            out[c] = "unknown"
        else:
            out[c] = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
    return out


def _gini(p: np.ndarray) -> float:
    k = len(p)
    return float(np.abs(p[:, None] - p[None, :]).sum() / (2.0 * k))


def overlay_interdisciplinarity(
    partition: Partition,
    corpus: Corpus,
    category_similarity: CategorySimilarity | None = None,
    total_categories: int | None = None,
) -> dict[int, float]:
    """Variety x balance x disparity of each community's category distribution.

    Variety is the fraction of all categories present; balance is one minus
    the Gini coefficient of the category proportions; disparity is the mean
    pairwise dissimilarity (1 - s) over distinct categories.  Communities with
    at most one distinct category score 0.  Without a category similarity
    matrix, distinct categories count as fully dissimilar (identity matrix).
    """
    corpus_categories = sorted({c for doc in corpus for c in doc.categories})
    if category_similarity is None:
        warnings.warn("no category similarity supplied; assuming unrelated categories", stacklevel=2)
        category_similarity = CategorySimilarity.identity(corpus_categories)
    if total_categories is None:
        total_categories = len(corpus_categories)
    if total_categories < 1:
        raise ValidationError("total_categories must be >= 1")

    bags: dict[int, Counter] = defaultdict(Counter)
    for doc_id, c in partition.assignment.items():
        for cat in corpus.get(doc_id).categories:
            bags[c][cat] += 1
    out: dict[int, float] = {}
    for c in sorted({v for v in partition.assignment.values()}):
        bag = bags.get(c, Counter())
        cats = sorted(bag)
        k = len(cats)
        if k <= 1:
            out[c] = 0.0
            continue
        total = sum(bag.values())
        p = np.asarray([bag[cat] / total for cat in cats])
        variety = k / total_categories
        balance = 1.0 - _gini(p)
        dis = 0.0
        for i in range(k):
            for j in range(k):
                if i != j:
                    dis += 1.0 - category_similarity.get(cats[i], cats[j])
        disparity = dis / (k * (k - 1))
        out[c] = float(variety * balance * disparity)
    return out


def overlay_mean_year(partition: Partition, corpus: Corpus) -> dict[int, float]:
    years: dict[int, list[int]] = defaultdict(list)
    for doc_id, c in partition.assignment.items():
        years[c].append(corpus.get(doc_id).year)
    return {c: sum(v) / len(v) for c, v in sorted(years.items())}


def apply_overlays(
    topics: Sequence[Topic],
    fields: dict[int, str] | None = None,
    interdisciplinarity: dict[int, float] | None = None,
    mean_years: dict[int, float] | None = None,
) -> None:
    for t in topics:
        if fields is not None:
            t.field = fields[t.community]
        if interdisciplinarity is not None:
            t.interdisciplinarity = interdisciplinarity[t.community]
        if mean_years is not None:
            t.mean_year = mean_years[t.community]


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

MAP_COLUMNS = ("topic_id", "size", "x", "y", "field", "interdisciplinarity", "mean_year")

_CATEGORICAL_PALETTE = (
    "#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2",
    "#eeca3b", "#b279a2", "#ff9da6", "#9d755d", "#bab0ac",
)


def _sequential_color(fraction: float) -> str:
    """Dark blue to yellow ramp for numeric overlays."""
    stops = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))
    f = min(max(fraction, 0.0), 1.0) * (len(stops) - 1)
    i = min(int(f), len(stops) - 2)
    t = f - i
    rgb = tuple(round(a + (b - a) * t) for a, b in zip(stops[i], stops[i + 1]))
    return "#%02x%02x%02x" % rgb


def write_map_table(topics: Sequence[Topic], path: str, meta_lines: Sequence[str] = ()) -> None:
    rows = (
        (
            t.community,
            t.size,
            format_float(t.x),
            format_float(t.y),
            t.field or "unknown",
            format_float(t.interdisciplinarity),
            format_float(t.mean_year),
        )
        for t in topics
    )
    write_tsv(path, MAP_COLUMNS, rows, meta_lines)


def read_map_table(path: str) -> list[Topic]:
    columns, rows = read_tsv(path)
    require_columns(path, columns, MAP_COLUMNS)
    topics = []
    for r in rows:
        topics.append(
            Topic(
                community=int(r[0]),
                member_ids=[],
                vector=np.zeros(0),
                size=int(r[1]),
                x=float(r[2]),
                y=float(r[3]),
                field=r[4],
                interdisciplinarity=float(r[5]),
                mean_year=float(r[6]),
            )
        )
    return topics


def _svg_legend_categorical(values: list[str], colors: dict[str, str], x: float, y: float) -> list[str]:
    parts = []
    for i, v in enumerate(values):
        cy = y + 18 * i
        parts.append(f'<circle cx="{x:.2f}" cy="{cy:.2f}" r="5" fill="{colors[v]}" />')
        parts.append(f'<text x="{x + 12:.2f}" y="{cy + 4:.2f}" font-size="11" font-family="sans-serif">{_esc(v)}</text>')
    return parts


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def render_map_svg(
    topics: Sequence[Topic], path: str, color_by: str = "field", meta_lines: Sequence[str] = ()
) -> None:
    """Standalone SVG scatter: one circle per topic, area proportional to size.

    ``color_by`` selects the overlay: 'field' uses a categorical palette,
    'interdisciplinarity' and 'mean_year' use a sequential ramp with a
    min/mid/max legend.  ``meta_lines`` become leading XML comments.
    """
    if color_by not in ("field", "interdisciplinarity", "mean_year"):
        raise ValidationError(f"unknown overlay {color_by!r}")
    if not topics:
        raise ValidationError("no topics to render")
    width, height = 840.0, 600.0
    margin = 60.0
    xs = [t.x for t in topics]
    ys = [t.y for t in topics]
    span_x = max(max(xs) - min(xs), 1e-9)
    span_y = max(max(ys) - min(ys), 1e-9)
    scale = min((width - 2 * margin - 160) / span_x, (height - 2 * margin) / span_y)

    def sx(x: float) -> float:
        return margin + (x - min(xs)) * scale

    def sy(y: float) -> float:
        return height - margin - (y - min(ys)) * scale  # flip: y grows upward

    max_size = max(t.size for t in topics)
    max_radius = 18.0

    if color_by == "field":
        fields = sorted({t.field or "unknown" for t in topics})
        colors = {f: _CATEGORICAL_PALETTE[i % len(_CATEGORICAL_PALETTE)] for i, f in enumerate(fields)}
        color_of = lambda t: colors[t.field or "unknown"]
        legend = _svg_legend_categorical(fields, colors, width - 150, margin)
    else:
        values = [getattr(t, color_by) for t in topics]
        lo, hi = min(values), max(values)
        if hi - lo < 1e-12:
            color_of = lambda t: _sequential_color(0.5)
            legend = [
                f'<circle cx="{width - 150:.2f}" cy="{margin:.2f}" r="5" fill="{_sequential_color(0.5)}" />',
                f'<text x="{width - 138:.2f}" y="{margin + 4:.2f}" font-size="11" font-family="sans-serif">{lo:.3g}</text>',
            ]
        else:
            color_of = lambda t: _sequential_color((getattr(t, color_by) - lo) / (hi - lo))
            legend = []
            for i, v in enumerate((lo, (lo + hi) / 2.0, hi)):
                cy = margin + 18 * i
                frac = (v - lo) / (hi - lo)
                legend.append(f'<circle cx="{width - 150:.2f}" cy="{cy:.2f}" r="5" fill="{_sequential_color(frac)}" />')
                legend.append(
                    f'<text x="{width - 138:.2f}" y="{cy + 4:.2f}" font-size="11" font-family="sans-serif">{v:.3g}</text>'
                )

    parts = [f"<!-- {line} -->" for line in meta_lines]
    parts += [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white" />',
    ]
    for t in sorted(topics, key=lambda t: -t.size):  # draw big dots first so small ones stay visible
        r = max_radius * (t.size / max_size) ** 0.5
        parts.append(
            f'<circle cx="{sx(t.x):.2f}" cy="{sy(t.y):.2f}" r="{max(r, 2.0):.2f}" fill="{color_of(t)}" '
            f'fill-opacity="0.85" stroke="#333333" stroke-width="0.5"><title>topic {t.community}</title></circle>'
        )
    parts.extend(legend)
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def export_map(
    topics: Sequence[Topic],
    out_path: str,
    svg: bool = True,
    color_by: str = "field",
    meta_lines: Sequence[str] = (),
) -> list[str]:
    """Write the topic table (and optionally a sibling .svg); returns written paths."""
    write_map_table(topics, out_path, meta_lines)
    written = [out_path]
    if svg:
        svg_path = out_path.rsplit(".", 1)[0] + ".svg" if "." in out_path else out_path + ".svg"
        render_map_svg(topics, svg_path, color_by, meta_lines)
        written.append(svg_path)
    return written
