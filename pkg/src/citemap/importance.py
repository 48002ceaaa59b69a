"""Citation importance: section-count features, entropy weighting, and scoring.

Every (citing, cited) pair becomes one feature row.  The default feature set
uses the introduction, results, and discussion mention counts plus a binary
self-citation indicator; methods counts and a title-similarity feature can be
switched on.  Feature weights come from the entropy weight method: columns
whose values are spread more unevenly across rows carry more information and
receive a larger weight.  A document's importance to its citing paper is the
weighted sum of its feature row.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .corpus import Corpus, is_self_citation
from .errors import ValidationError
from .fileio import format_float, read_tsv, require_columns, write_tsv

FEATURE_ORDER = ("intro", "methods", "results", "discussion", "self_cite", "title_sim")


@dataclass(frozen=True)
class FeatureSet:
    """Which per-citation features to extract."""

    include_intro: bool = True
    include_methods: bool = False
    include_results: bool = True
    include_discussion: bool = True
    include_self_citation: bool = True
    include_title_similarity: bool = False

    def enabled_names(self) -> list[str]:
        flags = {
            "intro": self.include_intro,
            "methods": self.include_methods,
            "results": self.include_results,
            "discussion": self.include_discussion,
            "self_cite": self.include_self_citation,
            "title_sim": self.include_title_similarity,
        }
        names = [name for name in FEATURE_ORDER if flags[name]]
        if not names:
            raise ValidationError("feature set enables no features")
        return names


@dataclass(frozen=True)
class CitationFeatures:
    """One extracted feature row for a (citing, cited) pair."""

    citing_id: str
    cited_id: str
    values: dict[str, float]


@dataclass
class FeatureTable:
    """All extracted feature rows as a dense matrix plus pair identifiers."""

    citing_ids: list[str]
    cited_ids: list[str]
    feature_names: list[str]
    values: np.ndarray  # shape (rows, features), float64

    def __len__(self) -> int:
        return len(self.citing_ids)

    def rows(self) -> Iterator[CitationFeatures]:
        for i in range(len(self.citing_ids)):
            yield CitationFeatures(
                citing_id=self.citing_ids[i],
                cited_id=self.cited_ids[i],
                values={name: float(self.values[i, j]) for j, name in enumerate(self.feature_names)},
            )


@dataclass(frozen=True)
class ImportanceWeights:
    """Feature-name → weight mapping with the method that produced it."""

    weights: dict[str, float]
    method: str


@dataclass(frozen=True)
class ScoredCitation:
    citing_id: str
    cited_id: str
    importance: float


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def extract_citation_features(
    corpus: Corpus,
    feature_set: FeatureSet = FeatureSet(),
    base_vectors: "dict[str, np.ndarray] | None" = None,
    include_external: bool = True,
) -> FeatureTable:
    """One feature row per (citing, cited) pair, in corpus and reference order.

    ``base_vectors`` (document id → base encoder vector) is required when the
    title-similarity feature is enabled; pairs whose cited document is outside
    the corpus get similarity 0.  With ``include_external=False``, references
    that do not resolve within the corpus are dropped from the table.
    """
    names = feature_set.enabled_names()
    if feature_set.include_title_similarity and base_vectors is None:
        raise ValidationError("title similarity requires base encoder vectors")

    citing_ids: list[str] = []
    cited_ids: list[str] = []
    data: list[list[float]] = []
    for doc in corpus:
        for ref in doc.references:
            resolvable = corpus.resolvable(ref.cited_id)
            if not resolvable and not include_external:
                continue
            row: list[float] = []
            for name in names:
                if name == "intro":
                    row.append(float(ref.count_intro))
                elif name == "methods":
                    row.append(float(ref.count_methods))
                elif name == "results":
                    row.append(float(ref.count_results))
                elif name == "discussion":
                    row.append(float(ref.count_discussion))
                elif name == "self_cite":
                    row.append(float(is_self_citation(doc, corpus.get(ref.cited_id))) if resolvable else 0.0)
                elif name == "title_sim":
                    if not resolvable:
                        row.append(0.0)
                    else:
                        if doc.id not in base_vectors:
                            raise ValidationError(f"missing base vector for citing document {doc.id!r}")
                        if ref.cited_id not in base_vectors:
                            raise ValidationError(f"missing base vector for cited document {ref.cited_id!r}")
                        row.append(_cosine(base_vectors[doc.id], base_vectors[ref.cited_id]))
            citing_ids.append(doc.id)
            cited_ids.append(ref.cited_id)
            data.append(row)
    values = np.asarray(data, dtype=float).reshape(len(data), len(names))
    return FeatureTable(citing_ids=citing_ids, cited_ids=cited_ids, feature_names=names, values=values)


def weights_from_entropies(entropies: Sequence[float], names: Sequence[str]) -> ImportanceWeights:
    """Turn per-column entropies into normalized weights via divergence 1 - e."""
    if len(entropies) != len(names):
        raise ValidationError("entropy/name length mismatch")
    d = np.asarray([1.0 - e for e in entropies], dtype=float)
    total = float(d.sum())
    if total <= 0.0:
        raise ValidationError("no feature carries information (all entropies are 1)")
    return ImportanceWeights(
        weights={name: float(di / total) for name, di in zip(names, d)},
        method="entropy",
    )


def entropy_weights(table: FeatureTable) -> ImportanceWeights:
    """Entropy weight method over the feature columns.

    Columns are min-shifted to nonnegative if needed, normalized to a
    per-column distribution p, and scored by the normalized Shannon entropy
    e = -sum(p ln p) / ln n with 0 ln 0 = 0.  The weight of a column is its
    divergence 1 - e, normalized across columns.  Constant all-zero columns
    get weight 0 with a warning.
    """
    n = len(table)
    if n < 2:
        raise ValidationError(f"entropy weights need at least 2 rows, got {n}")
    x = np.array(table.values, dtype=float)
    mins = x.min(axis=0)
    for j in range(x.shape[1]):
        if mins[j] < 0.0:
            x[:, j] = x[:, j] - mins[j]
    colsum = x.sum(axis=0)
    entropies = np.ones(x.shape[1], dtype=float)
    for j, name in enumerate(table.feature_names):
        if colsum[j] == 0.0:
            warnings.warn(f"feature column {name!r} is all zero; weight set to 0", stacklevel=2)
            continue  # e = 1 leaves divergence 0
        p = x[:, j] / colsum[j]
        nz = p[p > 0.0]
        entropies[j] = float(-(nz * np.log(nz)).sum() / math.log(n))
    return weights_from_entropies(entropies, table.feature_names)


def uniform_weights(feature_set: FeatureSet = FeatureSet()) -> ImportanceWeights:
    """Equal weight for every enabled feature."""
    names = feature_set.enabled_names()
    w = 1.0 / len(names)
    return ImportanceWeights(weights={name: w for name in names}, method="uniform")


def score_citations(table: FeatureTable, weights: ImportanceWeights) -> list[ScoredCitation]:
    """Importance of each pair: the weighted sum of its feature row."""
    if set(weights.weights) != set(table.feature_names):
        raise ValidationError(
            f"weight features {sorted(weights.weights)!r} do not match table features {sorted(table.feature_names)!r}"
        )
    wvec = np.asarray([weights.weights[name] for name in table.feature_names], dtype=float)
    scores = table.values @ wvec
    return [
        ScoredCitation(citing_id=c, cited_id=d, importance=float(s))
        for c, d, s in zip(table.citing_ids, table.cited_ids, scores)
    ]


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_feature_table(table: FeatureTable, path: str, meta_lines: Sequence[str] = ()) -> None:
    columns = ["citing_id", "cited_id"] + list(table.feature_names)
    rows = (
        [table.citing_ids[i], table.cited_ids[i]] + [format_float(v) for v in table.values[i]]
        for i in range(len(table))
    )
    write_tsv(path, columns, rows, meta_lines)


def read_feature_table(path: str) -> FeatureTable:
    columns, rows = read_tsv(path)
    if len(columns) < 3 or columns[:2] != ["citing_id", "cited_id"]:
        raise ValidationError(f"{path}: not a feature table")
    names = columns[2:]
    citing = [r[0] for r in rows]
    cited = [r[1] for r in rows]
    values = np.asarray([[float(v) for v in r[2:]] for r in rows], dtype=float).reshape(len(rows), len(names))
    return FeatureTable(citing_ids=citing, cited_ids=cited, feature_names=names, values=values)


def write_weights(weights: ImportanceWeights, path: str, meta: dict | None = None) -> None:
    obj = {"method": weights.method, "weights": weights.weights}
    if meta:
        obj["_meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_weights(path: str) -> ImportanceWeights:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if "method" not in obj or "weights" not in obj:
        raise ValidationError(f"{path}: not a weights file")
    return ImportanceWeights(weights={k: float(v) for k, v in obj["weights"].items()}, method=obj["method"])


def write_scores(scored: Sequence[ScoredCitation], path: str, meta_lines: Sequence[str] = ()) -> None:
    rows = ((s.citing_id, s.cited_id, format_float(s.importance)) for s in scored)
    write_tsv(path, ["citing_id", "cited_id", "importance"], rows, meta_lines)


def read_scores(path: str) -> list[ScoredCitation]:
    columns, rows = read_tsv(path)
    require_columns(path, columns, ["citing_id", "cited_id", "importance"])
    return [ScoredCitation(citing_id=r[0], cited_id=r[1], importance=float(r[2])) for r in rows]
