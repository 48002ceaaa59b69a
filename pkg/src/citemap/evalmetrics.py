"""Embedding evaluation: citation-derived ranking tasks and label classification.

Each ranking task asks the model to sort a candidate pool by cosine
similarity to a target document; a handful of candidates are marked relevant
(cited documents sharing a label with the target, i.e. genuinely related),
the rest are distractors.  Rankings are scored with mean average precision,
nDCG with binary gains, and precision at 1.  A nearest-centroid classifier
over the embeddings provides a macro-F1 label prediction score.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Corpus
from .embedder import EmbeddingMatrix
from .errors import ValidationError
from .fileio import read_tsv, require_columns, write_tsv


@dataclass(frozen=True)
class RankingTask:
    """Rank ``candidates`` by similarity to ``target``; ``relevant`` is the gold subset."""

    target: str
    candidates: tuple[str, ...]
    relevant: frozenset[str]

    def __post_init__(self):
        if not self.relevant:
            raise ValidationError(f"task {self.target!r}: empty relevant set")
        if not self.relevant <= set(self.candidates):
            raise ValidationError(f"task {self.target!r}: relevant ids outside the candidate pool")
        if self.target in self.candidates:
            raise ValidationError(f"task {self.target!r}: target cannot be its own candidate")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValidationError(f"task {self.target!r}: duplicate candidates")


def rank_candidates(matrix: EmbeddingMatrix, task: RankingTask) -> list[str]:
    """Candidates by descending cosine similarity to the target, ties by ascending id."""
    q = matrix.row(task.target)
    qn = float(np.linalg.norm(q))

    def sim(doc_id: str) -> float:
        v = matrix.row(doc_id)
        d = float(np.linalg.norm(v)) * qn
        return float(v @ q / d) if d > 0.0 else 0.0

    return sorted(task.candidates, key=lambda c: (-sim(c), c))


def average_precision(ranking: Sequence[str], relevant: frozenset[str] | set[str]) -> float:
    if not relevant:
        raise ValidationError("average precision needs a non-empty relevant set")
    hits = 0
    total = 0.0
    for rank, doc_id in enumerate(ranking, start=1):
        if doc_id in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def map_score(tasks: Sequence[RankingTask], rankings: Sequence[Sequence[str]]) -> float:
    """Mean average precision over tasks."""
    if not tasks or len(tasks) != len(rankings):
        raise ValidationError("tasks and rankings must be non-empty and aligned")
    return sum(average_precision(r, t.relevant) for t, r in zip(tasks, rankings)) / len(tasks)


def ndcg(ranking: Sequence[str], relevant: frozenset[str] | set[str], cutoff: int | None = None) -> float:
    """Normalized discounted cumulative gain with binary gains.

    Gain at rank r discounts by 1/log2(r + 1); the ideal ordering puts all
    relevant items first.  ``cutoff`` truncates both the ranking and the ideal.
    """
    if not relevant:
        raise ValidationError("ndcg needs a non-empty relevant set")
    if cutoff is not None and cutoff < 1:
        raise ValidationError("cutoff must be >= 1")
    top = list(ranking if cutoff is None else ranking[:cutoff])
    dcg = sum(1.0 / math.log2(r + 1) for r, doc_id in enumerate(top, start=1) if doc_id in relevant)
    ideal_hits = len(relevant) if cutoff is None else min(len(relevant), cutoff)
    idcg = sum(1.0 / math.log2(r + 1) for r in range(1, ideal_hits + 1))
    return dcg / idcg


def precision_at_1(tasks: Sequence[RankingTask], rankings: Sequence[Sequence[str]]) -> float:
    """Fraction of tasks whose top-ranked candidate is relevant."""
    if not tasks or len(tasks) != len(rankings):
        raise ValidationError("tasks and rankings must be non-empty and aligned")
    return sum(1.0 for t, r in zip(tasks, rankings) if r and r[0] in t.relevant) / len(tasks)


def evaluate_ranking_tasks(matrix: EmbeddingMatrix, tasks: Sequence[RankingTask]) -> dict[str, float]:
    """Rank every task with the embeddings and report map / ndcg / p_at_1."""
    if not tasks:
        raise ValidationError("no ranking tasks supplied")
    rankings = [rank_candidates(matrix, t) for t in tasks]
    mean_ndcg = sum(ndcg(r, t.relevant) for t, r in zip(tasks, rankings)) / len(tasks)
    return {
        "map": map_score(tasks, rankings),
        "ndcg": mean_ndcg,
        "p_at_1": precision_at_1(tasks, rankings),
    }


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def macro_f1(predictions: Sequence[str], gold: Sequence[str]) -> float:
    """Unweighted mean F1 over the classes present in the gold labels."""
    if not gold or len(predictions) != len(gold):
        raise ValidationError("predictions and gold labels must be non-empty and aligned")
    classes = sorted(set(gold))
    scores = []
    for cls in classes:
        tp = sum(1 for p, g in zip(predictions, gold) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(predictions, gold) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(predictions, gold) if p != cls and g == cls)
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return sum(scores) / len(classes)


@dataclass
class LabeledSplit:
    """Train/test id-label pairs; every test class must appear in training."""

    train: list[tuple[str, str]]
    test: list[tuple[str, str]]

    def __post_init__(self):
        if not self.train or not self.test:
            raise ValidationError("both split sides must be non-empty")
        train_classes = {cls for _, cls in self.train}
        missing = {cls for _, cls in self.test} - train_classes
        if missing:
            raise ValidationError(f"test classes absent from training data: {sorted(missing)!r}")


def make_label_split(corpus: Corpus, train_fraction: float = 0.8, seed: int = 0) -> LabeledSplit:
    """Per-class seeded split on first labels; singleton classes stay in training."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must lie strictly between 0 and 1")
    by_class: dict[str, list[str]] = defaultdict(list)
    for doc in corpus:
        if doc.labels:
            by_class[doc.labels[0]].append(doc.id)
    if not by_class:
        raise ValidationError("no labeled documents in corpus")
    rng = random.Random(seed)
    train: list[tuple[str, str]] = []
    test: list[tuple[str, str]] = []
    for cls in sorted(by_class):
        ids = sorted(by_class[cls])
        rng.shuffle(ids)
        n_train = max(1, round(len(ids) * train_fraction))
        if n_train == len(ids) and len(ids) > 1:
            n_train -= 1
        for doc_id in ids[:n_train]:
            train.append((doc_id, cls))
        for doc_id in ids[n_train:]:
            test.append((doc_id, cls))
    if not test:
        raise ValidationError("split produced an empty test side; corpus too small")
    return LabeledSplit(train=train, test=test)


def nearest_centroid_classify(matrix: EmbeddingMatrix, split: LabeledSplit) -> list[str]:
    """Assign each test document the class of the most cosine-similar train centroid."""
    by_class: dict[str, list[np.ndarray]] = defaultdict(list)
    for doc_id, cls in split.train:
        by_class[cls].append(matrix.row(doc_id))
    classes = sorted(by_class)
    centroids = np.vstack([np.mean(by_class[c], axis=0) for c in classes])
    norms = np.linalg.norm(centroids, axis=1)
    norms[norms == 0.0] = 1.0
    unit = centroids / norms[:, None]
    predictions = []
    for doc_id, _ in split.test:
        v = matrix.row(doc_id)
        vn = float(np.linalg.norm(v))
        sims = unit @ (v / vn if vn > 0.0 else v)
        best = max(range(len(classes)), key=lambda i: (sims[i], ))
        # ties by ascending class name: max() keeps the first maximum, and
        # classes are sorted, so equal sims resolve to the smaller name.
        predictions.append(classes[best])
    return predictions


# ---------------------------------------------------------------------------
# Task construction and file format
# ---------------------------------------------------------------------------


def citation_ranking_tasks(
    corpus: Corpus,
    n_tasks: int,
    n_relevant: int = 5,
    n_candidates: int = 30,
    seed: int = 0,
) -> list[RankingTask]:
    """Build ranking tasks from citations: relevant = genuinely related cited documents.

    A cited document counts as genuinely related when it shares a label with
    the target and the target engages with it beyond the introduction
    (methods, results, or discussion mentions) — intro-only mentions are
    background material, not evidence of relatedness.  Targets are drawn
    (seeded) from documents with at least ``n_relevant`` such references;
    distractors are uncited documents.
    """
    if n_relevant < 1 or n_candidates <= n_relevant:
        raise ValidationError("need n_candidates > n_relevant >= 1")
    all_ids = [doc.id for doc in corpus]
    eligible = []
    for doc in corpus:
        related = [
            r.cited_id
            for r in doc.references
            if corpus.resolvable(r.cited_id)
            and r.count_methods + r.count_results + r.count_discussion > 0
            and set(doc.labels) & set(corpus.get(r.cited_id).labels)
        ]
        if len(related) >= n_relevant:
            eligible.append((doc.id, related))
    if not eligible:
        raise ValidationError("no document has enough substantively cited same-label references for ranking tasks")
    order = sorted(range(len(eligible)), key=lambda i: eligible[i][0])
    random.Random(seed).shuffle(order)

    tasks = []
    for i in order[:n_tasks]:
        target, related = eligible[i]
        rng = random.Random(f"{seed}:{target}")
        relevant = rng.sample(sorted(related), n_relevant)
        cited = {r.cited_id for r in corpus.get(target).references}
        pool = [d for d in all_ids if d != target and d not in cited]
        if len(pool) < n_candidates - n_relevant:
            raise ValidationError(f"target {target!r}: not enough uncited documents for distractors")
        distractors = rng.sample(pool, n_candidates - n_relevant)
        candidates = relevant + distractors
        rng.shuffle(candidates)
        tasks.append(RankingTask(target=target, candidates=tuple(candidates), relevant=frozenset(relevant)))
    return tasks


def write_tasks(tasks: Sequence[RankingTask], path: str, meta_lines: Sequence[str] = ()) -> None:
    rows = ((t.target, c, int(c in t.relevant)) for t in tasks for c in t.candidates)
    write_tsv(path, ["target", "candidate", "is_relevant"], rows, meta_lines)


def read_tasks(path: str) -> list[RankingTask]:
    columns, rows = read_tsv(path)
    require_columns(path, columns, ["target", "candidate", "is_relevant"])
    grouped: dict[str, tuple[list[str], set[str]]] = {}
    order: list[str] = []
    for target, candidate, flag in rows:
        if target not in grouped:
            grouped[target] = ([], set())
            order.append(target)
        grouped[target][0].append(candidate)
        if flag not in ("0", "1"):
            raise ValidationError(f"{path}: is_relevant must be 0 or 1, got {flag!r}")
        if flag == "1":
            grouped[target][1].add(candidate)
    return [
        RankingTask(target=t, candidates=tuple(grouped[t][0]), relevant=frozenset(grouped[t][1])) for t in order
    ]
