"""Importance-aware triplet sampling for contrastive training.

For each anchor document its references are sorted by descending importance.
Positives are popped from the front of that list; the first ``h_hard``
negatives are popped from the back (hard negatives: cited but unimportant),
after which negatives are drawn uniformly from documents the anchor does not
cite at all (easy negatives).  Pairs that end up on both the positive and the
negative side of some triplet carry contradictory supervision and are removed
before training.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .corpus import Corpus
from .errors import ValidationError
from .fileio import read_tsv, require_columns, write_tsv
from .importance import ScoredCitation

HARD = "hard"
EASY = "easy"


@dataclass(frozen=True)
class Triplet:
    anchor_id: str
    positive_id: str
    negative_id: str
    kind: str  # "hard" or "easy"


TripletSet = list[Triplet]


@dataclass(frozen=True)
class SamplerConfig:
    """Triplet sampling parameters.

    ``n_total`` is the target number of triplets; anchors each contribute one
    block of ``k_per_anchor`` triplets until the target is reached.  Only
    documents with at least ``k_per_anchor + h_hard`` resolvable references
    are eligible anchors, so front and back pops can never collide.
    """

    n_total: int
    k_per_anchor: int = 5
    h_hard: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_total < 1:
            raise ValidationError("n_total must be >= 1")
        if self.k_per_anchor < 1:
            raise ValidationError("k_per_anchor must be >= 1")
        if not 0 <= self.h_hard <= self.k_per_anchor:
            raise ValidationError("h_hard must lie in [0, k_per_anchor]")


def _anchor_rng(seed: int, anchor_id: str) -> random.Random:
    # Independent substream per anchor: deterministic regardless of the order
    # in which anchors are processed.
    return random.Random(f"{seed}:{anchor_id}")


def eligible_anchors(corpus: Corpus, scores: dict[str, dict[str, float]], cfg: SamplerConfig) -> list[str]:
    """Ids of documents with enough resolvable scored references, in corpus order."""
    needed = cfg.k_per_anchor + cfg.h_hard
    out = []
    for doc in corpus:
        resolvable = [r.cited_id for r in doc.references if corpus.resolvable(r.cited_id)]
        if len(resolvable) < needed:
            continue
        anchor_scores = scores.get(doc.id, {})
        missing = [c for c in resolvable if c not in anchor_scores]
        if missing:
            raise ValidationError(
                f"anchor {doc.id!r}: no importance score for resolvable reference {missing[0]!r}"
            )
        out.append(doc.id)
    return out


def scores_by_anchor(scored: Sequence[ScoredCitation]) -> dict[str, dict[str, float]]:
    """Group importance scores as citing id → {cited id: importance}."""
    by_anchor: dict[str, dict[str, float]] = {}
    for s in scored:
        by_anchor.setdefault(s.citing_id, {})[s.cited_id] = s.importance
    return by_anchor


def _anchor_block(
    corpus: Corpus,
    anchor_id: str,
    anchor_scores: dict[str, float],
    cfg: SamplerConfig,
) -> list[Triplet]:
    doc = corpus.get(anchor_id)
    resolvable = [r.cited_id for r in doc.references if corpus.resolvable(r.cited_id)]
    # Descending importance; ties broken by ascending cited id.
    ordered = sorted(resolvable, key=lambda c: (-anchor_scores[c], c))
    work = deque(ordered)

    cited_any = {r.cited_id for r in doc.references}
    rng = _anchor_rng(cfg.seed, anchor_id)
    pool: list[str] | None = None  # built lazily; only easy negatives need it

    triplets: list[Triplet] = []
    hard_used = 0
    for _ in range(cfg.k_per_anchor):
        positive = work.popleft()
        if hard_used < cfg.h_hard:
            negative = work.pop()
            kind = HARD
            hard_used += 1
        else:
            if pool is None:
                pool = [d.id for d in corpus if d.id != anchor_id and d.id not in cited_any]
                if not pool:
                    raise ValidationError(
                        f"anchor {anchor_id!r}: corpus has no uncited documents to use as easy negatives"
                    )
            negative = pool[rng.randrange(len(pool))]
            kind = EASY
        triplets.append(Triplet(anchor_id=anchor_id, positive_id=positive, negative_id=negative, kind=kind))
    return triplets


def sample_triplets(corpus: Corpus, scored: Sequence[ScoredCitation], cfg: SamplerConfig) -> TripletSet:
    """Draw triplet blocks from seeded-shuffled eligible anchors until ``n_total`` is reached.

    Anchors are used at most once.  Raises if the eligible anchors are
    exhausted before the target count is met.
    """
    scores = scores_by_anchor(scored)
    anchors = eligible_anchors(corpus, scores, cfg)
    if not anchors:
        raise ValidationError(
            f"no document has {cfg.k_per_anchor + cfg.h_hard} resolvable references; nothing to sample"
        )
    order = sorted(anchors)
    random.Random(cfg.seed).shuffle(order)

    collected: TripletSet = []
    for anchor_id in order:
        if len(collected) >= cfg.n_total:
            break
        collected.extend(_anchor_block(corpus, anchor_id, scores[anchor_id], cfg))
    if len(collected) < cfg.n_total:
        raise ValidationError(
            f"eligible anchors exhausted after {len(collected)} triplets; n_total={cfg.n_total} unreachable"
        )
    return collected


def filter_contradictions(triplets: TripletSet, scope: str = "global") -> TripletSet:
    """Drop triplets whose (anchor, other) pair appears with contradictory roles.

    With ``scope="global"`` an unordered pair counts as contradictory when it
    occurs as a positive pair anywhere and as a negative pair anywhere; with
    ``scope="anchor"`` only occurrences under the same anchor conflict.  Every
    triplet containing a contradictory pair in either role is removed; input
    order is preserved.
    """
    if scope not in ("global", "anchor"):
        raise ValidationError(f"unknown contradiction scope {scope!r}")

    if scope == "global":
        pos = {frozenset((t.anchor_id, t.positive_id)) for t in triplets}
        neg = {frozenset((t.anchor_id, t.negative_id)) for t in triplets}
        bad = pos & neg
        return [
            t
            for t in triplets
            if frozenset((t.anchor_id, t.positive_id)) not in bad
            and frozenset((t.anchor_id, t.negative_id)) not in bad
        ]

    pos_by_anchor: dict[str, set[str]] = {}
    neg_by_anchor: dict[str, set[str]] = {}
    for t in triplets:
        pos_by_anchor.setdefault(t.anchor_id, set()).add(t.positive_id)
        neg_by_anchor.setdefault(t.anchor_id, set()).add(t.negative_id)
    bad_by_anchor = {a: pos_by_anchor[a] & neg_by_anchor.get(a, set()) for a in pos_by_anchor}
    return [
        t
        for t in triplets
        if t.positive_id not in bad_by_anchor.get(t.anchor_id, set())
        and t.negative_id not in bad_by_anchor.get(t.anchor_id, set())
    ]


def split_train_validation(
    triplets: TripletSet, train_fraction: float = 0.8, seed: int = 0
) -> tuple[TripletSet, TripletSet]:
    """Anchor-level split: all triplets of an anchor land on the same side."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must lie strictly between 0 and 1")
    anchors = sorted({t.anchor_id for t in triplets})
    if len(anchors) < 2:
        raise ValidationError("anchor-level split needs at least 2 distinct anchors")
    random.Random(seed).shuffle(anchors)
    n_train = round(len(anchors) * train_fraction)
    n_train = min(max(n_train, 1), len(anchors) - 1)
    train_anchors = set(anchors[:n_train])
    train = [t for t in triplets if t.anchor_id in train_anchors]
    val = [t for t in triplets if t.anchor_id not in train_anchors]
    return train, val


def write_triplets(triplets: TripletSet, path: str, meta_lines: Sequence[str] = ()) -> None:
    rows = ((t.anchor_id, t.positive_id, t.negative_id, t.kind) for t in triplets)
    write_tsv(path, ["anchor_id", "positive_id", "negative_id", "kind"], rows, meta_lines)


def read_triplets(path: str) -> TripletSet:
    columns, rows = read_tsv(path)
    require_columns(path, columns, ["anchor_id", "positive_id", "negative_id", "kind"])
    out = []
    for r in rows:
        if r[3] not in (HARD, EASY):
            raise ValidationError(f"{path}: unknown triplet kind {r[3]!r}")
        out.append(Triplet(anchor_id=r[0], positive_id=r[1], negative_id=r[2], kind=r[3]))
    return out
