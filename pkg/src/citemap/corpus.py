"""Document corpus: data model, line-delimited storage, validation, synthetic generation.

A corpus file holds one JSON object per line.  Every record carries exactly the
keys ``id, title, abstract, authors, year, venue, fields, categories, labels,
references``; each reference is ``{"cited_id": ..., "counts": {"intro": ...,
"methods": ..., "results": ..., "discussion": ...}}``.  Section counts say how
often the citing document mentions the cited one in each part of its text.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace

from .errors import ValidationError

RECORD_KEYS = (
    "id",
    "title",
    "abstract",
    "authors",
    "year",
    "venue",
    "fields",
    "categories",
    "labels",
    "references",
)
COUNT_KEYS = ("intro", "methods", "results", "discussion")
YEAR_MIN = 1900
YEAR_MAX = 2100


@dataclass(frozen=True)
class ReferenceEntry:
    """One citation from a citing document to ``cited_id`` with per-section mention counts."""

    cited_id: str
    count_intro: int = 0
    count_methods: int = 0
    count_results: int = 0
    count_discussion: int = 0

    def total(self) -> int:
        return self.count_intro + self.count_methods + self.count_results + self.count_discussion


@dataclass(frozen=True)
class Document:
    """A single document with metadata and its outgoing references."""

    id: str
    title: str
    abstract: str
    authors: frozenset[str]
    year: int
    venue: str
    fields: tuple[str, ...]
    categories: tuple[str, ...]
    labels: tuple[str, ...]
    references: tuple[ReferenceEntry, ...]


@dataclass
class ValidationReport:
    """Report-only findings from :func:`validate_corpus`; never raises."""

    unresolved: list[tuple[str, str]] = field(default_factory=list)
    empty_title: list[str] = field(default_factory=list)
    empty_abstract: list[str] = field(default_factory=list)
    count_anomalies: list[tuple[str, str, int]] = field(default_factory=list)

    @property
    def is_clean(self) -> bool:
        return not (self.unresolved or self.empty_title or self.empty_abstract or self.count_anomalies)


class Corpus:
    """An ordered collection of documents with unique ids and an id index."""

    def __init__(self, documents: list[Document]):
        self.documents = list(documents)
        self.index: dict[str, Document] = {}
        for doc in self.documents:
            self.index[doc.id] = doc
        self._external: set[str] | None = None

    @classmethod
    def from_documents(cls, documents: list[Document]) -> "Corpus":
        """Build a corpus, enforcing the structural invariants of each record."""
        seen: set[str] = set()
        for doc in documents:
            _check_document(doc)
            if doc.id in seen:
                raise ValidationError(f"duplicate document id: {doc.id!r}")
            seen.add(doc.id)
        return cls(documents)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def get(self, doc_id: str) -> Document:
        try:
            return self.index[doc_id]
        except KeyError:
            raise ValidationError(f"unknown document id: {doc_id!r}") from None

    def resolvable(self, doc_id: str) -> bool:
        """True when ``doc_id`` refers to a document inside this corpus."""
        return doc_id in self.index

    def external_references(self) -> set[str]:
        """All cited ids that do not resolve within the corpus."""
        if self._external is None:
            self._external = {
                ref.cited_id
                for doc in self.documents
                for ref in doc.references
                if ref.cited_id not in self.index
            }
        return self._external


def _check_document(doc: Document) -> None:
    if not doc.id:
        raise ValidationError("document id must be non-empty")
    if not (YEAR_MIN <= doc.year <= YEAR_MAX):
        raise ValidationError(f"document {doc.id!r}: year {doc.year} outside [{YEAR_MIN}, {YEAR_MAX}]")
    seen_cited: set[str] = set()
    for ref in doc.references:
        if not ref.cited_id:
            raise ValidationError(f"document {doc.id!r}: reference with empty cited_id")
        if ref.cited_id == doc.id:
            raise ValidationError(f"document {doc.id!r}: reference cites its own id")
        if ref.cited_id in seen_cited:
            raise ValidationError(f"document {doc.id!r}: duplicate reference to {ref.cited_id!r}")
        seen_cited.add(ref.cited_id)
        counts = (ref.count_intro, ref.count_methods, ref.count_results, ref.count_discussion)
        if any(c < 0 for c in counts):
            raise ValidationError(f"document {doc.id!r}: negative count in reference to {ref.cited_id!r}")
        if ref.total() < 1:
            raise ValidationError(
                f"document {doc.id!r}: reference to {ref.cited_id!r} has zero total count"
            )


def is_self_citation(citing: Document, cited: Document) -> bool:
    """True when the two documents share at least one author id."""
    return bool(citing.authors & cited.authors)


def _parse_record(obj: dict, line_no: int, strict: bool) -> Document:
    for key in RECORD_KEYS:
        if key not in obj:
            raise ValidationError(f"line {line_no}: missing required field {key!r}")
    if strict:
        extra = set(obj) - set(RECORD_KEYS)
        if extra:
            raise ValidationError(f"line {line_no}: unknown keys {sorted(extra)!r}")
    refs = []
    raw_refs = obj["references"]
    if not isinstance(raw_refs, list):
        raise ValidationError(f"line {line_no}: 'references' must be a list")
    for r in raw_refs:
        if not isinstance(r, dict) or "cited_id" not in r or "counts" not in r:
            raise ValidationError(f"line {line_no}: reference entries need 'cited_id' and 'counts'")
        counts = r["counts"]
        if strict:
            extra = set(counts) - set(COUNT_KEYS)
            if extra:
                raise ValidationError(f"line {line_no}: unknown count keys {sorted(extra)!r}")
        refs.append(
            ReferenceEntry(
                cited_id=str(r["cited_id"]),
                count_intro=int(counts.get("intro", 0)),
                count_methods=int(counts.get("methods", 0)),
                count_results=int(counts.get("results", 0)),
                count_discussion=int(counts.get("discussion", 0)),
            )
        )
    try:
        return Document(
            id=str(obj["id"]),
            title=str(obj["title"]),
            abstract=str(obj["abstract"]),
            authors=frozenset(str(a) for a in obj["authors"]),
            year=int(obj["year"]),
            venue=str(obj["venue"]),
            fields=tuple(str(f) for f in obj["fields"]),
            categories=tuple(str(c) for c in obj["categories"]),
            labels=tuple(str(l) for l in obj["labels"]),
            references=tuple(refs),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"line {line_no}: malformed record: {exc}") from None


def load_corpus(path: str, strict: bool = False) -> Corpus:
    """Read a line-delimited corpus file; errors carry the offending line number."""
    documents: list[Document] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"line {line_no}: malformed record: {exc}") from None
            if not isinstance(obj, dict):
                raise ValidationError(f"line {line_no}: record must be an object")
            documents.append(_parse_record(obj, line_no, strict))
    return Corpus.from_documents(documents)


def save_corpus(corpus: Corpus, path: str) -> None:
    """Write a corpus in the same line-delimited format accepted by :func:`load_corpus`."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus:
            obj = {
                "id": doc.id,
                "title": doc.title,
                "abstract": doc.abstract,
                "authors": sorted(doc.authors),
                "year": doc.year,
                "venue": doc.venue,
                "fields": list(doc.fields),
                "categories": list(doc.categories),
                "labels": list(doc.labels),
                "references": [
                    {
                        "cited_id": r.cited_id,
                        "counts": {
                            "intro": r.count_intro,
                            "methods": r.count_methods,
                            "results": r.count_results,
                            "discussion": r.count_discussion,
                        },
                    }
                    for r in doc.references
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")


COUNT_ANOMALY_THRESHOLD = 100


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Collect consistency findings without raising.

    Flags unresolved cited ids, empty titles or abstracts (the encoder falls
    back to the title when the abstract is empty), and implausibly large
    per-reference mention counts.
    """
    report = ValidationReport()
    for doc in corpus:
        if not doc.title.strip():
            report.empty_title.append(doc.id)
        if not doc.abstract.strip():
            report.empty_abstract.append(doc.id)
        for ref in doc.references:
            if not corpus.resolvable(ref.cited_id):
                report.unresolved.append((doc.id, ref.cited_id))
            if ref.total() >= COUNT_ANOMALY_THRESHOLD:
                report.count_anomalies.append((doc.id, ref.cited_id, ref.total()))
    return report


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------

BROAD_FIELDS = ("biomed", "physsci", "lifeearth", "mathcs", "socialhum")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the planted-topic corpus generator.

    Documents are organised into ``topics`` planted topics, each split into
    ``subtopics_per_topic`` subtopics with their own vocabulary, so that
    lexical similarity is strongest inside a subtopic, weaker inside a topic,
    and weakest across topics.  Substantive references receive high results
    and discussion counts and stay close (same subtopic with probability
    ``same_subtopic_bias``); perfunctory references are mentioned in the
    introduction only and point at background material — usually another
    subtopic of the same topic (``noise_same_topic_bias``), occasionally a
    foreign topic — which keeps the citation graph connected while making
    low-importance citations related-but-peripheral rather than random.
    """

    topics: int = 4
    docs_per_topic: int = 50
    subtopics_per_topic: int = 5
    vocab_per_topic: int = 60
    vocab_per_subtopic: int = 30
    shared_vocab: int = 120
    title_tokens: int = 6
    abstract_tokens: int = 48
    topic_token_share: float = 0.2
    subtopic_token_share: float = 0.3
    intra_refs: int = 7
    inter_refs: int = 3
    same_subtopic_bias: float = 0.7
    noise_same_topic_bias: float = 0.7
    authors_per_topic: int = 40
    authors_per_doc: int = 3
    extra_field_prob: float = 0.1
    extra_category_prob: float = 0.2
    base_year: int = 2000
    year_span: int = 20


def _check_spec(spec: SyntheticSpec) -> None:
    if spec.topics < 1 or spec.docs_per_topic < 1:
        raise ValidationError("synthetic spec needs at least one topic and one document per topic")
    if spec.subtopics_per_topic < 1:
        raise ValidationError("subtopics_per_topic must be >= 1")
    if spec.intra_refs > spec.docs_per_topic - 1:
        raise ValidationError(
            f"infeasible spec: {spec.intra_refs} within-topic references requested "
            f"but only {spec.docs_per_topic - 1} other documents exist per topic"
        )
    if spec.inter_refs > 0 and spec.topics < 2:
        raise ValidationError("infeasible spec: cross-topic references need at least two topics")
    if spec.inter_refs > (spec.topics - 1) * spec.docs_per_topic:
        raise ValidationError("infeasible spec: more cross-topic references than foreign documents")
    if not 0.0 <= spec.same_subtopic_bias <= 1.0:
        raise ValidationError("same_subtopic_bias must lie in [0, 1]")
    if not 0.0 <= spec.noise_same_topic_bias <= 1.0:
        raise ValidationError("noise_same_topic_bias must lie in [0, 1]")
    if spec.topic_token_share < 0 or spec.subtopic_token_share < 0:
        raise ValidationError("token shares must be nonnegative")
    if spec.topic_token_share + spec.subtopic_token_share > 1.0:
        raise ValidationError("token shares must sum to at most 1")
    if spec.authors_per_doc > spec.authors_per_topic:
        raise ValidationError("infeasible spec: authors_per_doc exceeds the per-topic author pool")
    if spec.year_span < 0:
        raise ValidationError("year_span must be nonnegative")


def generate_synthetic_corpus(spec: SyntheticSpec, seed: int) -> Corpus:
    """Generate a deterministic planted-topic corpus for the given spec and seed."""
    _check_spec(spec)
    rng = random.Random(seed)

    topic_vocab = [[f"t{t:02d}w{k:03d}" for k in range(spec.vocab_per_topic)] for t in range(spec.topics)]
    sub_vocab = [
        [[f"t{t:02d}s{s}w{k:03d}" for k in range(spec.vocab_per_subtopic)] for s in range(spec.subtopics_per_topic)]
        for t in range(spec.topics)
    ]
    shared = [f"com{k:03d}" for k in range(spec.shared_vocab)]
    authors = [[f"t{t:02d}a{j:02d}" for j in range(spec.authors_per_topic)] for t in range(spec.topics)]

    doc_id = lambda t, i: f"t{t:02d}d{i:03d}"
    all_topic_docs = [[doc_id(t, i) for i in range(spec.docs_per_topic)] for t in range(spec.topics)]

    n_topic_tok = round(spec.topic_token_share * spec.abstract_tokens)
    n_sub_tok = round(spec.subtopic_token_share * spec.abstract_tokens)
    n_shared_tok = max(spec.abstract_tokens - n_topic_tok - n_sub_tok, 0)

    documents: list[Document] = []
    for t in range(spec.topics):
        topic_label = f"topic-{t:02d}"
        broad = BROAD_FIELDS[t % len(BROAD_FIELDS)]
        for i in range(spec.docs_per_topic):
            s = i % spec.subtopics_per_topic
            this_id = doc_id(t, i)

            title_pool = topic_vocab[t] + sub_vocab[t][s]
            title = " ".join(rng.choices(title_pool, k=spec.title_tokens))
            abstract_words = (
                rng.choices(topic_vocab[t], k=n_topic_tok)
                + rng.choices(sub_vocab[t][s], k=n_sub_tok)
                + rng.choices(shared, k=n_shared_tok)
            )
            rng.shuffle(abstract_words)
            abstract = " ".join(abstract_words)

            doc_authors = frozenset(rng.sample(authors[t], spec.authors_per_doc))
            year = spec.base_year + (rng.randrange(spec.year_span + 1) if spec.year_span else 0)

            fields = [broad]
            if spec.topics > 1 and rng.random() < spec.extra_field_prob:
                other_t = rng.randrange(spec.topics - 1)
                other_t += other_t >= t
                other_broad = BROAD_FIELDS[other_t % len(BROAD_FIELDS)]
                if other_broad != broad:
                    fields.append(other_broad)

            categories = [topic_label, f"{topic_label}/sub-{s}"]
            if spec.topics > 1 and rng.random() < spec.extra_category_prob:
                other_t = rng.randrange(spec.topics - 1)
                other_t += other_t >= t
                categories.append(f"topic-{other_t:02d}")

            refs: list[ReferenceEntry] = []
            used: set[str] = {this_id}

            same_sub = [d for j, d in enumerate(all_topic_docs[t]) if j % spec.subtopics_per_topic == s and d != this_id]
            same_topic = [d for d in all_topic_docs[t] if d != this_id]
            for _ in range(spec.intra_refs):
                pool = same_sub if rng.random() < spec.same_subtopic_bias else same_topic
                pool = [d for d in pool if d not in used]
                if not pool:
                    pool = [d for d in same_topic if d not in used]
                target = pool[rng.randrange(len(pool))]
                used.add(target)
                refs.append(
                    ReferenceEntry(
                        cited_id=target,
                        count_intro=rng.randint(0, 1),
                        count_methods=rng.randint(0, 2),
                        count_results=rng.randint(1, 3),
                        count_discussion=rng.randint(0, 2),
                    )
                )

            foreign = [d for u in range(spec.topics) if u != t for d in all_topic_docs[u]]
            other_sub = [d for j, d in enumerate(all_topic_docs[t]) if j % spec.subtopics_per_topic != s]
            for _ in range(spec.inter_refs):
                preferred = other_sub if rng.random() < spec.noise_same_topic_bias else foreign
                pool = [d for d in preferred if d not in used]
                if not pool:
                    pool = [d for d in foreign + other_sub if d not in used]
                target = pool[rng.randrange(len(pool))]
                used.add(target)
                refs.append(ReferenceEntry(cited_id=target, count_intro=rng.randint(1, 2)))

            documents.append(
                Document(
                    id=this_id,
                    title=title,
                    abstract=abstract,
                    authors=doc_authors,
                    year=year,
                    venue=f"J{t:02d}",
                    fields=tuple(fields),
                    categories=tuple(categories),
                    labels=(topic_label,),
                    references=tuple(refs),
                )
            )
    return Corpus.from_documents(documents)


def planted_topic(doc: Document) -> str:
    """The planted topic label of a synthetic document."""
    return doc.labels[0]


def replace_references(doc: Document, references: tuple[ReferenceEntry, ...]) -> Document:
    """A copy of ``doc`` with a different reference tuple (handy in tests)."""
    return replace(doc, references=references)
