"""Pipeline configuration and stage orchestration.

A single JSON config file drives every stage.  Stages read their inputs from
the working directory (or the configured corpus path), write their outputs
there, and record a manifest with the config hash, the seed used, and sha-256
hashes of all inputs and outputs.  Reruns with the same config and seeds
reproduce every artifact byte for byte; only the manifest timestamp differs,
which is why timestamps live nowhere else.  A lock file serializes stages per
working directory.
"""

from __future__ import annotations

import dataclasses
import datetime
import hashlib
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from . import communities, embedder, evalmetrics, figures, importance, netgraph, sampler, scimap
from .corpus import Corpus, SyntheticSpec, generate_synthetic_corpus, load_corpus, save_corpus
from .errors import CitemapError, MissingArtifactError, ValidationError
from .fileio import sha256_file

# Artifact names inside the working directory.
FEATURES = "features.tsv"
WEIGHTS = "weights.json"
SCORES = "scores.tsv"
TRIPLETS = "triplets.tsv"
TRIPLETS_TRAIN = "triplets_train.tsv"
TRIPLETS_VAL = "triplets_val.tsv"
MODEL = "model.json"
HISTORY = "history.json"
EMBEDDINGS_TEXT = "embeddings.tsv"
EMBEDDINGS_BINARY = "embeddings.bin"
KNN_EDGES = "knn_edges.tsv"
STATS = "stats.json"
OVERLAP = "overlap.json"
OVERLAP_FIGURE = "overlap.png"
ACCURACY = "accuracy.tsv"
RELATIVE_ACCURACY = "relative_accuracy.json"
ACCURACY_FIGURE = "accuracy.png"
MAP_TABLE = "map.tsv"
MAP_SVG = "map.svg"
MAP_FIGURE = "map.png"
EVAL_REPORT = "eval.json"
SWEEP_TABLE = "sweep.tsv"
SWEEP_FIGURE = "sweep.png"

KNN_METHOD = "similarity-knn"
CITATION_METHOD = "citation"


def _section(cls: type, data: dict | None, name: str):
    data = dict(data or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"config section {name!r}: unknown keys {sorted(unknown)!r}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ValidationError(f"config section {name!r}: {exc}") from None


@dataclass(frozen=True)
class FeatureOptions:
    include_intro: bool = True
    include_methods: bool = False
    include_results: bool = True
    include_discussion: bool = True
    include_self_citation: bool = True
    include_title_similarity: bool = False
    weight_method: str = "entropy"  # "entropy" or "uniform"
    include_external: bool = True

    def feature_set(self) -> importance.FeatureSet:
        return importance.FeatureSet(
            include_intro=self.include_intro,
            include_methods=self.include_methods,
            include_results=self.include_results,
            include_discussion=self.include_discussion,
            include_self_citation=self.include_self_citation,
            include_title_similarity=self.include_title_similarity,
        )


@dataclass(frozen=True)
class SamplerOptions:
    n_total: int | None = None  # None: one block per eligible anchor
    k_per_anchor: int = 5
    h_hard: int = 2
    seed: int = 13
    train_fraction: float = 0.8
    contradiction_scope: str = "global"


@dataclass(frozen=True)
class EncoderOptions:
    dim_base: int = 256
    hash_seed: int = 17
    max_tokens: int = 512

    def config(self) -> embedder.BaseEncoderConfig:
        return embedder.BaseEncoderConfig(
            dim_base=self.dim_base, hash_seed=self.hash_seed, max_tokens=self.max_tokens
        )


@dataclass(frozen=True)
class TrainOptions:
    dim_out: int = 64
    margin: float = 1.0
    learning_rate: float = 1e-2
    batch_size: int = 8
    grad_accumulation: int = 4
    epochs: int = 2
    warmup_fraction: float = 0.1
    optimizer: str = "adamw"
    weight_decay: float = 0.01
    seed: int = 29

    def config(self, margin: float | None = None) -> embedder.TrainConfig:
        return embedder.TrainConfig(
            margin=self.margin if margin is None else margin,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            grad_accumulation=self.grad_accumulation,
            epochs=self.epochs,
            warmup_fraction=self.warmup_fraction,
            optimizer=self.optimizer,
            weight_decay=self.weight_decay,
            seed=self.seed,
        )


@dataclass(frozen=True)
class GraphOptions:
    k: int = 20


@dataclass(frozen=True)
class StatsOptions:
    path_sample_size: int = 200
    seed: int = 41
    clustering: str = "local"


@dataclass(frozen=True)
class ClusterOptions:
    quality_function: str = "cpm"
    resolutions: tuple[float, ...] = (0.02, 0.05, 0.1, 0.2)
    seed: int = 43
    map_resolution: float | None = None  # None: first of resolutions

    def __post_init__(self):
        object.__setattr__(self, "resolutions", tuple(self.resolutions))
        if not self.resolutions:
            raise ValidationError("cluster.resolutions must be non-empty")


@dataclass(frozen=True)
class MapOptions:
    layout: str = "pca"
    color_by: str = "field"
    seed: int = 47


@dataclass(frozen=True)
class EvalOptions:
    tasks: str = "tasks.tsv"
    n_tasks: int = 100
    n_relevant: int = 5
    n_candidates: int = 30
    classify_train_fraction: float = 0.8
    seed: int = 53


@dataclass(frozen=True)
class SweepOptions:
    margins: tuple[float, ...] = (1.0,)
    h_values: tuple[int, ...] = (0, 2, 5)

    def __post_init__(self):
        object.__setattr__(self, "margins", tuple(self.margins))
        object.__setattr__(self, "h_values", tuple(self.h_values))
        if not self.margins or not self.h_values:
            raise ValidationError("sweep.margins and sweep.h_values must be non-empty")


@dataclass(frozen=True)
class SynthOptions:
    seed: int = 7
    topics: int = 4
    docs_per_topic: int = 50
    subtopics_per_topic: int = 5
    intra_refs: int = 7
    inter_refs: int = 3

    def spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            topics=self.topics,
            docs_per_topic=self.docs_per_topic,
            subtopics_per_topic=self.subtopics_per_topic,
            intra_refs=self.intra_refs,
            inter_refs=self.inter_refs,
        )


@dataclass(frozen=True)
class PipelineConfig:
    corpus: str = "corpus.jsonl"
    workdir: str = "work"
    features: FeatureOptions = field(default_factory=FeatureOptions)
    sampler: SamplerOptions = field(default_factory=SamplerOptions)
    encoder: EncoderOptions = field(default_factory=EncoderOptions)
    train: TrainOptions = field(default_factory=TrainOptions)
    graph: GraphOptions = field(default_factory=GraphOptions)
    stats: StatsOptions = field(default_factory=StatsOptions)
    cluster: ClusterOptions = field(default_factory=ClusterOptions)
    map: MapOptions = field(default_factory=MapOptions)
    eval: EvalOptions = field(default_factory=EvalOptions)
    sweep: SweepOptions = field(default_factory=SweepOptions)
    synth: SynthOptions = field(default_factory=SynthOptions)
    base_dir: str = "."

    def corpus_path(self) -> str:
        return os.path.normpath(os.path.join(self.base_dir, self.corpus))

    def workdir_path(self) -> str:
        return os.path.normpath(os.path.join(self.base_dir, self.workdir))

    def canonical(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def hash(self) -> str:
        raw = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(raw).hexdigest()


_SECTIONS = {
    "features": FeatureOptions,
    "sampler": SamplerOptions,
    "encoder": EncoderOptions,
    "train": TrainOptions,
    "graph": GraphOptions,
    "stats": StatsOptions,
    "cluster": ClusterOptions,
    "map": MapOptions,
    "eval": EvalOptions,
    "sweep": SweepOptions,
    "synth": SynthOptions,
}


def config_from_dict(data: dict, base_dir: str = ".") -> PipelineConfig:
    unknown = set(data) - set(_SECTIONS) - {"corpus", "workdir"}
    if unknown:
        raise ValidationError(f"config: unknown keys {sorted(unknown)!r}")
    kwargs: dict[str, Any] = {
        "corpus": data.get("corpus", "corpus.jsonl"),
        "workdir": data.get("workdir", "work"),
        "base_dir": base_dir,
    }
    for name, cls in _SECTIONS.items():
        kwargs[name] = _section(cls, data.get(name), name)
    return PipelineConfig(**kwargs)


def load_config(path: str) -> PipelineConfig:
    if not os.path.exists(path):
        raise MissingArtifactError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return config_from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# Stage machinery
# ---------------------------------------------------------------------------


class StageContext:
    """Tracks a stage's inputs and outputs and writes its manifest."""

    def __init__(self, cfg: PipelineConfig, stage: str, seed: int, strict: bool = False):
        self.cfg = cfg
        self.stage = stage
        self.seed = seed
        self.strict = strict
        self.workdir = cfg.workdir_path()
        os.makedirs(self.workdir, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}

    def path(self, name: str) -> str:
        return os.path.join(self.workdir, name)

    def require(self, name: str, where: str | None = None) -> str:
        p = where if where is not None else self.path(name)
        if not os.path.exists(p):
            raise MissingArtifactError(f"stage {self.stage!r} needs {p} (produce it with an earlier stage)")
        self.inputs[os.path.basename(p)] = sha256_file(p)
        return p

    def corpus(self) -> Corpus:
        return load_corpus(self.require("corpus", where=self.cfg.corpus_path()), strict=self.strict)

    def done(self, name: str, where: str | None = None) -> str:
        p = where if where is not None else self.path(name)
        self.outputs[os.path.basename(p)] = sha256_file(p)
        return p

    def meta_lines(self) -> list[str]:
        return [f"stage={self.stage} config_hash={self.cfg.hash()[:12]} seed={self.seed}"]

    def json_meta(self) -> dict:
        return {"stage": self.stage, "config_hash": self.cfg.hash()[:12], "seed": self.seed}

    def write_json(self, name: str, payload: dict) -> str:
        p = self.path(name)
        obj = {"_meta": self.json_meta()}
        obj.update(payload)
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return self.done(name)

    def write_manifest(self) -> str:
        p = self.path(f"manifest_{self.stage}.json")
        obj = {
            "stage": self.stage,
            "config_hash": self.cfg.hash(),
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p


@contextmanager
def _workdir_lock(workdir: str):
    lock_path = os.path.join(workdir, ".lock")
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CitemapError(f"working directory is locked ({lock_path}); another stage is running") from None
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        os.close(fd)
        yield
    finally:
        os.unlink(lock_path)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def _stage_synth(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    corpus = generate_synthetic_corpus(cfg.synth.spec(), ctx.seed)
    corpus_path = cfg.corpus_path()
    os.makedirs(os.path.dirname(os.path.abspath(corpus_path)), exist_ok=True)
    save_corpus(corpus, corpus_path)
    outputs = [ctx.done("corpus", where=corpus_path)]
    tasks = evalmetrics.citation_ranking_tasks(
        corpus,
        n_tasks=cfg.eval.n_tasks,
        n_relevant=cfg.eval.n_relevant,
        n_candidates=cfg.eval.n_candidates,
        seed=cfg.eval.seed,
    )
    tasks_path = ctx.path(cfg.eval.tasks)
    evalmetrics.write_tasks(tasks, tasks_path, ctx.meta_lines())
    outputs.append(ctx.done(cfg.eval.tasks))
    return outputs


def _base_vectors_if_needed(corpus: Corpus, cfg: PipelineConfig):
    if not cfg.features.include_title_similarity:
        return None
    enc = cfg.encoder.config()
    return {doc.id: embedder.base_embed(doc, enc) for doc in corpus}


def _stage_score(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    corpus = ctx.corpus()
    fs = cfg.features.feature_set()
    table = importance.extract_citation_features(
        corpus, fs, base_vectors=_base_vectors_if_needed(corpus, cfg), include_external=cfg.features.include_external
    )
    if cfg.features.weight_method == "entropy":
        weights = importance.entropy_weights(table)
    elif cfg.features.weight_method == "uniform":
        weights = importance.uniform_weights(fs)
    else:
        raise ValidationError(f"unknown weight_method {cfg.features.weight_method!r}")
    scored = importance.score_citations(table, weights)
    importance.write_feature_table(table, ctx.path(FEATURES), ctx.meta_lines())
    importance.write_weights(weights, ctx.path(WEIGHTS), ctx.json_meta())
    importance.write_scores(scored, ctx.path(SCORES), ctx.meta_lines())
    return [ctx.done(FEATURES), ctx.done(WEIGHTS), ctx.done(SCORES)]


def _resolved_n_total(corpus: Corpus, scored, opts: SamplerOptions) -> int:
    if opts.n_total is not None:
        return opts.n_total
    probe = sampler.SamplerConfig(
        n_total=1, k_per_anchor=opts.k_per_anchor, h_hard=opts.h_hard, seed=opts.seed
    )
    anchors = sampler.eligible_anchors(corpus, sampler.scores_by_anchor(scored), probe)
    if not anchors:
        raise ValidationError("no eligible anchors; cannot derive a triplet budget")
    return len(anchors) * opts.k_per_anchor


def _sample_and_split(corpus: Corpus, scored, opts: SamplerOptions, h_hard: int | None = None):
    scfg = sampler.SamplerConfig(
        n_total=_resolved_n_total(corpus, scored, opts),
        k_per_anchor=opts.k_per_anchor,
        h_hard=opts.h_hard if h_hard is None else h_hard,
        seed=opts.seed,
    )
    triplets = sampler.sample_triplets(corpus, scored, scfg)
    filtered = sampler.filter_contradictions(triplets, scope=opts.contradiction_scope)
    train_t, val_t = sampler.split_train_validation(filtered, opts.train_fraction, opts.seed)
    return filtered, train_t, val_t


def _stage_sample(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    corpus = ctx.corpus()
    scored = importance.read_scores(ctx.require(SCORES))
    opts = dataclasses.replace(cfg.sampler, seed=ctx.seed)
    filtered, train_t, val_t = _sample_and_split(corpus, scored, opts)
    sampler.write_triplets(filtered, ctx.path(TRIPLETS), ctx.meta_lines())
    sampler.write_triplets(train_t, ctx.path(TRIPLETS_TRAIN), ctx.meta_lines())
    sampler.write_triplets(val_t, ctx.path(TRIPLETS_VAL), ctx.meta_lines())
    return [ctx.done(TRIPLETS), ctx.done(TRIPLETS_TRAIN), ctx.done(TRIPLETS_VAL)]


def _stage_train(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    corpus = ctx.corpus()
    train_t = sampler.read_triplets(ctx.require(TRIPLETS_TRAIN))
    val_path = ctx.path(TRIPLETS_VAL)
    val_t = sampler.read_triplets(ctx.require(TRIPLETS_VAL)) if os.path.exists(val_path) else None
    model0 = embedder.init_model(cfg.encoder.config(), dim_out=cfg.train.dim_out, seed=ctx.seed)
    tcfg = dataclasses.replace(cfg.train.config(), seed=ctx.seed)
    model, history = embedder.train(model0, train_t, corpus, tcfg, val_triplets=val_t)
    embedder.write_model(model, ctx.path(MODEL), ctx.json_meta())
    ctx.write_json(HISTORY, {"train_loss": history.train_loss, "val_loss": history.val_loss})
    return [ctx.done(MODEL), ctx.path(HISTORY)]


def _stage_embed(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    corpus = ctx.corpus()
    model = embedder.read_model(ctx.require(MODEL))
    matrix = embedder.embed_corpus(corpus, model)
    embedder.write_embeddings_text(matrix, ctx.path(EMBEDDINGS_TEXT), ctx.meta_lines())
    embedder.write_embeddings_binary(matrix, ctx.path(EMBEDDINGS_BINARY))
    return [ctx.done(EMBEDDINGS_TEXT), ctx.done(EMBEDDINGS_BINARY)]


def _stage_graph(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    matrix = embedder.read_embeddings_binary(ctx.require(EMBEDDINGS_BINARY))
    g = netgraph.build_knn_graph(matrix, k=cfg.graph.k)
    netgraph.write_edge_list(g, ctx.path(KNN_EDGES), ctx.meta_lines())
    return [ctx.done(KNN_EDGES)]


def _stage_stats(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    g = netgraph.read_edge_list(ctx.require(KNN_EDGES))
    corpus = ctx.corpus()
    citation = netgraph.build_citation_graph(corpus)
    rand = netgraph.random_graph_like(g, seed=ctx.seed)
    payload = {}
    for name, graph in ((KNN_METHOD, g), (CITATION_METHOD, citation), ("random", rand)):
        stats = netgraph.graph_statistics(
            graph, path_sample_size=cfg.stats.path_sample_size, seed=ctx.seed, clustering=cfg.stats.clustering
        )
        payload[name.replace("-", "_")] = dataclasses.asdict(stats)
    return [ctx.write_json(STATS, payload)]


def _stage_overlap(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    g = netgraph.read_edge_list(ctx.require(KNN_EDGES))
    corpus = ctx.corpus()
    citation = netgraph.build_citation_graph(corpus)
    rand = netgraph.random_graph_like(g, seed=ctx.seed)
    comparisons = {
        "vs_citation": netgraph.edge_overlap(g, citation),
        "vs_random": netgraph.edge_overlap(g, rand),
    }
    payload = {}
    for name, counts in comparisons.items():
        total = counts["shared"] + counts["only_first"]
        payload[name] = dict(counts, shared_fraction=counts["shared"] / total if total else 0.0)
    out = [ctx.write_json(OVERLAP, payload)]
    figures.plot_overlap(comparisons, ctx.path(OVERLAP_FIGURE))
    out.append(ctx.done(OVERLAP_FIGURE))
    return out


def _partition_name(resolution: float) -> str:
    return f"partition_{resolution:g}.tsv"


def _stage_cluster(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    g = netgraph.read_edge_list(ctx.require(KNN_EDGES))
    outputs = []
    for res in cfg.cluster.resolutions:
        p = communities.leiden(g, quality_function=cfg.cluster.quality_function, resolution=res, seed=ctx.seed)
        name = _partition_name(res)
        communities.write_partition(p, ctx.path(name), ctx.meta_lines())
        outputs.append(ctx.done(name))
    return outputs


def _stage_accuracy(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    corpus = ctx.corpus()
    g = netgraph.read_edge_list(ctx.require(KNN_EDGES))
    citation = netgraph.build_citation_graph(corpus)
    table = communities.AccuracyTable()
    for method, graph in ((KNN_METHOD, g), (CITATION_METHOD, citation)):
        part = communities.granularity_sweep(
            graph,
            corpus,
            quality_function=cfg.cluster.quality_function,
            resolutions=cfg.cluster.resolutions,
            seed=ctx.seed,
            method=method,
        )
        table.rows.extend(part.rows)
    communities.write_accuracy_table(table, ctx.path(ACCURACY), ctx.meta_lines())
    outputs = [ctx.done(ACCURACY)]
    outputs.append(ctx.write_json(RELATIVE_ACCURACY, {"scores": communities.relative_accuracy(table)}))
    figures.plot_accuracy(table, ctx.path(ACCURACY_FIGURE))
    outputs.append(ctx.done(ACCURACY_FIGURE))
    return outputs


def _stage_map(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    corpus = ctx.corpus()
    matrix = embedder.read_embeddings_binary(ctx.require(EMBEDDINGS_BINARY))
    map_res = cfg.cluster.map_resolution if cfg.cluster.map_resolution is not None else cfg.cluster.resolutions[0]
    part = communities.read_partition(ctx.require(_partition_name(map_res)))
    topics = scimap.topic_vectors(part, matrix)
    coords = scimap.layout_2d(topics, method=cfg.map.layout, seed=ctx.seed)
    scimap.apply_layout(topics, coords)
    # No external category taxonomy at this point, so distinct categories
    # count as unrelated; passing the identity explicitly keeps that choice
    # out of the warning channel.
    categories = sorted({c for doc in corpus for c in doc.categories})
    similarity = scimap.CategorySimilarity.identity(categories)
    scimap.apply_overlays(
        topics,
        fields=scimap.overlay_field(part, corpus),
        interdisciplinarity=scimap.overlay_interdisciplinarity(part, corpus, similarity),
        mean_years=scimap.overlay_mean_year(part, corpus),
    )
    written = scimap.export_map(topics, ctx.path(MAP_TABLE), svg=True, color_by=cfg.map.color_by, meta_lines=ctx.meta_lines())
    outputs = [ctx.done(os.path.basename(p)) for p in written]
    figures.plot_map(topics, ctx.path(MAP_FIGURE), color_by=cfg.map.color_by)
    outputs.append(ctx.done(MAP_FIGURE))
    return outputs


def _ensure_tasks(ctx: StageContext, cfg: PipelineConfig, corpus: Corpus) -> tuple[list[evalmetrics.RankingTask], str | None]:
    """Load the ranking-task file, generating it from the corpus when absent.

    Generation always uses ``eval.n_tasks``/``eval.seed`` so the file comes out
    identical whether the eval or the sweep stage creates it first.  Returns
    the tasks plus the path written (None when the file already existed).
    """
    path = ctx.path(cfg.eval.tasks)
    if os.path.exists(path):
        return evalmetrics.read_tasks(ctx.require(cfg.eval.tasks)), None
    tasks = evalmetrics.citation_ranking_tasks(
        corpus,
        n_tasks=cfg.eval.n_tasks,
        n_relevant=cfg.eval.n_relevant,
        n_candidates=cfg.eval.n_candidates,
        seed=cfg.eval.seed,
    )
    evalmetrics.write_tasks(tasks, path, [f"stage={ctx.stage} config_hash={cfg.hash()[:12]} seed={cfg.eval.seed}"])
    return tasks, ctx.done(cfg.eval.tasks)


def _stage_eval(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    corpus = ctx.corpus()
    matrix = embedder.read_embeddings_binary(ctx.require(EMBEDDINGS_BINARY))
    tasks, tasks_path = _ensure_tasks(ctx, cfg, corpus)
    metrics = evalmetrics.evaluate_ranking_tasks(matrix, tasks)
    split = evalmetrics.make_label_split(corpus, cfg.eval.classify_train_fraction, seed=ctx.seed)
    predictions = evalmetrics.nearest_centroid_classify(matrix, split)
    metrics["macro_f1"] = evalmetrics.macro_f1(predictions, [cls for _, cls in split.test])
    payload = dict(metrics, n_tasks=len(tasks), n_test_docs=len(split.test))
    outputs = [] if tasks_path is None else [tasks_path]
    outputs.append(ctx.write_json(EVAL_REPORT, payload))
    return outputs


def _stage_sweep(ctx: StageContext, cfg: PipelineConfig) -> list[str]:
    corpus = ctx.corpus()
    scored = importance.read_scores(ctx.require(SCORES))
    tasks, tasks_path = _ensure_tasks(ctx, cfg, corpus)
    rows = []
    for margin in cfg.sweep.margins:
        for h in cfg.sweep.h_values:
            filtered, train_t, val_t = _sample_and_split(corpus, scored, cfg.sampler, h_hard=h)
            model0 = embedder.init_model(cfg.encoder.config(), dim_out=cfg.train.dim_out, seed=cfg.train.seed)
            model, _ = embedder.train(model0, train_t, corpus, cfg.train.config(margin=margin))
            satisfaction = embedder.triplet_satisfaction(model, val_t, corpus)
            matrix = embedder.embed_corpus(corpus, model)
            metrics = evalmetrics.evaluate_ranking_tasks(matrix, tasks)
            rows.append(
                {
                    "margin": margin,
                    "h_hard": h,
                    "triplets": len(filtered),
                    "val_satisfaction": satisfaction,
                    "map": metrics["map"],
                }
            )
    from .fileio import format_float, write_tsv

    write_tsv(
        ctx.path(SWEEP_TABLE),
        ["margin", "h_hard", "triplets", "val_satisfaction", "map"],
        (
            (format_float(r["margin"]), r["h_hard"], r["triplets"], format_float(r["val_satisfaction"]), format_float(r["map"]))
            for r in rows
        ),
        ctx.meta_lines(),
    )
    outputs = [] if tasks_path is None else [tasks_path]
    outputs.append(ctx.done(SWEEP_TABLE))
    figures.plot_sweep(rows, ctx.path(SWEEP_FIGURE))
    outputs.append(ctx.done(SWEEP_FIGURE))
    return outputs


_STAGES: dict[str, Callable[[StageContext, PipelineConfig], list[str]]] = {
    "synth": _stage_synth,
    "score": _stage_score,
    "sample": _stage_sample,
    "train": _stage_train,
    "embed": _stage_embed,
    "graph": _stage_graph,
    "stats": _stage_stats,
    "overlap": _stage_overlap,
    "cluster": _stage_cluster,
    "accuracy": _stage_accuracy,
    "map": _stage_map,
    "eval": _stage_eval,
    "sweep": _stage_sweep,
}

# The core pipeline in dependency order; synth/overlap/sweep are extras.
STAGE_ORDER = ("score", "sample", "train", "embed", "graph", "stats", "cluster", "accuracy", "map", "eval")
ALL_STAGES = tuple(_STAGES)

_STAGE_SEEDS = {
    "synth": lambda cfg: cfg.synth.seed,
    "sample": lambda cfg: cfg.sampler.seed,
    "train": lambda cfg: cfg.train.seed,
    "stats": lambda cfg: cfg.stats.seed,
    "overlap": lambda cfg: cfg.stats.seed,
    "cluster": lambda cfg: cfg.cluster.seed,
    "accuracy": lambda cfg: cfg.cluster.seed,
    "map": lambda cfg: cfg.map.seed,
    "eval": lambda cfg: cfg.eval.seed,
    "sweep": lambda cfg: cfg.sampler.seed,
}


def stage_seed(stage: str, cfg: PipelineConfig, override: int | None = None) -> int:
    if override is not None:
        return override
    picker = _STAGE_SEEDS.get(stage)
    return picker(cfg) if picker else 0


def run_stage(
    stage: str,
    cfg: PipelineConfig,
    seed_override: int | None = None,
    strict: bool = False,
    threads: int = 1,
) -> list[str]:
    """Run one pipeline stage under the workdir lock; returns written paths.

    ``threads`` is accepted for interface stability; every computation here is
    single-threaded and deterministic, which trivially satisfies the
    requirement that worker count must not change results.
    """
    if stage not in _STAGES:
        raise ValidationError(f"unknown stage {stage!r}; choose from {sorted(_STAGES)}")
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    ctx = StageContext(cfg, stage, seed=stage_seed(stage, cfg, seed_override), strict=strict)
    with _workdir_lock(ctx.workdir):
        outputs = _STAGES[stage](ctx, cfg)
        manifest = ctx.write_manifest()
    return outputs + [manifest]


def run_pipeline(
    cfg: PipelineConfig,
    stages: Sequence[str] = STAGE_ORDER,
    seed_override: int | None = None,
    strict: bool = False,
) -> dict[str, list[str]]:
    """Run several stages in order; returns stage → written paths."""
    return {stage: run_stage(stage, cfg, seed_override=seed_override, strict=strict) for stage in stages}
