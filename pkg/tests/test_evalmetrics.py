"""Tests for ranking metrics, the label classifier, and task construction.

Every metric is pinned to hand-computed values on small rankings, plus a
property: promoting a relevant item past an adjacent distractor never hurts
the score.  Task construction is checked for its relevance contract — a
candidate is gold only if it is cited substantively (beyond the intro) and
shares a label with the target.
"""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from citemap.corpus import Corpus
from citemap.embedder import EmbeddingMatrix
from citemap.errors import ValidationError
from citemap.evalmetrics import (
    LabeledSplit,
    RankingTask,
    average_precision,
    citation_ranking_tasks,
    evaluate_ranking_tasks,
    macro_f1,
    make_label_split,
    map_score,
    ndcg,
    nearest_centroid_classify,
    precision_at_1,
    rank_candidates,
    read_tasks,
    write_tasks,
)

from conftest import make_doc, ref


def matrix_of(rows):
    ids = list(rows)
    return EmbeddingMatrix(ids=ids, vectors=np.array([rows[i] for i in ids], dtype=float))


def task(target, candidates, relevant):
    return RankingTask(target=target, candidates=tuple(candidates), relevant=frozenset(relevant))


# ---------------------------------------------------------------------------
# Ranking
# ---------------------------------------------------------------------------


def test_rank_candidates_by_cosine_with_id_ties():
    matrix = matrix_of(
        {
            "q": [1.0, 0.0],
            "a": [1.0, 0.0],
            "b": [2.0, 0.0],  # same direction as a: cosine tie, id order decides
            "c": [0.0, 1.0],
            "d": [1.0, 1.0],
        }
    )
    ranking = rank_candidates(matrix, task("q", ["c", "d", "b", "a"], ["a"]))
    assert ranking == ["a", "b", "d", "c"]


def test_rank_candidates_zero_vector_scores_zero():
    matrix = matrix_of({"q": [1.0, 0.0], "a": [0.0, 0.0], "b": [-1.0, 0.0]})
    # zero vector gets similarity 0, beating the anti-aligned candidate
    assert rank_candidates(matrix, task("q", ["a", "b"], ["a"])) == ["a", "b"]


def test_ranking_task_validation():
    with pytest.raises(ValidationError, match="empty relevant"):
        task("q", ["a"], [])
    with pytest.raises(ValidationError, match="outside the candidate pool"):
        task("q", ["a"], ["zz"])
    with pytest.raises(ValidationError, match="own candidate"):
        task("q", ["q", "a"], ["a"])
    with pytest.raises(ValidationError, match="duplicate"):
        task("q", ["a", "a"], ["a"])


def test_average_precision_hand_values():
    assert average_precision(["x", "r", "y"], {"r"}) == pytest.approx(0.5, abs=1e-12)
    assert average_precision(["r1", "x", "r2"], {"r1", "r2"}) == pytest.approx(5.0 / 6.0, abs=1e-12)
    assert average_precision(["r1", "r2", "x"], {"r1", "r2"}) == 1.0
    assert average_precision(["x", "y"], {"r"}) == 0.0  # relevant never retrieved
    with pytest.raises(ValidationError, match="non-empty"):
        average_precision(["x"], set())


def test_ndcg_hand_values():
    assert ndcg(["x", "y", "r"], {"r"}) == pytest.approx(1.0 / math.log2(4.0), abs=1e-12)
    assert ndcg(["x", "y", "r"], {"r"}) == pytest.approx(0.5, abs=1e-12)
    assert ndcg(["r1", "r2", "x"], {"r1", "r2"}) == 1.0
    expected = (1.0 + 1.0 / math.log2(5.0)) / (1.0 + 1.0 / math.log2(3.0))
    assert ndcg(["r1", "x", "y", "r2"], {"r1", "r2"}) == pytest.approx(expected, abs=1e-12)


def test_ndcg_cutoff():
    assert ndcg(["x", "y", "r"], {"r"}, cutoff=2) == 0.0
    assert ndcg(["r", "x", "y"], {"r"}, cutoff=1) == 1.0
    # With only 2 ranks visible, the ideal also holds at most 2 hits.
    assert ndcg(["r1", "r2", "r3"], {"r1", "r2", "r3"}, cutoff=2) == 1.0
    with pytest.raises(ValidationError, match="cutoff"):
        ndcg(["r"], {"r"}, cutoff=0)


def test_precision_at_1_and_map():
    tasks = [task("q1", ["a", "b"], ["a"]), task("q2", ["c", "d"], ["d"])]
    rankings = [["a", "b"], ["c", "d"]]
    assert precision_at_1(tasks, rankings) == 0.5
    assert map_score(tasks, rankings) == pytest.approx((1.0 + 0.5) / 2.0, abs=1e-12)


def test_aggregate_metrics_reject_misaligned_input():
    tasks = [task("q1", ["a", "b"], ["a"])]
    for fn in (map_score, precision_at_1):
        with pytest.raises(ValidationError, match="aligned"):
            fn(tasks, [])
        with pytest.raises(ValidationError, match="aligned"):
            fn([], [["a"]])


def test_evaluate_ranking_tasks_perfect_geometry():
    matrix = matrix_of(
        {
            "q": [1.0, 0.0],
            "r1": [0.9, 0.1],
            "r2": [0.95, 0.05],
            "x1": [0.0, 1.0],
            "x2": [-1.0, 0.5],
        }
    )
    scores = evaluate_ranking_tasks(matrix, [task("q", ["x1", "r1", "x2", "r2"], ["r1", "r2"])])
    assert scores == {"map": 1.0, "ndcg": 1.0, "p_at_1": 1.0}
    with pytest.raises(ValidationError, match="no ranking tasks"):
        evaluate_ranking_tasks(matrix, [])


@given(
    flags=st.lists(st.booleans(), min_size=2, max_size=12).filter(
        lambda f: any(f) and not all(f)
    ),
    data=st.data(),
)
def test_promoting_a_relevant_item_never_hurts(flags, data):
    ids = [f"d{i}" for i in range(len(flags))]
    relevant = {d for d, f in zip(ids, flags) if f}
    swappable = [i for i in range(len(flags) - 1) if not flags[i] and flags[i + 1]]
    if not swappable:
        return  # already ideally ordered; nothing to promote
    i = data.draw(st.sampled_from(swappable))
    promoted = ids[:i] + [ids[i + 1], ids[i]] + ids[i + 2 :]
    assert average_precision(promoted, relevant) >= average_precision(ids, relevant)
    assert ndcg(promoted, relevant) >= ndcg(ids, relevant)
    for ranking in (ids, promoted):
        assert 0.0 <= average_precision(ranking, relevant) <= 1.0
        assert 0.0 <= ndcg(ranking, relevant) <= 1.0


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def test_macro_f1_hand_values():
    assert macro_f1(["a", "c", "b"], ["a", "b", "c"]) == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert macro_f1(["a", "b"], ["a", "b"]) == 1.0
    # Class a: tp=1 fp=0 fn=1 -> 2/3; the stray prediction z is not a gold class.
    assert macro_f1(["a", "z"], ["a", "a"]) == pytest.approx(2.0 / 3.0, abs=1e-12)
    # Class a: tp=2 fp=1 fn=0 -> 4/5; gold class b never predicted -> 0.
    assert macro_f1(["a", "a", "a"], ["a", "a", "b"]) == pytest.approx(
        (4.0 / 5.0 + 0.0) / 2.0, abs=1e-12
    )
    with pytest.raises(ValidationError, match="aligned"):
        macro_f1(["a"], [])


def test_labeled_split_validation():
    with pytest.raises(ValidationError, match="non-empty"):
        LabeledSplit(train=[], test=[("x", "a")])
    with pytest.raises(ValidationError, match="absent from training"):
        LabeledSplit(train=[("x", "a")], test=[("y", "b")])
    split = LabeledSplit(train=[("x", "a"), ("y", "b")], test=[("z", "a")])
    assert split.test == [("z", "a")]


def test_make_label_split_per_class_fractions():
    docs = [make_doc(f"a{i}", labels=("lab-a",)) for i in range(10)] + [
        make_doc(f"b{i}", labels=("lab-b",)) for i in range(10)
    ]
    split = make_label_split(Corpus(docs), train_fraction=0.8, seed=3)
    train_by_class = {cls: 0 for cls in ("lab-a", "lab-b")}
    for _, cls in split.train:
        train_by_class[cls] += 1
    assert train_by_class == {"lab-a": 8, "lab-b": 8}
    assert len(split.test) == 4
    assert set(doc_id for doc_id, _ in split.train).isdisjoint(doc_id for doc_id, _ in split.test)
    again = make_label_split(Corpus(docs), train_fraction=0.8, seed=3)
    assert (again.train, again.test) == (split.train, split.test)


def test_make_label_split_singletons_stay_in_training():
    docs = [make_doc(f"a{i}", labels=("lab-a",)) for i in range(5)] + [
        make_doc("solo", labels=("lab-rare",))
    ]
    split = make_label_split(Corpus(docs), train_fraction=0.5, seed=0)
    assert ("solo", "lab-rare") in split.train
    assert all(cls != "lab-rare" for _, cls in split.test)


def test_make_label_split_never_swallows_the_test_side():
    # round(4 * 0.9) == 4 would leave no test docs; one must be pulled back.
    docs = [make_doc(f"a{i}", labels=("lab-a",)) for i in range(4)]
    split = make_label_split(Corpus(docs), train_fraction=0.9, seed=1)
    assert len(split.train) == 3 and len(split.test) == 1


def test_make_label_split_validation():
    docs = [make_doc("a", labels=("lab-a",)), make_doc("b", labels=("lab-a",))]
    with pytest.raises(ValidationError, match="train_fraction"):
        make_label_split(Corpus(docs), train_fraction=1.0)
    unlabeled = [make_doc("a", labels=()), make_doc("b", labels=())]
    with pytest.raises(ValidationError, match="no labeled documents"):
        make_label_split(Corpus(unlabeled))


def test_nearest_centroid_hand_geometry():
    matrix = matrix_of(
        {
            "t1": [1.0, 0.1],
            "t2": [1.0, -0.1],
            "t3": [0.0, 1.0],
            "x": [0.9, 0.2],
            "y": [0.1, 1.0],
        }
    )
    split = LabeledSplit(
        train=[("t1", "lab-a"), ("t2", "lab-a"), ("t3", "lab-b")],
        test=[("x", "lab-a"), ("y", "lab-b")],
    )
    predictions = nearest_centroid_classify(matrix, split)
    assert predictions == ["lab-a", "lab-b"]
    assert macro_f1(predictions, [cls for _, cls in split.test]) == 1.0


def test_nearest_centroid_tie_prefers_smaller_class_name():
    matrix = matrix_of({"t1": [1.0, 0.0], "t2": [0.0, 1.0], "x": [1.0, 1.0]})
    split = LabeledSplit(train=[("t1", "lab-b"), ("t2", "lab-a")], test=[("x", "lab-a")])
    assert nearest_centroid_classify(matrix, split) == ["lab-a"]


# ---------------------------------------------------------------------------
# Task construction
# ---------------------------------------------------------------------------


def hand_task_corpus():
    refs = (
        ref("r1", intro=3),  # same label but background-only: never gold
        ref("r2", methods=1),
        ref("r3", results=2),
        ref("r4", intro=1, discussion=1),
        ref("r5", methods=4),  # substantive but different label: never gold
    )
    docs = [make_doc("tgt", labels=("lab-a",), references=refs)]
    for rid in ("r1", "r2", "r3", "r4"):
        docs.append(make_doc(rid, labels=("lab-a",)))
    docs.append(make_doc("r5", labels=("lab-b",)))
    docs += [make_doc(f"z{i}", labels=("lab-b",)) for i in range(4)]
    return Corpus(docs)


def test_task_relevance_requires_substantive_same_label_citation():
    corpus = hand_task_corpus()
    tasks = citation_ranking_tasks(corpus, n_tasks=1, n_relevant=3, n_candidates=5, seed=2)
    assert len(tasks) == 1
    t = tasks[0]
    assert t.target == "tgt"
    assert t.relevant == frozenset({"r2", "r3", "r4"})
    assert len(t.candidates) == 5
    cited = {"r1", "r2", "r3", "r4", "r5"}
    distractors = set(t.candidates) - t.relevant
    assert distractors <= {f"z{i}" for i in range(4)}  # uncited only
    assert not distractors & cited


def test_tasks_are_deterministic_and_well_formed(small_synth):
    first = citation_ranking_tasks(small_synth, n_tasks=10, n_relevant=2, n_candidates=8, seed=5)
    second = citation_ranking_tasks(small_synth, n_tasks=10, n_relevant=2, n_candidates=8, seed=5)
    assert first == second
    assert 1 <= len(first) <= 10
    for t in first:
        assert len(t.candidates) == 8
        assert len(t.relevant) == 2
        assert t.target not in t.candidates
        target_doc = small_synth.get(t.target)
        by_id = {r.cited_id: r for r in target_doc.references}
        for doc_id in t.relevant:
            r = by_id[doc_id]
            assert r.count_methods + r.count_results + r.count_discussion > 0
            assert set(target_doc.labels) & set(small_synth.get(doc_id).labels)
        for doc_id in set(t.candidates) - t.relevant:
            assert doc_id not in by_id


def test_tasks_vary_with_seed(small_synth):
    a = citation_ranking_tasks(small_synth, n_tasks=10, n_relevant=2, n_candidates=8, seed=5)
    b = citation_ranking_tasks(small_synth, n_tasks=10, n_relevant=2, n_candidates=8, seed=6)
    assert a != b


def test_task_construction_validation():
    corpus = hand_task_corpus()
    with pytest.raises(ValidationError, match="n_candidates > n_relevant"):
        citation_ranking_tasks(corpus, n_tasks=1, n_relevant=0, n_candidates=5)
    with pytest.raises(ValidationError, match="n_candidates > n_relevant"):
        citation_ranking_tasks(corpus, n_tasks=1, n_relevant=5, n_candidates=5)
    with pytest.raises(ValidationError, match="substantively cited"):
        citation_ranking_tasks(corpus, n_tasks=1, n_relevant=4, n_candidates=6)
    with pytest.raises(ValidationError, match="not enough uncited"):
        citation_ranking_tasks(corpus, n_tasks=1, n_relevant=3, n_candidates=30)


def test_tasks_round_trip(tmp_path):
    corpus = hand_task_corpus()
    tasks = citation_ranking_tasks(corpus, n_tasks=1, n_relevant=3, n_candidates=5, seed=2)
    path = str(tmp_path / "tasks.tsv")
    write_tasks(tasks, path, meta_lines=["stage=eval"])
    assert open(path).readline() == "# stage=eval\n"
    assert read_tasks(path) == tasks


def test_read_tasks_rejects_bad_flags(tmp_path):
    path = str(tmp_path / "tasks.tsv")
    with open(path, "w") as fh:
        fh.write("target\tcandidate\tis_relevant\nq\ta\tmaybe\n")
    with pytest.raises(ValidationError, match="must be 0 or 1"):
        read_tasks(path)
    with open(path, "w") as fh:
        fh.write("target\twrong\ncolumns\there\n")
    with pytest.raises(ValidationError, match="expected columns"):
        read_tasks(path)
