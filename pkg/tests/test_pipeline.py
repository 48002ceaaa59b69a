"""End-to-end pipeline tests.

A deliberately small synthetic corpus (3 topics x 10 docs) drives all
thirteen stages once per module; individual tests then assert on the
artifacts: every stage writes what it promises plus a manifest, every text
artifact opens with a stage/config-hash/seed header, and a second run from
the same config reproduces every file byte for byte (manifests differ only
in their timestamp).
"""

import json
import os

import pytest

from citemap.cli import main as cli_main
from citemap.errors import CitemapError, MissingArtifactError, ValidationError
from citemap.fileio import read_tsv, sha256_file
from citemap.pipeline import (
    ALL_STAGES,
    STAGE_ORDER,
    ClusterOptions,
    SweepOptions,
    config_from_dict,
    load_config,
    run_pipeline,
    run_stage,
    stage_seed,
)

SMALL_CONFIG = {
    "corpus": "corpus.jsonl",
    "workdir": "work",
    "synth": {
        "seed": 7,
        "topics": 3,
        "docs_per_topic": 10,
        "subtopics_per_topic": 2,
        "intra_refs": 4,
        "inter_refs": 2,
    },
    "sampler": {"k_per_anchor": 3, "h_hard": 1, "seed": 13},
    "encoder": {"dim_base": 32, "max_tokens": 64},
    "train": {"dim_out": 8, "epochs": 1, "grad_accumulation": 2},
    "graph": {"k": 4},
    "stats": {"path_sample_size": 10},
    "cluster": {"resolutions": [0.05, 0.2]},
    "eval": {"n_tasks": 8, "n_relevant": 2, "n_candidates": 6},
    "sweep": {"margins": [0.5], "h_values": [0, 1]},
}


def write_config(base_dir, data=None):
    path = os.path.join(str(base_dir), "pipeline.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(SMALL_CONFIG if data is None else data, fh, indent=2)
    return path


def run_all_stages(base_dir):
    cfg = load_config(write_config(base_dir))
    return cfg, {stage: run_stage(stage, cfg) for stage in ALL_STAGES}


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipeline")
    cfg, written = run_all_stages(base)
    return cfg, str(base), written


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def test_config_defaults():
    cfg = config_from_dict({})
    assert (cfg.sampler.k_per_anchor, cfg.sampler.h_hard) == (5, 2)
    assert (cfg.train.margin, cfg.train.batch_size, cfg.train.grad_accumulation) == (1.0, 8, 4)
    assert cfg.train.epochs == 2
    assert cfg.graph.k == 20
    assert cfg.cluster.resolutions == (0.02, 0.05, 0.1, 0.2)
    assert cfg.sweep.h_values == (0, 2, 5)
    assert (cfg.eval.n_tasks, cfg.eval.n_relevant, cfg.eval.n_candidates) == (100, 5, 30)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValidationError, match="unknown keys.*'bogus'"):
        config_from_dict({"bogus": {}})
    with pytest.raises(ValidationError, match="section 'train'.*'bogus'"):
        config_from_dict({"train": {"bogus": 1}})


def test_load_config_errors(tmp_path):
    with pytest.raises(MissingArtifactError, match="config file not found"):
        load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError, match="invalid JSON"):
        load_config(str(bad))
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ValidationError, match="JSON object"):
        load_config(str(arr))


def test_option_section_validation():
    with pytest.raises(ValidationError, match="resolutions"):
        ClusterOptions(resolutions=())
    with pytest.raises(ValidationError, match="sweep"):
        SweepOptions(margins=())


def test_config_hash_ignores_location_but_not_options(tmp_path):
    a = config_from_dict(dict(SMALL_CONFIG), base_dir=str(tmp_path / "x"))
    b = config_from_dict(dict(SMALL_CONFIG), base_dir=str(tmp_path / "y"))
    assert a.hash() == b.hash()
    assert len(a.hash()) == 64
    changed = json.loads(json.dumps(SMALL_CONFIG))
    changed["train"]["margin"] = 0.25
    assert config_from_dict(changed).hash() != config_from_dict(dict(SMALL_CONFIG)).hash()


def test_stage_seed_selection():
    cfg = config_from_dict({})
    assert stage_seed("cluster", cfg) == cfg.cluster.seed
    assert stage_seed("train", cfg) == cfg.train.seed
    assert stage_seed("score", cfg) == 0  # no dedicated seed: deterministic stage
    assert stage_seed("cluster", cfg, override=99) == 99


# ---------------------------------------------------------------------------
# Stage orchestration
# ---------------------------------------------------------------------------

EXPECTED_ARTIFACTS = {
    "synth": ["tasks.tsv"],  # plus the corpus outside the workdir
    "score": ["features.tsv", "weights.json", "scores.tsv"],
    "sample": ["triplets.tsv", "triplets_train.tsv", "triplets_val.tsv"],
    "train": ["model.json", "history.json"],
    "embed": ["embeddings.tsv", "embeddings.bin"],
    "graph": ["knn_edges.tsv"],
    "stats": ["stats.json"],
    "overlap": ["overlap.json", "overlap.png"],
    "cluster": ["partition_0.05.tsv", "partition_0.2.tsv"],
    "accuracy": ["accuracy.tsv", "relative_accuracy.json", "accuracy.png"],
    "map": ["map.tsv", "map.svg", "map.png"],
    "eval": ["eval.json"],
    "sweep": ["sweep.tsv", "sweep.png"],
}


def test_every_stage_writes_artifacts_and_manifest(full_run):
    cfg, base, written = full_run
    work = cfg.workdir_path()
    assert os.path.exists(cfg.corpus_path())
    for stage in ALL_STAGES:
        names = [os.path.basename(p) for p in written[stage]]
        for artifact in EXPECTED_ARTIFACTS[stage]:
            assert artifact in names, f"{stage} did not report {artifact}"
            assert os.path.exists(os.path.join(work, artifact))
        assert names[-1] == f"manifest_{stage}.json"


def test_manifests_record_hashes_and_seeds(full_run):
    cfg, base, written = full_run
    work = cfg.workdir_path()
    for stage in ALL_STAGES:
        with open(os.path.join(work, f"manifest_{stage}.json")) as fh:
            manifest = json.load(fh)
        assert manifest["stage"] == stage
        assert manifest["config_hash"] == cfg.hash()
        assert manifest["seed"] == stage_seed(stage, cfg)
        for mapping in (manifest["inputs"], manifest["outputs"]):
            for digest in mapping.values():
                assert len(digest) == 64 and set(digest) <= set("0123456789abcdef")
        assert "created" in manifest
    with open(os.path.join(work, "manifest_score.json")) as fh:
        score_manifest = json.load(fh)
    assert score_manifest["inputs"]["corpus.jsonl"] == sha256_file(cfg.corpus_path())
    assert score_manifest["outputs"]["scores.tsv"] == sha256_file(os.path.join(work, "scores.tsv"))


def test_workdir_text_artifacts_carry_provenance_headers(full_run):
    cfg, base, written = full_run
    work = cfg.workdir_path()
    checked = 0
    for name in sorted(os.listdir(work)):
        path = os.path.join(work, name)
        if name.endswith(".tsv"):
            first = open(path, encoding="utf-8").readline()
            assert first.startswith("# stage="), f"{name} lacks a provenance header"
            assert "config_hash=" in first and "seed=" in first
        elif name.endswith(".json"):
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
            meta = obj if name.startswith("manifest_") else obj.get("_meta")
            assert meta is not None, f"{name} lacks _meta"
            assert {"stage", "config_hash", "seed"} <= set(meta)
        elif name.endswith(".svg"):
            first = open(path, encoding="utf-8").readline()
            assert first.startswith("<!-- stage=")
        else:
            assert name.endswith((".png", ".bin")), f"unexpected workdir entry {name}"
            continue
        checked += 1
    assert checked >= 15


def test_eval_report_metrics_in_range(full_run):
    cfg, base, written = full_run
    with open(os.path.join(cfg.workdir_path(), "eval.json")) as fh:
        report = json.load(fh)
    assert report["n_tasks"] == 8
    for key in ("map", "ndcg", "p_at_1", "macro_f1"):
        assert 0.0 <= report[key] <= 1.0
    assert report["n_test_docs"] >= 1


def test_stats_report_covers_all_three_graphs(full_run):
    cfg, base, written = full_run
    with open(os.path.join(cfg.workdir_path(), "stats.json")) as fh:
        stats = json.load(fh)
    for graph_name in ("similarity_knn", "citation", "random"):
        entry = stats[graph_name]
        assert entry["nodes"] == 30
        assert entry["edges"] > 0
        assert 0.0 <= entry["density"] <= 1.0
        assert entry["path_sample_size"] <= 10
    assert stats["similarity_knn"]["edges"] == stats["random"]["edges"]


def test_sweep_table_has_one_row_per_grid_cell(full_run):
    cfg, base, written = full_run
    columns, rows = read_tsv(os.path.join(cfg.workdir_path(), "sweep.tsv"))
    assert columns == ["margin", "h_hard", "triplets", "val_satisfaction", "map"]
    assert len(rows) == len(cfg.sweep.margins) * len(cfg.sweep.h_values)
    assert [r[1] for r in rows] == ["0", "1"]
    for r in rows:
        assert 0.0 <= float(r[3]) <= 1.0
        assert 0.0 <= float(r[4]) <= 1.0


def test_rerun_reproduces_every_artifact_byte_for_byte(full_run, tmp_path):
    cfg_a, base_a, _ = full_run
    cfg_b, _ = run_all_stages(tmp_path)
    work_a, work_b = cfg_a.workdir_path(), cfg_b.workdir_path()
    assert sha256_file(cfg_a.corpus_path()) == sha256_file(cfg_b.corpus_path())
    names_a = sorted(os.listdir(work_a))
    assert names_a == sorted(os.listdir(work_b))
    for name in names_a:
        pa, pb = os.path.join(work_a, name), os.path.join(work_b, name)
        if name.startswith("manifest_"):
            with open(pa) as fh_a, open(pb) as fh_b:
                ma, mb = json.load(fh_a), json.load(fh_b)
            ma.pop("created"), mb.pop("created")
            assert ma == mb, f"{name} differs beyond its timestamp"
        else:
            assert sha256_file(pa) == sha256_file(pb), f"{name} is not reproducible"


def test_missing_artifact_error_names_the_file(tmp_path):
    cfg = load_config(write_config(tmp_path))
    run_stage("synth", cfg)
    with pytest.raises(MissingArtifactError, match="triplets_train.tsv"):
        run_stage("train", cfg)
    # the lock must not leak when a stage fails
    assert not os.path.exists(os.path.join(cfg.workdir_path(), ".lock"))


def test_unknown_stage_and_thread_validation(tmp_path):
    cfg = load_config(write_config(tmp_path))
    with pytest.raises(ValidationError, match="unknown stage"):
        run_stage("bogus", cfg)
    with pytest.raises(ValidationError, match="threads"):
        run_stage("synth", cfg, threads=0)


def test_locked_workdir_refuses_to_run(tmp_path):
    cfg = load_config(write_config(tmp_path))
    os.makedirs(cfg.workdir_path(), exist_ok=True)
    lock = os.path.join(cfg.workdir_path(), ".lock")
    open(lock, "w").close()
    with pytest.raises(CitemapError, match="locked"):
        run_stage("synth", cfg)
    os.unlink(lock)
    run_stage("synth", cfg)  # released lock unblocks the stage


def test_run_pipeline_executes_stages_in_order(tmp_path):
    cfg = load_config(write_config(tmp_path))
    run_stage("synth", cfg)
    written = run_pipeline(cfg, stages=STAGE_ORDER[:2])
    assert list(written) == ["score", "sample"]
    assert os.path.exists(os.path.join(cfg.workdir_path(), "triplets.tsv"))


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def test_cli_success_prints_written_paths(tmp_path, capsys):
    cfg_path = write_config(tmp_path)
    assert cli_main(["--config", cfg_path, "synth"]) == 0
    out = capsys.readouterr().out
    assert "wrote" in out and "manifest_synth.json" in out
    assert cli_main(["--config", cfg_path, "score"]) == 0


def test_cli_validation_failure_exits_1(tmp_path, capsys):
    bad = dict(SMALL_CONFIG, bogus={})
    assert cli_main(["--config", write_config(tmp_path, bad), "score"]) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_missing_artifact_exits_2(tmp_path, capsys):
    cfg_path = write_config(tmp_path)
    assert cli_main(["--config", cfg_path, "score"]) == 2  # no corpus yet
    assert cli_main(["--config", str(tmp_path / "absent.json"), "synth"]) == 2
    err = capsys.readouterr().err
    assert "corpus.jsonl" in err and "not found" in err


def test_cli_locked_workdir_exits_3(tmp_path, capsys):
    cfg_path = write_config(tmp_path)
    cfg = load_config(cfg_path)
    os.makedirs(cfg.workdir_path(), exist_ok=True)
    lock = os.path.join(cfg.workdir_path(), ".lock")
    open(lock, "w").close()
    assert cli_main(["--config", cfg_path, "synth"]) == 3
    assert "internal error" in capsys.readouterr().err
    os.unlink(lock)


def test_cli_seed_override_is_recorded(tmp_path, capsys):
    cfg_path = write_config(tmp_path)
    assert cli_main(["--config", cfg_path, "--seed", "99", "synth"]) == 0
    capsys.readouterr()
    cfg = load_config(cfg_path)
    with open(os.path.join(cfg.workdir_path(), "manifest_synth.json")) as fh:
        assert json.load(fh)["seed"] == 99


def test_cli_threads_flag_never_changes_results(tmp_path, capsys):
    cfg_path = write_config(tmp_path)
    cfg = load_config(cfg_path)
    assert cli_main(["--config", cfg_path, "synth"]) == 0
    assert cli_main(["--config", cfg_path, "--threads", "4", "score"]) == 0
    capsys.readouterr()
    single = sha256_file(os.path.join(cfg.workdir_path(), "scores.tsv"))
    assert cli_main(["--config", cfg_path, "--threads", "1", "score"]) == 0
    capsys.readouterr()
    assert sha256_file(os.path.join(cfg.workdir_path(), "scores.tsv")) == single
