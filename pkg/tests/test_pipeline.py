import csv
import json
from pathlib import Path

import pytest

from synthdata import (
    clustering_corpora,
    lm_family_corpus,
    metrics_corpus,
    trim_to_tokens,
    variety_corpus,
)
from varieties.cli import main
from varieties.config import load_config
from varieties.corpus import AnnotatedSentence, Corpus, Token, concat, write_jsonl
from varieties.errors import VarietiesError
from varieties.pipeline import output_lock, run_stage


def write_config(path: Path, **values) -> Path:
    lines = [f"{key} = {value}" for key, value in values.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def strip_pos(corpus: Corpus) -> Corpus:
    return Corpus(
        sentences=tuple(
            AnnotatedSentence(
                tokens=tuple(Token(surface=t.surface) for t in s.tokens),
                variety=s.variety,
            )
            for s in corpus.sentences
        ),
        provenance=corpus.provenance,
    )


@pytest.fixture(scope="module")
def classify_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("classify_data")
    for variety in ("N", "NN", "T"):
        write_jsonl(variety_corpus(variety, 350, seed=5), root / f"{variety}.jsonl")
    return root


def classify_config(root: Path, tmp_path: Path, **extra) -> Path:
    values = dict(
        corpus_n=root / "N.jsonl",
        corpus_nn=root / "NN.jsonl",
        corpus_t=root / "T.jsonl",
        out=tmp_path / "out",
        seed=11,
        chunk_target=100,
        cv_folds=5,
        top_pos3=300,
        postok_min_count=5,
        # synthetic chunks are two orders of magnitude smaller than real ones,
        # so per-token frequencies need a larger soft-margin budget
        svm_c=50.0,
    )
    values.update(extra)
    return write_config(tmp_path / "run.cfg", **values)


class TestIngestStage:
    def test_outputs_and_stats(self, classify_dir, tmp_path):
        cfg = load_config(classify_config(classify_dir, tmp_path), env={})
        out = run_stage("ingest", cfg)
        stats = {row["variety"]: row for row in read_csv(out / "ingest" / "stats.csv")}
        assert set(stats) == {"N", "NN", "T"}
        assert int(stats["N"]["sentences"]) == 350
        assert (out / "ingest" / "N.jsonl").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert "ingest" in manifest["stages"]
        assert all(
            len(digest) == 64
            for digest in manifest["stages"]["ingest"]["outputs"].values()
        )

    def test_rerun_is_byte_identical(self, classify_dir, tmp_path):
        cfg_a = load_config(
            classify_config(classify_dir, tmp_path, out=tmp_path / "out_a"), env={}
        )
        cfg_b = load_config(
            write_config(
                tmp_path / "b.cfg",
                corpus_n=classify_dir / "N.jsonl",
                corpus_nn=classify_dir / "NN.jsonl",
                corpus_t=classify_dir / "T.jsonl",
                out=tmp_path / "out_b",
                seed=11,
                chunk_target=100,
                cv_folds=5,
                top_pos3=300,
            ),
            env={},
        )
        out_a = run_stage("ingest", cfg_a)
        out_b = run_stage("ingest", cfg_b)
        for rel in ("ingest/N.jsonl", "ingest/NN.jsonl", "ingest/T.jsonl",
                    "ingest/stats.csv"):
            assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes()

    def test_nothing_configured(self, tmp_path):
        cfg = load_config(
            write_config(tmp_path / "c.cfg", out=tmp_path / "out"), env={}
        )
        with pytest.raises(VarietiesError, match="nothing to ingest"):
            run_stage("ingest", cfg)


@pytest.fixture(scope="module")
def classify_out(classify_dir, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("classify_run")
    cfg = load_config(classify_config(classify_dir, tmp), env={})
    return run_stage("classify", cfg), cfg


class TestClassifyStage:
    def test_all_rows_and_tasks_present(self, classify_out):
        out, _ = classify_out
        rows = read_csv(out / "classify" / "accuracy.csv")
        assert len(rows) == 8 * 4
        assert {r["task"] for r in rows} == {"N-NN", "N-T", "NN-T", "3-way"}

    def test_synthetic_separable_accuracy(self, classify_out):
        out, _ = classify_out
        rows = read_csv(out / "classify" / "accuracy.csv")
        for row in rows:
            assert float(row["mean_accuracy"]) >= 0.95, (
                row["features"], row["task"], row["mean_accuracy"],
            )

    def test_confusion_totals(self, classify_out):
        out, _ = classify_out
        by_key = {}
        for row in read_csv(out / "classify" / "confusion.csv"):
            key = (row["features"], row["task"])
            by_key[key] = by_key.get(key, 0) + int(row["count"])
        totals = set(by_key.values())
        assert len(totals) <= 2  # one total for pairs, one for 3-way

    def test_discriminative_signature_word_ranks_high(self, classify_out):
        out, _ = classify_out
        rows = read_csv(out / "classify" / "top_features.csv")
        nn_t = [
            r["feature"]
            for r in rows
            if r["features"] == "FW" and r["task"] == "NN-T"
        ]
        assert any(
            name in nn_t for name in ("FW:maybe", "FW:perhaps", "FW:very", "FW:which")
        )

    def test_missing_pos_yields_diagnostics_but_other_rows(
        self, classify_dir, tmp_path
    ):
        root = tmp_path / "untagged"
        root.mkdir()
        for variety in ("N", "NN", "T"):
            write_jsonl(
                strip_pos(variety_corpus(variety, 200, seed=3)),
                root / f"{variety}.jsonl",
            )
        cfg = load_config(classify_config(root, tmp_path, cv_folds=4), env={})
        out = run_stage("classify", cfg)
        diagnostics = read_csv(out / "classify" / "diagnostics.csv")
        assert {d["features"] for d in diagnostics} == {
            "POS3", "FW+POS3", "POS3+POSTOK", "FW+POS3+POSTOK",
        }
        accuracy_rows = read_csv(out / "classify" / "accuracy.csv")
        assert {r["features"] for r in accuracy_rows} == {
            "FW", "POSTOK", "COH", "FW+POSTOK",
        }


@pytest.fixture(scope="module")
def cluster_out(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cluster_run")
    data = tmp / "data"
    data.mkdir()
    for variety, corpus in clustering_corpora(320, seed=2).items():
        write_jsonl(corpus, data / f"{variety}.jsonl")
    cfg = load_config(
        write_config(
            tmp / "run.cfg",
            corpus_n=data / "N.jsonl",
            corpus_nn=data / "NN.jsonl",
            corpus_t=data / "T.jsonl",
            out=tmp / "out",
            seed=4,
            chunk_target=100,
        ),
        env={},
    )
    return run_stage("cluster", cfg)


class TestClusterStage:
    def test_summary_and_accuracy(self, cluster_out):
        summary = json.loads((cluster_out / "cluster" / "summary.json").read_text())
        assert summary["k3"]["accuracy"] >= 0.90
        # two clusters over three balanced classes: a perfect N | NN+T split
        # scores exactly 2/3 under injective matching
        assert summary["k2"]["accuracy"] == pytest.approx(2 / 3, abs=0.05)
        assert summary["explained_variance"][0] >= summary["explained_variance"][1]

    def test_k2_groups_constrained_pair(self, cluster_out):
        rows = read_csv(cluster_out / "cluster" / "scatter_k2.csv")
        clusters_of = {}
        for row in rows:
            clusters_of.setdefault(row["true_label"], []).append(row["cluster"])

        def dominant(label):
            values = clusters_of[label]
            return max(set(values), key=values.count)

        assert dominant("NN") == dominant("T")
        assert dominant("N") != dominant("NN")

    def test_scatter_has_centroids_and_coords(self, cluster_out):
        for k in (2, 3):
            scatter = read_csv(cluster_out / "cluster" / f"scatter_k{k}.csv")
            assert {"chunk_id", "x", "y", "cluster", "true_label", "correct"} <= set(
                scatter[0]
            )
            centroids = read_csv(cluster_out / "cluster" / f"centroids_k{k}.csv")
            assert len(centroids) == k

    def test_rerun_is_byte_identical(self, tmp_path):
        data = tmp_path / "data"
        data.mkdir()
        for variety, corpus in clustering_corpora(120, seed=9).items():
            write_jsonl(corpus, data / f"{variety}.jsonl")
        outputs = []
        for run in ("one", "two"):
            cfg = load_config(
                write_config(
                    tmp_path / f"{run}.cfg",
                    corpus_n=data / "N.jsonl",
                    corpus_nn=data / "NN.jsonl",
                    corpus_t=data / "T.jsonl",
                    out=tmp_path / run,
                    seed=4,
                    chunk_target=80,
                ),
                env={},
            )
            outputs.append(run_stage("cluster", cfg))
        for rel in (
            "cluster/scatter_k3.csv",
            "cluster/scatter_k2.csv",
            "cluster/centroids_k3.csv",
            "cluster/summary.json",
        ):
            assert (outputs[0] / rel).read_bytes() == (outputs[1] / rel).read_bytes()


@pytest.fixture(scope="module")
def metrics_out(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("metrics_run")
    data = tmp / "data"
    data.mkdir()
    for variety in ("N", "NN", "T"):
        write_jsonl(metrics_corpus(variety, 260, seed=6), data / f"{variety}.jsonl")
    cfg = load_config(
        write_config(
            tmp / "run.cfg",
            corpus_n=data / "N.jsonl",
            corpus_nn=data / "NN.jsonl",
            corpus_t=data / "T.jsonl",
            out=tmp / "out",
            seed=8,
            bootstrap_iterations=150,
        ),
        env={},
    )
    return run_stage("metrics", cfg)


class TestMetricsStage:
    def test_five_metrics_reported(self, metrics_out):
        rows = read_csv(metrics_out / "metrics" / "metrics.csv")
        assert {r["metric"] for r in rows} == {
            "lexical_richness",
            "mean_word_rank",
            "collocation_types",
            "transitions",
            "pronouns",
        }
        for row in rows:
            total = (
                float(row["norm_N"]) + float(row["norm_T"]) + float(row["norm_NN"])
            )
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_engineered_contrasts_are_starred(self, metrics_out):
        payload = json.loads((metrics_out / "metrics" / "metrics.json").read_text())
        for metric in ("lexical_richness", "pronouns", "collocation_types",
                       "mean_word_rank"):
            assert payload[metric]["d_dif"]["significant"], metric
            assert payload[metric]["d_total"]["p_is_upper_bound"], metric

    def test_null_corpora_earn_no_stars(self, tmp_path):
        data = tmp_path / "null"
        data.mkdir()
        for variety, seed in (("N", 21), ("NN", 22), ("T", 23)):
            write_jsonl(
                metrics_corpus(variety, 220, seed=seed, null=True),
                data / f"{variety}.jsonl",
            )
        cfg = load_config(
            write_config(
                tmp_path / "run.cfg",
                corpus_n=data / "N.jsonl",
                corpus_nn=data / "NN.jsonl",
                corpus_t=data / "T.jsonl",
                out=tmp_path / "out",
                seed=9,
                bootstrap_iterations=150,
            ),
            env={},
        )
        out = run_stage("metrics", cfg)
        payload = json.loads((out / "metrics" / "metrics.json").read_text())
        starred = [m for m, entry in payload.items() if entry["d_dif"]["significant"]]
        assert starred == []

    def test_size_guard_blocks_mismatched_corpora(self, tmp_path):
        data = tmp_path / "sizes"
        data.mkdir()
        write_jsonl(metrics_corpus("N", 260, seed=1), data / "N.jsonl")
        write_jsonl(metrics_corpus("NN", 150, seed=2), data / "NN.jsonl")
        write_jsonl(metrics_corpus("T", 260, seed=3), data / "T.jsonl")
        cfg = load_config(
            write_config(
                tmp_path / "run.cfg",
                corpus_n=data / "N.jsonl",
                corpus_nn=data / "NN.jsonl",
                corpus_t=data / "T.jsonl",
                out=tmp_path / "out",
            ),
            env={},
        )
        with pytest.raises(VarietiesError, match="NN"):
            run_stage("metrics", cfg)


@pytest.fixture(scope="module")
def lm_out(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("lm_run")
    data = tmp / "data"
    data.mkdir()
    nn = concat(
        [
            lm_family_corpus("NN", "Germanic", 700, seed=31),
            lm_family_corpus("NN", "Romance", 700, seed=32),
        ]
    )
    t = concat(
        [
            lm_family_corpus("T", "Germanic", 1600, seed=33),
            lm_family_corpus("T", "Romance", 1600, seed=34),
        ]
    )
    write_jsonl(nn, data / "NN.jsonl")
    write_jsonl(t, data / "T.jsonl")
    cfg = load_config(
        write_config(
            tmp / "run.cfg",
            corpus_nn=data / "NN.jsonl",
            corpus_t=data / "T.jsonl",
            out=tmp / "out",
            seed=3,
            lm_order=3,
            lm_train_tokens=12000,
            lm_test_sentences=600,
            lm_country_sentences=60,
        ),
        env={},
    )
    return run_stage("lm", cfg)


class TestLmStage:
    def test_table_and_family_ordering(self, lm_out):
        rows = read_csv(lm_out / "lm" / "perplexity.csv")
        table = {(r["model"], r["test_set"]): float(r["perplexity"]) for r in rows}
        assert len(table) == 4
        assert table[("GerT", "GerNN")] < table[("RomT", "GerNN")]
        assert table[("RomT", "RomNN")] < table[("GerT", "RomNN")]

    def test_ttest_reported_per_family(self, lm_out):
        payload = json.loads((lm_out / "lm" / "ttest.json").read_text())
        assert set(payload) == {"GerNN", "RomNN"}
        assert payload["GerNN"]["better_model"] == "GerT"
        assert payload["RomNN"]["better_model"] == "RomT"
        for entry in payload.values():
            assert 0 <= entry["p_value"] <= 1

    def test_country_scatter_sides(self, lm_out):
        rows = read_csv(lm_out / "lm" / "countries.csv")
        assert len(rows) == 9
        for row in rows:
            ger, rom = float(row["ppl_gert"]), float(row["ppl_romt"])
            if row["family"] == "Romance":
                assert rom < ger, row
            else:
                assert ger < rom, row

    def test_arpa_models_written(self, lm_out):
        for family in ("germanic", "romance"):
            assert (lm_out / "lm" / f"{family}_t.arpa").exists()


class TestReportStage:
    def test_report_and_manifest(self, classify_dir, tmp_path):
        cfg = load_config(classify_config(classify_dir, tmp_path), env={})
        run_stage("ingest", cfg)
        run_stage("report", cfg)
        out = Path(cfg.out)
        report = (out / "report.md").read_text()
        assert "## ingest" in report
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert "ingest/stats.csv" in manifest["files"]
        assert all(len(d) == 64 for d in manifest["files"].values())

    def test_missing_stage_output_named(self, classify_dir, tmp_path):
        cfg = load_config(classify_config(classify_dir, tmp_path), env={})
        run_stage("ingest", cfg)
        (Path(cfg.out) / "ingest" / "stats.csv").unlink()
        with pytest.raises(VarietiesError, match="ingest: ingest/stats.csv"):
            run_stage("report", cfg)

    def test_report_without_stages_rejected(self, tmp_path):
        cfg = load_config(
            write_config(tmp_path / "c.cfg", out=tmp_path / "out"), env={}
        )
        with pytest.raises(VarietiesError, match="no stage outputs"):
            run_stage("report", cfg)


class TestLocking:
    def test_lock_excludes_second_run(self, classify_dir, tmp_path):
        cfg = load_config(classify_config(classify_dir, tmp_path), env={})
        out_dir = Path(cfg.out)
        with output_lock(out_dir):
            with pytest.raises(VarietiesError, match="locked"):
                run_stage("ingest", cfg)

    def test_lock_released_after_stage(self, classify_dir, tmp_path):
        cfg = load_config(classify_config(classify_dir, tmp_path), env={})
        run_stage("ingest", cfg)
        assert not (Path(cfg.out) / ".lock").exists()


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("full_run")
    data = tmp / "data"
    data.mkdir()
    halves = {
        variety: concat(
            [
                lm_family_corpus(
                    variety, "Germanic", 300, seed=base, plant_phrases=True
                ),
                lm_family_corpus(
                    variety, "Romance", 300, seed=base + 1, plant_phrases=True
                ),
            ]
        )
        for variety, base in (("N", 50), ("NN", 60), ("T", 70))
    }
    budget = min(c.token_count for c in halves.values()) - 20
    for variety, corpus in halves.items():
        write_jsonl(trim_to_tokens(corpus, budget), data / f"{variety}.jsonl")
    cfg = load_config(
        write_config(
            tmp / "run.cfg",
            corpus_n=data / "N.jsonl",
            corpus_nn=data / "NN.jsonl",
            corpus_t=data / "T.jsonl",
            out=tmp / "out",
            seed=23,
            chunk_target=120,
            cv_folds=4,
            top_pos3=200,
            svm_c=50.0,
            bootstrap_iterations=100,
            lm_order=3,
            lm_train_tokens=3000,
            lm_test_sentences=200,
            lm_country_sentences=40,
        ),
        env={},
    )
    for stage in ("ingest", "classify", "cluster", "metrics", "lm", "report"):
        run_stage(stage, cfg)
    return Path(cfg.out)


class TestFullPipeline:
    """All six stages over one dataset in one output directory."""

    def test_every_stage_recorded_with_hashes(self, full_run):
        manifest = json.loads((full_run / "manifest.json").read_text())
        assert set(manifest["stages"]) == {
            "ingest", "classify", "cluster", "metrics", "lm", "report",
        }
        run_manifest = json.loads((full_run / "run_manifest.json").read_text())
        for rel, digest in run_manifest["files"].items():
            assert (full_run / rel).exists(), rel
            assert len(digest) == 64

    def test_report_covers_all_stages(self, full_run):
        report = (full_run / "report.md").read_text()
        for stage in ("ingest", "classify", "cluster", "metrics", "lm"):
            assert f"## {stage}" in report
        assert "metrics/metrics.csv" in report

    def test_resource_hashes_recorded(self, full_run):
        manifest = json.loads((full_run / "manifest.json").read_text())
        assert any(key.endswith("function_words.txt") for key in manifest["resources"])


class TestCli:
    def test_success_exit_zero(self, classify_dir, tmp_path, capsys):
        cfg_path = classify_config(classify_dir, tmp_path)
        assert main(["ingest", "--config", str(cfg_path)]) == 0
        assert "outputs in" in capsys.readouterr().out

    def test_validation_error_exit_one(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path / "c.cfg", out=tmp_path / "out")
        assert main(["metrics", "--config", str(cfg_path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_usage_error_exit_one(self, capsys):
        assert main(["not-a-command"]) == 1

    def test_runtime_failure_exit_two(self, classify_dir, tmp_path, monkeypatch):
        import varieties.pipeline as pipeline_module

        def boom(config, out_dir):
            raise RuntimeError("sabotage")

        monkeypatch.setitem(pipeline_module.STAGES, "ingest", boom)
        cfg_path = classify_config(classify_dir, tmp_path)
        assert main(["ingest", "--config", str(cfg_path)]) == 2

    def test_out_override_beats_config(self, classify_dir, tmp_path):
        cfg_path = classify_config(classify_dir, tmp_path)
        override = tmp_path / "elsewhere"
        assert main(["ingest", "--config", str(cfg_path), "--out", str(override)]) == 0
        assert (override / "ingest" / "stats.csv").exists()

    def test_env_override(self, classify_dir, tmp_path, monkeypatch):
        cfg_path = classify_config(classify_dir, tmp_path)
        env_out = tmp_path / "env_out"
        monkeypatch.setenv("VARIETIES_OUT", str(env_out))
        assert main(["ingest", "--config", str(cfg_path)]) == 0
        assert (env_out / "ingest" / "stats.csv").exists()

    def test_entry_point_subprocess(self, classify_dir, tmp_path):
        import subprocess
        import sys

        cfg_path = classify_config(classify_dir, tmp_path)
        done = subprocess.run(
            [sys.executable, "-m", "varieties.cli", "ingest", "--config",
             str(cfg_path)],
            capture_output=True,
            text=True,
        )
        assert done.returncode == 0, done.stderr
        assert "outputs in" in done.stdout
        missing = subprocess.run(
            [sys.executable, "-m", "varieties.cli", "metrics", "--config",
             str(tmp_path / "absent.cfg")],
            capture_output=True,
            text=True,
        )
        assert missing.returncode == 1
        assert "error:" in missing.stderr
