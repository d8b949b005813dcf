"""The end-to-end experiment stages behind the CLI subcommands.

Every stage is a pure function of (config, input files, seeds): outputs are
written atomically (temp file + rename), recorded in a run manifest with
content hashes, and are byte-identical across reruns. The manifest itself is
the single exception: it carries wall-clock stage timings.

A lock file serializes access to the output directory.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
import warnings
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Sequence

from . import bootstrap as boot
from . import clustering as clus
from . import features as feat
from . import metrics as met
from . import poslm
from . import svm
from .config import PipelineConfig, config_snapshot
from .corpus import Chunk, Corpus, balance, chunk, filter_corpus, ingest, shuffle, write_jsonl
from .errors import VarietiesError
from .lexicons import Resources, default_manifest_path, load_resources

MANIFEST_NAME = "manifest.json"
LOCK_NAME = ".lock"

FEATURE_ROWS = (
    ("FW",),
    ("POS3",),
    ("POSTOK",),
    ("COH",),
    ("FW", "POS3"),
    ("FW", "POSTOK"),
    ("POS3", "POSTOK"),
    ("FW", "POS3", "POSTOK"),
)
CLASSIFICATION_TASKS = (("N", "NN"), ("N", "T"), ("NN", "T"), ("N", "NN", "T"))


def _row_name(families: tuple[str, ...]) -> str:
    return "+".join(families)


def _task_name(labels: tuple[str, ...]) -> str:
    return "3-way" if len(labels) == 3 else "-".join(labels)


# ---------------------------------------------------------------------------
# output-directory plumbing


@contextmanager
def output_lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise VarietiesError(
            f"output directory {out_dir} is locked by another run "
            f"(remove {lock} if that run is dead)"
        )
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _load_manifest(out_dir: Path) -> dict:
    path = out_dir / MANIFEST_NAME
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"config": None, "resources": {}, "stages": {}}


def _record_stage(
    out_dir: Path,
    stage: str,
    config: PipelineConfig,
    resources_manifest: Path,
    outputs: Sequence[Path],
    seconds: float,
) -> None:
    manifest = _load_manifest(out_dir)
    manifest["config"] = config_snapshot(config)
    resource_dir = resources_manifest.parent
    resource_hashes = {str(resources_manifest): _sha256(resources_manifest)}
    for name in sorted(json.loads(resources_manifest.read_text()).values()):
        resource_hashes[name] = _sha256(resource_dir / name)
    manifest["resources"] = resource_hashes
    manifest["stages"][stage] = {
        "seconds": round(seconds, 3),
        "outputs": {
            str(p.relative_to(out_dir)): _sha256(p) for p in sorted(outputs)
        },
    }
    atomic_write_text(
        out_dir / MANIFEST_NAME, json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


class _Stage:
    """Collects output files and times the stage for the manifest."""

    def __init__(self, name: str, config: PipelineConfig, out_dir: Path):
        self.name = name
        self.config = config
        self.out_dir = out_dir
        self.outputs: list[Path] = []
        self.start = time.monotonic()

    def path(self, relative: str) -> Path:
        p = self.out_dir / relative
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(p)
        return p

    def write_csv(self, relative: str, header: Sequence[str], rows) -> Path:
        p = self.path(relative)
        tmp = p.with_name(p.name + ".tmp")
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, p)
        return p

    def write_json(self, relative: str, payload) -> Path:
        p = self.path(relative)
        atomic_write_text(p, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return p

    def write_text(self, relative: str, text: str) -> Path:
        p = self.path(relative)
        atomic_write_text(p, text)
        return p

    def finish(self, resources_manifest: Path) -> None:
        _record_stage(
            self.out_dir,
            self.name,
            self.config,
            resources_manifest,
            self.outputs,
            time.monotonic() - self.start,
        )


def _resources_for(config: PipelineConfig) -> tuple[Resources, Path]:
    manifest = (
        Path(config.resources) if config.resources else default_manifest_path()
    )
    return load_resources(manifest), manifest


def _ingest_variety(config: PipelineConfig, variety: str) -> Corpus:
    return ingest(config.corpus_path(variety), config.format, default_variety=variety)


def _balanced_chunks(
    config: PipelineConfig,
) -> tuple[list[Chunk], list[str]]:
    """Shuffle, chunk and down-sample the three corpora to equal class sizes;
    returns chunks and labels interleaved deterministically."""
    by_variety: dict[str, list[Chunk]] = {}
    for variety in ("N", "NN", "T"):
        corpus = _ingest_variety(config, variety)
        shuffled = shuffle(corpus, config.seed)
        by_variety[variety] = chunk(shuffled, config.chunk_target)
    balanced = balance(by_variety, config.seed)
    chunks: list[Chunk] = []
    labels: list[str] = []
    for variety in sorted(balanced):
        for c in balanced[variety]:
            chunks.append(c)
            labels.append(variety)
    return chunks, labels


# ---------------------------------------------------------------------------
# stages


def cmd_ingest(config: PipelineConfig, out_dir: Path) -> None:
    """Validate and normalize the configured corpora; emit canonical JSONL
    plus a stats table."""
    stage = _Stage("ingest", config, out_dir)
    _, resources_manifest = _resources_for(config)
    stats_rows = []
    found_any = False
    for variety in ("N", "NN", "T"):
        key = f"corpus_{variety.lower()}"
        if getattr(config, key) is None:
            continue
        found_any = True
        corpus = _ingest_variety(config, variety)
        out_path = stage.path(f"ingest/{variety}.jsonl")
        tmp = out_path.with_name(out_path.name + ".tmp")
        write_jsonl(corpus, tmp)
        os.replace(tmp, out_path)
        types = len({t.surface for t in corpus.tokens()})
        stats_rows.append([variety, len(corpus), corpus.token_count, types])
    if not found_any:
        raise VarietiesError("no corpus paths configured; nothing to ingest")
    stage.write_csv(
        "ingest/stats.csv", ["variety", "sentences", "tokens", "types"], stats_rows
    )
    stage.finish(resources_manifest)


def cmd_classify(config: PipelineConfig, out_dir: Path) -> None:
    """Pairwise and three-way cross-validated accuracies for every feature
    row, plus confusion matrices and top-ranked features per pair."""
    config.require_corpora("N", "NN", "T")
    resources, resources_manifest = _resources_for(config)
    stage = _Stage("classify", config, out_dir)
    chunks, labels = _balanced_chunks(config)

    accuracy_rows = []
    confusion_rows = []
    feature_rows = []
    diagnostics = []
    for families in FEATURE_ROWS:
        row = _row_name(families)
        plan = feat.FeaturePlan(
            families=families,
            resources=resources,
            top_pos3=config.top_pos3,
            postok_min_count=config.postok_min_count,
        )
        try:
            for task in CLASSIFICATION_TASKS:
                keep = [i for i, lab in enumerate(labels) if lab in task]
                task_chunks = [chunks[i] for i in keep]
                task_labels = [labels[i] for i in keep]
                report = svm.cross_validate(
                    task_chunks,
                    task_labels,
                    plan,
                    folds=config.cv_folds,
                    seed=config.seed,
                    C=config.svm_c,
                    tol=config.svm_tol,
                )
                accuracy_rows.append(
                    [row, _task_name(task), f"{report.mean_accuracy:.6f}"]
                    + [f"{a:.6f}" for a in report.fold_accuracies]
                )
                for t_idx, true_lab in enumerate(report.label_order):
                    for p_idx, pred_lab in enumerate(report.label_order):
                        confusion_rows.append(
                            [
                                row,
                                _task_name(task),
                                true_lab,
                                pred_lab,
                                int(report.confusion[t_idx, p_idx]),
                            ]
                        )
                if len(task) == 2:
                    spaces = plan.fit(task_chunks)
                    X = feat.vectorize_chunks(task_chunks, spaces)
                    model = svm.train_binary(
                        X,
                        task_labels,
                        C=config.svm_c,
                        tol=config.svm_tol,
                        feature_names=feat.space_feature_names(spaces),
                    )
                    for rank, (name, weight) in enumerate(
                        svm.rank_features(model)[:20], start=1
                    ):
                        feature_rows.append(
                            [row, _task_name(task), rank, name, repr(weight)]
                        )
        except ValueError as exc:
            diagnostics.append([row, str(exc)])
            continue

    fold_headers = [f"fold_{i}" for i in range(config.cv_folds)]
    stage.write_csv(
        "classify/accuracy.csv",
        ["features", "task", "mean_accuracy"] + fold_headers,
        accuracy_rows,
    )
    stage.write_csv(
        "classify/confusion.csv",
        ["features", "task", "true", "predicted", "count"],
        confusion_rows,
    )
    stage.write_csv(
        "classify/top_features.csv",
        ["features", "task", "rank", "feature", "weight"],
        feature_rows,
    )
    if diagnostics:
        stage.write_csv("classify/diagnostics.csv", ["features", "error"], diagnostics)
    stage.finish(resources_manifest)


def cmd_cluster(config: PipelineConfig, out_dir: Path) -> None:
    """Bisecting k-means over function-word vectors (k=3 and k=2) with a 2-D
    PCA projection for plotting."""
    config.require_corpora("N", "NN", "T")
    resources, resources_manifest = _resources_for(config)
    stage = _Stage("cluster", config, out_dir)
    chunks, labels = _balanced_chunks(config)
    space = feat.fw_space(resources.function_words)
    X = feat.vectorize_chunks(chunks, [space])
    projection = clus.pca_2d(X)
    chunk_ids = [f"{lab}_{i}" for i, lab in enumerate(labels)]

    summary = {}
    for k in (3, 2):
        result = clus.bisecting_kmeans(X, k=k, seed=config.seed)
        accuracy = clus.cluster_accuracy(result.assignment, labels)
        label_map = clus.best_label_map(result.assignment, labels)
        out_path = stage.path(f"cluster/scatter_k{k}.csv")
        tmp = out_path.with_name(out_path.name + ".tmp")
        clus.write_cluster_csv(tmp, chunk_ids, projection, result, labels, label_map)
        os.replace(tmp, out_path)
        centroid_xy = (result.centroids - X.mean(axis=0)) @ projection.axes.T
        stage.write_csv(
            f"cluster/centroids_k{k}.csv",
            ["cluster", "x", "y"],
            [[c, repr(float(xy[0])), repr(float(xy[1]))] for c, xy in enumerate(centroid_xy)],
        )
        summary[f"k{k}"] = {
            "accuracy": accuracy,
            "total_sse": result.total_sse,
            "label_map": {str(c): lab for c, lab in label_map.items()},
        }
    summary["explained_variance"] = list(projection.explained)
    stage.write_json("cluster/summary.json", summary)
    stage.finish(resources_manifest)


def _metric_functions(resources: Resources) -> dict[str, Callable[[Corpus], float]]:
    transitions_list = resources.sentence_transitions()
    return {
        "lexical_richness": lambda c: met.ttr(c).raw,
        "mean_word_rank": lambda c: met.mean_word_rank(
            c, resources.word_ranks, resources.function_words
        ).raw,
        "collocation_types": lambda c: met.collocation_types(c, resources.idioms).raw,
        "transitions": lambda c: met.transitions(c, transitions_list).raw,
        "pronouns": lambda c: met.pronouns(c).raw,
    }


def cmd_metrics(config: PipelineConfig, out_dir: Path) -> None:
    """Raw and normalized metric triples with bootstrap significance."""
    config.require_corpora("N", "NN", "T")
    resources, resources_manifest = _resources_for(config)
    stage = _Stage("metrics", config, out_dir)
    corpora = {v: _ingest_variety(config, v) for v in ("N", "NN", "T")}
    guard = met.check_sizes(corpora["N"], corpora["NN"], corpora["T"])
    if not guard.ok:
        raise VarietiesError(f"equal-size guard failed: {guard.message}")

    sample_tokens = config.sample_tokens or min(
        c.token_count for c in corpora.values()
    )
    csv_rows = []
    payload = {}
    for name, fm in _metric_functions(resources).items():
        raw = {v: fm(corpora[v]) for v in ("N", "NN", "T")}
        triple = met.normalize_triple(name, raw["N"], raw["T"], raw["NN"])
        total_cfg = boot.BootstrapConfig(
            sample_tokens=sample_tokens,
            iterations=config.bootstrap_iterations,
            seed=config.seed,
        )
        total_result = boot.test_d_total(
            fm, corpora["N"], corpora["NN"], corpora["T"], total_cfg
        )
        dif_result = boot.test_d_dif(
            fm, corpora["N"], corpora["NN"], corpora["T"], total_cfg
        )
        star = bool(dif_result.significant)
        csv_rows.append(
            [
                name,
                repr(triple.raw_n),
                repr(triple.raw_t),
                repr(triple.raw_nn),
                f"{triple.norm_n:.6f}",
                f"{triple.norm_t:.6f}",
                f"{triple.norm_nn:.6f}",
                repr(total_result.observed),
                total_result.p_text(),
                repr(dif_result.ci[0]),
                repr(dif_result.ci[1]),
                "*" if star else "",
            ]
        )
        payload[name] = {
            "raw": {"N": raw["N"], "T": raw["T"], "NN": raw["NN"]},
            "normalized": {
                "N": triple.norm_n,
                "T": triple.norm_t,
                "NN": triple.norm_nn,
            },
            "d_total": {
                "observed": total_result.observed,
                "p_value": total_result.p_value,
                "p_is_upper_bound": total_result.p_is_upper_bound,
            },
            "d_dif": {
                "observed": dif_result.observed,
                "ci": list(dif_result.ci),
                "k": dif_result.k_label,
                "significant": star,
            },
            "seed": config.seed,
            "iterations": config.bootstrap_iterations,
        }
    stage.write_csv(
        "metrics/metrics.csv",
        [
            "metric",
            "raw_N",
            "raw_T",
            "raw_NN",
            "norm_N",
            "norm_T",
            "norm_NN",
            "d_total",
            "d_total_p",
            "d_dif_lo",
            "d_dif_hi",
            "significant",
        ],
        csv_rows,
    )
    stage.write_json("metrics/metrics.json", payload)
    stage.finish(resources_manifest)


def _take_tokens(corpus: Corpus, budget: int, what: str) -> Corpus:
    kept = []
    got = 0
    for sent in corpus.sentences:
        if got >= budget:
            break
        kept.append(sent)
        got += sent.token_count
    if got < budget:
        warnings.warn(
            f"{what}: only {got} tokens available of the requested {budget}; "
            "running scaled down"
        )
    return Corpus(sentences=tuple(kept), provenance=corpus.provenance)


def cmd_lm(config: PipelineConfig, out_dir: Path) -> None:
    """Family POS language models: train on Germanic/Romance translationese,
    score the family NN test sets and per-country slices."""
    config.require_corpora("NN", "T")
    resources, resources_manifest = _resources_for(config)
    stage = _Stage("lm", config, out_dir)
    corpus_t = _ingest_variety(config, "T")
    corpus_nn = _ingest_variety(config, "NN")

    models = {}
    for family in ("Germanic", "Romance"):
        train = filter_corpus(corpus_t, variety="T", family=family)
        if len(train) == 0:
            raise VarietiesError(f"no translated sentences with family {family}")
        train = _take_tokens(
            shuffle(train, config.seed), config.lm_train_tokens, f"{family} T"
        )
        model = poslm.train_lm(
            poslm.pos_sequences(train), resources.tagset, order=config.lm_order
        )
        models[family] = model
        arpa_path = stage.path(f"lm/{family.lower()}_t.arpa")
        tmp = arpa_path.with_name(arpa_path.name + ".tmp")
        poslm.write_arpa(model, tmp)
        os.replace(tmp, arpa_path)

    table_rows = []
    ttest_payload = {}
    for family in ("Germanic", "Romance"):
        test = filter_corpus(corpus_nn, variety="NN", family=family)
        if len(test) == 0:
            raise VarietiesError(f"no non-native sentences with family {family}")
        test = shuffle(test, config.seed)
        if len(test) < config.lm_test_sentences:
            warnings.warn(
                f"{family} NN: only {len(test)} sentences of the requested "
                f"{config.lm_test_sentences}"
            )
        test_sents = poslm.pos_sequences(
            Corpus(sentences=test.sentences[: config.lm_test_sentences])
        )
        reports = {
            model_family: poslm.ppl_by_chunks(models[model_family], test_sents, 100)
            for model_family in ("Germanic", "Romance")
        }
        for model_family, report in reports.items():
            table_rows.append(
                [
                    f"{model_family[:3]}T",
                    f"{family[:3]}NN",
                    f"{report.perplexity:.6f}",
                    report.scored,
                    report.excluded,
                ]
            )
        ger_series = [c.perplexity for c in reports["Germanic"].per_chunk]
        rom_series = [c.perplexity for c in reports["Romance"].per_chunk]
        ttest = boot.paired_ttest(ger_series, rom_series)
        ttest_payload[f"{family[:3]}NN"] = {
            "t": ttest.t,
            "df": ttest.df,
            "p_value": ttest.p_value,
            "chunks": len(ger_series),
            "better_model": "GerT"
            if reports["Germanic"].perplexity < reports["Romance"].perplexity
            else "RomT",
        }
    stage.write_csv(
        "lm/perplexity.csv",
        ["model", "test_set", "perplexity", "scored", "excluded"],
        table_rows,
    )
    stage.write_json("lm/ttest.json", ttest_payload)

    country_rows = []
    countries = sorted(
        {
            s.country
            for s in corpus_nn.sentences
            if s.country is not None and s.family in ("Germanic", "Romance")
        }
    )
    for country in countries:
        subset = shuffle(
            filter_corpus(corpus_nn, variety="NN", country=country), config.seed
        )
        test_sents = poslm.pos_sequences(
            Corpus(sentences=subset.sentences[: config.lm_country_sentences])
        )
        ger = poslm.ppl(models["Germanic"], test_sents).perplexity
        rom = poslm.ppl(models["Romance"], test_sents).perplexity
        family = subset.sentences[0].family
        country_rows.append(
            [country, family, f"{ger:.6f}", f"{rom:.6f}"]
        )
    stage.write_csv(
        "lm/countries.csv",
        ["country", "family", "ppl_gert", "ppl_romt"],
        country_rows,
    )
    stage.finish(resources_manifest)


def cmd_report(config: PipelineConfig, out_dir: Path) -> None:
    """Consolidate stage outputs into one markdown report plus the final run
    manifest; missing recorded outputs are named explicitly."""
    manifest = _load_manifest(out_dir)
    if not manifest["stages"]:
        raise VarietiesError("no stage outputs recorded; run other stages first")
    missing = []
    for stage_name, entry in sorted(manifest["stages"].items()):
        for rel in entry["outputs"]:
            if not (out_dir / rel).exists():
                missing.append(f"{stage_name}: {rel}")
    if missing:
        raise VarietiesError("missing stage outputs: " + "; ".join(missing))

    stage = _Stage("report", config, out_dir)
    _, resources_manifest = _resources_for(config)
    lines = ["# Variety analysis report", ""]
    for stage_name, entry in sorted(manifest["stages"].items()):
        if stage_name == "report":
            continue
        lines.append(f"## {stage_name}")
        lines.append("")
        for rel in sorted(entry["outputs"]):
            path = out_dir / rel
            lines.append(f"### {rel}")
            lines.append("")
            if path.suffix == ".csv":
                lines.extend(_csv_to_markdown(path))
            elif path.suffix == ".json":
                lines.append("```json")
                lines.append(path.read_text(encoding="utf-8").rstrip())
                lines.append("```")
            else:
                lines.append(f"(binary or large artifact: {rel})")
            lines.append("")
    stage.write_text("report.md", "\n".join(lines) + "\n")

    inventory = {}
    for stage_name, entry in sorted(manifest["stages"].items()):
        for rel, digest in entry["outputs"].items():
            inventory[rel] = digest
    run_manifest = {
        "config": config_snapshot(config),
        "resources": manifest["resources"],
        "files": inventory,
    }
    stage.write_json("run_manifest.json", run_manifest)
    stage.finish(resources_manifest)


def _csv_to_markdown(path: Path, limit: int = 50) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return ["(empty)"]
    out = ["| " + " | ".join(rows[0]) + " |"]
    out.append("|" + "---|" * len(rows[0]))
    for row in rows[1 : limit + 1]:
        out.append("| " + " | ".join(row) + " |")
    if len(rows) - 1 > limit:
        out.append(f"| ... ({len(rows) - 1 - limit} more rows) |")
    return out


STAGES: dict[str, Callable[[PipelineConfig, Path], None]] = {
    "ingest": cmd_ingest,
    "classify": cmd_classify,
    "cluster": cmd_cluster,
    "metrics": cmd_metrics,
    "lm": cmd_lm,
    "report": cmd_report,
}


def run_stage(name: str, config: PipelineConfig) -> Path:
    out_dir = Path(config.out)
    with output_lock(out_dir):
        STAGES[name](config, out_dir)
    return out_dir
