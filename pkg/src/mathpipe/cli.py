"""Command-line entry point tying every pipeline stage together.

Configuration is a flat key=value file; environment variables spelled
MATHPIPE_<KEY> override file values (secrets stay out of the file). Every
run writes a manifest with the config hash, tool version, and input hashes
so replay-fixture runs are byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from pathlib import Path

import click

from . import __version__
from .bench import build_bench, dataset_stats, read_bench, write_bench
from .decontam import (
    build_index,
    flag_contaminated,
    load_index,
    pairwise_overlap,
    save_index,
    tokenize,
)
from .gateway import BackendConfig, Gateway
from .harness import (
    aggregate,
    emit_leaderboard,
    grade,
    read_predictions,
    write_grades,
)
from .ingest import (
    load_difficulty_table,
    parse_dump,
    parse_timestamp,
    serialize_topic,
    window,
)
from .sft import ChatTemplate, export_sft, write_samples
from .stages import (
    StageConfig,
    qa_pair_from_dict,
    qa_pair_to_dict,
    run_training_pipeline,
)

ENV_PREFIX = "MATHPIPE_"


def load_config(path: Path | None) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment; env vars override."""
    cfg: dict[str, str] = {}
    if path is not None:
        for raw in path.read_text(encoding="utf-8").splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise click.ClickException(f"bad config line: {raw!r}")
            key, value = line.split("=", 1)
            cfg[key.strip()] = value.strip()
    for key, value in os.environ.items():
        if key.startswith(ENV_PREFIX):
            cfg[key[len(ENV_PREFIX) :].lower()] = value
    return cfg


def _hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _hash_file(path: Path) -> str:
    return _hash_bytes(path.read_bytes())


def write_manifest(
    out_dir: Path, command: str, cfg: dict[str, str], inputs: list[Path]
) -> Path:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config_hash": _hash_bytes(
            json.dumps(cfg, sort_keys=True).encode("utf-8")
        ),
        "input_hashes": {
            str(p): _hash_file(p) for p in sorted(inputs) if p.exists()
        },
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _gateway_from_config(cfg: dict[str, str], seed: int) -> Gateway:
    import random

    backend = BackendConfig(
        kind=cfg.get("backend_kind", "replay_mock"),
        base_url=cfg.get("backend_base_url", ""),
        api_key_env=cfg.get("backend_api_key_env", ""),
        max_in_flight=int(cfg.get("backend_max_in_flight", "4")),
        max_attempts=int(cfg.get("backend_max_attempts", "3")),
        fixture_path=cfg.get("backend_fixture", ""),
    )
    return Gateway(backend, rng=random.Random(seed))


def _stage_config(cfg: dict[str, str], dual: bool) -> StageConfig:
    rewriters = tuple(
        r.strip()
        for r in cfg.get(
            "rewrite_models", "rewriter-a,rewriter-b" if dual else "rewriter"
        ).split(",")
        if r.strip()
    )
    return StageConfig(
        detect_model=cfg.get("detect_model", "detector"),
        extract_model=cfg.get("extract_model", "extractor"),
        rewrite_models=rewriters,
        max_tokens=int(cfg.get("max_tokens", "4096")),
    )


def _read_jsonl(path: Path) -> list[dict]:
    out = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def main(ctx: click.Context, config_path: Path | None, workers: int, seed: int):
    """Forum-dump to benchmark pipeline."""
    ctx.ensure_object(dict)
    ctx.obj["cfg"] = load_config(config_path)
    ctx.obj["workers"] = workers
    ctx.obj["seed"] = seed


@main.command()
@click.argument("dump", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--start", default=None, help="RFC3339 window start (inclusive)")
@click.option("--end", default=None, help="RFC3339 window end (exclusive)")
@click.pass_context
def ingest(ctx, dump: Path, out: Path, start: str | None, end: str | None):
    """Parse a forum dump into validated topic JSONL."""
    with dump.open(encoding="utf-8") as fh:
        topics, rejects = parse_dump(fh)
    if start or end:
        lo = parse_timestamp(start) if start else 0
        hi = parse_timestamp(end) if end else 2**62
        topics = window(topics, lo, hi)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for topic in topics:
            fh.write(serialize_topic(topic) + "\n")
    write_manifest(out.parent, "ingest", ctx.obj["cfg"], [dump])
    click.echo(f"topics={len(topics)} rejects={len(rejects)}")


@main.command()
@click.argument("topics_file", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--dual-rewrite", is_flag=True, default=False)
@click.pass_context
def pipeline(ctx, topics_file: Path, out: Path, dual_rewrite: bool):
    """Run detect -> extract -> rewrite over ingested topics."""
    from .ingest import deserialize_topic

    cfg = ctx.obj["cfg"]
    topics = [deserialize_topic(line) for line in
              topics_file.read_text(encoding="utf-8").splitlines() if line.strip()]
    gateway = _gateway_from_config(cfg, ctx.obj["seed"])
    stage_cfg = _stage_config(cfg, dual=dual_rewrite)
    table = None
    if cfg.get("difficulty_table"):
        with open(cfg["difficulty_table"], encoding="utf-8") as fh:
            table = load_difficulty_table(fh)
    pairs, report = run_training_pipeline(topics, gateway, stage_cfg, table)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(qa_pair_to_dict(pair), ensure_ascii=False) + "\n")
    (out.parent / "funnel.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n"
    )
    write_manifest(out.parent, "pipeline", cfg, [topics_file])
    click.echo(json.dumps(report.to_dict()))


# Stage aliases so each LLM stage is addressable on its own.
@main.command()
@click.argument("topics_file", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def detect(ctx, topics_file: Path, out: Path):
    """Classify which topics are math questions."""
    from .ingest import deserialize_topic
    from .stages import detect as detect_stage

    cfg = ctx.obj["cfg"]
    gateway = _gateway_from_config(cfg, ctx.obj["seed"])
    stage_cfg = _stage_config(cfg, dual=False)
    topics = [deserialize_topic(line) for line in
              topics_file.read_text(encoding="utf-8").splitlines() if line.strip()]
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for topic in topics:
            verdict = detect_stage(topic, gateway, stage_cfg)
            fh.write(json.dumps({
                "topic_id": verdict.topic_id,
                "is_math_question": verdict.is_math_question,
            }) + "\n")
    write_manifest(out.parent, "detect", cfg, [topics_file])


@main.command()
@click.argument("topics_file", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def extract(ctx, topics_file: Path, out: Path):
    """Extract answer-post references from topics."""
    from .ingest import deserialize_topic
    from .stages import extract as extract_stage

    cfg = ctx.obj["cfg"]
    gateway = _gateway_from_config(cfg, ctx.obj["seed"])
    stage_cfg = _stage_config(cfg, dual=False)
    topics = [deserialize_topic(line) for line in
              topics_file.read_text(encoding="utf-8").splitlines() if line.strip()]
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for topic in topics:
            res = extract_stage(topic, gateway, stage_cfg)
            fh.write(json.dumps({
                "topic_id": res.topic_id,
                "answers": [
                    {"post_number": n, "user": u} for n, u in res.answers
                ],
            }) + "\n")
    write_manifest(out.parent, "extract", cfg, [topics_file])


@main.command()
@click.argument("topics_file", type=click.Path(exists=True, path_type=Path))
@click.argument("extractions_file", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--dual-rewrite", is_flag=True, default=False)
@click.pass_context
def rewrite(ctx, topics_file: Path, extractions_file: Path, out: Path,
            dual_rewrite: bool):
    """Rewrite extracted answer posts into clean step-by-step solutions."""
    from .ingest import deserialize_topic
    from .stages import ExtractionResult, _build_pair

    cfg = ctx.obj["cfg"]
    gateway = _gateway_from_config(cfg, ctx.obj["seed"])
    stage_cfg = _stage_config(cfg, dual=dual_rewrite)
    topics = {
        t.topic_id: t
        for t in (
            deserialize_topic(line)
            for line in topics_file.read_text(encoding="utf-8").splitlines()
            if line.strip()
        )
    }
    table = None
    if cfg.get("difficulty_table"):
        with open(cfg["difficulty_table"], encoding="utf-8") as fh:
            table = load_difficulty_table(fh)
    out.parent.mkdir(parents=True, exist_ok=True)
    emitted = 0
    with out.open("w", encoding="utf-8") as fh:
        for rec in _read_jsonl(extractions_file):
            topic = topics.get(rec["topic_id"])
            if topic is None or not rec.get("answers"):
                continue
            extraction = ExtractionResult(
                topic_id=topic.topic_id,
                question_text=topic.posts[0].body,
                answers=tuple(
                    (a["post_number"], a.get("user", "")) for a in rec["answers"]
                ),
            )
            pair = _build_pair(topic, extraction, gateway, stage_cfg, table)
            fh.write(json.dumps(qa_pair_to_dict(pair), ensure_ascii=False) + "\n")
            emitted += 1
    write_manifest(out.parent, "rewrite", cfg, [topics_file, extractions_file])
    click.echo(f"pairs={emitted}")


@main.command(name="decontam-build")
@click.argument("corpora", nargs=-1, type=click.Path(exists=True, path_type=Path))
@click.option("--n", "ngram_n", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--field", "text_field", default="question", show_default=True)
@click.pass_context
def decontam_build(ctx, corpora, ngram_n: int, out: Path, text_field: str):
    """Build an n-gram fingerprint index from JSONL corpora."""
    streams = []
    for path in corpora:
        for rec in _read_jsonl(path):
            doc_id = rec.get("topic_id") or rec.get("question_id") or ""
            streams.append(tokenize(str(rec.get(text_field, "")), doc_id=doc_id))
    index = build_index(streams, ngram_n, source_ids=[p.name for p in corpora])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_index(index, out)
    write_manifest(out.parent, "decontam-build", ctx.obj["cfg"], list(corpora))
    click.echo(f"n={ngram_n} fingerprints={len(index.fingerprints)}")


@main.command(name="decontam-flag")
@click.option("--index", "index_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.argument("query", type=click.Path(exists=True, path_type=Path))
@click.option("--report", "report_path", type=click.Path(path_type=Path), required=True)
@click.option("--field", "text_field", default="question", show_default=True)
@click.pass_context
def decontam_flag(ctx, index_path: Path, query: Path, report_path: Path, text_field: str):
    """Flag query docs overlapping the index; write a JSON report."""
    index = load_index(index_path)
    records = _read_jsonl(query)
    streams = []
    timestamps: dict[str, int] = {}
    for rec in records:
        doc_id = rec.get("topic_id") or rec.get("question_id") or ""
        streams.append(tokenize(str(rec.get(text_field, "")), doc_id=doc_id))
        if "first_posted_at" in rec:
            timestamps[doc_id] = rec["first_posted_at"]
    report = flag_contaminated(streams, index, timestamps or None)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    write_manifest(report_path.parent, "decontam-flag", ctx.obj["cfg"], [index_path, query])
    click.echo(f"flagged={len(report.flagged)}/{report.total_docs}")


@main.command(name="build-bench")
@click.argument("pairs_file", type=click.Path(exists=True, path_type=Path))
@click.option("--train-index", "train_indexes", multiple=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--bench-version", default="0000-00", show_default=True)
@click.option("--fields", default="question", show_default=True,
              type=click.Choice(["question", "question+solution"]))
@click.pass_context
def build_bench_cmd(ctx, pairs_file: Path, train_indexes, out: Path,
                    bench_version: str, fields: str):
    """Build the benchmark from dual-rewrite QA pairs."""
    cfg = ctx.obj["cfg"]
    pairs = [qa_pair_from_dict(rec) for rec in _read_jsonl(pairs_file)]
    indexes = [load_index(p) for p in train_indexes]
    markers = tuple(
        m.strip() for m in cfg.get(
            "proof_markers", "prove,show that,prove that,justify"
        ).split(",") if m.strip()
    )
    items, report = build_bench(pairs, indexes, markers, decontam_fields=fields)
    out.parent.mkdir(parents=True, exist_ok=True)
    pipeline_hash = _hash_bytes(
        json.dumps(report.to_dict(), sort_keys=True).encode("utf-8")
    )[:16]
    with out.open("w", encoding="utf-8") as fh:
        write_bench(items, fh, bench_version, pipeline_hash, built_at=0)
    (out.parent / "bench_funnel.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n"
    )
    write_manifest(out.parent, "build-bench", cfg,
                   [pairs_file, *train_indexes])
    click.echo(json.dumps(report.to_dict()))


@main.command(name="export-sft")
@click.argument("pairs_file", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--cutoff", default=None, help="RFC3339 cutoff (exclusive)")
@click.option("--eval-index", "eval_index_path", default=None,
              type=click.Path(exists=True, path_type=Path))
@click.option("--template/--no-template", default=True, show_default=True)
@click.pass_context
def export_sft_cmd(ctx, pairs_file: Path, out: Path, cutoff: str | None,
                   eval_index_path: Path | None, template: bool):
    """Export fine-tuning samples with cutoff and contamination exclusion."""
    cfg = ctx.obj["cfg"]
    pairs = [qa_pair_from_dict(rec) for rec in _read_jsonl(pairs_file)]
    index = load_index(eval_index_path) if eval_index_path else None
    tmpl = None
    if template:
        tmpl = ChatTemplate(cfg.get(
            "sft_template", "<s>[INST] {question} [/INST]{solution}"
        ))
    samples, report = export_sft(
        pairs,
        cutoff=parse_timestamp(cutoff) if cutoff else None,
        eval_index=index,
        template=tmpl,
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        write_samples(samples, fh)
    (out.parent / "sft_report.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n"
    )
    inputs = [pairs_file] + ([eval_index_path] if eval_index_path else [])
    write_manifest(out.parent, "export-sft", cfg, inputs)
    click.echo(json.dumps(report.to_dict()))


@main.command(name="grade")
@click.argument("bench_file", type=click.Path(exists=True, path_type=Path))
@click.argument("predictions_file", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def grade_cmd(ctx, bench_file: Path, predictions_file: Path, out: Path):
    """Grade a prediction file (all models it contains) against the benchmark."""
    from .harness import PredictionRecord

    _header, items = read_bench(bench_file)
    by_model = read_predictions(predictions_file)
    results = []
    for model_id in sorted(by_model):
        preds = by_model[model_id]
        for item in items:
            response = preds.get(item.question_id)
            pred = (
                PredictionRecord(model_id, item.question_id, response)
                if response is not None
                else None
            )
            results.append(grade(pred, item))
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        write_grades(results, fh)
    correct = sum(r.correct for r in results)
    write_manifest(out.parent, "grade", ctx.obj["cfg"],
                   [bench_file, predictions_file])
    click.echo(f"correct={correct}/{len(results)}")


@main.command(name="report")
@click.argument("bench_file", type=click.Path(exists=True, path_type=Path))
@click.argument("predictions_file", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def report_cmd(ctx, bench_file: Path, predictions_file: Path, out: Path):
    """Aggregate per-model metrics into one JSON report."""
    _header, items = read_bench(bench_file)
    by_model = read_predictions(predictions_file)
    reports = [
        aggregate(items, model_id, by_model[model_id])
        for model_id in sorted(by_model)
    ]
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(
        {"models": [r.to_dict() for r in reports]}, indent=2, sort_keys=True
    ) + "\n")
    write_manifest(out.parent, "report", ctx.obj["cfg"],
                   [bench_file, predictions_file])
    click.echo(f"models={len(reports)}")


@main.command(name="leaderboard")
@click.argument("bench_file", type=click.Path(exists=True, path_type=Path))
@click.argument("predictions_file", type=click.Path(exists=True, path_type=Path))
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
@click.pass_context
def leaderboard_cmd(ctx, bench_file: Path, predictions_file: Path, out_dir: Path):
    """Render leaderboard artifacts from a benchmark and prediction file."""
    _header, items = read_bench(bench_file)
    by_model = read_predictions(predictions_file)
    reports = [
        aggregate(items, model_id, by_model[model_id])
        for model_id in sorted(by_model)
    ]
    emit_leaderboard(reports, out_dir)
    write_manifest(out_dir, "leaderboard", ctx.obj["cfg"],
                   [bench_file, predictions_file])
    click.echo(str(out_dir / "leaderboard.json"))


@main.command(name="annotate-serve")
@click.argument("bench_file", type=click.Path(exists=True, path_type=Path))
@click.option("--annotators", required=True, help="comma-separated ids")
@click.option("--fraction", type=float, default=0.1, show_default=True)
@click.option("--log", "log_path", type=click.Path(path_type=Path), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8100, show_default=True)
@click.pass_context
def annotate_serve(ctx, bench_file: Path, annotators: str, fraction: float,
                   log_path: Path, host: str, port: int):
    """Serve the annotation HTTP API over a sampled benchmark subset."""
    import uvicorn

    from .annotate import QuestionView, build_store, create_app, sample_subset

    _header, items = read_bench(bench_file)
    subset = sample_subset(items, fraction, ctx.obj["seed"])
    questions = [
        QuestionView(
            question_id=i.question_id,
            question_text=i.question_text,
            final_answers=i.final_answers,
        )
        for i in subset
    ]
    store = build_store(questions, [a.strip() for a in annotators.split(",")],
                        log_path=log_path)
    app = create_app(store)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command(name="stats")
@click.argument("bench_file", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def stats_cmd(ctx, bench_file: Path, out: Path | None):
    """Dataset histograms for a built benchmark."""
    _header, items = read_bench(bench_file)
    stats = dataset_stats(items)
    text = json.dumps(stats, indent=2, sort_keys=True) + "\n"
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    click.echo(text.rstrip())


if __name__ == "__main__":
    sys.exit(main())
