"""End-to-end pipeline run over a synthetic dump with replay LLM fixtures.

Used by both the smoke test and the acceptance suite: builds a 20-topic
dump, drives every CLI stage in-process, and returns digests of the
produced artifacts so two runs can be compared byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from click.testing import CliRunner

from mathpipe.bench import read_bench
from mathpipe.cli import main
from mathpipe.ingest import format_timestamp, parse_timestamp

CONTAM_RUN = "alpha beta gamma delta epsilon zeta eta theta iota kappa"


def _question(i: int) -> str:
    if i == 3:
        return f"Prove that claim {i} holds for every integer"
    if i == 6:
        return f"{CONTAM_RUN} with suffix {i}"
    return f"Compute the special quantity number {i} please"


def build_dump(path: Path) -> None:
    lines = []
    for i in range(20):
        ts = parse_timestamp(f"2024-{(i % 8) + 1:02d}-10T00:00:00Z")
        lines.append(json.dumps({
            "topic_id": f"t{i:02d}",
            "category": "High School Math",
            "posts": [
                {"n": 1, "user": "asker", "ts": format_timestamp(ts),
                 "text": _question(i)},
                {"n": 2, "user": "solver", "ts": format_timestamp(ts + 60),
                 "text": f"I believe the result is {i}."},
            ],
        }))
    path.write_text("\n".join(lines) + "\n")


def build_fixture(path: Path) -> None:
    records = []

    def add(tag, response):
        records.append({"tag": tag, "response": response, "finish": "stop"})

    for i in range(20):
        tid = f"t{i:02d}"
        if i < 2:
            add(f"detect:{tid}", "Not math. \\boxed{0}")
            continue
        add(f"detect:{tid}", "Math question. \\boxed{1}")
        if i == 2:
            add(f"extract:{tid}", 'No solutions found.\n{"answers": []}')
            continue
        add(f"extract:{tid}",
            'Summary.\n{"answers": [{"user": "solver", "post number": 2}]}')
        if i in (4, 5):
            add(f"rewrite:rw-a:{tid}:2", f"1. Work. 2. Thus $\\boxed{{{i}}}$.")
            add(f"rewrite:rw-b:{tid}:2", f"1. Work. 2. Thus $\\boxed{{{i + 100}}}$.")
        else:
            add(f"rewrite:rw-a:{tid}:2", f"1. Work. 2. Thus $\\boxed{{{i}}}$.")
            add(f"rewrite:rw-b:{tid}:2",
                f"1. Other route. 2. Also $\\boxed{{{i}}}$.")
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def build_train_corpus(path: Path) -> None:
    recs = [
        {"topic_id": "train0",
         "question": f"{CONTAM_RUN} with suffix 6"},
        {"topic_id": "train1",
         "question": "totally unrelated training words about geometry"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in recs) + "\n")


def run_smoke(base: Path) -> dict[str, str]:
    """Run the full pipeline under `base`; returns {artifact: sha256}."""
    base.mkdir(parents=True, exist_ok=True)
    dump = base / "dump.jsonl"
    fixture = base / "fixture.jsonl"
    train = base / "train_corpus.jsonl"
    build_dump(dump)
    build_fixture(fixture)
    build_train_corpus(train)
    config = base / "run.cfg"
    config.write_text(
        "# replay-only run\n"
        "backend_kind = replay_mock\n"
        f"backend_fixture = {fixture}\n"
        "rewrite_models = rw-a,rw-b\n"
    )
    runner = CliRunner()

    def invoke(*args):
        result = runner.invoke(main, ["--config", str(config), *args])
        assert result.exit_code == 0, result.output
        return result

    out = base / "out"
    invoke("ingest", str(dump), "--out", str(out / "topics.jsonl"))
    invoke("pipeline", str(out / "topics.jsonl"), "--dual-rewrite",
           "--out", str(out / "pairs.jsonl"))
    invoke("decontam-build", str(train), "--n", "8",
           "--out", str(out / "train8.idx"))
    invoke("build-bench", str(out / "pairs.jsonl"),
           "--train-index", str(out / "train8.idx"),
           "--bench-version", "2024-08",
           "--out", str(out / "bench.jsonl"))
    invoke("stats", str(out / "bench.jsonl"), "--out", str(out / "stats.json"))

    _header, items = read_bench(out / "bench.jsonl")
    preds = out / "preds.jsonl"
    with preds.open("w", encoding="utf-8") as fh:
        for k, item in enumerate(items):
            fh.write(json.dumps({
                "model": "model-a", "id": item.question_id,
                "response": f"Thus $\\boxed{{{item.final_answers[0]}}}$",
            }) + "\n")
            wrong = k % 2 == 0
            fh.write(json.dumps({
                "model": "model-b", "id": item.question_id,
                "response": "no idea" if wrong
                else f"$\\boxed{{{item.final_answers[0]}}}$",
            }) + "\n")
    invoke("grade", str(out / "bench.jsonl"), str(preds),
           "--out", str(out / "grades.jsonl"))
    invoke("report", str(out / "bench.jsonl"), str(preds),
           "--out", str(out / "report.json"))
    invoke("leaderboard", str(out / "bench.jsonl"), str(preds),
           "--out-dir", str(out / "board"))

    digests = {}
    for path in sorted(out.rglob("*")):
        if path.is_dir() or path.name.startswith("manifest_"):
            continue
        rel = str(path.relative_to(out))
        digests[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digests
