"""Human-verification service for benchmark answers.

A seeded subset of questions is turned into annotation tasks; every
question goes to two distinct annotators with balanced loads. Verdicts
(yes / no / no_answer / not_sure) are upserted over HTTP and mirrored to
an append-only JSONL log.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

VALID_VERDICTS = ("yes", "no", "no_answer", "not_sure")


@dataclass(frozen=True)
class QuestionView:
    question_id: str
    question_text: str
    final_answers: tuple[str, ...]
    raw_posts: tuple[tuple[int, str, str], ...] = ()  # (number, author, body)


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    question_id: str
    question_text: str
    final_answers: tuple[str, ...]
    raw_posts: tuple[tuple[int, str, str], ...]
    assigned_to: str


def sample_subset(items: Sequence, fraction: float, seed: int) -> list:
    """Pick round(fraction * n) items with a seeded RNG, order preserved."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    count = round(fraction * len(items))
    rng = random.Random(seed)
    picked = set(rng.sample(range(len(items)), count))
    return [item for i, item in enumerate(items) if i in picked]


def assign(ids: Sequence[str], annotators: Sequence[str]) -> list[tuple[str, str]]:
    """Two distinct annotators per id, round-robin; loads differ by <= 1."""
    if len(annotators) < 2:
        raise ValueError("need at least two annotators")
    if len(set(annotators)) != len(annotators):
        raise ValueError("annotator ids must be unique")
    k = len(annotators)
    out: list[tuple[str, str]] = []
    cursor = 0
    for qid in ids:
        out.append((qid, annotators[cursor % k]))
        out.append((qid, annotators[(cursor + 1) % k]))
        cursor += 2
    return out


def build_tasks(
    questions: Sequence[QuestionView], annotators: Sequence[str]
) -> list[AnnotationTask]:
    by_id = {q.question_id: q for q in questions}
    tasks: list[AnnotationTask] = []
    for i, (qid, annotator) in enumerate(
        assign([q.question_id for q in questions], annotators)
    ):
        q = by_id[qid]
        tasks.append(
            AnnotationTask(
                task_id=f"t{i:06d}",
                question_id=qid,
                question_text=q.question_text,
                final_answers=q.final_answers,
                raw_posts=q.raw_posts,
                assigned_to=annotator,
            )
        )
    return tasks


def annotator_loads(tasks: Sequence[AnnotationTask]) -> dict[str, int]:
    loads: dict[str, int] = {}
    for task in tasks:
        loads[task.assigned_to] = loads.get(task.assigned_to, 0) + 1
    return loads


def agreement_report(
    tasks: Sequence[AnnotationTask], verdicts: dict[str, str]
) -> dict:
    """Four-way verdict distribution plus inter-annotator agreement.

    Agreement runs over doubly-annotated questions; pairs containing a
    not_sure verdict are dropped from the denominator.
    """
    counts = {v: 0 for v in VALID_VERDICTS}
    for value in verdicts.values():
        counts[value] += 1
    total = sum(counts.values())
    by_question: dict[str, list[str]] = {}
    for task in tasks:
        value = verdicts.get(task.task_id)
        if value is not None:
            by_question.setdefault(task.question_id, []).append(value)
    decided_pairs = 0
    agreeing_pairs = 0
    complete_pairs = 0
    for values in by_question.values():
        if len(values) < 2:
            continue
        complete_pairs += 1
        if "not_sure" in values:
            continue
        decided_pairs += 1
        if values[0] == values[1]:
            agreeing_pairs += 1
    return {
        "verdicts_total": total,
        "coverage_pct": 100.0 * total / len(tasks) if tasks else 0.0,
        "pct_yes": 100.0 * counts["yes"] / total if total else 0.0,
        "pct_no": 100.0 * counts["no"] / total if total else 0.0,
        "pct_no_answer": 100.0 * counts["no_answer"] / total if total else 0.0,
        "pct_not_sure": 100.0 * counts["not_sure"] / total if total else 0.0,
        "complete_pairs": complete_pairs,
        "decided_pairs": decided_pairs,
        "inter_annotator_agreement": (
            100.0 * agreeing_pairs / decided_pairs if decided_pairs else 0.0
        ),
    }


@dataclass
class AnnotationStore:
    tasks: dict[str, AnnotationTask]
    verdicts: dict[str, str] = field(default_factory=dict)
    log_path: Path | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def record(self, task_id: str, annotator: str, value: str) -> None:
        task = self.tasks.get(task_id)
        if task is None:
            raise KeyError(task_id)
        if annotator != task.assigned_to:
            raise PermissionError(annotator)
        if value not in VALID_VERDICTS:
            raise ValueError(value)
        with self._lock:
            self.verdicts[task_id] = value
            if self.log_path is not None:
                entry = {
                    "task_id": task_id,
                    "annotator": annotator,
                    "value": value,
                    "at": int(time.time()),
                }
                with self.log_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry) + "\n")

    def replay_log(self) -> None:
        """Rebuild the verdict map from the append-only log; last write wins."""
        if self.log_path is None or not self.log_path.exists():
            return
        with self.log_path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec["task_id"] in self.tasks:
                    self.verdicts[rec["task_id"]] = rec["value"]

    def report(self) -> dict:
        with self._lock:
            snapshot = dict(self.verdicts)
        return agreement_report(list(self.tasks.values()), snapshot)


class VerdictBody(BaseModel):
    task_id: str
    annotator: str
    value: str


def create_app(store: AnnotationStore) -> FastAPI:
    app = FastAPI(title="annotation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/api/tasks")
    def list_tasks(annotator: str):
        out = []
        for task in store.tasks.values():
            if task.assigned_to != annotator:
                continue
            out.append(
                {
                    "task_id": task.task_id,
                    "question_id": task.question_id,
                    "done": task.task_id in store.verdicts,
                    "verdict": store.verdicts.get(task.task_id),
                }
            )
        return {"annotator": annotator, "tasks": out}

    @app.get("/api/task/{task_id}")
    def get_task(task_id: str):
        task = store.tasks.get(task_id)
        if task is None:
            raise HTTPException(status_code=404, detail="unknown task")
        return {
            "task_id": task.task_id,
            "question_id": task.question_id,
            "question": task.question_text,
            "voted_answer": task.final_answers[0] if task.final_answers else None,
            "original_answers": list(task.final_answers),
            "raw_posts": [
                {"post_number": n, "author": a, "body": b}
                for n, a, b in task.raw_posts
            ],
            "assigned_to": task.assigned_to,
        }

    @app.post("/api/verdict")
    def post_verdict(body: VerdictBody):
        try:
            store.record(body.task_id, body.annotator, body.value)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown task")
        except PermissionError:
            raise HTTPException(status_code=403, detail="annotator not assigned")
        except ValueError:
            raise HTTPException(
                status_code=422,
                detail=f"verdict must be one of {list(VALID_VERDICTS)}",
            )
        return {"ok": True}

    @app.get("/api/report")
    def report():
        return store.report()

    return app


def build_store(
    questions: Sequence[QuestionView],
    annotators: Sequence[str],
    log_path: Path | None = None,
) -> AnnotationStore:
    tasks = build_tasks(questions, annotators)
    store = AnnotationStore(
        tasks={t.task_id: t for t in tasks},
        log_path=log_path,
    )
    store.replay_log()
    return store
