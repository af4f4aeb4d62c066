"""Grade model predictions against the benchmark and publish leaderboards.

A prediction is correct when its last boxed expression is equivalent to any
accepted final answer. Aggregation slices accuracy by month, difficulty,
and answer type; missing predictions count as incorrect so denominators
stay fixed across models.
"""

from __future__ import annotations

import csv
import html
import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Mapping, Sequence

from .answer_engine import ExtractError, equivalent, extract_boxed
from .bench import BenchItem


@dataclass(frozen=True)
class PredictionRecord:
    model_id: str
    question_id: str
    response_text: str


@dataclass(frozen=True)
class GradedRecord:
    model_id: str
    question_id: str
    extracted_answer: str | None
    correct: bool
    match_method: str  # equivalence method, "no_box", or "missing"


@dataclass(frozen=True)
class MetricsReport:
    model_id: str
    total: int
    correct: int
    by_month: tuple[tuple[str, int, float], ...]  # (bucket, count, acc)
    by_difficulty: tuple[tuple[str, int, float], ...]
    by_answer_type: tuple[tuple[str, int, float], ...]
    missing: int = 0
    drop_pct: float | None = None

    @property
    def overall_acc(self) -> float:
        return 100.0 * self.correct / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        def rows(slices):
            return [{"key": k, "count": c, "acc": round(a, 2)} for k, c, a in slices]

        return {
            "model_id": self.model_id,
            "total": self.total,
            "correct": self.correct,
            "overall_acc": round(self.overall_acc, 2),
            "missing": self.missing,
            "by_month": rows(self.by_month),
            "by_difficulty": rows(self.by_difficulty),
            "by_answer_type": rows(self.by_answer_type),
            "drop_pct": self.drop_pct,
        }


def grade(pred: PredictionRecord | None, item: BenchItem) -> GradedRecord:
    model_id = pred.model_id if pred else ""
    if pred is None:
        return GradedRecord(model_id, item.question_id, None, False, "missing")
    try:
        box = extract_boxed(pred.response_text)
    except ExtractError:
        box = None
    if box is None:
        return GradedRecord(model_id, item.question_id, None, False, "no_box")
    for accepted in item.final_answers:
        verdict = equivalent(box.raw, accepted)
        if verdict.equivalent:
            return GradedRecord(
                model_id, item.question_id, box.raw, True, verdict.method.value
            )
    return GradedRecord(model_id, item.question_id, box.raw, False, "mismatch")


class _Slice:
    def __init__(self):
        self.buckets: dict[str, list[int]] = {}

    def add(self, key: str, correct: bool):
        bucket = self.buckets.setdefault(key, [0, 0])
        bucket[1] += 1
        if correct:
            bucket[0] += 1

    def rows(self) -> tuple[tuple[str, int, float], ...]:
        return tuple(
            (key, c[1], 100.0 * c[0] / c[1])
            for key, c in sorted(self.buckets.items())
        )


def aggregate(
    items: Sequence[BenchItem],
    model_id: str,
    predictions: Mapping[str, str],
) -> MetricsReport:
    """predictions: question_id -> response text. Every bench item counts."""
    known_ids = {item.question_id for item in items}
    if len(known_ids) != len(items):
        raise ValueError("benchmark contains duplicate question ids")
    unknown = set(predictions) - known_ids
    if unknown:
        raise ValueError(f"predictions for unknown question ids: {sorted(unknown)[:3]}")
    correct = 0
    missing = 0
    months, difficulties, answer_types = _Slice(), _Slice(), _Slice()
    for item in items:
        response = predictions.get(item.question_id)
        pred = (
            PredictionRecord(model_id, item.question_id, response)
            if response is not None
            else None
        )
        result = grade(pred, item)
        if result.match_method == "missing":
            missing += 1
        if result.correct:
            correct += 1
        months.add(item.month_bucket, result.correct)
        difficulties.add(item.difficulty.value, result.correct)
        answer_types.add(item.answer_type.value, result.correct)
    return MetricsReport(
        model_id=model_id,
        total=len(items),
        correct=correct,
        by_month=months.rows(),
        by_difficulty=difficulties.rows(),
        by_answer_type=answer_types.rows(),
        missing=missing,
    )


def drop_metric(acc_old: float, acc_new: float) -> float | None:
    """Relative accuracy decline in percent, to two decimals."""
    if acc_old <= 0:
        return None
    return round(100.0 * (acc_old - acc_new) / acc_old, 2)


# --- leaderboard emission ------------------------------------------------


def leaderboard_rows(reports: Sequence[MetricsReport]) -> list[dict]:
    ordered = sorted(reports, key=lambda r: (-r.overall_acc, r.model_id))
    rows = []
    for rank, report in enumerate(ordered, start=1):
        rows.append(
            {
                "rank": rank,
                "model_id": report.model_id,
                "accuracy": round(report.overall_acc, 2),
                "correct": report.correct,
                "total": report.total,
            }
        )
    return rows


def emit_leaderboard(reports: Sequence[MetricsReport], out_dir: Path) -> None:
    """Write leaderboard.json, leaderboard.html, and per-model trend CSVs."""
    if not reports:
        raise ValueError("need at least one metrics report")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = leaderboard_rows(reports)
    (out_dir / "leaderboard.json").write_text(
        json.dumps({"rows": rows}, indent=2) + "\n", encoding="utf-8"
    )
    (out_dir / "leaderboard.html").write_text(_render_html(rows), encoding="utf-8")
    for report in reports:
        path = out_dir / f"trend_{_safe_name(report.model_id)}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["month", "accuracy"])
            for month, _count, acc in report.by_month:
                writer.writerow([month, f"{acc:.2f}"])


def _safe_name(model_id: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in model_id)


def _render_html(rows: Sequence[dict]) -> str:
    body = "\n".join(
        "<tr><td>{rank}</td><td>{model}</td><td>{acc:.2f}</td>"
        "<td>{correct}/{total}</td></tr>".format(
            rank=r["rank"],
            model=html.escape(r["model_id"]),
            acc=r["accuracy"],
            correct=r["correct"],
            total=r["total"],
        )
        for r in rows
    )
    return (
        "<!doctype html>\n<html><head><meta charset=\"utf-8\">"
        "<title>Leaderboard</title></head><body>\n"
        "<h1>Leaderboard</h1>\n<table border=\"1\">\n"
        "<tr><th>Rank</th><th>Model</th><th>Accuracy (%)</th><th>Score</th></tr>\n"
        f"{body}\n</table>\n</body></html>\n"
    )


# --- prediction file IO --------------------------------------------------


def read_predictions(path: Path) -> dict[str, dict[str, str]]:
    """JSONL of {"model": str, "id": str, "response": str} grouped by model.

    A duplicate (model, id) pair is an input error naming the id.
    """
    out: dict[str, dict[str, str]] = {}
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            model = rec["model"]
            qid = rec["id"]
            per_model = out.setdefault(model, {})
            if qid in per_model:
                raise ValueError(
                    f"duplicate prediction for question {qid} (model {model})"
                )
            per_model[qid] = rec["response"]
    return out


def write_grades(results: Sequence[GradedRecord], out: IO[str]) -> None:
    for r in results:
        out.write(
            json.dumps(
                {
                    "model": r.model_id,
                    "id": r.question_id,
                    "extracted_answer": r.extracted_answer,
                    "correct": r.correct,
                    "match_method": r.match_method,
                }
            )
            + "\n"
        )
