"""Eval harness: grading, slice aggregation, drop metric, leaderboards."""

import csv
import json

import pytest

from mathpipe.answer_engine import AnswerType
from mathpipe.bench import BenchItem
from mathpipe.harness import (
    MetricsReport,
    PredictionRecord,
    aggregate,
    drop_metric,
    emit_leaderboard,
    grade,
    read_predictions,
)
from mathpipe.ingest import DifficultyLabel, parse_timestamp


def item(qid, answers=("12",), month="2024-03",
         difficulty=DifficultyLabel.HIGH_SCHOOL,
         answer_type=AnswerType.NUMERIC_INT, multi=False):
    ts = parse_timestamp(f"{month}-05T00:00:00Z")
    return BenchItem(
        question_id=qid,
        question_text=f"Question {qid}",
        final_answers=answers,
        first_posted_at=ts,
        month_bucket=month,
        difficulty=difficulty,
        answer_type=answer_type,
        provenance=((qid, 2),),
        multi_answer=multi,
    )


def pred(qid, text, model="m"):
    return PredictionRecord(model, qid, text)


class TestGrade:
    def test_normalized_match(self):
        result = grade(pred("q", "thus \\boxed{(2, 1)}"), item("q", ("(2,1)",)))
        assert result.correct and result.match_method == "string"

    def test_no_box(self):
        result = grade(pred("q", "the answer is 12"), item("q"))
        assert not result.correct and result.match_method == "no_box"

    def test_numeric_value_match(self):
        result = grade(pred("q", "\\boxed{0.5}"), item("q", ("\\frac{1}{2}",)))
        assert result.correct and result.match_method == "numeric_value"

    def test_last_box_grades(self):
        result = grade(pred("q", "\\boxed{3} ... \\boxed{12}"), item("q"))
        assert result.correct

    def test_any_final_answer_matches(self):
        result = grade(pred("q", "\\boxed{45}"), item("q", ("12", "45"), multi=True))
        assert result.correct

    def test_missing_prediction(self):
        result = grade(None, item("q"))
        assert not result.correct and result.match_method == "missing"

    def test_malformed_box_counts_incorrect(self):
        result = grade(pred("q", "\\boxed{\\frac{1}{2}"), item("q"))
        assert not result.correct and result.match_method == "no_box"


def small_bench():
    return [
        item("q1", month="2024-01", difficulty=DifficultyLabel.MIDDLE_SCHOOL,
             answer_type=AnswerType.NUMERIC_INT),
        item("q2", month="2024-01", difficulty=DifficultyLabel.HIGH_SCHOOL,
             answer_type=AnswerType.NUMERIC_INT),
        item("q3", month="2024-02", difficulty=DifficultyLabel.HIGH_SCHOOL,
             answer_type=AnswerType.EXPRESSION, answers=("2x",)),
        item("q4", month="2024-03", difficulty=DifficultyLabel.COLLEGE,
             answer_type=AnswerType.NUMERIC_INT),
    ]


class TestAggregate:
    def test_overall_accuracy(self):
        preds = {
            "q1": "\\boxed{12}",
            "q2": "\\boxed{12}",
            "q3": "\\boxed{x+x}",
            "q4": "\\boxed{99}",
        }
        report = aggregate(small_bench(), "m", preds)
        assert report.overall_acc == 75.0
        assert report.total == 4 and report.correct == 3

    def test_missing_counts_incorrect(self):
        report = aggregate(small_bench(), "m", {"q1": "\\boxed{12}"})
        assert report.correct == 1 and report.missing == 3
        assert report.total == 4

    def test_unknown_id_is_error(self):
        with pytest.raises(ValueError) as err:
            aggregate(small_bench(), "m", {"zz": "\\boxed{1}"})
        assert "zz" in str(err.value)

    def test_slice_conservation(self):
        preds = {"q1": "\\boxed{12}", "q2": "\\boxed{0}", "q3": "\\boxed{2x}"}
        report = aggregate(small_bench(), "m", preds)
        for slices in (report.by_month, report.by_difficulty, report.by_answer_type):
            weighted = sum(c * a for _k, c, a in slices)
            total = sum(c for _k, c, a in slices)
            assert total == report.total
            assert abs(weighted / total - report.overall_acc) < 1e-9

    def test_duplicate_prediction_rejected_on_read(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        rec = {"model": "m", "id": "q1", "response": "\\boxed{1}"}
        path.write_text(json.dumps(rec) + "\n" + json.dumps(rec) + "\n")
        with pytest.raises(ValueError) as err:
            read_predictions(path)
        assert "q1" in str(err.value)


DROP_ROWS = [
    (34.80, 33.40, 4.02),
    (37.84, 36.15, 4.45),
    (42.36, 40.45, 4.51),
    (25.59, 24.14, 5.68),
    (17.78, 16.03, 9.83),
    (22.08, 19.80, 10.31),
    (33.26, 29.32, 11.85),
    (16.88, 14.76, 12.55),
    (14.35, 12.44, 13.35),
    (15.25, 13.00, 14.76),
    (16.26, 13.64, 16.16),
    (12.78, 11.59, 9.30),
    (22.02, 19.34, 12.16),
    (13.01, 10.85, 16.55),
    (12.67, 10.32, 18.51),
    (11.63, 9.30, 20.01),
    (6.32, 4.83, 23.62),
]


class TestDropMetric:
    @pytest.mark.parametrize("old,new,expected", DROP_ROWS)
    def test_reference_rows(self, old, new, expected):
        assert abs(drop_metric(old, new) - expected) <= 0.1

    def test_no_drop(self):
        assert drop_metric(40.0, 40.0) == 0.0

    def test_zero_base_undefined(self):
        assert drop_metric(0.0, 10.0) is None
        assert drop_metric(-1.0, 10.0) is None


def report_for(model_id, acc_pairs):
    """acc_pairs: list of (month, count, acc)."""
    total = sum(c for _m, c, _a in acc_pairs)
    correct = round(sum(c * a / 100.0 for _m, c, a in acc_pairs))
    return MetricsReport(
        model_id=model_id,
        total=total,
        correct=correct,
        by_month=tuple(acc_pairs),
        by_difficulty=(),
        by_answer_type=(),
    )


class TestLeaderboard:
    def test_sorted_desc_with_tiebreak(self, tmp_path):
        reports = [
            report_for("bravo", [("2024-01", 10, 40.0)]),
            report_for("alpha", [("2024-01", 10, 40.0)]),
            report_for("weak", [("2024-01", 10, 30.0)]),
        ]
        emit_leaderboard(reports, tmp_path)
        rows = json.loads((tmp_path / "leaderboard.json").read_text())["rows"]
        assert [r["model_id"] for r in rows] == ["alpha", "bravo", "weak"]
        assert [r["rank"] for r in rows] == [1, 2, 3]

    def test_html_is_static(self, tmp_path):
        emit_leaderboard([report_for("m", [("2024-01", 4, 75.0)])], tmp_path)
        html_text = (tmp_path / "leaderboard.html").read_text()
        assert "<script" not in html_text
        assert "m" in html_text and "75.00" in html_text

    def test_trend_csv_rows(self, tmp_path):
        months = [("2024-01", 5, 60.0), ("2024-02", 5, 40.0), ("2024-03", 2, 50.0)]
        emit_leaderboard([report_for("m", months)], tmp_path)
        with (tmp_path / "trend_m.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["month", "accuracy"]
        assert len(rows) == 1 + len(months)
        assert rows[1] == ["2024-01", "60.00"]

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_leaderboard([], tmp_path)
