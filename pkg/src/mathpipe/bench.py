"""Build the evaluation benchmark from eval-window QA pairs.

Stage order: 8-gram decontamination -> heuristic proof/boxed filter ->
duplicate-question merge -> dual-rewrite cross-check -> emit, with a
conservation-checked funnel report across exactly these stages.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

from .answer_engine import AnswerType, classify_answer_type, equivalent, extract_boxed, ExtractError
from .answer_parse import normalize_string
from .decontam import NgramIndex, TokenStream, flag_contaminated, tokenize
from .funnel import FunnelReport
from .ingest import DifficultyLabel, month_bucket
from .stages import QaPair

DEFAULT_PROOF_MARKERS = ("prove", "show that", "prove that", "justify")


@dataclass(frozen=True)
class CrossCheckTriplet:
    question_id: str
    a_qwen: str | None
    a_llama: str | None
    a_original: str | None


@dataclass(frozen=True)
class BenchItem:
    question_id: str
    question_text: str
    final_answers: tuple[str, ...]
    first_posted_at: int
    month_bucket: str
    difficulty: DifficultyLabel
    answer_type: AnswerType
    provenance: tuple[tuple[str, int], ...]  # (topic_id, post_number)
    multi_answer: bool = False


def question_id_for(question_text: str) -> str:
    key = normalize_question_key(question_text)
    return "q" + hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def normalize_question_key(question_text: str) -> str:
    return " ".join(tokenize(question_text).tokens)


def _raw_boxed(text: str) -> str | None:
    try:
        box = extract_boxed(text)
    except ExtractError:
        return None
    return box.raw if box else None


def filter_heuristic(
    pairs: Sequence[QaPair],
    proof_markers: Sequence[str] = DEFAULT_PROOF_MARKERS,
) -> tuple[list[QaPair], list[QaPair], dict[str, str]]:
    """Drop proof-marker questions and items with no boxed rewrite anywhere."""
    kept: list[QaPair] = []
    removed: list[QaPair] = []
    reasons: dict[str, str] = {}
    for pair in pairs:
        lowered = pair.question_text.lower()
        marker = next((m for m in proof_markers if m in lowered), None)
        if marker is not None:
            removed.append(pair)
            reasons[pair.topic_id] = f"proof:{marker}"
            continue
        any_boxed = any(
            rw.boxed_answer is not None for b in pair.solutions for rw in b.rewrites
        )
        if not any_boxed:
            removed.append(pair)
            reasons[pair.topic_id] = "no_boxed_answer"
            continue
        kept.append(pair)
    return kept, removed, reasons


def merge_duplicates(pairs: Sequence[QaPair]) -> list[list[QaPair]]:
    """Group pairs by normalized question token string; insertion-ordered."""
    groups: dict[str, list[QaPair]] = {}
    for pair in pairs:
        groups.setdefault(normalize_question_key(pair.question_text), []).append(pair)
    return list(groups.values())


def _dedup_answers(candidates: Iterable[str]) -> tuple[str, ...]:
    """Equivalence-deduplicate; representative = shorter normalized string,
    tie broken lexicographically."""
    chosen: list[str] = []
    for cand in candidates:
        placed = False
        for i, rep in enumerate(chosen):
            if equivalent(rep, cand).equivalent:
                if _rep_key(cand) < _rep_key(rep):
                    chosen[i] = cand
                placed = True
                break
        if not placed:
            chosen.append(cand)
    return tuple(sorted(chosen, key=_rep_key))


def _rep_key(raw: str) -> tuple[int, str]:
    norm = normalize_string(raw)
    return (len(norm), norm)


def cross_check(t: CrossCheckTriplet) -> tuple[bool, tuple[str, ...]]:
    """Keep iff both rewrites produced boxed answers that agree; candidates
    are the agreed answer plus any boxed answer from the original post."""
    if t.a_qwen is None and t.a_llama is None:
        raise ValueError("triplet reached cross-check with no rewritten answer")
    if t.a_qwen is None or t.a_llama is None:
        return False, ()
    if not equivalent(t.a_qwen, t.a_llama).equivalent:
        return False, ()
    candidates = [t.a_qwen]
    if t.a_original is not None:
        candidates.append(t.a_original)
    return True, _dedup_answers(candidates)


def triplets_for_group(group: Sequence[QaPair]) -> list[CrossCheckTriplet]:
    qid = question_id_for(group[0].question_text)
    out: list[CrossCheckTriplet] = []
    for pair in group:
        for bundle in pair.solutions:
            boxed = {rw.rewriter_id: rw.boxed_answer for rw in bundle.rewrites}
            ids = [rw.rewriter_id for rw in bundle.rewrites]
            a_first = boxed.get(ids[0]) if ids else None
            a_second = boxed.get(ids[1]) if len(ids) > 1 else None
            if a_first is None and a_second is None:
                continue
            out.append(
                CrossCheckTriplet(
                    question_id=qid,
                    a_qwen=a_first,
                    a_llama=a_second,
                    a_original=_raw_boxed(bundle.raw_text),
                )
            )
    return out


def build_bench(
    pairs: Sequence[QaPair],
    train_indices: Sequence[NgramIndex],
    proof_markers: Sequence[str] = DEFAULT_PROOF_MARKERS,
    decontam_fields: str = "question",
) -> tuple[list[BenchItem], FunnelReport]:
    report = FunnelReport()

    # stage 1: 8-gram decontamination against the provided indexes
    contaminated: set[str] = set()
    for index in train_indices:
        docs = [
            _pair_token_stream(pair, decontam_fields)
            for pair in pairs
            if pair.topic_id not in contaminated
        ]
        contaminated |= flag_contaminated(docs, index).flagged_ids()
    clean = [p for p in pairs if p.topic_id not in contaminated]
    report.add_stage("decontam_8gram", len(pairs), len(clean))

    # stage 2: heuristic filters
    kept, _removed, reasons = filter_heuristic(clean, proof_markers)
    report.add_stage("heuristic_filter", len(clean), len(kept))
    report.extras["heuristic_reasons"] = len(reasons)

    # stage 3: merge duplicate questions
    groups = merge_duplicates(kept)
    report.add_stage("merge_duplicates", len(kept), len(groups))

    # stage 4: cross-check and emit
    items: list[BenchItem] = []
    for group in groups:
        all_final: list[str] = []
        provenance: list[tuple[str, int]] = []
        kept_any = False
        for trip in triplets_for_group(group):
            keep, answers = cross_check(trip)
            if keep:
                kept_any = True
                all_final.extend(answers)
        if not kept_any:
            continue
        final_answers = _dedup_answers(all_final)
        first = min(group, key=lambda p: (p.first_posted_at, p.topic_id))
        for pair in group:
            for bundle in pair.solutions:
                provenance.append((pair.topic_id, bundle.post_number))
        provenance.sort()
        items.append(
            BenchItem(
                question_id=question_id_for(first.question_text),
                question_text=first.question_text,
                final_answers=final_answers,
                first_posted_at=first.first_posted_at,
                month_bucket=month_bucket(first.first_posted_at),
                difficulty=first.difficulty,
                answer_type=classify_answer_type(final_answers[0]),
                provenance=tuple(provenance),
                multi_answer=len(final_answers) > 1,
            )
        )
    report.add_stage("cross_check", len(groups), len(items))
    items.sort(key=lambda i: i.question_id)
    return items, report


def _pair_token_stream(pair: QaPair, fields: str) -> TokenStream:
    if fields == "question":
        text = pair.question_text
    elif fields == "question+solution":
        text = pair.question_text + "\n" + "\n".join(
            b.raw_text for b in pair.solutions
        )
    else:
        raise ValueError(f"unknown decontam fields {fields!r}")
    stream = tokenize(text, doc_id=pair.topic_id)
    return stream


# --- dataset statistics --------------------------------------------------


def dataset_stats(items: Sequence[BenchItem] | Sequence[QaPair]) -> dict:
    """Histograms with totals equal to input size."""
    answers_hist: dict[int, int] = {}
    per_year: dict[int, int] = {}
    per_month: dict[str, int] = {}
    difficulty: dict[str, int] = {}
    answer_type: dict[str, int] = {}
    for item in items:
        if isinstance(item, BenchItem):
            n_ans = len(item.final_answers)
            ts = item.first_posted_at
            difficulty[item.difficulty.value] = difficulty.get(item.difficulty.value, 0) + 1
            answer_type[item.answer_type.value] = answer_type.get(item.answer_type.value, 0) + 1
        else:
            n_ans = len(item.solutions)
            ts = item.first_posted_at
            difficulty[item.difficulty.value] = difficulty.get(item.difficulty.value, 0) + 1
        answers_hist[n_ans] = answers_hist.get(n_ans, 0) + 1
        bucket = month_bucket(ts)
        per_month[bucket] = per_month.get(bucket, 0) + 1
        year = int(bucket[:4])
        per_year[year] = per_year.get(year, 0) + 1
    total = len(items)
    return {
        "total": total,
        "answers_per_question": {
            str(k): {"count": v, "pct": 100.0 * v / total if total else 0.0}
            for k, v in sorted(answers_hist.items())
        },
        "questions_per_year": {str(k): v for k, v in sorted(per_year.items())},
        "questions_per_month": dict(sorted(per_month.items())),
        "difficulty": dict(sorted(difficulty.items())),
        "answer_type": dict(sorted(answer_type.items())),
    }


# --- bench file IO -------------------------------------------------------


def bench_item_to_dict(item: BenchItem) -> dict:
    return {
        "question_id": item.question_id,
        "question": item.question_text,
        "final_answers": list(item.final_answers),
        "first_posted_at": item.first_posted_at,
        "month_bucket": item.month_bucket,
        "difficulty": item.difficulty.value,
        "answer_type": item.answer_type.value,
        "provenance": [{"topic_id": t, "post_number": n} for t, n in item.provenance],
        "multi_answer": item.multi_answer,
    }


def bench_item_from_dict(rec: dict) -> BenchItem:
    return BenchItem(
        question_id=rec["question_id"],
        question_text=rec["question"],
        final_answers=tuple(rec["final_answers"]),
        first_posted_at=rec["first_posted_at"],
        month_bucket=rec["month_bucket"],
        difficulty=DifficultyLabel(rec["difficulty"]),
        answer_type=AnswerType(rec["answer_type"]),
        provenance=tuple((p["topic_id"], p["post_number"]) for p in rec["provenance"]),
        multi_answer=rec.get("multi_answer", False),
    )


def write_bench(
    items: Sequence[BenchItem],
    out: IO[str],
    bench_version: str,
    pipeline_hash: str,
    built_at: int | None = None,
) -> None:
    header = {
        "bench_version": bench_version,
        "built_at": int(time.time()) if built_at is None else built_at,
        "pipeline_hash": pipeline_hash,
    }
    out.write(json.dumps(header, ensure_ascii=False) + "\n")
    for item in items:
        out.write(json.dumps(bench_item_to_dict(item), ensure_ascii=False) + "\n")


def read_bench(path: Path) -> tuple[dict, list[BenchItem]]:
    items: list[BenchItem] = []
    header: dict = {}
    with path.open(encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if i == 0 and "bench_version" in rec:
                header = rec
                continue
            items.append(bench_item_from_dict(rec))
    return header, items
