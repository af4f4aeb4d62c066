"""Export fine-tuning records from QA pairs.

Each rewritten solution expands to one record. Pairs at or past the time
cutoff, or overlapping the evaluation corpus under 10-gram matching, are
excluded and their would-be expansions counted in the export report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Sequence

from .decontam import NgramIndex, flag_contaminated, tokenize
from .stages import QaPair


@dataclass(frozen=True)
class ChatTemplate:
    """Bit-exact render pattern with {question} and {solution} placeholders."""

    pattern: str = "<s>[INST] {question} [/INST]{solution}"
    name: str = "default"

    def __post_init__(self) -> None:
        for slot in ("{question}", "{solution}"):
            if self.pattern.count(slot) != 1:
                raise ValueError(
                    f"template must contain {slot} exactly once"
                )

    def render(self, question: str, solution: str) -> str:
        return self.pattern.replace("{question}", question).replace(
            "{solution}", solution
        )


@dataclass(frozen=True)
class SftRecord:
    instruction: str
    response: str
    topic_id: str
    post_number: int
    rewriter_id: str
    first_posted_at: int
    rendered: str | None = None


@dataclass
class ExportReport:
    candidate_expansions: int = 0
    excluded: dict[str, int] = field(default_factory=dict)
    emitted: int = 0

    def to_dict(self) -> dict:
        return {
            "candidate_expansions": self.candidate_expansions,
            "excluded": dict(self.excluded),
            "emitted": self.emitted,
        }


def _expansions(pair: QaPair) -> int:
    return sum(len(b.rewrites) for b in pair.solutions)


def export_sft(
    pairs: Sequence[QaPair],
    cutoff: int | None = None,
    eval_index: NgramIndex | None = None,
    template: ChatTemplate | None = None,
) -> tuple[list[SftRecord], ExportReport]:
    """Keep pairs with first_posted_at < cutoff and no n-gram overlap."""
    report = ExportReport(
        candidate_expansions=sum(_expansions(p) for p in pairs)
    )
    survivors: list[QaPair] = []
    past_cutoff = 0
    for pair in pairs:
        if cutoff is not None and pair.first_posted_at >= cutoff:
            past_cutoff += _expansions(pair)
            continue
        survivors.append(pair)
    if past_cutoff:
        report.excluded["cutoff"] = past_cutoff

    if eval_index is not None and survivors:
        streams = [
            tokenize(p.question_text, doc_id=p.topic_id) for p in survivors
        ]
        hit_ids = flag_contaminated(streams, eval_index).flagged_ids()
        contaminated = sum(
            _expansions(p) for p in survivors if p.topic_id in hit_ids
        )
        if contaminated:
            report.excluded["contaminated"] = contaminated
        survivors = [p for p in survivors if p.topic_id not in hit_ids]

    records: list[SftRecord] = []
    for pair in survivors:
        for bundle in pair.solutions:
            for rw in bundle.rewrites:
                rendered = (
                    template.render(pair.question_text, rw.text)
                    if template is not None
                    else None
                )
                records.append(
                    SftRecord(
                        instruction=pair.question_text,
                        response=rw.text,
                        topic_id=pair.topic_id,
                        post_number=bundle.post_number,
                        rewriter_id=rw.rewriter_id,
                        first_posted_at=pair.first_posted_at,
                        rendered=rendered,
                    )
                )
    report.emitted = len(records)
    return records, report


def write_samples(records: Sequence[SftRecord], out: IO[str]) -> None:
    for r in records:
        rec = {
            "instruction": r.instruction,
            "response": r.response,
            "meta": {
                "topic_id": r.topic_id,
                "post_number": r.post_number,
                "rewriter_id": r.rewriter_id,
                "first_posted_at": r.first_posted_at,
            },
        }
        if r.rendered is not None:
            rec["rendered"] = r.rendered
        out.write(json.dumps(rec, ensure_ascii=False) + "\n")
