"""The LLM stages: math-question detection, QA extraction, solution rewriting.

Each stage is a prompt template (shipped under prompts/) plus a strict
output parser. Per-topic failures quarantine the topic after one retry and
never abort a batch run.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

from .funnel import FunnelReport
from .gateway import ChatRequest, Gateway, MockMissError
from .ingest import DifficultyLabel, Topic, derive_difficulty

from .answer_engine import ExtractError, extract_boxed


class StageParseError(ValueError):
    pass


def load_prompt(name: str) -> str:
    return resources.files("mathpipe.prompts").joinpath(f"{name}.txt").read_text(
        encoding="utf-8"
    )


def render_template(pattern: str, values: dict[str, str]) -> str:
    """Bit-exact {placeholder} substitution; no escaping semantics."""
    out = pattern
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


@dataclass(frozen=True)
class StageConfig:
    detect_model: str = "detector"
    extract_model: str = "extractor"
    rewrite_models: tuple[str, ...] = ("rewriter",)
    max_tokens: int = 4096
    temperature: float = 0.0


@dataclass(frozen=True)
class DetectionVerdict:
    topic_id: str
    is_math_question: bool
    raw_model_text: str


@dataclass(frozen=True)
class ExtractionResult:
    topic_id: str
    question_text: str
    answers: tuple[tuple[int, str], ...]  # (post_number, author)


@dataclass(frozen=True)
class RewrittenSolution:
    source: tuple[str, int]  # (topic_id, post_number)
    rewriter_id: str
    text: str
    boxed_answer: str | None


@dataclass(frozen=True)
class SolutionBundle:
    post_number: int
    author: str
    raw_text: str
    rewrites: tuple[RewrittenSolution, ...]


@dataclass(frozen=True)
class QaPair:
    topic_id: str
    question_text: str
    solutions: tuple[SolutionBundle, ...]
    first_posted_at: int
    difficulty: DifficultyLabel


_BOXED_BIT = re.compile(r"\\boxed\{\s*([01])\s*\}")


def detect(topic: Topic, gateway: Gateway, cfg: StageConfig) -> DetectionVerdict:
    """Classify the first post; verdict comes from the LAST boxed 0/1."""
    prompt = render_template(load_prompt("classify"), {"post": topic.posts[0].body})
    resp = gateway.complete(
        ChatRequest(
            model_id=cfg.detect_model,
            messages=(("user", prompt),),
            max_tokens=cfg.max_tokens,
            temperature=cfg.temperature,
            request_tag=f"detect:{topic.topic_id}",
        )
    )
    bits = _BOXED_BIT.findall(resp.text)
    if not bits:
        raise StageParseError(f"no boxed 0/1 verdict for topic {topic.topic_id}")
    return DetectionVerdict(
        topic_id=topic.topic_id,
        is_math_question=bits[-1] == "1",
        raw_model_text=resp.text,
    )


def render_posts(topic: Topic) -> str:
    return "\n".join(
        f"post {p.post_number} by {p.author}: {p.body}" for p in topic.posts
    )


_CODE_FENCE = re.compile(r"```(?:json)?|```")


def _parse_extraction_payload(text: str) -> list[dict]:
    """Strict-schema parse with one repair pass (drop fences and leading prose)."""
    cleaned = _CODE_FENCE.sub("", text)
    start = cleaned.find("{")
    end = cleaned.rfind("}")
    if start < 0 or end <= start:
        raise StageParseError("no JSON object in extraction response")
    try:
        payload = json.loads(cleaned[start : end + 1])
    except json.JSONDecodeError as exc:
        raise StageParseError(f"malformed extraction JSON: {exc}")
    if not isinstance(payload, dict) or "answers" not in payload:
        raise StageParseError('extraction payload lacks the "answers" key')
    answers = payload["answers"]
    if not isinstance(answers, list):
        raise StageParseError('"answers" is not a list')
    for entry in answers:
        if not isinstance(entry, dict):
            raise StageParseError("answer entry is not an object")
    return answers


def extract(topic: Topic, gateway: Gateway, cfg: StageConfig) -> ExtractionResult:
    prompt = render_template(load_prompt("parse"), {"posts": render_posts(topic)})
    resp = gateway.complete(
        ChatRequest(
            model_id=cfg.extract_model,
            messages=(("user", prompt),),
            max_tokens=cfg.max_tokens,
            temperature=cfg.temperature,
            request_tag=f"extract:{topic.topic_id}",
        )
    )
    answers = _parse_extraction_payload(resp.text)
    valid_numbers = {p.post_number for p in topic.posts}
    refs: list[tuple[int, str]] = []
    for entry in answers:
        number = entry.get("post number", entry.get("post_number"))
        user = entry.get("user", entry.get("use", ""))
        if not isinstance(number, int) or isinstance(number, bool):
            continue
        if number == 1 or number not in valid_numbers:
            continue
        refs.append((number, str(user)))
    return ExtractionResult(
        topic_id=topic.topic_id,
        question_text=topic.posts[0].body,
        answers=tuple(refs),
    )


def rewrite(
    question: str,
    raw_solution: str,
    rewriter_id: str,
    source: tuple[str, int],
    gateway: Gateway,
    cfg: StageConfig,
) -> RewrittenSolution:
    if not raw_solution.strip():
        raise ValueError("raw solution must be non-empty")
    prompt = render_template(
        load_prompt("rewrite"), {"question": question, "solution": raw_solution}
    )
    resp = gateway.complete(
        ChatRequest(
            model_id=rewriter_id,
            messages=(("user", prompt),),
            max_tokens=cfg.max_tokens,
            temperature=cfg.temperature,
            request_tag=f"rewrite:{rewriter_id}:{source[0]}:{source[1]}",
        )
    )
    try:
        boxed = extract_boxed(resp.text)
    except ExtractError:
        boxed = None
    return RewrittenSolution(
        source=source,
        rewriter_id=rewriter_id,
        text=resp.text,
        boxed_answer=boxed.raw if boxed else None,
    )


def _with_retry(fn, *args):
    try:
        return fn(*args)
    except StageParseError:
        return fn(*args)  # one retry; a second parse failure quarantines


def run_training_pipeline(
    topics: list[Topic],
    gateway: Gateway,
    cfg: StageConfig,
    difficulty_table=None,
) -> tuple[list[QaPair], FunnelReport]:
    """Single-rewriter pipeline over a topic batch; quarantine-and-continue."""
    report = FunnelReport()
    detected = 0
    pruned = 0
    quarantined = 0
    with_answers = 0
    emitted_topics = 0
    pairs: list[QaPair] = []
    for topic in topics:
        try:
            verdict = _with_retry(detect, topic, gateway, cfg)
        except (StageParseError, MockMissError):
            quarantined += 1
            continue
        if not verdict.is_math_question:
            pruned += 1
            continue
        detected += 1
        try:
            extraction = _with_retry(extract, topic, gateway, cfg)
        except (StageParseError, MockMissError):
            continue  # counted inside detected; tracked via extras below
        if not extraction.answers:
            continue
        with_answers += 1
        try:
            pair = _build_pair(topic, extraction, gateway, cfg, difficulty_table)
        except (StageParseError, MockMissError):
            continue
        pairs.append(pair)
        emitted_topics += 1
    report.add_stage("detect_math", len(topics), detected)
    report.add_stage("extract_answers", detected, with_answers)
    report.add_stage("rewrite", with_answers, emitted_topics)
    report.extras.update(
        {
            "input_topics": len(topics),
            "pruned_not_math": pruned,
            "quarantined": quarantined,
            "qa_pairs": sum(len(p.solutions) for p in pairs),
        }
    )
    return pairs, report


def _build_pair(topic, extraction, gateway, cfg, difficulty_table) -> QaPair:
    posts_by_number = {p.post_number: p for p in topic.posts}
    bundles = []
    for number, _author in extraction.answers:
        post = posts_by_number[number]
        rewrites = tuple(
            rewrite(
                extraction.question_text,
                post.body,
                rid,
                (topic.topic_id, number),
                gateway,
                cfg,
            )
            for rid in cfg.rewrite_models
        )
        bundles.append(
            SolutionBundle(
                post_number=number,
                author=post.author,
                raw_text=post.body,
                rewrites=rewrites,
            )
        )
    return QaPair(
        topic_id=topic.topic_id,
        question_text=extraction.question_text,
        solutions=tuple(bundles),
        first_posted_at=topic.first_posted_at,
        difficulty=derive_difficulty(topic, difficulty_table),
    )


# --- QaPair JSONL serialization -----------------------------------------


def qa_pair_to_dict(pair: QaPair) -> dict:
    return {
        "topic_id": pair.topic_id,
        "question": pair.question_text,
        "first_posted_at": pair.first_posted_at,
        "difficulty": pair.difficulty.value,
        "solutions": [
            {
                "post_number": b.post_number,
                "author": b.author,
                "raw_text": b.raw_text,
                "rewrites": [
                    {
                        "rewriter_id": r.rewriter_id,
                        "text": r.text,
                        "boxed_answer": r.boxed_answer,
                    }
                    for r in b.rewrites
                ],
            }
            for b in pair.solutions
        ],
    }


def qa_pair_from_dict(rec: dict) -> QaPair:
    return QaPair(
        topic_id=rec["topic_id"],
        question_text=rec["question"],
        first_posted_at=rec["first_posted_at"],
        difficulty=DifficultyLabel(rec["difficulty"]),
        solutions=tuple(
            SolutionBundle(
                post_number=s["post_number"],
                author=s["author"],
                raw_text=s["raw_text"],
                rewrites=tuple(
                    RewrittenSolution(
                        source=(rec["topic_id"], s["post_number"]),
                        rewriter_id=r["rewriter_id"],
                        text=r["text"],
                        boxed_answer=r["boxed_answer"],
                    )
                    for r in s["rewrites"]
                ),
            )
            for s in rec["solutions"]
        ),
    )
