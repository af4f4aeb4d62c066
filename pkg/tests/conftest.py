"""Shared fixture builders for the test suite."""

from __future__ import annotations

import json

import pytest

from mathpipe.gateway import BackendConfig, Gateway
from mathpipe.ingest import DifficultyLabel, Post, Topic, parse_timestamp
from mathpipe.stages import QaPair, RewrittenSolution, SolutionBundle


def make_topic(topic_id="t1", bodies=("Find $x$ such that $x+1=3$.", "It is $x=2$."),
               category="High School Math", base_ts="2024-03-05T12:00:00Z",
               authors=None):
    ts = parse_timestamp(base_ts)
    posts = tuple(
        Post(
            post_number=i + 1,
            author=(authors[i] if authors else f"user{i + 1}"),
            body=body,
            created_at=ts + i * 60,
        )
        for i, body in enumerate(bodies)
    )
    return Topic(topic_id=topic_id, posts=posts, category_tag=category)


def make_pair(topic_id="t1", question="Find $x$ such that $x+1=3$.",
              answers=("\\boxed{2}", "\\boxed{2}"), raw_text="It is $x=2$.",
              ts="2024-03-05T12:00:00Z",
              difficulty=DifficultyLabel.HIGH_SCHOOL, post_number=2,
              rewriters=("rw-a", "rw-b")):
    """QaPair with one solution bundle carrying dual rewrites.

    `answers` holds the full rewrite texts (boxed or not) per rewriter.
    """
    rewrites = tuple(
        RewrittenSolution(
            source=(topic_id, post_number),
            rewriter_id=rid,
            text=text,
            boxed_answer=_last_boxed(text),
        )
        for rid, text in zip(rewriters, answers)
    )
    bundle = SolutionBundle(
        post_number=post_number, author="u2", raw_text=raw_text, rewrites=rewrites
    )
    return QaPair(
        topic_id=topic_id,
        question_text=question,
        solutions=(bundle,),
        first_posted_at=parse_timestamp(ts),
        difficulty=difficulty,
    )


def _last_boxed(text):
    from mathpipe.answer_engine import ExtractError, extract_boxed

    try:
        box = extract_boxed(text)
    except ExtractError:
        return None
    return box.raw if box else None


def replay(mapping: dict[str, str]) -> Gateway:
    gw = Gateway(BackendConfig(kind="replay_mock"))
    for tag, text in mapping.items():
        gw.add_replay(tag, text)
    return gw


def topic_line(topic_id="t1", n_posts=2, ts="2024-03-05T12:00:00Z",
               category="High School Math", text="Find $x$ such that $x+1=3$."):
    base = parse_timestamp(ts)
    from mathpipe.ingest import format_timestamp

    return json.dumps({
        "topic_id": topic_id,
        "category": category,
        "posts": [
            {
                "n": i + 1,
                "user": f"user{i + 1}",
                "ts": format_timestamp(base + i * 60),
                "text": text if i == 0 else f"Answer attempt {i}: $x=2$.",
            }
            for i in range(n_posts)
        ],
    })


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path
