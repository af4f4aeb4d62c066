"""Forum dump ingestion: raw JSONL topics -> validated Topic/Post records.

Dump format: UTF-8 JSONL, one topic per line:
    {"topic_id": str, "category": str|null,
     "posts": [{"n": int, "user": str, "ts": "RFC3339 UTC", "text": str}]}

Timestamps are normalized to UTC epoch seconds at parse time; everything
downstream works with integers.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import IO, Iterable, Iterator


class DifficultyLabel(Enum):
    MIDDLE_SCHOOL = "MiddleSchool"
    HIGH_SCHOOL = "HighSchool"
    COLLEGE = "College"
    HIGH_SCHOOL_OLYMPIADS = "HighSchoolOlympiads"
    OTHERS = "Others"


@dataclass(frozen=True)
class Post:
    post_number: int
    author: str
    body: str
    created_at: int  # UTC epoch seconds


@dataclass(frozen=True)
class Topic:
    topic_id: str
    posts: tuple[Post, ...]
    category_tag: str | None = None

    @property
    def first_posted_at(self) -> int:
        return self.posts[0].created_at


@dataclass(frozen=True)
class RejectRecord:
    line: int
    reason: str  # "schema" | "duplicate" | "timestamp"


def parse_timestamp(value: str) -> int:
    """Parse an RFC3339 UTC timestamp to epoch seconds."""
    if not isinstance(value, str) or not value:
        raise ValueError("timestamp must be a non-empty string")
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.astimezone(timezone.utc).timestamp())


def format_timestamp(epoch: int) -> str:
    return (
        datetime.fromtimestamp(epoch, tz=timezone.utc)
        .isoformat()
        .replace("+00:00", "Z")
    )


def month_bucket(epoch: int) -> str:
    """YYYY-MM bucket of a UTC epoch timestamp."""
    dt = datetime.fromtimestamp(epoch, tz=timezone.utc)
    return f"{dt.year:04d}-{dt.month:02d}"


def _topic_from_record(record: dict) -> Topic:
    """Build a validated Topic; raises ValueError("schema"/"timestamp")."""
    if not isinstance(record, dict):
        raise ValueError("schema")
    topic_id = record.get("topic_id")
    if not isinstance(topic_id, str) or not topic_id:
        raise ValueError("schema")
    category = record.get("category")
    if category is not None and not isinstance(category, str):
        raise ValueError("schema")
    raw_posts = record.get("posts")
    if not isinstance(raw_posts, list) or not raw_posts:
        raise ValueError("schema")

    posts: list[Post] = []
    for raw in raw_posts:
        if not isinstance(raw, dict):
            raise ValueError("schema")
        n = raw.get("n")
        user = raw.get("user")
        text = raw.get("text")
        ts = raw.get("ts")
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ValueError("schema")
        if not isinstance(user, str):
            raise ValueError("schema")
        if not isinstance(text, str) or not text.strip():
            raise ValueError("schema")
        try:
            created_at = parse_timestamp(ts)
        except (ValueError, TypeError):
            raise ValueError("timestamp")
        posts.append(Post(post_number=n, author=user, body=text, created_at=created_at))

    posts.sort(key=lambda p: p.post_number)
    numbers = [p.post_number for p in posts]
    if numbers[0] != 1 or len(set(numbers)) != len(numbers):
        raise ValueError("schema")
    return Topic(topic_id=topic_id, posts=tuple(posts), category_tag=category)


def parse_dump(
    lines: Iterable[str | bytes],
) -> tuple[list[Topic], list[RejectRecord]]:
    """Parse a line-delimited topics dump.

    Every input line yields exactly one Topic or one RejectRecord; accepted
    topic order follows input order. The later occurrence of a duplicate
    topic_id is rejected.
    """
    topics: list[Topic] = []
    rejects: list[RejectRecord] = []
    seen: set[str] = set()
    for line_no, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", errors="replace")
        stripped = raw.strip()
        if not stripped:
            rejects.append(RejectRecord(line=line_no, reason="schema"))
            continue
        try:
            record = json.loads(stripped)
        except json.JSONDecodeError:
            rejects.append(RejectRecord(line=line_no, reason="schema"))
            continue
        try:
            topic = _topic_from_record(record)
        except ValueError as exc:
            rejects.append(RejectRecord(line=line_no, reason=str(exc)))
            continue
        if topic.topic_id in seen:
            rejects.append(RejectRecord(line=line_no, reason="duplicate"))
            continue
        seen.add(topic.topic_id)
        topics.append(topic)
    return topics, rejects


def serialize_topic(topic: Topic) -> str:
    record = {
        "topic_id": topic.topic_id,
        "category": topic.category_tag,
        "posts": [
            {
                "n": p.post_number,
                "user": p.author,
                "ts": format_timestamp(p.created_at),
                "text": p.body,
            }
            for p in topic.posts
        ],
    }
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def serialize_topics(topics: Iterable[Topic]) -> Iterator[str]:
    for topic in topics:
        yield serialize_topic(topic)


def deserialize_topic(line: str) -> Topic:
    return _topic_from_record(json.loads(line))


# Default category -> difficulty table. Keys are normalized tags
# (see _normalize_tag); ship-time defaults, overridable from config.
DEFAULT_DIFFICULTY_TABLE: dict[str, DifficultyLabel] = {
    "middle school": DifficultyLabel.MIDDLE_SCHOOL,
    "middle school math": DifficultyLabel.MIDDLE_SCHOOL,
    "high school": DifficultyLabel.HIGH_SCHOOL,
    "high school math": DifficultyLabel.HIGH_SCHOOL,
    "high school basics": DifficultyLabel.HIGH_SCHOOL,
    "college": DifficultyLabel.COLLEGE,
    "college math": DifficultyLabel.COLLEGE,
    "college algebra": DifficultyLabel.COLLEGE,
    "high school olympiads": DifficultyLabel.HIGH_SCHOOL_OLYMPIADS,
    "olympiads": DifficultyLabel.HIGH_SCHOOL_OLYMPIADS,
}

_TAG_JUNK = re.compile(r"[^a-z0-9]+")


def _normalize_tag(tag: str) -> str:
    return _TAG_JUNK.sub(" ", tag.lower()).strip()


def derive_difficulty(
    topic: Topic,
    table: dict[str, DifficultyLabel] | None = None,
) -> DifficultyLabel:
    """Map a topic's category tag to a difficulty label; unknown -> Others."""
    if topic.category_tag is None:
        return DifficultyLabel.OTHERS
    lookup = DEFAULT_DIFFICULTY_TABLE if table is None else table
    return lookup.get(_normalize_tag(topic.category_tag), DifficultyLabel.OTHERS)


def load_difficulty_table(stream: IO[str]) -> dict[str, DifficultyLabel]:
    """Load a JSON {tag: label-value} table, normalizing the keys."""
    raw = json.load(stream)
    return {_normalize_tag(k): DifficultyLabel(v) for k, v in raw.items()}


def window(topics: Iterable[Topic], start: int, end: int) -> list[Topic]:
    """Topics with start <= first_posted_at < end, sorted by (time, id)."""
    if start >= end:
        raise ValueError("window start must be before end")
    hits = [t for t in topics if start <= t.first_posted_at < end]
    hits.sort(key=lambda t: (t.first_posted_at, t.topic_id))
    return hits
