"""Exact n-gram overlap detection between a query set and reference corpora.

Windows of n normalized tokens are fingerprinted with 128-bit hashes; a
query document is flagged as contaminated when any of its windows appears
in the reference index. 10-gram is the training default, 8-gram the
stricter evaluation default.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .ingest import month_bucket

TOKENIZER_VERSION = "ws-punct-1"

_EDGE_PUNCT = ".,;:!?\"'`()[]{}<>"


def tokenize(text: str, doc_id: str = "") -> "TokenStream":
    """Lowercase, split on whitespace, strip edge punctuation.

    Tokens that start with a backslash (LaTeX control sequences) are kept
    intact so that \\frac{1}{2} survives as one token.
    """
    tokens: list[str] = []
    for word in text.lower().split():
        if not word.startswith("\\"):
            word = word.strip(_EDGE_PUNCT)
        if word:
            tokens.append(word)
    return TokenStream(tokens=tuple(tokens), doc_id=doc_id)


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[str, ...]
    doc_id: str = ""


def _fingerprint(window: Sequence[str]) -> int:
    digest = hashlib.blake2b(" ".join(window).encode("utf-8"), digest_size=16)
    return int.from_bytes(digest.digest(), "big")


def _windows(tokens: Sequence[str], n: int) -> Iterable[tuple[int, int]]:
    for off in range(len(tokens) - n + 1):
        yield off, _fingerprint(tokens[off : off + n])


@dataclass(frozen=True)
class NgramIndex:
    n: int
    fingerprints: frozenset[int]
    source_corpus_ids: tuple[str, ...] = ()
    tokenizer_version: str = TOKENIZER_VERSION


def build_index(
    corpora: Iterable[TokenStream], n: int, source_ids: Sequence[str] = ()
) -> NgramIndex:
    if n < 1:
        raise ValueError("n must be >= 1")
    prints: set[int] = set()
    for doc in corpora:
        for _off, fp in _windows(doc.tokens, n):
            prints.add(fp)
    return NgramIndex(n=n, fingerprints=frozenset(prints), source_corpus_ids=tuple(source_ids))


@dataclass(frozen=True)
class OverlapReport:
    n: int
    flagged: tuple[tuple[str, int], ...]  # (doc_id, first matching window offset)
    total_docs: int
    bucket_counts: tuple[tuple[str, int, int], ...] = ()  # (bucket, flagged, total)

    @property
    def overlap_pct(self) -> float:
        if self.total_docs == 0:
            return 0.0
        return 100.0 * len(self.flagged) / self.total_docs

    def flagged_ids(self) -> set[str]:
        return {doc_id for doc_id, _ in self.flagged}

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "total_docs": self.total_docs,
            "flagged": [{"doc_id": d, "offset": o} for d, o in self.flagged],
            "overlap_pct": self.overlap_pct,
            "buckets": [
                {"bucket": b, "flagged": f, "total": t} for b, f, t in self.bucket_counts
            ],
        }


def flag_contaminated(
    query: Iterable[TokenStream],
    index: NgramIndex,
    timestamps: dict[str, int] | None = None,
    bucket_months: int = 4,
) -> OverlapReport:
    """Flag every query doc with any n-window fingerprint in the index.

    With a doc_id -> epoch-seconds map, also reports counts per calendar
    bucket of `bucket_months` months (the time-window contamination view).
    """
    if index.tokenizer_version != TOKENIZER_VERSION:
        raise ValueError(
            f"index tokenizer {index.tokenizer_version!r} != current {TOKENIZER_VERSION!r}"
        )
    flagged: list[tuple[str, int]] = []
    total = 0
    per_bucket: dict[str, list[int]] = {}
    for doc in query:
        total += 1
        hit_offset: int | None = None
        for off, fp in _windows(doc.tokens, index.n):
            if fp in index.fingerprints:
                hit_offset = off
                break
        if hit_offset is not None:
            flagged.append((doc.doc_id, hit_offset))
        if timestamps is not None and doc.doc_id in timestamps:
            bucket = _time_bucket(timestamps[doc.doc_id], bucket_months)
            counts = per_bucket.setdefault(bucket, [0, 0])
            counts[1] += 1
            if hit_offset is not None:
                counts[0] += 1
    buckets = tuple(
        (bucket, per_bucket[bucket][0], per_bucket[bucket][1])
        for bucket in sorted(per_bucket)
    )
    return OverlapReport(
        n=index.n, flagged=tuple(flagged), total_docs=total, bucket_counts=buckets
    )


def _time_bucket(epoch: int, months: int) -> str:
    ym = month_bucket(epoch)  # "YYYY-MM"
    year, month = int(ym[:4]), int(ym[5:])
    start = ((month - 1) // months) * months + 1
    end = start + months - 1
    return f"{year % 100:02d}/{start:02d}-{end:02d}"


def pairwise_overlap(
    datasets: Sequence[tuple[str, list[TokenStream]]], n: int
) -> tuple[list[str], list[list[float]]]:
    """Matrix of overlap percentages: entry (i, j) = % of docs of dataset i
    flagged against the index of dataset j."""
    if len(datasets) < 2:
        raise ValueError("need at least two datasets")
    names = [name for name, _ in datasets]
    indexes = [build_index(docs, n, source_ids=(name,)) for name, docs in datasets]
    matrix: list[list[float]] = []
    for _name, docs in datasets:
        row = []
        for index in indexes:
            row.append(flag_contaminated(docs, index).overlap_pct)
        matrix.append(row)
    return names, matrix


# --- index file: versioned binary ---------------------------------------

_MAGIC = b"NGIX"
_FORMAT_VERSION = 1


def save_index(index: NgramIndex, path: Path) -> None:
    tok = index.tokenizer_version.encode("utf-8")
    sources = json.dumps(list(index.source_corpus_ids)).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HH", _FORMAT_VERSION, index.n))
        fh.write(struct.pack("<H", len(tok)))
        fh.write(tok)
        fh.write(struct.pack("<I", len(sources)))
        fh.write(sources)
        fh.write(struct.pack("<Q", len(index.fingerprints)))
        for fp in sorted(index.fingerprints):
            fh.write(fp.to_bytes(16, "little"))


def load_index(path: Path) -> NgramIndex:
    with path.open("rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path} is not an n-gram index file")
        version, n = struct.unpack("<HH", fh.read(4))
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported index format version {version}")
        (tok_len,) = struct.unpack("<H", fh.read(2))
        tok = fh.read(tok_len).decode("utf-8")
        (src_len,) = struct.unpack("<I", fh.read(4))
        sources = tuple(json.loads(fh.read(src_len).decode("utf-8")))
        (count,) = struct.unpack("<Q", fh.read(8))
        prints = frozenset(
            int.from_bytes(fh.read(16), "little") for _ in range(count)
        )
    return NgramIndex(
        n=n, fingerprints=prints, source_corpus_ids=sources, tokenizer_version=tok
    )


# --- brute-force oracle (kept for tests and audits) ----------------------


def naive_flagged(
    query: Sequence[TokenStream], corpus: Sequence[TokenStream], n: int
) -> set[str]:
    """Quadratic substring scan over joined token windows; the reference
    answer flag_contaminated must match exactly."""
    reference: set[tuple[str, ...]] = set()
    for doc in corpus:
        for off in range(len(doc.tokens) - n + 1):
            reference.add(tuple(doc.tokens[off : off + n]))
    hits: set[str] = set()
    for doc in query:
        for off in range(len(doc.tokens) - n + 1):
            if tuple(doc.tokens[off : off + n]) in reference:
                hits.add(doc.doc_id)
                break
    return hits
