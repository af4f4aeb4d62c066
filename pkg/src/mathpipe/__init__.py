"""Forum-dump-to-benchmark toolkit: ingestion, LLM pipeline stages, answer
equivalence, n-gram decontamination, benchmark building, grading and export."""

__version__ = "0.1.0"
