"""Benchmark builder: filters, merge, cross-check, funnel, statistics."""

import io

import pytest

from conftest import make_pair
from mathpipe.answer_engine import equivalent
from mathpipe.bench import (
    CrossCheckTriplet,
    bench_item_from_dict,
    bench_item_to_dict,
    build_bench,
    cross_check,
    dataset_stats,
    filter_heuristic,
    merge_duplicates,
    read_bench,
    write_bench,
)
from mathpipe.decontam import build_index, tokenize


def boxed(x):
    return f"Steps lead to $\\boxed{{{x}}}$."


class TestFilterHeuristic:
    def test_proof_marker_removed(self):
        pair = make_pair("p", question="Prove that such a tiling does not exist")
        kept, removed, reasons = filter_heuristic([pair])
        assert kept == [] and removed == [pair]
        assert reasons["p"].startswith("proof:")

    def test_boxed_question_kept(self):
        pair = make_pair("k", question="Find $x$",
                         answers=(boxed(2), boxed(2)))
        kept, _removed, _reasons = filter_heuristic([pair])
        assert kept == [pair]

    def test_single_boxed_rewrite_kept_for_crosscheck(self):
        pair = make_pair("half", question="Evaluate the sum",
                         answers=(boxed(2), "no final value"))
        kept, _removed, _reasons = filter_heuristic([pair])
        assert kept == [pair]

    def test_no_boxed_anywhere_removed(self):
        pair = make_pair("nb", question="Evaluate the sum",
                         answers=("nothing", "still nothing"))
        _kept, removed, reasons = filter_heuristic([pair])
        assert removed and reasons["nb"] == "no_boxed_answer"


class TestMergeDuplicates:
    def test_whitespace_variants_merge(self):
        a = make_pair("a", question="Find   the value of $n$.")
        b = make_pair("b", question="Find the value of $n$.")
        groups = merge_duplicates([a, b])
        assert len(groups) == 1 and len(groups[0]) == 2

    def test_distinct_stay_apart(self):
        pairs = [make_pair(f"d{i}", question=f"Question number {i}") for i in range(10)]
        assert len(merge_duplicates(pairs)) == 10


class TestCrossCheck:
    def test_full_agreement(self):
        keep, answers = cross_check(CrossCheckTriplet("q", "12", "12", "12"))
        assert keep and answers == ("12",)

    def test_inconsistent_discarded(self):
        keep, answers = cross_check(CrossCheckTriplet("q", "12", "13", "12"))
        assert not keep and answers == ()

    def test_original_disagrees_multi_answer(self):
        keep, answers = cross_check(CrossCheckTriplet("q", "12", "12", "45"))
        assert keep and set(answers) == {"12", "45"}
        assert len(answers) == 2

    def test_one_missing_discarded(self):
        keep, _ = cross_check(CrossCheckTriplet("q", "12", None, "12"))
        assert not keep

    def test_both_missing_invalid(self):
        with pytest.raises(ValueError):
            cross_check(CrossCheckTriplet("q", None, None, "12"))

    def test_equivalent_not_identical_agreement(self):
        keep, answers = cross_check(
            CrossCheckTriplet("q", "0.5", "\\frac{1}{2}", None)
        )
        assert keep and answers == ("0.5",)  # shorter normalized representative

    def test_candidates_deduplicated_under_equivalence(self):
        keep, answers = cross_check(
            CrossCheckTriplet("q", "\\frac{1}{2}", "0.5", "0.5")
        )
        assert keep and answers == ("0.5",)


CONTAM_RUN = "alpha beta gamma delta epsilon zeta eta theta iota kappa"


def funnel_fixture():
    """40 pairs: 4 contaminated, 3 proof + 3 unboxed, 10 merge-away
    duplicates, 5 cross-check failures -> 15 bench items."""
    pairs = []
    # 4 contaminated (share an 8-gram run with the train corpus)
    for i in range(4):
        pairs.append(make_pair(f"c{i}", question=f"{CONTAM_RUN} variant {i}",
                               answers=(boxed(1), boxed(1))))
    # 3 proof questions
    for i in range(3):
        pairs.append(make_pair(f"p{i}", question=f"Prove that claim {i} holds",
                               answers=(boxed(1), boxed(1))))
    # 3 with no boxed rewrite at all
    for i in range(3):
        pairs.append(make_pair(f"n{i}", question=f"Evaluate series {i}",
                               answers=("no box", "none here")))
    # 10 duplicate pairs: 10 questions x 2 whitespace variants
    for i in range(10):
        q = f"Compute quantity {i} precisely"
        pairs.append(make_pair(f"da{i}", question=q, answers=(boxed(i), boxed(i))))
        pairs.append(make_pair(f"db{i}", question=q.replace(" ", "  "),
                               answers=(boxed(i), boxed(i))))
    # 10 singletons, 5 of which fail cross-check
    for i in range(5):
        pairs.append(make_pair(f"s{i}", question=f"Determine value {i} exactly",
                               answers=(boxed(i), boxed(i))))
    for i in range(5, 8):
        pairs.append(make_pair(f"s{i}", question=f"Determine value {i} exactly",
                               answers=(boxed(i), boxed(i + 1))))  # disagree
    for i in range(8, 10):
        pairs.append(make_pair(f"s{i}", question=f"Determine value {i} exactly",
                               answers=(boxed(i), "unboxed text")))  # one missing
    assert len(pairs) == 40
    train_corpus = [tokenize(f"{CONTAM_RUN} trailing words", doc_id="train")]
    index = build_index(train_corpus, 8)
    return pairs, index


class TestBuildBench:
    def test_funnel_ledger(self):
        pairs, index = funnel_fixture()
        items, report = build_bench(pairs, [index])
        chain = [(s.count_in, s.count_out) for s in report.stages]
        assert chain == [(40, 36), (36, 30), (30, 20), (20, 15)]
        assert len(items) == 15

    def test_empty_input(self):
        _pairs, index = funnel_fixture()
        items, report = build_bench([], [index])
        assert items == []
        assert all(s.count_in == 0 for s in report.stages)

    def test_order_invariance(self):
        pairs, index = funnel_fixture()
        a, _ = build_bench(pairs, [index])
        b, _ = build_bench(list(reversed(pairs)), [index])
        assert [i.question_id for i in a] == [i.question_id for i in b]
        assert a == b

    def test_final_answers_pairwise_nonequivalent(self):
        pairs, index = funnel_fixture()
        items, _ = build_bench(pairs, [index])
        for item in items:
            answers = item.final_answers
            for i in range(len(answers)):
                for j in range(i + 1, len(answers)):
                    assert not equivalent(answers[i], answers[j]).equivalent

    def test_multi_answer_flag(self):
        pair = make_pair("m", question="Find the odd case",
                         answers=(boxed(12), boxed(12)),
                         raw_text="the original claims $\\boxed{45}$")
        _pairs, index = funnel_fixture()
        items, _ = build_bench([pair], [index])
        assert len(items) == 1
        assert items[0].multi_answer is True
        assert set(items[0].final_answers) == {"12", "45"}

    def test_month_counts_sum_to_bench_size(self):
        pairs, index = funnel_fixture()
        items, _ = build_bench(pairs, [index])
        stats = dataset_stats(items)
        assert sum(stats["questions_per_month"].values()) == len(items)


class TestDatasetStats:
    def test_histogram_percentages(self):
        pairs, index = funnel_fixture()
        items, _ = build_bench(pairs, [index])
        # fabricate a 10-item view: 7 single-answer, 3 double
        import dataclasses

        ten = [dataclasses.replace(items[i], final_answers=("1",)) for i in range(7)]
        ten += [
            dataclasses.replace(items[7 + i], final_answers=("1", "2"))
            for i in range(3)
        ]
        stats = dataset_stats(ten)
        assert stats["answers_per_question"]["1"]["pct"] == 70.0
        assert stats["answers_per_question"]["2"]["pct"] == 30.0
        assert stats["total"] == 10

    def test_totals_conserved(self):
        pairs, index = funnel_fixture()
        items, _ = build_bench(pairs, [index])
        stats = dataset_stats(items)
        assert sum(stats["difficulty"].values()) == len(items)
        assert sum(stats["answer_type"].values()) == len(items)
        assert sum(stats["questions_per_year"].values()) == len(items)


class TestBenchFile:
    def test_header_and_round_trip(self, tmp_path):
        pairs, index = funnel_fixture()
        items, _ = build_bench(pairs, [index])
        buf = io.StringIO()
        write_bench(items, buf, bench_version="2024-08", pipeline_hash="abc123",
                    built_at=1700000000)
        path = tmp_path / "bench.jsonl"
        path.write_text(buf.getvalue())
        header, loaded = read_bench(path)
        assert header["bench_version"] == "2024-08"
        assert header["pipeline_hash"] == "abc123"
        assert header["built_at"] == 1700000000
        assert loaded == items

    def test_item_dict_round_trip(self):
        pairs, index = funnel_fixture()
        items, _ = build_bench(pairs, [index])
        for item in items:
            assert bench_item_from_dict(bench_item_to_dict(item)) == item
