"""Acceptance gate: one test per top-level criterion, one pass/fail line each."""

import contextlib
import random
import time
from fractions import Fraction

from fastapi.testclient import TestClient

from mathpipe.annotate import (
    QuestionView,
    agreement_report,
    build_store,
    build_tasks,
    create_app,
    sample_subset,
)
from mathpipe.answer_ast import Add, Mul, Pow, Sym, canon, rat, to_string
from mathpipe.answer_engine import equivalent
from mathpipe.bench import CrossCheckTriplet, cross_check
from mathpipe.decontam import TokenStream, build_index, flag_contaminated, naive_flagged
from mathpipe.funnel import FunnelReport
from mathpipe.harness import drop_metric
from mathpipe.sft import ChatTemplate

from smoke_util import run_smoke
from test_answer_engine import GOLDEN
from test_bench import funnel_fixture
from test_harness import DROP_ROWS


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


def test_drop_metric_reproduction():
    with criterion("drop-metric reproduction within ±0.1 on all reference rows"):
        start = time.time()
        for old, new, expected in DROP_ROWS:
            got = drop_metric(old, new)
            assert got is not None
            assert abs(got - expected) <= 0.1, (old, new, got, expected)
        assert time.time() - start < 1.0


MONTHLY_2024 = [634, 527, 614, 503, 511, 380, 363, 331]
DIFFICULTY_2024 = [286, 1349, 314, 889, 1025]
ANSWER_TYPES_2024 = [296, 950, 195, 57, 2114, 176, 75]
MONTHLY_2023 = [483, 388, 444, 415, 472, 412, 396, 505, 381, 409, 404, 507]


def test_count_conservation_reference_marginals():
    with criterion("count conservation across report marginals"):
        start = time.time()
        assert sum(MONTHLY_2024) == 3863
        assert sum(DIFFICULTY_2024) == 3863
        assert sum(ANSWER_TYPES_2024) == 3863
        assert sum(MONTHLY_2023) == 5216
        # the report schema enforces the same conservation rule
        from mathpipe.harness import MetricsReport

        report = MetricsReport(
            model_id="m",
            total=3863,
            correct=0,
            by_month=tuple(
                (f"2024-{i + 1:02d}", c, 0.0) for i, c in enumerate(MONTHLY_2024)
            ),
            by_difficulty=tuple(
                (str(i), c, 0.0) for i, c in enumerate(DIFFICULTY_2024)
            ),
            by_answer_type=tuple(
                (str(i), c, 0.0) for i, c in enumerate(ANSWER_TYPES_2024)
            ),
        )
        for slices in (report.by_month, report.by_difficulty, report.by_answer_type):
            assert sum(c for _k, c, _a in slices) == report.total
        assert time.time() - start < 1.0


def test_funnel_arithmetic():
    with criterion("funnel arithmetic (reference chain + 40-pair fixture)"):
        chain = FunnelReport()
        chain.add_stage("boxed_and_heuristics", 14158, 13494)
        assert 14158 - 664 == 13494 >= 7173
        chain.add_stage("decontam_8gram", 13494, 7173)
        chain.add_stage("merge_duplicates", 7173, 5416)
        chain.add_stage("cross_check", 5416, 3863)
        assert 5416 - 1553 == 3863
        assert chain.final_count == 3863
        # synthetic 40-pair fixture reproduces its hand-built ledger
        from mathpipe.bench import build_bench

        pairs, index = funnel_fixture()
        items, report = build_bench(pairs, [index])
        ledger = [(s.count_in, s.count_out) for s in report.stages]
        assert ledger == [(40, 36), (36, 30), (30, 20), (20, 15)]
        assert len(items) == 15


def _random_stream(rng, vocab, length, doc_id):
    return TokenStream(
        tokens=tuple(rng.choice(vocab) for _ in range(length)), doc_id=doc_id
    )


def test_decontamination_oracle_equivalence():
    with criterion("decontamination matches brute-force oracle on 20 trials"):
        start = time.time()
        rng = random.Random(2024)
        for trial in range(20):
            vocab = [f"w{trial}_{i}" for i in range(300)]
            corpus = [
                _random_stream(rng, vocab, rng.randrange(80, 120), f"c{i}")
                for i in range(500)
            ]
            query = [
                _random_stream(rng, vocab, rng.randrange(80, 120), f"q{i}")
                for i in range(500)
            ]
            # implant shared runs of varying length into ~10% of queries
            for k in range(50):
                src = rng.choice(corpus)
                run_len = rng.randrange(8, 13)
                off = rng.randrange(0, len(src.tokens) - run_len)
                shared = src.tokens[off : off + run_len]
                target = query[rng.randrange(len(query))]
                pos = rng.randrange(0, len(target.tokens) - run_len)
                new_tokens = (
                    target.tokens[:pos] + shared + target.tokens[pos + run_len :]
                )
                query[query.index(target)] = TokenStream(
                    tokens=new_tokens, doc_id=target.doc_id
                )
            flagged = {}
            for n in (8, 10):
                index = build_index(corpus, n)
                got = flag_contaminated(query, index).flagged_ids()
                assert got == naive_flagged(query, corpus, n), f"trial {trial} n={n}"
                flagged[n] = got
            assert flagged[10] <= flagged[8], f"monotonicity broke in trial {trial}"
        assert time.time() - start < 30.0


def _gen_expr(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        pick = rng.randrange(3)
        if pick == 0:
            return rat(rng.randint(-9, 9))
        if pick == 1:
            return Sym(rng.choice("xy"))
        return rat(Fraction(rng.randint(1, 7), rng.randint(1, 7)))
    pick = rng.randrange(3)
    if pick == 0:
        return Add((_gen_expr(rng, depth - 1), _gen_expr(rng, depth - 1)))
    if pick == 1:
        return Mul((_gen_expr(rng, depth - 1), _gen_expr(rng, depth - 1)))
    return Pow(_gen_expr(rng, depth - 1), rat(rng.randint(0, 3)))


def test_equivalence_golden_suite_and_properties():
    with criterion("equivalence golden suite + 10,000-AST properties"):
        start = time.time()
        assert len(GOLDEN) >= 50
        for a, b, expect, _method in GOLDEN:
            assert equivalent(a, b).equivalent is expect, (a, b)
            assert equivalent(b, a).equivalent is expect, (b, a)
        rng = random.Random(7)
        rendered = [
            to_string(canon(_gen_expr(rng, 3))) for _ in range(10_000)
        ]
        for raw in rendered:
            assert equivalent(raw, raw).equivalent, raw  # reflexivity
        for a, b in zip(rendered[::2], rendered[1::2]):  # symmetry
            assert (
                equivalent(a, b).equivalent == equivalent(b, a).equivalent
            ), (a, b)
        assert time.time() - start < 60.0


def test_cross_check_contract():
    with criterion("cross-check keep-iff-boxed-and-equivalent contract"):
        pool = ["12", "13", "0.5", "\\frac{1}{2}", None]
        rng = random.Random(5)
        for _ in range(300):
            a_qwen = rng.choice(pool)
            a_llama = rng.choice(pool)
            a_orig = rng.choice(pool)
            if a_qwen is None and a_llama is None:
                continue
            keep, answers = cross_check(
                CrossCheckTriplet("q", a_qwen, a_llama, a_orig)
            )
            should_keep = (
                a_qwen is not None
                and a_llama is not None
                and equivalent(a_qwen, a_llama).equivalent
            )
            assert keep == should_keep
            if keep:
                assert answers
                for i in range(len(answers)):
                    for j in range(i + 1, len(answers)):
                        assert not equivalent(answers[i], answers[j]).equivalent
        keep, answers = cross_check(CrossCheckTriplet("q", "12", "12", "45"))
        assert keep and len(answers) == 2 and set(answers) == {"12", "45"}


def test_end_to_end_smoke(tmp_path):
    with criterion("end-to-end pipeline deterministic under replay fixtures"):
        start = time.time()
        first = run_smoke(tmp_path / "a")
        second = run_smoke(tmp_path / "b")
        assert first == second
        assert "bench.jsonl" in first and "board/leaderboard.json" in first
        assert time.time() - start < 60.0


def test_sft_template_bit_exact():
    with criterion("chat template renders reference string byte-for-byte"):
        rendered = ChatTemplate().render("Find x", "x=2")
        assert rendered == "<s>[INST] Find x [/INST]x=2"


def test_secondary_annotation_loop(tmp_path):
    with criterion("annotation loop over HTTP (sampling, verdicts, agreement)"):
        ids = [f"q{i}" for i in range(3863)]
        assert len(sample_subset(ids, 0.1, seed=3)) == 386
        # service over a small sampled bench; driven purely via the HTTP API
        questions = [
            QuestionView(
                question_id=f"q{i}",
                question_text=f"Question {i}",
                final_answers=(str(i),),
            )
            for i in range(8)
        ]
        store = build_store(
            questions, ["ann1", "ann2"], log_path=tmp_path / "log.jsonl"
        )
        client = TestClient(create_app(store))
        values = ["yes", "no", "no_answer", "not_sure"]
        listed = client.get("/api/tasks", params={"annotator": "ann1"}).json()
        assert len(listed["tasks"]) == 8
        for i, task in enumerate(store.tasks.values()):
            resp = client.post("/api/verdict", json={
                "task_id": task.task_id,
                "annotator": task.assigned_to,
                "value": values[i % 4],
            })
            assert resp.status_code == 200
        report = client.get("/api/report").json()
        assert report["verdicts_total"] == 16
        # reference 92/5/3/0 split
        tasks = build_tasks(
            [QuestionView(f"g{i}", "q", ("1",)) for i in range(50)], ["x", "y"]
        )
        dist = ["yes"] * 92 + ["no"] * 5 + ["no_answer"] * 3
        verdicts = {t.task_id: v for t, v in zip(tasks, dist)}
        ref = agreement_report(tasks, verdicts)
        assert (ref["pct_yes"], ref["pct_no"], ref["pct_no_answer"],
                ref["pct_not_sure"]) == (92.0, 5.0, 3.0, 0.0)
        # hand-built 70% agreement fixture
        tasks = build_tasks(
            [QuestionView(f"h{i}", "q", ("1",)) for i in range(10)], ["x", "y"]
        )
        by_q = {}
        for t in tasks:
            by_q.setdefault(t.question_id, []).append(t)
        verdicts = {}
        for i, pair in enumerate(by_q.values()):
            verdicts[pair[0].task_id] = "yes"
            verdicts[pair[1].task_id] = "yes" if i < 7 else "no"
        assert agreement_report(tasks, verdicts)["inter_annotator_agreement"] == 70.0
