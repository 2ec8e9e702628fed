import csv

import pytest
from hypothesis import given, strategies as st

from icdrr.corpus import CodeTable, IcdEntry, normalize_code
from icdrr.errors import InvalidConfig, SampleTooLarge
from icdrr.evaluation import (
    CSV_HEADER,
    EvalRecord,
    MatchMode,
    SplitMix64,
    System,
    compare_records,
    match_codes,
    read_results_csv,
    results_csv_bytes,
    run_experiment,
    sample_entries,
    summarize,
    write_results_csv,
)
from icdrr.pipeline import PipelineConfig
from icdrr.retrieval import build_index


def code(s):
    return normalize_code(s)


def test_splitmix64_reference_values():
    # first outputs for seed 1234567 from the reference C splitmix64.c
    rng = SplitMix64(1234567)
    assert [rng.next() for _ in range(5)] == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ]


def test_below_is_in_range():
    rng = SplitMix64(0)
    assert all(0 <= rng.below(7) < 7 for _ in range(1000))
    assert {rng.below(3) for _ in range(200)} == {0, 1, 2}


def test_sample_full_permutation(fixture_table):
    sample = sample_entries(fixture_table, len(fixture_table), seed=1)
    assert sorted(e.code for e in sample) == sorted(e.code for e in fixture_table)


def test_sample_deterministic(fixture_table):
    a = sample_entries(fixture_table, 100, 42)
    assert a == sample_entries(fixture_table, 100, 42)
    assert a != sample_entries(fixture_table, 100, 43)


def test_sample_frozen_prefix(fixture_table):
    # indices 1153, 1889, 1860, 740, 380 from an independent C implementation of
    # SplitMix64 + rejection-sampled partial Fisher-Yates (N=2002, n=5, seed=42)
    assert [e.code.normalized for e in sample_entries(fixture_table, 5, 42)] == [
        "S49142", "T82211A", "T444X", "S32444A", "S06349S",
    ]


def test_sample_distinct_codes(fixture_table):
    sample = sample_entries(fixture_table, 100, 42)
    assert len({e.code for e in sample}) == 100


def test_sample_too_large(toy_table):
    with pytest.raises(SampleTooLarge):
        sample_entries(toy_table, 4, 42)


def test_sample_is_roughly_uniform():
    table = CodeTable(IcdEntry(code(f"A{i:02d}"), f"d{i}") for i in range(10))
    hits = [0] * 10
    for seed in range(3000):
        for e in sample_entries(table, 3, seed):
            hits[int(e.code.normalized[1:])] += 1
    # expected 900 per entry; binomial sd ~26
    assert all(800 < h < 1000 for h in hits)


@pytest.mark.parametrize(
    "pred, truth, exact, category",
    [
        ("T39011A", "T39011A", True, True),
        ("S62002A", "S62036A", False, True),
        ("S59102P", "S49129P", False, False),
        ("T310", "T2100XS", False, False),
        ("S069X0A", "S06335A", False, True),
    ],
)
def test_match_codes(pred, truth, exact, category):
    assert match_codes(code(pred), code(truth), MatchMode.EXACT) is exact
    assert match_codes(code(pred), code(truth), "category") is category


def test_match_none():
    assert not match_codes(None, code("A00"), MatchMode.CATEGORY)


def test_record_invariants():
    with pytest.raises(ValueError):
        EvalRecord(System.VANILLA, "q", code("A00"), code("A00"), True, False)
    with pytest.raises(ValueError):
        EvalRecord(System.VANILLA, "q", code("A00"), None, False, True)


@given(st.sampled_from(["A00", "A000", "A001", "B00", "S62036A", "S62002A"]),
       st.sampled_from(["A00", "A000", "S62036A"]))
def test_exact_implies_category(pred, truth):
    rec = EvalRecord.score(System.RETRIEVE_RANK, "q", code(truth), code(pred))
    assert not rec.exact_match or rec.category_match


def test_summary_is_mean_of_flags():
    recs = [
        EvalRecord.score(System.RETRIEVE_RANK, "a", code("A00"), code("A00")),
        EvalRecord.score(System.RETRIEVE_RANK, "b", code("A01"), code("A019")),
        EvalRecord.score(System.RETRIEVE_RANK, "c", code("A02"), None),
    ]
    s = summarize(recs, seed=9)
    rr = s.per_system[System.RETRIEVE_RANK]
    assert s.n == 3 and s.seed == 9
    assert rr.exact_accuracy == 1 / 3 and rr.category_accuracy == 2 / 3
    assert rr.no_code == 1
    assert s.exact_accuracy <= s.category_accuracy


def test_csv_header_only(tmp_path):
    path = tmp_path / "r.csv"
    write_results_csv([], path)
    assert path.read_bytes() == b"system,condition,true_code,predicted_code,exact_match,category_match,fallback_used\r\n"


def test_csv_roundtrip(tmp_path):
    recs = [
        EvalRecord.score(System.RETRIEVE_RANK, "Poisoning by aspirin, accidental (unintentional), initial encounter",
                         code("T39011A"), code("T39011A")),
        EvalRecord.score(System.VANILLA, 'quote "inside", comma', code("T2100XS"), code("T310"), True),
        EvalRecord.score(System.VANILLA, "no code", code("A00"), None),
    ]
    path = tmp_path / "r.csv"
    write_results_csv(recs, path)
    assert read_results_csv(path) == recs
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_HEADER
    assert rows[1] == ["retrieve_rank", recs[0].query, "T39011A", "T39011A", "true", "true", "false"]
    assert rows[3][3] == ""


def test_run_experiment_requires_systems(fixture_table, fixture_index):
    with pytest.raises(InvalidConfig):
        run_experiment(fixture_table, fixture_index, systems=[])


def test_run_experiment_requires_client_for_vanilla(fixture_table, fixture_index):
    with pytest.raises(InvalidConfig):
        run_experiment(fixture_table, fixture_index, systems=["vanilla"], n=2)


def test_run_experiment_rr(fixture_table, fixture_index, tmp_path):
    out = tmp_path / "r.csv"
    records, summary = run_experiment(fixture_table, fixture_index, n=50, seed=42, out=out)
    assert len(records) == 50 and summary.n == 50
    assert [r.true_code for r in records] == [e.code for e in sample_entries(fixture_table, 50, 42)]
    assert read_results_csv(out) == records
    for r in records:
        assert not r.exact_match or r.category_match


def test_run_experiment_parallel_matches_serial(fixture_table, fixture_index):
    serial, _ = run_experiment(fixture_table, fixture_index, n=60, seed=5)
    parallel, _ = run_experiment(fixture_table, fixture_index, n=60, seed=5, workers=4)
    assert results_csv_bytes(serial) == results_csv_bytes(parallel)


def test_run_experiment_records_reranker_failures(fixture_table, fixture_index, mock_chat):
    mock_chat.script = lambda payload: (500, "")
    with mock_chat.client(backoff_base=0.0) as client:
        records, summary = run_experiment(
            fixture_table, fixture_index, PipelineConfig(reranker="llm"), n=3, seed=1, client=client,
        )
    assert [r.predicted_code for r in records] == [None] * 3
    assert summary.per_system[System.RETRIEVE_RANK].no_code == 3


def test_reranker_cannot_demote_perfect_candidate(fixture_table, fixture_index):
    # lexical rerank vs. rank-1-only ablation, queries are indexed descriptions
    entries = sample_entries(fixture_table, 300, 11)
    records, _ = run_experiment(fixture_table, fixture_index, entries=entries)
    from icdrr.retrieval import retrieve_topk

    ablation = sum(retrieve_topk(fixture_index, e.long_description, 1)[0].code == e.code for e in entries)
    assert sum(r.exact_match for r in records) >= ablation


def test_compare_records():
    t = code("S49129P")
    recs = [
        EvalRecord.score(System.RETRIEVE_RANK, "salter", t, t),
        EvalRecord.score(System.VANILLA, "salter", t, code("S59102P")),
        EvalRecord.score(System.RETRIEVE_RANK, "aspirin", code("T39011A"), code("T39011A")),
        EvalRecord.score(System.VANILLA, "aspirin", code("T39011A"), code("T39011A")),
    ]
    rows = compare_records(recs)
    assert [(r.condition, r.correct_system) for r in rows] == [("salter", "Retrieve-Rank"), ("aspirin", "Both")]


def test_system_parse():
    assert System.parse("rr") is System.RETRIEVE_RANK
    assert System.parse("Vanilla") is System.VANILLA
    with pytest.raises(ValueError):
        System.parse("gpt4")


@pytest.mark.slow
def test_full_table_sample_misses_are_duplicate_collisions(full_table, full_index):
    # every exact miss must be an entry whose description text is shared with a
    # lower code (the tie-break then favours that code); nothing else may miss
    from collections import defaultdict

    from oracles import words

    groups = defaultdict(list)
    for e in full_table:
        groups[tuple(sorted(words(e.long_description)))].append(e.code.normalized)
    records, summary = run_experiment(full_table, full_index, n=100, seed=42)
    for r in records:
        group = groups[tuple(sorted(words(r.query)))]
        if r.exact_match:
            continue
        assert len(group) > 1 and r.predicted_code.normalized in group
        assert r.predicted_code.normalized < r.true_code.normalized
    collided = sum(1 for r in records if min(groups[tuple(sorted(words(r.query)))]) != r.true_code.normalized)
    assert summary.exact_accuracy == 1 - collided / 100
