from __future__ import annotations

import csv
import io
import json

import pytest

from dbqa_bench.evaluation import (
    IMPERFECT,
    PERFECT,
    InstanceEval,
    MetaVerdict,
    RefVerdict,
    ReviewVerdict,
    SubtaskEval,
)
from dbqa_bench.metrics import (
    build_metrics,
    correlation_bins,
    merge_tables,
    render_bins_csv,
    render_tables,
)
from dbqa_bench.model import Step, Transcript
from dbqa_bench.prompts import SUBTASK_KINDS, SUBTASK_SYNTHESIS
from dbqa_bench.strategies import StrategyOutcome, SubTaskRecord, recompute_stats


def make_outcome(
    qid: str,
    plan_words: int = 0,
    sql_valid: list[bool] = (),
    answer_words: int = 5,
    aborted: str | None = None,
    strategy: str = "sequential",
) -> StrategyOutcome:
    steps: list[Step] = []
    if plan_words:
        steps.append(Step(kind="plan", content=" ".join(["w"] * plan_words)))
    for valid in sql_valid:
        steps.append(Step(kind="sql", content="SELECT 1"))
        rendering = (
            "Status: ok\nColumns: c\nRows (1):\n1" if valid else "Status: ok\nColumns: c\nRows (0):"
        )
        steps.append(Step(kind="sql_result", content=rendering))
    if aborted is None:
        answer = " ".join(["a"] * answer_words)
        steps.append(Step(kind="final_answer", content=answer))
        transcript = Transcript(
            question_id=qid, strategy=strategy, model_id="m1", steps=tuple(steps), final_answer=answer
        )
        records = (SubTaskRecord(SUBTASK_SYNTHESIS, "bundle", answer, 0),)
    else:
        transcript = Transcript(
            question_id=qid, strategy=strategy, model_id="m1", steps=(), aborted_reason=aborted
        )
        records = ()
    return StrategyOutcome(transcript, records, recompute_stats(transcript))


def make_eval(
    qid: str,
    match: bool | None = None,
    score: int | None = None,
    decisions: dict[str, tuple[list[str], list[str]]] | None = None,
) -> InstanceEval:
    if match is not None:
        verdict = RefVerdict(qid, "match_binary", match, None, "r", "raw")
    elif score is not None:
        verdict = RefVerdict(qid, "score_1_5", None, score, "r", "raw")
    else:
        verdict = None
    subtasks = {}
    for kind, (reviews, metas) in (decisions or {}).items():
        review_verdicts = tuple(
            ReviewVerdict(kind, i, d, "r", "raw") for i, d in enumerate(reviews, start=1)
        )
        meta_verdicts = tuple(
            MetaVerdict(kind, i, d, "r", tuple(range(1, len(reviews) + 1)), "raw")
            for i, d in enumerate(metas, start=1)
        )
        n_perfect = sum(1 for d in metas if d == PERFECT)
        subtasks[kind] = SubtaskEval(
            reviews=review_verdicts,
            metas=meta_verdicts,
            final=PERFECT if n_perfect * 2 > len(metas) else IMPERFECT,
            reviewer_agreement=len(set(reviews)) == 1,
            meta_agreement=len(set(metas)) == 1,
        )
    return InstanceEval(qid, verdict, None, subtasks)


def test_match_rate_arithmetic() -> None:
    outcomes = {f"q{i}": make_outcome(f"q{i}") for i in range(4)}
    categories = {f"q{i}": "conclusive" for i in range(4)}
    evals = {
        "q0": make_eval("q0", match=True),
        "q1": make_eval("q1", match=True),
        "q2": make_eval("q2", match=False),
        "q3": make_eval("q3", match=True),
    }
    table = build_metrics("m1", "sequential", outcomes, categories, evals)
    assert table.interaction_rows[0].conclusive.match_rate == 0.75


def test_mean_score_arithmetic() -> None:
    outcomes = {f"q{i}": make_outcome(f"q{i}") for i in range(3)}
    categories = {f"q{i}": "interpretive" for i in range(3)}
    evals = {
        "q0": make_eval("q0", score=2),
        "q1": make_eval("q1", score=3),
        "q2": make_eval("q2", score=4),
    }
    table = build_metrics("m1", "sequential", outcomes, categories, evals)
    assert table.interaction_rows[0].interpretive.mean_score == 3.0


def test_interaction_means_match_hand_computation() -> None:
    # derived by hand from the constructed transcripts before implementation:
    # plans 30/40/50 -> 40; sql 2/3/4 -> 3; valid 1/2/3 -> 2; answers 10/20/30 -> 20
    outcomes = {
        "q0": make_outcome("q0", plan_words=30, sql_valid=[True, False], answer_words=10),
        "q1": make_outcome("q1", plan_words=40, sql_valid=[True, True, False], answer_words=20),
        "q2": make_outcome("q2", plan_words=50, sql_valid=[True, True, True, False], answer_words=30),
    }
    categories = {qid: "conclusive" for qid in outcomes}
    evals = {qid: make_eval(qid, match=True) for qid in outcomes}
    aggregate = build_metrics("m1", "sequential", outcomes, categories, evals).interaction_rows[0].conclusive
    assert aggregate.mean_plan_words == 40.0
    assert aggregate.mean_n_sql == 3.0
    assert aggregate.mean_n_valid_sql == 2.0
    assert aggregate.mean_answer_words == 20.0


def test_overflow_exclusion_and_conservation() -> None:
    outcomes = {
        "q0": make_outcome("q0"),
        "q1": make_outcome("q1", aborted="context_overflow"),
        "q2": make_outcome("q2", aborted="provider_error"),
        "q3": make_outcome("q3"),
    }
    categories = {qid: "conclusive" for qid in outcomes}
    evals = {"q0": make_eval("q0", match=True), "q3": make_eval("q3", match=False)}
    aggregate = build_metrics("m1", "none", outcomes, categories, evals).interaction_rows[0].conclusive
    assert aggregate.match_rate == 0.5
    assert aggregate.excluded_overflow == 1
    assert aggregate.excluded_other == 1
    assert aggregate.included + aggregate.excluded_overflow + aggregate.excluded_other == 4


def test_ref_parse_failures_reported_separately() -> None:
    outcomes = {"q0": make_outcome("q0"), "q1": make_outcome("q1")}
    categories = {"q0": "interpretive", "q1": "interpretive"}
    evals = {"q0": make_eval("q0", score=4)}  # q1 has no usable ref verdict
    aggregate = build_metrics("m1", "sequential", outcomes, categories, evals).interaction_rows[0].interpretive
    assert aggregate.mean_score == 4.0
    assert aggregate.ref_parse_failures == 1


def test_subtask_tier_metrics() -> None:
    P, I = PERFECT, IMPERFECT
    outcomes = {"q0": make_outcome("q0"), "q1": make_outcome("q1")}
    categories = {"q0": "conclusive", "q1": "conclusive"}
    evals = {
        "q0": make_eval("q0", match=True, decisions={SUBTASK_SYNTHESIS: ([P, P, I], [P, P, P])}),
        "q1": make_eval("q1", match=True, decisions={SUBTASK_SYNTHESIS: ([I, I, I], [I, I, P])}),
    }
    table = build_metrics("m1", "sequential", outcomes, categories, evals)
    row = table.subtask_rows[0]
    assert row.subtask_kind == SUBTASK_SYNTHESIS
    assert row.instances == 2
    assert row.reviewer_vote_fraction == pytest.approx(2 / 6)
    assert row.reviewer_majority_fraction == 0.5
    assert row.reviewer_agreement == 0.5  # only q1's reviewers are unanimous
    assert row.meta_vote_fraction == pytest.approx(4 / 6)
    assert row.meta_majority_fraction == 0.5
    assert row.meta_agreement == 0.5


def test_correlation_bins_example() -> None:
    valid_counts = [0, 0, 1, 2, 3]
    outcomes = {
        f"q{i}": make_outcome(f"q{i}", sql_valid=[True] * count)
        for i, count in enumerate(valid_counts)
    }
    categories = {qid: "conclusive" for qid in outcomes}
    evals = {qid: make_eval(qid, match=True) for qid in outcomes}
    bins = correlation_bins(outcomes, categories, evals, [0, 1, 2, 4])
    counts = [b.count for b in bins["conclusive"]]
    assert counts == [2, 1, 2]
    assert sum(counts) == len(valid_counts)


def test_correlation_bins_empty_run() -> None:
    bins = correlation_bins({}, {}, {}, [0, 1, 2])
    assert all(b.count == 0 and b.value is None for b in bins["conclusive"])
    assert all(b.count == 0 for b in bins["interpretive"])


def test_correlation_bins_monotone_fixture() -> None:
    # quality rises with validity by construction -> per-bin means non-decreasing
    settings = [(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (3, 5)]
    outcomes = {}
    categories = {}
    evals = {}
    for i, (valid, score) in enumerate(settings):
        qid = f"q{i}"
        outcomes[qid] = make_outcome(qid, sql_valid=[True] * valid)
        categories[qid] = "interpretive"
        evals[qid] = make_eval(qid, score=score)
    bins = correlation_bins(outcomes, categories, evals, [0, 1, 2, 3, 4])
    values = [b.value for b in bins["interpretive"] if b.value is not None]
    assert values == sorted(values)


def test_correlation_bins_bad_edges() -> None:
    with pytest.raises(ValueError):
        correlation_bins({}, {}, {}, [1, 1, 2])
    with pytest.raises(ValueError):
        correlation_bins({}, {}, {}, [3])


def _small_table():
    outcomes = {
        "q0": make_outcome("q0", plan_words=4, sql_valid=[True], answer_words=8),
        "q1": make_outcome("q1", plan_words=6, sql_valid=[True, False], answer_words=12),
    }
    categories = {"q0": "conclusive", "q1": "interpretive"}
    P = PERFECT
    evals = {
        "q0": make_eval("q0", match=True, decisions={SUBTASK_SYNTHESIS: ([P, P, P], [P, P, P])}),
        "q1": make_eval("q1", score=4, decisions={SUBTASK_SYNTHESIS: ([P, P, P], [P, P, P])}),
    }
    return build_metrics("m1", "sequential", outcomes, categories, evals)


def test_markdown_render_has_table2_headers() -> None:
    text = render_tables(_small_table(), format="markdown")
    assert "# Valid SQLs" in text
    assert "Match Score (C/I)" in text
    assert "1.0 / 4.0" in text  # match rate / mean score pair


def test_csv_round_trips() -> None:
    table = _small_table()
    text = render_tables(table, format="csv")
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    assert header[2] == "Match Score (C/I)"
    data = rows[1]
    row = table.interaction_rows[0]
    assert data[0] == row.model_id
    assert data[2] == f"{row.conclusive.match_rate!r} / {row.interpretive.mean_score!r}"
    blank = rows.index([])
    sub_header = rows[blank + 1]
    assert sub_header[2] == "Sub-Task"
    assert rows[blank + 2][3] == repr(table.subtask_rows[0].reviewer_vote_fraction)


def test_json_round_trips_to_table_fields() -> None:
    table = _small_table()
    data = json.loads(render_tables(table, format="json"))
    row = data["interaction"][0]
    assert row["model_id"] == "m1"
    assert row["conclusive"]["match_rate"] == table.interaction_rows[0].conclusive.match_rate
    assert data["subtasks"][0]["meta_agreement"] == table.subtask_rows[0].meta_agreement


def test_render_rejects_unknown_format() -> None:
    with pytest.raises(ValueError):
        render_tables(_small_table(), format="xml")


def test_merge_tables_concatenates_rows() -> None:
    merged = merge_tables([_small_table(), _small_table()])
    assert len(merged.interaction_rows) == 2
    assert len(merged.subtask_rows) == 2


def test_bins_csv_renders() -> None:
    outcomes = {"q0": make_outcome("q0", sql_valid=[True])}
    bins = correlation_bins(outcomes, {"q0": "conclusive"}, {"q0": make_eval("q0", match=True)}, [0, 1, 2])
    text = render_bins_csv(bins)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["category", "bin_low", "bin_high", "count", "value"]
    assert len(rows) == 5  # header + 2 bins x 2 categories
