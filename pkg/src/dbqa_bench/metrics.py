"""Aggregation of transcripts and evaluations into measurement tables.

Rows mirror the benchmark's reporting layout: one interaction row per
(model, strategy) with conclusive/interpretive column pairs, and one
sub-task row per (model, strategy, sub-task) with reviewer and
meta-reviewer tiers. Because the reviewer-level perfect rate is ambiguous
between vote counting and per-instance majorities, both are reported,
labelled distinctly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

from .evaluation import PERFECT, InstanceEval, compute_agreement
from .model import CONCLUSIVE, INTERPRETIVE
from .prompts import SUBTASK_KINDS
from .strategies import StrategyOutcome

SUBTASK_LABEL = {
    "interaction_planning": "IP",
    "tool_employment": "TE",
    "information_synthesis": "IS",
}


@dataclass(frozen=True)
class CategoryAggregate:
    included: int = 0
    excluded_overflow: int = 0
    excluded_other: int = 0
    ref_parse_failures: int = 0
    match_rate: float | None = None
    mean_score: float | None = None
    mean_plan_words: float | None = None
    mean_n_sql: float | None = None
    mean_n_valid_sql: float | None = None
    mean_answer_words: float | None = None


@dataclass(frozen=True)
class InteractionRow:
    model_id: str
    strategy: str
    conclusive: CategoryAggregate
    interpretive: CategoryAggregate


@dataclass(frozen=True)
class SubtaskRow:
    model_id: str
    strategy: str
    subtask_kind: str
    instances: int
    incomplete: int
    reviewer_vote_fraction: float | None
    reviewer_majority_fraction: float | None
    reviewer_agreement: float | None
    meta_vote_fraction: float | None
    meta_majority_fraction: float | None
    meta_agreement: float | None


@dataclass(frozen=True)
class MetricsTable:
    interaction_rows: tuple[InteractionRow, ...]
    subtask_rows: tuple[SubtaskRow, ...]
    integrity_issues: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "interaction_rows", tuple(self.interaction_rows))
        object.__setattr__(self, "subtask_rows", tuple(self.subtask_rows))
        object.__setattr__(self, "integrity_issues", tuple(self.integrity_issues))


@dataclass(frozen=True)
class BinStat:
    low: float
    high: float
    count: int
    value: float | None


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def _category_aggregate(
    category: str,
    outcomes: list[tuple[StrategyOutcome, str]],
    evals: dict[str, InstanceEval],
) -> CategoryAggregate:
    completed = []
    excluded_overflow = 0
    excluded_other = 0
    for outcome, qid in outcomes:
        reason = outcome.transcript.aborted_reason
        if reason == "context_overflow":
            excluded_overflow += 1
        elif reason is not None:
            excluded_other += 1
        else:
            completed.append((outcome, qid))

    matches: list[bool] = []
    scores: list[int] = []
    ref_failures = 0
    for outcome, qid in completed:
        ev = evals.get(qid)
        if ev is None or ev.ref_verdict is None:
            ref_failures += 1
            continue
        if ev.ref_verdict.kind == "match_binary":
            matches.append(bool(ev.ref_verdict.match))
        else:
            scores.append(int(ev.ref_verdict.score))

    stats = [o.stats for o, _ in completed]
    return CategoryAggregate(
        included=len(completed),
        excluded_overflow=excluded_overflow,
        excluded_other=excluded_other,
        ref_parse_failures=ref_failures,
        match_rate=(
            sum(1 for m in matches if m) / len(matches)
            if category == CONCLUSIVE and matches
            else None
        ),
        mean_score=_mean([float(s) for s in scores]) if category == INTERPRETIVE else None,
        mean_plan_words=_mean([float(s.plan_word_count) for s in stats]),
        mean_n_sql=_mean([float(s.n_sql_generated) for s in stats]),
        mean_n_valid_sql=_mean([float(s.n_sql_valid) for s in stats]),
        mean_answer_words=_mean([float(s.answer_word_count) for s in stats]),
    )


def _subtask_rows(
    model_id: str,
    strategy: str,
    outcomes: list[tuple[StrategyOutcome, str]],
    evals: dict[str, InstanceEval],
) -> list[SubtaskRow]:
    rows = []
    for kind in SUBTASK_KINDS:
        complete_evals = []
        incomplete = 0
        for _, qid in outcomes:
            ev = evals.get(qid)
            if ev is None or kind not in ev.subtasks:
                continue
            sub = ev.subtasks[kind]
            if sub.incomplete:
                incomplete += 1
            else:
                complete_evals.append(sub)
        if not complete_evals and not incomplete:
            continue

        review_sets = [[r.decision for r in sub.reviews] for sub in complete_evals]
        meta_sets = [[m.decision for m in sub.metas] for sub in complete_evals]
        all_review_votes = [d for decisions in review_sets for d in decisions]
        all_meta_votes = [d for decisions in meta_sets for d in decisions]

        def _vote_fraction(votes: list[str]) -> float | None:
            return sum(1 for v in votes if v == PERFECT) / len(votes) if votes else None

        def _majority_fraction(sets: list[list[str]]) -> float | None:
            if not sets:
                return None
            perfect = sum(
                1 for decisions in sets
                if sum(1 for d in decisions if d == PERFECT) * 2 > len(decisions)
            )
            return perfect / len(sets)

        rows.append(
            SubtaskRow(
                model_id=model_id,
                strategy=strategy,
                subtask_kind=kind,
                instances=len(complete_evals),
                incomplete=incomplete,
                reviewer_vote_fraction=_vote_fraction(all_review_votes),
                reviewer_majority_fraction=_majority_fraction(review_sets),
                reviewer_agreement=compute_agreement(review_sets) if review_sets else None,
                meta_vote_fraction=_vote_fraction(all_meta_votes),
                meta_majority_fraction=_majority_fraction(meta_sets),
                meta_agreement=compute_agreement(meta_sets) if meta_sets else None,
            )
        )
    return rows


def build_metrics(
    model_id: str,
    strategy: str,
    outcomes: dict[str, StrategyOutcome],
    categories: dict[str, str],
    evals: dict[str, InstanceEval],
    integrity_issues: tuple[str, ...] = (),
) -> MetricsTable:
    """Aggregate one run's artifacts (already loaded) into a table."""
    by_category: dict[str, list[tuple[StrategyOutcome, str]]] = {CONCLUSIVE: [], INTERPRETIVE: []}
    ordered = sorted(outcomes.items())
    for qid, outcome in ordered:
        by_category[categories[qid]].append((outcome, qid))

    row = InteractionRow(
        model_id=model_id,
        strategy=strategy,
        conclusive=_category_aggregate(CONCLUSIVE, by_category[CONCLUSIVE], evals),
        interpretive=_category_aggregate(INTERPRETIVE, by_category[INTERPRETIVE], evals),
    )
    sub_rows = _subtask_rows(model_id, strategy, [(o, qid) for qid, o in ordered], evals)
    return MetricsTable(
        interaction_rows=(row,),
        subtask_rows=tuple(sub_rows),
        integrity_issues=integrity_issues,
    )


def merge_tables(tables: list[MetricsTable]) -> MetricsTable:
    return MetricsTable(
        interaction_rows=tuple(r for t in tables for r in t.interaction_rows),
        subtask_rows=tuple(r for t in tables for r in t.subtask_rows),
        integrity_issues=tuple(i for t in tables for i in t.integrity_issues),
    )


def correlation_bins(
    outcomes: dict[str, StrategyOutcome],
    categories: dict[str, str],
    evals: dict[str, InstanceEval],
    bin_edges: list[float],
) -> dict[str, list[BinStat]]:
    """Bucket instances by valid-query count; report answer quality per bucket.

    Bins are [e0,e1), ..., [e_{k-2}, e_{k-1}], with out-of-range values
    clamped into the end bins so every instance lands in exactly one bin.
    """
    if len(bin_edges) < 2 or any(a >= b for a, b in zip(bin_edges, bin_edges[1:])):
        raise ValueError("bin edges must be strictly increasing with at least two values")

    def bin_index(x: float) -> int:
        for i in range(len(bin_edges) - 2):
            if x < bin_edges[i + 1]:
                return i
        return len(bin_edges) - 2

    per_category: dict[str, list[BinStat]] = {}
    for category in (CONCLUSIVE, INTERPRETIVE):
        buckets: list[list[float]] = [[] for _ in range(len(bin_edges) - 1)]
        for qid, outcome in sorted(outcomes.items()):
            if categories[qid] != category or outcome.transcript.aborted_reason is not None:
                continue
            ev = evals.get(qid)
            if ev is None or ev.ref_verdict is None:
                continue
            value = (
                1.0 if ev.ref_verdict.match else 0.0
            ) if ev.ref_verdict.kind == "match_binary" else float(ev.ref_verdict.score)
            buckets[bin_index(float(outcome.stats.n_sql_valid))].append(value)
        per_category[category] = [
            BinStat(
                low=bin_edges[i],
                high=bin_edges[i + 1],
                count=len(bucket),
                value=_mean(bucket),
            )
            for i, bucket in enumerate(buckets)
        ]
    return per_category


def _fmt(value: float | int | None) -> str:
    return "-" if value is None else repr(value)


def _pair(c: float | None, i: float | None) -> str:
    return f"{_fmt(c)} / {_fmt(i)}"


_INTERACTION_HEADER = [
    "LLM",
    "Interaction Mode",
    "Match Score (C/I)",
    "Plan Length (C/I)",
    "# Generated SQLs (C/I)",
    "# Valid SQLs (C/I)",
    "Answer Length (C/I)",
]

_SUBTASK_HEADER = [
    "LLM",
    "Interaction Mode",
    "Sub-Task",
    "Reviewer Vote Frac.",
    "Reviewer Majority Frac.",
    "Reviewer Agree.",
    "Meta Vote Frac.",
    "Meta Majority Frac.",
    "Meta Agree.",
]


def _interaction_cells(row: InteractionRow) -> list[str]:
    c, i = row.conclusive, row.interpretive
    return [
        row.model_id,
        row.strategy,
        _pair(c.match_rate, i.mean_score),
        _pair(c.mean_plan_words, i.mean_plan_words),
        _pair(c.mean_n_sql, i.mean_n_sql),
        _pair(c.mean_n_valid_sql, i.mean_n_valid_sql),
        _pair(c.mean_answer_words, i.mean_answer_words),
    ]


def _subtask_cells(row: SubtaskRow) -> list[str]:
    return [
        row.model_id,
        row.strategy,
        SUBTASK_LABEL[row.subtask_kind],
        _fmt(row.reviewer_vote_fraction),
        _fmt(row.reviewer_majority_fraction),
        _fmt(row.reviewer_agreement),
        _fmt(row.meta_vote_fraction),
        _fmt(row.meta_majority_fraction),
        _fmt(row.meta_agreement),
    ]


def _markdown_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(" --- " for _ in header) + "|"]
    lines.extend("| " + " | ".join(cells) + " |" for cells in rows)
    return "\n".join(lines)


def render_tables(table: MetricsTable, format: str = "markdown") -> str:
    """Deterministic rendering in markdown, csv, or json."""
    if format == "markdown":
        parts = [
            "## Reference-based evaluation and interaction measurements",
            _markdown_table(
                _INTERACTION_HEADER, [_interaction_cells(r) for r in table.interaction_rows]
            ),
            "",
            "## Reference-free two-tier evaluation",
            _markdown_table(_SUBTASK_HEADER, [_subtask_cells(r) for r in table.subtask_rows]),
        ]
        if table.integrity_issues:
            parts += ["", "## Integrity issues", *[f"- {i}" for i in table.integrity_issues]]
        return "\n".join(parts) + "\n"

    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(_INTERACTION_HEADER)
        for row in table.interaction_rows:
            writer.writerow(_interaction_cells(row))
        writer.writerow([])
        writer.writerow(_SUBTASK_HEADER)
        for row in table.subtask_rows:
            writer.writerow(_subtask_cells(row))
        return buffer.getvalue()

    if format == "json":
        return json.dumps(
            {
                "interaction": [asdict(r) for r in table.interaction_rows],
                "subtasks": [asdict(r) for r in table.subtask_rows],
                "integrity_issues": list(table.integrity_issues),
            },
            ensure_ascii=False,
            sort_keys=True,
            indent=2,
        ) + "\n"

    raise ValueError(f"unknown format {format!r}")


def render_bins_csv(bins: dict[str, list[BinStat]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["category", "bin_low", "bin_high", "count", "value"])
    for category in (CONCLUSIVE, INTERPRETIVE):
        for stat in bins.get(category, []):
            writer.writerow(
                [category, repr(stat.low), repr(stat.high), stat.count, _fmt(stat.value)]
            )
    return buffer.getvalue()
