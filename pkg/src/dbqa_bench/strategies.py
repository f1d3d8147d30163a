"""The three agent pipelines: no-interaction, sequential, and iterative.

Each run is a pure orchestration over the gateway and a private sandbox;
with a scripted provider the resulting transcript is byte-reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .gateway import ChatRequest, Gateway, TransportError, derive_seed
from .model import (
    DatabaseSpec,
    QuestionRecord,
    RunConfig,
    SqlExecution,
    Step,
    STRATEGY_ITERATIVE,
    STRATEGY_NONE,
    STRATEGY_SEQUENTIAL,
    Transcript,
    word_count,
)
from .prompts import SUBTASK_PLANNING, SUBTASK_SYNTHESIS, SUBTASK_TOOL, build_prompt
from .sandbox import (
    create_sandbox,
    dump_records,
    execute_query,
    render_execution,
    render_schema,
    rendering_is_valid,
)
from .sqltext import extract_sql_queries

logger = logging.getLogger(__name__)

STOP_SENTINEL = "NO MORE QUERIES NEEDED"
EMPTY_HISTORY = "(no queries executed yet)"


@dataclass(frozen=True)
class SubTaskRecord:
    kind: str
    input_bundle: str
    output: str
    iteration_index: int = 0


@dataclass(frozen=True)
class RunStats:
    plan_word_count: int
    n_sql_generated: int
    n_sql_valid: int
    answer_word_count: int


@dataclass(frozen=True)
class StrategyOutcome:
    transcript: Transcript
    subtask_records: tuple[SubTaskRecord, ...]
    stats: RunStats

    def __post_init__(self) -> None:
        object.__setattr__(self, "subtask_records", tuple(self.subtask_records))


def detect_stop(plan_text: str) -> bool:
    """True iff the plan contains the stop sentinel on a line of its own.

    Case-insensitive; a trailing period is tolerated, mid-sentence
    mentions are not.
    """
    for line in plan_text.splitlines():
        if line.strip().rstrip(".").strip().upper() == STOP_SENTINEL:
            return True
    return False


def render_history(pairs: list[tuple[str, SqlExecution]]) -> str:
    """Fixed tabular rendering of the interaction so far; reviewer prompts
    see exactly what the agent saw."""
    if not pairs:
        return EMPTY_HISTORY
    blocks = []
    for i, (query, execution) in enumerate(pairs, start=1):
        blocks.append(f"Query {i}:\n{query}\nResult {i}:\n{render_execution(execution)}")
    return "\n\n".join(blocks)


def transcript_violations(transcript: Transcript) -> list[str]:
    """Well-formedness check; empty list means the transcript is legal."""
    violations: list[str] = []
    steps = transcript.steps
    for i, step in enumerate(steps):
        if step.kind == "sql_result" and (i == 0 or steps[i - 1].kind != "sql"):
            violations.append(f"step {i}: sql_result not immediately preceded by sql")
    if transcript.strategy == STRATEGY_NONE and any(s.kind == "sql" for s in steps):
        violations.append("no-interaction transcript contains sql steps")
    if transcript.strategy in (STRATEGY_NONE, STRATEGY_SEQUENTIAL):
        if any(s.iteration_index != 0 for s in steps):
            violations.append("non-iterative steps must have iteration_index 0")
    else:
        indices = [s.iteration_index for s in steps]
        if any(a > b for a, b in zip(indices, indices[1:])):
            violations.append("iteration_index must be monotone non-decreasing")
    return violations


def recompute_stats(transcript: Transcript) -> RunStats:
    """Recover (plan words, #SQL, #valid SQL, answer words) from a transcript alone."""
    plan_words = sum(word_count(s.content) for s in transcript.steps if s.kind == "plan")
    sql_steps = [s for s in transcript.steps if s.kind == "sql"]
    result_steps = [s for s in transcript.steps if s.kind == "sql_result"]
    n_valid = sum(1 for s in result_steps if rendering_is_valid(s.content))
    answer_words = word_count(transcript.final_answer) if transcript.final_answer else 0
    return RunStats(
        plan_word_count=plan_words,
        n_sql_generated=len(sql_steps),
        n_sql_valid=n_valid,
        answer_word_count=answer_words,
    )


def _aborted(q: QuestionRecord, cfg: RunConfig, steps: list[Step], reason: str,
             records: list[SubTaskRecord]) -> StrategyOutcome:
    transcript = Transcript(
        question_id=q.question_id,
        strategy=cfg.strategy,
        model_id=cfg.model_id,
        steps=tuple(steps),
        final_answer=None,
        aborted_reason=reason,
    )
    return StrategyOutcome(transcript, tuple(records), recompute_stats(transcript))


def _completed(q: QuestionRecord, cfg: RunConfig, steps: list[Step], answer: str,
               records: list[SubTaskRecord], cap_reached: bool = False) -> StrategyOutcome:
    transcript = Transcript(
        question_id=q.question_id,
        strategy=cfg.strategy,
        model_id=cfg.model_id,
        steps=tuple(steps),
        final_answer=answer,
        cap_reached=cap_reached,
    )
    return StrategyOutcome(transcript, tuple(records), recompute_stats(transcript))


def _call(gw: Gateway, cfg: RunConfig, messages, q: QuestionRecord, kind: str, iteration: int) -> str:
    seed = derive_seed(cfg.random_seed, "agent", q.question_id, kind, iteration)
    response = gw.complete(
        ChatRequest(
            model_id=cfg.model_id,
            messages=messages,
            temperature=cfg.agent_temperature,
            max_output_tokens=cfg.max_output_tokens,
            seed=seed,
        )
    )
    return response.content


def run_no_interaction(
    q: QuestionRecord, spec: DatabaseSpec, cfg: RunConfig, gw: Gateway
) -> StrategyOutcome:
    """Chain-of-thought over the complete record dump; no SQL module."""
    with create_sandbox(spec, row_limit=cfg.row_limit) as handle:
        records_text, overflow = dump_records(handle, cfg.context_token_budget)
    if overflow:
        return _aborted(q, cfg, [], "context_overflow", [])

    messages = build_prompt(
        SUBTASK_SYNTHESIS, STRATEGY_NONE, question=q.text, database_records=records_text
    )
    try:
        answer = _call(gw, cfg, messages, q, SUBTASK_SYNTHESIS, 0)
    except TransportError as exc:
        logger.warning("%s: provider failed: %s", q.question_id, exc)
        return _aborted(q, cfg, [], "provider_error", [])

    steps = [Step(kind="final_answer", content=answer, iteration_index=0)]
    records = [SubTaskRecord(SUBTASK_SYNTHESIS, messages[0].content, answer, 0)]
    return _completed(q, cfg, steps, answer, records)


def run_sequential(
    q: QuestionRecord, spec: DatabaseSpec, cfg: RunConfig, gw: Gateway
) -> StrategyOutcome:
    """One plan, one batch of SQL (all executed, independently), one synthesis."""
    schema = render_schema(spec)
    steps: list[Step] = []
    records: list[SubTaskRecord] = []
    with create_sandbox(spec, row_limit=cfg.row_limit) as handle:
        plan_messages = build_prompt(SUBTASK_PLANNING, STRATEGY_SEQUENTIAL, question=q.text, schema=schema)
        try:
            plan = _call(gw, cfg, plan_messages, q, SUBTASK_PLANNING, 0)
        except TransportError:
            return _aborted(q, cfg, steps, "provider_error", records)
        steps.append(Step(kind="plan", content=plan, iteration_index=0))
        records.append(SubTaskRecord(SUBTASK_PLANNING, plan_messages[0].content, plan, 0))

        sql_messages = build_prompt(
            SUBTASK_TOOL, STRATEGY_SEQUENTIAL, question=q.text, schema=schema, plan=plan
        )
        try:
            sql_output = _call(gw, cfg, sql_messages, q, SUBTASK_TOOL, 0)
        except TransportError:
            return _aborted(q, cfg, steps, "provider_error", records)
        records.append(SubTaskRecord(SUBTASK_TOOL, sql_messages[0].content, sql_output, 0))

        history: list[tuple[str, SqlExecution]] = []
        for query in extract_sql_queries(sql_output):
            execution = execute_query(handle, query)
            steps.append(Step(kind="sql", content=query, iteration_index=0))
            steps.append(Step(kind="sql_result", content=render_execution(execution), iteration_index=0))
            history.append((query, execution))

        synth_messages = build_prompt(
            SUBTASK_SYNTHESIS,
            STRATEGY_SEQUENTIAL,
            question=q.text,
            schema=schema,
            plan=plan,
            history=render_history(history),
        )
        try:
            answer = _call(gw, cfg, synth_messages, q, SUBTASK_SYNTHESIS, 0)
        except TransportError:
            return _aborted(q, cfg, steps, "provider_error", records)
        steps.append(Step(kind="final_answer", content=answer, iteration_index=0))
        records.append(SubTaskRecord(SUBTASK_SYNTHESIS, synth_messages[0].content, answer, 0))
    return _completed(q, cfg, steps, answer, records)


def run_iterative(
    q: QuestionRecord, spec: DatabaseSpec, cfg: RunConfig, gw: Gateway
) -> StrategyOutcome:
    """Plan/single-query cycles until the agent elects to stop, then synthesis.

    Only the first extracted query runs per cycle; extra queries are a
    formatting violation, logged but not executed.
    """
    schema = render_schema(spec)
    steps: list[Step] = []
    records: list[SubTaskRecord] = []
    history: list[tuple[str, SqlExecution]] = []
    cap_reached = False

    with create_sandbox(spec, row_limit=cfg.row_limit) as handle:
        cycle = 0
        while True:
            plan_messages = build_prompt(
                SUBTASK_PLANNING,
                STRATEGY_ITERATIVE,
                question=q.text,
                schema=schema,
                history=render_history(history),
            )
            try:
                plan = _call(gw, cfg, plan_messages, q, SUBTASK_PLANNING, cycle)
            except TransportError:
                return _aborted(q, cfg, steps, "provider_error", records)
            steps.append(Step(kind="plan", content=plan, iteration_index=cycle))
            records.append(SubTaskRecord(SUBTASK_PLANNING, plan_messages[0].content, plan, cycle))

            if detect_stop(plan):
                break

            sql_messages = build_prompt(
                SUBTASK_TOOL,
                STRATEGY_ITERATIVE,
                question=q.text,
                schema=schema,
                plan=plan,
                history=render_history(history),
            )
            try:
                sql_output = _call(gw, cfg, sql_messages, q, SUBTASK_TOOL, cycle)
            except TransportError:
                return _aborted(q, cfg, steps, "provider_error", records)
            records.append(SubTaskRecord(SUBTASK_TOOL, sql_messages[0].content, sql_output, cycle))

            queries = extract_sql_queries(sql_output)
            if len(queries) > 1:
                logger.info(
                    "%s cycle %d: %d queries in one cycle; executing only the first",
                    q.question_id, cycle, len(queries),
                )
            if queries:
                query = queries[0]
                execution = execute_query(handle, query)
                steps.append(Step(kind="sql", content=query, iteration_index=cycle))
                steps.append(
                    Step(kind="sql_result", content=render_execution(execution), iteration_index=cycle)
                )
                history.append((query, execution))

            cycle += 1
            if cycle >= cfg.max_iterations:
                cap_reached = True
                break

        last_cycle = cycle
        synth_messages = build_prompt(
            SUBTASK_SYNTHESIS,
            STRATEGY_ITERATIVE,
            question=q.text,
            schema=schema,
            history=render_history(history),
        )
        try:
            answer = _call(gw, cfg, synth_messages, q, SUBTASK_SYNTHESIS, last_cycle)
        except TransportError:
            return _aborted(q, cfg, steps, "provider_error", records)
        steps.append(Step(kind="final_answer", content=answer, iteration_index=last_cycle))
        records.append(SubTaskRecord(SUBTASK_SYNTHESIS, synth_messages[0].content, answer, last_cycle))
    return _completed(q, cfg, steps, answer, records, cap_reached=cap_reached)


_RUNNERS = {
    STRATEGY_NONE: run_no_interaction,
    STRATEGY_SEQUENTIAL: run_sequential,
    STRATEGY_ITERATIVE: run_iterative,
}


def run_strategy(
    q: QuestionRecord, spec: DatabaseSpec, cfg: RunConfig, gw: Gateway
) -> StrategyOutcome:
    return _RUNNERS[cfg.strategy](q, spec, cfg, gw)


def outcome_to_dict(outcome: StrategyOutcome) -> dict:
    from .model import transcript_to_dict

    return {
        "transcript": transcript_to_dict(outcome.transcript),
        "subtask_records": [
            {
                "kind": r.kind,
                "input_bundle": r.input_bundle,
                "output": r.output,
                "iteration_index": r.iteration_index,
            }
            for r in outcome.subtask_records
        ],
        "stats": {
            "plan_word_count": outcome.stats.plan_word_count,
            "n_sql_generated": outcome.stats.n_sql_generated,
            "n_sql_valid": outcome.stats.n_sql_valid,
            "answer_word_count": outcome.stats.answer_word_count,
        },
    }


def outcome_from_dict(data: dict) -> StrategyOutcome:
    from .model import transcript_from_dict

    return StrategyOutcome(
        transcript=transcript_from_dict(data["transcript"]),
        subtask_records=tuple(SubTaskRecord(**r) for r in data["subtask_records"]),
        stats=RunStats(**data["stats"]),
    )
