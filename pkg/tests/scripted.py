"""Seed-addressed fixture builders for whole-harness scripted runs.

Every model call the harness makes carries a deterministic seed derived
from (run seed, role, ids); keying fixtures on those seeds addresses each
call uniquely with zero matcher ambiguity.
"""

from __future__ import annotations

from dbqa_bench.gateway import ScriptedFixture, derive_seed
from dbqa_bench.prompts import SUBTASK_KINDS, SUBTASK_PLANNING, SUBTASK_SYNTHESIS, SUBTASK_TOOL


def fence(*queries: str) -> str:
    return "\n".join(f"```sql\n{q};\n```" for q in queries)


def agent_none_fixtures(root_seed: int, qid: str, answer: str) -> list[ScriptedFixture]:
    return [
        ScriptedFixture(
            response=answer, seed=derive_seed(root_seed, "agent", qid, SUBTASK_SYNTHESIS, 0)
        )
    ]


def agent_sequential_fixtures(
    root_seed: int, qid: str, plan: str, sql_output: str, answer: str
) -> list[ScriptedFixture]:
    return [
        ScriptedFixture(response=plan, seed=derive_seed(root_seed, "agent", qid, SUBTASK_PLANNING, 0)),
        ScriptedFixture(response=sql_output, seed=derive_seed(root_seed, "agent", qid, SUBTASK_TOOL, 0)),
        ScriptedFixture(response=answer, seed=derive_seed(root_seed, "agent", qid, SUBTASK_SYNTHESIS, 0)),
    ]


def agent_iterative_fixtures(
    root_seed: int,
    qid: str,
    cycles: list[tuple[str, str | None]],
    answer: str,
    stop_plan: str | None = "NO MORE QUERIES NEEDED",
) -> list[ScriptedFixture]:
    """cycles: per executed cycle, (plan text, sql output or None).

    When stop_plan is given it is served as the plan after the listed
    cycles; otherwise the agent runs until the iteration cap.
    """
    fixtures: list[ScriptedFixture] = []
    for index, (plan, sql_output) in enumerate(cycles):
        fixtures.append(
            ScriptedFixture(response=plan, seed=derive_seed(root_seed, "agent", qid, SUBTASK_PLANNING, index))
        )
        if sql_output is not None:
            fixtures.append(
                ScriptedFixture(
                    response=sql_output, seed=derive_seed(root_seed, "agent", qid, SUBTASK_TOOL, index)
                )
            )
    stop_index = len(cycles)
    if stop_plan is not None:
        fixtures.append(
            ScriptedFixture(
                response=stop_plan,
                seed=derive_seed(root_seed, "agent", qid, SUBTASK_PLANNING, stop_index),
            )
        )
    fixtures.append(
        ScriptedFixture(
            response=answer, seed=derive_seed(root_seed, "agent", qid, SUBTASK_SYNTHESIS, stop_index)
        )
    )
    return fixtures


def ref_fixture(root_seed: int, qid: str, response: str) -> ScriptedFixture:
    return ScriptedFixture(response=response, seed=derive_seed(root_seed, "ref", qid, 1))


def review_fixtures(
    root_seed: int,
    qid: str,
    decisions_by_kind: dict[str, tuple[list[str], list[str]]],
) -> list[ScriptedFixture]:
    """decisions_by_kind: kind -> (reviewer decisions, meta decisions)."""
    fixtures: list[ScriptedFixture] = []
    for kind, (review_decisions, meta_decisions) in decisions_by_kind.items():
        for index, decision in enumerate(review_decisions, start=1):
            fixtures.append(
                ScriptedFixture(
                    response=f"Reviewer {index} take on {kind}.\nFinal Decision: {decision}",
                    seed=derive_seed(root_seed, "review", qid, kind, index, 1),
                )
            )
        for index, decision in enumerate(meta_decisions, start=1):
            fixtures.append(
                ScriptedFixture(
                    response=f"Meta {index} ruling on {kind}.\nFinal Decision: {decision}",
                    seed=derive_seed(root_seed, "meta", qid, kind, index, 1),
                )
            )
    return fixtures


def unanimous(decision: str, judges: int = 3) -> tuple[list[str], list[str]]:
    return [decision] * judges, [decision] * judges


def all_subtasks(decisions: tuple[list[str], list[str]]) -> dict[str, tuple[list[str], list[str]]]:
    return {kind: decisions for kind in SUBTASK_KINDS}
