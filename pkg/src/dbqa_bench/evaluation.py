"""Reference-based answer scoring and the two-tier peer-review framework.

Tier one: a panel of reviewers independently judges each sub-task output
as perfect or imperfect against a per-sub-task rubric. Tier two: meta
reviewers read all the reviews and rule again; the final verdict is the
majority over meta decisions. Evaluator calls run at a dedicated
temperature (default 0.7) with per-judge seeds for diversity.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .gateway import ChatMessage, ChatRequest, Gateway, TransportError, derive_seed
from .model import CONCLUSIVE, INTERPRETIVE, QuestionRecord, ReferenceAnswer, RunConfig
from .prompts import SUBTASK_KINDS, SUBTASK_PLANNING, SUBTASK_SYNTHESIS, SUBTASK_TOOL
from .strategies import EMPTY_HISTORY, StrategyOutcome

logger = logging.getLogger(__name__)

PERFECT = "perfect"
IMPERFECT = "imperfect"

RUBRICS_DIR = Path(__file__).parent / "rubrics"

_REVIEW_RUBRIC = {
    SUBTASK_PLANNING: "review_interaction_planning",
    SUBTASK_TOOL: "review_tool_employment",
    SUBTASK_SYNTHESIS: "review_information_synthesis",
}
_META_RUBRIC = {
    SUBTASK_PLANNING: "meta_interaction_planning",
    SUBTASK_TOOL: "meta_tool_employment",
    SUBTASK_SYNTHESIS: "meta_information_synthesis",
}
_REVIEWS_PLACEHOLDER = {
    SUBTASK_PLANNING: "IP_reviews",
    SUBTASK_TOOL: "TE_reviews",
    SUBTASK_SYNTHESIS: "IS_reviews",
}

_CONCLUSION_RE = re.compile(r"^\s*Conclusion\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_SCORE_RE = re.compile(r"^\s*Score\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_DECISION_RE = re.compile(
    r"^\s*(?:-\s*)?Final Decision\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE
)


class EvalParseError(Exception):
    """An evaluator completion did not contain a parseable verdict."""

    def __init__(self, message: str, raw_completion: str = ""):
        super().__init__(message)
        self.raw_completion = raw_completion


class EvaluationConfigError(Exception):
    """Even judge panels and other setup mistakes that make majorities undefined."""


@dataclass(frozen=True)
class RefVerdict:
    question_id: str
    kind: str  # match_binary | score_1_5
    match: bool | None
    score: int | None
    rationale: str
    raw_completion: str

    def __post_init__(self) -> None:
        if self.kind == "match_binary" and (self.match is None or self.score is not None):
            raise ValueError("match_binary verdicts carry match and no score")
        if self.kind == "score_1_5" and (self.score is None or self.match is not None):
            raise ValueError("score_1_5 verdicts carry score and no match")


@dataclass(frozen=True)
class ReviewVerdict:
    subtask_kind: str
    reviewer_index: int
    decision: str
    rationale: str
    raw_completion: str


@dataclass(frozen=True)
class MetaVerdict:
    subtask_kind: str
    meta_index: int
    decision: str
    rationale: str
    reviews_seen: tuple[int, ...]
    raw_completion: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "reviews_seen", tuple(self.reviews_seen))


@dataclass(frozen=True)
class SubtaskEval:
    reviews: tuple[ReviewVerdict, ...]
    metas: tuple[MetaVerdict, ...]
    final: str | None
    reviewer_agreement: bool
    meta_agreement: bool
    incomplete: bool = False


@dataclass(frozen=True)
class InstanceEval:
    question_id: str
    ref_verdict: RefVerdict | None
    ref_error: str | None
    subtasks: dict[str, SubtaskEval]


@dataclass(frozen=True)
class ReviewContext:
    """Everything the rubrics can reference about one agent run."""

    question: str
    database_text: str
    plan: str
    sql_results: str
    answer: str


@lru_cache(maxsize=None)
def _rubric(name: str) -> str:
    return (RUBRICS_DIR / f"{name}.txt").read_text(encoding="utf-8")


class _Strict(dict):
    def __missing__(self, key: str) -> str:
        raise EvalParseError(f"rubric placeholder {{{key}}} has no value")


def render_rubric(name: str, values: dict[str, str]) -> str:
    return _rubric(name).format_map(_Strict(values))


def _rationale_before(text: str, match: re.Match) -> str:
    return text[: match.start()].strip()


def parse_conclusion(text: str) -> tuple[bool, str]:
    """Parse the last 'Conclusion:' line into (match, rationale)."""
    matches = list(_CONCLUSION_RE.finditer(text))
    matches = [m for m in matches if m.group(1).strip()]
    if not matches:
        raise EvalParseError("no Conclusion line in completion", raw_completion=text)
    last = matches[-1]
    value = last.group(1).strip().rstrip(".").strip().lower()
    if value == "match":
        return True, _rationale_before(text, last)
    if value in ("not match", "no match"):
        return False, _rationale_before(text, last)
    raise EvalParseError(f"unrecognized conclusion {value!r}", raw_completion=text)


def parse_score(text: str) -> tuple[int, str]:
    """Parse the last 'Score:' line into (score in 1..5, rationale)."""
    matches = list(_SCORE_RE.finditer(text))
    matches = [m for m in matches if m.group(1).strip()]
    if not matches:
        raise EvalParseError("no Score line in completion", raw_completion=text)
    last = matches[-1]
    value = last.group(1).strip()
    digits = re.fullmatch(r"\[?\s*([0-9]+)\s*\]?", value)
    if not digits:
        raise EvalParseError(f"unparseable score {value!r}", raw_completion=text)
    score = int(digits.group(1))
    if not 1 <= score <= 5:
        raise EvalParseError(f"score {score} out of range 1..5", raw_completion=text)
    return score, _rationale_before(text, last)


def parse_final_decision(text: str) -> tuple[str, str]:
    """Parse the last 'Final Decision:' line; the last occurrence wins."""
    matches = list(_DECISION_RE.finditer(text))
    matches = [m for m in matches if m.group(1).strip()]
    if not matches:
        raise EvalParseError("no Final Decision line in completion", raw_completion=text)
    last = matches[-1]
    value = last.group(1).strip().rstrip(".").strip().lower()
    if value.startswith("perfect"):
        return PERFECT, _rationale_before(text, last)
    if value.startswith(("imperfect", "not perfect")):
        return IMPERFECT, _rationale_before(text, last)
    raise EvalParseError(f"unrecognized decision {value!r}", raw_completion=text)


def _evaluator_call(gw: Gateway, cfg: RunConfig, prompt: str, seed: int) -> str:
    response = gw.complete(
        ChatRequest(
            model_id=cfg.evaluator_model_id,
            messages=(ChatMessage(role="user", content=prompt),),
            temperature=cfg.evaluator_temperature,
            max_output_tokens=cfg.max_output_tokens,
            seed=seed,
        )
    )
    return response.content


def eval_conclusive(
    q: QuestionRecord, gold: ReferenceAnswer, answer: str, cfg: RunConfig, gw: Gateway,
    attempt: int = 1,
) -> RefVerdict:
    if q.category != CONCLUSIVE:
        raise ValueError(f"{q.question_id} is not a conclusive question")
    prompt = render_rubric(
        "conclusive_ref", {"question": q.text, "gold_answer": gold.text, "answer": answer}
    )
    seed = derive_seed(cfg.random_seed, "ref", q.question_id, attempt)
    completion = _evaluator_call(gw, cfg, prompt, seed)
    match, rationale = parse_conclusion(completion)
    return RefVerdict(
        question_id=q.question_id,
        kind="match_binary",
        match=match,
        score=None,
        rationale=rationale,
        raw_completion=completion,
    )


def eval_interpretive(
    q: QuestionRecord, gold: ReferenceAnswer, answer: str, cfg: RunConfig, gw: Gateway,
    attempt: int = 1,
) -> RefVerdict:
    if q.category != INTERPRETIVE:
        raise ValueError(f"{q.question_id} is not an interpretive question")
    prompt = render_rubric(
        "interpretive_ref", {"question": q.text, "gold_answer": gold.text, "answer": answer}
    )
    seed = derive_seed(cfg.random_seed, "ref", q.question_id, attempt)
    completion = _evaluator_call(gw, cfg, prompt, seed)
    score, rationale = parse_score(completion)
    return RefVerdict(
        question_id=q.question_id,
        kind="score_1_5",
        match=None,
        score=score,
        rationale=rationale,
        raw_completion=completion,
    )


def _review_values(ctx: ReviewContext) -> dict[str, str]:
    return {
        "question": ctx.question,
        "database_text": ctx.database_text,
        "plan": ctx.plan,
        "sql_results": ctx.sql_results,
        "answer": ctx.answer,
    }


def review_subtask(
    subtask_kind: str,
    ctx: ReviewContext,
    reviewer_index: int,
    cfg: RunConfig,
    gw: Gateway,
    question_id: str,
    attempt: int = 1,
) -> ReviewVerdict:
    prompt = render_rubric(_REVIEW_RUBRIC[subtask_kind], _review_values(ctx))
    seed = derive_seed(cfg.random_seed, "review", question_id, subtask_kind, reviewer_index, attempt)
    completion = _evaluator_call(gw, cfg, prompt, seed)
    decision, rationale = parse_final_decision(completion)
    return ReviewVerdict(
        subtask_kind=subtask_kind,
        reviewer_index=reviewer_index,
        decision=decision,
        rationale=rationale,
        raw_completion=completion,
    )


def render_reviews_block(reviews: tuple[ReviewVerdict, ...]) -> str:
    """All reviews, in reviewer_index order, as injected into meta prompts."""
    ordered = sorted(reviews, key=lambda r: r.reviewer_index)
    return "\n\n".join(f"Reviewer {r.reviewer_index}:\n{r.raw_completion}" for r in ordered)


def meta_review(
    reviews: tuple[ReviewVerdict, ...],
    ctx: ReviewContext,
    meta_index: int,
    cfg: RunConfig,
    gw: Gateway,
    question_id: str,
    attempt: int = 1,
) -> MetaVerdict:
    if not reviews:
        raise ValueError("meta review requires at least one review")
    kinds = {r.subtask_kind for r in reviews}
    if len(kinds) != 1:
        raise ValueError(f"mixed subtask kinds in review set: {sorted(kinds)}")
    subtask_kind = reviews[0].subtask_kind

    values = _review_values(ctx)
    values[_REVIEWS_PLACEHOLDER[subtask_kind]] = render_reviews_block(reviews)
    prompt = render_rubric(_META_RUBRIC[subtask_kind], values)
    seed = derive_seed(cfg.random_seed, "meta", question_id, subtask_kind, meta_index, attempt)
    completion = _evaluator_call(gw, cfg, prompt, seed)
    decision, rationale = parse_final_decision(completion)
    return MetaVerdict(
        subtask_kind=subtask_kind,
        meta_index=meta_index,
        decision=decision,
        rationale=rationale,
        reviews_seen=tuple(r.reviewer_index for r in sorted(reviews, key=lambda r: r.reviewer_index)),
        raw_completion=completion,
    )


def aggregate_majority(decisions: list[str]) -> str:
    """Perfect iff strictly more than half the decisions are perfect."""
    if not decisions:
        raise ValueError("majority over an empty decision list")
    if len(decisions) % 2 == 0:
        raise EvaluationConfigError(
            f"even judge panel of {len(decisions)}; ties are impossible only with odd counts"
        )
    n_perfect = sum(1 for d in decisions if d == PERFECT)
    return PERFECT if n_perfect * 2 > len(decisions) else IMPERFECT


def compute_agreement(verdict_sets: list[list[str]]) -> float:
    """Fraction of instances whose decisions are all identical."""
    if not verdict_sets:
        raise ValueError("agreement over an empty instance list")
    for decisions in verdict_sets:
        if not decisions:
            raise ValueError("agreement over an empty decision list")
    unanimous = sum(1 for decisions in verdict_sets if len(set(decisions)) == 1)
    return unanimous / len(verdict_sets)


def build_review_context(outcome: StrategyOutcome, q: QuestionRecord, database_text: str) -> ReviewContext:
    """Reconstruct exactly what the agent saw from its transcript."""
    transcript = outcome.transcript
    plans = [s.content for s in transcript.steps if s.kind == "plan"]
    blocks = []
    pending_sql: str | None = None
    index = 0
    for step in transcript.steps:
        if step.kind == "sql":
            pending_sql = step.content
        elif step.kind == "sql_result" and pending_sql is not None:
            index += 1
            blocks.append(f"Query {index}:\n{pending_sql}\nResult {index}:\n{step.content}")
            pending_sql = None
    return ReviewContext(
        question=q.text,
        database_text=database_text,
        plan="\n\n".join(plans) if plans else "(no plan was produced)",
        sql_results="\n\n".join(blocks) if blocks else EMPTY_HISTORY,
        answer=transcript.final_answer or "",
    )


def _with_parse_retry(fn):
    """Run one evaluator call, retrying once with a fresh seed on parse errors."""
    try:
        return fn(1)
    except EvalParseError as exc:
        logger.info("evaluator parse failed, retrying once: %s", exc)
        return fn(2)


def _eval_ref(
    outcome: StrategyOutcome, q: QuestionRecord, gold: ReferenceAnswer, cfg: RunConfig, gw: Gateway
) -> tuple[RefVerdict | None, str | None]:
    answer = outcome.transcript.final_answer or ""
    evaluator = eval_conclusive if q.category == CONCLUSIVE else eval_interpretive
    try:
        return _with_parse_retry(lambda attempt: evaluator(q, gold, answer, cfg, gw, attempt=attempt)), None
    except (EvalParseError, TransportError) as exc:
        logger.warning("%s: reference evaluation failed: %s", q.question_id, exc)
        return None, str(exc)


def _eval_subtask(
    subtask_kind: str,
    ctx: ReviewContext,
    cfg: RunConfig,
    gw: Gateway,
    question_id: str,
) -> SubtaskEval:
    reviews: list[ReviewVerdict] = []
    for reviewer_index in range(1, cfg.reviewer_count + 1):
        try:
            reviews.append(
                _with_parse_retry(
                    lambda attempt, idx=reviewer_index: review_subtask(
                        subtask_kind, ctx, idx, cfg, gw, question_id, attempt=attempt
                    )
                )
            )
        except (EvalParseError, TransportError) as exc:
            logger.warning("%s/%s: reviewer %d failed: %s", question_id, subtask_kind, reviewer_index, exc)
            return SubtaskEval(
                reviews=tuple(reviews), metas=(), final=None,
                reviewer_agreement=False, meta_agreement=False, incomplete=True,
            )

    metas: list[MetaVerdict] = []
    for meta_index in range(1, cfg.meta_reviewer_count + 1):
        try:
            metas.append(
                _with_parse_retry(
                    lambda attempt, idx=meta_index: meta_review(
                        tuple(reviews), ctx, idx, cfg, gw, question_id, attempt=attempt
                    )
                )
            )
        except (EvalParseError, TransportError) as exc:
            logger.warning("%s/%s: meta-reviewer %d failed: %s", question_id, subtask_kind, meta_index, exc)
            return SubtaskEval(
                reviews=tuple(reviews), metas=tuple(metas), final=None,
                reviewer_agreement=len({r.decision for r in reviews}) == 1,
                meta_agreement=False, incomplete=True,
            )

    final = aggregate_majority([m.decision for m in metas])
    return SubtaskEval(
        reviews=tuple(reviews),
        metas=tuple(metas),
        final=final,
        reviewer_agreement=len({r.decision for r in reviews}) == 1,
        meta_agreement=len({m.decision for m in metas}) == 1,
        incomplete=False,
    )


def run_full_eval(
    outcome: StrategyOutcome,
    q: QuestionRecord,
    gold: ReferenceAnswer,
    database_text: str,
    cfg: RunConfig,
    gw: Gateway,
) -> InstanceEval:
    """Reference verdict plus two-tier review of every sub-task the run produced."""
    if outcome.transcript.aborted_reason is not None:
        raise ValueError(f"{q.question_id}: cannot evaluate an aborted run")

    ref_verdict, ref_error = _eval_ref(outcome, q, gold, cfg, gw)
    ctx = build_review_context(outcome, q, database_text)

    present = {r.kind for r in outcome.subtask_records}
    subtasks: dict[str, SubtaskEval] = {}
    for kind in SUBTASK_KINDS:
        if kind in present:
            subtasks[kind] = _eval_subtask(kind, ctx, cfg, gw, q.question_id)
    return InstanceEval(
        question_id=q.question_id, ref_verdict=ref_verdict, ref_error=ref_error, subtasks=subtasks
    )


def instance_eval_to_dict(ev: InstanceEval) -> dict:
    def _ref(v: RefVerdict | None) -> dict | None:
        if v is None:
            return None
        return {
            "question_id": v.question_id,
            "kind": v.kind,
            "match": v.match,
            "score": v.score,
            "rationale": v.rationale,
            "raw_completion": v.raw_completion,
        }

    return {
        "question_id": ev.question_id,
        "ref_verdict": _ref(ev.ref_verdict),
        "ref_error": ev.ref_error,
        "subtasks": {
            kind: {
                "reviews": [
                    {
                        "subtask_kind": r.subtask_kind,
                        "reviewer_index": r.reviewer_index,
                        "decision": r.decision,
                        "rationale": r.rationale,
                        "raw_completion": r.raw_completion,
                    }
                    for r in sub.reviews
                ],
                "metas": [
                    {
                        "subtask_kind": m.subtask_kind,
                        "meta_index": m.meta_index,
                        "decision": m.decision,
                        "rationale": m.rationale,
                        "reviews_seen": list(m.reviews_seen),
                        "raw_completion": m.raw_completion,
                    }
                    for m in sub.metas
                ],
                "final": sub.final,
                "reviewer_agreement": sub.reviewer_agreement,
                "meta_agreement": sub.meta_agreement,
                "incomplete": sub.incomplete,
            }
            for kind, sub in ev.subtasks.items()
        },
    }


def instance_eval_from_dict(data: dict) -> InstanceEval:
    ref = data.get("ref_verdict")
    verdict = RefVerdict(**ref) if ref else None
    subtasks = {}
    for kind, sub in data.get("subtasks", {}).items():
        subtasks[kind] = SubtaskEval(
            reviews=tuple(ReviewVerdict(**r) for r in sub["reviews"]),
            metas=tuple(
                MetaVerdict(**{**m, "reviews_seen": tuple(m["reviews_seen"])}) for m in sub["metas"]
            ),
            final=sub.get("final"),
            reviewer_agreement=sub["reviewer_agreement"],
            meta_agreement=sub["meta_agreement"],
            incomplete=sub.get("incomplete", False),
        )
    return InstanceEval(
        question_id=data["question_id"],
        ref_verdict=verdict,
        ref_error=data.get("ref_error"),
        subtasks=subtasks,
    )
