"""Synthetic benchmark construction.

Questions move through a keyword-controlled draft, a pruning pass, and a
final human confirmation; answers are built by conjecturing from the
schema, injecting corroborating records as INSERT statements, and
concluding a reference answer grounded in those records. Every draft is
a value object persisted as one JSON file; stage transitions are strictly
forward and fully logged.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from .gateway import ChatMessage, ChatRequest, Gateway, TransportError, derive_seed
from .model import (
    CATEGORIES,
    DatabaseSpec,
    Instance,
    QuestionRecord,
    ReferenceAnswer,
    validate_instance,
    word_count,
)
from .sandbox import SandboxError, create_sandbox, render_schema
from .sqltext import extract_insert_statements, split_sql_script

logger = logging.getLogger(__name__)

STAGE_CONTROLLED = "controlled"
STAGE_CONDENSED = "condensed"
STAGE_CONJECTURED = "conjectured"
STAGE_CONSTRUCTED = "constructed"
STAGE_CONCLUDED = "concluded"
STAGE_CLASSIFIED = "classified"
STAGE_CONFIRMED = "confirmed"
STAGE_REJECTED = "rejected"

STAGE_ORDER = (
    STAGE_CONTROLLED,
    STAGE_CONDENSED,
    STAGE_CONJECTURED,
    STAGE_CONSTRUCTED,
    STAGE_CONCLUDED,
    STAGE_CLASSIFIED,
    STAGE_CONFIRMED,
)
ALL_STAGES = STAGE_ORDER + (STAGE_REJECTED,)


class PipelineError(Exception):
    """A pipeline operation could not produce a legal draft."""


class StageError(PipelineError):
    """Operation called on a draft in the wrong stage."""


@dataclass(frozen=True)
class ReviewLogEntry:
    timestamp: str
    actor: str
    action: str
    note: str


@dataclass(frozen=True)
class DraftItem:
    draft_id: str
    db_id: str
    seed_question: str
    stage: str
    question_text: str = ""
    source_keywords: tuple[str, ...] = ()
    conjecture: str | None = None
    injected_inserts: tuple[str, ...] | None = None
    reference_text: str | None = None
    proposed_category: str | None = None
    review_log: tuple[ReviewLogEntry, ...] = ()

    def __post_init__(self) -> None:
        if self.stage not in ALL_STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        object.__setattr__(self, "source_keywords", tuple(self.source_keywords))
        if self.injected_inserts is not None:
            object.__setattr__(self, "injected_inserts", tuple(self.injected_inserts))
        object.__setattr__(self, "review_log", tuple(self.review_log))


@dataclass(frozen=True)
class ForgeConfig:
    model_id: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    construct_attempts: int = 2
    random_seed: int = 0


Clock = Callable[[], float]


def _utc(clock: Clock) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(clock()))


def _log(draft: DraftItem, actor: str, action: str, note: str, clock: Clock) -> DraftItem:
    entry = ReviewLogEntry(timestamp=_utc(clock), actor=actor, action=action, note=note)
    return replace(draft, review_log=draft.review_log + (entry,))


def _require_stage(draft: DraftItem, expected: str, op: str) -> None:
    if draft.stage != expected:
        raise StageError(f"{op} requires stage {expected!r}, draft {draft.draft_id} is at {draft.stage!r}")


def _forge_call(gw: Gateway, cfg: ForgeConfig, prompt: str, *seed_parts: object) -> str:
    seed = derive_seed(cfg.random_seed, "forge", *seed_parts)
    try:
        response = gw.complete(
            ChatRequest(
                model_id=cfg.model_id,
                messages=(ChatMessage(role="user", content=prompt),),
                temperature=cfg.temperature,
                max_output_tokens=cfg.max_output_tokens,
                seed=seed,
            )
        )
    except TransportError as exc:
        raise PipelineError(f"provider failure: {exc}") from exc
    return response.content


def control_generate(
    draft_id: str,
    db_id: str,
    seed_question: str,
    schema_text: str,
    keywords: list[str],
    cfg: ForgeConfig,
    gw: Gateway,
    clock: Clock = time.time,
) -> DraftItem:
    """Draft a question steered toward the given entities or keywords."""
    if not schema_text.strip():
        raise PipelineError("schema_text is empty")
    keyword_line = ", ".join(keywords) if keywords else "(none; stay close to the source question)"
    prompt = (
        "You are building a challenging analytical question about a database.\n\n"
        f"Database schema:\n{schema_text}\n\n"
        f"Source question: {seed_question}\n"
        f"Target entities or keywords: {keyword_line}\n\n"
        "Write one question about this database that centres on the target "
        "entities and demands combining and interpreting several pieces of "
        "information. Output only the question."
    )
    text = _forge_call(gw, cfg, prompt, draft_id, "control").strip()
    if not text:
        raise PipelineError(f"{draft_id}: control generation returned an empty question")
    draft = DraftItem(
        draft_id=draft_id,
        db_id=db_id,
        seed_question=seed_question,
        stage=STAGE_CONTROLLED,
        question_text=text,
        source_keywords=tuple(keywords),
    )
    return _log(draft, "pipeline", "control", f"drafted from seed: {seed_question}", clock)


def condense(
    draft: DraftItem, cfg: ForgeConfig, gw: Gateway,
    clock: Clock = time.time, allow_equal: bool = False,
) -> DraftItem:
    """Prune superfluous detail; the result must be strictly shorter in words
    unless explicitly overridden."""
    _require_stage(draft, STAGE_CONTROLLED, "condense")
    prompt = (
        "Shorten the following database question, removing superfluous detail "
        "while keeping it challenging and unambiguous. Output only the "
        "shortened question.\n\n"
        f"Question: {draft.question_text}"
    )
    text = _forge_call(gw, cfg, prompt, draft.draft_id, "condense").strip()
    if not text:
        raise PipelineError(f"{draft.draft_id}: condense returned an empty question")
    before, after = word_count(draft.question_text), word_count(text)
    if after > before or (after == before and not allow_equal):
        raise PipelineError(
            f"{draft.draft_id}: condensed question is not shorter ({before} -> {after} words)"
        )
    updated = replace(draft, question_text=text, stage=STAGE_CONDENSED)
    return _log(updated, "pipeline", "condense", f"condensed from: {draft.question_text}", clock)


def conjecture_answer(
    draft: DraftItem, schema_text: str, cfg: ForgeConfig, gw: Gateway, clock: Clock = time.time
) -> DraftItem:
    """Conjecture a plausible answer from the schema alone."""
    _require_stage(draft, STAGE_CONDENSED, "conjecture_answer")
    prompt = (
        "Given only a database schema and a question, conjecture a plausible, "
        "definite answer that the data could support.\n\n"
        f"Database schema:\n{schema_text}\n\n"
        f"Question: {draft.question_text}\n\n"
        "Output only the conjectured answer."
    )
    text = _forge_call(gw, cfg, prompt, draft.draft_id, "conjecture").strip()
    if not text:
        raise PipelineError(f"{draft.draft_id}: conjecture returned empty")
    updated = replace(draft, conjecture=text, stage=STAGE_CONJECTURED)
    return _log(updated, "pipeline", "conjecture", "conjectured answer stored", clock)


def construct_records(
    draft: DraftItem, spec: DatabaseSpec, cfg: ForgeConfig, gw: Gateway, clock: Clock = time.time
) -> DraftItem:
    """Ask for INSERT statements corroborating the conjecture and prove they
    execute cleanly against the source schema, re-prompting with the engine
    error up to the attempt budget."""
    _require_stage(draft, STAGE_CONJECTURED, "construct_records")
    base_prompt = (
        "Construct database records that corroborate the conjectured answer "
        "below, formatted as INSERT statements in a fenced code block "
        "tagged sql.\n\n"
        f"Database schema:\n{render_schema(spec)}\n\n"
        f"Question: {draft.question_text}\n\n"
        f"Conjectured answer: {draft.conjecture}\n"
    )
    last_error = "model produced no INSERT statements"
    prompt = base_prompt
    for attempt in range(1, cfg.construct_attempts + 1):
        completion = _forge_call(gw, cfg, prompt, draft.draft_id, "construct", attempt)
        inserts = tuple(extract_insert_statements(completion))
        if inserts:
            trial = DatabaseSpec(
                db_id=spec.db_id,
                create_statements=spec.create_statements,
                insert_statements=inserts,
                schema_text=spec.schema_text,
            )
            try:
                create_sandbox(trial).close()
            except SandboxError as exc:
                last_error = str(exc)
            else:
                updated = replace(draft, injected_inserts=inserts, stage=STAGE_CONSTRUCTED)
                return _log(
                    updated, "pipeline", "construct",
                    f"{len(inserts)} records injected after {attempt} attempt(s)", clock,
                )
        logger.info("%s: construct attempt %d failed: %s", draft.draft_id, attempt, last_error)
        prompt = base_prompt + (
            "\nYour previous INSERT statements failed to execute:\n"
            f"{last_error}\nFix the statements and output them again."
        )
    raise PipelineError(
        f"{draft.draft_id}: record construction failed after "
        f"{cfg.construct_attempts} attempts: {last_error}"
    )


def conclude_answer(
    draft: DraftItem, merged_spec: DatabaseSpec, cfg: ForgeConfig, gw: Gateway,
    clock: Clock = time.time,
) -> DraftItem:
    """Conclude a substantiated reference answer aligned with the injected records."""
    _require_stage(draft, STAGE_CONSTRUCTED, "conclude_answer")
    injected = "\n".join(draft.injected_inserts or ())
    prompt = (
        "Write a definitive, well-substantiated long-form answer to the "
        "question below. The answer must align with the evidence records "
        "that were injected into the database.\n\n"
        f"Database schema:\n{render_schema(merged_spec)}\n\n"
        f"Injected evidence records:\n{injected}\n\n"
        f"Question: {draft.question_text}\n\n"
        "Output only the answer."
    )
    text = _forge_call(gw, cfg, prompt, draft.draft_id, "conclude").strip()
    if not text:
        raise PipelineError(f"{draft.draft_id}: conclude returned empty")
    updated = replace(draft, reference_text=text, stage=STAGE_CONCLUDED)
    return _log(updated, "pipeline", "conclude", "reference answer stored", clock)


def classify_question(
    draft: DraftItem, cfg: ForgeConfig, gw: Gateway, clock: Clock = time.time
) -> DraftItem:
    """Propose conclusive vs interpretive; the final category is set only by
    human confirmation."""
    _require_stage(draft, STAGE_CONCLUDED, "classify_question")
    prompt = (
        "Classify the question below as Conclusive (it demands a clear-cut "
        "outcome) or Interpretive (it allows several valid answers).\n\n"
        f"Question: {draft.question_text}\n\n"
        'Answer with a single word: "Conclusive" or "Interpretive".'
    )
    completion = _forge_call(gw, cfg, prompt, draft.draft_id, "classify")
    label = _parse_category(completion)
    if label is None:
        raise PipelineError(
            f"{draft.draft_id}: unparseable category; raw completion: {completion!r}"
        )
    updated = replace(draft, proposed_category=label, stage=STAGE_CLASSIFIED)
    return _log(updated, "pipeline", "classify", f"proposed category {label}", clock)


def _parse_category(completion: str) -> str | None:
    hits = re.findall(r"(?i)conclusive|interpretive", completion)
    if not hits:
        return None
    return hits[-1].lower()


def merged_database(draft: DraftItem, spec: DatabaseSpec) -> DatabaseSpec:
    """Source database plus the draft's injected records, as its own spec."""
    if draft.injected_inserts is None:
        raise PipelineError(f"{draft.draft_id}: no injected records to merge")
    return DatabaseSpec(
        db_id=f"{spec.db_id}-{draft.draft_id}",
        create_statements=spec.create_statements,
        insert_statements=spec.insert_statements + draft.injected_inserts,
        schema_text=spec.schema_text or render_schema(spec),
    )


def finalize_instance(draft: DraftItem, spec: DatabaseSpec) -> Instance:
    """Emit the core (database, question, answer) triple for a confirmed draft."""
    _require_stage(draft, STAGE_CONFIRMED, "finalize_instance")
    if draft.proposed_category not in CATEGORIES:
        raise PipelineError(f"{draft.draft_id}: no confirmed category")
    if not draft.reference_text:
        raise PipelineError(f"{draft.draft_id}: no reference answer")
    merged = merged_database(draft, spec)
    question = QuestionRecord(
        question_id=draft.draft_id,
        db_id=merged.db_id,
        text=draft.question_text,
        category=draft.proposed_category,
        source_keywords=draft.source_keywords,
        pipeline_stage="confirmed",
    )
    answer = ReferenceAnswer(
        question_id=draft.draft_id,
        text=draft.reference_text,
        evidence_note="Grounded in injected records:\n" + "\n".join(draft.injected_inserts or ()),
    )
    report = validate_instance(merged, question, answer)
    if not report.ok:
        raise PipelineError(
            f"{draft.draft_id}: finalization failed validation: " + "; ".join(report.failures)
        )
    return merged, question, answer


def draft_to_dict(draft: DraftItem) -> dict:
    return {
        "draft_id": draft.draft_id,
        "db_id": draft.db_id,
        "seed_question": draft.seed_question,
        "stage": draft.stage,
        "question_text": draft.question_text,
        "source_keywords": list(draft.source_keywords),
        "conjecture": draft.conjecture,
        "injected_inserts": list(draft.injected_inserts) if draft.injected_inserts is not None else None,
        "reference_text": draft.reference_text,
        "proposed_category": draft.proposed_category,
        "review_log": [
            {"timestamp": e.timestamp, "actor": e.actor, "action": e.action, "note": e.note}
            for e in draft.review_log
        ],
    }


def draft_from_dict(data: dict) -> DraftItem:
    inserts = data.get("injected_inserts")
    return DraftItem(
        draft_id=data["draft_id"],
        db_id=data["db_id"],
        seed_question=data["seed_question"],
        stage=data["stage"],
        question_text=data.get("question_text", ""),
        source_keywords=tuple(data.get("source_keywords", ())),
        conjecture=data.get("conjecture"),
        injected_inserts=tuple(inserts) if inserts is not None else None,
        reference_text=data.get("reference_text"),
        proposed_category=data.get("proposed_category"),
        review_log=tuple(ReviewLogEntry(**e) for e in data.get("review_log", ())),
    )


class DraftStore:
    """One JSON file per draft; writes are atomic (write-temp-then-rename)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, draft_id: str) -> Path:
        return self.root / f"{draft_id}.json"

    def save(self, draft: DraftItem) -> None:
        path = self._path(draft.draft_id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(
            json.dumps(draft_to_dict(draft), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        tmp.replace(path)

    def load(self, draft_id: str) -> DraftItem:
        path = self._path(draft_id)
        if not path.exists():
            raise KeyError(draft_id)
        return draft_from_dict(json.loads(path.read_text(encoding="utf-8")))

    def exists(self, draft_id: str) -> bool:
        return self._path(draft_id).exists()

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))

    def list_drafts(self, stage: str | None = None) -> list[DraftItem]:
        drafts = [self.load(draft_id) for draft_id in self.list_ids()]
        if stage is not None:
            drafts = [d for d in drafts if d.stage == stage]
        return drafts


@dataclass(frozen=True)
class SeedItem:
    seed_question: str
    db_id: str
    keywords: tuple[str, ...] = ()


def load_seed_corpus(path: str | Path) -> tuple[list[SeedItem], dict[str, DatabaseSpec]]:
    """Read seeds.jsonl plus one schema.sql per database directory."""
    root = Path(path)
    seeds: list[SeedItem] = []
    with open(root / "seeds.jsonl", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            seeds.append(
                SeedItem(
                    seed_question=entry["seed_question"],
                    db_id=entry["db_id"],
                    keywords=tuple(entry.get("keywords", ())),
                )
            )
    schemas: dict[str, DatabaseSpec] = {}
    for seed in seeds:
        if seed.db_id in schemas:
            continue
        schema_file = root / seed.db_id / "schema.sql"
        if not schema_file.exists():
            raise PipelineError(f"seed references {seed.db_id!r} but {schema_file} does not exist")
        creates, inserts = split_sql_script(schema_file.read_text(encoding="utf-8"))
        schemas[seed.db_id] = DatabaseSpec(
            db_id=seed.db_id,
            create_statements=creates,
            insert_statements=inserts,
            schema_text="\n\n".join(creates),
        )
    return seeds, schemas


def run_forge_pipeline(
    seed: SeedItem,
    spec: DatabaseSpec,
    draft_id: str,
    cfg: ForgeConfig,
    gw: Gateway,
    store: DraftStore,
    clock: Clock = time.time,
) -> DraftItem:
    """Drive one seed through every automated stage, persisting after each."""
    draft = control_generate(
        draft_id, seed.db_id, seed.seed_question, render_schema(spec), list(seed.keywords), cfg, gw, clock
    )
    store.save(draft)
    for op in (
        lambda d: condense(d, cfg, gw, clock),
        lambda d: conjecture_answer(d, render_schema(spec), cfg, gw, clock),
        lambda d: construct_records(d, spec, cfg, gw, clock),
        lambda d: conclude_answer(d, merged_database(d, spec), cfg, gw, clock),
        lambda d: classify_question(d, cfg, gw, clock),
    ):
        draft = op(draft)
        store.save(draft)
    return draft
