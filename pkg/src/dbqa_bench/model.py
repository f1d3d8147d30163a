"""Domain types, dataset (de)serialization, and instance validation.

All types are immutable value objects: safe to share across threads.
Enumerated fields are plain strings validated at construction so the
JSON artifacts stay trivially readable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

CONCLUSIVE = "conclusive"
INTERPRETIVE = "interpretive"
CATEGORIES = frozenset({CONCLUSIVE, INTERPRETIVE})

STRATEGY_NONE = "none"
STRATEGY_SEQUENTIAL = "sequential"
STRATEGY_ITERATIVE = "iterative"
STRATEGIES = frozenset({STRATEGY_NONE, STRATEGY_SEQUENTIAL, STRATEGY_ITERATIVE})

PIPELINE_STAGES = frozenset({"drafted", "condensed", "confirmed"})

STEP_KINDS = frozenset({"plan", "sql", "sql_result", "synthesis", "final_answer"})

ABORT_REASONS = frozenset({"context_overflow", "iteration_cap", "provider_error"})


class DatasetError(Exception):
    """Malformed dataset content; message names the offending file/line."""


class ReferentialIntegrityError(DatasetError):
    """A question references a database that is not present."""


def word_count(text: str) -> int:
    """Whitespace-delimited token count, the length unit used everywhere."""
    return len(text.split())


def render_cell(value: object) -> str:
    """Canonical text rendering of one result cell.

    Integers print without a decimal point, reals with the shortest
    round-trip representation, NULL as the literal "NULL". Deterministic
    so transcripts are byte-stable.
    """
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bytes):
        return "X'" + value.hex() + "'"
    return str(value)


@dataclass(frozen=True)
class DatabaseSpec:
    """Executable definition of one database: DDL + DML + rendered schema."""

    db_id: str
    create_statements: tuple[str, ...]
    insert_statements: tuple[str, ...]
    schema_text: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "create_statements", tuple(self.create_statements))
        object.__setattr__(self, "insert_statements", tuple(self.insert_statements))


@dataclass(frozen=True)
class QuestionRecord:
    question_id: str
    db_id: str
    text: str
    category: str
    source_keywords: tuple[str, ...] = ()
    pipeline_stage: str = "confirmed"

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.pipeline_stage not in PIPELINE_STAGES:
            raise ValueError(f"unknown pipeline_stage {self.pipeline_stage!r}")
        object.__setattr__(self, "source_keywords", tuple(self.source_keywords))


@dataclass(frozen=True)
class ReferenceAnswer:
    question_id: str
    text: str
    evidence_note: str = ""
    word_count: int = -1

    def __post_init__(self) -> None:
        if self.word_count < 0:
            object.__setattr__(self, "word_count", word_count(self.text))


@dataclass(frozen=True)
class Step:
    kind: str
    content: str
    iteration_index: int = 0

    def __post_init__(self) -> None:
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")
        if self.iteration_index < 0:
            raise ValueError("iteration_index must be >= 0")


@dataclass(frozen=True)
class Transcript:
    """Ordered record of one agent run.

    final_answer is present iff aborted_reason is absent; cap_reached marks
    iterative runs that hit the iteration limit but still synthesized.
    """

    question_id: str
    strategy: str
    model_id: str
    steps: tuple[Step, ...]
    final_answer: str | None = None
    aborted_reason: str | None = None
    cap_reached: bool = False

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.aborted_reason is not None and self.aborted_reason not in ABORT_REASONS:
            raise ValueError(f"unknown aborted_reason {self.aborted_reason!r}")
        if (self.final_answer is None) == (self.aborted_reason is None):
            raise ValueError("final_answer must be present iff aborted_reason is absent")
        object.__setattr__(self, "steps", tuple(self.steps))


@dataclass(frozen=True)
class SqlExecution:
    """One query's outcome. Validity = status ok and at least one row."""

    query: str
    status: str
    columns: tuple[str, ...] = ()
    rows: tuple[tuple[str, ...], ...] = ()
    row_count: int = 0
    truncated: bool = False
    error_message: str | None = None

    def __post_init__(self) -> None:
        if self.status not in ("ok", "error"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "error" and (self.row_count != 0 or self.error_message is None):
            raise ValueError("error executions carry a message and no rows")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))


@dataclass(frozen=True)
class RunConfig:
    model_id: str
    provider_id: str
    strategy: str
    agent_temperature: float = 0.0
    evaluator_temperature: float = 0.7
    max_iterations: int = 10
    row_limit: int = 50
    context_token_budget: int = 8000
    max_output_tokens: int = 1024
    reviewer_count: int = 3
    meta_reviewer_count: int = 3
    random_seed: int = 0
    evaluator_model_id: str = ""

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        for name in ("agent_temperature", "evaluator_temperature"):
            value = getattr(self, name)
            if not 0.0 <= value <= 2.0:
                raise ValueError(f"{name} must be in [0, 2]")
        if self.max_iterations < 1 or self.row_limit < 1:
            raise ValueError("max_iterations and row_limit must be >= 1")
        if self.reviewer_count < 1 or self.reviewer_count % 2 == 0:
            raise ValueError("reviewer_count must be an odd integer >= 1")
        if self.meta_reviewer_count < 1 or self.meta_reviewer_count % 2 == 0:
            raise ValueError("meta_reviewer_count must be an odd integer >= 1")
        if not self.evaluator_model_id:
            object.__setattr__(self, "evaluator_model_id", self.model_id)


Instance = tuple[DatabaseSpec, QuestionRecord, ReferenceAnswer]


@dataclass(frozen=True)
class ValidationReport:
    failures: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.failures


def _canonical_json(data: object) -> str:
    return json.dumps(data, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def question_to_json(q: QuestionRecord) -> str:
    return _canonical_json(asdict(q) | {"source_keywords": list(q.source_keywords)})


def answer_to_json(a: ReferenceAnswer) -> str:
    return _canonical_json(asdict(a))


def transcript_to_dict(t: Transcript) -> dict:
    return {
        "question_id": t.question_id,
        "strategy": t.strategy,
        "model_id": t.model_id,
        "steps": [asdict(s) for s in t.steps],
        "final_answer": t.final_answer,
        "aborted_reason": t.aborted_reason,
        "cap_reached": t.cap_reached,
    }


def transcript_from_dict(data: dict) -> Transcript:
    return Transcript(
        question_id=data["question_id"],
        strategy=data["strategy"],
        model_id=data["model_id"],
        steps=tuple(Step(**s) for s in data["steps"]),
        final_answer=data.get("final_answer"),
        aborted_reason=data.get("aborted_reason"),
        cap_reached=data.get("cap_reached", False),
    )


def _load_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise DatasetError(f"{path}: {exc}") from exc


def _parse_question(path: Path, data: dict) -> QuestionRecord:
    try:
        return QuestionRecord(
            question_id=data["question_id"],
            db_id=data["db_id"],
            text=data["text"],
            category=data["category"],
            source_keywords=tuple(data.get("source_keywords", ())),
            pipeline_stage=data.get("pipeline_stage", "confirmed"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: invalid question record: {exc}") from exc


def _parse_answer(path: Path, data: dict) -> ReferenceAnswer:
    try:
        return ReferenceAnswer(
            question_id=data["question_id"],
            text=data["text"],
            evidence_note=data.get("evidence_note", ""),
            word_count=data.get("word_count", -1),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: invalid reference answer: {exc}") from exc


def load_dataset(path: str | Path) -> list[Instance]:
    """Load every instance under ``path``.

    The layout is one directory per instance holding ``database.sql``,
    ``question.json`` and ``answer.json``, indexed by a top-level
    ``manifest.jsonl`` (one line per instance: ids, category, relative path).
    An empty or absent manifest yields an empty list.
    """
    from .sandbox import render_schema_text  # local import to avoid a cycle
    from .sqltext import split_sql_script

    root = Path(path)
    manifest = root / "manifest.jsonl"
    if not manifest.exists():
        return []

    instances: list[Instance] = []
    seen_qids: set[str] = set()
    with open(manifest, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{manifest}:{lineno}: malformed manifest line: {exc.msg}") from exc
            for key in ("question_id", "db_id", "category", "path"):
                if key not in entry:
                    raise DatasetError(f"{manifest}:{lineno}: missing field {key!r}")

            inst_dir = root / entry["path"]
            db_file = inst_dir / "database.sql"
            if not db_file.exists():
                raise ReferentialIntegrityError(
                    f"{manifest}:{lineno}: question {entry['question_id']!r} references "
                    f"database {entry['db_id']!r} but {db_file} does not exist"
                )

            creates, inserts = split_sql_script(db_file.read_text(encoding="utf-8"))
            spec = DatabaseSpec(
                db_id=entry["db_id"],
                create_statements=creates,
                insert_statements=inserts,
                schema_text=render_schema_text(creates),
            )
            question = _parse_question(inst_dir / "question.json", _load_json(inst_dir / "question.json"))
            answer = _parse_answer(inst_dir / "answer.json", _load_json(inst_dir / "answer.json"))

            if question.question_id in seen_qids:
                raise DatasetError(f"{manifest}:{lineno}: duplicate question_id {question.question_id!r}")
            seen_qids.add(question.question_id)
            if question.db_id != spec.db_id:
                raise ReferentialIntegrityError(
                    f"{manifest}:{lineno}: question {question.question_id!r} references "
                    f"db_id {question.db_id!r} but the instance database is {spec.db_id!r}"
                )
            instances.append((spec, question, answer))
    return instances


def save_dataset(instances: list[Instance], path: str | Path) -> None:
    """Write the on-disk layout that load_dataset reads back bit-exactly."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest_lines = []
    for spec, question, answer in instances:
        inst_dir = root / question.question_id
        inst_dir.mkdir(parents=True, exist_ok=True)
        sql_text = "\n\n".join(f"{stmt};" for stmt in spec.create_statements + spec.insert_statements)
        (inst_dir / "database.sql").write_text(sql_text + "\n", encoding="utf-8")
        (inst_dir / "question.json").write_text(question_to_json(question), encoding="utf-8")
        (inst_dir / "answer.json").write_text(answer_to_json(answer), encoding="utf-8")
        manifest_lines.append(
            json.dumps(
                {
                    "question_id": question.question_id,
                    "db_id": spec.db_id,
                    "category": question.category,
                    "path": question.question_id,
                },
                ensure_ascii=False,
            )
        )
    (root / "manifest.jsonl").write_text("\n".join(manifest_lines) + ("\n" if manifest_lines else ""), encoding="utf-8")


def validate_instance(spec: DatabaseSpec, q: QuestionRecord, a: ReferenceAnswer) -> ValidationReport:
    """Check every instance invariant; failures are data, not errors."""
    from .sandbox import SandboxError, create_sandbox

    failures: list[str] = []
    if not spec.create_statements:
        failures.append("database creates no tables")
    if not spec.schema_text.strip():
        failures.append("schema_text is empty")
    try:
        handle = create_sandbox(spec, row_limit=1, timeout_ms=5000)
        handle.close()
    except SandboxError as exc:
        failures.append(f"sandbox execution failed: {exc}")

    if q.db_id != spec.db_id:
        failures.append(f"question db_id {q.db_id!r} does not match database {spec.db_id!r}")
    if q.pipeline_stage != "confirmed":
        failures.append(f"question pipeline_stage is {q.pipeline_stage!r}, expected 'confirmed'")
    if not q.text.strip():
        failures.append("question text is empty")

    if a.question_id != q.question_id:
        failures.append(f"answer question_id {a.question_id!r} does not match {q.question_id!r}")
    if not a.text.strip():
        failures.append("missing answer: reference text is empty")
    if a.word_count != word_count(a.text):
        failures.append(
            f"answer word_count {a.word_count} does not match recomputed {word_count(a.text)}"
        )
    return ValidationReport(tuple(failures))
