from __future__ import annotations

import pytest

from dbqa_bench.model import DatabaseSpec, QuestionRecord, ReferenceAnswer
from dbqa_bench.sandbox import render_schema_text

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"ACCEPTANCE {name}: {outcome}")


def make_spec(db_id: str = "db1", n_rows: int = 3) -> DatabaseSpec:
    creates = (
        "CREATE TABLE singer (id INTEGER PRIMARY KEY, name TEXT, country TEXT, sales REAL)",
    )
    inserts = tuple(
        f"INSERT INTO singer VALUES ({i}, 'singer {i}', "
        f"'{'France' if i % 2 == 0 else 'Japan'}', {i * 10.5})"
        for i in range(1, n_rows + 1)
    )
    return DatabaseSpec(
        db_id=db_id,
        create_statements=creates,
        insert_statements=inserts,
        schema_text=render_schema_text(creates),
    )


def make_question(
    qid: str = "q1",
    db_id: str = "db1",
    category: str = "conclusive",
    text: str = "Do French singers outsell Japanese singers?",
) -> QuestionRecord:
    return QuestionRecord(
        question_id=qid,
        db_id=db_id,
        text=text,
        category=category,
        source_keywords=("French singers",),
        pipeline_stage="confirmed",
    )


def make_answer(qid: str = "q1", text: str = "French singers outsell Japanese singers overall.") -> ReferenceAnswer:
    return ReferenceAnswer(question_id=qid, text=text, evidence_note="injected sales records")


@pytest.fixture
def spec() -> DatabaseSpec:
    return make_spec()


@pytest.fixture
def question() -> QuestionRecord:
    return make_question()


@pytest.fixture
def answer() -> ReferenceAnswer:
    return make_answer()
