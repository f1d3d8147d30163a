"""Isolated SQL execution against a per-instance in-memory database.

Every handle owns a private copy of the database built from the spec's
statements, so agent writes never leak across instances or back to disk.
"""

from __future__ import annotations

import math
import sqlite3
import time

from .model import DatabaseSpec, SqlExecution, render_cell
from .sqltext import is_single_statement

DEFAULT_ROW_LIMIT = 50
DEFAULT_TIMEOUT_MS = 5000

# Progress-handler granularity: small enough to catch runaway joins quickly.
_PROGRESS_OPCODES = 2000


class SandboxError(Exception):
    """Sandbox construction failed; carries statement index and engine message."""

    def __init__(self, message: str, statement_index: int | None = None, statement: str | None = None):
        super().__init__(message)
        self.statement_index = statement_index
        self.statement = statement


class SandboxUsageError(Exception):
    """The handle was used after close."""


def estimate_tokens(text: str) -> int:
    """Character/4 heuristic; exact tokenizers are provider-specific."""
    return math.ceil(len(text) / 4)


def render_schema_text(create_statements: tuple[str, ...]) -> str:
    """Create statements in declaration order, one blank line between tables."""
    return "\n\n".join(create_statements)


def render_schema(spec: DatabaseSpec) -> str:
    """Deterministic schema rendering; byte-identical across calls."""
    return render_schema_text(spec.create_statements)


class SandboxHandle:
    """One private database session. Confined to a single thread."""

    def __init__(
        self,
        db_id: str,
        conn: sqlite3.Connection,
        row_limit: int,
        timeout_ms: int,
        schema_text: str = "",
    ):
        self.db_id = db_id
        self.row_limit = row_limit
        self.timeout_ms = timeout_ms
        self.schema_text = schema_text
        self._conn: sqlite3.Connection | None = conn

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def __enter__(self) -> "SandboxHandle":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    @property
    def connection(self) -> sqlite3.Connection:
        if self._conn is None:
            raise SandboxUsageError(f"sandbox for {self.db_id!r} is closed")
        return self._conn


def create_sandbox(
    spec: DatabaseSpec,
    row_limit: int = DEFAULT_ROW_LIMIT,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> SandboxHandle:
    """Build a fresh private database by executing create then insert statements."""
    conn = sqlite3.connect(":memory:", isolation_level=None)
    statements = spec.create_statements + spec.insert_statements
    for index, statement in enumerate(statements):
        try:
            conn.execute(statement)
        except sqlite3.Error as exc:
            conn.close()
            raise SandboxError(
                f"statement {index} failed for {spec.db_id!r}: {exc}",
                statement_index=index,
                statement=statement,
            ) from exc
    return SandboxHandle(
        spec.db_id,
        conn,
        row_limit=row_limit,
        timeout_ms=timeout_ms,
        schema_text=render_schema(spec),
    )


def execute_query(handle: SandboxHandle, query: str) -> SqlExecution:
    """Run one statement and capture the outcome; never raises for bad SQL."""
    conn = handle.connection

    stripped = query.strip()
    if not stripped:
        return SqlExecution(query=query, status="error", error_message="empty query")
    if not is_single_statement(stripped):
        return SqlExecution(
            query=query,
            status="error",
            error_message="multiple statements are not allowed; issue one statement per call",
        )

    deadline = time.monotonic() + handle.timeout_ms / 1000.0
    timed_out = False

    def _watchdog() -> int:
        nonlocal timed_out
        if time.monotonic() > deadline:
            timed_out = True
            return 1
        return 0

    conn.set_progress_handler(_watchdog, _PROGRESS_OPCODES)
    try:
        cursor = conn.execute(stripped)
        fetched = cursor.fetchmany(handle.row_limit + 1)
        columns = tuple(d[0] for d in cursor.description) if cursor.description else ()
    except sqlite3.Error as exc:
        if timed_out:
            message = f"timeout: query exceeded {handle.timeout_ms} ms"
        else:
            message = str(exc)
        return SqlExecution(query=query, status="error", error_message=message)
    finally:
        conn.set_progress_handler(None, 0)

    truncated = len(fetched) > handle.row_limit
    kept = fetched[: handle.row_limit]
    rows = tuple(tuple(render_cell(cell) for cell in row) for row in kept)
    return SqlExecution(
        query=query,
        status="ok",
        columns=columns,
        rows=rows,
        row_count=len(rows),
        truncated=truncated,
    )


def is_valid(execution: SqlExecution) -> bool:
    """Valid = successful execution with a non-empty result set."""
    return execution.status == "ok" and execution.row_count > 0


def _sql_literal(value: object) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, (int, float)):
        return render_cell(value)
    if isinstance(value, bytes):
        return "X'" + value.hex() + "'"
    return "'" + str(value).replace("'", "''") + "'"


def list_tables(handle: SandboxHandle) -> list[str]:
    cursor = handle.connection.execute(
        "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%'"
    )
    return [row[0] for row in cursor.fetchall()]


def table_rows(handle: SandboxHandle, table: str, limit: int | None = None) -> tuple[list[str], list[tuple]]:
    """Raw contents of one table in insertion order; bypasses the row limit."""
    suffix = f" LIMIT {int(limit)}" if limit is not None else ""
    cursor = handle.connection.execute(f'SELECT * FROM "{table}"{suffix}')
    columns = [d[0] for d in cursor.description]
    return columns, cursor.fetchall()


def dump_records(handle: SandboxHandle, token_budget: int) -> tuple[str, bool]:
    """Schema text plus every table's full contents as insert-style rows.

    Returns (text, overflow); overflow is True when the estimated token
    count exceeds the budget. The text is returned either way.
    """
    schema = handle.schema_text
    if not schema:
        creates = [
            row[0]
            for row in handle.connection.execute(
                "SELECT sql FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%'"
            ).fetchall()
            if row[0]
        ]
        schema = render_schema_text(tuple(creates))
    parts = [schema]
    for table in list_tables(handle):
        _, rows = table_rows(handle, table)
        lines = [
            f"INSERT INTO {table} VALUES (" + ", ".join(_sql_literal(cell) for cell in row) + ");"
            for row in rows
        ]
        if lines:
            parts.append("\n".join(lines))
    text = "\n\n".join(part for part in parts if part)
    return text, estimate_tokens(text) > token_budget


def render_execution(execution: SqlExecution) -> str:
    """Fixed tabular rendering of one result, as shown to agents and reviewers.

    The first lines (Status / Columns / Rows (n)) are machine-parseable so
    interaction stats can be recomputed from a transcript alone.
    """
    if execution.status == "error":
        return f"Status: error\nError: {execution.error_message}"
    lines = [
        "Status: ok",
        "Columns: " + " | ".join(execution.columns),
        f"Rows ({execution.row_count}):",
    ]
    lines.extend(" | ".join(row) for row in execution.rows)
    if execution.truncated:
        lines.append("(truncated)")
    return "\n".join(lines)


def parse_execution_rendering(text: str) -> tuple[str, int]:
    """Recover (status, row_count) from a render_execution() string."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("Status: "):
        raise ValueError("not an execution rendering")
    status = lines[0][len("Status: ") :]
    if status == "error":
        return "error", 0
    for line in lines[1:]:
        if line.startswith("Rows (") and line.endswith("):"):
            return "ok", int(line[len("Rows (") : -2])
    raise ValueError("ok rendering without a row-count line")


def rendering_is_valid(text: str) -> bool:
    status, row_count = parse_execution_rendering(text)
    return status == "ok" and row_count > 0
