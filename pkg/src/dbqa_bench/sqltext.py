"""SQL text utilities: statement splitting and query extraction.

The splitter understands single-quoted strings (with '' escapes), double
quotes and backticks for identifiers, bracket quoting, line comments and
block comments, so INSERT values containing ';' never break a statement.
"""

from __future__ import annotations

import re

_FENCE_RE = re.compile(r"```sql\s*\n(.*?)```", re.IGNORECASE | re.DOTALL)


def split_statements(text: str) -> list[str]:
    """Split a SQL script into individual ';'-terminated statements.

    Statement text is returned stripped and without the trailing ';'.
    A final unterminated statement is kept if it is non-empty.
    """
    statements: list[str] = []
    buf: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "'" or ch == '"' or ch == "`":
            quote = ch
            buf.append(ch)
            i += 1
            while i < n:
                buf.append(text[i])
                if text[i] == quote:
                    # '' inside a '-string is an escaped quote, not a close
                    if quote == "'" and i + 1 < n and text[i + 1] == "'":
                        buf.append(text[i + 1])
                        i += 2
                        continue
                    i += 1
                    break
                i += 1
            continue
        if ch == "[":
            end = text.find("]", i)
            end = n if end == -1 else end + 1
            buf.append(text[i:end])
            i = end
            continue
        if ch == "-" and text[i : i + 2] == "--":
            end = text.find("\n", i)
            end = n if end == -1 else end
            buf.append(text[i:end])
            i = end
            continue
        if ch == "/" and text[i : i + 2] == "/*":
            end = text.find("*/", i)
            end = n if end == -1 else end + 2
            buf.append(text[i:end])
            i = end
            continue
        if ch == ";":
            stmt = "".join(buf).strip()
            if stmt:
                statements.append(stmt)
            buf = []
            i += 1
            continue
        buf.append(ch)
        i += 1
    tail = "".join(buf).strip()
    if tail:
        statements.append(tail)
    return statements


def split_sql_script(script: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Split a database dump into (create_statements, dml_statements).

    Statements starting with CREATE go into the DDL bucket, everything
    else (INSERT and friends) into the DML bucket, preserving order.
    """
    creates: list[str] = []
    dml: list[str] = []
    for stmt in split_statements(script):
        head = stmt.lstrip().upper()
        if head.startswith("CREATE"):
            creates.append(stmt)
        else:
            dml.append(stmt)
    return tuple(creates), tuple(dml)


def is_single_statement(query: str) -> bool:
    return len(split_statements(query)) == 1


def _strip_terminator(stmt: str) -> str:
    return stmt.strip().rstrip(";").strip()


def extract_statements(
    text: str, keywords: tuple[str, ...], filter_fenced: bool = False
) -> list[str]:
    """Pull SQL statements out of free-form model text.

    All ```sql fenced blocks are taken first, in order, each split into
    statements (filtered to ``keywords`` only when ``filter_fenced``).
    When there is no fence, falls back to maximal ';'-terminated segments
    beginning with a keyword. Surrounding prose is stripped; the result
    is deterministic.
    """
    fences = _FENCE_RE.findall(text)
    results: list[str] = []
    if fences:
        for block in fences:
            for stmt in split_statements(block):
                if not filter_fenced or stmt.lstrip().upper().startswith(keywords):
                    results.append(_strip_terminator(stmt))
        return results
    pattern = re.compile(
        r"\b(?:" + "|".join(keywords) + r")\b[^;]*;",
        re.IGNORECASE | re.DOTALL,
    )
    for match in pattern.finditer(text):
        results.append(_strip_terminator(match.group(0)))
    return results


def extract_sql_queries(text: str) -> list[str]:
    """Ordered read-query extraction: fenced ```sql blocks, else inline SELECT/WITH."""
    return extract_statements(text, ("SELECT", "WITH"))


def extract_insert_statements(text: str) -> list[str]:
    """Ordered INSERT extraction used by the record-construction pipeline."""
    return extract_statements(text, ("INSERT",), filter_fenced=True)
