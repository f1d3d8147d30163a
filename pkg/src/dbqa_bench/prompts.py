"""Prompt assembly from external template files with named placeholders."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

from .gateway import ChatMessage
from .model import STRATEGY_ITERATIVE, STRATEGY_NONE, STRATEGY_SEQUENTIAL

SUBTASK_PLANNING = "interaction_planning"
SUBTASK_TOOL = "tool_employment"
SUBTASK_SYNTHESIS = "information_synthesis"
SUBTASK_KINDS = (SUBTASK_PLANNING, SUBTASK_TOOL, SUBTASK_SYNTHESIS)

TEMPLATES_DIR = Path(__file__).parent / "templates"

_TEMPLATE_BY_TASK = {
    (SUBTASK_SYNTHESIS, STRATEGY_NONE): "no_interaction",
    (SUBTASK_PLANNING, STRATEGY_SEQUENTIAL): "sequential_plan",
    (SUBTASK_TOOL, STRATEGY_SEQUENTIAL): "sequential_sql",
    (SUBTASK_SYNTHESIS, STRATEGY_SEQUENTIAL): "sequential_synthesis",
    (SUBTASK_PLANNING, STRATEGY_ITERATIVE): "iterative_plan",
    (SUBTASK_TOOL, STRATEGY_ITERATIVE): "iterative_sql",
    (SUBTASK_SYNTHESIS, STRATEGY_ITERATIVE): "iterative_synthesis",
}


class TemplateError(Exception):
    """Unknown template or a placeholder without a value."""


class _Strict(dict):
    def __missing__(self, key: str) -> str:
        raise TemplateError(f"no value supplied for placeholder {{{key}}}")


@lru_cache(maxsize=None)
def _load(path: str) -> str:
    file = Path(path)
    if not file.exists():
        raise TemplateError(f"template file not found: {file}")
    return file.read_text(encoding="utf-8")


def render_template(name: str, values: dict[str, str], templates_dir: Path | None = None) -> str:
    directory = templates_dir or TEMPLATES_DIR
    return _load(str(directory / f"{name}.txt")).format_map(_Strict(values))


def build_prompt(
    kind: str,
    strategy: str,
    *,
    question: str,
    schema: str = "",
    plan: str = "",
    history: str = "",
    database_records: str = "",
    templates_dir: Path | None = None,
) -> tuple[ChatMessage, ...]:
    """Deterministic prompt for one sub-task; the filled text doubles as
    the input_bundle stored for later review."""
    template = _TEMPLATE_BY_TASK.get((kind, strategy))
    if template is None:
        raise TemplateError(f"no template registered for kind={kind!r} strategy={strategy!r}")
    text = render_template(
        template,
        {
            "question": question,
            "schema": schema,
            "plan": plan,
            "history": history,
            "database_records": database_records,
        },
        templates_dir=templates_dir,
    )
    return (ChatMessage(role="user", content=text),)
