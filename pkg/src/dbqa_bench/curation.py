"""HTTP service for the human curation loop over the draft queue.

A single shared bearer token guards every endpoint except /health; this
is a local research utility, not a public service. Writes go through one
lock and hit the draft store before the response is sent, so accepted
actions survive restarts.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import replace
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from pydantic import BaseModel

from .forge import (
    STAGE_CLASSIFIED,
    STAGE_CONCLUDED,
    STAGE_CONDENSED,
    STAGE_CONFIRMED,
    STAGE_CONSTRUCTED,
    STAGE_ORDER,
    STAGE_REJECTED,
    DraftItem,
    DraftStore,
    PipelineError,
    ReviewLogEntry,
    draft_to_dict,
    finalize_instance,
    merged_database,
)
from .model import CATEGORIES, DatabaseSpec, Instance, answer_to_json, question_to_json
from .sandbox import create_sandbox, list_tables, table_rows

logger = logging.getLogger(__name__)

PREVIEW_ROWS = 20

_EDIT_STAGES = {STAGE_CONDENSED: "question_text", STAGE_CONCLUDED: "reference_text"}
_PREVIEW_STAGES = set(STAGE_ORDER[STAGE_ORDER.index(STAGE_CONSTRUCTED) :])


class ActionBody(BaseModel):
    action: str
    payload: str | None = None
    actor: str = "reviewer"


def append_instance(instance: Instance, root: str | Path) -> None:
    """Add one finalized instance to a dataset directory, manifest included."""
    spec, question, answer = instance
    base = Path(root)
    inst_dir = base / question.question_id
    inst_dir.mkdir(parents=True, exist_ok=True)
    sql_text = "\n\n".join(f"{stmt};" for stmt in spec.create_statements + spec.insert_statements)
    (inst_dir / "database.sql").write_text(sql_text + "\n", encoding="utf-8")
    (inst_dir / "question.json").write_text(question_to_json(question), encoding="utf-8")
    (inst_dir / "answer.json").write_text(answer_to_json(answer), encoding="utf-8")
    line = json.dumps(
        {
            "question_id": question.question_id,
            "db_id": spec.db_id,
            "category": question.category,
            "path": question.question_id,
        },
        ensure_ascii=False,
    )
    with open(base / "manifest.jsonl", "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def _database_preview(draft: DraftItem, spec: DatabaseSpec) -> dict | None:
    if draft.stage not in _PREVIEW_STAGES or draft.injected_inserts is None:
        return None
    merged = merged_database(draft, spec)
    with create_sandbox(merged) as handle:
        tables = {}
        for table in list_tables(handle):
            columns, rows = table_rows(handle, table, limit=PREVIEW_ROWS)
            count = handle.connection.execute(f'SELECT COUNT(*) FROM "{table}"').fetchone()[0]
            tables[table] = {
                "row_count": count,
                "columns": columns,
                "rows": [[str(c) if c is not None else None for c in row] for row in rows],
            }
    return {"tables": tables}


def create_app(
    store: DraftStore,
    schemas: dict[str, DatabaseSpec],
    out_dir: str | Path | None = None,
    token: str = "",
    clock=time.time,
) -> FastAPI:
    app = FastAPI(title="dbqa-bench curation")
    write_lock = threading.Lock()

    def check_auth(request: Request) -> None:
        if not token:
            return
        header = request.headers.get("Authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    def get_draft(draft_id: str) -> DraftItem:
        try:
            return store.load(draft_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no draft {draft_id!r}") from None

    def get_spec(draft: DraftItem) -> DatabaseSpec:
        spec = schemas.get(draft.db_id)
        if spec is None:
            raise HTTPException(status_code=409, detail=f"no source schema for {draft.db_id!r}")
        return spec

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/drafts")
    def list_pending(
        stage: str | None = None,
        page: int = Query(1, ge=1),
        page_size: int = Query(20, ge=1, le=200),
        _: None = Depends(check_auth),
    ) -> dict:
        drafts = store.list_drafts(stage=stage)
        start = (page - 1) * page_size
        items = [
            {
                "draft_id": d.draft_id,
                "stage": d.stage,
                "question_preview": d.question_text[:120],
                "proposed_category": d.proposed_category,
            }
            for d in drafts[start : start + page_size]
        ]
        return {"items": items, "total": len(drafts), "page": page, "page_size": page_size}

    @app.get("/drafts/{draft_id}")
    def get_draft_detail(draft_id: str, _: None = Depends(check_auth)) -> dict:
        draft = get_draft(draft_id)
        detail = draft_to_dict(draft)
        spec = schemas.get(draft.db_id)
        detail["preview"] = _database_preview(draft, spec) if spec is not None else None
        return detail

    @app.post("/drafts/{draft_id}/actions")
    def submit_action(draft_id: str, body: ActionBody, _: None = Depends(check_auth)) -> dict:
        with write_lock:
            draft = get_draft(draft_id)
            updated = _apply_action(draft, body)
            store.save(updated)
            if body.action == "approve":
                _emit_instance(updated)
            return draft_to_dict(updated)

    def _entry(action: str, actor: str, note: str) -> ReviewLogEntry:
        return ReviewLogEntry(
            timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(clock())),
            actor=actor,
            action=action,
            note=note,
        )

    def _apply_action(draft: DraftItem, body: ActionBody) -> DraftItem:
        if draft.stage == STAGE_REJECTED:
            raise HTTPException(status_code=409, detail="draft is rejected (terminal)")

        if body.action == "reject":
            entry = _entry("reject", body.actor, body.payload or "")
            return replace(draft, stage=STAGE_REJECTED, review_log=draft.review_log + (entry,))

        if body.action == "edit":
            field = _EDIT_STAGES.get(draft.stage)
            if field is None:
                raise HTTPException(
                    status_code=409, detail=f"edit is not legal at stage {draft.stage!r}"
                )
            if not body.payload or not body.payload.strip():
                raise HTTPException(status_code=422, detail="edit requires a non-empty payload")
            entry = _entry("edit", body.actor, f"replaced {field}")
            return replace(
                draft, **{field: body.payload}, review_log=draft.review_log + (entry,)
            )

        if body.action == "set_category":
            if draft.stage != STAGE_CLASSIFIED:
                raise HTTPException(
                    status_code=409, detail=f"set_category is not legal at stage {draft.stage!r}"
                )
            if body.payload not in CATEGORIES:
                raise HTTPException(
                    status_code=422, detail="payload must be 'conclusive' or 'interpretive'"
                )
            entry = _entry("set_category", body.actor, f"category set to {body.payload}")
            return replace(
                draft, proposed_category=body.payload, review_log=draft.review_log + (entry,)
            )

        if body.action == "approve":
            if draft.stage != STAGE_CLASSIFIED:
                raise HTTPException(
                    status_code=409, detail=f"approve is not legal at stage {draft.stage!r}"
                )
            candidate = replace(
                draft,
                stage=STAGE_CONFIRMED,
                review_log=draft.review_log + (_entry("approve", body.actor, body.payload or ""),),
            )
            spec = get_spec(candidate)
            try:
                finalize_instance(candidate, spec)
            except PipelineError as exc:
                failed = replace(
                    draft,
                    review_log=draft.review_log
                    + (_entry("approve_failed", body.actor, str(exc)),),
                )
                store.save(failed)
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            return candidate

        raise HTTPException(status_code=422, detail=f"unknown action {body.action!r}")

    def _emit_instance(draft: DraftItem) -> None:
        if out_dir is None:
            return
        spec = get_spec(draft)
        instance = finalize_instance(draft, spec)
        append_instance(instance, out_dir)
        logger.info("emitted instance %s", draft.draft_id)

    return app
