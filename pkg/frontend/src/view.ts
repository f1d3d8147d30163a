import { buttonsForStage, editableField, nextIndex, ReviewConsole } from "./console.js";
import type { ActionButton, QueueViewState } from "./console.js";
import type { DraftDetail, DraftSummary, TablePreview } from "./types.js";

const SQL_KEYWORDS =
  /\b(INSERT|INTO|VALUES|SELECT|FROM|WHERE|CREATE|TABLE|PRIMARY|KEY|INTEGER|TEXT|REAL|NULL|AND|OR|NOT)\b/gi;

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export function highlightSql(statement: string): HTMLElement {
  const code = el("code", "sql");
  let last = 0;
  for (const match of statement.matchAll(SQL_KEYWORDS)) {
    const index = match.index ?? 0;
    if (index > last) code.append(statement.slice(last, index));
    const keyword = el("span", "sql-keyword", match[0]);
    code.append(keyword);
    last = index + match[0].length;
  }
  if (last < statement.length) code.append(statement.slice(last));
  return code;
}

export function renderErrorBanner(message: string, onRetry: () => void): HTMLElement {
  const banner = el("div", "error-banner");
  banner.setAttribute("role", "alert");
  banner.append(el("span", "error-text", message));
  const retry = el("button", "retry-button", "Retry");
  retry.addEventListener("click", onRetry);
  banner.append(retry);
  return banner;
}

export function renderQueue(
  summaries: DraftSummary[],
  selectedId: string | null,
  onSelect: (draftId: string) => void,
): HTMLElement {
  const list = el("ul", "queue");
  list.tabIndex = 0;
  if (summaries.length === 0) {
    const empty = el("li", "queue-empty", "No drafts in this view.");
    list.append(empty);
    return list;
  }
  summaries.forEach((summary) => {
    const row = el("li", "queue-row");
    row.dataset.draftId = summary.draft_id;
    if (summary.draft_id === selectedId) row.classList.add("selected");
    row.append(el("span", `stage-badge stage-${summary.stage}`, summary.stage));
    if (summary.proposed_category) {
      row.append(el("span", `category-chip ${summary.proposed_category}`, summary.proposed_category));
    }
    row.append(el("span", "preview", summary.question_preview));
    row.addEventListener("click", () => onSelect(summary.draft_id));
    list.append(row);
  });
  list.addEventListener("keydown", (event) => {
    const rows = [...list.querySelectorAll<HTMLElement>(".queue-row")];
    const current = rows.findIndex((row) => row.classList.contains("selected"));
    const target = nextIndex(current, event.key, rows.length);
    if (target !== current && target >= 0) {
      const id = rows[target]?.dataset.draftId;
      if (id) onSelect(id);
      event.preventDefault();
    }
  });
  return list;
}

function renderPreviewTable(name: string, preview: TablePreview): HTMLElement {
  const wrapper = el("div", "table-preview");
  wrapper.append(el("h4", "", `${name} (${preview.row_count} rows)`));
  const table = el("table");
  const head = el("tr");
  preview.columns.forEach((column) => head.append(el("th", "", column)));
  table.append(head);
  preview.rows.forEach((row) => {
    const tr = el("tr");
    row.forEach((cell) => tr.append(el("td", cell === null ? "null-cell" : "", cell ?? "NULL")));
    table.append(tr);
  });
  wrapper.append(table);
  return wrapper;
}

export interface DetailHandlers {
  onAction: (button: ActionButton) => void;
  onEditStart: () => void;
  onEditChange: (text: string) => void;
  onEditSubmit: () => void;
  onEditCancel: () => void;
}

export function renderDetail(
  detail: DraftDetail,
  editBuffer: string | null,
  handlers: DetailHandlers,
): HTMLElement {
  const pane = el("section", "detail");
  const header = el("header");
  header.append(el("h2", "", detail.draft_id));
  header.append(el("span", `stage-badge stage-${detail.stage}`, detail.stage));
  if (detail.proposed_category) {
    header.append(el("span", `category-chip ${detail.proposed_category}`, detail.proposed_category));
  }
  pane.append(header);

  const question = el("div", "question-block");
  question.append(el("h3", "", "Question"));
  if (editBuffer !== null && editableField(detail.stage) === "question_text") {
    question.append(renderEditor(editBuffer, handlers));
  } else {
    question.append(el("p", "question-text", detail.question_text));
  }
  pane.append(question);

  if (detail.conjecture) {
    const conjecture = el("div", "conjecture-block");
    conjecture.append(el("h3", "", "Conjecture"));
    conjecture.append(el("p", "", detail.conjecture));
    pane.append(conjecture);
  }

  if (detail.injected_inserts && detail.injected_inserts.length > 0) {
    const inserts = el("div", "inserts-block");
    inserts.append(el("h3", "", "Injected records"));
    detail.injected_inserts.forEach((statement) => {
      const pre = el("pre", "insert-statement");
      pre.append(highlightSql(statement));
      inserts.append(pre);
    });
    pane.append(inserts);
  }

  if (detail.preview) {
    const preview = el("div", "preview-block");
    preview.append(el("h3", "", "Database preview"));
    for (const [name, table] of Object.entries(detail.preview.tables)) {
      preview.append(renderPreviewTable(name, table));
    }
    pane.append(preview);
  }

  if (detail.reference_text) {
    const answer = el("div", "answer-block");
    answer.append(el("h3", "", "Reference answer"));
    if (editBuffer !== null && editableField(detail.stage) === "reference_text") {
      answer.append(renderEditor(editBuffer, handlers));
    } else {
      answer.append(el("p", "answer-text", detail.reference_text));
    }
    pane.append(answer);
  }

  const actions = el("div", "actions");
  for (const button of buttonsForStage(detail.stage)) {
    const node = el("button", `action-${button}`, label(button));
    node.addEventListener("click", () =>
      button === "edit" ? handlers.onEditStart() : handlers.onAction(button),
    );
    actions.append(node);
  }
  pane.append(actions);
  return pane;
}

function renderEditor(buffer: string, handlers: DetailHandlers): HTMLElement {
  const editor = el("div", "editor");
  const area = el("textarea", "edit-buffer");
  area.value = buffer;
  area.addEventListener("input", () => handlers.onEditChange(area.value));
  const save = el("button", "edit-save", "Save");
  save.addEventListener("click", handlers.onEditSubmit);
  const cancel = el("button", "edit-cancel", "Cancel");
  cancel.addEventListener("click", handlers.onEditCancel);
  editor.append(area, save, cancel);
  return editor;
}

function label(button: ActionButton): string {
  switch (button) {
    case "approve":
      return "Approve";
    case "edit":
      return "Edit";
    case "reject":
      return "Reject";
    case "set_category_conclusive":
      return "Mark conclusive";
    case "set_category_interpretive":
      return "Mark interpretive";
  }
}

export function renderConflict(
  conflict: { detail: string; clientValue: string; serverValue: string; reviewLogTail: { action: string; actor: string; note: string }[] },
  onReload: () => void,
): HTMLElement {
  const pane = el("div", "conflict-view");
  pane.append(el("h3", "", "Server rejected the change"));
  pane.append(el("p", "conflict-detail", conflict.detail));
  const diff = el("div", "diff");
  const mine = el("div", "diff-client");
  mine.append(el("h4", "", "Your version"));
  mine.append(el("pre", "", conflict.clientValue));
  const theirs = el("div", "diff-server");
  theirs.append(el("h4", "", "Server version"));
  theirs.append(el("pre", "", conflict.serverValue));
  diff.append(mine, theirs);
  pane.append(diff);
  const log = el("ul", "review-log-tail");
  conflict.reviewLogTail.forEach((entry) => {
    log.append(el("li", "", `${entry.actor}: ${entry.action} ${entry.note}`.trim()));
  });
  pane.append(log);
  const reload = el("button", "conflict-reload", "Reload from server");
  reload.addEventListener("click", onReload);
  pane.append(reload);
  return pane;
}

export function renderUnsavedPrompt(onDiscard: () => void, onStay: () => void): HTMLElement {
  const prompt = el("div", "unsaved-prompt");
  prompt.append(el("p", "", "You have unsaved edits. Discard them?"));
  const discard = el("button", "discard-button", "Discard");
  discard.addEventListener("click", onDiscard);
  const stay = el("button", "stay-button", "Keep editing");
  stay.addEventListener("click", onStay);
  prompt.append(discard, stay);
  return prompt;
}

export function renderApp(root: HTMLElement, console_: ReviewConsole): void {
  const redraw = (state: QueueViewState) => {
    root.replaceChildren();

    const toolbar = el("div", "toolbar");
    const filter = el("select", "stage-filter");
    for (const stage of [
      "", "controlled", "condensed", "conjectured", "constructed",
      "concluded", "classified", "confirmed", "rejected",
    ]) {
      const option = el("option", "", stage || "all stages");
      option.value = stage;
      if ((state.stageFilter ?? "") === stage) option.selected = true;
      filter.append(option);
    }
    filter.addEventListener("change", () => {
      void console_.setStageFilter((filter.value || null) as QueueViewState["stageFilter"]);
    });
    toolbar.append(filter);
    root.append(toolbar);

    if (state.error) {
      root.append(renderErrorBanner(state.error, () => void console_.loadQueue()));
    }
    if (state.toast) root.append(el("div", "toast", state.toast));
    if (state.pendingNavigation) {
      root.append(
        renderUnsavedPrompt(
          () => void console_.confirmPendingNavigation(),
          () => console_.cancelPendingNavigation(),
        ),
      );
    }

    root.append(
      renderQueue(state.queue?.items ?? [], state.selectedId, (id) => void console_.select(id)),
    );

    if (state.conflict && state.selectedId) {
      const selected = state.selectedId;
      root.append(renderConflict(state.conflict, () => void console_.select(selected, true)));
    }

    if (state.detail) {
      root.append(
        renderDetail(state.detail, state.editBuffer, {
          onAction: (button) => {
            if (button === "approve" && !window.confirm("Approve this draft?")) return;
            if (button === "approve") void console_.approve();
            if (button === "reject") void console_.reject();
            if (button === "set_category_conclusive") void console_.setCategory("conclusive");
            if (button === "set_category_interpretive") void console_.setCategory("interpretive");
          },
          onEditStart: () => console_.startEdit(),
          onEditChange: (text) => console_.updateBuffer(text),
          onEditSubmit: () => void console_.submitEdit(),
          onEditCancel: () => console_.cancelEdit(),
        }),
      );
    }
  };

  console_.subscribe(redraw);
  redraw(console_.getState());
}
