import { ApiClient, ApiError } from "./api.js";
import type { Category, DraftDetail, QueuePage, ReviewLogEntry, Stage } from "./types.js";

/** Diff material shown when the server rejects a write. */
export interface ConflictView {
  detail: string;
  clientValue: string;
  serverValue: string;
  reviewLogTail: ReviewLogEntry[];
}

export interface QueueViewState {
  stageFilter: Stage | null;
  page: number;
  pageSize: number;
  queue: QueuePage | null;
  selectedId: string | null;
  detail: DraftDetail | null;
  /** Unsaved edit buffer; null when no edit is in progress. */
  editBuffer: string | null;
  loading: boolean;
  /** Error banner text; every API failure is visible, never silent. */
  error: string | null;
  conflict: ConflictView | null;
  toast: string | null;
  /** Set when navigation was blocked by unsaved edits. */
  pendingNavigation: (() => Promise<void>) | null;
}

export type ActionButton =
  | "approve"
  | "edit"
  | "reject"
  | "set_category_conclusive"
  | "set_category_interpretive";

const EDITABLE_FIELD: Partial<Record<Stage, "question_text" | "reference_text">> = {
  condensed: "question_text",
  concluded: "reference_text",
};

/** Stage-gated action buttons, mirroring (never replacing) the server rules. */
export function buttonsForStage(stage: Stage): ActionButton[] {
  if (stage === "rejected") return [];
  const buttons: ActionButton[] = [];
  if (stage === "classified") {
    buttons.push("approve", "set_category_conclusive", "set_category_interpretive");
  }
  if (EDITABLE_FIELD[stage]) buttons.push("edit");
  if (stage !== "confirmed") buttons.push("reject");
  return buttons;
}

export function editableField(stage: Stage): "question_text" | "reference_text" | null {
  return EDITABLE_FIELD[stage] ?? null;
}

/** Keyboard navigation over queue rows, as a pure function. */
export function nextIndex(current: number, key: string, rowCount: number): number {
  if (rowCount === 0) return -1;
  if (key === "ArrowDown" || key === "j") return Math.min(current + 1, rowCount - 1);
  if (key === "ArrowUp" || key === "k") return Math.max(current - 1, 0);
  return current;
}

type Listener = (state: QueueViewState) => void;

export class ReviewConsole {
  private state: QueueViewState = {
    stageFilter: null,
    page: 1,
    pageSize: 20,
    queue: null,
    selectedId: null,
    detail: null,
    editBuffer: null,
    loading: false,
    error: null,
    conflict: null,
    toast: null,
    pendingNavigation: null,
  };
  private listeners: Listener[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly actor: string = "reviewer",
  ) {}

  getState(): QueueViewState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<QueueViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  get dirty(): boolean {
    return this.state.editBuffer !== null;
  }

  async loadQueue(): Promise<void> {
    this.update({ loading: true, error: null });
    try {
      const queue = await this.api.listDrafts(
        this.state.stageFilter,
        this.state.page,
        this.state.pageSize,
      );
      this.update({ queue, loading: false });
    } catch (err) {
      this.update({ loading: false, error: describe(err) });
    }
  }

  /** Navigation honours the unsaved-edit guard unless forced. */
  private async navigate(go: () => Promise<void>, force: boolean): Promise<boolean> {
    if (this.dirty && !force) {
      this.update({ pendingNavigation: go });
      return false;
    }
    this.update({ editBuffer: null, pendingNavigation: null });
    await go();
    return true;
  }

  async setStageFilter(stage: Stage | null, force = false): Promise<boolean> {
    return this.navigate(async () => {
      this.update({ stageFilter: stage, page: 1, selectedId: null, detail: null });
      await this.loadQueue();
    }, force);
  }

  async setPage(page: number, force = false): Promise<boolean> {
    return this.navigate(async () => {
      this.update({ page });
      await this.loadQueue();
    }, force);
  }

  async select(draftId: string, force = false): Promise<boolean> {
    return this.navigate(async () => {
      this.update({ loading: true, error: null, conflict: null });
      try {
        const detail = await this.api.getDraft(draftId);
        this.update({ selectedId: draftId, detail, loading: false });
      } catch (err) {
        this.update({ loading: false, error: describe(err) });
      }
    }, force);
  }

  /** Confirms a blocked navigation, discarding the unsaved buffer. */
  async confirmPendingNavigation(): Promise<void> {
    const go = this.state.pendingNavigation;
    if (!go) return;
    this.update({ editBuffer: null, pendingNavigation: null });
    await go();
  }

  cancelPendingNavigation(): void {
    this.update({ pendingNavigation: null });
  }

  startEdit(): void {
    const detail = this.state.detail;
    if (!detail) return;
    const field = editableField(detail.stage);
    if (!field) return;
    this.update({ editBuffer: detail[field] ?? "", toast: null });
  }

  updateBuffer(text: string): void {
    this.update({ editBuffer: text });
  }

  cancelEdit(): void {
    this.update({ editBuffer: null });
  }

  /**
   * Optimistically applies the edit, then lets the server rule. On
   * rejection the optimistic value is reverted and a conflict diff (both
   * versions plus the server's review_log tail) is surfaced.
   */
  async submitEdit(): Promise<void> {
    const { detail, editBuffer } = this.state;
    if (!detail || editBuffer === null) return;
    if (!editBuffer.trim()) {
      this.update({ error: "edit cannot be empty" });
      return;
    }
    const field = editableField(detail.stage);
    if (!field) return;

    const previous = detail;
    const optimistic = { ...detail, [field]: editBuffer };
    this.update({ detail: optimistic, loading: true, error: null });
    try {
      await this.api.submitAction(detail.draft_id, {
        action: "edit",
        payload: editBuffer,
        actor: this.actor,
      });
      await this.reread(detail.draft_id, "edit saved");
      this.update({ editBuffer: null });
    } catch (err) {
      await this.handleRejection(err, previous, editBuffer, field);
    }
  }

  async approve(): Promise<void> {
    await this.runAction({ action: "approve", actor: this.actor }, "draft approved");
  }

  async reject(note = ""): Promise<void> {
    await this.runAction({ action: "reject", payload: note, actor: this.actor }, "draft rejected");
  }

  async setCategory(category: Category): Promise<void> {
    await this.runAction(
      { action: "set_category", payload: category, actor: this.actor },
      `category set to ${category}`,
    );
  }

  private async runAction(
    body: { action: "approve" | "reject" | "set_category"; payload?: string; actor: string },
    toast: string,
  ): Promise<void> {
    const detail = this.state.detail;
    if (!detail) return;
    this.update({ loading: true, error: null, conflict: null });
    try {
      await this.api.submitAction(detail.draft_id, body);
      await this.reread(detail.draft_id, toast);
    } catch (err) {
      await this.handleRejection(err, detail, body.payload ?? body.action, null);
    }
  }

  /** The server is the single source of truth: re-read after every action. */
  private async reread(draftId: string, toast: string): Promise<void> {
    const detail = await this.api.getDraft(draftId);
    this.update({ detail, toast, loading: false });
    await this.loadQueue();
  }

  private async handleRejection(
    err: unknown,
    previous: DraftDetail,
    clientValue: string,
    field: "question_text" | "reference_text" | null,
  ): Promise<void> {
    if (err instanceof ApiError && err.status === 409) {
      let server = previous;
      try {
        server = await this.api.getDraft(previous.draft_id);
      } catch {
        // keep the stale copy; the diff still shows the rejection detail
      }
      const serverValue = field ? (server[field] ?? "") : server.stage;
      this.update({
        detail: server,
        loading: false,
        conflict: {
          detail: err.detail,
          clientValue,
          serverValue,
          reviewLogTail: server.review_log.slice(-5),
        },
      });
      return;
    }
    this.update({ detail: previous, loading: false, error: describe(err) });
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  if (err instanceof Error) return err.message;
  return String(err);
}
