import type { FetchLike } from "../src/api.js";
import type { DraftDetail, QueuePage, Stage } from "../src/types.js";

const EDIT_FIELD: Partial<Record<Stage, "question_text" | "reference_text">> = {
  condensed: "question_text",
  concluded: "reference_text",
};

export function makeDraft(id: string, stage: Stage, extra: Partial<DraftDetail> = {}): DraftDetail {
  return {
    draft_id: id,
    db_id: "db1",
    seed_question: "seed?",
    stage,
    question_text: `Question for ${id}?`,
    source_keywords: ["French singers"],
    conjecture: stage === "controlled" || stage === "condensed" ? null : "they sell more",
    injected_inserts:
      stage === "constructed" || stage === "concluded" || stage === "classified" || stage === "confirmed"
        ? ["INSERT INTO singer VALUES (90, 'ghost', 'France', 9.0)"]
        : null,
    reference_text:
      stage === "concluded" || stage === "classified" || stage === "confirmed"
        ? "They sell more, with evidence."
        : null,
    proposed_category: stage === "classified" || stage === "confirmed" ? "conclusive" : null,
    review_log: [{ timestamp: "2024-01-01T00:00:00Z", actor: "pipeline", action: "control", note: "" }],
    preview:
      stage === "constructed" || stage === "concluded" || stage === "classified"
        ? {
            tables: {
              singer: {
                row_count: 4,
                columns: ["id", "name", "country", "sales"],
                rows: [
                  ["1", "singer 1", "Japan", "10.5"],
                  ["2", "singer 2", "France", "21.0"],
                  ["3", "singer 3", "Japan", "31.5"],
                  ["90", "ghost", "France", "9.0"],
                ],
              },
            },
          }
        : null,
    ...extra,
  };
}

interface RequestRecord {
  method: string;
  path: string;
  body: unknown;
  authorization: string | null;
}

/** In-memory stand-in for the curation service, with request accounting. */
export class MockApiServer {
  drafts = new Map<string, DraftDetail>();
  requests: RequestRecord[] = [];
  /** When set, the next matching POST fails with this response instead. */
  failNextPost: { status: number; detail: string } | null = null;
  failNextGet: { status: number; detail: string } | null = null;

  readonly fetchLike: FetchLike = async (url, init) => this.handle(url, init);

  add(draft: DraftDetail): void {
    this.drafts.set(draft.draft_id, draft);
  }

  posts(): RequestRecord[] {
    return this.requests.filter((r) => r.method === "POST");
  }

  getsOf(path: string): RequestRecord[] {
    return this.requests.filter((r) => r.method === "GET" && r.path.startsWith(path));
  }

  private json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  private async handle(url: string, init?: RequestInit): Promise<Response> {
    const parsed = new URL(url, "http://mock.local");
    const method = init?.method ?? "GET";
    const headers = new Headers(init?.headers);
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    this.requests.push({
      method,
      path: parsed.pathname + parsed.search,
      body,
      authorization: headers.get("Authorization"),
    });

    if (method === "GET" && this.failNextGet) {
      const fail = this.failNextGet;
      this.failNextGet = null;
      return this.json(fail.status, { detail: fail.detail });
    }

    if (parsed.pathname === "/health") return this.json(200, { status: "ok" });

    if (parsed.pathname === "/drafts" && method === "GET") {
      const stage = parsed.searchParams.get("stage");
      const page = Number(parsed.searchParams.get("page") ?? "1");
      const pageSize = Number(parsed.searchParams.get("page_size") ?? "20");
      const all = [...this.drafts.values()]
        .filter((d) => !stage || d.stage === stage)
        .sort((a, b) => a.draft_id.localeCompare(b.draft_id));
      const start = (page - 1) * pageSize;
      const pageBody: QueuePage = {
        items: all.slice(start, start + pageSize).map((d) => ({
          draft_id: d.draft_id,
          stage: d.stage,
          question_preview: d.question_text.slice(0, 120),
          proposed_category: d.proposed_category,
        })),
        total: all.length,
        page,
        page_size: pageSize,
      };
      return this.json(200, pageBody);
    }

    const detailMatch = parsed.pathname.match(/^\/drafts\/([^/]+)$/);
    if (detailMatch && method === "GET") {
      const draft = this.drafts.get(decodeURIComponent(detailMatch[1]!));
      if (!draft) return this.json(404, { detail: "no such draft" });
      return this.json(200, draft);
    }

    const actionMatch = parsed.pathname.match(/^\/drafts\/([^/]+)\/actions$/);
    if (actionMatch && method === "POST") {
      if (this.failNextPost) {
        const fail = this.failNextPost;
        this.failNextPost = null;
        return this.json(fail.status, { detail: fail.detail });
      }
      const draft = this.drafts.get(decodeURIComponent(actionMatch[1]!));
      if (!draft) return this.json(404, { detail: "no such draft" });
      return this.applyAction(draft, body as { action: string; payload?: string; actor?: string });
    }

    return this.json(404, { detail: `no route for ${method} ${parsed.pathname}` });
  }

  private applyAction(
    draft: DraftDetail,
    body: { action: string; payload?: string; actor?: string },
  ): Response {
    const log = (action: string, note = "") => {
      draft.review_log = [
        ...draft.review_log,
        { timestamp: "2024-01-01T00:00:01Z", actor: body.actor ?? "reviewer", action, note },
      ];
    };
    if (draft.stage === "rejected") return this.json(409, { detail: "draft is rejected (terminal)" });

    if (body.action === "reject") {
      draft.stage = "rejected";
      log("reject", body.payload ?? "");
      return this.json(200, draft);
    }
    if (body.action === "edit") {
      const field = EDIT_FIELD[draft.stage];
      if (!field) return this.json(409, { detail: `edit is not legal at stage '${draft.stage}'` });
      if (!body.payload?.trim()) return this.json(422, { detail: "edit requires a non-empty payload" });
      draft[field] = body.payload;
      log("edit");
      return this.json(200, draft);
    }
    if (body.action === "set_category") {
      if (draft.stage !== "classified") {
        return this.json(409, { detail: `set_category is not legal at stage '${draft.stage}'` });
      }
      draft.proposed_category = body.payload as DraftDetail["proposed_category"];
      log("set_category", body.payload ?? "");
      return this.json(200, draft);
    }
    if (body.action === "approve") {
      if (draft.stage !== "classified") {
        return this.json(409, { detail: `approve is not legal at stage '${draft.stage}'` });
      }
      draft.stage = "confirmed";
      log("approve");
      return this.json(200, draft);
    }
    return this.json(422, { detail: `unknown action '${body.action}'` });
  }
}
