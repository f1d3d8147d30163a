import type { ActionBody, DraftDetail, QueuePage, Stage } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`API error ${status}: ${detail}`);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let detail = resp.statusText || `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(resp.status, detail);
}

/** Thin typed client for the curation endpoints; no business logic lives here. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private headers(json = false): Record<string, string> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (json) headers["Content-Type"] = "application/json";
    return headers;
  }

  async listDrafts(stage: Stage | null, page: number, pageSize: number): Promise<QueuePage> {
    const params = new URLSearchParams({ page: String(page), page_size: String(pageSize) });
    if (stage) params.set("stage", stage);
    const resp = await this.fetchFn(`${this.baseUrl}/drafts?${params}`, {
      headers: this.headers(),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as QueuePage;
  }

  async getDraft(draftId: string): Promise<DraftDetail> {
    const resp = await this.fetchFn(`${this.baseUrl}/drafts/${encodeURIComponent(draftId)}`, {
      headers: this.headers(),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as DraftDetail;
  }

  async submitAction(draftId: string, body: ActionBody): Promise<DraftDetail> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/drafts/${encodeURIComponent(draftId)}/actions`,
      {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify(body),
      },
    );
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as DraftDetail;
  }

  async health(): Promise<boolean> {
    try {
      const resp = await this.fetchFn(`${this.baseUrl}/health`);
      return resp.ok;
    } catch {
      return false;
    }
  }
}
