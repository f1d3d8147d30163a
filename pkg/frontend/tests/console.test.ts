import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { buttonsForStage, nextIndex, ReviewConsole } from "../src/console.js";
import type { Stage } from "../src/types.js";
import { MockApiServer, makeDraft } from "./mock-api.js";

function setup(drafts: ReturnType<typeof makeDraft>[] = []) {
  const server = new MockApiServer();
  drafts.forEach((d) => server.add(d));
  const console_ = new ReviewConsole(new ApiClient("http://mock.local", "tok", server.fetchLike), "casey");
  return { server, console_ };
}

describe("buttonsForStage", () => {
  it("gates every stage exactly", () => {
    const expected: Record<Stage, string[]> = {
      controlled: ["reject"],
      condensed: ["edit", "reject"],
      conjectured: ["reject"],
      constructed: ["reject"],
      concluded: ["edit", "reject"],
      classified: ["approve", "set_category_conclusive", "set_category_interpretive", "reject"],
      confirmed: [],
      rejected: [],
    };
    for (const [stage, buttons] of Object.entries(expected)) {
      expect(buttonsForStage(stage as Stage), stage).toEqual(buttons);
    }
  });
});

describe("queue and navigation", () => {
  it("loads the queue and selects a draft", async () => {
    const { console_ } = setup([makeDraft("d1", "classified"), makeDraft("d2", "condensed")]);
    await console_.loadQueue();
    expect(console_.getState().queue?.total).toBe(2);
    await console_.select("d1");
    expect(console_.getState().detail?.draft_id).toBe("d1");
  });

  it("refetches with the new stage query param on filter change", async () => {
    const { server, console_ } = setup([makeDraft("d1", "classified"), makeDraft("d2", "condensed")]);
    await console_.loadQueue();
    await console_.setStageFilter("condensed");
    const queueRequests = server.getsOf("/drafts?");
    expect(queueRequests.at(-1)?.path).toContain("stage=condensed");
    expect(console_.getState().queue?.items.map((i) => i.draft_id)).toEqual(["d2"]);
  });

  it("surfaces API failures as a visible error, never silently", async () => {
    const { server, console_ } = setup([makeDraft("d1", "classified")]);
    server.failNextGet = { status: 500, detail: "backend down" };
    await console_.loadQueue();
    expect(console_.getState().error).toContain("backend down");
    await console_.loadQueue(); // retry path works once the server recovers
    expect(console_.getState().error).toBeNull();
    expect(console_.getState().queue?.total).toBe(1);
  });

  it("keyboard navigation is bounded", () => {
    expect(nextIndex(0, "ArrowDown", 3)).toBe(1);
    expect(nextIndex(2, "ArrowDown", 3)).toBe(2);
    expect(nextIndex(1, "ArrowUp", 3)).toBe(0);
    expect(nextIndex(0, "ArrowUp", 3)).toBe(0);
    expect(nextIndex(0, "ArrowDown", 0)).toBe(-1);
  });
});

describe("approve flow", () => {
  it("issues exactly one POST and re-reads server state", async () => {
    const { server, console_ } = setup([makeDraft("d1", "classified")]);
    await console_.loadQueue();
    await console_.select("d1");
    const getsBefore = server.getsOf("/drafts/d1").length;

    await console_.approve();

    expect(server.posts()).toHaveLength(1);
    expect(server.posts()[0]?.body).toEqual({ action: "approve", actor: "casey" });
    // state displayed afterwards comes from a fresh server read, not a local guess
    expect(server.getsOf("/drafts/d1").length).toBe(getsBefore + 1);
    expect(console_.getState().detail?.stage).toBe("confirmed");
    expect(console_.getState().queue?.items[0]?.stage).toBe("confirmed");
  });

  it("approve on the wrong stage renders the conflict view", async () => {
    const { server, console_ } = setup([makeDraft("d1", "condensed")]);
    await console_.select("d1");
    await console_.approve();
    expect(server.posts()).toHaveLength(1);
    const conflict = console_.getState().conflict;
    expect(conflict?.detail).toContain("approve is not legal");
    expect(console_.getState().detail?.stage).toBe("condensed");
  });
});

describe("edit flow", () => {
  it("applies optimistically and keeps the server value on success", async () => {
    const { console_ } = setup([makeDraft("d1", "condensed")]);
    await console_.select("d1");
    console_.startEdit();
    console_.updateBuffer("A sharper question?");
    await console_.submitEdit();
    const state = console_.getState();
    expect(state.detail?.question_text).toBe("A sharper question?");
    expect(state.editBuffer).toBeNull();
    expect(state.toast).toBe("edit saved");
  });

  it("blocks empty edits client-side", async () => {
    const { server, console_ } = setup([makeDraft("d1", "condensed")]);
    await console_.select("d1");
    console_.startEdit();
    console_.updateBuffer("   ");
    await console_.submitEdit();
    expect(server.posts()).toHaveLength(0);
    expect(console_.getState().error).toContain("empty");
  });

  it("reverts the optimistic update and shows both versions on 409", async () => {
    const draft = makeDraft("d1", "condensed");
    const { server, console_ } = setup([draft]);
    await console_.select("d1");
    console_.startEdit();
    console_.updateBuffer("my clashing edit");
    // simulate another reviewer changing the draft server-side first
    draft.question_text = "their concurrent edit";
    draft.review_log = [
      ...draft.review_log,
      { timestamp: "2024-01-01T00:00:02Z", actor: "sam", action: "edit", note: "replaced question_text" },
    ];
    server.failNextPost = { status: 409, detail: "stale draft" };

    await console_.submitEdit();

    const state = console_.getState();
    expect(state.conflict?.detail).toBe("stale draft");
    expect(state.conflict?.clientValue).toBe("my clashing edit");
    expect(state.conflict?.serverValue).toBe("their concurrent edit");
    expect(state.conflict?.reviewLogTail.at(-1)?.actor).toBe("sam");
    // the optimistic value was rolled back to what the server holds
    expect(state.detail?.question_text).toBe("their concurrent edit");
  });
});

describe("set_category and reject", () => {
  it("overrides the category and re-reads", async () => {
    const { server, console_ } = setup([makeDraft("d1", "classified")]);
    await console_.select("d1");
    await console_.setCategory("interpretive");
    expect(server.posts()[0]?.body).toEqual({
      action: "set_category",
      payload: "interpretive",
      actor: "casey",
    });
    expect(console_.getState().detail?.proposed_category).toBe("interpretive");
  });

  it("rejects from any stage and the queue reflects it", async () => {
    const { console_ } = setup([makeDraft("d1", "conjectured")]);
    await console_.loadQueue();
    await console_.select("d1");
    await console_.reject("off-topic");
    expect(console_.getState().detail?.stage).toBe("rejected");
    expect(console_.getState().queue?.items[0]?.stage).toBe("rejected");
  });
});

describe("unsaved-edit guard", () => {
  it("blocks navigation while the buffer is dirty and resumes on confirm", async () => {
    const { console_ } = setup([makeDraft("d1", "condensed"), makeDraft("d2", "classified")]);
    await console_.loadQueue();
    await console_.select("d1");
    console_.startEdit();
    console_.updateBuffer("half-finished thought");

    const moved = await console_.select("d2");
    expect(moved).toBe(false);
    expect(console_.getState().detail?.draft_id).toBe("d1");
    expect(console_.getState().pendingNavigation).not.toBeNull();

    await console_.confirmPendingNavigation();
    expect(console_.getState().detail?.draft_id).toBe("d2");
    expect(console_.getState().editBuffer).toBeNull();
  });

  it("stays put when the user keeps editing", async () => {
    const { console_ } = setup([makeDraft("d1", "condensed"), makeDraft("d2", "classified")]);
    await console_.select("d1");
    console_.startEdit();
    console_.updateBuffer("still typing");
    await console_.select("d2");
    console_.cancelPendingNavigation();
    expect(console_.getState().detail?.draft_id).toBe("d1");
    expect(console_.getState().editBuffer).toBe("still typing");
  });
});
