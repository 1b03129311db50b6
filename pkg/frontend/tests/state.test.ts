import { describe, expect, it } from "vitest";

import { QueueStore } from "../src/state.js";
import type { ProposalView } from "../src/types.js";

function proposal(i: number, extra: Partial<ProposalView> = {}): ProposalView {
  return {
    proposal_id: `00000000-0000-0000-0000-${String(i).padStart(12, "0")}`,
    source_sample_id: `s${i}`,
    source_image_ref: `img/${i}.jpg`,
    source: `both the cat and the dog are in scene ${i}`,
    scenario: "image",
    logic_type: "conjunction",
    candidates: [`neg ${i}-0`, `neg ${i}-1`, `neg ${i}-2`],
    backend: "fake",
    request: "",
    status: "pending",
    note: "",
    first_is_correct: false,
    diagnostics: [],
    created_at: 100 + i,
    updated_at: 100 + i,
    ...extra,
  };
}

describe("QueueStore paging", () => {
  it("keeps server order and tracks the total", () => {
    const store = new QueueStore();
    store.loadPage([proposal(2), proposal(0), proposal(1)], 30);
    expect(store.items.map((p) => p.source_sample_id)).toEqual(["s2", "s0", "s1"]);
    expect(store.total).toBe(30);
    expect(store.current()?.source_sample_id).toBe("s2");
  });

  it("drops already-committed ids on reload", () => {
    const store = new QueueStore();
    store.loadPage([proposal(0), proposal(1)], 2);
    store.commit(proposal(0).proposal_id, "accept");
    store.loadPage([proposal(0), proposal(1)], 2);
    expect(store.items.map((p) => p.source_sample_id)).toEqual(["s1"]);
  });

  it("clamps the cursor when the page shrinks", () => {
    const store = new QueueStore();
    store.loadPage([proposal(0), proposal(1), proposal(2)], 3);
    store.next();
    store.next();
    expect(store.cursor).toBe(2);
    store.loadPage([proposal(0)], 1);
    expect(store.cursor).toBe(0);
  });
});

describe("QueueStore optimistic decisions", () => {
  it("removes on takeOut and restores at the same index on failure", () => {
    const store = new QueueStore();
    store.loadPage([proposal(0), proposal(1), proposal(2)], 3);
    store.next();
    const slot = store.takeOut(proposal(1).proposal_id);
    expect(slot).not.toBeNull();
    expect(store.items.map((p) => p.source_sample_id)).toEqual(["s0", "s2"]);
    store.restore(slot!);
    expect(store.items.map((p) => p.source_sample_id)).toEqual(["s0", "s1", "s2"]);
    expect(store.cursor).toBe(1);
  });

  it("only records committed decisions on explicit commit", () => {
    const store = new QueueStore();
    store.loadPage([proposal(0)], 1);
    store.takeOut(proposal(0).proposal_id);
    expect(store.committed).toEqual([]);
    store.commit(proposal(0).proposal_id, "accept");
    expect(store.committed).toEqual([
      { id: proposal(0).proposal_id, action: "accept" },
    ]);
    expect(store.total).toBe(0);
  });

  it("takeOut of an unknown id is a no-op", () => {
    const store = new QueueStore();
    store.loadPage([proposal(0)], 1);
    expect(store.takeOut("ffffffff-0000-0000-0000-000000000000")).toBeNull();
    expect(store.items).toHaveLength(1);
  });
});

describe("QueueStore editor", () => {
  it("copies candidates positionally and never reorders", () => {
    const store = new QueueStore();
    store.loadPage([proposal(7)], 1);
    expect(store.openEditor()).toBe(true);
    expect(store.editing).toEqual(["neg 7-0", "neg 7-1", "neg 7-2"]);
    store.editCandidate(1, "rewritten middle");
    expect(store.editing).toEqual(["neg 7-0", "rewritten middle", "neg 7-2"]);
    // The source proposal is untouched until the server accepts the edit.
    expect(store.current()?.candidates).toEqual(["neg 7-0", "neg 7-1", "neg 7-2"]);
  });

  it("rejects empty and source-identical texts before the POST", () => {
    const store = new QueueStore();
    const p = proposal(3);
    store.loadPage([p], 1);
    store.openEditor();
    expect(store.editorProblem()).toBeNull();
    store.editCandidate(0, "   ");
    expect(store.editorProblem()).toMatch(/empty/);
    store.editCandidate(0, p.source);
    expect(store.editorProblem()).toMatch(/source caption/);
    store.editCandidate(0, "a genuine rewrite");
    expect(store.editorProblem()).toBeNull();
  });

  it("allows the correct-option slot to restate the source", () => {
    const store = new QueueStore();
    const p = proposal(4, {
      scenario: "medicine",
      first_is_correct: true,
      candidates: ["right", "w1", "w2", "w3", "w4"],
    });
    store.loadPage([p], 1);
    store.openEditor();
    store.editCandidate(0, p.source);
    expect(store.editorProblem()).toBeNull();
    store.editCandidate(2, p.source);
    expect(store.editorProblem()).toMatch(/candidate 3/);
  });

  it("ignores out-of-range edits", () => {
    const store = new QueueStore();
    store.loadPage([proposal(0)], 1);
    store.openEditor();
    store.editCandidate(9, "nope");
    expect(store.editing).toEqual(["neg 0-0", "neg 0-1", "neg 0-2"]);
  });
});
