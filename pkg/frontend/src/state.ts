// Queue state, kept free of DOM and network so it can be tested directly.
//
// Decisions are optimistic: the item leaves the queue when the POST goes
// out and is restored at its original index if the server says no. The
// committed list only ever grows on a server acknowledgement, so what the
// UI shows as done always corresponds to a logged event.

import type { ProposalView } from "./types.js";

export type BannerKind = "error" | "conflict" | "info";

export interface Banner {
  kind: BannerKind;
  message: string;
}

export interface CommittedDecision {
  id: string;
  action: string;
}

export class QueueStore {
  items: ProposalView[] = [];
  total = 0;
  cursor = 0;
  busy = false;
  banner: Banner | null = null;
  editing: string[] | null = null;
  committed: CommittedDecision[] = [];

  loadPage(proposals: ProposalView[], total: number): void {
    // Server order is the display order; nothing is sorted client-side.
    const done = new Set(this.committed.map((c) => c.id));
    this.items = proposals.filter((p) => !done.has(p.proposal_id));
    this.total = total;
    if (this.cursor >= this.items.length) {
      this.cursor = Math.max(0, this.items.length - 1);
    }
    this.editing = null;
    this.banner = null;
  }

  current(): ProposalView | null {
    return this.items[this.cursor] ?? null;
  }

  next(): void {
    if (this.cursor < this.items.length - 1) this.cursor += 1;
  }

  prev(): void {
    if (this.cursor > 0) this.cursor -= 1;
  }

  // Optimistic removal; returns what restore() needs on failure.
  takeOut(id: string): { index: number; item: ProposalView } | null {
    const index = this.items.findIndex((p) => p.proposal_id === id);
    if (index < 0) return null;
    const item = this.items[index] as ProposalView;
    this.items.splice(index, 1);
    if (this.cursor >= this.items.length) {
      this.cursor = Math.max(0, this.items.length - 1);
    }
    return { index, item };
  }

  restore(slot: { index: number; item: ProposalView }): void {
    const index = Math.min(slot.index, this.items.length);
    this.items.splice(index, 0, slot.item);
    this.cursor = index;
  }

  commit(id: string, action: string): void {
    this.committed.push({ id, action });
    if (this.total > 0) this.total -= 1;
  }

  openEditor(): boolean {
    const item = this.current();
    if (!item || this.editing !== null) return false;
    // A positional copy: index i here is candidate i on the server.
    this.editing = [...item.candidates];
    return true;
  }

  editCandidate(index: number, text: string): void {
    if (this.editing === null || index < 0 || index >= this.editing.length) {
      return;
    }
    this.editing[index] = text;
  }

  closeEditor(): void {
    this.editing = null;
  }

  // Mirrors the server's checks so obvious mistakes fail before the POST.
  editorProblem(): string | null {
    const item = this.current();
    if (!item || this.editing === null) return "nothing being edited";
    if (this.editing.length !== item.candidates.length) {
      return "candidate count changed";
    }
    for (let i = 0; i < this.editing.length; i += 1) {
      const text = this.editing[i] ?? "";
      if (text.trim() === "") return `candidate ${i + 1} is empty`;
      const isCorrectSlot = item.first_is_correct && i === 0;
      if (!isCorrectSlot && text === item.source) {
        return `candidate ${i + 1} equals the source caption`;
      }
    }
    return null;
  }

  setBanner(kind: BannerKind, message: string): void {
    this.banner = { kind, message };
  }

  clearBanner(): void {
    this.banner = null;
  }
}
