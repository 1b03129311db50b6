// Controller wiring keys to state transitions and service calls. The DOM
// layer subscribes through onRender; tests drive this class directly.

import { ApiError, ReviewApi } from "./api.js";
import { mapKey } from "./keyboard.js";
import { QueueStore } from "./state.js";
import type { DecisionAction, StatsPayload } from "./types.js";

export const PAGE_SIZE = 50;
export const STATS_INTERVAL_MS = 3000;

export class App {
  readonly store = new QueueStore();
  screen: "queue" | "stats" = "queue";
  statsData: StatsPayload | null = null;
  statsUpdatedAt: number | null = null;
  statsStale = false;
  finalizePath: string | undefined;
  lastFinalize: string | null = null;
  private statsTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly api: ReviewApi,
    private readonly onRender: () => void = () => {},
    private readonly now: () => number = Date.now,
  ) {}

  private render(): void {
    this.onRender();
  }

  async refresh(): Promise<void> {
    try {
      const page = await this.api.listPending(PAGE_SIZE, 0);
      this.store.loadPage(page.proposals, page.total);
    } catch (err) {
      this.store.setBanner("error", `load failed: ${describe(err)}; press g to retry`);
    }
    this.render();
  }

  async handleKey(
    key: string,
    mods: { ctrl?: boolean; shift?: boolean } = {},
  ): Promise<void> {
    const action = mapKey(key, {
      screen: this.screen,
      editing: this.store.editing !== null,
      ctrl: mods.ctrl,
      shift: mods.shift,
    });
    if (!action) return;
    switch (action.type) {
      case "accept":
        await this.decide("accept");
        break;
      case "reject":
        await this.decide("reject");
        break;
      case "edit":
        this.store.clearBanner();
        this.store.openEditor();
        this.render();
        break;
      case "save-edit":
        await this.saveEdit();
        break;
      case "cancel-edit":
        this.store.closeEditor();
        this.render();
        break;
      case "next":
        this.store.next();
        this.render();
        break;
      case "prev":
        this.store.prev();
        this.render();
        break;
      case "refresh":
        await this.refresh();
        break;
      case "toggle-stats":
        this.screen = this.screen === "queue" ? "stats" : "queue";
        if (this.screen === "stats") await this.pollStats();
        this.render();
        break;
      case "finalize":
        await this.finalize();
        break;
    }
  }

  async decide(action: DecisionAction, texts?: string[]): Promise<void> {
    const item = this.store.current();
    if (!item || this.store.busy) return;
    this.store.busy = true;
    this.store.clearBanner();
    const slot = this.store.takeOut(item.proposal_id);
    this.render();
    try {
      await this.api.decide(item.proposal_id, action, texts);
      this.store.commit(item.proposal_id, action);
      this.store.closeEditor();
    } catch (err) {
      if (slot) this.store.restore(slot);
      if (err instanceof ApiError && err.status === 409) {
        this.store.setBanner(
          "conflict",
          "already decided elsewhere; press g to refresh",
        );
      } else {
        this.store.setBanner(
          "error",
          `${action} not saved: ${describe(err)}; press ${action === "accept" ? "a" : action === "reject" ? "r" : "Ctrl+Enter"} to retry`,
        );
      }
    } finally {
      this.store.busy = false;
    }
    this.render();
  }

  async saveEdit(): Promise<void> {
    const problem = this.store.editorProblem();
    if (problem) {
      this.store.setBanner("error", problem);
      this.render();
      return;
    }
    const texts = this.store.editing;
    if (texts === null) return;
    await this.decide("edit", [...texts]);
  }

  async finalize(): Promise<void> {
    try {
      const result = await this.api.finalize(this.finalizePath);
      this.lastFinalize = `${result.manifest.counts.records} records -> ${result.path}`;
      this.store.setBanner("info", `finalized: ${this.lastFinalize}`);
    } catch (err) {
      this.store.setBanner("error", `finalize failed: ${describe(err)}`);
    }
    this.render();
  }

  async pollStats(): Promise<void> {
    try {
      this.statsData = await this.api.stats();
      this.statsUpdatedAt = this.now();
      this.statsStale = false;
    } catch {
      // Keep the last numbers on screen, but flag them.
      this.statsStale = true;
    }
    this.render();
  }

  startStatsPolling(intervalMs = STATS_INTERVAL_MS): void {
    if (this.statsTimer !== null) return;
    this.statsTimer = setInterval(() => {
      void this.pollStats();
    }, intervalMs);
  }

  stopStatsPolling(): void {
    if (this.statsTimer !== null) {
      clearInterval(this.statsTimer);
      this.statsTimer = null;
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.status} ${err.message}`;
  if (err instanceof Error) return err.message;
  return String(err);
}
