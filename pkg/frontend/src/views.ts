// DOM rendering. Candidate texts always go through textContent, in server
// order; the view never reorders or rewrites them.

import type { App } from "./app.js";
import { KEY_HINTS } from "./keyboard.js";
import type { ProposalView, StatsPayload } from "./types.js";

export function render(app: App, root: HTMLElement): void {
  root.replaceChildren(
    banner(app),
    app.screen === "queue" ? queueScreen(app) : statsScreen(app),
    footer(),
  );
}

function el(
  tag: string,
  className: string,
  text?: string,
): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function banner(app: App): HTMLElement {
  const b = app.store.banner;
  if (!b) return el("div", "banner hidden");
  return el("div", `banner ${b.kind}`, b.message);
}

function queueScreen(app: App): HTMLElement {
  const wrap = el("section", "queue");
  const items = app.store.items;
  const head = el(
    "header",
    "queue-head",
    items.length === 0
      ? "queue empty"
      : `${app.store.cursor + 1} of ${items.length} loaded (${app.store.total} pending total)`,
  );
  wrap.append(head);

  const item = app.store.current();
  if (!item) {
    wrap.append(el("p", "empty", "Nothing pending. Press g to refresh."));
    return wrap;
  }
  wrap.append(proposalCard(app, item));

  const list = el("ol", "minimap");
  items.forEach((p, i) => {
    const row = el(
      "li",
      i === app.store.cursor ? "row current" : "row",
      `${p.logic_type} · ${p.scenario} · ${p.source.slice(0, 60)}`,
    );
    list.append(row);
  });
  wrap.append(list);
  return wrap;
}

function proposalCard(app: App, item: ProposalView): HTMLElement {
  const card = el("article", "proposal");
  const meta = el(
    "div",
    "meta",
    `${item.scenario} · ${item.logic_type} · ${item.backend} · ${item.proposal_id}`,
  );
  const source = el("blockquote", "source", item.source);
  card.append(meta, source);

  if (app.store.editing !== null) {
    card.append(editor(app, item));
    return card;
  }

  const list = el("ol", "candidates");
  item.candidates.forEach((text, i) => {
    const label =
      item.first_is_correct && i === 0 ? "candidate correct" : "candidate";
    list.append(el("li", label, text));
  });
  card.append(list);
  return card;
}

function editor(app: App, item: ProposalView): HTMLElement {
  const box = el("div", "editor");
  const texts = app.store.editing ?? [];
  texts.forEach((text, i) => {
    const field = document.createElement("textarea");
    field.value = text;
    field.rows = 2;
    field.dataset.index = String(i);
    field.addEventListener("input", () => {
      app.store.editCandidate(i, field.value);
    });
    const slot = el(
      "label",
      "edit-slot",
      item.first_is_correct && i === 0 ? `option ${i + 1} (correct)` : `option ${i + 1}`,
    );
    slot.append(field);
    box.append(slot);
  });
  box.append(el("p", "hint", "Ctrl+Enter save · Esc cancel"));
  return box;
}

function statsScreen(app: App): HTMLElement {
  const wrap = el("section", "stats");
  const data = app.statsData;
  const when =
    app.statsUpdatedAt === null
      ? "never"
      : new Date(app.statsUpdatedAt).toISOString();
  const head = el("header", "stats-head", `stats · last updated ${when}`);
  if (app.statsStale) {
    head.append(el("span", "stale-badge", " STALE: service unreachable"));
  }
  wrap.append(head);

  const zeros: StatsPayload = {
    counts: { pending: 0, accepted: 0, rejected: 0, edited: 0, failed: 0 },
    total: 0,
    by_logic_type: {},
    event_count: 0,
  };
  const shown = data ?? zeros;

  const counts = el("table", "counts");
  for (const [status, n] of Object.entries(shown.counts)) {
    const row = el("tr", "");
    row.append(el("td", "k", status), el("td", "v", String(n)));
    counts.append(row);
  }
  const totalRow = el("tr", "total");
  totalRow.append(el("td", "k", "total"), el("td", "v", String(shown.total)));
  counts.append(totalRow);
  wrap.append(counts);

  const byCat = el("table", "by-category");
  for (const [cat, perStatus] of Object.entries(shown.by_logic_type)) {
    const decided = Object.entries(perStatus)
      .filter(([status]) => status !== "pending")
      .reduce((acc, [, n]) => acc + n, 0);
    const row = el("tr", "");
    row.append(
      el("td", "k", cat),
      el("td", "v", `${decided} decided / ${perStatus.pending ?? 0} pending`),
    );
    byCat.append(row);
  }
  wrap.append(byCat);
  return wrap;
}

function footer(): HTMLElement {
  return el("footer", "hints", KEY_HINTS);
}
