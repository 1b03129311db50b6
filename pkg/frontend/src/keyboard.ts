// Single-key bindings for the review flow. The mapping is a pure function
// of the key event and the current mode so it can be tested as a table.

export type UiAction =
  | { type: "accept" }
  | { type: "reject" }
  | { type: "edit" }
  | { type: "save-edit" }
  | { type: "cancel-edit" }
  | { type: "next" }
  | { type: "prev" }
  | { type: "refresh" }
  | { type: "toggle-stats" }
  | { type: "finalize" };

export interface KeyContext {
  screen: "queue" | "stats";
  editing: boolean;
  ctrl?: boolean;
  shift?: boolean;
}

export function mapKey(key: string, ctx: KeyContext): UiAction | null {
  if (ctx.editing) {
    // Text entry owns the keyboard; only explicit chords act.
    if (key === "Escape") return { type: "cancel-edit" };
    if (key === "Enter" && ctx.ctrl) return { type: "save-edit" };
    return null;
  }
  if (ctx.screen === "stats") {
    if (key === "t" || key === "Escape") return { type: "toggle-stats" };
    if (key === "g") return { type: "refresh" };
    return null;
  }
  switch (key) {
    case "a":
      return { type: "accept" };
    case "r":
      return { type: "reject" };
    case "e":
      return { type: "edit" };
    case "j":
    case "ArrowDown":
      return { type: "next" };
    case "k":
    case "ArrowUp":
      return { type: "prev" };
    case "g":
      return { type: "refresh" };
    case "t":
      return { type: "toggle-stats" };
    case "F":
      // Shift+f on purpose: finalizing is the one heavyweight action.
      return ctx.shift ? { type: "finalize" } : null;
    default:
      return null;
  }
}

export const KEY_HINTS =
  "a accept · r reject · e edit · j/k move · g refresh · t stats · F finalize";
