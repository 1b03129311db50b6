// Browser entry point: bind the controller to the DOM and the keyboard.

import { App, STATS_INTERVAL_MS } from "./app.js";
import { ReviewApi } from "./api.js";
import { render } from "./views.js";

function serviceBase(): string {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get("api");
  if (fromQuery) return fromQuery.replace(/\/$/, "");
  // Same origin when the page is served next to the API; the default
  // service address otherwise (file:// usage).
  if (window.location.protocol.startsWith("http")) {
    return window.location.origin;
  }
  return "http://127.0.0.1:8731";
}

function start(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const api = new ReviewApi(serviceBase(), new URLSearchParams(window.location.search).get("token") ?? "");
  const app = new App(api, () => render(app, root));
  document.addEventListener("keydown", (event) => {
    // Let typing in the editor through untouched.
    const inField = event.target instanceof HTMLTextAreaElement;
    if (inField && event.key !== "Escape" && !(event.key === "Enter" && event.ctrlKey)) {
      return;
    }
    const handled = void app.handleKey(event.key, {
      ctrl: event.ctrlKey,
      shift: event.shiftKey,
    });
    if (event.key === "Escape" || (event.key === "Enter" && event.ctrlKey)) {
      event.preventDefault();
    }
    return handled;
  });
  void app.refresh();
  app.startStatsPolling(STATS_INTERVAL_MS);
}

start();
