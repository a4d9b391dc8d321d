import { ApiClient } from "./api.js";
import {
  POLL_INTERVAL_MS,
  applyPollFailure,
  applyPollSuccess,
  beginAction,
  disableWindow,
  domainOf,
  enableForHours,
  finishAction,
  newViewModel,
  rollbackAction,
  validateWindowForm,
} from "./model.js";
import { renderError, renderQueryTable, renderStatusHeader, renderVerdictPanel } from "./render.js";

const client = new ApiClient("");
const vm = newViewModel();

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node;
}

function redraw(): void {
  el("status-header").innerHTML = renderStatusHeader(vm, Date.now());
  el("query-feed").innerHTML = renderQueryTable(vm);
  el("verdict-panel").innerHTML = renderVerdictPanel(vm);
  el("toast").innerHTML = renderError(vm.lastError);
}

async function poll(): Promise<void> {
  try {
    const [status, queries, verdicts] = await Promise.all([
      client.status(),
      client.queries(200),
      client.verdicts("all"),
    ]);
    applyPollSuccess(vm, status, queries, verdicts);
  } catch {
    applyPollFailure(vm);
  }
  redraw();
}

function requireToken(): boolean {
  if (client.token) {
    return true;
  }
  // Kept in memory only; asking again after a reload is intentional.
  const token = window.prompt("API token");
  if (token) {
    client.token = token;
    return true;
  }
  return false;
}

async function handleOverride(url: string, action: "whitelist" | "block"): Promise<void> {
  if (!requireToken()) {
    return;
  }
  const domain = domainOf(url);
  const previous =
    vm.verdicts.find((row) => domainOf(row.dossier_url) === domain)?.block_status ?? "none";
  const optimistic = action === "whitelist" ? "overridden" : "blocked";
  if (!beginAction(vm, domain, optimistic)) {
    return; // an action for this domain is already in flight
  }
  redraw();
  try {
    await client.override({ domain, action });
    finishAction(vm, domain);
    vm.lastError = null;
  } catch (error) {
    rollbackAction(vm, domain, previous, `override failed: ${String(error)}`);
  }
  await poll(); // reconcile with the server's view
}

async function handleWindowSubmit(start: string, end: string): Promise<void> {
  const problem = validateWindowForm(start, end);
  const note = el("window-validation");
  if (problem) {
    note.textContent = problem;
    return; // no request is sent on invalid input
  }
  note.textContent = "";
  if (!requireToken()) {
    return;
  }
  try {
    await client.setWindow({
      tag: "AI-sinkhole",
      start: new Date(start).toISOString(),
      end: new Date(end).toISOString(),
    });
    vm.lastError = null;
  } catch (error) {
    vm.lastError = `window update failed: ${String(error)}`;
  }
  await poll();
}

function wire(): void {
  el("verdict-panel").addEventListener("click", (event) => {
    const button = (event.target as HTMLElement).closest("button[data-action]");
    if (!button) {
      return;
    }
    const card = button.closest("article.verdict") as HTMLElement | null;
    const url = card?.dataset.url;
    const action = button.getAttribute("data-action") as "whitelist" | "block";
    if (url) {
      void handleOverride(url, action);
    }
  });

  el("enable-4h").addEventListener("click", () => {
    if (!requireToken()) {
      return;
    }
    void client
      .setWindow(enableForHours("AI-sinkhole", 4, Date.now()))
      .then(() => poll())
      .catch((error) => {
        vm.lastError = `window update failed: ${String(error)}`;
        redraw();
      });
  });

  el("disable-window").addEventListener("click", () => {
    if (!requireToken()) {
      return;
    }
    void client
      .setWindow(disableWindow("AI-sinkhole"))
      .then(() => poll())
      .catch((error) => {
        vm.lastError = `window update failed: ${String(error)}`;
        redraw();
      });
  });

  el("window-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const start = (el("window-start") as HTMLInputElement).value;
    const end = (el("window-end") as HTMLInputElement).value;
    void handleWindowSubmit(start, end);
  });

  el("query-filter").addEventListener("input", (event) => {
    vm.filterText = (event.target as HTMLInputElement).value.trim().toLowerCase();
    redraw();
  });

  el("outcome-filter").addEventListener("change", (event) => {
    vm.filterOutcome = (event.target as HTMLSelectElement).value;
    redraw();
  });
}

wire();
void poll();
setInterval(() => void poll(), POLL_INTERVAL_MS);
