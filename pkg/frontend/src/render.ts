// HTML-string renderers; main.ts swaps them into the page on each poll.

import type { QueryRecord, VerdictRow } from "./api.js";
import {
  ViewModel,
  counterLine,
  filteredQueries,
  formatLocal,
  formatUtc,
  isStale,
  statusHeadline,
  windowCountdown,
} from "./model.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderStatusHeader(vm: ViewModel, nowMs: number): string {
  if (!vm.status) {
    return `<div class="status">waiting for first poll…</div>`;
  }
  const countdown = windowCountdown(vm.status, nowMs);
  const windowPart = countdown
    ? `<span class="countdown" title="window closes in">${countdown}</span>`
    : `<span class="window-off">no active window</span>`;
  const stale = isStale(vm)
    ? `<div class="banner stale">stale data: API unreachable</div>`
    : "";
  return (
    stale +
    `<div class="status">` +
    `<strong>${escapeHtml(statusHeadline(vm.status))}</strong>` +
    `<span>${escapeHtml(counterLine(vm.status))}</span>` +
    windowPart +
    `</div>`
  );
}

export function renderQueryTable(vm: ViewModel): string {
  const rows = filteredQueries(vm);
  if (rows.length === 0) {
    return `<p class="empty">no queries recorded yet</p>`;
  }
  const body = rows
    .map((row: QueryRecord) => {
      const cls = row.outcome === "sinkholed" ? ` class="sinkholed"` : "";
      return (
        `<tr${cls}>` +
        `<td title="${escapeHtml(formatUtc(row.timestamp))}">${escapeHtml(formatLocal(row.timestamp))}</td>` +
        `<td>${escapeHtml(row.qname)}</td>` +
        `<td>${escapeHtml(row.outcome)}</td>` +
        `<td>${escapeHtml(row.client)}</td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="queries"><thead>` +
    `<tr><th>time</th><th>domain</th><th>outcome</th><th>client</th></tr>` +
    `</thead><tbody>${body}</tbody></table>`
  );
}

export function renderVerdictPanel(vm: ViewModel): string {
  if (vm.verdicts.length === 0) {
    return `<p class="empty">no verdicts yet</p>`;
  }
  const cards = vm.verdicts
    .map((row: VerdictRow) => {
      const badge = row.verdict.toUpperCase();
      return (
        `<article class="verdict ${escapeHtml(row.verdict)}" data-url="${escapeHtml(row.dossier_url)}">` +
        `<header>` +
        `<span class="badge">${escapeHtml(badge)}</span>` +
        `<a href="${escapeHtml(row.dossier_url)}" rel="noreferrer">${escapeHtml(row.dossier_url)}</a>` +
        `<span class="state">${escapeHtml(row.block_status)}</span>` +
        `</header>` +
        `<p class="reason">${escapeHtml(row.reason)}</p>` +
        `<footer>` +
        `<span title="${escapeHtml(formatUtc(row.created_at))}">${escapeHtml(row.model_id)}, ` +
        `${Math.round(row.latency_ms)} ms</span>` +
        `<button data-action="whitelist">whitelist</button>` +
        `<button data-action="block">block</button>` +
        `</footer>` +
        `</article>`
      );
    })
    .join("");
  return `<div class="verdicts">${cards}</div>`;
}

export function renderError(message: string | null): string {
  return message ? `<div class="banner error">${escapeHtml(message)}</div>` : "";
}
