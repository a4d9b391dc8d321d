// Client-side view model: everything rendered comes from the latest
// successful poll; staleness is flagged after three missed polls.

import type { QueryRecord, StatusSnapshot, VerdictRow, WindowRequest } from "./api.js";

export const POLL_INTERVAL_MS = 2000;
export const STALE_AFTER_MISSES = 3;

export interface ViewModel {
  status: StatusSnapshot | null;
  queries: QueryRecord[];
  verdicts: VerdictRow[];
  missedPolls: number;
  filterText: string;
  filterOutcome: string; // "" means all outcomes
  pendingActions: Set<string>; // domains with an in-flight override
  lastError: string | null;
}

export function newViewModel(): ViewModel {
  return {
    status: null,
    queries: [],
    verdicts: [],
    missedPolls: 0,
    filterText: "",
    filterOutcome: "",
    pendingActions: new Set(),
    lastError: null,
  };
}

export function applyPollSuccess(
  vm: ViewModel,
  status: StatusSnapshot,
  queries: QueryRecord[],
  verdicts: VerdictRow[],
): void {
  vm.status = status;
  vm.queries = queries;
  vm.verdicts = verdicts;
  vm.missedPolls = 0;
}

export function applyPollFailure(vm: ViewModel): void {
  vm.missedPolls += 1;
}

export function isStale(vm: ViewModel): boolean {
  return vm.missedPolls >= STALE_AFTER_MISSES;
}

export function statusHeadline(status: StatusSnapshot): string {
  return `${status.active_entries} domains on AI-Sinkhole list`;
}

export function counterLine(status: StatusSnapshot): string {
  return `${status.queries_total} queries, ${status.queries_blocked} blocked`;
}

/** Remaining window time as mm:ss (h:mm:ss above an hour); null when closed. */
export function windowCountdown(status: StatusSnapshot, nowMs: number): string | null {
  if (!status.current_window) {
    return null;
  }
  const end = Date.parse(status.current_window.end);
  const start = Date.parse(status.current_window.start);
  if (nowMs < start || nowMs >= end) {
    return null;
  }
  const totalSeconds = Math.floor((end - nowMs) / 1000);
  const seconds = totalSeconds % 60;
  const minutes = Math.floor(totalSeconds / 60) % 60;
  const hours = Math.floor(totalSeconds / 3600);
  const mmss = `${String(minutes).padStart(2, "0")}:${String(seconds).padStart(2, "0")}`;
  return hours > 0 ? `${hours}:${mmss}` : mmss;
}

export function filteredQueries(vm: ViewModel): QueryRecord[] {
  return vm.queries.filter((row) => {
    if (vm.filterOutcome && row.outcome !== vm.filterOutcome) {
      return false;
    }
    return row.qname.includes(vm.filterText);
  });
}

/** Timestamps render in the operator's local timezone, UTC on hover. */
export function formatLocal(iso: string): string {
  return new Date(iso).toLocaleString();
}

export function formatUtc(iso: string): string {
  return new Date(iso).toISOString().replace(".000Z", "Z");
}

export function domainOf(url: string): string {
  return url.replace(/^https?:\/\//i, "").split("/", 1)[0].toLowerCase();
}

/** The "Enable for N hours" quick action: window = [now, now + N h). */
export function enableForHours(tag: string, hours: number, nowMs: number): WindowRequest {
  const start = new Date(nowMs);
  const end = new Date(nowMs + hours * 3600 * 1000);
  return { tag, start: start.toISOString(), end: end.toISOString() };
}

export function disableWindow(tag: string): WindowRequest {
  return { tag, start: null, end: null };
}

/** Inline validation for the scheduling form; null when acceptable. */
export function validateWindowForm(start: string, end: string): string | null {
  if (!start || !end) {
    return "start and end are both required";
  }
  const startMs = Date.parse(start);
  const endMs = Date.parse(end);
  if (Number.isNaN(startMs) || Number.isNaN(endMs)) {
    return "timestamps must be valid";
  }
  if (startMs >= endMs) {
    return "end must be after start";
  }
  return null;
}

/**
 * Optimistically mark a verdict row while its override is in flight.
 * Returns false when an action for the domain is already pending
 * (actions are deduplicated per domain).
 */
export function beginAction(vm: ViewModel, domain: string, optimistic: string): boolean {
  if (vm.pendingActions.has(domain)) {
    return false;
  }
  vm.pendingActions.add(domain);
  for (const row of vm.verdicts) {
    if (domainOf(row.dossier_url) === domain) {
      row.block_status = optimistic;
    }
  }
  return true;
}

export function finishAction(vm: ViewModel, domain: string): void {
  vm.pendingActions.delete(domain);
}

/** Roll back an optimistic update after a failed action. */
export function rollbackAction(vm: ViewModel, domain: string, previous: string, error: string): void {
  vm.pendingActions.delete(domain);
  vm.lastError = error;
  for (const row of vm.verdicts) {
    if (domainOf(row.dossier_url) === domain) {
      row.block_status = previous;
    }
  }
}
