// DOM rendering helpers.  Each takes the element it owns, so tests can
// hand over pieces of a bare document; no framework, five regions.
//
// One rule above all: candidates render in the exact order the server
// sent them.  No sorting, no re-scoring, ever.

import type { PortalFunction, Prediction, SelectAck } from "./api.js";

export interface UiCandidate {
  functionId: string;
  displayName: string;
  score: number;
  rank: number;
  provenance: string;
}

export interface ViewConfig {
  showProvenance: boolean;
}

export function displayName(
  fn: PortalFunction | undefined,
  fallback: string,
): string {
  if (!fn) {
    return fallback;
  }
  const parts = [fn.app, fn.action];
  if (fn.contact) {
    parts.push(fn.contact);
  }
  return parts.join(" ");
}

export function toUiCandidates(
  prediction: Prediction,
  collection: Map<string, PortalFunction>,
): UiCandidate[] {
  return prediction.entries.map((entry) => ({
    functionId: entry.function_id,
    displayName: displayName(collection.get(entry.function_id), entry.function_id),
    score: entry.score,
    rank: entry.rank,
    provenance: prediction.provenance,
  }));
}

function badgeText(provenance: string): string {
  if (provenance === "local") {
    return "local";
  }
  if (provenance === "llm") {
    return "LLM";
  }
  return "fallback";
}

export function renderCandidates(
  list: HTMLElement,
  candidates: UiCandidate[],
  config: ViewConfig,
  onChoose: (functionId: string) => void,
): void {
  const doc = list.ownerDocument;
  list.textContent = "";
  for (const candidate of candidates) {
    const item = doc.createElement("li");
    const button = doc.createElement("button");
    button.type = "button";
    button.className = "candidate";
    button.dataset.id = candidate.functionId;

    const name = doc.createElement("span");
    name.className = "name";
    name.textContent = candidate.displayName;
    button.append(name);

    const score = doc.createElement("span");
    score.className = "score";
    score.textContent = candidate.score.toFixed(3);
    button.append(score);

    if (config.showProvenance) {
      const badge = doc.createElement("span");
      badge.className = `badge badge-${candidate.provenance}`;
      badge.textContent = badgeText(candidate.provenance);
      button.append(badge);
    }

    button.addEventListener("click", () => onChoose(candidate.functionId));
    item.append(button);
    list.append(item);
  }
}

export function renderStatus(el: HTMLElement, prediction: Prediction | null): void {
  if (prediction === null) {
    el.textContent = "";
    return;
  }
  const conf = prediction.confidence.toFixed(3);
  const ms = prediction.latency_ms.toFixed(1);
  el.textContent = `${prediction.provenance} route · confidence ${conf} · ${ms} ms`;
}

export function renderBanner(el: HTMLElement, message: string | null): void {
  el.textContent = message ?? "";
  el.hidden = message === null;
}

export function renderConfirmation(
  el: HTMLElement,
  ack: SelectAck | null,
  satisfaction: number | null,
): void {
  if (ack === null) {
    el.textContent = "";
    return;
  }
  const rated = satisfaction === null ? "unrated" : `rated ${satisfaction}/5`;
  el.textContent = `${ack.execution} · ${rated}`;
}

export function renderConnection(el: HTMLElement, state: string): void {
  el.textContent = state;
  el.dataset.state = state;
}

export function renderCollection(
  list: HTMLElement,
  functions: PortalFunction[],
  onRemove: (functionId: string) => void,
): void {
  const doc = list.ownerDocument;
  list.textContent = "";
  for (const fn of functions) {
    const item = doc.createElement("li");

    const name = doc.createElement("span");
    name.className = "name";
    name.textContent = displayName(fn, fn.id);
    item.append(name);

    if (fn.description) {
      const desc = doc.createElement("span");
      desc.className = "desc";
      desc.textContent = fn.description;
      item.append(desc);
    }

    const remove = doc.createElement("button");
    remove.type = "button";
    remove.className = "remove";
    remove.dataset.id = fn.id;
    remove.textContent = "remove";
    remove.addEventListener("click", () => onRemove(fn.id));
    item.append(remove);

    list.append(item);
  }
}

export function renderInlineError(el: HTMLElement, message: string | null): void {
  el.textContent = message ?? "";
  el.hidden = message === null;
}
