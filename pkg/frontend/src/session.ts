// Per-tab interaction state.  Two rules the rest of the page leans on:
// at most one prediction request in flight, and at most one selection
// per served prediction (extra clicks are dropped before the network).

import type { Prediction } from "./api.js";

export type Connection = "unknown" | "ok" | "down";

export class Session {
  requestId: string | null = null;
  awaitingPrediction = false;
  selectionInFlight = false;
  selectedId: string | null = null;
  lastLatencyMs: number | null = null;
  connection: Connection = "unknown";

  /** A served prediction the user has not acted on yet. */
  get selectionPending(): boolean {
    return this.requestId !== null && this.selectedId === null;
  }

  canSubmit(text: string): boolean {
    return text.trim().length > 0 && !this.awaitingPrediction;
  }

  /** False means a submission is already out; drop this one. */
  beginPrediction(): boolean {
    if (this.awaitingPrediction) {
      return false;
    }
    this.awaitingPrediction = true;
    return true;
  }

  servePrediction(prediction: Prediction): void {
    this.awaitingPrediction = false;
    this.requestId = prediction.request_id;
    this.lastLatencyMs = prediction.latency_ms;
    this.selectedId = null;
    this.selectionInFlight = false;
    this.connection = "ok";
  }

  failPrediction(transport: boolean): void {
    this.awaitingPrediction = false;
    this.requestId = null;
    if (transport) {
      this.connection = "down";
    }
  }

  /** Guard for a candidate click; false means ignore the click. */
  beginSelection(): boolean {
    if (this.requestId === null || this.selectedId !== null || this.selectionInFlight) {
      return false;
    }
    this.selectionInFlight = true;
    return true;
  }

  confirmSelection(functionId: string): void {
    this.selectionInFlight = false;
    this.selectedId = functionId;
    this.connection = "ok";
  }

  /** Selection POST failed; settle the request only if the server
   *  reports it already holds a selection for it. */
  failSelection(alreadySettled: boolean, functionId: string | null = null): void {
    this.selectionInFlight = false;
    if (alreadySettled) {
      this.selectedId = functionId ?? "(settled)";
    }
  }

  reset(): void {
    this.requestId = null;
    this.awaitingPrediction = false;
    this.selectionInFlight = false;
    this.selectedId = null;
    this.lastLatencyMs = null;
  }
}
