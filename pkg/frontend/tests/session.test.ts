import { describe, expect, it } from "vitest";

import type { Prediction } from "../src/api";
import { Session } from "../src/session";

const PREDICTION: Prediction = {
  request_id: "r-1",
  entries: [{ function_id: "maps-search", score: 1, rank: 1 }],
  provenance: "local",
  confidence: 0.99,
  latency_ms: 3.2,
};

describe("Session", () => {
  it("allows exactly one prediction in flight", () => {
    const session = new Session();
    expect(session.beginPrediction()).toBe(true);
    expect(session.beginPrediction()).toBe(false);
    session.servePrediction(PREDICTION);
    expect(session.beginPrediction()).toBe(true);
  });

  it("blocks submission of blank text", () => {
    const session = new Session();
    expect(session.canSubmit("   ")).toBe(false);
    expect(session.canSubmit("lunch")).toBe(true);
    session.beginPrediction();
    expect(session.canSubmit("lunch")).toBe(false);
  });

  it("tracks latency and connection from a served prediction", () => {
    const session = new Session();
    session.beginPrediction();
    session.servePrediction(PREDICTION);
    expect(session.requestId).toBe("r-1");
    expect(session.lastLatencyMs).toBe(3.2);
    expect(session.connection).toBe("ok");
    expect(session.selectionPending).toBe(true);
  });

  it("marks the connection down only on transport failures", () => {
    const session = new Session();
    session.beginPrediction();
    session.failPrediction(true);
    expect(session.connection).toBe("down");
    expect(session.requestId).toBeNull();

    const other = new Session();
    other.beginPrediction();
    other.failPrediction(false);
    expect(other.connection).toBe("unknown");
  });

  it("drops every click after the first per served prediction", () => {
    const session = new Session();
    expect(session.beginSelection()).toBe(false); // nothing served yet
    session.beginPrediction();
    session.servePrediction(PREDICTION);

    expect(session.beginSelection()).toBe(true);
    expect(session.beginSelection()).toBe(false); // request in flight
    session.confirmSelection("maps-search");
    expect(session.beginSelection()).toBe(false); // already settled
    expect(session.selectionPending).toBe(false);
  });

  it("lets a failed selection be retried unless the server settled it", () => {
    const session = new Session();
    session.beginPrediction();
    session.servePrediction(PREDICTION);

    session.beginSelection();
    session.failSelection(false);
    expect(session.beginSelection()).toBe(true); // retry allowed

    session.failSelection(true, "maps-search");
    expect(session.selectedId).toBe("maps-search");
    expect(session.beginSelection()).toBe(false);
  });

  it("resets to a blank slate when the user switches", () => {
    const session = new Session();
    session.beginPrediction();
    session.servePrediction(PREDICTION);
    session.confirmSelection("maps-search");
    session.reset();
    expect(session.requestId).toBeNull();
    expect(session.selectedId).toBeNull();
    expect(session.lastLatencyMs).toBeNull();
    expect(session.awaitingPrediction).toBe(false);
  });
});
