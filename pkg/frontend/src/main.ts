// Wires the static page to the portal service.  All intelligence stays
// server-side; the page holds nothing but the current session, so a
// reload costs only scroll position.

import { ApiError, TransportError } from "./api.js";
import type { PortalApi, PortalFunction, Prediction } from "./api.js";
import { Session } from "./session.js";
import {
  renderBanner,
  renderCandidates,
  renderCollection,
  renderConfirmation,
  renderConnection,
  renderInlineError,
  renderStatus,
  toUiCandidates,
} from "./view.js";

export interface BootConfig {
  /** Set false to hide the local/LLM/fallback badge on candidates. */
  showProvenance?: boolean;
}

export interface BootHandle {
  session: Session;
  /** Resolves once the initial collection fetch settles. */
  ready: Promise<void>;
}

function grab<T extends HTMLElement>(doc: Document, id: string): T {
  const el = doc.getElementById(id);
  if (!el) {
    throw new Error(`page is missing #${id}`);
  }
  return el as T;
}

function describe(exc: unknown): string {
  if (exc instanceof ApiError) {
    return `${exc.kind}: ${exc.message}`;
  }
  if (exc instanceof TransportError) {
    return "portal unreachable · check the server and retry";
  }
  return exc instanceof Error ? exc.message : String(exc);
}

export function boot(doc: Document, api: PortalApi, config: BootConfig = {}): BootHandle {
  const showProvenance = config.showProvenance ?? true;

  const userInput = grab<HTMLInputElement>(doc, "user");
  const connectionEl = grab<HTMLElement>(doc, "connection");
  const askForm = grab<HTMLFormElement>(doc, "ask");
  const queryInput = grab<HTMLInputElement>(doc, "query");
  const submitButton = grab<HTMLButtonElement>(doc, "submit");
  const bannerEl = grab<HTMLElement>(doc, "banner");
  const statusEl = grab<HTMLElement>(doc, "status");
  const candidateList = grab<HTMLElement>(doc, "candidates");
  const ratingSelect = grab<HTMLSelectElement>(doc, "rating");
  const confirmationEl = grab<HTMLElement>(doc, "confirmation");
  const collectionList = grab<HTMLElement>(doc, "collection");
  const addForm = grab<HTMLFormElement>(doc, "add");
  const addApp = grab<HTMLInputElement>(doc, "add-app");
  const addAction = grab<HTMLInputElement>(doc, "add-action");
  const addContact = grab<HTMLInputElement>(doc, "add-contact");
  const addDescription = grab<HTMLInputElement>(doc, "add-description");
  const collectionError = grab<HTMLElement>(doc, "collection-error");

  const session = new Session();
  let collection = new Map<string, PortalFunction>();
  let served: Prediction | null = null;

  const uid = (): string => userInput.value.trim() || "demo";

  const ratingValue = (): number | undefined => {
    const raw = ratingSelect.value;
    return raw === "" ? undefined : Number(raw);
  };

  function paint(): void {
    submitButton.disabled = !session.canSubmit(queryInput.value);
    renderConnection(connectionEl, session.connection);
  }

  function showCollection(functions: PortalFunction[]): void {
    collection = new Map(functions.map((fn) => [fn.id, fn]));
    renderCollection(collectionList, functions, (id) => void removeFunction(id));
  }

  async function refreshCollection(): Promise<void> {
    try {
      showCollection(await api.listFunctions(uid()));
      renderInlineError(collectionError, null);
      session.connection = "ok";
    } catch (exc) {
      if (exc instanceof TransportError) {
        session.connection = "down";
      }
      renderInlineError(collectionError, describe(exc));
    }
    paint();
  }

  async function submitQuery(): Promise<void> {
    if (!session.canSubmit(queryInput.value) || !session.beginPrediction()) {
      return;
    }
    paint();
    renderBanner(bannerEl, null);
    renderConfirmation(confirmationEl, null, null);
    try {
      const prediction = await api.predict(uid(), queryInput.value);
      session.servePrediction(prediction);
      served = prediction;
      renderCandidates(
        candidateList,
        toUiCandidates(prediction, collection),
        { showProvenance },
        (id) => void choose(id),
      );
      renderStatus(statusEl, prediction);
    } catch (exc) {
      session.failPrediction(exc instanceof TransportError);
      served = null;
      renderCandidates(candidateList, [], { showProvenance }, () => undefined);
      renderStatus(statusEl, null);
      renderBanner(bannerEl, describe(exc));
    }
    paint();
  }

  async function choose(functionId: string): Promise<void> {
    if (served === null || !session.beginSelection()) {
      return;
    }
    const requestId = served.request_id;
    const satisfaction = ratingValue();
    try {
      const ack = await api.select(uid(), requestId, functionId, satisfaction);
      session.confirmSelection(functionId);
      renderConfirmation(confirmationEl, ack, satisfaction ?? null);
      ratingSelect.value = "";
    } catch (exc) {
      const settled = exc instanceof ApiError && exc.kind === "DuplicateSelection";
      session.failSelection(settled, functionId);
      if (!settled) {
        renderBanner(bannerEl, describe(exc));
      }
    }
    paint();
  }

  async function addFunction(): Promise<void> {
    const app = addApp.value.trim();
    const action = addAction.value.trim();
    if (!app || !action) {
      renderInlineError(collectionError, "app and action are both required");
      return;
    }
    const fn = {
      app,
      action,
      contact: addContact.value.trim() || undefined,
      description: addDescription.value.trim() || undefined,
    };
    try {
      showCollection(await api.addFunction(uid(), fn));
      renderInlineError(collectionError, null);
      addForm.reset();
    } catch (exc) {
      renderInlineError(collectionError, describe(exc));
    }
  }

  async function removeFunction(functionId: string): Promise<void> {
    try {
      showCollection(await api.removeFunction(uid(), functionId));
      renderInlineError(collectionError, null);
    } catch (exc) {
      renderInlineError(collectionError, describe(exc));
    }
  }

  askForm.addEventListener("submit", (event) => {
    event.preventDefault();
    void submitQuery();
  });
  queryInput.addEventListener("input", paint);

  addForm.addEventListener("submit", (event) => {
    event.preventDefault();
    void addFunction();
  });

  userInput.addEventListener("change", () => {
    session.reset();
    served = null;
    renderCandidates(candidateList, [], { showProvenance }, () => undefined);
    renderStatus(statusEl, null);
    renderConfirmation(confirmationEl, null, null);
    renderBanner(bannerEl, null);
    paint();
    void refreshCollection();
  });

  paint();
  return { session, ready: refreshCollection() };
}
