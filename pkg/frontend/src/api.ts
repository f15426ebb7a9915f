// Typed client for the portal HTTP API.  Response bodies are checked
// with zod so a contract drift fails loudly instead of rendering junk.

import { z } from "zod";

export const candidateSchema = z.object({
  function_id: z.string(),
  score: z.number(),
  rank: z.number().int(),
});

export const predictionSchema = z.object({
  request_id: z.string(),
  entries: z.array(candidateSchema),
  provenance: z.enum(["local", "llm", "fallback_frequency"]),
  confidence: z.number(),
  latency_ms: z.number(),
});

export const selectAckSchema = z.object({
  ok: z.boolean(),
  recorded: z.boolean(),
  execution: z.string(),
});

export const portalFunctionSchema = z.object({
  id: z.string(),
  app: z.string(),
  action: z.string(),
  contact: z.string().optional(),
  description: z.string().optional(),
});

export const functionListSchema = z.object({
  functions: z.array(portalFunctionSchema),
});

export const healthSchema = z.object({
  status: z.string(),
  users: z.number(),
  llm: z.boolean(),
});

// Portal errors arrive flat: {"error": "DuplicateSelection", "detail": "..."}.
const errorBodySchema = z.object({ error: z.string(), detail: z.string() });

export type Candidate = z.infer<typeof candidateSchema>;
export type Prediction = z.infer<typeof predictionSchema>;
export type SelectAck = z.infer<typeof selectAckSchema>;
export type PortalFunction = z.infer<typeof portalFunctionSchema>;

/** The server understood us and said no; `kind` names the error family. */
export class ApiError extends Error {
  readonly kind: string;
  readonly status: number;

  constructor(kind: string, detail: string, status: number) {
    super(detail);
    this.name = "ApiError";
    this.kind = kind;
    this.status = status;
  }
}

/** Never got a usable answer: network failure, timeout, or junk reply. */
export class TransportError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "TransportError";
  }
}

export interface NewFunction {
  app: string;
  action: string;
  contact?: string;
  description?: string;
}

/** The slice of the client the page logic depends on; tests fake this. */
export interface PortalApi {
  predict(userId: string, text: string): Promise<Prediction>;
  select(
    userId: string,
    requestId: string,
    functionId: string,
    satisfaction?: number,
  ): Promise<SelectAck>;
  listFunctions(userId: string): Promise<PortalFunction[]>;
  addFunction(userId: string, fn: NewFunction): Promise<PortalFunction[]>;
  removeFunction(userId: string, functionId: string): Promise<PortalFunction[]>;
}

export interface ClientOptions {
  baseUrl?: string;
  timeoutMs?: number;
  fetchFn?: typeof fetch;
}

export class PortalClient implements PortalApi {
  private readonly base: string;
  private readonly timeoutMs: number;
  private readonly fetchFn: typeof fetch;

  constructor(options: ClientOptions = {}) {
    this.base = (options.baseUrl ?? "").replace(/\/+$/, "");
    this.timeoutMs = options.timeoutMs ?? 10_000;
    this.fetchFn = options.fetchFn ?? fetch;
  }

  async predict(userId: string, text: string): Promise<Prediction> {
    const payload = {
      user_id: userId,
      text,
      context: { now: new Date().toISOString(), launches: [] },
    };
    return predictionSchema.parse(
      await this.call("POST", "/v1/predict", payload),
    );
  }

  async select(
    userId: string,
    requestId: string,
    functionId: string,
    satisfaction?: number,
  ): Promise<SelectAck> {
    const payload: Record<string, unknown> = {
      user_id: userId,
      request_id: requestId,
      function_id: functionId,
    };
    if (satisfaction !== undefined) {
      payload.satisfaction = satisfaction;
    }
    return selectAckSchema.parse(await this.call("POST", "/v1/select", payload));
  }

  async listFunctions(userId: string): Promise<PortalFunction[]> {
    const data = await this.call(
      "GET",
      `/v1/functions?user_id=${encodeURIComponent(userId)}`,
    );
    return functionListSchema.parse(data).functions;
  }

  async addFunction(userId: string, fn: NewFunction): Promise<PortalFunction[]> {
    const data = await this.call("POST", "/v1/functions", {
      user_id: userId,
      ...fn,
    });
    return functionListSchema.parse(data).functions;
  }

  async removeFunction(
    userId: string,
    functionId: string,
  ): Promise<PortalFunction[]> {
    const path =
      `/v1/functions/${encodeURIComponent(functionId)}` +
      `?user_id=${encodeURIComponent(userId)}`;
    const data = await this.call("DELETE", path);
    return functionListSchema.parse(data).functions;
  }

  async health(): Promise<z.infer<typeof healthSchema>> {
    return healthSchema.parse(await this.call("GET", "/v1/health"));
  }

  private async call(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, {
        method,
        headers:
          body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
        signal: this.timeoutSignal(),
      });
    } catch (exc) {
      throw new TransportError(exc instanceof Error ? exc.message : String(exc));
    }
    if (!response.ok) {
      let kind: string | null = null;
      let detail = "";
      try {
        const parsed = errorBodySchema.parse(await response.json());
        kind = parsed.error;
        detail = parsed.detail;
      } catch {
        kind = null;
      }
      if (kind !== null) {
        throw new ApiError(kind, detail, response.status);
      }
      throw new TransportError(`unexpected ${response.status} reply`);
    }
    try {
      return await response.json();
    } catch (exc) {
      const reason = exc instanceof Error ? exc.message : String(exc);
      throw new TransportError(`reply was not JSON: ${reason}`);
    }
  }

  private timeoutSignal(): AbortSignal | undefined {
    // Some DOM shims lack the static helper; a missing timeout only
    // means a hung request waits on the environment default instead.
    if (typeof AbortSignal !== "undefined" && "timeout" in AbortSignal) {
      return AbortSignal.timeout(this.timeoutMs);
    }
    return undefined;
  }
}
