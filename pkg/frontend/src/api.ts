/** HTTP client for the review service.
 *
 * Every response is parsed against the wire schemas; every outbound verdict
 * body is validated against the service contract before fetch is called, so
 * an invalid body can never leave the client.
 */

import type { ZodType } from "zod";
import {
  InstanceDetailResponse,
  MetricsResponse,
  QueuePageResponse,
  RunDetailResponse,
  RunsResponse,
  VerdictRequest,
  VerdictResponse,
  ErrorBody,
  type VerdictWire,
} from "./schemas.js";

export type FetchLike = (
  input: string,
  init?: RequestInit
) => Promise<Response>;

/** A request that failed: HTTP error status, unreachable service, or a
 * response that does not match the expected wire format. */
export class ApiError extends Error {
  constructor(
    readonly kind: "http" | "network" | "wire",
    /** HTTP status for kind "http"; 0 otherwise. */
    readonly status: number,
    readonly detail: string,
    /** Violation list from a 422 verdict rejection, empty otherwise. */
    readonly violations: readonly string[] = []
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

/** An outbound body that failed client-side validation. Nothing was sent. */
export class PreflightError extends Error {
  constructor(readonly issues: readonly string[]) {
    super(`refusing to send invalid verdict body: ${issues.join("; ")}`);
    this.name = "PreflightError";
  }
}

export interface QueueQuery {
  status?: "pending" | "reviewed" | "failed";
  offset?: number;
  limit?: number;
}

/** The surface the UI controller needs; ApiClient is the live implementation. */
export interface ReviewApi {
  listRuns(): Promise<RunsResponse>;
  getRun(runId: string): Promise<RunDetailResponse>;
  listInstances(runId: string, query?: QueueQuery): Promise<QueuePageResponse>;
  getInstance(runId: string, instanceId: string): Promise<InstanceDetailResponse>;
  submitVerdict(
    runId: string,
    instanceId: string,
    body: VerdictRequest
  ): Promise<VerdictWire>;
  getMetrics(runId: string): Promise<MetricsResponse>;
}

export class ApiClient implements ReviewApi {
  private readonly fetchImpl: FetchLike;

  /** baseUrl is the service origin without the /api prefix; "" means same
   * origin (the service mounts the UI build next to the API). */
  constructor(
    private readonly baseUrl: string = "",
    fetchImpl?: FetchLike
  ) {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  listRuns(): Promise<RunsResponse> {
    return this.request("GET", "/api/runs", RunsResponse);
  }

  getRun(runId: string): Promise<RunDetailResponse> {
    return this.request("GET", `/api/runs/${enc(runId)}`, RunDetailResponse);
  }

  listInstances(runId: string, query: QueueQuery = {}): Promise<QueuePageResponse> {
    const params = new URLSearchParams();
    if (query.status !== undefined) params.set("status", query.status);
    if (query.offset !== undefined) params.set("offset", String(query.offset));
    if (query.limit !== undefined) params.set("limit", String(query.limit));
    const qs = params.size > 0 ? `?${params.toString()}` : "";
    return this.request(
      "GET",
      `/api/runs/${enc(runId)}/instances${qs}`,
      QueuePageResponse
    );
  }

  getInstance(runId: string, instanceId: string): Promise<InstanceDetailResponse> {
    return this.request(
      "GET",
      `/api/runs/${enc(runId)}/instances/${enc(instanceId)}`,
      InstanceDetailResponse
    );
  }

  async submitVerdict(
    runId: string,
    instanceId: string,
    body: VerdictRequest
  ): Promise<VerdictWire> {
    const checked = VerdictRequest.safeParse(body);
    if (!checked.success) {
      throw new PreflightError(
        checked.error.issues.map((issue) => issue.message)
      );
    }
    const response = await this.request(
      "POST",
      `/api/runs/${enc(runId)}/instances/${enc(instanceId)}/verdict`,
      VerdictResponse,
      checked.data
    );
    return response.verdict;
  }

  getMetrics(runId: string): Promise<MetricsResponse> {
    return this.request("GET", `/api/runs/${enc(runId)}/metrics`, MetricsResponse);
  }

  private async request<T>(
    method: "GET" | "POST",
    path: string,
    schema: ZodType<T>,
    body?: unknown
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (cause) {
      const reason = cause instanceof Error ? cause.message : String(cause);
      throw new ApiError("network", 0, `service unreachable: ${reason}`);
    }
    if (!response.ok) {
      throw await toHttpError(response);
    }
    let payload: unknown;
    try {
      payload = await response.json();
    } catch {
      throw new ApiError("wire", 0, `non-JSON response from ${path}`);
    }
    const parsed = schema.safeParse(payload);
    if (!parsed.success) {
      const first = parsed.error.issues[0];
      const where = first ? ` (${first.path.join(".")}: ${first.message})` : "";
      throw new ApiError("wire", 0, `unexpected wire format from ${path}${where}`);
    }
    return parsed.data;
  }
}

async function toHttpError(response: Response): Promise<ApiError> {
  let detail = `HTTP ${response.status}`;
  let violations: string[] = [];
  try {
    const parsed = ErrorBody.safeParse(await response.json());
    if (parsed.success) {
      detail = parsed.data.detail;
      violations = parsed.data.violations ?? [];
    }
  } catch {
    // keep the generic detail when the error body is not JSON
  }
  return new ApiError("http", response.status, detail, violations);
}

function enc(segment: string): string {
  return encodeURIComponent(segment);
}
