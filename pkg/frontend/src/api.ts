/**
 * Typed client for the session service. Every number the console shows
 * comes out of these responses; nothing is recomputed on this side.
 */

import { z } from "zod";

export const trialSchema = z.object({
  index: z.number().int(),
  x: z.number(),
  y: z.union([z.literal(0), z.literal(1)]),
});

export const sessionViewSchema = z.object({
  id: z.string(),
  rule: z.object({ kind: z.string() }).catchall(z.number()),
  link_for_fit: z.string(),
  status: z.enum(["active", "closed"]),
  created_at: z.number(),
  trials: z.array(trialSchema),
  next_level: z.number().nullable(),
  next_trial_index: z.number().int().nullable(),
});

export const outcomeResultSchema = z.object({
  trial_index: z.number().int(),
  recorded_level: z.number(),
  next_level: z.number(),
  next_trial_index: z.number().int(),
});

const fitSchema = z.object({
  theta_hat: z.tuple([z.number(), z.number()]),
  J_hat: z.array(z.array(z.number())).nullable(),
  cov_hat: z.array(z.array(z.number())).nullable(),
  status: z.string(),
  n: z.number().int(),
  loglik: z.number().nullable(),
});

// unbounded Fieller sides arrive as null, never as Infinity
export const estimateSchema = z.discriminatedUnion("estimable", [
  z.object({
    estimable: z.literal(false),
    reason: z.string(),
    n: z.number().int(),
  }),
  z.object({
    estimable: z.literal(true),
    q: z.number(),
    level: z.number(),
    estimate: fitSchema,
    gamma_hat: z.number(),
    wald: z.object({
      lower: z.number(),
      upper: z.number(),
      half_width: z.number(),
    }),
    fieller: z.object({
      kind: z.string(),
      lower: z.number().nullable(),
      upper: z.number().nullable(),
      gamma_hat: z.number().nullable(),
      q: z.number(),
      level: z.number(),
    }),
  }),
]);

export type Trial = z.infer<typeof trialSchema>;
export type SessionView = z.infer<typeof sessionViewSchema>;
export type OutcomeResult = z.infer<typeof outcomeResultSchema>;
export type Estimate = z.infer<typeof estimateSchema>;
export type EstimableEstimate = Extract<Estimate, { estimable: true }>;

export interface ApiErrorBody {
  code: string;
  message: string;
  field?: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ApiErrorBody,
  ) {
    super(body.message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function toApiError(resp: Response): Promise<ApiError> {
  let body: ApiErrorBody = {
    code: `http_${resp.status}`,
    message: resp.statusText || `request failed with status ${resp.status}`,
  };
  try {
    const parsed: unknown = await resp.json();
    if (
      parsed !== null &&
      typeof parsed === "object" &&
      typeof (parsed as ApiErrorBody).code === "string" &&
      typeof (parsed as ApiErrorBody).message === "string"
    ) {
      body = parsed as ApiErrorBody;
    }
  } catch {
    // non-JSON error body; keep the status-derived one
  }
  return new ApiError(resp.status, body);
}

export class SessionClient {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async requestJson(path: string, init?: RequestInit): Promise<unknown> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) throw await toApiError(resp);
    return resp.json();
  }

  async createSession(
    rule: Record<string, unknown>,
    link: string,
  ): Promise<SessionView> {
    const raw = await this.requestJson("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ rule, link }),
    });
    return sessionViewSchema.parse(raw);
  }

  async getSession(id: string): Promise<SessionView> {
    return sessionViewSchema.parse(
      await this.requestJson(`/sessions/${encodeURIComponent(id)}`),
    );
  }

  async recordOutcome(
    id: string,
    y: 0 | 1,
    trialIndex: number,
  ): Promise<OutcomeResult> {
    const raw = await this.requestJson(
      `/sessions/${encodeURIComponent(id)}/outcomes`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ y, trial_index: trialIndex }),
      },
    );
    return outcomeResultSchema.parse(raw);
  }

  async getEstimate(id: string, q = 0.5, level = 0.95): Promise<Estimate> {
    const raw = await this.requestJson(
      `/sessions/${encodeURIComponent(id)}/estimate?q=${q}&level=${level}`,
    );
    return estimateSchema.parse(raw);
  }

  async exportCsv(id: string): Promise<string> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/sessions/${encodeURIComponent(id)}/export`,
    );
    if (!resp.ok) throw await toApiError(resp);
    return resp.text();
  }

  async closeSession(id: string): Promise<SessionView> {
    return sessionViewSchema.parse(
      await this.requestJson(`/sessions/${encodeURIComponent(id)}/close`, {
        method: "POST",
      }),
    );
  }
}
