// Thin client for the annotation service. Judgments that fail on the
// network are retained and retried before being given up on.

import type { Choice, JudgmentResponse, NextResponse } from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class AnnotationClient {
  constructor(
    private readonly baseUrl: string,
    private readonly annotator: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  async nextTriplet(): Promise<NextResponse> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/api/session/${encodeURIComponent(this.annotator)}/next`,
    );
    if (!resp.ok) {
      throw new ApiError(resp.status, `next triplet failed: ${resp.status}`);
    }
    return (await resp.json()) as NextResponse;
  }

  /** POST one judgment; network failures are retried with a short backoff. */
  async postJudgment(
    tripletId: string,
    choice: Choice,
    retries = 2,
    backoffMs = 500,
  ): Promise<JudgmentResponse> {
    let lastError: unknown;
    for (let attempt = 0; attempt <= retries; attempt++) {
      try {
        const resp = await this.fetchFn(`${this.baseUrl}/api/judgment`, {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({
            session: this.annotator,
            triplet_id: tripletId,
            choice,
          }),
        });
        if (!resp.ok) {
          // a definitive server answer is not retriable
          throw new ApiError(resp.status, `judgment rejected: ${resp.status}`);
        }
        return (await resp.json()) as JudgmentResponse;
      } catch (err) {
        if (err instanceof ApiError) throw err;
        lastError = err; // network failure: keep the judgment and retry
        if (attempt < retries) {
          await new Promise((r) => setTimeout(r, backoffMs));
        }
      }
    }
    throw lastError instanceof Error ? lastError : new Error(String(lastError));
  }
}
