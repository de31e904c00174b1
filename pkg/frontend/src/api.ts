import type {
  ChoiceEcho,
  Demographics,
  GazeSample,
  PairPayload,
  ServerSide,
  SessionInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

export interface SurveyApi {
  createSession(demographics: Demographics): Promise<SessionInfo>;
  nextPair(sessionId: string): Promise<PairPayload>;
  submitChoice(sessionId: string, pairId: string, chosen: ServerSide): Promise<ChoiceEcho>;
  sendGaze(sessionId: string, imageId: string, samples: GazeSample[]): Promise<number>;
}

const RETRYABLE_ATTEMPTS = 3;
const RETRY_DELAY_MS = 250;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Thin fetch wrapper around the survey service.
 *
 * Choice submission retries transparently on network failure: the service
 * keys choices by (session, pair), so replaying the identical request is
 * safe and yields the originally recorded answer.
 */
export class HttpSurveyApi implements SurveyApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const payload = (await resp.json()) as { detail?: unknown };
        if (payload.detail !== undefined) detail = JSON.stringify(payload.detail);
      } catch {
        // non-JSON error body; keep statusText
      }
      throw new ApiError(detail, resp.status);
    }
    return (await resp.json()) as T;
  }

  createSession(demographics: Demographics): Promise<SessionInfo> {
    return this.request<SessionInfo>("POST", "/sessions", demographics);
  }

  nextPair(sessionId: string): Promise<PairPayload> {
    return this.request<PairPayload>("GET", `/sessions/${sessionId}/pair`);
  }

  async submitChoice(
    sessionId: string,
    pairId: string,
    chosen: ServerSide,
  ): Promise<ChoiceEcho> {
    let lastError: unknown;
    for (let attempt = 0; attempt < RETRYABLE_ATTEMPTS; attempt++) {
      try {
        return await this.request<ChoiceEcho>("POST", `/sessions/${sessionId}/choice`, {
          pair_id: pairId,
          chosen,
        });
      } catch (err) {
        if (err instanceof ApiError) throw err; // the server spoke; don't replay
        lastError = err; // network failure: ack may be lost, replay is idempotent
        await sleep(RETRY_DELAY_MS * (attempt + 1));
      }
    }
    throw lastError;
  }

  async sendGaze(sessionId: string, imageId: string, samples: GazeSample[]): Promise<number> {
    const result = await this.request<{ accepted: number }>(
      "POST",
      `/sessions/${sessionId}/gaze`,
      { image_id: imageId, samples },
    );
    return result.accepted;
  }
}
