// Typed client for the annotation service's /v1 API.

export interface SessionState {
  status: "training" | "awaiting_labels" | "completed" | "failed";
  cycle: number;
  labeled: number;
  budget: number;
  strategy: string;
  num_classes: number | null;
  batch: { pending: number; resolved: number };
  error: string | null;
}

export interface BatchSample {
  id: number;
  values: number[];
  position?: [number, number];
  pixels?: number[][];
}

export interface BatchPayload {
  cycle: number;
  status: string;
  num_classes: number | null;
  samples: BatchSample[];
}

export interface MetricsRecord {
  cycle: number;
  labeled: number;
  accuracy: number;
  new_mean_entropy: number | null;
  class_counts: number[];
  selection_s: number | null;
  strategy: string;
  seed: number;
}

export type LabelValue = number | "skip";

export interface LabelResult {
  accepted: number[];
  conflicts: number[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as T;
  }

  session(): Promise<SessionState> {
    return this.get<SessionState>("/v1/session");
  }

  batch(): Promise<BatchPayload> {
    return this.get<BatchPayload>("/v1/batch");
  }

  metrics(): Promise<{ records: MetricsRecord[] }> {
    return this.get<{ records: MetricsRecord[] }>("/v1/metrics");
  }

  async postLabels(labels: Record<string, LabelValue>): Promise<LabelResult> {
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ labels }),
    });
    if (resp.status === 409) {
      // everything in the post was already labeled: a state signal, not a failure
      return { accepted: [], conflicts: [] };
    }
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as LabelResult;
  }
}
