// Typed client for the whistlekit REST API. The UI never computes features
// or predictions itself; everything comes from these endpoints.

export type Label = { target: boolean; version: number } | null;

export type SnakeInfo = {
  snake_id: string;
  points: [number, number][];
  features: Record<string, number | boolean | null>;
  prediction: number | null;
  vote_fraction: number | null;
  label: Label;
};

export type SnippetSummary = {
  snippet_id: string;
  n_snakes: number;
  n_labeled: number;
  image_url: string;
  overlay_url: string;
};

export type Metrics = {
  accuracy: number;
  confusion: number[][];
  false_positive_rate: number;
  false_negative_rate: number;
  [key: string]: unknown;
};

export type TrainParams = {
  seed?: number;
  split_ratio?: number;
  reduced?: boolean;
  grid?: { n_estimators: number[]; criterion: string[] };
};

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseError(response: Response): Promise<ApiError> {
  let message = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") message = body.error;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, message);
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  private async postJson<T>(path: string, payload: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  listSnippets(): Promise<SnippetSummary[]> {
    return this.getJson("/api/snippets");
  }

  getSnakes(snippetId: string): Promise<SnakeInfo[]> {
    return this.getJson(`/api/snippets/${encodeURIComponent(snippetId)}/snakes`);
  }

  postLabel(snakeId: string, target: boolean, version?: number):
      Promise<{ snake_id: string; target: boolean; version: number }> {
    const payload: Record<string, unknown> = { snake_id: snakeId, target };
    if (version !== undefined) payload.version = version;
    return this.postJson("/api/labels", payload);
  }

  train(params: TrainParams = {}): Promise<Metrics> {
    return this.postJson("/api/train", params);
  }

  /** Last training metrics, or null when no run has happened yet. */
  async metrics(): Promise<Metrics | null> {
    try {
      return await this.getJson<Metrics>("/api/metrics");
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) return null;
      throw err;
    }
  }
}
