import type { ClassificationResult, FoodRecord, NutritionFacts, ServerConfig } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let code = "http_error";
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { error?: string; detail?: string };
      code = body.error ?? code;
      detail = body.detail ?? detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, code, detail);
  }
  return (await response.json()) as T;
}

/** Thin fetch wrapper over the five service endpoints. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  getConfig(): Promise<ServerConfig> {
    return this.fetchFn(`${this.baseUrl}/v1/config`).then((r) => asJson<ServerConfig>(r));
  }

  classify(frame: Blob, sessionId: string): Promise<ClassificationResult> {
    return this.fetchFn(`${this.baseUrl}/v1/classify`, {
      method: "POST",
      body: frame,
      headers: {
        "Content-Type": frame.type || "image/png",
        "X-Session": sessionId,
      },
    }).then((r) => asJson<ClassificationResult>(r));
  }

  getFood(className: string): Promise<FoodRecord> {
    return this.fetchFn(`${this.baseUrl}/v1/foods/${encodeURIComponent(className)}`).then((r) =>
      asJson<FoodRecord>(r),
    );
  }

  getNutrition(className: string, portionG: number): Promise<NutritionFacts> {
    const url = `${this.baseUrl}/v1/foods/${encodeURIComponent(className)}/nutrition?portion_g=${portionG}`;
    return this.fetchFn(url).then((r) => asJson<NutritionFacts>(r));
  }
}
