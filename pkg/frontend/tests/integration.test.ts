import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { PollLoop } from "../src/pollLoop.js";
import { radarAxes } from "../src/radar.js";
import {
  applyDetails,
  applyNutrition,
  applyResult,
  initialState,
  setPortion,
  type OverlayState,
} from "../src/state.js";
import type { ClassificationResult, FoodRecord, NutritionFacts } from "../src/types.js";

const per100: NutritionFacts = {
  calories_kcal: 116,
  protein_g: 7.6,
  carbohydrate_g: 16.3,
  fat_g: 2.9,
  fiber_g: 4.7,
  sugar_g: 1.2,
};

const dalRecord: FoodRecord = {
  class_name: "dal",
  display_name: "Dal Tadka",
  ingredients: ["lentils", "onion", "tomato"],
  nutrition_per_100g: per100,
  health_value: 61,
};

/** Scripted mock server: plays a classify sequence, scales nutrition linearly. */
function mockServer(script: Array<Partial<ClassificationResult>>, classifyDelayMs = 0) {
  let cursor = 0;
  const calls = { classify: 0, food: 0, nutrition: [] as number[] };

  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const respond = (body: unknown) =>
      new Response(JSON.stringify(body), {
        status: 200,
        headers: { "Content-Type": "application/json" },
      });

    if (url.endsWith("/v1/config")) {
      return respond({
        default_interval_ms: 500,
        threshold: 0.6,
        stability_k: 2,
        classes: ["dal", "idli", "dosa"],
      });
    }
    if (url.includes("/v1/classify")) {
      expect(init?.method).toBe("POST");
      calls.classify += 1;
      const step = script[Math.min(cursor, script.length - 1)];
      cursor += 1;
      const body: ClassificationResult = {
        class_id: 0,
        class_name: "dal",
        confidence: 0.92,
        stable: false,
        reset: false,
        latency_ms: 3,
        frame_seq: cursor,
        ...step,
      };
      if (classifyDelayMs > 0) {
        await new Promise((resolve) => setTimeout(resolve, classifyDelayMs));
      }
      return respond(body);
    }
    const nutritionMatch = url.match(/\/v1\/foods\/([^/]+)\/nutrition\?portion_g=(\d+)/);
    if (nutritionMatch) {
      calls.nutrition.push(Number(nutritionMatch[2]));
      const factor = Number(nutritionMatch[2]) / 100;
      const scaled = Object.fromEntries(
        Object.entries(per100).map(([k, v]) => [k, v * factor]),
      );
      return respond(scaled);
    }
    if (url.includes("/v1/foods/")) {
      calls.food += 1;
      return respond(dalRecord);
    }
    throw new Error(`unexpected url ${url}`);
  }) as typeof fetch;

  return { fetchFn, calls };
}

const frame = () => Promise.resolve(new Blob([new Uint8Array([9])], { type: "image/png" }));

describe("overlay against a scripted mock server", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  async function drive(
    script: Array<Partial<ClassificationResult>>,
    ms: number,
    classifyDelayMs = 0,
  ) {
    const { fetchFn, calls } = mockServer(script, classifyDelayMs);
    const api = new ApiClient("http://mock", fetchFn);
    const config = await api.getConfig();
    let state: OverlayState = initialState();
    const modeTrail: string[] = [];

    const loop = new PollLoop({
      intervalMs: config.default_interval_ms,
      captureFrame: frame,
      classify: (blob) => api.classify(blob, "test-session"),
      onResult: (result) => {
        const before = state.current?.className;
        state = applyResult(state, result);
        modeTrail.push(state.mode);
        const showing = state.current?.className;
        if (showing && (state.mode === "pending" || before !== showing)) {
          void Promise.all([
            api.getFood(showing),
            api.getNutrition(showing, state.portionG),
          ]).then(([food, nutrition]) => {
            state = applyDetails(state, showing, food, nutrition);
          });
        }
      },
    });
    loop.start();
    await vi.advanceTimersByTimeAsync(ms);
    loop.stop();
    await vi.advanceTimersByTimeAsync(10); // drain detail fetches
    return { state: () => state, calls, modeTrail, loop };
  }

  it("shows the overlay only after a stable result, then fills details", async () => {
    const run = await drive(
      [{ stable: false }, { stable: true }, { stable: true }],
      1600,
    );
    expect(run.modeTrail[0]).toBe("idle"); // unstable first frame
    expect(run.state().mode).toBe("showing");
    expect(run.state().current?.food?.display_name).toBe("Dal Tadka");
    expect(run.calls.food).toBe(1); // same class stays stable: one fetch
  });

  it("clears the overlay when the server signals reset", async () => {
    const run = await drive(
      [
        { stable: false },
        { stable: true },
        { stable: false, reset: true, class_name: "idli" },
      ],
      1600,
    );
    expect(run.modeTrail).toContain("pending");
    expect(run.state().mode).toBe("idle");
    expect(run.state().current).toBeNull();
  });

  it("clears on an unknown (below-threshold) classification", async () => {
    const run = await drive(
      [
        { stable: true },
        { stable: false, reset: true, class_name: "unknown", class_id: -1, confidence: 0.3 },
      ],
      1100,
    );
    expect(run.state().mode).toBe("idle");
  });

  it("enforces single-in-flight when the server answers at 2x the interval", async () => {
    const run = await drive([{ stable: true }], 6000, 1000);
    expect(run.loop.skippedTicks).toBeGreaterThan(0);
    expect(run.calls.classify).toBeLessThanOrEqual(7); // ~half the 12 ticks
  });

  it("doubles every radar axis when the portion goes 100 -> 200 g", async () => {
    const { fetchFn } = mockServer([{ stable: true }]);
    const api = new ApiClient("http://mock", fetchFn);
    let state = applyResult(initialState(), {
      class_id: 0, class_name: "dal", confidence: 0.92, stable: true,
      reset: false, latency_ms: 3, frame_seq: 1,
    });
    const base = await api.getNutrition("dal", 100);
    state = applyDetails(state, "dal", dalRecord, base);
    const baseAxes = radarAxes(state.current!.nutrition!);

    state = setPortion(state, 200);
    const doubled = await api.getNutrition("dal", state.portionG);
    state = applyNutrition(state, "dal", doubled);
    const doubledAxes = radarAxes(state.current!.nutrition!);

    doubledAxes.forEach((v, i) => expect(v).toBeCloseTo(2 * baseAxes[i], 10));
  });
});
