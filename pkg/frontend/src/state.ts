import type { ClassificationResult, FoodRecord, NutritionFacts } from "./types.js";
import { UNKNOWN_CLASS } from "./types.js";

export type OverlayMode = "idle" | "pending" | "showing";

export interface OverlayCurrent {
  className: string;
  confidence: number;
  food?: FoodRecord;
  nutrition?: NutritionFacts;
  detailsError?: boolean;
}

export interface OverlayState {
  mode: OverlayMode;
  current: OverlayCurrent | null;
  portionG: number;
}

export function initialState(): OverlayState {
  return { mode: "idle", current: null, portionG: 100 };
}

/**
 * Apply one classification result.
 *
 * Transitions: a stable result shows (or refreshes) its class; reset or an
 * unknown class tears the overlay down to idle; every other result leaves
 * the mode unchanged. The overlay never shows a class other than the one
 * in the last stable result.
 */
export function applyResult(state: OverlayState, result: ClassificationResult): OverlayState {
  if (result.reset || result.class_name === UNKNOWN_CLASS) {
    return { ...state, mode: "idle", current: null };
  }
  if (result.stable) {
    const sameClass = state.current?.className === result.class_name;
    return {
      ...state,
      // keep fetched details when the same class stays stable
      mode: sameClass && state.mode === "showing" ? "showing" : "pending",
      current: sameClass
        ? { ...state.current!, confidence: result.confidence }
        : { className: result.class_name, confidence: result.confidence },
    };
  }
  return state;
}

/** Attach fetched details; promotes pending to showing. */
export function applyDetails(
  state: OverlayState,
  className: string,
  food: FoodRecord,
  nutrition: NutritionFacts,
): OverlayState {
  if (state.current === null || state.current.className !== className) {
    return state; // stale fetch for a class no longer on screen
  }
  return {
    ...state,
    mode: "showing",
    current: { ...state.current, food, nutrition, detailsError: false },
  };
}

export function applyDetailsError(state: OverlayState, className: string): OverlayState {
  if (state.current === null || state.current.className !== className) {
    return state;
  }
  // overlay box remains; the panel offers a retry
  return { ...state, current: { ...state.current, detailsError: true } };
}

export function applyNutrition(
  state: OverlayState,
  className: string,
  nutrition: NutritionFacts,
): OverlayState {
  if (state.current === null || state.current.className !== className) {
    return state;
  }
  return { ...state, current: { ...state.current, nutrition } };
}

export function setPortion(state: OverlayState, portionG: number): OverlayState {
  if (!(portionG > 0)) {
    return state;
  }
  return { ...state, portionG };
}
