/** Wire types mirrored from the recognition service JSON. */

export interface ClassificationResult {
  class_id: number;
  class_name: string;
  confidence: number;
  stable: boolean;
  reset: boolean;
  latency_ms: number;
  frame_seq: number;
}

export interface NutritionFacts {
  calories_kcal: number;
  protein_g: number;
  carbohydrate_g: number;
  fat_g: number;
  fiber_g: number;
  sugar_g: number;
}

export interface FoodRecord {
  class_name: string;
  display_name: string;
  ingredients: string[];
  nutrition_per_100g: NutritionFacts;
  health_value: number;
}

export interface ServerConfig {
  default_interval_ms: number;
  threshold: number;
  stability_k: number;
  classes: string[];
}

export const UNKNOWN_CLASS = "unknown";
