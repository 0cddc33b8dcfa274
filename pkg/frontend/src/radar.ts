import type { NutritionFacts } from "./types.js";

/**
 * Fixed per-axis daily reference amounts. Normalizing every axis against
 * these constants makes radar shapes comparable across foods and portions.
 */
export const DAILY_REFERENCE: NutritionFacts = {
  calories_kcal: 2000,
  protein_g: 50,
  carbohydrate_g: 300,
  fat_g: 70,
  fiber_g: 30,
  sugar_g: 50,
};

export const AXIS_ORDER: Array<keyof NutritionFacts> = [
  "calories_kcal",
  "protein_g",
  "carbohydrate_g",
  "fat_g",
  "fiber_g",
  "sugar_g",
];

export const AXIS_LABELS: Record<keyof NutritionFacts, string> = {
  calories_kcal: "calories",
  protein_g: "protein",
  carbohydrate_g: "carbs",
  fat_g: "fat",
  fiber_g: "fiber",
  sugar_g: "sugar",
};

/** Normalized axis values (fraction of the daily reference), axis order fixed. */
export function radarAxes(facts: NutritionFacts): number[] {
  return AXIS_ORDER.map((key) => facts[key] / DAILY_REFERENCE[key]);
}

/**
 * Polygon vertices for normalized values on a hexagonal chart centered at
 * (cx, cy). Values are clamped to the unit radius for drawing only; the
 * data itself is never clipped.
 */
export function radarPoints(
  values: number[],
  cx: number,
  cy: number,
  radius: number,
): Array<[number, number]> {
  const n = values.length;
  return values.map((value, i) => {
    const angle = -Math.PI / 2 + (2 * Math.PI * i) / n;
    const r = Math.min(Math.max(value, 0), 1) * radius;
    return [cx + r * Math.cos(angle), cy + r * Math.sin(angle)];
  });
}

/** Draw the grid, axes, and value polygon onto a 2d canvas context. */
export function drawRadar(
  ctx: CanvasRenderingContext2D,
  facts: NutritionFacts,
  size: number,
): void {
  const cx = size / 2;
  const cy = size / 2;
  const radius = size * 0.38;
  ctx.clearRect(0, 0, size, size);

  ctx.strokeStyle = "rgba(255,255,255,0.25)";
  ctx.fillStyle = "rgba(255,255,255,0.85)";
  ctx.lineWidth = 1;
  for (const ring of [0.25, 0.5, 0.75, 1.0]) {
    const pts = radarPoints(new Array(AXIS_ORDER.length).fill(ring), cx, cy, radius);
    ctx.beginPath();
    pts.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
    ctx.closePath();
    ctx.stroke();
  }

  ctx.font = `${Math.round(size * 0.05)}px sans-serif`;
  ctx.textAlign = "center";
  const labelPts = radarPoints(new Array(AXIS_ORDER.length).fill(1.18), cx, cy, radius);
  labelPts.forEach(([x, y], i) => {
    ctx.fillText(AXIS_LABELS[AXIS_ORDER[i]], x, y);
  });

  const values = radarAxes(facts);
  const pts = radarPoints(values, cx, cy, radius);
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
  ctx.closePath();
  ctx.fillStyle = "rgba(80, 200, 120, 0.45)";
  ctx.fill();
  ctx.strokeStyle = "rgb(80, 200, 120)";
  ctx.lineWidth = 2;
  ctx.stroke();
}
