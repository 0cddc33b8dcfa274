import type { OverlayState } from "./state.js";
import { drawRadar } from "./radar.js";

export interface OverlayElements {
  card: HTMLElement;
  title: HTMLElement;
  confidence: HTMLElement;
  ingredients: HTMLElement;
  health: HTMLElement;
  retry: HTMLElement;
  radar: HTMLCanvasElement;
  degraded: HTMLElement;
}

/** Render the overlay card from the current state (fixed-position card). */
export function renderOverlay(els: OverlayElements, state: OverlayState): void {
  const visible = state.mode !== "idle" && state.current !== null;
  els.card.style.display = visible ? "block" : "none";
  if (!visible || state.current === null) {
    return;
  }
  const current = state.current;
  els.title.textContent = current.food?.display_name ?? current.className;
  els.confidence.textContent = `${Math.round(current.confidence * 100)}%`;
  els.retry.style.display = current.detailsError ? "inline-block" : "none";

  els.ingredients.replaceChildren();
  if (current.food) {
    for (const ingredient of current.food.ingredients) {
      const li = document.createElement("li");
      li.textContent = ingredient;
      els.ingredients.appendChild(li);
    }
    els.health.textContent = `health ${current.food.health_value}/100`;
  } else {
    els.health.textContent = current.detailsError ? "details unavailable" : "loading…";
  }

  if (current.nutrition) {
    const ctx = els.radar.getContext("2d");
    if (ctx) {
      drawRadar(ctx, current.nutrition, els.radar.width);
    }
  }
}

export function renderDegraded(els: OverlayElements, degraded: boolean): void {
  els.degraded.style.display = degraded ? "block" : "none";
}
