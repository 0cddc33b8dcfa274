import { ApiClient } from "./api.js";
import { PollLoop } from "./pollLoop.js";
import {
  applyDetails,
  applyDetailsError,
  applyNutrition,
  applyResult,
  initialState,
  setPortion,
  type OverlayState,
} from "./state.js";
import { renderDegraded, renderOverlay, type OverlayElements } from "./overlay.js";

const CAPTURE_SIZE = 256; // frames are downscaled client-side before upload

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function serverBaseUrl(): string {
  const param = new URLSearchParams(window.location.search).get("server");
  return (param ?? "http://127.0.0.1:8000").replace(/\/$/, "");
}

async function openCamera(video: HTMLVideoElement): Promise<void> {
  const stream = await navigator.mediaDevices.getUserMedia({
    video: { width: { ideal: 640 }, height: { ideal: 480 } },
    audio: false,
  });
  video.srcObject = stream;
  await video.play();
}

function captureFrame(video: HTMLVideoElement, canvas: HTMLCanvasElement): Promise<Blob> {
  const side = Math.min(video.videoWidth, video.videoHeight);
  const sx = (video.videoWidth - side) / 2;
  const sy = (video.videoHeight - side) / 2;
  canvas.width = CAPTURE_SIZE;
  canvas.height = CAPTURE_SIZE;
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return Promise.reject(new Error("canvas 2d context unavailable"));
  }
  ctx.drawImage(video, sx, sy, side, side, 0, 0, CAPTURE_SIZE, CAPTURE_SIZE);
  return new Promise((resolve, reject) => {
    canvas.toBlob(
      (blob) => (blob ? resolve(blob) : reject(new Error("frame encoding failed"))),
      "image/png",
    );
  });
}

async function run(): Promise<void> {
  const api = new ApiClient(serverBaseUrl());
  const sessionId = `overlay-${Math.random().toString(36).slice(2, 10)}`;
  const video = el<HTMLVideoElement>("camera");
  const capture = document.createElement("canvas");
  const els: OverlayElements = {
    card: el("overlay-card"),
    title: el("overlay-title"),
    confidence: el("overlay-confidence"),
    ingredients: el("overlay-ingredients"),
    health: el("overlay-health"),
    retry: el("overlay-retry"),
    radar: el<HTMLCanvasElement>("overlay-radar"),
    degraded: el("degraded"),
  };
  const portionInput = el<HTMLInputElement>("portion");
  const portionLabel = el("portion-label");

  let state: OverlayState = initialState();
  const update = (next: OverlayState): void => {
    state = next;
    renderOverlay(els, state);
  };

  const fetchDetails = (className: string): void => {
    Promise.all([api.getFood(className), api.getNutrition(className, state.portionG)])
      .then(([food, nutrition]) => update(applyDetails(state, className, food, nutrition)))
      .catch(() => update(applyDetailsError(state, className)));
  };

  els.retry.addEventListener("click", () => {
    if (state.current) {
      fetchDetails(state.current.className);
    }
  });

  portionInput.addEventListener("change", () => {
    const grams = Number(portionInput.value);
    update(setPortion(state, grams));
    portionLabel.textContent = `${state.portionG} g`;
    const current = state.current;
    if (current?.food) {
      // portion changes only re-fetch the scaled nutrition facts
      api
        .getNutrition(current.className, state.portionG)
        .then((nutrition) => update(applyNutrition(state, current.className, nutrition)))
        .catch(() => update(applyDetailsError(state, current.className)));
    }
  });

  try {
    await openCamera(video);
  } catch (error) {
    el("fatal").textContent =
      `camera unavailable: ${error instanceof Error ? error.message : String(error)}`;
    el("fatal").style.display = "block";
    return;
  }

  const config = await api.getConfig();
  el("status").textContent =
    `polling every ${config.default_interval_ms} ms, ` +
    `threshold ${config.threshold}, k=${config.stability_k}`;

  const loop = new PollLoop({
    intervalMs: config.default_interval_ms,
    captureFrame: () => captureFrame(video, capture),
    classify: (frame) => api.classify(frame, sessionId),
    onResult: (result) => {
      const before = state.current?.className;
      update(applyResult(state, result));
      const nowShowing = state.current?.className;
      if (nowShowing && (state.mode === "pending" || before !== nowShowing)) {
        fetchDetails(nowShowing);
      }
    },
    onNetworkError: () => renderDegraded(els, true),
    onNetworkRecovered: () => renderDegraded(els, false),
  });
  loop.start();
}

run().catch((error) => {
  console.error(error);
  const fatal = document.getElementById("fatal");
  if (fatal) {
    fatal.textContent = String(error);
    fatal.style.display = "block";
  }
});
