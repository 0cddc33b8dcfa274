import type { ClassificationResult } from "./types.js";

export interface PollLoopOptions {
  intervalMs: number;
  captureFrame: () => Promise<Blob>;
  classify: (frame: Blob) => Promise<ClassificationResult>;
  onResult: (result: ClassificationResult) => void;
  onNetworkError?: (error: unknown) => void;
  onNetworkRecovered?: () => void;
}

/**
 * Fixed-interval polling with a hard single-in-flight rule: when a tick
 * fires while the previous request is still pending, the tick is skipped
 * (never queued). Network failures surface through the degraded-state
 * callback and the loop keeps going.
 */
export class PollLoop {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;
  private degraded = false;
  skippedTicks = 0;

  constructor(private readonly opts: PollLoopOptions) {}

  get running(): boolean {
    return this.timer !== null;
  }

  get requestInFlight(): boolean {
    return this.inFlight;
  }

  start(): void {
    if (this.timer !== null) {
      return;
    }
    this.timer = setInterval(() => this.tick(), this.opts.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** One polling step; exposed so tests can drive the loop directly. */
  tick(): void {
    if (this.inFlight) {
      this.skippedTicks += 1;
      return;
    }
    this.inFlight = true;
    this.opts
      .captureFrame()
      .then((frame) => this.opts.classify(frame))
      .then((result) => {
        if (this.degraded) {
          this.degraded = false;
          this.opts.onNetworkRecovered?.();
        }
        this.opts.onResult(result);
      })
      .catch((error) => {
        this.degraded = true;
        this.opts.onNetworkError?.(error);
      })
      .finally(() => {
        this.inFlight = false;
      });
  }
}
