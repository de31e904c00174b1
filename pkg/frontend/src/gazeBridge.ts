import type { SurveyApi } from "./api.js";
import type { GazeSample } from "./types.js";

type SampleSource = {
  subscribe(listener: (sample: GazeSample) => void): () => void;
};

/**
 * Optional forwarding of tracker-bridge samples to the service.
 *
 * Each sample is tagged with the image on screen when it arrived. Batches
 * are sent through a serialized promise chain, so they reach the service
 * in capture order with at most one request in flight; ``stop`` drains
 * everything still queued. Failures degrade silently: the affected batch
 * is dropped and choices remain valid without gaze.
 */
export class GazeForwarder {
  private pending: Array<{ image: string; sample: GazeSample }> = [];
  private chain: Promise<void> = Promise.resolve();
  private currentImage: string | null = null;
  private unsubscribe: (() => void) | null = null;
  private stopped = false;
  forwarded = 0;

  constructor(
    private readonly api: SurveyApi,
    private readonly sessionId: string,
    private readonly batchSize: number = 60,
  ) {}

  attach(source: SampleSource): void {
    this.unsubscribe = source.subscribe((sample) => this.push(sample));
  }

  viewingImage(imageId: string | null): void {
    if (imageId !== this.currentImage) {
      this.currentImage = imageId;
      void this.flush(); // ship whatever belongs to the previous image
    }
  }

  push(sample: GazeSample): void {
    if (this.stopped || this.currentImage === null) return;
    this.pending.push({ image: this.currentImage, sample });
    if (this.pending.length >= this.batchSize) void this.flush();
  }

  flush(): Promise<void> {
    this.chain = this.chain.then(() => this.drain());
    return this.chain;
  }

  private async drain(): Promise<void> {
    while (this.pending.length > 0) {
      const image = this.pending[0]!.image;
      const batch: GazeSample[] = [];
      while (this.pending.length > 0 && this.pending[0]!.image === image) {
        batch.push(this.pending.shift()!.sample);
      }
      try {
        this.forwarded += await this.api.sendGaze(this.sessionId, image, batch);
      } catch {
        // silent degradation: drop this batch, keep the study usable
      }
    }
  }

  async stop(): Promise<void> {
    this.unsubscribe?.();
    this.unsubscribe = null;
    await this.flush();
    this.stopped = true;
  }
}

/** WebSocket adapter for a local tracker bridge; absent bridge = no-op. */
export function connectLocalBridge(url: string): SampleSource | null {
  if (typeof WebSocket === "undefined") return null;
  try {
    const socket = new WebSocket(url);
    return {
      subscribe(listener) {
        const onMessage = (event: MessageEvent) => {
          try {
            const sample = JSON.parse(String(event.data)) as GazeSample;
            if (typeof sample.t_ms === "number") listener(sample);
          } catch {
            // malformed bridge frame; ignore
          }
        };
        socket.addEventListener("message", onMessage);
        return () => {
          socket.removeEventListener("message", onMessage);
          socket.close();
        };
      },
    };
  } catch {
    return null;
  }
}
