import type { MixSnapshot } from "./state.js";
import type { StylizeRequest, StylizeResponse } from "./types.js";

export interface PreviewUpdate {
  image: string; // base64 PNG
  millis: number;
  seq: number;
  fromContent: boolean; // alpha=0 short-circuit: the upload itself
}

type StylizeFn = (req: StylizeRequest) => Promise<StylizeResponse>;

/**
 * Debounced preview requester with stale-response protection.
 *
 * Every `request()` bumps a sequence number; at most one stylize call is in
 * flight; when a response lands it is applied only if no newer state has
 * already been drawn, and if newer state arrived meanwhile one more call is
 * issued. So after any storm of slider moves the preview always converges
 * to the latest state.
 *
 * At alpha = 0 the blend resolves to the identity entry, which a trained
 * model reproduces only approximately; the studio treats alpha = 0 as "no
 * styling" and shows the uploaded content itself, exactly.
 */
export class PreviewDriver {
  private seq = 0;
  private appliedSeq = 0;
  private inFlight = false;
  private dirty = false;
  private latest: MixSnapshot | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  onUpdate: ((update: PreviewUpdate) => void) | null = null;
  onError: ((error: unknown) => void) | null = null;

  constructor(private stylize: StylizeFn, private delayMs = 80) {}

  request(snapshot: MixSnapshot): void {
    this.latest = snapshot;
    this.seq += 1;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.send();
    }, this.delayMs);
  }

  /** Resolves when no request is in flight and none is pending. */
  async settle(pollMs = 10): Promise<void> {
    for (;;) {
      if (!this.inFlight && !this.dirty && this.timer === null) return;
      await new Promise((r) => setTimeout(r, pollMs));
    }
  }

  private apply(seq: number, update: Omit<PreviewUpdate, "seq">): void {
    if (seq <= this.appliedSeq) return; // stale response, newer preview already shown
    this.appliedSeq = seq;
    this.onUpdate?.({ ...update, seq });
  }

  private async send(): Promise<void> {
    if (this.inFlight) {
      this.dirty = true;
      return;
    }
    const snapshot = this.latest;
    if (!snapshot || !snapshot.content || snapshot.weights.length === 0) return;
    const seq = this.seq;
    if (snapshot.alpha === 0) {
      this.apply(seq, { image: snapshot.content, millis: 0, fromContent: true });
      return;
    }
    this.inFlight = true;
    try {
      const response = await this.stylize({
        content: snapshot.content,
        weights: snapshot.weights,
        alpha: snapshot.alpha,
        format: "png",
      });
      this.apply(seq, { image: response.image, millis: response.millis, fromContent: false });
    } catch (error) {
      this.onError?.(error);
    } finally {
      this.inFlight = false;
      if (this.dirty) {
        this.dirty = false;
        void this.send();
      }
    }
  }
}
