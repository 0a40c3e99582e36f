import type { StyleWeight } from "./types.js";

const EPS = 1e-6;

export interface MixSnapshot {
  weights: StyleWeight[]; // normalized: non-negative, sums to 1
  alpha: number;
  content: string | null; // base64 PNG
}

/**
 * Client-side mixing state.
 *
 * Raw slider values live here; `snapshot()` emits the normalized view the
 * server expects: every weight in [0, 1] and the sum exactly renormalized
 * to 1 (within 1e-6). Alpha is clamped to [0, 1] on every write.
 */
export class MixState {
  private raw = new Map<string, number>();
  private alphaValue = 1;
  private contentB64: string | null = null;
  private listeners: Array<() => void> = [];

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  setWeight(id: string, value: number): void {
    if (!Number.isFinite(value)) return;
    this.raw.set(id, Math.min(1, Math.max(0, value)));
    this.emit();
  }

  removeStyle(id: string): void {
    if (this.raw.delete(id)) this.emit();
  }

  weightOf(id: string): number {
    return this.raw.get(id) ?? 0;
  }

  selectedIds(): string[] {
    return [...this.raw.keys()];
  }

  get alpha(): number {
    return this.alphaValue;
  }

  setAlpha(value: number): void {
    if (!Number.isFinite(value)) return;
    this.alphaValue = Math.min(1, Math.max(0, value));
    this.emit();
  }

  get content(): string | null {
    return this.contentB64;
  }

  setContent(b64: string | null): void {
    this.contentB64 = b64;
    this.emit();
  }

  /** True when there is something to render. */
  ready(): boolean {
    return this.contentB64 !== null && this.normalizedWeights().length > 0;
  }

  normalizedWeights(): StyleWeight[] {
    const entries = [...this.raw.entries()].filter(([, w]) => w > 0);
    if (entries.length === 0) return [];
    let total = 0;
    for (const [, w] of entries) total += w;
    const weights = entries.map(([style_id, w]) => ({ style_id, w: w / total }));
    // nudge the largest entry so rounding error cannot push the sum off 1
    let sum = 0;
    for (const { w } of weights) sum += w;
    if (Math.abs(sum - 1) > EPS) {
      let top = 0;
      for (let i = 1; i < weights.length; i++) {
        if (weights[i].w > weights[top].w) top = i;
      }
      weights[top].w += 1 - sum;
    }
    return weights;
  }

  snapshot(): MixSnapshot {
    return {
      weights: this.normalizedWeights(),
      alpha: this.alphaValue,
      content: this.contentB64,
    };
  }
}
