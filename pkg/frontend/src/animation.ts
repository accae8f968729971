/**
 * Animation queue: activation effects play strictly in arrival order, one at
 * a time, 600 ms per glyph flow (a cosmetic constant; the order is the
 * contract).
 */

import type { Activation } from "./viewModel.js";

export const FLOW_DURATION_MS = 600;

export interface Scheduler {
  (callback: () => void, delayMs: number): void;
}

export class AnimationQueue {
  private queue: Activation[] = [];
  private playing = false;
  readonly played: Activation[] = [];

  constructor(
    private readonly onPlay: (activation: Activation) => void,
    private readonly schedule: Scheduler = (cb, ms) => setTimeout(cb, ms),
  ) {}

  enqueue(activation: Activation): void {
    this.queue.push(activation);
    if (!this.playing) this.playNext();
  }

  private playNext(): void {
    const next = this.queue.shift();
    if (!next) {
      this.playing = false;
      return;
    }
    this.playing = true;
    this.onPlay(next);
    this.played.push(next);
    const duration = next.kind === "glyph_flow" ? FLOW_DURATION_MS : 0;
    this.schedule(() => this.playNext(), duration);
  }
}
