/**
 * Coalescing proposer: at most one propose-mask request in flight per image.
 * While a request runs, rapid prompt edits collapse into a single pending
 * PromptSet; sequence numbers guarantee an older response can never
 * overwrite a newer applied mask.
 */

import type { PromptSet } from "./prompts.js";
import type { RleMask } from "./rle.js";

export class MaskProposer {
  private seq = 0;
  private applied = 0;
  private inflight = false;
  private pending: PromptSet | null = null;
  private waiters: (() => void)[] = [];

  constructor(
    private readonly propose: (prompts: PromptSet) => Promise<RleMask>,
    private readonly onMask: (mask: RleMask) => void,
    private readonly onError: (err: unknown) => void = () => {},
  ) {}

  get busy(): boolean {
    return this.inflight;
  }

  /** Queue the latest prompts; earlier queued-but-unsent prompts are dropped. */
  request(prompts: PromptSet): void {
    this.pending = prompts;
    if (!this.inflight) void this.pump();
  }

  /** Resolves once nothing is in flight or queued. */
  settled(): Promise<void> {
    if (!this.inflight && this.pending === null) return Promise.resolve();
    return new Promise((resolve) => this.waiters.push(resolve));
  }

  private async pump(): Promise<void> {
    this.inflight = true;
    try {
      while (this.pending !== null) {
        const prompts = this.pending;
        this.pending = null;
        const seq = ++this.seq;
        try {
          const mask = await this.propose(prompts);
          if (seq > this.applied) {
            this.applied = seq;
            this.onMask(mask);
          }
        } catch (err) {
          if (seq > this.applied) this.onError(err);
        }
      }
    } finally {
      this.inflight = false;
      const waiters = this.waiters;
      this.waiters = [];
      for (const wake of waiters) wake();
    }
  }
}
