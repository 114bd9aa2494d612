/**
 * Headless studio session: the full state machine behind the page, with no
 * DOM in sight. The browser layer subscribes to events and paints; scripted
 * drivers (and the tests) call the same methods directly.
 *
 * Two invariants anchor everything here. Masks are never recomputed or
 * touched client-side: `roles[role].mask` is always exactly the last RLE
 * the wire returned. And every state change maps to one API call, so a
 * recorded call log replays to the same result.
 */

import { ApiError } from "./api.js";
import type { Role, StylizeReply, UploadReply } from "./api.js";
import { resampleContour } from "./prompts.js";
import type { PromptBox, PromptSet } from "./prompts.js";
import type { RleMask } from "./rle.js";
import { MaskProposer } from "./sequence.js";

/** The slice of the client the session needs; RecordingClient fits too. */
export interface SessionApi {
  createSession(): Promise<string>;
  putImage(sid: string, role: Role, png: Uint8Array): Promise<UploadReply>;
  proposeMask(sid: string, role: Role, prompts: PromptSet): Promise<RleMask>;
  commitPair(sid: string, content: RleMask, style: RleMask): Promise<{ index: number }>;
  deletePair(sid: string, index: number): Promise<{ ok: boolean }>;
  stylize(sid: string): Promise<StylizeReply>;
  fetchResult(sid: string): Promise<Uint8Array>;
}

export interface RoleState {
  size: { h: number; w: number } | null;
  /** Prompts placed since the last clear; resent whole on every edit. */
  prompts: PromptSet;
  /** Last mask received from the wire, byte-for-byte. */
  mask: RleMask | null;
  /** Error name from the last failed proposal, cleared on success. */
  maskError: string | null;
}

export interface PairChip {
  content: RleMask;
  style: RleMask;
  /** Error name from the last run that blamed this pair. */
  error: string | null;
}

export type RunOutcome =
  | { ok: true; png: Uint8Array; cached: boolean }
  | { ok: false; error: string; pair?: number };

export interface SessionEvents {
  onMask?(role: Role): void;
  onPairsChanged?(): void;
  onResult?(png: Uint8Array): void;
}

const ROLES: Role[] = ["content", "style"];

export class StudioSession {
  readonly roles: Record<Role, RoleState> = {
    content: { size: null, prompts: {}, mask: null, maskError: null },
    style: { size: null, prompts: {}, mask: null, maskError: null },
  };
  readonly pairs: PairChip[] = [];
  lastResult: Uint8Array | null = null;

  private readonly proposers: Record<Role, MaskProposer>;

  private constructor(
    private readonly api: SessionApi,
    readonly sid: string,
    private readonly events: SessionEvents,
  ) {
    const proposerFor = (role: Role): MaskProposer =>
      new MaskProposer(
        (prompts) => this.api.proposeMask(this.sid, role, prompts),
        (mask) => {
          this.roles[role].mask = mask;
          this.roles[role].maskError = null;
          this.events.onMask?.(role);
        },
        (err) => {
          this.roles[role].maskError = err instanceof ApiError ? err.name : String(err);
          this.events.onMask?.(role);
        },
      );
    this.proposers = { content: proposerFor("content"), style: proposerFor("style") };
  }

  static async open(api: SessionApi, events: SessionEvents = {}): Promise<StudioSession> {
    const sid = await api.createSession();
    return new StudioSession(api, sid, events);
  }

  async uploadImage(role: Role, png: Uint8Array): Promise<void> {
    const reply = await this.api.putImage(this.sid, role, png);
    const state = this.roles[role];
    state.size = { h: reply.h, w: reply.w };
    state.prompts = {};
    state.mask = null;
    state.maskError = null;
    if (reply.pairs_cleared && this.pairs.length > 0) {
      // the service dropped its pair list; mirror that
      this.pairs.length = 0;
      this.events.onPairsChanged?.();
    }
  }

  /** Append a point and resend the whole prompt set. */
  placePoint(role: Role, x: number, y: number, label: 0 | 1): void {
    const state = this.roles[role];
    state.prompts = {
      ...state.prompts,
      points: [...(state.prompts.points ?? []), { x, y, label }],
    };
    this.proposers[role].request(state.prompts);
  }

  setBox(role: Role, box: PromptBox): void {
    const state = this.roles[role];
    state.prompts = { ...state.prompts, box };
    this.proposers[role].request(state.prompts);
  }

  setContour(role: Role, vertices: [number, number][]): void {
    const state = this.roles[role];
    state.prompts = { ...state.prompts, contour: resampleContour(vertices) };
    this.proposers[role].request(state.prompts);
  }

  /** Local reset; proposals are stateless so nothing goes over the wire. */
  clearPrompts(role: Role): void {
    const state = this.roles[role];
    state.prompts = {};
    state.mask = null;
    state.maskError = null;
    this.events.onMask?.(role);
  }

  proposing(role: Role): boolean {
    return this.proposers[role].busy;
  }

  /** Resolves when no mask proposal is running or queued on either image. */
  async settled(): Promise<void> {
    await Promise.all(ROLES.map((role) => this.proposers[role].settled()));
  }

  async commitPair(): Promise<number> {
    const content = this.roles.content.mask;
    const style = this.roles.style.mask;
    if (content === null || style === null) {
      throw new Error("both images need a mask before committing a pair");
    }
    const { index } = await this.api.commitPair(this.sid, content, style);
    this.pairs.push({ content, style, error: null });
    this.events.onPairsChanged?.();
    return index;
  }

  async removePair(index: number): Promise<void> {
    await this.api.deletePair(this.sid, index);
    this.pairs.splice(index, 1);
    this.events.onPairsChanged?.();
  }

  /**
   * Run stylization and fetch the PNG. A structured rejection that names a
   * pair lands on that chip instead of throwing; transport failures still
   * throw.
   */
  async runAndShow(): Promise<RunOutcome> {
    for (const chip of this.pairs) chip.error = null;
    let reply: StylizeReply;
    try {
      reply = await this.api.stylize(this.sid);
    } catch (err) {
      if (err instanceof ApiError) {
        if (typeof err.pair === "number" && err.pair < this.pairs.length) {
          this.pairs[err.pair].error = err.name;
          this.events.onPairsChanged?.();
          return { ok: false, error: err.name, pair: err.pair };
        }
        return { ok: false, error: err.name };
      }
      throw err;
    }
    const png = await this.api.fetchResult(this.sid);
    this.lastResult = png;
    this.events.onResult?.(png);
    return { ok: true, png, cached: reply.cached };
  }
}
