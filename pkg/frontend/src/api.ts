/**
 * Typed client for the stylization service. One method per endpoint; every
 * state change in the studio funnels through exactly one call here.
 */

import type { PromptSet } from "./prompts.js";
import { promptsToJson } from "./prompts.js";
import type { RleMask } from "./rle.js";

export type Role = "content" | "style";

export interface SessionSummary {
  id: string;
  content: { h: number; w: number } | null;
  style: { h: number; w: number } | null;
  pairs: number;
  has_result: boolean;
}

export interface UploadReply {
  h: number;
  w: number;
  pairs_cleared: boolean;
}

export interface StylizeReply {
  result: string;
  cached: boolean;
}

/** Structured service error: name plus optional offending pair index. */
export class ApiError extends Error {
  readonly name: string;
  readonly status: number;
  readonly pair?: number;
  readonly row?: number;

  constructor(status: number, body: { error?: string; message?: string; pair?: number; row?: number }) {
    super(body.message ?? `http ${status}`);
    this.name = body.error ?? "HttpError";
    this.status = status;
    this.pair = body.pair;
    this.row = body.row;
  }
}

async function reject(resp: Response): Promise<never> {
  let body: Record<string, unknown> = {};
  try {
    body = await resp.json();
  } catch {
    // non-JSON error body; keep the status
  }
  throw new ApiError(resp.status, body as ConstructorParameters<typeof ApiError>[1]);
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class StudioClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.url(path));
    if (!resp.ok) await reject(resp);
    return resp.json() as Promise<T>;
  }

  private async sendJson<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.url(path), {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) await reject(resp);
    return resp.json() as Promise<T>;
  }

  async health(): Promise<boolean> {
    try {
      const resp = await this.fetchImpl(this.url("/healthz"));
      return resp.ok;
    } catch {
      return false;
    }
  }

  async createSession(): Promise<string> {
    const reply = await this.sendJson<{ id: string }>("POST", "/sessions");
    return reply.id;
  }

  getSession(sid: string): Promise<SessionSummary> {
    return this.getJson(`/sessions/${sid}`);
  }

  async putImage(sid: string, role: Role, png: Uint8Array): Promise<UploadReply> {
    const resp = await this.fetchImpl(this.url(`/sessions/${sid}/images/${role}`), {
      method: "PUT",
      headers: { "Content-Type": "image/png" },
      body: png as unknown as BodyInit,
    });
    if (!resp.ok) await reject(resp);
    return resp.json();
  }

  proposeMask(sid: string, role: Role, prompts: PromptSet): Promise<RleMask> {
    return this.sendJson("POST", `/sessions/${sid}/masks/${role}`, promptsToJson(prompts));
  }

  commitPair(sid: string, content: RleMask, style: RleMask): Promise<{ index: number }> {
    return this.sendJson("POST", `/sessions/${sid}/pairs`, { content, style });
  }

  deletePair(sid: string, index: number): Promise<{ ok: boolean }> {
    return this.sendJson("DELETE", `/sessions/${sid}/pairs/${index}`);
  }

  stylize(sid: string): Promise<StylizeReply> {
    return this.sendJson("POST", `/sessions/${sid}/stylize`);
  }

  async fetchResult(sid: string): Promise<Uint8Array> {
    const resp = await this.fetchImpl(this.url(`/sessions/${sid}/result`));
    if (!resp.ok) await reject(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }
}
