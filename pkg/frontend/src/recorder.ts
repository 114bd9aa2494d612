/**
 * API call log: every request the studio issues is appended verbatim, so a
 * session can be replayed headlessly against a fresh session id and must
 * land on the identical result bytes.
 */

import type { Role, StudioClient, StylizeReply, UploadReply } from "./api.js";
import type { PromptSet } from "./prompts.js";
import type { RleMask } from "./rle.js";

export type LogEntry =
  | { op: "putImage"; role: Role; png: Uint8Array }
  | { op: "proposeMask"; role: Role; prompts: PromptSet }
  | { op: "commitPair"; content: RleMask; style: RleMask }
  | { op: "deletePair"; index: number }
  | { op: "stylize" }
  | { op: "fetchResult" };

/** Client wrapper that appends one entry per call. Session creation is not
 * logged; replay mints its own session. */
export class RecordingClient {
  readonly log: LogEntry[] = [];

  constructor(private readonly inner: StudioClient) {}

  createSession(): Promise<string> {
    return this.inner.createSession();
  }

  async putImage(sid: string, role: Role, png: Uint8Array): Promise<UploadReply> {
    const reply = await this.inner.putImage(sid, role, png);
    this.log.push({ op: "putImage", role, png });
    return reply;
  }

  async proposeMask(sid: string, role: Role, prompts: PromptSet): Promise<RleMask> {
    const mask = await this.inner.proposeMask(sid, role, prompts);
    this.log.push({ op: "proposeMask", role, prompts });
    return mask;
  }

  async commitPair(sid: string, content: RleMask, style: RleMask): Promise<{ index: number }> {
    const reply = await this.inner.commitPair(sid, content, style);
    this.log.push({ op: "commitPair", content, style });
    return reply;
  }

  async deletePair(sid: string, index: number): Promise<{ ok: boolean }> {
    const reply = await this.inner.deletePair(sid, index);
    this.log.push({ op: "deletePair", index });
    return reply;
  }

  async stylize(sid: string): Promise<StylizeReply> {
    const reply = await this.inner.stylize(sid);
    this.log.push({ op: "stylize" });
    return reply;
  }

  async fetchResult(sid: string): Promise<Uint8Array> {
    const bytes = await this.inner.fetchResult(sid);
    this.log.push({ op: "fetchResult" });
    return bytes;
  }
}

/**
 * Run a recorded log against a fresh session. Returns the bytes of the last
 * fetchResult in the log (null when the log never fetched one).
 */
export async function replayLog(
  client: StudioClient,
  log: readonly LogEntry[],
): Promise<Uint8Array | null> {
  const sid = await client.createSession();
  let result: Uint8Array | null = null;
  for (const entry of log) {
    switch (entry.op) {
      case "putImage":
        await client.putImage(sid, entry.role, entry.png);
        break;
      case "proposeMask":
        await client.proposeMask(sid, entry.role, entry.prompts);
        break;
      case "commitPair":
        await client.commitPair(sid, entry.content, entry.style);
        break;
      case "deletePair":
        await client.deletePair(sid, entry.index);
        break;
      case "stylize":
        await client.stylize(sid);
        break;
      case "fetchResult":
        result = await client.fetchResult(sid);
        break;
    }
  }
  return result;
}

/** JSON form for saving a log to disk (PNG bytes as base64). */
export function logToJson(log: readonly LogEntry[]): string {
  return JSON.stringify(log, (_key, value) => {
    if (value instanceof Uint8Array) {
      let ascii = "";
      for (const byte of value) ascii += String.fromCharCode(byte);
      return { $bytes: btoa(ascii) };
    }
    return value;
  });
}

export function logFromJson(text: string): LogEntry[] {
  return JSON.parse(text, (_key, value) => {
    if (value && typeof value === "object" && typeof value.$bytes === "string") {
      const ascii = atob(value.$bytes);
      const bytes = new Uint8Array(ascii.length);
      for (let i = 0; i < ascii.length; i++) bytes[i] = ascii.charCodeAt(i);
      return bytes;
    }
    return value;
  });
}
