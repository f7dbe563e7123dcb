/**
 * Wire protocol: 4-byte big-endian length prefix + UTF-8 JSON payload.
 * Message shapes mirror the simserver; protocol_version 1.
 */

export const PROTOCOL_VERSION = 1;
export const MAX_FRAME = 16 * 1024 * 1024;

// -- messages from the server ------------------------------------------------

export interface Welcome {
  type: "welcome";
  protocol_version: number;
  world: {
    seed: number;
    description: string;
    width: number;
    height: number;
    clock: number;
    day_length: number;
    population: number;
  };
}

export interface Building {
  building_id: string;
  origin: [number, number];
  width: number;
  height: number;
  function: string;
  description: string;
  entrance: [number, number];
  asset_ref: string | null;
}

export interface WorldObject {
  object_id: string;
  kind: string;
  descriptor: string;
  position: [number, number];
  state: string;
  asset_ref: string | null;
}

export interface Entity {
  npc_id: string;
  name: string;
  position: [number, number];
  state: string;
}

export interface RegionSnapshot {
  type: "snapshot";
  region: [number, number, number, number];
  biome_names: string[];
  tiles: [number, number][]; // run-length encoded [value, count] pairs
  roads: [number, number][];
  buildings: Building[];
  objects: WorldObject[];
  entities: Entity[];
  tick: number;
}

export interface NpcSummary {
  npc_id: string;
  name: string;
  family_id: string;
  family_role: string;
  lore: string;
  traits: string[];
  home: string | null;
  workplace: string | null;
  workplace_role: string | null;
  position: [number, number];
  state: string;
  memory_count: number;
  recent_memories: { kind: string; text: string; created_at: number }[];
}

export interface NpcSnapshot {
  type: "snapshot";
  npc: NpcSummary;
}

export interface EventsSnapshot {
  type: "snapshot";
  events: SimEvent[];
}

export interface Delta {
  type: "delta";
  tick: number;
  entities: Entity[];
}

export interface SimEvent {
  kind: string;
  [key: string]: unknown;
}

export interface EventMessage {
  type: "event";
  kind: string;
  payload: SimEvent;
}

export interface InterviewReply {
  type: "interview_reply";
  session: string;
  text: string;
  closed?: boolean;
  memory_id?: string | null;
}

export interface ErrorMessage {
  type: "error";
  code: "protocol" | "request";
  message: string;
}

export interface Pong {
  type: "pong";
  tick: number;
}

export type ServerMessage =
  | Welcome
  | RegionSnapshot
  | NpcSnapshot
  | EventsSnapshot
  | Delta
  | EventMessage
  | InterviewReply
  | ErrorMessage
  | Pong;

export type ClientMessage = { type: string; [key: string]: unknown };

// -- framing -------------------------------------------------------------------

const encoder = new TextEncoder();
const decoder = new TextDecoder();

/** Encode one message as a length-prefixed frame. */
export function encodeFrame(message: ClientMessage): Uint8Array {
  const body = encoder.encode(JSON.stringify(message));
  if (body.length > MAX_FRAME) {
    throw new Error(`frame too large: ${body.length}`);
  }
  const frame = new Uint8Array(4 + body.length);
  new DataView(frame.buffer).setUint32(0, body.length, false);
  frame.set(body, 4);
  return frame;
}

/**
 * Incremental frame reassembler: feed arbitrary byte chunks, get complete
 * decoded messages out in order.
 */
export class FrameDecoder {
  private buffer = new Uint8Array(0);

  push(chunk: Uint8Array): ServerMessage[] {
    const joined = new Uint8Array(this.buffer.length + chunk.length);
    joined.set(this.buffer, 0);
    joined.set(chunk, this.buffer.length);
    this.buffer = joined;

    const messages: ServerMessage[] = [];
    for (;;) {
      if (this.buffer.length < 4) break;
      const view = new DataView(
        this.buffer.buffer,
        this.buffer.byteOffset,
        this.buffer.byteLength,
      );
      const length = view.getUint32(0, false);
      if (length > MAX_FRAME) {
        throw new Error(`frame too large: ${length}`);
      }
      if (this.buffer.length < 4 + length) break;
      const body = this.buffer.slice(4, 4 + length);
      this.buffer = this.buffer.slice(4 + length);
      messages.push(JSON.parse(decoder.decode(body)) as ServerMessage);
    }
    return messages;
  }
}

/** Expand [value, count] run-length pairs back into a flat array. */
export function rleDecode(pairs: [number, number][]): number[] {
  const out: number[] = [];
  for (const [value, count] of pairs) {
    for (let i = 0; i < count; i++) out.push(value);
  }
  return out;
}
