import { describe, expect, it } from "vitest";

import {
  encodeFrame,
  FrameDecoder,
  rleDecode,
} from "../src/protocol.js";

describe("frame codec", () => {
  it("round-trips a message", () => {
    const frame = encodeFrame({ type: "hello", protocol_version: 1 });
    const view = new DataView(frame.buffer);
    expect(view.getUint32(0, false)).toBe(frame.length - 4);
    const decoded = new FrameDecoder().push(frame);
    expect(decoded).toEqual([{ type: "hello", protocol_version: 1 }]);
  });

  it("reassembles frames split across arbitrary chunks", () => {
    const a = encodeFrame({ type: "ping", n: 1 });
    const b = encodeFrame({ type: "ping", n: 2 });
    const joined = new Uint8Array(a.length + b.length);
    joined.set(a, 0);
    joined.set(b, a.length);

    const decoder = new FrameDecoder();
    const out: unknown[] = [];
    // drip-feed one byte at a time
    for (let i = 0; i < joined.length; i++) {
      out.push(...decoder.push(joined.slice(i, i + 1)));
    }
    expect(out).toEqual([
      { type: "ping", n: 1 },
      { type: "ping", n: 2 },
    ]);
  });

  it("decodes several frames from one chunk", () => {
    const frames = [1, 2, 3].map((n) => encodeFrame({ type: "ping", n }));
    const total = frames.reduce((sum, f) => sum + f.length, 0);
    const joined = new Uint8Array(total);
    let offset = 0;
    for (const frame of frames) {
      joined.set(frame, offset);
      offset += frame.length;
    }
    expect(new FrameDecoder().push(joined)).toHaveLength(3);
  });

  it("handles non-ascii payloads", () => {
    const message = { type: "command", text: "héllo wörld ✓" };
    expect(new FrameDecoder().push(encodeFrame(message))).toEqual([message]);
  });

  it("rejects oversized frames", () => {
    const decoder = new FrameDecoder();
    const header = new Uint8Array(4);
    new DataView(header.buffer).setUint32(0, 0xffffffff, false);
    expect(() => decoder.push(header)).toThrow(/too large/);
  });
});

describe("run-length decoding", () => {
  it("expands value/count pairs", () => {
    expect(rleDecode([[7, 3], [2, 1], [0, 2]])).toEqual([7, 7, 7, 2, 0, 0]);
    expect(rleDecode([])).toEqual([]);
  });
});
