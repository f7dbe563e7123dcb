/**
 * Scripted stand-in for the simulation server, used by the client tests.
 * Speaks the same length-prefixed JSON protocol and replays canned
 * responses: a 16x16 two-biome world with one building, one object, and
 * two NPCs. Commands are acknowledged and then produce a follow-up event;
 * interviews echo scripted answers and record the InterviewEnd remember
 * flag for assertions.
 */

import * as net from "node:net";
import { ClientMessage, encodeFrame, FrameDecoder } from "../src/protocol.js";

export interface FixtureLog {
  received: ClientMessage[];
  rememberFlags: boolean[];
}

const WORLD = {
  seed: 7,
  description: "a coastal hamlet",
  width: 16,
  height: 16,
  clock: 480,
  day_length: 1440,
  population: 2,
};

export const NPC_POS: Record<string, [number, number]> = {
  npc0: [3, 4],
  npc1: [10, 11],
};

function entities() {
  return Object.entries(NPC_POS).map(([npc_id, position]) => ({
    npc_id,
    name: npc_id === "npc0" ? "Ada" : "Bo",
    position,
    state: "working",
  }));
}

function snapshot(region: number[]) {
  const [x0, y0, x1, y1] = region;
  const count = (x1 - x0 + 1) * (y1 - y0 + 1);
  return {
    type: "snapshot",
    region,
    biome_names: ["meadow", "shore"],
    tiles: [
      [0, Math.floor(count / 2)],
      [1, count - Math.floor(count / 2)],
    ],
    roads: [
      [5, 8],
      [6, 8],
    ],
    buildings: [
      {
        building_id: "b-hall",
        origin: [5, 5],
        width: 3,
        height: 3,
        function: "hall",
        description: "the hall",
        entrance: [6, 7],
        asset_ref: null,
      },
    ],
    objects: [
      {
        object_id: "obj-1",
        kind: "well",
        descriptor: "a stone well",
        position: [12, 3],
        state: "idle",
        asset_ref: "well.png",
      },
    ],
    entities: entities(),
    tick: WORLD.clock,
  };
}

export function startFixtureServer(): Promise<{
  port: number;
  log: FixtureLog;
  close: () => Promise<void>;
}> {
  const log: FixtureLog = { received: [], rememberFlags: [] };
  let sessionCounter = 0;

  const server = net.createServer((socket) => {
    const decoder = new FrameDecoder();
    let greeted = false;
    const send = (message: object) =>
      socket.write(encodeFrame(message as ClientMessage));

    socket.on("data", (chunk) => {
      for (const raw of decoder.push(new Uint8Array(chunk))) {
        const message = raw as unknown as ClientMessage;
        log.received.push(message);
        if (!greeted && message.type !== "hello") {
          send({ type: "error", code: "protocol",
                 message: "first message must be hello" });
          socket.end();
          return;
        }
        switch (message.type) {
          case "hello":
            greeted = true;
            send({ type: "welcome", protocol_version: 1, world: WORLD });
            break;
          case "subscribe":
            if ("region" in message) {
              send(snapshot(message.region as number[]));
            }
            if ("npc" in message) {
              const npcId = message.npc as string;
              if (!(npcId in NPC_POS)) {
                send({ type: "error", code: "request",
                       message: `unknown npc '${npcId}'` });
                break;
              }
              send({
                type: "snapshot",
                npc: {
                  npc_id: npcId,
                  name: npcId === "npc0" ? "Ada" : "Bo",
                  family_id: "f0",
                  family_role: "adult",
                  lore: "grew up by the shore",
                  traits: ["patient"],
                  home: "b-hall",
                  workplace: null,
                  workplace_role: null,
                  position: NPC_POS[npcId],
                  state: "working",
                  memory_count: 3,
                  recent_memories: [],
                },
              });
            }
            if ("events" in message) {
              send({ type: "snapshot", events: [] });
            }
            break;
          case "command": {
            const text = String(message.text ?? "");
            if (text.includes("nowhere")) {
              send({ type: "error", code: "request",
                     message: "unknown location 'nowhere'" });
              break;
            }
            send({ type: "event", kind: "command_accepted",
                   payload: { kind: "command_accepted", text, steps: 1 } });
            // the resulting simulation event lands shortly afterwards,
            // like a tick completing on the real server
            setTimeout(() => {
              send({ type: "event", kind: "command_action",
                     payload: { kind: "command_action", npc: "npc0",
                                activity: text } });
              send({ type: "delta", tick: WORLD.clock + 1,
                     entities: entities() });
            }, 20);
            break;
          }
          case "interview_start": {
            sessionCounter += 1;
            send({ type: "interview_reply",
                   session: `iv${sessionCounter}`, text: "" });
            break;
          }
          case "interview_turn":
            send({ type: "interview_reply",
                   session: message.session,
                   text: `About "${message.text}": it was a quiet morning.` });
            break;
          case "interview_end":
            log.rememberFlags.push(Boolean(message.remember));
            send({ type: "interview_reply", session: message.session,
                   text: "", closed: true,
                   memory_id: message.remember ? "m-interview" : null });
            break;
          case "ping":
            send({ type: "pong", tick: WORLD.clock });
            break;
          default:
            send({ type: "error", code: "protocol",
                   message: `unknown message type '${message.type}'` });
            socket.end();
        }
      }
    });
  });

  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const port = (server.address() as net.AddressInfo).port;
      resolve({
        port,
        log,
        close: () =>
          new Promise<void>((done) => server.close(() => done())),
      });
    });
  });
}

/** Raw TCP transport for tests (the browser build uses WebSocket). */
export function tcpTransport(port: number) {
  return () =>
    new Promise<{
      send(bytes: Uint8Array): void;
      close(): void;
      onData(handler: (chunk: Uint8Array) => void): void;
      onClose(handler: () => void): void;
    }>((resolve, reject) => {
      const socket = net.connect(port, "127.0.0.1");
      let dataHandler: (chunk: Uint8Array) => void = () => {};
      let closeHandler: () => void = () => {};
      socket.on("connect", () =>
        resolve({
          send: (bytes) => socket.write(bytes),
          close: () => socket.destroy(),
          onData: (handler) => {
            dataHandler = handler;
          },
          onClose: (handler) => {
            closeHandler = handler;
          },
        }),
      );
      socket.on("data", (chunk) => dataHandler(new Uint8Array(chunk)));
      socket.on("close", () => closeHandler());
      socket.on("error", (err) => reject(err));
    });
}
