/**
 * Protocol client: handshake, subscriptions, command console semantics
 * (local pending queue across reconnects), interview sessions (at most one
 * open), and an append-only event feed with kind filters.
 */

import {
  ClientMessage,
  Delta,
  Entity,
  EventsSnapshot,
  InterviewReply,
  NpcSnapshot,
  NpcSummary,
  PROTOCOL_VERSION,
  RegionSnapshot,
  ServerMessage,
  SimEvent,
  Welcome,
  encodeFrame,
  FrameDecoder,
} from "./protocol.js";
import { Transport, TransportFactory } from "./transport.js";

export interface FeedEntry {
  kind: string;
  tick: number;
  payload: SimEvent;
}

export interface PendingCommand {
  text: string;
  targetNpc?: string;
  state: "pending" | "sent";
}

interface Waiter {
  predicate: (message: ServerMessage) => boolean;
  resolve: (message: ServerMessage) => void;
  reject: (err: Error) => void;
  timer: ReturnType<typeof setTimeout>;
}

export class SimClient {
  welcome: Welcome | null = null;
  snapshot: RegionSnapshot | null = null;
  entities: Entity[] = [];
  tick = 0;
  feed: FeedEntry[] = [];
  feedFilter: Set<string> | null = null; // null = show everything
  npcSummaries = new Map<string, NpcSummary>();
  commandQueue: PendingCommand[] = [];
  activeInterview: string | null = null;
  lastError: { code: string; message: string } | null = null;
  connected = false;

  private transport: Transport | null = null;
  private decoder = new FrameDecoder();
  private waiters: Waiter[] = [];
  private subscribedRegion: string | null = null;
  private listeners: ((message: ServerMessage) => void)[] = [];

  constructor(private makeTransport: TransportFactory) {}

  async connect(): Promise<Welcome> {
    this.transport = await this.makeTransport();
    this.decoder = new FrameDecoder();
    this.transport.onData((chunk) => {
      for (const message of this.decoder.push(chunk)) {
        this.handle(message);
      }
    });
    this.transport.onClose(() => {
      this.connected = false;
      this.activeInterview = null;
      // anything not acknowledged goes back to pending for the next flush
      for (const cmd of this.commandQueue) cmd.state = "pending";
    });
    this.connected = true;
    this.send({ type: "hello", protocol_version: PROTOCOL_VERSION });
    const welcome = (await this.waitFor(
      (m) => m.type === "welcome",
    )) as Welcome;
    this.welcome = welcome;
    this.flushCommands();
    return welcome;
  }

  close(): void {
    this.transport?.close();
    this.connected = false;
  }

  onMessage(listener: (message: ServerMessage) => void): void {
    this.listeners.push(listener);
  }

  /** Resolve when a message matching `predicate` arrives (default 2 s). */
  waitFor(
    predicate: (message: ServerMessage) => boolean,
    timeoutMs = 2000,
  ): Promise<ServerMessage> {
    return new Promise((resolve, reject) => {
      const waiter: Waiter = {
        predicate,
        resolve,
        reject,
        timer: setTimeout(() => {
          this.waiters = this.waiters.filter((w) => w !== waiter);
          reject(new Error(`timed out after ${timeoutMs}ms`));
        }, timeoutMs),
      };
      this.waiters.push(waiter);
    });
  }

  // -- subscriptions ---------------------------------------------------------

  /** Subscribe to a camera region; deduplicates repeat requests. */
  async subscribeRegion(
    x0: number,
    y0: number,
    x1: number,
    y1: number,
  ): Promise<RegionSnapshot> {
    const key = `${x0},${y0},${x1},${y1}`;
    if (key === this.subscribedRegion && this.snapshot) {
      return this.snapshot;
    }
    this.subscribedRegion = key;
    this.send({ type: "subscribe", region: [x0, y0, x1, y1] });
    const snapshot = (await this.waitFor(
      (m) => m.type === "snapshot" && "region" in m,
    )) as RegionSnapshot;
    return snapshot;
  }

  async subscribeNpc(npcId: string): Promise<NpcSummary> {
    this.send({ type: "subscribe", npc: npcId });
    const message = (await this.waitFor(
      (m) => m.type === "snapshot" && "npc" in m,
    )) as NpcSnapshot;
    return message.npc;
  }

  async subscribeEvents(): Promise<void> {
    this.send({ type: "subscribe", events: true });
    await this.waitFor((m) => m.type === "snapshot" && "events" in m);
  }

  // -- command console --------------------------------------------------------

  /**
   * Queue a natural-language command. Sent immediately when connected;
   * otherwise kept pending and flushed after reconnect.
   */
  sendCommand(text: string, targetNpc?: string): PendingCommand {
    const pending: PendingCommand = { text, targetNpc, state: "pending" };
    this.commandQueue.push(pending);
    this.flushCommands();
    return pending;
  }

  private flushCommands(): void {
    if (!this.connected || !this.welcome) return;
    for (const cmd of this.commandQueue) {
      if (cmd.state === "pending") {
        const message: ClientMessage = { type: "command", text: cmd.text };
        if (cmd.targetNpc) message.target_npc = cmd.targetNpc;
        this.send(message);
        cmd.state = "sent";
      }
    }
  }

  // -- interviews ---------------------------------------------------------------

  async startInterview(npcId: string): Promise<string> {
    if (this.activeInterview !== null) {
      throw new Error("an interview is already open; close it first");
    }
    this.send({ type: "interview_start", npc: npcId });
    const reply = (await this.waitFor(
      (m) => m.type === "interview_reply",
    )) as InterviewReply;
    this.activeInterview = reply.session;
    return reply.session;
  }

  async askInterview(question: string): Promise<string> {
    const session = this.requireInterview();
    this.send({ type: "interview_turn", session, text: question });
    const reply = (await this.waitFor(
      (m) => m.type === "interview_reply" && m.session === session,
    )) as InterviewReply;
    return reply.text;
  }

  async endInterview(remember: boolean): Promise<string | null> {
    const session = this.requireInterview();
    this.send({ type: "interview_end", session, remember });
    const reply = (await this.waitFor(
      (m) =>
        m.type === "interview_reply" && m.session === session && !!m.closed,
    )) as InterviewReply;
    this.activeInterview = null;
    return reply.memory_id ?? null;
  }

  private requireInterview(): string {
    if (this.activeInterview === null) {
      throw new Error("no interview open");
    }
    return this.activeInterview;
  }

  // -- feed -------------------------------------------------------------------------

  visibleFeed(): FeedEntry[] {
    if (this.feedFilter === null) return this.feed;
    return this.feed.filter((e) => this.feedFilter!.has(e.kind));
  }

  // -- internals ---------------------------------------------------------------------

  private send(message: ClientMessage): void {
    if (!this.transport) throw new Error("not connected");
    this.transport.send(encodeFrame(message));
  }

  private handle(message: ServerMessage): void {
    switch (message.type) {
      case "snapshot":
        if ("region" in message) {
          this.snapshot = message as RegionSnapshot;
          this.entities = this.snapshot.entities;
          this.tick = this.snapshot.tick;
        } else if ("npc" in message) {
          const npc = (message as NpcSnapshot).npc;
          this.npcSummaries.set(npc.npc_id, npc);
        } else if ("events" in message) {
          for (const event of (message as EventsSnapshot).events) {
            this.feed.push({ kind: event.kind, tick: this.tick, payload: event });
          }
        }
        break;
      case "delta":
        this.tick = (message as Delta).tick;
        this.entities = (message as Delta).entities;
        break;
      case "event":
        this.feed.push({
          kind: message.kind,
          tick: this.tick,
          payload: message.payload,
        });
        break;
      case "error":
        this.lastError = { code: message.code, message: message.message };
        break;
      default:
        break;
    }
    for (const listener of this.listeners) listener(message);
    const ready = this.waiters.filter((w) => w.predicate(message));
    this.waiters = this.waiters.filter((w) => !ready.includes(w));
    for (const waiter of ready) {
      clearTimeout(waiter.timer);
      waiter.resolve(message);
    }
  }
}
