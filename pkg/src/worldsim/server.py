"""Multi-client simulation server.

Length-delimited JSON over TCP: every frame is a 4-byte big-endian payload
length followed by a UTF-8 JSON object. One asyncio loop owns the world;
client sessions only enqueue commands (FIFO by arrival) and receive
snapshots, deltas and events, so a disconnecting client can never perturb
the simulation.
"""

from __future__ import annotations

import asyncio
import json
import struct
from dataclasses import dataclass, field
from typing import Optional

from . import wordofgod
from .save import rle_encode
from .world import World

PROTOCOL_VERSION = 1
MAX_FRAME = 16 * 1024 * 1024

CLIENT_TYPES = ("hello", "subscribe", "command", "interview_start",
                "interview_turn", "interview_end", "ping")


class ProtocolError(Exception):
    pass


async def read_frame(reader: asyncio.StreamReader) -> dict:
    header = await reader.readexactly(4)
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds limit")
    payload = await reader.readexactly(length)
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"bad frame: {exc}") from exc
    if not isinstance(message, dict):
        raise ProtocolError("frame must be a JSON object")
    return message


def encode_frame(message: dict) -> bytes:
    payload = json.dumps(message, sort_keys=True,
                         separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(payload)) + payload


@dataclass
class Session:
    session_id: int
    writer: asyncio.StreamWriter
    greeted: bool = False
    wants_events: bool = False
    npc_ids: set = field(default_factory=set)
    region: Optional[tuple[int, int, int, int]] = None

    def send(self, message: dict) -> None:
        if not self.writer.is_closing():
            self.writer.write(encode_frame(message))


class SimServer:
    def __init__(self, world: World, tick_rate: float = 10.0):
        self.world = world
        self.tick_rate = tick_rate
        self.sessions: dict[int, Session] = {}
        self._session_counter = 0
        self._server: Optional[asyncio.base_events.Server] = None
        self._tick_task: Optional[asyncio.Task] = None

    # -- lifecycle -------------------------------------------------------

    async def start(self, host: str, port: int) -> None:
        self._server = await asyncio.start_server(self._handle, host, port)
        if self.tick_rate > 0:
            self._tick_task = asyncio.ensure_future(self._tick_loop())

    async def stop(self) -> None:
        if self._tick_task:
            self._tick_task.cancel()
        if self._server:
            self._server.close()
            await self._server.wait_closed()

    @property
    def port(self) -> int:
        return self._server.sockets[0].getsockname()[1]

    async def _tick_loop(self) -> None:
        interval = 1.0 / self.tick_rate
        while True:
            await asyncio.sleep(interval)
            events = self.world.tick()
            self._broadcast(events)

    def step(self, ticks: int = 1) -> list[dict]:
        """Advance the simulation synchronously (used when tick_rate is 0)."""
        events = []
        for _ in range(ticks):
            events.extend(self.world.tick())
        self._broadcast(events)
        return events

    # -- broadcasting ------------------------------------------------------

    def _event_mentions(self, event: dict, npc_ids: set) -> bool:
        for key in ("npc", "proposer"):
            if event.get(key) in npc_ids:
                return True
        for key in ("participants", "targets"):
            if any(n in npc_ids for n in event.get(key, [])):
                return True
        return False

    def _broadcast(self, events: list[dict]) -> None:
        world = self.world
        for session in list(self.sessions.values()):
            for event in events:
                if session.wants_events or \
                        self._event_mentions(event, session.npc_ids):
                    session.send({"type": "event", "kind": event["kind"],
                                  "payload": event})
            if session.region is not None:
                session.send(self._delta(session.region))

    def _delta(self, region: tuple[int, int, int, int]) -> dict:
        x0, y0, x1, y1 = region
        entities = [
            {"npc_id": n, "name": p.name, "position": list(p.position),
             "state": self.world._npc_state(n)}
            for n, p in sorted(self.world.profiles.items())
            if x0 <= p.position[0] <= x1 and y0 <= p.position[1] <= y1]
        return {"type": "delta", "tick": self.world.clock,
                "entities": entities}

    # -- session handling --------------------------------------------------

    async def _handle(self, reader: asyncio.StreamReader,
                      writer: asyncio.StreamWriter) -> None:
        self._session_counter += 1
        session = Session(self._session_counter, writer)
        self.sessions[session.session_id] = session
        interviews: dict[str, wordofgod.InterviewSession] = {}
        try:
            while True:
                try:
                    message = await read_frame(reader)
                except (asyncio.IncompleteReadError, ConnectionError):
                    break
                except ProtocolError as exc:
                    session.send({"type": "error", "code": "protocol",
                                  "message": str(exc)})
                    await writer.drain()
                    break
                try:
                    self._dispatch(session, message, interviews)
                except ProtocolError as exc:
                    session.send({"type": "error", "code": "protocol",
                                  "message": str(exc)})
                    break
                except Exception as exc:  # application errors keep the session
                    session.send({"type": "error", "code": "request",
                                  "message": str(exc)})
                await writer.drain()
        finally:
            # abandoned interviews leave no trace
            for iv in interviews.values():
                if not iv.closed:
                    self.world.interviewer.end(iv, remember=False,
                                               now=self.world.clock)
            del self.sessions[session.session_id]
            writer.close()

    def _dispatch(self, session: Session, message: dict,
                  interviews: dict) -> None:
        kind = message.get("type")
        if kind not in CLIENT_TYPES:
            raise ProtocolError(f"unknown message type {kind!r}")
        if not session.greeted and kind != "hello":
            raise ProtocolError("first message must be hello")
        handler = getattr(self, f"_on_{kind}")
        handler(session, message, interviews)

    def _on_hello(self, session: Session, message: dict, interviews) -> None:
        version = message.get("protocol_version", PROTOCOL_VERSION)
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {version}")
        session.greeted = True
        world = self.world
        session.send({"type": "welcome",
                      "protocol_version": PROTOCOL_VERSION,
                      "world": {
                          "seed": world.spec.seed,
                          "description": world.spec.description,
                          "width": world.spec.width,
                          "height": world.spec.height,
                          "clock": world.clock,
                          "day_length": world.spec.day_length,
                          "population": len(world.profiles)}})

    def _on_subscribe(self, session: Session, message: dict, interviews) -> None:
        world = self.world
        if "region" in message:
            x0, y0, x1, y1 = message["region"]
            x1 = min(x1, world.spec.width - 1)
            y1 = min(y1, world.spec.height - 1)
            session.region = (x0, y0, x1, y1)
            session.send(self._snapshot(session.region))
        if "npc" in message:
            npc_id = message["npc"]
            if npc_id not in world.profiles:
                raise ValueError(f"unknown npc {npc_id!r}")
            session.npc_ids.add(npc_id)
            session.send({"type": "snapshot",
                          "npc": self.npc_summary(npc_id)})
        if "events" in message:
            session.wants_events = bool(message["events"])
            session.send({"type": "snapshot",
                          "events": world.events[-50:]})

    def _snapshot(self, region: tuple[int, int, int, int]) -> dict:
        x0, y0, x1, y1 = region
        world = self.world
        terrain = world.terrain
        sub = terrain.biome_ids[y0:y1 + 1, x0:x1 + 1]
        road_tiles = sorted(t for t in world.roads.road_tiles
                            if x0 <= t[0] <= x1 and y0 <= t[1] <= y1)
        buildings = [{
            "building_id": b.building_id, "origin": list(b.origin),
            "width": b.spec.width, "height": b.spec.height,
            "function": b.spec.function_tag,
            "description": b.spec.description,
            "entrance": list(b.entrance), "asset_ref": b.asset_ref,
        } for b in world.settlement.buildings
            if x0 <= b.origin[0] <= x1 and y0 <= b.origin[1] <= y1]
        objects = [{
            "object_id": o.object_id, "kind": o.kind,
            "descriptor": o.descriptor, "position": list(o.position),
            "state": o.state, "asset_ref": o.asset_ref,
        } for _, o in sorted(world.objects.items())
            if x0 <= o.position[0] <= x1 and y0 <= o.position[1] <= y1]
        delta = self._delta(region)
        return {"type": "snapshot", "region": list(region),
                "biome_names": [b.display_name()
                                for b in world.biome_table.biomes],
                "tiles": rle_encode([int(v) for v in sub.ravel()]),
                "roads": [list(t) for t in road_tiles],
                "buildings": buildings, "objects": objects,
                "entities": delta["entities"], "tick": world.clock}

    def npc_summary(self, npc_id: str) -> dict:
        world = self.world
        p = world.profiles[npc_id]
        memories = world.store.stream(npc_id)
        return {
            "npc_id": npc_id, "name": p.name, "family_id": p.family_id,
            "family_role": p.family_role, "lore": p.individual_lore,
            "traits": list(p.traits), "home": p.home,
            "workplace": p.workplace, "workplace_role": p.workplace_role,
            "position": list(p.position),
            "state": world._npc_state(npc_id),
            "memory_count": len(memories),
            "recent_memories": [
                {"kind": e.kind, "text": e.text, "created_at": e.created_at}
                for e in memories[-10:]],
        }

    def _on_command(self, session: Session, message: dict, interviews) -> None:
        world = self.world
        text = message.get("text", "")
        npc_names = {p.name: n for n, p in world.profiles.items()}
        steps = wordofgod.parse_command(
            text, npc_names, world.location_names(), world.oracle,
            world.config, default_npc=message.get("target_npc"))
        world.command_queue.extend(steps)
        session.send({"type": "event", "kind": "command_accepted",
                      "payload": {"text": text, "steps": len(steps)}})

    def _on_interview_start(self, session: Session, message: dict,
                            interviews) -> None:
        npc_id = message.get("npc")
        if npc_id not in self.world.profiles:
            raise ValueError(f"unknown npc {npc_id!r}")
        iv = self.world.interviewer.start(npc_id)
        interviews[iv.session_id] = iv
        session.send({"type": "interview_reply", "session": iv.session_id,
                      "text": ""})

    def _interview(self, interviews: dict, message: dict
                   ) -> wordofgod.InterviewSession:
        iv = interviews.get(message.get("session"))
        if iv is None:
            raise ValueError("unknown interview session")
        return iv

    def _on_interview_turn(self, session: Session, message: dict,
                           interviews) -> None:
        iv = self._interview(interviews, message)
        answer = self.world.interviewer.ask(
            iv, message.get("text", ""), self.world.profiles[iv.npc_id],
            self.world.clock)
        session.send({"type": "interview_reply", "session": iv.session_id,
                      "text": answer})

    def _on_interview_end(self, session: Session, message: dict,
                          interviews) -> None:
        iv = self._interview(interviews, message)
        memory_id = self.world.interviewer.end(
            iv, bool(message.get("remember")), self.world.clock)
        del interviews[iv.session_id]
        session.send({"type": "interview_reply", "session": iv.session_id,
                      "text": "", "closed": True, "memory_id": memory_id})

    def _on_ping(self, session: Session, message: dict, interviews) -> None:
        session.send({"type": "pong", "tick": self.world.clock})


async def serve(world: World, host: str, port: int,
                tick_rate: float = 10.0) -> SimServer:
    server = SimServer(world, tick_rate)
    await server.start(host, port)
    return server
