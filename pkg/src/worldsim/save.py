"""Versioned, canonical world saves.

The format stores everything needed to resume a run exactly: RNG stream
counters, the clock, memories (embeddings are recomputed on load), routines,
plans, live conversations, and queued commands. Arrays are run-length encoded
and continuous fields use 16-bit fixed point, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from typing import Optional

import numpy as np

from . import gaia, hephaestus, moira, pygmalion, wordofgod
from .config import SimConfig
from .memory import MemoryEntry
from .oracle import Oracle
from .rng import Stream
from .world import PendingEngagement, World, WorldObject

FORMAT_VERSION = 1
FIXED_SCALE = 65535


class SaveError(Exception):
    pass


class VersionMismatch(SaveError):
    pass


class CorruptSave(SaveError):
    pass


class InvariantViolation(SaveError):
    def __init__(self, module: str, message: str):
        super().__init__(f"[{module}] {message}")
        self.module = module


# ---------------------------------------------------------------------------
# encoding helpers

def rle_encode(values: list) -> list:
    """[[value, count], ...] over a flat list."""
    out = []
    for v in values:
        if out and out[-1][0] == v:
            out[-1][1] += 1
        else:
            out.append([v, 1])
    return out


def rle_decode(pairs: list) -> list:
    out = []
    for v, n in pairs:
        out.extend([v] * n)
    return out


def encode_fixed(arr: np.ndarray) -> list:
    return [int(v) for v in np.round(arr.ravel() * FIXED_SCALE).astype(np.int64)]


def decode_fixed(values: list, shape) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) / FIXED_SCALE).reshape(shape)


def canonical_dumps(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)


# ---------------------------------------------------------------------------
# per-piece serializers

def _terrain_to_json(t: gaia.TerrainGrid) -> dict:
    move_cost = [None if not np.isfinite(v) else float(v)
                 for v in t.move_cost.ravel()]
    return {
        "width": t.width, "height": t.height,
        "elevation": rle_encode(encode_fixed(t.elevation)),
        "precipitation": rle_encode(encode_fixed(t.precipitation)),
        "temperature": rle_encode(encode_fixed(t.temperature)),
        "biome_ids": rle_encode([int(v) for v in t.biome_ids.ravel()]),
        "passable": rle_encode([bool(v) for v in t.passable.ravel()]),
        "move_cost": rle_encode(move_cost),
    }


def _terrain_from_json(data: dict) -> gaia.TerrainGrid:
    w, h = data["width"], data["height"]
    shape = (h, w)
    move_cost = np.asarray(
        [np.inf if v is None else float(v)
         for v in rle_decode(data["move_cost"])]).reshape(shape)
    return gaia.TerrainGrid(
        width=w, height=h,
        elevation=decode_fixed(rle_decode(data["elevation"]), shape),
        precipitation=decode_fixed(rle_decode(data["precipitation"]), shape),
        temperature=decode_fixed(rle_decode(data["temperature"]), shape),
        biome_ids=np.asarray(rle_decode(data["biome_ids"]),
                             dtype=np.int32).reshape(shape),
        passable=np.asarray(rle_decode(data["passable"]),
                            dtype=bool).reshape(shape),
        move_cost=move_cost)


def _building_to_json(b: hephaestus.Building) -> dict:
    return {"building_id": b.building_id, "origin": list(b.origin),
            "name": b.name, "asset_ref": b.asset_ref,
            "spec": {"function_tag": b.spec.function_tag,
                     "width": b.spec.width, "height": b.spec.height,
                     "capacity": b.spec.capacity,
                     "description": b.spec.description,
                     "roles": list(b.spec.roles)}}


def _building_from_json(data: dict) -> hephaestus.Building:
    s = data["spec"]
    spec = hephaestus.BuildingSpec(
        function_tag=s["function_tag"], width=s["width"], height=s["height"],
        capacity=s["capacity"], description=s["description"],
        roles=tuple(s["roles"]))
    return hephaestus.Building(
        building_id=data["building_id"], spec=spec,
        origin=tuple(data["origin"]), name=data["name"],
        asset_ref=data["asset_ref"])


def _interior_to_json(i: hephaestus.Interior) -> dict:
    h, w = i.room_grid.shape
    return {"building_id": i.building_id, "width": w, "height": h,
            "room_grid": rle_encode([int(v) for v in i.room_grid.ravel()]),
            "door": list(i.door),
            "furniture": [{"furniture_tag": f.furniture_tag,
                           "description": f.description,
                           "tile": list(f.tile),
                           "footprint": list(f.footprint),
                           "asset_ref": f.asset_ref} for f in i.furniture]}


def _interior_from_json(data: dict) -> hephaestus.Interior:
    grid = np.asarray(rle_decode(data["room_grid"]), dtype=np.int32).reshape(
        (data["height"], data["width"]))
    furniture = [hephaestus.PlacedFurniture(
        furniture_tag=f["furniture_tag"], description=f["description"],
        tile=tuple(f["tile"]), footprint=tuple(f["footprint"]),
        asset_ref=f["asset_ref"]) for f in data["furniture"]]
    return hephaestus.Interior(building_id=data["building_id"],
                               room_grid=grid, furniture=furniture,
                               door=tuple(data["door"]))


def _routine_to_json(r: pygmalion.Routine) -> dict:
    return {"npc_id": r.npc_id, "day": r.day,
            "entries": [asdict(e) for e in r.entries]}


def _routine_from_json(data: dict) -> pygmalion.Routine:
    return pygmalion.Routine(
        npc_id=data["npc_id"], day=data["day"],
        entries=[pygmalion.RoutineEntry(**e) for e in data["entries"]])


def _conversation_to_json(c: pygmalion.ConversationState) -> dict:
    return {"conversation_id": c.conversation_id,
            "participants": list(c.participants), "phase": c.phase,
            "context": c.context, "outline": c.outline,
            "transcript": [list(t) for t in c.transcript],
            "pending_speaker": c.pending_speaker,
            "pending_utterance": c.pending_utterance,
            "pending_plan": c.pending_plan, "turn_count": c.turn_count,
            "max_turns": c.max_turns, "phase_history": list(c.phase_history)}


def _conversation_from_json(data: dict) -> pygmalion.ConversationState:
    state = pygmalion.ConversationState(
        conversation_id=data["conversation_id"],
        participants=list(data["participants"]))
    state.phase = data["phase"]
    state.context = data["context"]
    state.outline = data["outline"]
    state.transcript = [tuple(t) for t in data["transcript"]]
    state.pending_speaker = data["pending_speaker"]
    state.pending_utterance = data["pending_utterance"]
    state.pending_plan = data["pending_plan"]
    state.turn_count = data["turn_count"]
    state.max_turns = data["max_turns"]
    state.phase_history = list(data["phase_history"])
    return state


_STEP_TYPES = {
    "engage_conversation": wordofgod.EngageConversation,
    "schedule_action": wordofgod.ScheduleAction,
    "propose_plan": wordofgod.ProposePlan,
    "custom_action": wordofgod.CustomAction,
}
_STEP_NAMES = {v: k for k, v in _STEP_TYPES.items()}


def _step_to_json(step) -> dict:
    return {"step_kind": _STEP_NAMES[type(step)], **asdict(step)}


def _step_from_json(data: dict):
    data = dict(data)
    cls = _STEP_TYPES[data.pop("step_kind")]
    return cls(**data)


# ---------------------------------------------------------------------------
# world <-> json

def world_to_json(world: World, include_events: bool = True) -> dict:
    data = {
        "format_version": FORMAT_VERSION,
        "spec": world.spec.to_json(),
        "config": world.config.to_json(),
        "clock": world.clock,
        "counters": {"conversation": world._conversation_counter,
                     "plan": world._plan_counter,
                     "memory_next_id": world.store.next_id},
        "streams": {name: s.counter for name, s in sorted(world.streams.items())},
        "biome_table": world.biome_table.to_json(),
        "terrain": _terrain_to_json(world.terrain),
        "settlement": {
            "street_rows": list(world.settlement.street_rows),
            "bounds": list(world.settlement.bounds),
            "buildings": [_building_to_json(b)
                          for b in world.settlement.buildings]},
        "interiors": {bid: _interior_to_json(i)
                      for bid, i in sorted(world.interiors.items())},
        "roads": {"tour": list(world.roads.tour),
                  "segments": [[list(p) for p in seg]
                               for seg in world.roads.segments],
                  "road_tiles": sorted([list(t)
                                        for t in world.roads.road_tiles])},
        "objects": [asdict(o) for _, o in sorted(world.objects.items())],
        "families": [{"family_id": f.family_id, "surname": f.surname,
                      "background": f.background, "residence": f.residence,
                      "member_ids": list(f.member_ids)}
                     for f in world.families],
        "profiles": {n: {**asdict(p),
                         "position": list(p.position),
                         "evolution_log": [list(e) for e in p.evolution_log]}
                     for n, p in sorted(world.profiles.items())},
        "relationships": [{"npc_a": r.npc_a, "npc_b": r.npc_b,
                           "kind": r.kind,
                           "seed_memory_refs": list(r.seed_memory_refs)}
                          for r in world.relationships],
        "memories": [{"memory_id": e.memory_id, "npc_id": e.npc_id,
                      "kind": e.kind, "text": e.text,
                      "created_at": e.created_at,
                      "last_access": e.last_access,
                      "importance": e.importance}
                     for n in sorted(world.store.streams)
                     for e in world.store.streams[n]],
        "routines": [_routine_to_json(world.routines[k])
                     for k in sorted(world.routines)],
        "plans": {pid: asdict(p) for pid, p in sorted(world.plans.items())},
        "conversations": {cid: _conversation_to_json(c)
                          for cid, c in sorted(world.conversations.items())},
        "in_conversation": dict(sorted(world.in_conversation.items())),
        "perception_cooldowns": [[k[0], k[1], k[2], v] for k, v in
                                 sorted(world.perception_cooldowns.items())],
        "npc_paths": {n: [list(p) for p in path]
                      for n, path in sorted(world.npc_paths.items())},
        "move_overrides": {n: list(t) for n, t in
                           sorted(world.move_overrides.items())},
        "pending_engagements": [asdict(e) for e in world.pending_engagements],
        "command_queue": [_step_to_json(s) for s in world.command_queue],
        # wall-clock stage timings are run-dependent and stay out of saves
        "generation_report": {k: v for k, v in
                              sorted(world.generation_report.items())
                              if k != "stages"},
    }
    if include_events:
        data["events"] = world.events
    return data


def validate_world(world: World) -> None:
    """Cross-module invariants checked after load."""
    problems = hephaestus.validate_settlement(world.settlement, world.config)
    if problems:
        raise InvariantViolation("settlement", "; ".join(problems))
    for (npc_id, day), routine in world.routines.items():
        if not pygmalion.contiguity_ok(routine, world.config.wake_minute,
                                       world.config.sleep_minute):
            raise InvariantViolation(
                "routines", f"routine for {npc_id} day {day} not contiguous")
    for npc_id, entries in world.store.streams.items():
        for e in entries:
            if not (0.0 <= e.importance <= 1.0):
                raise InvariantViolation(
                    "memory", f"memory {e.memory_id} importance out of range")
            if e.last_access < e.created_at:
                raise InvariantViolation(
                    "memory", f"memory {e.memory_id} accessed before creation")
    for npc_id, profile in world.profiles.items():
        if profile.home is None:
            raise InvariantViolation("population", f"{npc_id} has no home")
    for cid, conv in world.conversations.items():
        if conv.phase not in pygmalion.PHASES:
            raise InvariantViolation("conversations",
                                     f"{cid} in unknown phase {conv.phase}")


def world_from_json(data: dict, oracle: Oracle) -> World:
    if not isinstance(data, dict):
        raise CorruptSave("save root must be an object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format_version {version!r}, "
                              f"expected {FORMAT_VERSION}")
    try:
        spec = gaia.WorldSpec.from_json(data["spec"])
        config = SimConfig.from_json(data["config"])
        world = World(spec, oracle, config)
        world.clock = data["clock"]
        world._conversation_counter = data["counters"]["conversation"]
        world._plan_counter = data["counters"]["plan"]
        world.store.next_id = data["counters"]["memory_next_id"]
        for name, counter in data["streams"].items():
            stream = world.stream(name)
            stream.counter = counter

        world.biome_table = gaia.BiomeTable.from_json(data["biome_table"])
        world.terrain = _terrain_from_json(data["terrain"])
        s = data["settlement"]
        world.settlement = hephaestus.Settlement(
            buildings=[_building_from_json(b) for b in s["buildings"]],
            street_rows=list(s["street_rows"]),
            bounds=tuple(s["bounds"]))
        world.interiors = {bid: _interior_from_json(i)
                           for bid, i in data["interiors"].items()}
        world.roads = hephaestus.RoadNetwork(
            tour=list(data["roads"]["tour"]),
            segments=[[tuple(p) for p in seg]
                      for seg in data["roads"]["segments"]],
            road_tiles={tuple(t) for t in data["roads"]["road_tiles"]})
        for raw in data["objects"]:
            raw = dict(raw)
            raw["position"] = tuple(raw["position"])
            world.objects[raw["object_id"]] = WorldObject(**raw)
        world.families = [moira.FamilyLore(**f) for f in data["families"]]
        for npc_id, raw in data["profiles"].items():
            raw = dict(raw)
            raw["position"] = tuple(raw["position"])
            raw["traits"] = list(raw["traits"])
            raw["evolution_log"] = [tuple(e) for e in raw["evolution_log"]]
            world.profiles[npc_id] = moira.NpcProfile(**raw)
        world.relationships = [moira.Relationship(**r)
                               for r in data["relationships"]]
        for raw in data["memories"]:
            embedding = world.embedder.embed(raw["text"])
            try:
                entry = MemoryEntry(embedding=embedding, **raw)
            except ValueError as exc:
                # well-formed but semantically invalid entry
                raise InvariantViolation("memory", str(exc)) from exc
            world.store.stream(entry.npc_id).append(entry)
        for raw in data["routines"]:
            routine = _routine_from_json(raw)
            world.routines[(routine.npc_id, routine.day)] = routine
        for pid, raw in data["plans"].items():
            world.plans[pid] = pygmalion.Plan(**raw)
        world.conversations = {cid: _conversation_from_json(c)
                               for cid, c in data["conversations"].items()}
        world.in_conversation = dict(data["in_conversation"])
        world.perception_cooldowns = {
            (a, b, s2): at for a, b, s2, at in data["perception_cooldowns"]}
        world.npc_paths = {n: [tuple(p) for p in path]
                           for n, path in data["npc_paths"].items()}
        world.move_overrides = {n: tuple(t)
                                for n, t in data["move_overrides"].items()}
        world.pending_engagements = [PendingEngagement(**e)
                                     for e in data["pending_engagements"]]
        world.command_queue = [_step_from_json(s)
                               for s in data["command_queue"]]
        world.events = list(data.get("events", []))
        world.generation_report = data.get("generation_report", {})
    except InvariantViolation:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSave(str(exc)) from exc
    validate_world(world)
    return world


def save_world(world: World, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(world_to_json(world)))


def load_world(path: str, oracle: Oracle) -> World:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptSave(f"invalid JSON: {exc}") from exc
    return world_from_json(data, oracle)
