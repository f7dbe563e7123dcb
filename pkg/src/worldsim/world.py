"""World assembly and the per-tick simulation loop.

generate_world runs the full pipeline: terrain fields, biome classification
and analogization, family planning, settlement layout with interiors, roads,
flora, population lore and relationships, asset resolution, and day-zero
routines. tick() advances the clock one sim-minute through a fixed phase
order so identical inputs replay identically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import daedalus, gaia, hephaestus, moira, pygmalion, wordofgod
from .config import SimConfig
from .memory import MemoryStore
from .oracle import HashEmbedder, Oracle, OracleError
from .routing import NoPath, astar
from .rng import Stream

DEVIATION_MINUTES = 30


class GenerationError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class WorldObject:
    """Anything placeable on the map that is not an NPC or a building."""
    object_id: str
    kind: str                      # flora | furniture
    descriptor: str
    position: tuple[int, int]      # global tile (x, y)
    building_id: Optional[str] = None
    state: str = "idle"
    asset_ref: Optional[str] = None
    size: int = 1


@dataclass
class PendingEngagement:
    npc_id: str
    targets: list[str]
    intent: str
    queued_at: int


class World:
    """All simulation state plus the services that operate on it."""

    def __init__(self, spec: gaia.WorldSpec, oracle: Oracle,
                 config: Optional[SimConfig] = None):
        self.spec = spec
        self.config = config or SimConfig()
        self.oracle = oracle
        self.embedder = HashEmbedder(seed=spec.seed,
                                     dim=self.config.embedding_dim)
        self.store = MemoryStore(self.config)
        self.streams: dict[str, Stream] = {}

        self.biome_table: Optional[gaia.BiomeTable] = None
        self.terrain: Optional[gaia.TerrainGrid] = None
        self.settlement: Optional[hephaestus.Settlement] = None
        self.interiors: dict[str, hephaestus.Interior] = {}
        self.roads: Optional[hephaestus.RoadNetwork] = None
        self.objects: dict[str, WorldObject] = {}
        self.asset_library: Optional[daedalus.AssetLibrary] = None

        self.families: list[moira.FamilyLore] = []
        self.profiles: dict[str, moira.NpcProfile] = {}
        self.relationships: list[moira.Relationship] = []

        self.routines: dict[tuple[str, int], pygmalion.Routine] = {}
        self.plans: dict[str, pygmalion.Plan] = {}
        self.conversations: dict[str, pygmalion.ConversationState] = {}
        self.in_conversation: dict[str, str] = {}   # npc_id -> conversation_id
        self.perception_cooldowns: dict = {}
        self.npc_paths: dict[str, list[tuple[int, int]]] = {}
        self.move_overrides: dict[str, tuple[int, int]] = {}
        self.pending_engagements: list[PendingEngagement] = []
        self.command_queue: list = []               # wordofgod steps
        self.events: list[dict] = []
        self.clock = 0                              # sim-minutes since start
        self._conversation_counter = 0
        self._plan_counter = 0
        self.generation_report: dict = {}

        self.engine = pygmalion.ConversationEngine(
            self.store, self.embedder, oracle, self.config)
        self.interviewer = wordofgod.Interviewer(
            self.store, self.embedder, oracle, self.config)

    # -- helpers --------------------------------------------------------

    def stream(self, name: str) -> Stream:
        if name not in self.streams:
            self.streams[name] = Stream(self.spec.seed, name)
        return self.streams[name]

    def npc_names(self) -> dict[str, str]:
        return {p.name: n for n, p in self.profiles.items()}

    def display_names(self) -> dict[str, str]:
        return {n: p.name for n, p in self.profiles.items()}

    def location_names(self) -> dict[str, str]:
        return {b.name or b.spec.description: b.building_id
                for b in self.settlement.buildings}

    def emit(self, kind: str, **payload) -> dict:
        event = {"tick": self.clock, "kind": kind, **payload}
        self.events.append(event)
        return event

    def location_tile(self, location: str) -> tuple[int, int]:
        if location.startswith("tile:"):
            x, y = location[5:].split(",")
            return (int(x), int(y))
        return self.settlement.by_id(location).entrance

    def day(self) -> int:
        return self.clock // self.spec.day_length

    def minute_of_day(self) -> int:
        return self.clock % self.spec.day_length

    def routine_for(self, npc_id: str, day: int) -> pygmalion.Routine:
        key = (npc_id, day)
        if key not in self.routines:
            self.routines[key] = pygmalion.generate_routine(
                self.profiles[npc_id], day, self._accessible_objects(npc_id),
                self.oracle, self.config)
        return self.routines[key]

    def _accessible_objects(self, npc_id: str) -> dict[str, list[str]]:
        profile = self.profiles[npc_id]
        out: dict[str, list[str]] = {}
        for location in (profile.home, profile.workplace):
            if location:
                out[location] = sorted(
                    o.object_id for o in self.objects.values()
                    if o.building_id == location)
        return out

    def next_plan(self, proposer: str, invitees: list[str],
                  details: dict) -> pygmalion.Plan:
        self._plan_counter += 1
        location = details.get("location")
        if not location or (not str(location).startswith("tile:")
                            and not any(b.building_id == location
                                        for b in self.settlement.buildings)):
            location = self.profiles[proposer].home
        plan = pygmalion.Plan(
            plan_id=f"p{self._plan_counter}", proposer=proposer,
            invitees=list(invitees),
            decisions={proposer: "accepted",
                       **{i: "pending" for i in invitees}},
            scheduled_day=None, start=int(details["start"]),
            end=int(details["end"]), location=location,
            activity=str(details["activity"]))
        self.plans[plan.plan_id] = plan
        return plan

    # -- tick loop ------------------------------------------------------

    def tick(self) -> list[dict]:
        """Advance one sim-minute through the fixed phase order."""
        start_index = len(self.events)
        self.clock += self.config.sim_minutes_per_tick

        self._phase_commands()
        self._phase_movement()
        observations = self._phase_perception()
        self._phase_reactions(observations)
        self._phase_conversations()
        self._phase_plan_scheduling()
        self._phase_day_rollover()
        return self.events[start_index:]

    # phase 1: player commands

    def _phase_commands(self) -> None:
        queue, self.command_queue = self.command_queue, []
        for step in queue:
            try:
                self.execute_step(step)
            except wordofgod.TargetBusy:
                self.command_queue.append(step)

        still_pending = []
        for eng in self.pending_engagements:
            if eng.npc_id in self.in_conversation:
                continue
            pos = self.profiles[eng.npc_id].position
            targets = [t for t in eng.targets
                       if t not in self.in_conversation]
            if not targets:
                still_pending.append(eng)
                continue
            near = all(max(abs(self.profiles[t].position[0] - pos[0]),
                           abs(self.profiles[t].position[1] - pos[1]))
                       <= self.config.conversation_radius for t in targets)
            if near:
                self.move_overrides.pop(eng.npc_id, None)
                self._start_conversation(eng.npc_id, targets, eng.intent)
            else:
                self.move_overrides[eng.npc_id] = \
                    self.profiles[targets[0]].position
                still_pending.append(eng)
        self.pending_engagements = still_pending

    def execute_step(self, step) -> None:
        config = self.config
        if isinstance(step, wordofgod.EngageConversation):
            if step.npc_id in self.in_conversation:
                raise wordofgod.TargetBusy(step.npc_id)
            self.pending_engagements.append(PendingEngagement(
                step.npc_id, list(step.targets), step.intent, self.clock))
            self.emit("command_engage", npc=step.npc_id,
                      targets=step.targets, intent=step.intent)
        elif isinstance(step, wordofgod.ScheduleAction):
            day = self.day()
            if step.start <= self.minute_of_day():
                day += 1
            routine = self.routine_for(step.npc_id, day)
            pygmalion.insert_entry(
                routine,
                pygmalion.RoutineEntry(step.start, step.end, step.location,
                                       step.activity, source="command"),
                config.wake_minute, config.sleep_minute,
                self.profiles[step.npc_id].home)
            self.emit("command_schedule", npc=step.npc_id, day=day,
                      activity=step.activity)
        elif isinstance(step, wordofgod.ProposePlan):
            plan = self.next_plan(step.npc_id, step.invitees, {
                "activity": step.activity, "start": step.start,
                "end": step.end, "location": step.location or None})
            for invitee in step.invitees:
                try:
                    decision = self.oracle.complete("plan_decision", {
                        "name": self.profiles[invitee].name,
                        "activity": plan.activity,
                        "traits": ", ".join(self.profiles[invitee].traits),
                        "memories": ""}).parsed
                except OracleError:
                    decision = "reject"
                plan.decisions[invitee] = ("accepted" if decision == "accept"
                                           else "rejected")
            if not plan.accepting():
                plan.status = "cancelled"
            self.emit("command_plan", plan=plan.plan_id,
                      proposer=step.npc_id, status=plan.status)
        elif isinstance(step, wordofgod.CustomAction):
            profile = self.profiles[step.npc_id]
            location = step.location or self._current_location(step.npc_id)
            routine = self.routine_for(step.npc_id, self.day())
            minute = self.minute_of_day()
            start = max(minute, config.wake_minute)
            end = min(start + DEVIATION_MINUTES, config.sleep_minute)
            if start < end:
                pygmalion.insert_entry(
                    routine,
                    pygmalion.RoutineEntry(start, end, location,
                                           step.activity, source="command"),
                    config.wake_minute, config.sleep_minute, profile.home)
            self.emit("command_action", npc=step.npc_id,
                      activity=step.activity)
        else:
            raise TypeError(f"unknown step type: {type(step).__name__}")

    def _current_location(self, npc_id: str) -> str:
        routine = self.routines.get((npc_id, self.day()))
        entry = pygmalion.entry_at(routine, self.minute_of_day()) \
            if routine else None
        if entry:
            return entry.location
        return self.profiles[npc_id].home

    # phase 2: movement

    def _target_tile(self, npc_id: str) -> tuple[int, int]:
        if npc_id in self.move_overrides:
            return self.move_overrides[npc_id]
        minute = self.minute_of_day()
        if minute < self.config.wake_minute or minute >= self.config.sleep_minute:
            return self.location_tile(self.profiles[npc_id].home)
        routine = self.routine_for(npc_id, self.day())
        entry = pygmalion.entry_at(routine, minute)
        location = entry.location if entry else self.profiles[npc_id].home
        return self.location_tile(location)

    def _phase_movement(self) -> None:
        for npc_id in sorted(self.profiles):
            if npc_id in self.in_conversation:
                continue
            profile = self.profiles[npc_id]
            target = self._target_tile(npc_id)
            if profile.position == target:
                self.npc_paths.pop(npc_id, None)
                continue
            path = self.npc_paths.get(npc_id)
            if not path or path[-1] != target:
                try:
                    full, _ = astar(self.terrain, profile.position, target)
                except NoPath:
                    self.npc_paths.pop(npc_id, None)
                    continue
                path = full[1:]
                self.npc_paths[npc_id] = path
            for _ in range(self.config.move_tiles_per_tick):
                if not path:
                    break
                profile.position = path.pop(0)
            if not path:
                self.npc_paths.pop(npc_id, None)

    # phase 3: perception

    def _npc_state(self, npc_id: str) -> str:
        if npc_id in self.in_conversation:
            return "conversation"
        routine = self.routines.get((npc_id, self.day()))
        entry = pygmalion.entry_at(routine, self.minute_of_day()) \
            if routine else None
        if entry and entry.source in ("deviation", "command"):
            return entry.activity
        return "routine"

    def _surroundings(self) -> list[tuple[str, tuple[int, int], str]]:
        out = [(n, self.profiles[n].position, self._npc_state(n))
               for n in sorted(self.profiles)]
        out.extend((o.object_id, o.position, o.state)
                   for o in sorted(self.objects.values(),
                                   key=lambda o: o.object_id)
                   if o.state != "idle")
        return out

    def _phase_perception(self) -> list[pygmalion.Observation]:
        surroundings = self._surroundings()
        observations = []
        for npc_id in sorted(self.profiles):
            obs = pygmalion.perceive(
                npc_id, self.profiles[npc_id].position, surroundings,
                self.clock, self.perception_cooldowns, self.config)
            for o in obs:
                subject = self.profiles.get(o.subject)
                label = subject.name if subject else \
                    self.objects[o.subject].descriptor
                self.store.add(npc_id, "observation",
                               f"I saw {label} ({o.subject_state}).",
                               self.clock, o.urgency, self.embedder)
            observations.extend(obs)
        return observations

    # phase 4: reactions

    def _phase_reactions(self, observations) -> None:
        for obs in observations:
            if obs.observer in self.in_conversation:
                continue
            profile = self.profiles[obs.observer]
            reaction = pygmalion.react(profile, obs, self.oracle,
                                       obs.subject in self.profiles,
                                       self.config)
            if reaction.kind == "deviate":
                routine = self.routine_for(obs.observer, self.day())
                minute = self.minute_of_day()
                start = max(minute, self.config.wake_minute)
                end = min(start + DEVIATION_MINUTES, self.config.sleep_minute)
                if start < end:
                    pygmalion.insert_entry(
                        routine,
                        pygmalion.RoutineEntry(
                            start, end, self._current_location(obs.observer),
                            reaction.action, source="deviation"),
                        self.config.wake_minute, self.config.sleep_minute,
                        profile.home)
                self.emit("deviation", npc=obs.observer,
                          action=reaction.action)
            elif reaction.kind == "converse":
                free = [t for t in reaction.targets
                        if t not in self.in_conversation]
                if free:
                    self._start_conversation(obs.observer, free,
                                             f"noticing {obs.subject_state}")

    def _start_conversation(self, initiator: str, targets: list[str],
                            context: str) -> Optional[str]:
        positions = {n: p.position for n, p in self.profiles.items()}
        busy = set(self.in_conversation)
        try:
            self._conversation_counter += 1
            state = self.engine.start(f"c{self._conversation_counter}",
                                      initiator, targets, context,
                                      positions, busy)
        except pygmalion.PygmalionError:
            self._conversation_counter -= 1
            return None
        self.conversations[state.conversation_id] = state
        for npc in state.participants:
            self.in_conversation[npc] = state.conversation_id
        self.emit("conversation_started",
                  conversation=state.conversation_id,
                  participants=state.participants, context=context)
        return state.conversation_id

    # phase 5: conversations

    def _phase_conversations(self) -> None:
        names = self.display_names()
        for cid in sorted(self.conversations):
            state = self.conversations[cid]
            if state.phase == "Ended":
                continue
            for event in self.engine.step(state, self.clock, names,
                                          self.next_plan):
                self.events.append({"tick": self.clock, **event})
            if state.phase == "Ended":
                for npc in state.participants:
                    if self.in_conversation.get(npc) == cid:
                        del self.in_conversation[npc]

    # phase 6: plan scheduling

    def _phase_plan_scheduling(self) -> None:
        homes = {n: p.home for n, p in self.profiles.items()}
        for pid in sorted(self.plans):
            plan = self.plans[pid]
            if plan.status != "proposed":
                continue
            try:
                day = pygmalion.schedule_plan(
                    plan, self.routines, self.routine_for, self.day(),
                    homes, self.config)
                self.emit("plan_scheduled", plan=pid, day=day)
            except pygmalion.NoFeasibleDay:
                if plan.status == "cancelled":
                    self.emit("plan_cancelled", plan=pid)

    # phase 7: day rollover

    def _day_log(self, npc_id: str, day: int) -> list[str]:
        start = day * self.spec.day_length
        end = start + self.spec.day_length
        log = [e.text for e in self.store.stream(npc_id)
               if start <= e.created_at <= end
               and e.kind in ("observation", "conversation_summary",
                              "plan_decision")]
        routine = self.routines.get((npc_id, day))
        if routine:
            log.extend(e.activity for e in routine.entries)
        return log

    def _phase_day_rollover(self) -> None:
        if self.clock == 0 or self.clock % self.spec.day_length != 0:
            return
        finished_day = self.clock // self.spec.day_length - 1
        scheduled = [self.plans[p] for p in sorted(self.plans)]
        for npc_id in sorted(self.profiles):
            events = pygmalion.reflect(
                self.profiles[npc_id], finished_day,
                self._day_log(npc_id, finished_day), scheduled,
                self.routines, self.store, self.embedder, self.oracle,
                self.clock, self.config)
            for event in events:
                self.events.append({"tick": self.clock, **event})
        next_day = finished_day + 1
        for npc_id in sorted(self.profiles):
            self.routine_for(npc_id, next_day)


# ---------------------------------------------------------------------------
# generation pipeline

def _resolve_assets(world: World) -> None:
    library = world.asset_library
    if library is None or not library.entries:
        return
    for building in world.settlement.buildings:
        desc = building.spec.description or building.spec.function_tag
        building.asset_ref = daedalus.retrieve_asset(
            desc, library, world.embedder)
    for obj in world.objects.values():
        obj.asset_ref = daedalus.retrieve_asset(
            obj.descriptor, library, world.embedder)


def _default_library(embedder: HashEmbedder) -> daedalus.AssetLibrary:
    """A small generic library so every descriptor resolves to something."""
    descriptions = [
        ("tree", "a leafy tree with a thick trunk", ["flora"]),
        ("shrub", "a low bushy shrub", ["flora"]),
        ("rock", "a weathered grey boulder", ["flora"]),
        ("flower", "a patch of wildflowers", ["flora"]),
        ("house", "a small residential house with a pitched roof",
         ["building", "residence"]),
        ("hall", "a large civic hall with wide doors",
         ["building", "city-hall"]),
        ("workshop", "a working building with tools and a chimney",
         ["building", "workplace"]),
        ("bed", "a simple wooden bed", ["furniture"]),
        ("table", "a sturdy square table", ["furniture"]),
        ("chair", "a plain wooden chair", ["furniture"]),
        ("stove", "a cast-iron cooking stove", ["furniture"]),
        ("shelf", "a tall storage shelf", ["furniture"]),
        ("desk", "a writing desk with drawers", ["furniture"]),
        ("bench", "a long work bench", ["furniture"]),
    ]
    entries = [daedalus.LibraryEntry(
        asset_id=aid, image_path=f"{aid}.png", description_text=desc,
        embedding=embedder.embed(desc), tags=tags)
        for aid, desc, tags in descriptions]
    return daedalus.AssetLibrary(entries=entries)


def generate_world(spec: gaia.WorldSpec, oracle: Oracle,
                   config: Optional[SimConfig] = None,
                   asset_library: Optional[daedalus.AssetLibrary] = None
                   ) -> World:
    """Run the full generation pipeline; failures carry their stage name."""
    world = World(spec, oracle, config)
    config = world.config
    report: dict = {"stages": {}}
    t_start = time.perf_counter()

    def stage(name):
        report["stages"][name] = round(time.perf_counter() - t_start, 4)

    # terrain
    try:
        fields = gaia.generate_fields(spec, config)
        table, analogy_log = gaia.analogize_biomes(
            gaia.default_biome_table(), spec.description, oracle)
        world.biome_table = table
        world.terrain = gaia.classify_biomes(spec, fields, table)
        report["analogy_fallbacks"] = analogy_log
    except gaia.GaiaError as exc:
        raise GenerationError("terrain", str(exc)) from exc
    stage("terrain")

    # population structure (needed before buildings)
    family_plans = moira.plan_families(spec, oracle, world.stream("moira"),
                                       config)

    # settlement
    try:
        specs = hephaestus.derive_building_needs(family_plans)
        world.settlement = hephaestus.place_buildings(
            specs, world.terrain, world.stream("hephaestus"), config)
        hephaestus.stamp_buildings(world.terrain, world.settlement)
        problems = hephaestus.validate_settlement(world.settlement, config)
        if problems:
            raise hephaestus.HephaestusError("; ".join(problems))
        catalog = hephaestus.load_furniture_catalog()
        for building in world.settlement.buildings:
            world.interiors[building.building_id] = hephaestus.layout_interior(
                building, catalog, world.stream("interiors"), config)
        world.roads = hephaestus.build_roads(world.settlement, world.terrain,
                                             config)
    except hephaestus.HephaestusError as exc:
        raise GenerationError("settlement", str(exc)) from exc
    stage("settlement")

    # world objects: furniture instances, then flora on the remaining tiles
    for bid in sorted(world.interiors):
        building = world.settlement.by_id(bid)
        ox, oy = building.origin
        for i, item in enumerate(world.interiors[bid].furniture):
            oid = f"{bid}-f{i}"
            world.objects[oid] = WorldObject(
                object_id=oid, kind="furniture", descriptor=item.description,
                position=(ox + item.tile[0], oy + item.tile[1]),
                building_id=bid)
    reserved = set(world.roads.road_tiles)
    for building in world.settlement.buildings:
        reserved.update(building.footprint())
        reserved.add(building.street_tile)
    flora = gaia.place_flora(world.terrain, world.biome_table, reserved,
                             world.stream("flora"))
    for obj in flora:
        world.objects[obj.object_id] = WorldObject(
            object_id=obj.object_id, kind="flora",
            descriptor=obj.descriptor, position=obj.position)
    stage("objects")

    # population
    try:
        world.families, world.profiles = moira.generate_lore(
            family_plans, spec, oracle, world.stream("moira"), config)
        residences = [b for b in world.settlement.buildings
                      if b.spec.function_tag == "residence"
                      and b.spec.description.startswith("family residence")]
        workplaces = [b for b in world.settlement.buildings
                      if b.spec.function_tag == "workplace"]
        for i, family in enumerate(world.families):
            home = residences[i]
            family.residence = home.building_id
            for npc_id in family.member_ids:
                profile = world.profiles[npc_id]
                profile.home = home.building_id
                profile.position = home.entrance
                if profile.is_adult() and profile.workplace_role:
                    for wp in workplaces:
                        if profile.workplace_role in wp.spec.roles:
                            profile.workplace = wp.building_id
                            break
        workplace_names = {b.building_id: b.spec.description
                           for b in workplaces}
        world.relationships = moira.seed_relationships(
            world.families, world.profiles, workplace_names, oracle,
            world.store, world.embedder)
        world.relationships = moira.ensure_connectedness(
            world.relationships, world.profiles, spec.degrees_cap, oracle,
            world.store, world.embedder)
    except (moira.MoiraError, IndexError) as exc:
        raise GenerationError("population", str(exc)) from exc
    stage("population")

    # assets
    world.asset_library = asset_library or _default_library(world.embedder)
    _resolve_assets(world)
    stage("assets")

    # day-zero routines
    for npc_id in sorted(world.profiles):
        world.routine_for(npc_id, 0)
    stage("routines")

    report["population"] = len(world.profiles)
    report["buildings"] = len(world.settlement.buildings)
    report["flora"] = len(flora)
    report["diameter"] = moira.graph_diameter(sorted(world.profiles),
                                              world.relationships)
    world.generation_report = report
    return world
