"""The agent runtime: routines, distance-based perception, the conversation
state machine with polling speaker selection, plan scheduling, and nightly
reflection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .config import SimConfig
from .memory import MemoryStore, score_memory
from .oracle import HashEmbedder, Oracle, OracleError

PHASES = ("OutlineGeneration", "ProposalDetection", "ProposalDecision",
          "DialogueRefinement", "Ended")

# legal phase transitions (the conversation system's state graph)
TRANSITIONS = {
    ("OutlineGeneration", "ProposalDetection"),
    ("ProposalDetection", "ProposalDecision"),
    ("ProposalDetection", "DialogueRefinement"),
    ("ProposalDecision", "DialogueRefinement"),
    ("DialogueRefinement", "OutlineGeneration"),
    ("DialogueRefinement", "Ended"),
    # graceful termination on oracle failure, from any live phase
    ("OutlineGeneration", "Ended"),
    ("ProposalDetection", "Ended"),
    ("ProposalDecision", "Ended"),
}


class PygmalionError(Exception):
    pass


class OutOfRange(PygmalionError):
    pass


class AlreadyInConversation(PygmalionError):
    pass


# ---------------------------------------------------------------------------
# routines

@dataclass
class RoutineEntry:
    start: int              # sim-minutes within the day
    end: int
    location: str           # building id or "tile:x,y"
    activity: str
    object_id: Optional[str] = None
    source: str = "generated"   # generated | plan:<id> | deviation | command


@dataclass
class Routine:
    npc_id: str
    day: int
    entries: list[RoutineEntry] = field(default_factory=list)


def contiguity_ok(routine: Routine, wake: int, sleep: int) -> bool:
    """Chronologically ordered, non-overlapping, gap-free over [wake, sleep]."""
    entries = routine.entries
    if not entries:
        return False
    if entries[0].start != wake or entries[-1].end != sleep:
        return False
    for prev, cur in zip(entries, entries[1:]):
        if cur.start != prev.end:
            return False
    return all(e.start < e.end for e in entries)


def default_routine(npc_id: str, day: int, home: str,
                    workplace: Optional[str],
                    config: Optional[SimConfig] = None) -> Routine:
    """Template day: meals and leisure at home, work blocks for adults."""
    config = config or SimConfig()
    wake, sleep = config.wake_minute, config.sleep_minute
    day_site = workplace or home
    day_activity = "working" if workplace else "passing the time"
    blocks = [
        (wake, 480, home, "having breakfast"),
        (480, 720, day_site, day_activity),
        (720, 780, home, "having lunch"),
        (780, 1080, day_site, day_activity),
        (1080, 1140, home, "having dinner"),
        (1140, sleep, home, "relaxing at home"),
    ]
    entries = [RoutineEntry(s, e, loc, act) for s, e, loc, act in blocks
               if s < e]
    return Routine(npc_id=npc_id, day=day, entries=entries)


def repair_contiguity(routine: Routine, wake: int, sleep: int,
                      home: str) -> None:
    """Sort, drop degenerates, clamp to [wake, sleep], fill gaps with idle
    blocks at home."""
    entries = [e for e in routine.entries if e.start < e.end]
    entries.sort(key=lambda e: (e.start, e.end))
    out: list[RoutineEntry] = []
    cursor = wake
    for e in entries:
        s, t = max(e.start, cursor), min(e.end, sleep)
        if s >= t:
            continue
        if s > cursor:
            out.append(RoutineEntry(cursor, s, home, "idle at home"))
        out.append(replace(e, start=s, end=t))
        cursor = t
    if cursor < sleep:
        out.append(RoutineEntry(cursor, sleep, home, "idle at home"))
    routine.entries = out


def generate_routine(profile, day: int, accessible_objects: dict[str, list[str]],
                     oracle: Oracle, config: Optional[SimConfig] = None) -> Routine:
    """Oracle-suggested day validated against the accessible-object catalog;
    invalid suggestions are replaced, failures fall back to the template."""
    config = config or SimConfig()
    home = profile.home
    workplace = profile.workplace
    locations = [loc for loc in (home, workplace) if loc]
    try:
        resp = oracle.complete("daily_routine", {
            "name": profile.name, "lore": profile.individual_lore,
            "traits": ", ".join(profile.traits), "day": str(day),
            "locations": ", ".join(locations)})
        raw_entries = resp.parsed.get("entries")
        if not isinstance(raw_entries, list) or not raw_entries:
            raise OracleError("routine without entries")
    except OracleError:
        return default_routine(profile.npc_id, day, home, workplace, config)

    routine = Routine(npc_id=profile.npc_id, day=day)
    for raw in raw_entries:
        try:
            start, end = int(raw["start"]), int(raw["end"])
            location = str(raw["location"])
            activity = str(raw.get("activity", "busy"))
            object_id = raw.get("object")
        except (KeyError, TypeError, ValueError):
            continue
        if location not in locations:
            # inaccessible location: the whole entry becomes idle time at home
            location, activity, object_id = home, "idle at home", None
        if object_id is not None and object_id not in accessible_objects.get(location, []):
            location, activity, object_id = home, "idle at home", None
        routine.entries.append(RoutineEntry(start, end, location, activity,
                                            object_id))
    repair_contiguity(routine, config.wake_minute, config.sleep_minute, home)
    if not contiguity_ok(routine, config.wake_minute, config.sleep_minute):
        return default_routine(profile.npc_id, day, home, workplace, config)
    return routine


def entry_at(routine: Routine, minute_of_day: int) -> Optional[RoutineEntry]:
    for e in routine.entries:
        if e.start <= minute_of_day < e.end:
            return e
    return None


def insert_entry(routine: Routine, new: RoutineEntry, wake: int, sleep: int,
                 home: str) -> None:
    """Insert an entry, truncating or splitting overlapping generated blocks
    (never deleting a whole block's day structure)."""
    out: list[RoutineEntry] = []
    for e in routine.entries:
        if e.end <= new.start or e.start >= new.end:
            out.append(e)
            continue
        if e.start < new.start:
            out.append(replace(e, end=new.start))
        if e.end > new.end:
            out.append(replace(e, start=new.end))
    out.append(new)
    routine.entries = out
    repair_contiguity(routine, wake, sleep, home)


def remove_plan_entry(routine: Routine, plan_id: str, wake: int, sleep: int,
                      home: str) -> bool:
    tag = f"plan:{plan_id}"
    before = len(routine.entries)
    routine.entries = [e for e in routine.entries if e.source != tag]
    removed = len(routine.entries) != before
    repair_contiguity(routine, wake, sleep, home)
    return removed


# ---------------------------------------------------------------------------
# perception

@dataclass
class Observation:
    observer: str
    subject: str            # npc or object id
    subject_state: str
    distance: int
    urgency: float
    at: int                 # absolute sim-minutes


def perceive(npc_id: str, position: tuple[int, int],
             surroundings: list[tuple[str, tuple[int, int], str]],
             now: int, cooldowns: dict, config: Optional[SimConfig] = None
             ) -> list[Observation]:
    """Everything within Chebyshev distance of the perception radius,
    excluding self; repeats within the cooldown window are suppressed.

    surroundings: (entity_id, (x, y), state) triples.
    """
    config = config or SimConfig()
    px, py = position
    out = []
    for entity_id, (ex, ey), state in surroundings:
        if entity_id == npc_id:
            continue
        dist = max(abs(ex - px), abs(ey - py))
        if dist > config.perception_radius:
            continue
        key = (npc_id, entity_id, state)
        last = cooldowns.get(key)
        if last is not None and now - last < config.observation_cooldown_min:
            continue
        cooldowns[key] = now
        urgency = config.urgency_table.get(state, 0.1)
        out.append(Observation(observer=npc_id, subject=entity_id,
                               subject_state=state, distance=dist,
                               urgency=urgency, at=now))
    return out


@dataclass
class Reaction:
    kind: str               # continue | deviate | converse
    action: Optional[str] = None
    targets: list[str] = field(default_factory=list)


def react(profile, observation: Observation, oracle: Oracle,
          subject_is_npc: bool, config: Optional[SimConfig] = None) -> Reaction:
    """Below the urgency threshold: continue without consulting the oracle.
    Above it the oracle picks; failures fail safe to continue."""
    config = config or SimConfig()
    if observation.urgency < config.deviation_threshold:
        return Reaction("continue")
    try:
        resp = oracle.complete("reaction", {
            "name": profile.name,
            "observation": f"{observation.subject} is {observation.subject_state}"})
        decision = resp.parsed
    except OracleError:
        return Reaction("continue")
    if decision == "deviate":
        return Reaction("deviate",
                        action=f"attending to {observation.subject} "
                               f"({observation.subject_state})")
    if decision == "converse" and subject_is_npc:
        return Reaction("converse", targets=[observation.subject])
    return Reaction("continue")


# ---------------------------------------------------------------------------
# conversations

@dataclass
class ConversationState:
    conversation_id: str
    participants: list[str]
    phase: str = "OutlineGeneration"
    context: str = ""
    outline: str = ""
    transcript: list[tuple[str, str, int]] = field(default_factory=list)
    pending_speaker: Optional[str] = None
    pending_utterance: Optional[str] = None
    pending_plan: Optional[str] = None
    turn_count: int = 0
    max_turns: int = 12
    phase_history: list[str] = field(default_factory=lambda: ["OutlineGeneration"])

    def transition(self, new_phase: str) -> None:
        if (self.phase, new_phase) not in TRANSITIONS:
            raise PygmalionError(f"illegal transition {self.phase} -> {new_phase}")
        self.phase = new_phase
        self.phase_history.append(new_phase)


@dataclass
class Plan:
    plan_id: str
    proposer: str
    invitees: list[str]
    decisions: dict          # npc -> accepted | rejected | pending
    scheduled_day: Optional[int]
    start: int
    end: int
    location: str
    activity: str
    status: str = "proposed"  # proposed | scheduled | cancelled | completed

    def accepting(self) -> list[str]:
        return [n for n, d in sorted(self.decisions.items()) if d == "accepted"]


def poll_next_speaker(state: ConversationState, store: MemoryStore,
                      embedder: HashEmbedder, now: int,
                      config: Optional[SimConfig] = None) -> str:
    """The participant whose best retrieved memory scores highest against the
    latest context speaks next; ties go to fewest utterances, then lowest id."""
    config = config or SimConfig()
    context = state.transcript[-1][1] if state.transcript else (
        state.outline or state.context or "the conversation")
    query = embedder.embed(context)
    spoken = {}
    for speaker, _, _ in state.transcript:
        spoken[speaker] = spoken.get(speaker, 0) + 1
    best = None
    best_key = None
    for npc in sorted(state.participants):
        score = store.best_score(npc, query, now, config.poll_top_k)
        key = (-score, spoken.get(npc, 0), npc)
        if best_key is None or key < best_key:
            best_key = key
            best = npc
    return best


class ConversationEngine:
    """Drives one conversation step per call, producing events and plans."""

    def __init__(self, store: MemoryStore, embedder: HashEmbedder,
                 oracle: Oracle, config: Optional[SimConfig] = None):
        self.store = store
        self.embedder = embedder
        self.oracle = oracle
        self.config = config or SimConfig()

    def start(self, conversation_id: str, initiator: str, targets: list[str],
              context: str, positions: dict, busy: set) -> ConversationState:
        config = self.config
        px = positions[initiator]
        for t in targets:
            tx = positions[t]
            if max(abs(tx[0] - px[0]), abs(tx[1] - px[1])) > config.conversation_radius:
                raise OutOfRange(f"{t} beyond conversation radius")
        for npc in [initiator] + targets:
            if npc in busy:
                raise AlreadyInConversation(npc)
        return ConversationState(
            conversation_id=conversation_id,
            participants=[initiator] + list(targets),
            context=context, max_turns=config.max_turns)

    def join(self, state: ConversationState, npc_id: str, positions: dict) -> None:
        config = self.config
        pos = positions[npc_id]
        near = any(max(abs(positions[p][0] - pos[0]), abs(positions[p][1] - pos[1]))
                   <= config.conversation_radius for p in state.participants)
        if not near:
            raise OutOfRange(npc_id)
        if npc_id not in state.participants:
            state.participants.append(npc_id)

    # -- single step ---------------------------------------------------

    def step(self, state: ConversationState, now: int, names: dict,
             make_plan) -> list[dict]:
        """Advance one phase. `names` maps npc_id -> display name; `make_plan`
        is a callback (proposer, invitees, details) -> Plan registered with
        the world. Returns event dicts."""
        events: list[dict] = []
        if state.phase == "Ended":
            return events
        try:
            if state.phase == "OutlineGeneration":
                self._outline(state, now)
            elif state.phase == "ProposalDetection":
                self._detect(state, now, names)
            elif state.phase == "ProposalDecision":
                events.extend(self._decide(state, now, names, make_plan))
            elif state.phase == "DialogueRefinement":
                events.extend(self._refine(state, now, names))
        except OracleError:
            self.end(state, now, names, events)
        return events

    def _outline(self, state: ConversationState, now: int) -> None:
        memories = []
        for npc in state.participants:
            top = self.store.retrieve(npc, state.context or "recent events",
                                      self.config.poll_top_k, now, self.embedder)
            memories.extend(e.text for e in top)
        resp = self.oracle.complete("conversation_outline", {
            "participants": ", ".join(sorted(state.participants)),
            "context": state.context or "a chance meeting",
            "memories": " | ".join(memories)})
        state.outline = resp.text.strip()
        state.transition("ProposalDetection")

    def _detect(self, state: ConversationState, now: int, names: dict) -> None:
        speaker = poll_next_speaker(state, self.store, self.embedder, now,
                                    self.config)
        context = state.transcript[-1][1] if state.transcript else state.outline
        top = self.store.retrieve(speaker, context or "the conversation",
                                  self.config.poll_top_k, now, self.embedder)
        resp = self.oracle.complete("utterance", {
            "name": names[speaker], "outline": state.outline,
            "transcript": " / ".join(u for _, u, _ in state.transcript[-4:]),
            "memories": " | ".join(e.text for e in top)})
        state.pending_speaker = speaker
        state.pending_utterance = resp.text.strip()
        verdict = self.oracle.complete(
            "proposal_detect", {"utterance": state.pending_utterance}).parsed
        state.transition("ProposalDecision" if verdict == "yes"
                         else "DialogueRefinement")

    def _decide(self, state: ConversationState, now: int, names: dict,
                make_plan) -> list[dict]:
        events = []
        proposer = state.pending_speaker
        invitees = [p for p in state.participants if p != proposer]
        # an unextractable proposal aborts the conversation gracefully
        # (the step() handler turns the error into a normal ending)
        resp = self.oracle.complete("proposal_details", {
            "utterance": state.pending_utterance or "",
            "participants": ", ".join(sorted(state.participants))})
        details = resp.parsed
        plan = make_plan(proposer, invitees, {
            "activity": str(details.get("activity")
                            or state.pending_utterance or "a shared plan"),
            "day_offset": int(details.get("day_offset", 1)),
            "start": int(details.get("start", self.config.plan_default_start)),
            "end": int(details.get("end", self.config.plan_default_end)),
            "location": details.get("location"),
        })
        for invitee in invitees:
            top = self.store.retrieve(invitee, plan.activity,
                                      self.config.poll_top_k, now, self.embedder)
            try:
                decision = self.oracle.complete("plan_decision", {
                    "name": names[invitee], "activity": plan.activity,
                    "traits": "", "memories": " | ".join(e.text for e in top),
                }).parsed
            except OracleError:
                decision = "reject"
            verdict = "accepted" if decision == "accept" else "rejected"
            plan.decisions[invitee] = verdict
            self.store.add(
                invitee, "plan_decision",
                f"I {verdict} the plan to {plan.activity}.",
                now, self.config.importance_by_kind["plan_decision"],
                self.embedder)
            events.append({"kind": "plan_decision", "npc": invitee,
                           "plan": plan.plan_id, "decision": verdict})
        self.store.add(
            proposer, "plan_decision",
            f"I proposed the plan to {plan.activity}.",
            now, self.config.importance_by_kind["plan_decision"], self.embedder)
        if not plan.accepting():
            plan.status = "cancelled"
        events.append({"kind": "plan_proposed", "plan": plan.plan_id,
                       "proposer": proposer, "status": plan.status})
        state.pending_plan = plan.plan_id
        state.transition("DialogueRefinement")
        return events

    def _refine(self, state: ConversationState, now: int, names: dict) -> list[dict]:
        events = []
        if state.pending_utterance is not None:
            state.transcript.append((state.pending_speaker,
                                     state.pending_utterance, now))
            events.append({"kind": "utterance",
                           "conversation": state.conversation_id,
                           "npc": state.pending_speaker,
                           "text": state.pending_utterance})
            state.pending_speaker = None
            state.pending_utterance = None
            state.turn_count += 1
        if state.turn_count >= state.max_turns:
            self.end(state, now, names, events)
            return events
        verdict = self.oracle.complete("dialogue_end", {
            "transcript": " / ".join(u for _, u, _ in state.transcript[-6:])
        }).parsed
        if verdict == "end":
            self.end(state, now, names, events)
        else:
            state.transition("OutlineGeneration")
        return events

    def end(self, state: ConversationState, now: int, names: dict,
            events: list[dict]) -> None:
        """Summaries for every participant (template fallback), then Ended."""
        if state.phase == "Ended":
            return
        transcript_text = " / ".join(
            f"{names.get(s, s)}: {u}" for s, u, _ in state.transcript)
        for npc in state.participants:
            others = ", ".join(names.get(p, p) for p in state.participants
                               if p != npc) or "myself"
            try:
                text = self.oracle.complete("conversation_summary", {
                    "name": names.get(npc, npc),
                    "transcript": transcript_text}).text.strip()
            except OracleError:
                text = (f"I talked with {others}"
                        + (f" about {state.context}" if state.context else "")
                        + ".")
            self.store.add(npc, "conversation_summary", text, now,
                           self.config.importance_by_kind["conversation_summary"],
                           self.embedder)
        state.transition("Ended")
        events.append({"kind": "conversation_ended",
                       "conversation": state.conversation_id,
                       "turns": state.turn_count})


# ---------------------------------------------------------------------------
# plan scheduling

class NoFeasibleDay(PygmalionError):
    pass


def schedule_plan(plan: Plan, routines: dict, ensure_routine, current_day: int,
                  homes: dict, config: Optional[SimConfig] = None) -> int:
    """Place the plan on the earliest designated day with no conflicting
    plan-sourced entry for any accepting participant; inserts an identical
    plan entry into every accepting participant's routine.

    `ensure_routine(npc, day)` returns (creating if needed) that routine.
    Raises NoFeasibleDay when the horizon is exhausted (plan stays buffered).
    """
    config = config or SimConfig()
    participants = sorted(set([plan.proposer] + plan.accepting()))
    if len(participants) < 2:
        plan.status = "cancelled"
        raise NoFeasibleDay("no accepting invitee")

    for offset in range(1, config.plan_horizon_days + 1):
        day = current_day + offset
        conflict = False
        for npc in participants:
            routine = ensure_routine(npc, day)
            for e in routine.entries:
                if e.source.startswith("plan:") and not (
                        e.end <= plan.start or e.start >= plan.end):
                    conflict = True
                    break
            if conflict:
                break
        if conflict:
            continue
        for npc in participants:
            routine = ensure_routine(npc, day)
            insert_entry(routine,
                         RoutineEntry(plan.start, plan.end, plan.location,
                                      plan.activity, source=f"plan:{plan.plan_id}"),
                         config.wake_minute, config.sleep_minute, homes[npc])
        plan.scheduled_day = day
        plan.status = "scheduled"
        return day
    raise NoFeasibleDay(f"no free slot within {config.plan_horizon_days} days")


# ---------------------------------------------------------------------------
# reflection

def reflect(profile, day: int, day_log: list[str], scheduled_plans: list[Plan],
            routines: dict, store: MemoryStore, embedder: HashEmbedder,
            oracle: Oracle, now: int, config: Optional[SimConfig] = None
            ) -> list[dict]:
    """End-of-day synthesis: one insight memory, at most one trait change,
    optional plan withdrawal."""
    config = config or SimConfig()
    events: list[dict] = []
    summary = "; ".join(day_log[:3]) if day_log else "a quiet day"
    try:
        insight = oracle.complete("reflection_insight", {
            "name": profile.name, "day_log": " | ".join(day_log)}).text.strip()
        try:
            importance = float(oracle.complete(
                "reflection_importance", {"insight": insight}).parsed)
        except OracleError:
            importance = 0.6
        trait_changed = False
        try:
            delta = oracle.complete("trait_evolution", {
                "name": profile.name, "traits": ", ".join(profile.traits),
                "insight": insight}).parsed
            add = delta.get("add")
            remove = delta.get("remove")
            # at most one trait change per day
            if add and str(add).strip() and str(add) not in profile.traits \
                    and len(profile.traits) < 6:
                profile.traits.append(str(add).strip())
                profile.evolution_log.append((day, f"+{add}", insight))
                trait_changed = True
            elif remove and str(remove) in profile.traits \
                    and len(profile.traits) > 1:
                profile.traits.remove(str(remove))
                profile.evolution_log.append((day, f"-{remove}", insight))
                trait_changed = True
        except OracleError:
            pass
        if trait_changed:
            events.append({"kind": "trait_change", "npc": profile.npc_id,
                           "change": profile.evolution_log[-1][1]})
    except OracleError:
        insight = f"Today I {summary}."
        importance = 0.6
    entry = store.add(profile.npc_id, "reflection", insight, now,
                      max(0.0, min(1.0, importance)), embedder)
    events.append({"kind": "reflection", "npc": profile.npc_id,
                   "memory": entry.memory_id})

    for plan in scheduled_plans:
        if plan.status != "scheduled" or plan.scheduled_day is None:
            continue
        if plan.scheduled_day <= day:
            continue
        if profile.npc_id not in [plan.proposer] + plan.accepting():
            continue
        try:
            verdict = oracle.complete("plan_reconsider", {
                "name": profile.name, "activity": plan.activity}).parsed
        except OracleError:
            continue
        if verdict == "withdraw":
            routine = routines.get((profile.npc_id, plan.scheduled_day))
            if routine is not None:
                remove_plan_entry(routine, plan.plan_id, config.wake_minute,
                                  config.sleep_minute, profile.home)
            plan.decisions[profile.npc_id] = "rejected"
            store.add(profile.npc_id, "plan_decision",
                      f"I withdrew from the plan to {plan.activity}.",
                      now, config.importance_by_kind["plan_decision"], embedder)
            events.append({"kind": "plan_withdrawal", "npc": profile.npc_id,
                           "plan": plan.plan_id})
    return events
