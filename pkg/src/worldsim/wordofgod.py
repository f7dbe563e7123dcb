"""Player-issued natural language commands and out-of-band NPC interviews.

Commands decompose into typed steps via the oracle; validation is
all-or-nothing so a half-understood command never mutates the world.
Interviews read memories without touching them and leave no trace unless the
interviewee is told to remember the exchange.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .config import SimConfig
from .memory import MemoryStore
from .oracle import HashEmbedder, Oracle, OracleError


class CommandError(Exception):
    pass


class UnparseableCommand(CommandError):
    pass


class UnknownNpc(CommandError):
    pass


class UnknownLocation(CommandError):
    pass


class TargetBusy(CommandError):
    pass


class SessionClosed(Exception):
    pass


# ---------------------------------------------------------------------------
# command steps

@dataclass
class EngageConversation:
    npc_id: str
    targets: list[str]
    intent: str


@dataclass
class ScheduleAction:
    npc_id: str
    start: int
    end: int
    location: str
    activity: str


@dataclass
class ProposePlan:
    npc_id: str
    invitees: list[str]
    day_offset: int
    start: int
    end: int
    location: str
    activity: str


@dataclass
class CustomAction:
    npc_id: str
    activity: str
    location: Optional[str] = None


Step = object  # any of the four dataclasses above

_STEP_KINDS = ("engage_conversation", "schedule_action", "propose_plan",
               "custom_action")


def _resolve_npc(name: str, names_to_ids: dict[str, str]) -> str:
    npc_id = names_to_ids.get(str(name).strip().lower())
    if npc_id is None:
        raise UnknownNpc(str(name))
    return npc_id


def _resolve_location(name, locations: dict[str, str]) -> Optional[str]:
    if name is None:
        return None
    key = str(name).strip().lower()
    if key in locations:
        return locations[key]
    # already a raw id or tile reference
    if key.startswith("tile:") or key in locations.values():
        return str(name).strip()
    raise UnknownLocation(str(name))


def parse_command(text: str, npc_names: dict[str, str],
                  location_names: dict[str, str], oracle: Oracle,
                  config: Optional[SimConfig] = None,
                  default_npc: Optional[str] = None) -> list[Step]:
    """Decompose free text into validated steps.

    npc_names / location_names map display names to ids; matching is
    case-insensitive. Steps without an explicit npc fall back to default_npc
    (a display name or id). Any invalid step rejects the whole command.
    """
    config = config or SimConfig()
    names_to_ids = {n.lower(): i for n, i in npc_names.items()}
    for npc_id in npc_names.values():
        names_to_ids.setdefault(npc_id.lower(), npc_id)
    locations = {n.lower(): i for n, i in location_names.items()}
    try:
        resp = oracle.complete("command_parse", {
            "command": text,
            "npcs": ", ".join(sorted(npc_names)),
            "locations": ", ".join(sorted(location_names))})
        raw_steps = resp.parsed.get("steps")
    except OracleError as exc:
        raise UnparseableCommand(f"{text!r}: {exc}") from exc
    if not isinstance(raw_steps, list) or not raw_steps:
        raise UnparseableCommand(f"{text!r}: no actionable steps")

    steps: list[Step] = []
    for raw in raw_steps:
        if not isinstance(raw, dict):
            raise UnparseableCommand(f"malformed step: {raw!r}")
        if "npc" not in raw and default_npc is not None:
            raw = {**raw, "npc": default_npc}
        kind = raw.get("kind")
        try:
            if kind == "engage_conversation":
                steps.append(EngageConversation(
                    npc_id=_resolve_npc(raw["npc"], names_to_ids),
                    targets=[_resolve_npc(t, names_to_ids)
                             for t in raw.get("targets", [])],
                    intent=str(raw.get("intent", text))))
            elif kind == "schedule_action":
                steps.append(ScheduleAction(
                    npc_id=_resolve_npc(raw["npc"], names_to_ids),
                    start=int(raw["start"]), end=int(raw["end"]),
                    location=_resolve_location(raw.get("location"), locations)
                    or "",
                    activity=str(raw.get("activity", text))))
            elif kind == "propose_plan":
                steps.append(ProposePlan(
                    npc_id=_resolve_npc(raw["npc"], names_to_ids),
                    invitees=[_resolve_npc(t, names_to_ids)
                              for t in raw.get("invitees", [])],
                    day_offset=int(raw.get("day_offset", 1)),
                    start=int(raw.get("start", config.plan_default_start)),
                    end=int(raw.get("end", config.plan_default_end)),
                    location=_resolve_location(raw.get("location"), locations)
                    or "",
                    activity=str(raw.get("activity", text))))
            elif kind == "custom_action":
                steps.append(CustomAction(
                    npc_id=_resolve_npc(raw["npc"], names_to_ids),
                    activity=str(raw.get("activity", text)),
                    location=_resolve_location(raw.get("location"),
                                               locations)))
            else:
                raise UnparseableCommand(f"unknown step kind: {kind!r}")
        except (UnknownNpc, UnknownLocation):
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise UnparseableCommand(f"bad step fields: {raw!r}") from exc
    return steps


# ---------------------------------------------------------------------------
# interviews

@dataclass
class InterviewSession:
    session_id: str
    npc_id: str
    transcript: list[tuple[str, str]] = field(default_factory=list)
    closed: bool = False


class Interviewer:
    """Out-of-band Q&A with an NPC. The session reads memories with peeking
    retrieval, so nothing in the world changes while it is open."""

    def __init__(self, store: MemoryStore, embedder: HashEmbedder,
                 oracle: Oracle, config: Optional[SimConfig] = None):
        self.store = store
        self.embedder = embedder
        self.oracle = oracle
        self.config = config or SimConfig()
        self.sessions: dict[str, InterviewSession] = {}
        self._counter = 0

    def start(self, npc_id: str) -> InterviewSession:
        self._counter += 1
        session = InterviewSession(f"iv{self._counter}", npc_id)
        self.sessions[session.session_id] = session
        return session

    def ask(self, session: InterviewSession, question: str, profile,
            now: int) -> str:
        if session.closed:
            raise SessionClosed(session.session_id)
        memories = self.store.retrieve(session.npc_id, question,
                                       self.config.poll_top_k, now,
                                       self.embedder, peek=True)
        try:
            answer = self.oracle.complete("interview_answer", {
                "name": profile.name, "question": question,
                "memories": " | ".join(e.text for e in memories),
                "profile": profile.individual_lore}).text.strip()
        except OracleError:
            answer = "I'd rather not say."
        session.transcript.append((question, answer))
        return answer

    def end(self, session: InterviewSession, remember: bool, now: int) -> Optional[int]:
        """Close the session. remember=True adds one summary memory (the only
        world-state mutation an interview can make); otherwise no trace."""
        if session.closed:
            raise SessionClosed(session.session_id)
        session.closed = True
        del self.sessions[session.session_id]
        if not remember or not session.transcript:
            return None
        topics = "; ".join(q for q, _ in session.transcript[:3])
        entry = self.store.add(
            session.npc_id, "conversation_summary",
            f"A stranger interviewed me about: {topics}.",
            now, self.config.importance_by_kind["conversation_summary"],
            self.embedder)
        return entry.memory_id
