"""Population weaving: family plans, lore and profiles, seed-memory
relationships, and the connectedness-bounded social graph."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .config import SimConfig
from .gaia import WorldSpec
from .memory import MemoryStore
from .oracle import HashEmbedder, Oracle, OracleError
from .rng import Stream

SEED_MEMORY_TIME = -1440  # the day before the world starts


class MoiraError(Exception):
    pass


@dataclass
class FamilyPlan:
    size: int
    roles: tuple[str, ...]  # one workplace role per adult


@dataclass
class FamilyLore:
    family_id: str
    surname: str
    background: str
    residence: Optional[str] = None
    member_ids: list[str] = field(default_factory=list)


@dataclass
class NpcProfile:
    npc_id: str
    name: str
    family_id: str
    family_role: str            # parent | child | adult
    individual_lore: str
    traits: list[str]
    workplace: Optional[str] = None
    workplace_role: Optional[str] = None
    home: Optional[str] = None
    position: tuple[int, int] = (0, 0)
    evolution_log: list = field(default_factory=list)  # (day, change, insight)

    def is_adult(self) -> bool:
        return self.family_role in ("parent", "adult")


@dataclass
class Relationship:
    npc_a: str
    npc_b: str
    kind: str  # family | coworker | acquaintance | emergent
    seed_memory_refs: list[int] = field(default_factory=list)

    def pair(self) -> tuple[str, str]:
        return tuple(sorted((self.npc_a, self.npc_b)))


def _name_pools():
    raw = resources.files("worldsim.data").joinpath("names.json").read_text()
    data = json.loads(raw)
    return data["first_names"], data["surnames"]


def plan_families(spec: WorldSpec, oracle: Oracle, stream: Stream,
                  config: Optional[SimConfig] = None) -> list[FamilyPlan]:
    """Family sizes summing exactly to the target population, with a
    workplace role drawn for every adult."""
    config = config or SimConfig()
    try:
        resp = oracle.complete("workplace_roles", {"world": spec.description})
        roles = [str(r) for r in resp.parsed.get("roles", []) if str(r).strip()]
        if not roles:
            raise OracleError("empty role list")
    except OracleError:
        roles = list(config.fallback_roles)

    sizes = []
    remaining = spec.target_population
    weights = config.family_size_weights
    options = sorted(weights)
    while remaining > 0:
        size = stream.weighted_choice(options, [weights[o] for o in options])
        size = min(size, remaining)
        sizes.append(size)
        remaining -= size

    plans = []
    for size in sizes:
        adults = 1 if size == 1 else 2
        plans.append(FamilyPlan(
            size=size,
            roles=tuple(stream.choice(roles) for _ in range(adults))))
    assert sum(p.size for p in plans) == spec.target_population
    return plans


def generate_lore(plans: list[FamilyPlan], spec: WorldSpec, oracle: Oracle,
                  stream: Stream, config: Optional[SimConfig] = None
                  ) -> tuple[list[FamilyLore], dict[str, NpcProfile]]:
    """Surnames, names, family background, per-member lore and traits.

    Names come from seeded pools so they stay unique even when every oracle
    call hits the same default script entry; the oracle supplies prose."""
    config = config or SimConfig()
    first_pool, surname_pool = _name_pools()
    surnames = list(surname_pool)
    stream.shuffle(surnames)
    firsts = list(first_pool)
    stream.shuffle(firsts)

    def take_surname(i):
        if i < len(surnames):
            return surnames[i]
        return f"{surnames[i % len(surnames)]}{i // len(surnames) + 1}"

    name_cursor = 0

    def take_first():
        nonlocal name_cursor
        if name_cursor < len(firsts):
            name = firsts[name_cursor]
        else:
            name = f"{firsts[name_cursor % len(firsts)]}{name_cursor // len(firsts) + 1}"
        name_cursor += 1
        return name

    families: list[FamilyLore] = []
    profiles: dict[str, NpcProfile] = {}
    npc_counter = 0

    for fi, plan in enumerate(plans):
        surname = take_surname(fi)
        member_names = [take_first() for _ in range(plan.size)]
        roles = []
        for mi in range(plan.size):
            if plan.size == 1:
                roles.append("adult")
            elif mi < 2:
                roles.append("parent")
            else:
                roles.append("child")

        try:
            resp = oracle.complete("family_lore", {
                "world": spec.description, "surname": surname,
                "members": ", ".join(member_names)})
            background = resp.text.strip()
        except OracleError:
            background = (f"The {surname} family ({', '.join(member_names)}) "
                          f"settled here long ago.")

        family = FamilyLore(family_id=f"fam{fi}", surname=surname,
                            background=background)
        adult_i = 0
        for name, family_role in zip(member_names, roles):
            npc_id = f"npc{npc_counter}"
            npc_counter += 1
            lore = ""
            traits: list[str] = []
            try:
                resp = oracle.complete("member_profile", {
                    "world": spec.description, "surname": surname,
                    "name": name, "role": family_role})
                lore = str(resp.parsed.get("lore", "")).strip()
                traits = [str(t).strip() for t in resp.parsed.get("traits", [])
                          if str(t).strip()]
            except OracleError:
                pass
            if not lore:
                lore = f"{name}, a {family_role} of the {surname} family."
            # dedupe, clamp to [3, 6], padding from the fallback pool
            seen = []
            for t in traits:
                if t not in seen:
                    seen.append(t)
            traits = seen[:6]
            pool = [t for t in config.fallback_traits if t not in traits]
            while len(traits) < 3:
                traits.append(pool.pop(stream.randint(0, len(pool) - 1)))
            role = None
            if family_role in ("parent", "adult"):
                role = plan.roles[min(adult_i, len(plan.roles) - 1)]
                adult_i += 1
            profiles[npc_id] = NpcProfile(
                npc_id=npc_id, name=name, family_id=family.family_id,
                family_role=family_role, individual_lore=lore, traits=traits,
                workplace_role=role)
            family.member_ids.append(npc_id)
        families.append(family)
    return families, profiles


def _seed_memory(oracle: Oracle, template: str, slots: dict, token: str,
                 fallback: str) -> str:
    """Oracle-written seed memory; falls back to the template text whenever
    the oracle fails or omits the required shared-context token."""
    try:
        text = oracle.complete(template, slots).text.strip()
        if token.lower() in text.lower():
            return text
    except OracleError:
        pass
    return fallback


def seed_relationships(families: list[FamilyLore],
                       profiles: dict[str, NpcProfile],
                       workplace_names: dict[str, str],
                       oracle: Oracle, store: MemoryStore,
                       embedder: HashEmbedder) -> list[Relationship]:
    """Family cliques and coworker edges, each with one reciprocal pair of
    seed memories referencing the shared context."""
    relationships: dict[tuple[str, str], Relationship] = {}

    def connect(a: str, b: str, kind: str, texts: tuple[str, str]):
        key = tuple(sorted((a, b)))
        if key in relationships:
            return
        rel = Relationship(npc_a=key[0], npc_b=key[1], kind=kind)
        for npc, text in ((a, texts[0]), (b, texts[1])):
            entry = store.add(npc, "seed", text, SEED_MEMORY_TIME, 0.5, embedder)
            rel.seed_memory_refs.append(entry.memory_id)
        relationships[key] = rel

    for family in families:
        members = family.member_ids
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                a, b = members[i], members[j]
                na, nb = profiles[a].name, profiles[b].name
                surname = family.surname
                text_a = _seed_memory(
                    oracle, "seed_memory_family",
                    {"name": na, "other": nb, "surname": surname}, surname,
                    f"I remember growing up beside {nb} in the {surname} family.")
                text_b = _seed_memory(
                    oracle, "seed_memory_family",
                    {"name": nb, "other": na, "surname": surname}, surname,
                    f"I remember growing up beside {na} in the {surname} family.")
                connect(a, b, "family", (text_a, text_b))

    by_workplace: dict[str, list[str]] = {}
    for npc_id, profile in profiles.items():
        if profile.workplace:
            by_workplace.setdefault(profile.workplace, []).append(npc_id)
    for workplace, members in sorted(by_workplace.items()):
        wname = workplace_names.get(workplace, workplace)
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                a, b = members[i], members[j]
                if tuple(sorted((a, b))) in relationships:
                    continue  # family members sharing a workplace stay family
                na, nb = profiles[a].name, profiles[b].name
                text_a = _seed_memory(
                    oracle, "seed_memory_work",
                    {"name": na, "other": nb, "workplace": wname}, wname,
                    f"I often work alongside {nb} at {wname}.")
                text_b = _seed_memory(
                    oracle, "seed_memory_work",
                    {"name": nb, "other": na, "workplace": wname}, wname,
                    f"I often work alongside {na} at {wname}.")
                connect(a, b, "coworker", (text_a, text_b))
    return list(relationships.values())


def _distances(adjacency: dict[str, set], start: str) -> dict[str, int]:
    dist = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nb in adjacency[node]:
            if nb not in dist:
                dist[nb] = dist[node] + 1
                queue.append(nb)
    return dist


def graph_diameter(nodes: list[str], relationships: list[Relationship]) -> float:
    """All-pairs BFS diameter; inf when disconnected."""
    adjacency = {n: set() for n in nodes}
    for rel in relationships:
        adjacency[rel.npc_a].add(rel.npc_b)
        adjacency[rel.npc_b].add(rel.npc_a)
    worst = 0
    for node in nodes:
        dist = _distances(adjacency, node)
        if len(dist) < len(nodes):
            return float("inf")
        worst = max(worst, max(dist.values()))
    return float(worst)


def ensure_connectedness(relationships: list[Relationship],
                         profiles: dict[str, NpcProfile],
                         degrees_cap: int, oracle: Oracle,
                         store: MemoryStore, embedder: HashEmbedder
                         ) -> list[Relationship]:
    """Add acquaintance edges (with justifying seed memories) until the graph
    is connected with diameter <= degrees_cap."""
    nodes = sorted(profiles)
    adjacency = {n: set() for n in nodes}
    pairs = {rel.pair() for rel in relationships}
    for rel in relationships:
        adjacency[rel.npc_a].add(rel.npc_b)
        adjacency[rel.npc_b].add(rel.npc_a)

    def commonality(a: str, b: str) -> Optional[str]:
        pa, pb = profiles[a], profiles[b]
        if pa.workplace_role and pa.workplace_role == pb.workplace_role:
            return f"both working as {pa.workplace_role}s"
        if pa.home and pb.home and pa.home == pb.home:
            return "living under the same roof"
        return None

    guard = len(nodes) * len(nodes) + 1
    while guard > 0:
        guard -= 1
        all_dist = {n: _distances(adjacency, n) for n in nodes}
        disconnected: list[tuple[str, str]] = []
        far: list[tuple[str, str]] = []
        worst = 0
        for a in nodes:
            for b in nodes:
                if a >= b or (a, b) in pairs:
                    continue
                d = all_dist[a].get(b)
                if d is None:
                    disconnected.append((a, b))
                elif d > worst:
                    worst = d
                    far = [(a, b)]
                elif d == worst:
                    far.append((a, b))
        if disconnected:
            worst_pairs = disconnected
        elif worst > degrees_cap:
            worst_pairs = far
        else:
            break
        if not worst_pairs:
            break
        preferred = [p for p in worst_pairs if commonality(*p)]
        a, b = sorted(preferred or worst_pairs)[0]
        shared = commonality(a, b) or "life in the same settlement"
        na, nb = profiles[a].name, profiles[b].name
        text_a = _seed_memory(
            oracle, "seed_memory_acquaintance",
            {"name": na, "other": nb, "commonality": shared}, shared,
            f"I once met {nb}; we bonded over {shared}.")
        text_b = _seed_memory(
            oracle, "seed_memory_acquaintance",
            {"name": nb, "other": na, "commonality": shared}, shared,
            f"I once met {na}; we bonded over {shared}.")
        rel = Relationship(npc_a=a, npc_b=b, kind="acquaintance")
        for npc, text in ((a, text_a), (b, text_b)):
            entry = store.add(npc, "seed", text, SEED_MEMORY_TIME, 0.5, embedder)
            rel.seed_memory_refs.append(entry.memory_id)
        relationships.append(rel)
        pairs.add((a, b))
        adjacency[a].add(b)
        adjacency[b].add(a)
    return relationships
