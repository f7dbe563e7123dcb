"""Scored memory streams: recency + importance + relevance retrieval."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SimConfig
from .oracle import HashEmbedder, cosine

KINDS = ("seed", "observation", "conversation_summary", "reflection",
         "plan_decision")


@dataclass
class MemoryEntry:
    memory_id: int
    npc_id: str
    kind: str
    text: str
    created_at: int         # sim-minutes; negative = before world start
    last_access: int
    importance: float
    embedding: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown memory kind {self.kind}")
        if not (0.0 <= self.importance <= 1.0):
            raise ValueError("importance must be in [0, 1]")
        if self.last_access < self.created_at:
            raise ValueError("last_access must be >= created_at")


def score_memory(entry: MemoryEntry, query_embedding: np.ndarray, now: int,
                 config: Optional[SimConfig] = None) -> float:
    """recency + importance + relevance, each weighted (defaults 1)."""
    config = config or SimConfig()
    hours = (now - entry.last_access) / 60.0
    recency = config.recency_decay_per_hour ** hours
    relevance = (1.0 + cosine(query_embedding, entry.embedding)) / 2.0
    return (config.weight_recency * recency
            + config.weight_importance * entry.importance
            + config.weight_relevance * relevance)


@dataclass
class MemoryStore:
    """All NPC memory streams plus the global memory id counter."""

    config: SimConfig = field(default_factory=SimConfig)
    streams: dict = field(default_factory=dict)   # npc_id -> list[MemoryEntry]
    next_id: int = 0

    def stream(self, npc_id: str) -> list[MemoryEntry]:
        return self.streams.setdefault(npc_id, [])

    def add(self, npc_id: str, kind: str, text: str, created_at: int,
            importance: float, embedder: HashEmbedder) -> MemoryEntry:
        entry = MemoryEntry(
            memory_id=self.next_id, npc_id=npc_id, kind=kind, text=text,
            created_at=created_at, last_access=created_at,
            importance=max(0.0, min(1.0, importance)),
            embedding=embedder.embed(text))
        self.next_id += 1
        self.stream(npc_id).append(entry)
        return entry

    def retrieve(self, npc_id: str, query_text: str, k: int, now: int,
                 embedder: HashEmbedder, peek: bool = False) -> list[MemoryEntry]:
        """Top-k by score; ties by newest created_at, then lowest memory_id.
        Returned entries get last_access = now unless peeking."""
        if k < 1:
            raise ValueError("k must be >= 1")
        entries = self.stream(npc_id)
        if not entries:
            return []
        query = embedder.embed(query_text)
        ranked = sorted(
            entries,
            key=lambda e: (-score_memory(e, query, now, self.config),
                           -e.created_at, e.memory_id))
        top = ranked[:k]
        if not peek:
            for entry in top:
                entry.last_access = now
        return top

    def best_score(self, npc_id: str, query_embedding: np.ndarray, now: int,
                   k: int) -> float:
        """Best retrieval score among the top-k candidates (used by the
        conversation polling system); does not touch last_access."""
        entries = self.stream(npc_id)
        if not entries:
            return -np.inf
        scores = sorted(
            (score_memory(e, query_embedding, now, self.config) for e in entries),
            reverse=True)
        return scores[0]
