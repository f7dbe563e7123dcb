"""Tunable simulation constants with shipped defaults.

Everything here is a default the source material leaves open; keeping them in
one dataclass makes runs reproducible and the knobs discoverable.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields


@dataclass
class SimConfig:
    # memory retrieval
    embedding_dim: int = 64
    recency_decay_per_hour: float = 0.995
    weight_recency: float = 1.0
    weight_importance: float = 1.0
    weight_relevance: float = 1.0
    importance_by_kind: dict = field(default_factory=lambda: {
        "seed": 0.5,
        "observation": None,            # filled from urgency
        "conversation_summary": 0.6,
        "reflection": None,             # filled from oracle score
        "plan_decision": 0.7,
    })

    # perception / reaction
    perception_radius: int = 8
    deviation_threshold: float = 0.5
    observation_cooldown_min: int = 30
    urgency_table: dict = field(default_factory=lambda: {
        "burning": 0.9,
        "conversation": 0.4,
        "routine": 0.1,
        "idle": 0.1,
    })

    # conversations
    conversation_radius: int = 3
    max_turns: int = 12
    poll_top_k: int = 3

    # routines and plans
    wake_minute: int = 420     # 07:00
    sleep_minute: int = 1320   # 22:00
    plan_horizon_days: int = 7
    plan_default_start: int = 1080  # 18:00, evenings preferred
    plan_default_end: int = 1200

    # terrain
    noise_scale: float = 1.0 / 32.0
    noise_octaves: int = 4
    noise_persistence: float = 0.5
    noise_lacunarity: float = 2.0
    temperature_lapse: float = 0.6
    temperature_noise_weight: float = 0.1

    # settlement
    slope_threshold: float = 0.08
    isolation_clearance: int = 6
    placement_retries: int = 50
    road_cost_factor: float = 0.5

    # population
    family_size_weights: dict = field(default_factory=lambda: {
        1: 2.0, 2: 3.0, 3: 3.0, 4: 2.0, 5: 1.0,
    })
    fallback_roles: list = field(default_factory=lambda: [
        "farmer", "merchant", "blacksmith", "teacher", "healer",
    ])
    fallback_traits: list = field(default_factory=lambda: [
        "curious", "practical", "cheerful", "stubborn", "patient",
        "bold", "thoughtful", "chatty", "reserved", "generous",
    ])

    # assets
    palette_max_colors: int = 32
    background_tolerance: int = 24
    pixels_per_tile: int = 16
    default_sizes: dict = field(default_factory=lambda: {
        "tree": 2, "chair": 1, "table": 1, "bed": 2, "residence": 6,
        "workplace": 6, "city-hall": 8, "flora": 1,
    })

    # clock
    sim_minutes_per_tick: int = 1
    move_tiles_per_tick: int = 1

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        config = cls(**kwargs)
        # JSON stringifies int keys
        config.family_size_weights = {
            int(k): float(v) for k, v in config.family_size_weights.items()}
        return config
