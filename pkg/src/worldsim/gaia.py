"""Natural world generation: noise fields, biome classification, analogical
re-skinning of biomes, and flora placement."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import noise
from .config import SimConfig
from .oracle import Oracle, OracleError
from .rng import Stream

BIOME_TABLE_VERSION = 1

# per-field seed decorrelation salts
ELEVATION_SALT = 0x9E3779B97F4A7C15
PRECIPITATION_SALT = 0xC2B2AE3D27D4EB4F
TEMPERATURE_SALT = 0x165667B19E3779F9


class GaiaError(Exception):
    pass


class UncoveredTriple(GaiaError):
    pass


@dataclass
class WorldSpec:
    seed: int
    description: str = ""
    width: int = 256
    height: int = 256
    sea_level: float = 0.35
    target_population: int = 12
    degrees_cap: int = 4
    day_length: int = 1440

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise ValueError("width and height must be >= 32")
        if self.target_population < 1:
            raise ValueError("target_population must be >= 1")
        if not (0.0 < self.sea_level < 1.0):
            raise ValueError("sea_level must be in (0, 1)")
        if self.degrees_cap < 1:
            raise ValueError("degrees_cap must be >= 1")

    def to_json(self) -> dict:
        return {
            "seed": self.seed, "description": self.description,
            "width": self.width, "height": self.height,
            "sea_level": self.sea_level,
            "target_population": self.target_population,
            "degrees_cap": self.degrees_cap, "day_length": self.day_length,
        }

    @classmethod
    def from_json(cls, data: dict) -> "WorldSpec":
        return cls(**data)


@dataclass
class FloraDescriptor:
    descriptor: str
    density_per_100: float
    analog: Optional[str] = None


@dataclass
class Biome:
    generic_id: str
    elevation_range: tuple[float, float]
    temperature_range: tuple[float, float]
    precipitation_range: tuple[float, float]
    tile_kind: str
    move_cost: Optional[float]  # None = impassable
    flora: list[FloraDescriptor] = field(default_factory=list)
    analog_name: Optional[str] = None

    def matches(self, elevation: float, temperature: float,
                precipitation: float) -> bool:
        return (self.elevation_range[0] <= elevation <= self.elevation_range[1]
                and self.temperature_range[0] <= temperature <= self.temperature_range[1]
                and self.precipitation_range[0] <= precipitation <= self.precipitation_range[1])

    def display_name(self) -> str:
        return self.analog_name or self.generic_id


@dataclass
class BiomeTable:
    """Priority-ordered rule boxes; first match wins. The ocean biome is
    applied by the water rule (elevation < sea_level) ahead of all boxes."""

    biomes: list[Biome]
    ocean_id: str = "ocean"

    def index_of(self, generic_id: str) -> int:
        for i, b in enumerate(self.biomes):
            if b.generic_id == generic_id:
                return i
        raise KeyError(generic_id)

    @property
    def ocean_index(self) -> int:
        return self.index_of(self.ocean_id)

    def check_coverage(self, steps: int = 50) -> None:
        """Every (elevation, temperature, precipitation) triple must match a
        rule box; probed on a steps^3 grid."""
        grid = np.linspace(0.0, 1.0, steps)
        land = [b for b in self.biomes if b.generic_id != self.ocean_id]
        for e in grid:
            for t in grid:
                for p in grid:
                    if not any(b.matches(e, t, p) for b in land):
                        raise UncoveredTriple(f"no rule covers ({e}, {t}, {p})")

    def to_json(self) -> dict:
        return {
            "version": BIOME_TABLE_VERSION,
            "ocean_id": self.ocean_id,
            "biomes": [{
                "generic_id": b.generic_id,
                "elevation_range": list(b.elevation_range),
                "temperature_range": list(b.temperature_range),
                "precipitation_range": list(b.precipitation_range),
                "tile_kind": b.tile_kind,
                "move_cost": b.move_cost,
                "flora": [{"descriptor": f.descriptor,
                           "density_per_100": f.density_per_100,
                           "analog": f.analog} for f in b.flora],
                "analog_name": b.analog_name,
            } for b in self.biomes],
        }

    @classmethod
    def from_json(cls, data: dict) -> "BiomeTable":
        if data.get("version") != BIOME_TABLE_VERSION:
            raise ValueError(f"unsupported biome table version {data.get('version')}")
        biomes = []
        for raw in data["biomes"]:
            biomes.append(Biome(
                generic_id=raw["generic_id"],
                elevation_range=tuple(raw["elevation_range"]),
                temperature_range=tuple(raw["temperature_range"]),
                precipitation_range=tuple(raw["precipitation_range"]),
                tile_kind=raw["tile_kind"],
                move_cost=raw["move_cost"],
                flora=[FloraDescriptor(f["descriptor"], f["density_per_100"],
                                       f.get("analog"))
                       for f in raw.get("flora", [])],
                analog_name=raw.get("analog_name"),
            ))
        return cls(biomes=biomes, ocean_id=data.get("ocean_id", "ocean"))


def default_biome_table() -> BiomeTable:
    raw = resources.files("worldsim.data").joinpath("biomes.json").read_text()
    return BiomeTable.from_json(json.loads(raw))


def load_biome_table(path: str) -> BiomeTable:
    with open(path, encoding="utf-8") as fh:
        return BiomeTable.from_json(json.load(fh))


@dataclass
class TerrainGrid:
    width: int
    height: int
    elevation: np.ndarray       # (h, w) float64 in [0, 1]
    precipitation: np.ndarray
    temperature: np.ndarray
    biome_ids: np.ndarray       # (h, w) int index into table.biomes
    passable: np.ndarray        # (h, w) bool
    move_cost: np.ndarray       # (h, w) float64, inf where impassable


@dataclass
class NaturalObject:
    object_id: str
    position: tuple[int, int]   # (x, y)
    descriptor: str
    asset_ref: Optional[str] = None
    size: int = 1


def generate_fields(spec: WorldSpec, config: Optional[SimConfig] = None) -> dict:
    """Elevation, precipitation and temperature fields, all in [0, 1]."""
    config = config or SimConfig()
    scale = config.noise_scale
    oct_, pers, lac = (config.noise_octaves, config.noise_persistence,
                       config.noise_lacunarity)

    def field01(salt):
        raw = noise.sample_grid(spec.seed ^ salt, spec.width, spec.height,
                                scale, oct_, pers, lac)
        return np.clip((raw + 1.0) / 2.0, 0.0, 1.0)

    elevation = field01(ELEVATION_SALT)
    precipitation = field01(PRECIPITATION_SALT)

    rows = np.arange(spec.height, dtype=np.float64)
    latitude = 1.0 - np.abs(2.0 * rows / (spec.height - 1) - 1.0)
    lapse = config.temperature_lapse * np.maximum(0.0, elevation - spec.sea_level)
    jitter = field01(TEMPERATURE_SALT)
    temperature = np.clip(
        (1.0 - config.temperature_noise_weight) * latitude[:, None]
        + config.temperature_noise_weight * jitter - lapse, 0.0, 1.0)

    return {"elevation": elevation, "precipitation": precipitation,
            "temperature": temperature}


def classify_biomes(spec: WorldSpec, fields: dict,
                    table: BiomeTable) -> TerrainGrid:
    """Assign each tile its first matching biome; water rule first."""
    table.check_coverage(steps=8)  # cheap guard; full grid in tests

    elevation = fields["elevation"]
    temperature = fields["temperature"]
    precipitation = fields["precipitation"]
    h, w = elevation.shape

    biome_ids = np.full((h, w), -1, dtype=np.int32)
    water = elevation < spec.sea_level
    biome_ids[water] = table.ocean_index

    for idx, biome in enumerate(table.biomes):
        if biome.generic_id == table.ocean_id:
            continue
        box = ((biome.elevation_range[0] <= elevation)
               & (elevation <= biome.elevation_range[1])
               & (biome.temperature_range[0] <= temperature)
               & (temperature <= biome.temperature_range[1])
               & (biome.precipitation_range[0] <= precipitation)
               & (precipitation <= biome.precipitation_range[1]))
        biome_ids[(biome_ids == -1) & box] = idx

    if (biome_ids == -1).any():
        y, x = np.argwhere(biome_ids == -1)[0]
        raise UncoveredTriple(
            f"tile ({x},{y}) with (e={elevation[y, x]:.3f}, "
            f"t={temperature[y, x]:.3f}, p={precipitation[y, x]:.3f}) "
            "matched no rule box")

    costs = np.array([np.inf if b.move_cost is None else b.move_cost
                      for b in table.biomes])
    move_cost = costs[biome_ids]
    passable = np.isfinite(move_cost)

    return TerrainGrid(width=w, height=h, elevation=elevation,
                       precipitation=precipitation, temperature=temperature,
                       biome_ids=biome_ids, passable=passable,
                       move_cost=move_cost)


def analogize_biomes(table: BiomeTable, world_description: str,
                     oracle: Oracle) -> tuple[BiomeTable, list[str]]:
    """Re-skin biome and flora names for the described world; rule boxes are
    never touched. Returns (new table, log of fallbacks)."""
    result = copy.deepcopy(table)
    log: list[str] = []
    if not world_description.strip():
        for biome in result.biomes:
            biome.analog_name = biome.generic_id
            for flora in biome.flora:
                flora.analog = flora.descriptor
        return result, log

    for biome in result.biomes:
        try:
            resp = oracle.complete("biome_analogy", {
                "world": world_description, "biome": biome.generic_id})
            biome.analog_name = resp.text.strip() or biome.generic_id
        except OracleError as exc:
            biome.analog_name = biome.generic_id
            log.append(f"biome {biome.generic_id}: fallback to generic ({exc})")
        for flora in biome.flora:
            try:
                resp = oracle.complete("flora_analogy", {
                    "world": world_description, "descriptor": flora.descriptor})
                flora.analog = resp.text.strip() or flora.descriptor
            except OracleError as exc:
                flora.analog = flora.descriptor
                log.append(f"flora {flora.descriptor}: fallback ({exc})")
    return result, log


def place_flora(terrain: TerrainGrid, table: BiomeTable,
                reserved: set[tuple[int, int]], stream: Stream) -> list[NaturalObject]:
    """Density-driven placement of natural objects on free, passable tiles."""
    occupied = set(reserved)
    objects: list[NaturalObject] = []
    counter = 0
    for idx, biome in enumerate(table.biomes):
        if not biome.flora:
            continue
        tiles = np.argwhere((terrain.biome_ids == idx) & terrain.passable)
        biome_tiles = [(int(x), int(y)) for y, x in tiles]
        for flora in biome.flora:
            count = round(flora.density_per_100 * len(biome_tiles) / 100.0)
            if count <= 0:
                continue
            candidates = [t for t in biome_tiles if t not in occupied]
            if not candidates:
                continue
            chosen = stream.sample(candidates, min(count, len(candidates)))
            for pos in chosen:
                occupied.add(pos)
                objects.append(NaturalObject(
                    object_id=f"flora-{counter}", position=pos,
                    descriptor=flora.analog or flora.descriptor))
                counter += 1
    return objects
