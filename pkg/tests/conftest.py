"""Shared fixtures: scripted oracles, flat terrain grids, small worlds."""

from __future__ import annotations

import numpy as np
import pytest

from worldsim.catalog import TEMPLATES, default_script_table
from worldsim.config import SimConfig
from worldsim.gaia import TerrainGrid, WorldSpec
from worldsim.oracle import HashEmbedder, ScriptedOracle, ScriptTable


@pytest.fixture
def config():
    return SimConfig()


@pytest.fixture
def embedder():
    return HashEmbedder(seed=42, dim=64)


@pytest.fixture
def empty_oracle():
    """Every request raises MissingScriptEntry: exercises fallbacks."""
    return ScriptedOracle(TEMPLATES, ScriptTable())


@pytest.fixture
def default_oracle():
    """Per-template defaults keep every pipeline path alive."""
    return ScriptedOracle(TEMPLATES, default_script_table())


def make_flat_terrain(width: int = 64, height: int = 64,
                      move_cost: float = 1.0) -> TerrainGrid:
    """Uniform passable grassland-like grid for layout tests."""
    shape = (height, width)
    costs = np.full(shape, move_cost, dtype=np.float64)
    return TerrainGrid(
        width=width, height=height,
        elevation=np.full(shape, 0.5),
        precipitation=np.full(shape, 0.4),
        temperature=np.full(shape, 0.5),
        biome_ids=np.zeros(shape, dtype=np.int32),
        passable=np.ones(shape, dtype=bool),
        move_cost=costs)


def make_weighted_terrain(rng: np.random.Generator, width: int = 32,
                          height: int = 32,
                          impassable_fraction: float = 0.2) -> TerrainGrid:
    """Random weighted grid for pathfinding tests."""
    shape = (height, width)
    costs = rng.uniform(0.5, 5.0, size=shape)
    blocked = rng.random(shape) < impassable_fraction
    costs[blocked] = np.inf
    return TerrainGrid(
        width=width, height=height,
        elevation=np.full(shape, 0.5),
        precipitation=np.full(shape, 0.4),
        temperature=np.full(shape, 0.5),
        biome_ids=np.zeros(shape, dtype=np.int32),
        passable=~blocked,
        move_cost=costs)


@pytest.fixture
def small_spec():
    return WorldSpec(seed=42, description="a seaside village",
                     width=96, height=96, target_population=10)
