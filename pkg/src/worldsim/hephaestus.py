"""The built environment: building roster, constraint-checked placement on
horizontal streets, interior layout with furniture, and the road network."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from .config import SimConfig
from .gaia import TerrainGrid
from .routing import NoPath, astar, tsp_route
from .rng import Stream

MIN_BUILDINGS = 5
MAX_BUILDINGS = 30
WALL = -1


class HephaestusError(Exception):
    pass


class PopulationTooLarge(HephaestusError):
    pass


class InsufficientBuildableArea(HephaestusError):
    pass


class DisconnectedSettlement(HephaestusError):
    pass


@dataclass
class BuildingSpec:
    function_tag: str           # residence | workplace | city-hall
    width: int
    height: int
    capacity: int = 0
    description: str = ""
    roles: tuple[str, ...] = ()

    def __post_init__(self):
        if not (2 <= self.width <= 12 and 2 <= self.height <= 12):
            raise ValueError("footprint must be within [2x2, 12x12]")
        if self.function_tag == "residence" and self.capacity < 1:
            raise ValueError("residences need capacity >= 1")


@dataclass
class Building:
    building_id: str
    spec: BuildingSpec
    origin: tuple[int, int]     # top-left tile (x, y)
    name: str = ""
    asset_ref: Optional[str] = None

    @property
    def entrance(self) -> tuple[int, int]:
        # facade is always the downward (player-facing) edge
        ox, oy = self.origin
        return (ox + self.spec.width // 2, oy + self.spec.height - 1)

    @property
    def street_tile(self) -> tuple[int, int]:
        ex, ey = self.entrance
        return (ex, ey + 1)

    def footprint(self) -> list[tuple[int, int]]:
        ox, oy = self.origin
        return [(ox + dx, oy + dy) for dy in range(self.spec.height)
                for dx in range(self.spec.width)]


@dataclass
class Settlement:
    buildings: list[Building]
    street_rows: list[int]
    bounds: tuple[int, int, int, int]  # min_x, min_y, max_x, max_y

    def by_id(self, building_id: str) -> Building:
        for b in self.buildings:
            if b.building_id == building_id:
                return b
        raise KeyError(building_id)


@dataclass
class FurnitureItem:
    furniture_tag: str
    footprint: tuple[int, int]  # (w, h)
    wall_required: bool
    function_tags: list[str]
    description: str


@dataclass
class PlacedFurniture:
    furniture_tag: str
    description: str
    tile: tuple[int, int]       # local (x, y) within the building
    footprint: tuple[int, int]
    asset_ref: Optional[str] = None


@dataclass
class Interior:
    building_id: str
    room_grid: np.ndarray       # (h, w); room index, WALL for wall tiles
    furniture: list[PlacedFurniture]
    door: tuple[int, int]       # local coords on the facade row

    @property
    def room_count(self) -> int:
        return int(self.room_grid.max()) + 1


@dataclass
class RoadNetwork:
    tour: list[str]             # building ids, cyclic order
    segments: list[list[tuple[int, int]]]
    road_tiles: set = field(default_factory=set)


def load_furniture_catalog(path: Optional[str] = None) -> list[FurnitureItem]:
    if path is None:
        raw = resources.files("worldsim.data").joinpath("furniture.json").read_text()
        data = json.loads(raw)
    else:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    if data.get("version") != 1:
        raise ValueError("unsupported furniture catalog version")
    return [FurnitureItem(i["furniture_tag"], tuple(i["footprint"]),
                          i["wall_required"], i["function_tags"],
                          i["description"]) for i in data["items"]]


# ---------------------------------------------------------------------------
# roster

def derive_building_needs(family_plans: list) -> list[BuildingSpec]:
    """One residence per family, one workplace per role group, one civic
    building; padded with filler residences to reach 5, workplace groups
    merged to stay at 30."""
    n_families = len(family_plans)
    roles: list[str] = []
    for plan in family_plans:
        for role in plan.roles:
            if role not in roles:
                roles.append(role)

    min_workplaces = 1 if roles else 0
    if n_families + min_workplaces + 1 > MAX_BUILDINGS:
        raise PopulationTooLarge(
            f"{n_families} families cannot fit within {MAX_BUILDINGS} buildings")

    n_workplaces = min(len(roles), MAX_BUILDINGS - n_families - 1)
    role_groups: list[tuple[str, ...]] = []
    if roles:
        base, extra = divmod(len(roles), n_workplaces)
        cursor = 0
        for i in range(n_workplaces):
            take = base + (1 if i < extra else 0)
            role_groups.append(tuple(roles[cursor:cursor + take]))
            cursor += take

    specs: list[BuildingSpec] = []
    specs.append(BuildingSpec("city-hall", 8, 6, capacity=0,
                              description="city hall"))
    for i, plan in enumerate(family_plans):
        specs.append(BuildingSpec(
            "residence", 5, 4, capacity=max(plan.size, 1),
            description=f"family residence {i}"))
    for group in role_groups:
        specs.append(BuildingSpec(
            "workplace", 6, 5, capacity=0,
            description="workplace of " + ", ".join(group), roles=group))
    while len(specs) < MIN_BUILDINGS:
        specs.append(BuildingSpec("residence", 4, 4, capacity=2,
                                  description="spare residence"))
    assert MIN_BUILDINGS <= len(specs) <= MAX_BUILDINGS
    return specs


# ---------------------------------------------------------------------------
# placement

def _rect_gap(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> int:
    """Chebyshev gap between two tile rectangles (0 = touching/overlap)."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    dx = max(bx0 - ax1 - 1, ax0 - bx1 - 1, 0)
    dy = max(by0 - ay1 - 1, ay0 - by1 - 1, 0)
    return max(dx, dy)


class _Placer:
    def __init__(self, terrain: TerrainGrid, config: SimConfig):
        self.terrain = terrain
        self.config = config
        self.occupied: set[tuple[int, int]] = set()
        self.reserved: set[tuple[int, int]] = set()  # entrance-below tiles
        self.rects: list[tuple[int, int, int, int]] = []

    def fits(self, ox: int, oy: int, w: int, h: int) -> bool:
        t = self.terrain
        if ox < 0 or oy < 0 or ox + w > t.width or oy + h + 1 > t.height:
            return False
        block = t.passable[oy:oy + h, ox:ox + w]
        if not block.all():
            return False
        elev = t.elevation[oy:oy + h, ox:ox + w]
        if float(elev.max() - elev.min()) > self.config.slope_threshold:
            return False
        tiles = [(ox + dx, oy + dy) for dy in range(h) for dx in range(w)]
        if any(tile in self.occupied or tile in self.reserved for tile in tiles):
            return False
        ex, ey = ox + w // 2, oy + h  # street tile below the entrance
        if not t.passable[ey, ex] or (ex, ey) in self.occupied:
            return False
        return True

    def commit(self, ox: int, oy: int, w: int, h: int) -> None:
        for dy in range(h):
            for dx in range(w):
                self.occupied.add((ox + dx, oy + dy))
        self.reserved.add((ox + w // 2, oy + h))
        self.rects.append((ox, oy, ox + w - 1, oy + h - 1))

    def isolation_ok(self, ox, oy, w, h, clearance) -> bool:
        rect = (ox, oy, ox + w - 1, oy + h - 1)
        return all(_rect_gap(rect, other) >= clearance for other in self.rects)


def place_buildings(specs: list[BuildingSpec], terrain: TerrainGrid,
                    stream: Stream, config: Optional[SimConfig] = None) -> Settlement:
    """Greedy row-packing onto horizontal streets; stragglers become
    isolated placements with the configured clearance."""
    config = config or SimConfig()
    placer = _Placer(terrain, config)
    order = sorted(range(len(specs)),
                   key=lambda i: (-specs[i].width * specs[i].height, i))
    pending = deque(order)
    placements: dict[int, tuple[int, int]] = {}
    row_members: dict[int, list[int]] = {}

    max_h = max(s.height for s in specs)
    candidate_rows = list(range(max_h, terrain.height - 1))
    stream.shuffle(candidate_rows)

    rows_tried = 0
    for row in candidate_rows:
        if not pending or rows_tried >= config.placement_retries:
            break
        rows_tried += 1
        cursor = 0
        placed_here: list[int] = []
        for idx in list(pending):
            spec = specs[idx]
            oy = row - spec.height
            if oy < 0:
                continue
            x = cursor
            while x + spec.width <= terrain.width:
                if placer.fits(x, oy, spec.width, spec.height):
                    placer.commit(x, oy, spec.width, spec.height)
                    placements[idx] = (x, oy)
                    placed_here.append(idx)
                    pending.remove(idx)
                    cursor = x + spec.width + 1
                    break
                x += 1
        if placed_here:
            row_members[row] = placed_here

    # a street row with a single building is only legal when isolated;
    # otherwise send that building back through isolated placement
    lonely: list[int] = []
    for row, members in list(row_members.items()):
        if len(members) == 1:
            idx = members[0]
            ox, oy = placements[idx]
            spec = specs[idx]
            rect = (ox, oy, ox + spec.width - 1, oy + spec.height - 1)
            others = [r for r in placer.rects if r != rect]
            if any(_rect_gap(rect, o) < config.isolation_clearance
                   for o in others):
                # unplace
                for dy in range(spec.height):
                    for dx in range(spec.width):
                        placer.occupied.discard((ox + dx, oy + dy))
                placer.reserved.discard((ox + spec.width // 2, oy + spec.height))
                placer.rects.remove(rect)
                del placements[idx]
                del row_members[row]
                lonely.append(idx)

    for idx in list(pending) + lonely:
        if idx in placements:
            continue
        spec = specs[idx]
        placed = False
        for _ in range(400):
            ox = stream.randint(0, max(0, terrain.width - spec.width - 1))
            oy = stream.randint(0, max(0, terrain.height - spec.height - 2))
            if placer.fits(ox, oy, spec.width, spec.height) and \
                    placer.isolation_ok(ox, oy, spec.width, spec.height,
                                        config.isolation_clearance):
                placer.commit(ox, oy, spec.width, spec.height)
                placements[idx] = (ox, oy)
                placed = True
                break
        if not placed:
            raise InsufficientBuildableArea(
                f"could not place {spec.function_tag} ({spec.width}x{spec.height})")

    buildings = []
    for idx in sorted(placements):
        spec = specs[idx]
        buildings.append(Building(
            building_id=f"b{idx}", spec=spec, origin=placements[idx],
            name=spec.description or spec.function_tag))
    xs0 = min(b.origin[0] for b in buildings)
    ys0 = min(b.origin[1] for b in buildings)
    xs1 = max(b.origin[0] + b.spec.width - 1 for b in buildings)
    ys1 = max(b.origin[1] + b.spec.height - 1 for b in buildings)
    return Settlement(buildings=buildings,
                      street_rows=sorted(row_members),
                      bounds=(xs0, ys0, xs1, ys1))


def stamp_buildings(terrain: TerrainGrid, settlement: Settlement) -> None:
    """Make footprints impassable (entrances stay walkable)."""
    for b in settlement.buildings:
        for (x, y) in b.footprint():
            terrain.passable[y, x] = False
            terrain.move_cost[y, x] = np.inf
        ex, ey = b.entrance
        terrain.passable[ey, ex] = True
        terrain.move_cost[ey, ex] = 1.0


def validate_settlement(settlement: Settlement,
                        config: Optional[SimConfig] = None) -> list[str]:
    """Returns a list of violated constraints (empty = valid)."""
    config = config or SimConfig()
    problems = []
    n = len(settlement.buildings)
    if not (MIN_BUILDINGS <= n <= MAX_BUILDINGS):
        problems.append(f"building count {n} outside [5, 30]")
    seen: dict[tuple[int, int], str] = {}
    for b in settlement.buildings:
        for tile in b.footprint():
            if tile in seen:
                problems.append(f"overlap at {tile}: {seen[tile]} vs {b.building_id}")
            seen[tile] = b.building_id
    for b in settlement.buildings:
        ex, ey = b.entrance
        if (ex, ey + 1) in seen:
            problems.append(f"blocked entrance for {b.building_id}")
    # street/isolated dichotomy
    facade_rows: dict[int, list[Building]] = {}
    for b in settlement.buildings:
        facade_rows.setdefault(b.origin[1] + b.spec.height - 1, []).append(b)
    for b in settlement.buildings:
        row = b.origin[1] + b.spec.height - 1
        if len(facade_rows[row]) >= 2:
            continue
        ox, oy = b.origin
        rect = (ox, oy, ox + b.spec.width - 1, oy + b.spec.height - 1)
        for other in settlement.buildings:
            if other is b:
                continue
            o = (other.origin[0], other.origin[1],
                 other.origin[0] + other.spec.width - 1,
                 other.origin[1] + other.spec.height - 1)
            if _rect_gap(rect, o) < config.isolation_clearance:
                problems.append(
                    f"{b.building_id} neither on a shared street nor isolated")
                break
    return problems


# ---------------------------------------------------------------------------
# interiors

def _free_tiles(grid: np.ndarray, furniture: list[PlacedFurniture]) -> np.ndarray:
    blocked = grid == WALL
    for item in furniture:
        fx, fy = item.tile
        fw, fh = item.footprint
        blocked[fy:fy + fh, fx:fx + fw] = True
    return ~blocked


def _reachable(free: np.ndarray, start: tuple[int, int]) -> np.ndarray:
    h, w = free.shape
    seen = np.zeros_like(free)
    sx, sy = start
    if not free[sy, sx]:
        return seen
    queue = deque([(sx, sy)])
    seen[sy, sx] = True
    while queue:
        x, y = queue.popleft()
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if 0 <= nx < w and 0 <= ny < h and free[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                queue.append((nx, ny))
    return seen


def interior_reachability_ok(interior: Interior) -> bool:
    """Every free tile adjacent to furniture must be reachable from the door."""
    grid = interior.room_grid
    free = _free_tiles(grid.copy(), interior.furniture)
    dx, dy = interior.door
    if not free[dy, dx]:
        return False
    seen = _reachable(free, interior.door)
    h, w = grid.shape
    for item in interior.furniture:
        fx, fy = item.tile
        fw, fh = item.footprint
        for yy in range(fy, fy + fh):
            for xx in range(fx, fx + fw):
                for nx, ny in ((xx + 1, yy), (xx - 1, yy), (xx, yy + 1), (xx, yy - 1)):
                    if 0 <= nx < w and 0 <= ny < h and free[ny, nx] \
                            and not seen[ny, nx]:
                        return False
    return True


def layout_interior(building: Building, catalog: list[FurnitureItem],
                    stream: Stream, config: Optional[SimConfig] = None) -> Interior:
    """Axis-aligned wall splits into 1-4 rooms, then wall-first furniture
    placement that never disconnects the interior."""
    config = config or SimConfig()
    w, h = building.spec.width, building.spec.height
    grid = np.zeros((h, w), dtype=np.int32)
    door = (w // 2, h - 1)

    # straight wall splits; each wall consumes one row/column with a door gap
    rects = [(0, 0, w, h)]  # (x, y, w, h)
    splits = stream.randint(0, 3)
    for _ in range(splits):
        rects.sort(key=lambda r: (-(r[2] * r[3]), r[0], r[1]))
        rx, ry, rw, rh = rects[0]
        options = []
        if rw >= 5:
            options.append("v")
        if rh >= 5:
            options.append("h")
        if not options:
            break
        axis = stream.choice(options)
        if axis == "v":
            cut = stream.randint(rx + 2, rx + rw - 3)
            gap = stream.randint(ry, ry + rh - 1)
            for yy in range(ry, ry + rh):
                if yy != gap:
                    grid[yy, cut] = WALL
            rects[0] = (rx, ry, cut - rx, rh)
            rects.append((cut + 1, ry, rx + rw - cut - 1, rh))
        else:
            cut = stream.randint(ry + 2, ry + rh - 3)
            gap = stream.randint(rx, rx + rw - 1)
            for xx in range(rx, rx + rw):
                if xx != gap:
                    grid[cut, xx] = WALL
            rects[0] = (rx, ry, rw, cut - ry)
            rects.append((rx, cut + 1, rw, ry + rh - cut - 1))

    # keep the door tile open
    if grid[door[1], door[0]] == WALL:
        grid[door[1], door[0]] = 0

    # label rooms from the split rectangles (door gaps connect rooms but do
    # not merge them)
    room_grid = np.full((h, w), WALL, dtype=np.int32)
    rects.sort(key=lambda r: (r[1], r[0]))
    for room_id, (rx, ry, rw, rh) in enumerate(rects):
        for yy in range(ry, ry + rh):
            for xx in range(rx, rx + rw):
                if grid[yy, xx] != WALL:
                    room_grid[yy, xx] = room_id
    # door-gap tiles sitting on a wall line belong to an adjacent room
    for yy in range(h):
        for xx in range(w):
            if grid[yy, xx] != WALL and room_grid[yy, xx] == WALL:
                for nx, ny in ((xx + 1, yy), (xx - 1, yy), (xx, yy + 1), (xx, yy - 1)):
                    if 0 <= nx < w and 0 <= ny < h and room_grid[ny, nx] >= 0:
                        room_grid[yy, xx] = room_grid[ny, nx]
                        break

    interior = Interior(building_id=building.building_id, room_grid=room_grid,
                        furniture=[], door=door)

    applicable = [item for item in catalog
                  if building.spec.function_tag in item.function_tags]
    if not applicable:
        return interior

    attempts = max(1, interior.room_count * 3)
    for _ in range(attempts):
        item = stream.choice(applicable)
        fw, fh = item.footprint
        fx = stream.randint(0, max(0, w - fw))
        fy = stream.randint(0, max(0, h - fh))
        tiles = [(fx + dx, fy + dy) for dy in range(fh) for dx in range(fw)]
        free = _free_tiles(room_grid.copy(), interior.furniture)
        if any(room_grid[y, x] == WALL or not free[y, x] for x, y in tiles):
            continue
        if (door[0], door[1]) in tiles:
            continue
        if item.wall_required:
            def against_wall(x, y):
                return (x == 0 or x == w - 1 or y == 0 or y == h - 1
                        or room_grid[y, x - 1] == WALL or room_grid[y, x + 1] == WALL
                        or room_grid[y - 1, x] == WALL or room_grid[y + 1, x] == WALL)
            if not any(against_wall(x, y) for x, y in tiles):
                continue
        candidate = PlacedFurniture(item.furniture_tag, item.description,
                                    (fx, fy), (fw, fh))
        interior.furniture.append(candidate)
        if not interior_reachability_ok(interior):
            interior.furniture.pop()
    return interior


# ---------------------------------------------------------------------------
# roads

def build_roads(settlement: Settlement, terrain: TerrainGrid,
                config: Optional[SimConfig] = None) -> RoadNetwork:
    """TSP tour over entrance street tiles, A* paths between consecutive
    stops, reduced move cost on road tiles."""
    config = config or SimConfig()
    buildings = settlement.buildings
    if len(buildings) <= 1:
        return RoadNetwork(tour=[b.building_id for b in buildings],
                           segments=[], road_tiles=set())

    points = [b.street_tile for b in buildings]
    # distinct points are required by the tour solver; dedupe by nudging is
    # not allowed, so collapse duplicates onto one representative
    unique: dict[tuple[int, int], list[int]] = {}
    for i, p in enumerate(points):
        unique.setdefault(p, []).append(i)
    reps = sorted(unique)  # deterministic order of unique street tiles

    # connectivity check first: all street tiles in one passable component
    comp = _reachable(terrain.passable, reps[0])
    for p in reps:
        if not comp[p[1], p[0]]:
            raise DisconnectedSettlement(
                f"entrance street tile {p} unreachable from {reps[0]}")

    if len(reps) == 1:
        order = []
    else:
        order = tsp_route([(float(x), float(y)) for x, y in reps])

    tour_buildings: list[str] = []
    for idx in (order if order else [0]):
        for bi in unique[reps[idx]]:
            tour_buildings.append(buildings[bi].building_id)

    segments: list[list[tuple[int, int]]] = []
    road_tiles: set[tuple[int, int]] = set()
    if len(reps) >= 2:
        stops = [reps[i] for i in order]
        pairs = list(zip(stops, stops[1:]))
        if len(stops) >= 3:
            pairs.append((stops[-1], stops[0]))
        for a, b in pairs:
            try:
                path, _ = astar(terrain, a, b)
            except NoPath as exc:
                raise DisconnectedSettlement(str(exc)) from exc
            segments.append(path)
            road_tiles.update(path)

    for (x, y) in road_tiles:
        if terrain.passable[y, x]:
            terrain.move_cost[y, x] = terrain.move_cost[y, x] * config.road_cost_factor
    return RoadNetwork(tour=tour_buildings, segments=segments,
                       road_tiles=road_tiles)
