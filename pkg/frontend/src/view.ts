/**
 * Headless render model for the tile map. Produces a grid of cells the
 * canvas layer draws one sprite (or labeled placeholder) per cell; keeping
 * this DOM-free makes the render logic testable.
 */

import { Entity, RegionSnapshot, rleDecode } from "./protocol.js";

export interface Cell {
  x: number;
  y: number;
  biome: string;
  road: boolean;
  building: string | null; // building_id
  object: string | null; // object_id
  npc: string | null; // npc_id
  assetRef: string | null; // null renders a labeled placeholder
  label: string | null;
}

export interface ViewState {
  camera: { x0: number; y0: number; x1: number; y1: number };
  selectedNpc: string | null;
  activeInterview: string | null;
}

export function clampCamera(
  view: ViewState,
  worldWidth: number,
  worldHeight: number,
): void {
  const cam = view.camera;
  const w = Math.min(cam.x1 - cam.x0, worldWidth - 1);
  const h = Math.min(cam.y1 - cam.y0, worldHeight - 1);
  cam.x0 = Math.max(0, Math.min(cam.x0, worldWidth - 1 - w));
  cam.y0 = Math.max(0, Math.min(cam.y0, worldHeight - 1 - h));
  cam.x1 = cam.x0 + w;
  cam.y1 = cam.y0 + h;
}

/** Build the drawable cell grid for a snapshot plus the latest entities. */
export function renderMap(
  snapshot: RegionSnapshot,
  entities: Entity[],
): Cell[][] {
  const [x0, y0, x1, y1] = snapshot.region;
  const width = x1 - x0 + 1;
  const height = y1 - y0 + 1;
  const tiles = rleDecode(snapshot.tiles);
  if (tiles.length !== width * height) {
    throw new Error(
      `tile payload has ${tiles.length} tiles for a ${width}x${height} region`,
    );
  }

  const grid: Cell[][] = [];
  for (let y = 0; y < height; y++) {
    const row: Cell[] = [];
    for (let x = 0; x < width; x++) {
      const biomeId = tiles[y * width + x];
      row.push({
        x: x0 + x,
        y: y0 + y,
        biome: snapshot.biome_names[biomeId] ?? `biome ${biomeId}`,
        road: false,
        building: null,
        object: null,
        npc: null,
        assetRef: null,
        label: null,
      });
    }
    grid.push(row);
  }

  const at = (x: number, y: number): Cell | null =>
    x >= x0 && x <= x1 && y >= y0 && y <= y1 ? grid[y - y0][x - x0] : null;

  for (const [rx, ry] of snapshot.roads) {
    const cell = at(rx, ry);
    if (cell) cell.road = true;
  }
  for (const building of snapshot.buildings) {
    const [bx, by] = building.origin;
    for (let dy = 0; dy < building.height; dy++) {
      for (let dx = 0; dx < building.width; dx++) {
        const cell = at(bx + dx, by + dy);
        if (cell) {
          cell.building = building.building_id;
          cell.assetRef = building.asset_ref;
          cell.label = building.asset_ref ? null : building.function;
        }
      }
    }
  }
  for (const object of snapshot.objects) {
    const cell = at(object.position[0], object.position[1]);
    if (cell) {
      cell.object = object.object_id;
      cell.assetRef = object.asset_ref;
      cell.label = object.asset_ref ? null : object.descriptor;
    }
  }
  for (const entity of entities) {
    const cell = at(entity.position[0], entity.position[1]);
    if (cell) {
      cell.npc = entity.npc_id;
      cell.label = entity.name;
    }
  }
  return grid;
}

/** Find the cell currently showing an NPC marker, if it is on screen. */
export function findNpc(grid: Cell[][], npcId: string): Cell | null {
  for (const row of grid) {
    for (const cell of row) {
      if (cell.npc === npcId) return cell;
    }
  }
  return null;
}
