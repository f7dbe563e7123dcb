"""Sprite pipeline: size estimation, semantic retrieval from a curated asset
library, palette/pixel-scale unification, and deterministic background
removal for gradient-backed generated images."""

from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SimConfig
from .oracle import HashEmbedder, Oracle, OracleError, cosine

MANIFEST_VERSION = 1

SIZE_MIN, SIZE_MAX = 1, 64
ALPHA_THRESHOLD = 128


class DaedalusError(Exception):
    pass


class EmptyLibrary(DaedalusError):
    pass


class EmptyPalette(DaedalusError):
    pass


@dataclass
class Sprite:
    """RGBA pixel grid; pixels is a (h, w, 4) uint8 array."""

    pixels: np.ndarray
    palette: Optional[list[tuple[int, int, int]]] = None

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "Sprite":
        return Sprite(self.pixels.copy(),
                      list(self.palette) if self.palette else None)


@dataclass
class LibraryEntry:
    asset_id: str
    image_path: str
    description_text: str
    embedding: np.ndarray
    tags: list[str] = field(default_factory=list)
    native_size: int = 1


@dataclass
class AssetLibrary:
    entries: list[LibraryEntry]

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if entry.asset_id in seen:
                raise ValueError(f"duplicate asset_id {entry.asset_id}")
            seen.add(entry.asset_id)

    def to_json(self) -> dict:
        return {
            "manifest_version": MANIFEST_VERSION,
            "entries": [{
                "asset_id": e.asset_id,
                "image_path": e.image_path,
                "description_text": e.description_text,
                "embedding": [float(v) for v in e.embedding],
                "tags": e.tags,
                "native_size": e.native_size,
            } for e in self.entries],
        }

    @classmethod
    def from_json(cls, data: dict, check_images: bool = False,
                  base_dir: str = ".") -> "AssetLibrary":
        if data.get("manifest_version") != MANIFEST_VERSION:
            raise ValueError("unsupported manifest version")
        entries = []
        for raw in data["entries"]:
            emb = np.asarray(raw["embedding"], dtype=np.float64)
            if abs(float(np.linalg.norm(emb)) - 1.0) > 1e-6:
                raise ValueError(f"embedding for {raw['asset_id']} not unit length")
            if check_images and not os.path.exists(
                    os.path.join(base_dir, raw["image_path"])):
                raise FileNotFoundError(raw["image_path"])
            entries.append(LibraryEntry(
                asset_id=raw["asset_id"], image_path=raw["image_path"],
                description_text=raw["description_text"], embedding=emb,
                tags=raw.get("tags", []),
                native_size=raw.get("native_size", 1)))
        return cls(entries=entries)

    @classmethod
    def load(cls, path: str, check_images: bool = False) -> "AssetLibrary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh), check_images=check_images,
                                 base_dir=os.path.dirname(path) or ".")

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


def estimate_size(description: str, oracle: Oracle,
                  function_tag: str = "", config: Optional[SimConfig] = None) -> int:
    """Tile extent for an asset, clamped to [1, 64]; falls back to the
    per-function default table on oracle failure."""
    if not description:
        raise ValueError("description must be non-empty")
    config = config or SimConfig()
    try:
        resp = oracle.complete("size_estimate", {"description": description})
        return int(min(SIZE_MAX, max(SIZE_MIN, round(float(resp.parsed)))))
    except OracleError:
        return config.default_sizes.get(function_tag, 1)


def retrieve_asset(description: str, library: AssetLibrary,
                   embedder: HashEmbedder) -> str:
    """Most semantically similar entry by cosine; ties break to the
    lexicographically smallest asset_id."""
    if not library.entries:
        raise EmptyLibrary("asset library has no entries")
    query = embedder.embed(description)
    best_id = None
    best_sim = -np.inf
    for entry in library.entries:
        sim = cosine(query, entry.embedding)
        if sim > best_sim or (sim == best_sim and
                              (best_id is None or entry.asset_id < best_id)):
            best_sim = sim
            best_id = entry.asset_id
    return best_id


def unify_sprite(sprite: Sprite, target_size_tiles: int, pixels_per_tile: int,
                 palette: list[tuple[int, int, int]]) -> Sprite:
    """Nearest-neighbor resample into a square target box (aspect preserved,
    letterboxed with transparency), then snap colors to the palette and
    threshold alpha."""
    if pixels_per_tile < 1:
        raise ValueError("pixels_per_tile must be >= 1")
    if not palette:
        raise EmptyPalette("palette must be non-empty")

    target_px = target_size_tiles * pixels_per_tile
    src = sprite.pixels
    sh, sw = src.shape[0], src.shape[1]

    scale = min(target_px / sw, target_px / sh)
    out_w = max(1, int(round(sw * scale)))
    out_h = max(1, int(round(sh * scale)))

    xs = np.minimum((np.arange(out_w) + 0.5) / (out_w / sw), sw - 1).astype(int)
    ys = np.minimum((np.arange(out_h) + 0.5) / (out_h / sh), sh - 1).astype(int)
    resampled = src[ys][:, xs]

    canvas = np.zeros((target_px, target_px, 4), dtype=np.uint8)
    off_x = (target_px - out_w) // 2
    off_y = (target_px - out_h) // 2
    canvas[off_y:off_y + out_h, off_x:off_x + out_w] = resampled

    alpha = canvas[:, :, 3]
    opaque = alpha >= ALPHA_THRESHOLD
    canvas[:, :, 3] = np.where(opaque, 255, 0).astype(np.uint8)

    pal = np.asarray(palette, dtype=np.int64)  # (P, 3)
    rgb = canvas[:, :, :3].astype(np.int64)
    # squared distance to every palette color; argmin takes earliest on ties
    dists = ((rgb[:, :, None, :] - pal[None, None, :, :]) ** 2).sum(axis=3)
    nearest = dists.argmin(axis=2)
    snapped = pal[nearest].astype(np.uint8)
    canvas[:, :, :3] = np.where(opaque[:, :, None], snapped, 0)

    return Sprite(canvas, palette=list(palette))


def extract_palette(sprite: Sprite, max_colors: int = 32
                    ) -> list[tuple[int, int, int]]:
    """The most frequent opaque colors, capped at max_colors; ties break to
    the lexicographically smaller RGB triple."""
    if max_colors < 1:
        raise ValueError("max_colors must be >= 1")
    opaque = sprite.pixels[:, :, 3] >= ALPHA_THRESHOLD
    if not opaque.any():
        raise EmptyPalette("sprite has no opaque pixels")
    colors = sprite.pixels[opaque][:, :3]
    unique, counts = np.unique(colors.reshape(-1, 3), axis=0,
                               return_counts=True)
    order = sorted(range(len(unique)),
                   key=lambda i: (-counts[i], tuple(unique[i])))
    return [tuple(int(c) for c in unique[i]) for i in order[:max_colors]]


def remove_background(sprite: Sprite, tolerance: int = 24) -> Sprite:
    """Flood-fill background removal from the four corners.

    Gradient tolerant: a pixel is background if it deviates at most
    `tolerance` per channel from the average of its already-filled
    8-neighbors (the frontier), so smooth drifts keep filling while hard
    edges stop it. Filled pixels become fully transparent.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    pixels = sprite.pixels.copy()
    h, w = pixels.shape[0], pixels.shape[1]
    rgb = pixels[:, :, :3].astype(np.int64)

    background = np.zeros((h, w), dtype=bool)
    queue: deque[tuple[int, int]] = deque()

    # a corner only seeds the fill if it plausibly sits on background: at
    # least one edge-adjacent border pixel is within tolerance of it
    for cy, cx in ((0, 0), (0, w - 1), (h - 1, 0), (h - 1, w - 1)):
        if background[cy, cx]:
            continue
        neighbors = [(cy, cx + (1 if cx == 0 else -1)),
                     (cy + (1 if cy == 0 else -1), cx)]
        plausible = any(
            0 <= ny < h and 0 <= nx < w
            and np.max(np.abs(rgb[ny, nx] - rgb[cy, cx])) <= tolerance
            for ny, nx in neighbors)
        if plausible:
            background[cy, cx] = True
            queue.append((cy, cx))

    while queue:
        y, x = queue.popleft()
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if not (0 <= ny < h and 0 <= nx < w) or background[ny, nx]:
                continue
            refs = []
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ry, rx = ny + dy, nx + dx
                    if (dy or dx) and 0 <= ry < h and 0 <= rx < w \
                            and background[ry, rx]:
                        refs.append(rgb[ry, rx])
            ref = np.mean(refs, axis=0)
            if np.max(np.abs(rgb[ny, nx] - ref)) <= tolerance:
                background[ny, nx] = True
                queue.append((ny, nx))

    pixels[background, 3] = 0
    return Sprite(pixels, palette=sprite.palette)


def build_manifest(descriptions: list[tuple[str, str, str]],
                   embedder: HashEmbedder) -> AssetLibrary:
    """Build a library manifest from (asset_id, image_path, description)."""
    entries = [LibraryEntry(asset_id=a, image_path=p, description_text=d,
                            embedding=embedder.embed(d))
               for a, p, d in descriptions]
    return AssetLibrary(entries=entries)
