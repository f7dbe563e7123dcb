"""Command-line entry points.

Exit codes: 0 ok, 2 validation error, 3 generation error, 4 IO error.
"""

from __future__ import annotations

import asyncio
import json
import sys

import click
import numpy as np

from . import daedalus, gaia, save as savemod
from .catalog import TEMPLATES, default_script_table
from .config import SimConfig
from .oracle import HashEmbedder, ScriptedOracle, ScriptTable
from .server import SimServer
from .world import GenerationError, generate_world

EXIT_VALIDATION = 2
EXIT_GENERATION = 3
EXIT_IO = 4


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _make_oracle(script_path):
    if script_path:
        try:
            table = ScriptTable.load(script_path)
        except (OSError, json.JSONDecodeError) as exc:
            _fail(EXIT_IO, f"cannot read script table: {exc}")
        except ValueError as exc:
            _fail(EXIT_VALIDATION, str(exc))
    else:
        table = default_script_table()
    return ScriptedOracle(TEMPLATES, table)


def _load_world(path, oracle):
    try:
        return savemod.load_world(path, oracle)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read save: {exc}")
    except savemod.CorruptSave as exc:
        _fail(EXIT_IO, f"corrupt save: {exc}")
    except (savemod.VersionMismatch, savemod.InvariantViolation) as exc:
        _fail(EXIT_VALIDATION, str(exc))


def _write_save(world, path):
    try:
        savemod.save_world(world, path)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot write save: {exc}")


@click.group()
def main():
    """Deterministic described-world simulation."""


@main.command()
@click.option("--seed", type=int, required=True)
@click.option("--desc", default="", help="World description prompt.")
@click.option("--width", type=int, default=256)
@click.option("--height", type=int, default=256)
@click.option("--pop", type=int, default=12, help="Target population.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--script", type=click.Path(exists=False), default=None,
              help="Scripted oracle response table (JSON).")
def generate(seed, desc, width, height, pop, out, script):
    """Generate a world and write its save."""
    oracle = _make_oracle(script)
    try:
        spec = gaia.WorldSpec(seed=seed, description=desc, width=width,
                              height=height, target_population=pop)
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    try:
        world = generate_world(spec, oracle)
    except GenerationError as exc:
        _fail(EXIT_GENERATION, str(exc))
    _write_save(world, out)
    click.echo(json.dumps(world.generation_report, sort_keys=True))


@main.command()
@click.option("--save", "save_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--ticks", type=int, required=True)
@click.option("--script", default=None)
@click.option("--journal", type=click.Path(dir_okay=False), default=None,
              help="Write the oracle request journal as JSONL.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Output save path (default: overwrite input).")
def run(save_path, ticks, script, journal, out):
    """Advance a saved world by a number of ticks."""
    if ticks < 0:
        _fail(EXIT_VALIDATION, "--ticks must be >= 0")
    oracle = _make_oracle(script)
    world = _load_world(save_path, oracle)
    for _ in range(ticks):
        world.tick()
    _write_save(world, out or save_path)
    if journal:
        try:
            with open(journal, "w", encoding="utf-8") as fh:
                for request_id, template_id, shash in oracle.journal:
                    fh.write(json.dumps({
                        "request_id": request_id, "template_id": template_id,
                        "slot_hash": shash}) + "\n")
        except OSError as exc:
            _fail(EXIT_IO, f"cannot write journal: {exc}")
    click.echo(json.dumps({"clock": world.clock,
                           "events": len(world.events)}))


@main.command()
@click.option("--save", "save_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--bind", default="127.0.0.1:7777", help="HOST:PORT")
@click.option("--script", default=None)
@click.option("--tick-rate", type=float, default=10.0,
              help="Simulation ticks per wall-clock second.")
def serve(save_path, bind, script, tick_rate):
    """Serve a saved world to protocol clients."""
    try:
        host, port_text = bind.rsplit(":", 1)
        port = int(port_text)
    except ValueError:
        _fail(EXIT_VALIDATION, f"--bind must be HOST:PORT, got {bind!r}")
    oracle = _make_oracle(script)
    world = _load_world(save_path, oracle)

    async def _run():
        server = SimServer(world, tick_rate)
        await server.start(host, port)
        click.echo(f"serving on {host}:{server.port}")
        await asyncio.Event().wait()

    try:
        asyncio.run(_run())
    except KeyboardInterrupt:
        pass


@main.command()
@click.option("--save", "save_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--npc", "npc_id", default=None)
@click.option("--settlement", is_flag=True)
@click.option("--graph", is_flag=True)
def inspect(save_path, npc_id, settlement, graph):
    """Print details of a saved world."""
    world = _load_world(save_path, _make_oracle(None))
    if npc_id:
        if npc_id not in world.profiles:
            _fail(EXIT_VALIDATION, f"unknown npc {npc_id!r}")
        p = world.profiles[npc_id]
        click.echo(json.dumps({
            "npc_id": npc_id, "name": p.name, "traits": p.traits,
            "home": p.home, "workplace": p.workplace,
            "position": list(p.position), "lore": p.individual_lore,
            "memories": [{"kind": e.kind, "text": e.text,
                          "created_at": e.created_at}
                         for e in world.store.stream(npc_id)],
        }, sort_keys=True, indent=2))
    elif settlement:
        click.echo(json.dumps({
            "buildings": [{
                "building_id": b.building_id, "origin": list(b.origin),
                "size": [b.spec.width, b.spec.height],
                "function": b.spec.function_tag,
                "description": b.spec.description,
            } for b in world.settlement.buildings],
            "street_rows": world.settlement.street_rows,
            "road_tiles": len(world.roads.road_tiles),
        }, sort_keys=True, indent=2))
    elif graph:
        click.echo(json.dumps({
            "relationships": [{"a": r.npc_a, "b": r.npc_b, "kind": r.kind}
                              for r in world.relationships],
        }, sort_keys=True, indent=2))
    else:
        click.echo(json.dumps({
            "seed": world.spec.seed, "description": world.spec.description,
            "clock": world.clock, "population": len(world.profiles),
            "buildings": len(world.settlement.buildings),
        }, sort_keys=True, indent=2))


@main.group()
def assets():
    """Asset library tools."""


def _read_sprite(path) -> daedalus.Sprite:
    from PIL import Image
    try:
        with Image.open(path) as img:
            rgba = np.asarray(img.convert("RGBA"), dtype=np.uint8)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read image: {exc}")
    return daedalus.Sprite(pixels=rgba)


def _write_sprite(sprite: daedalus.Sprite, path) -> None:
    from PIL import Image
    try:
        Image.fromarray(sprite.pixels, "RGBA").save(path)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot write image: {exc}")


@assets.command("build-manifest")
@click.option("--descriptions", "desc_path", required=True,
              type=click.Path(dir_okay=False),
              help='JSON list of {"asset_id", "image_path", "description", '
                   '"tags"?, "native_size"?}.')
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, help="Embedder seed.")
def build_manifest(desc_path, out, seed):
    """Build an asset manifest from a description list."""
    try:
        with open(desc_path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    except json.JSONDecodeError as exc:
        _fail(EXIT_VALIDATION, f"bad descriptions file: {exc}")
    embedder = HashEmbedder(seed=seed, dim=SimConfig().embedding_dim)
    try:
        entries = [daedalus.LibraryEntry(
            asset_id=item["asset_id"], image_path=item["image_path"],
            description_text=item["description"],
            embedding=embedder.embed(item["description"]),
            tags=item.get("tags", []),
            native_size=item.get("native_size", 1)) for item in raw]
        library = daedalus.AssetLibrary(entries=entries)
    except (KeyError, TypeError, ValueError) as exc:
        _fail(EXIT_VALIDATION, f"bad description entry: {exc}")
    try:
        library.save(out)
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"wrote {len(entries)} entries to {out}")


@assets.command()
@click.option("--manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--query", required=True)
@click.option("--seed", type=int, default=0, help="Embedder seed.")
def retrieve(manifest, query, seed):
    """Print the best-matching asset id for a description."""
    try:
        library = daedalus.AssetLibrary.load(manifest)
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    embedder = HashEmbedder(seed=seed, dim=len(library.entries[0].embedding)
                            if library.entries else SimConfig().embedding_dim)
    try:
        click.echo(daedalus.retrieve_asset(query, library, embedder))
    except daedalus.EmptyLibrary as exc:
        _fail(EXIT_VALIDATION, str(exc))


@assets.command()
@click.option("--in", "in_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--size-tiles", type=int, required=True)
@click.option("--pixels-per-tile", type=int, default=16)
def unify(in_path, out, size_tiles, pixels_per_tile):
    """Resample a sprite onto the unified tile grid."""
    sprite = _read_sprite(in_path)
    palette = daedalus.extract_palette(sprite,
                                       SimConfig().palette_max_colors)
    try:
        result = daedalus.unify_sprite(sprite, size_tiles, pixels_per_tile,
                                       palette)
    except (ValueError, daedalus.DaedalusError) as exc:
        _fail(EXIT_VALIDATION, str(exc))
    _write_sprite(result, out)


@assets.command("strip-background")
@click.option("--in", "in_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--tolerance", type=int, default=24)
def strip_background(in_path, out, tolerance):
    """Flood-fill the border background to transparent."""
    sprite = _read_sprite(in_path)
    _write_sprite(daedalus.remove_background(sprite, tolerance), out)


if __name__ == "__main__":
    main()
