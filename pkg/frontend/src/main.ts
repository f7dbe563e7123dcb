/**
 * Browser entry point: wires the client to a canvas tile renderer, an NPC
 * inspector, an event feed, the command console, and the interview panel.
 * Connects to the server URL given as ?server=ws://host:port.
 */

import { SimClient } from "./client.js";
import { findNpc, renderMap, ViewState, clampCamera } from "./view.js";
import { WebSocketTransport } from "./transport.js";

const TILE = 8;
const BIOME_COLORS = [
  "#2d6a4f", "#74c69d", "#b7a269", "#e9d8a6", "#457b9d",
  "#8d99ae", "#606c38", "#d4a373", "#ccd5ae", "#5f6f52",
];

function colorFor(biome: string, index: number): string {
  return BIOME_COLORS[index % BIOME_COLORS.length] ?? "#444";
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const url = params.get("server") ?? "ws://127.0.0.1:7334";
  const client = new SimClient(() => WebSocketTransport.connect(url));
  const welcome = await client.connect();

  const view: ViewState = {
    camera: { x0: 0, y0: 0, x1: welcome.world.width - 1, y1: welcome.world.height - 1 },
    selectedNpc: null,
    activeInterview: null,
  };
  clampCamera(view, welcome.world.width, welcome.world.height);
  await client.subscribeRegion(
    view.camera.x0, view.camera.y0, view.camera.x1, view.camera.y1);
  await client.subscribeEvents();

  const canvas = document.getElementById("map") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const feedList = document.getElementById("feed")!;
  const inspector = document.getElementById("inspector")!;
  const commandInput = document.getElementById("command") as HTMLInputElement;
  const interviewLog = document.getElementById("interview-log")!;
  const interviewInput = document.getElementById(
    "interview-input") as HTMLInputElement;

  function draw(): void {
    if (!client.snapshot) return;
    const grid = renderMap(client.snapshot, client.entities);
    canvas.width = grid[0].length * TILE;
    canvas.height = grid.length * TILE;
    const biomeIndex = new Map(
      client.snapshot.biome_names.map((name, i) => [name, i]));
    for (const row of grid) {
      for (const cell of row) {
        const px = (cell.x - view.camera.x0) * TILE;
        const py = (cell.y - view.camera.y0) * TILE;
        ctx.fillStyle = colorFor(cell.biome, biomeIndex.get(cell.biome) ?? 0);
        if (cell.road) ctx.fillStyle = "#9c6644";
        if (cell.building) ctx.fillStyle = "#6c584c";
        ctx.fillRect(px, py, TILE, TILE);
        if (cell.object) {
          ctx.fillStyle = "#fefae0";
          ctx.fillRect(px + 2, py + 2, TILE - 4, TILE - 4);
        }
        if (cell.npc) {
          ctx.fillStyle = cell.npc === view.selectedNpc ? "#ffd60a" : "#e63946";
          ctx.beginPath();
          ctx.arc(px + TILE / 2, py + TILE / 2, TILE / 2 - 1, 0, Math.PI * 2);
          ctx.fill();
        }
      }
    }
  }

  function refreshFeed(): void {
    feedList.replaceChildren(
      ...client.visibleFeed().slice(-100).map((entry) => {
        const item = document.createElement("li");
        item.textContent =
          `[${entry.tick}] ${entry.kind}: ${JSON.stringify(entry.payload)}`;
        return item;
      }));
  }

  client.onMessage((message) => {
    if (message.type === "delta" || message.type === "snapshot") draw();
    if (message.type === "event") refreshFeed();
    if (message.type === "error") {
      const item = document.createElement("li");
      item.textContent = `error (${message.code}): ${message.message}`;
      item.className = "error";
      feedList.appendChild(item);
    }
  });

  canvas.addEventListener("click", async (event) => {
    const rect = canvas.getBoundingClientRect();
    const tx = Math.floor((event.clientX - rect.left) / TILE) + view.camera.x0;
    const ty = Math.floor((event.clientY - rect.top) / TILE) + view.camera.y0;
    if (!client.snapshot) return;
    const cell = findNpcAt(tx, ty);
    if (cell) {
      view.selectedNpc = cell;
      const summary = await client.subscribeNpc(cell);
      inspector.textContent =
        `${summary.name} (${summary.npc_id})\n` +
        `${summary.family_role} of ${summary.family_id}; ` +
        `traits: ${summary.traits.join(", ")}\n` +
        `now: ${summary.state}\n${summary.lore}`;
      draw();
    }
  });

  function findNpcAt(tx: number, ty: number): string | null {
    for (const entity of client.entities) {
      if (entity.position[0] === tx && entity.position[1] === ty) {
        return entity.npc_id;
      }
    }
    return null;
  }

  commandInput.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && commandInput.value.trim()) {
      client.sendCommand(
        commandInput.value.trim(), view.selectedNpc ?? undefined);
      commandInput.value = "";
    }
  });

  document.getElementById("interview-open")!.addEventListener("click", async () => {
    if (!view.selectedNpc) return;
    if (client.activeInterview) {
      interviewLog.textContent = "close the current interview first";
      return;
    }
    await client.startInterview(view.selectedNpc);
    interviewLog.textContent = `interviewing ${view.selectedNpc}\n`;
  });

  interviewInput.addEventListener("keydown", async (event) => {
    if (event.key === "Enter" && interviewInput.value.trim()) {
      const question = interviewInput.value.trim();
      interviewInput.value = "";
      interviewLog.textContent += `you: ${question}\n`;
      const answer = await client.askInterview(question);
      interviewLog.textContent += `npc: ${answer}\n`;
    }
  });

  document.getElementById("interview-close")!.addEventListener("click", async () => {
    if (!client.activeInterview) return;
    const remember = window.confirm("Should the NPC remember this conversation?");
    await client.endInterview(remember);
    interviewLog.textContent += `(interview closed, remember=${remember})\n`;
  });

  draw();
  refreshFeed();
}

boot().catch((err) => {
  document.body.textContent = `failed to start: ${err}`;
});
