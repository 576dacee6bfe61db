/** Thin DOM adapters: paint draw commands onto a canvas and build the
 * four-channel matrix grid. Logic stays in render.ts / state.ts. */

import { RectCommand, PROVENANCE_COLORS } from "./render.js";
import { CellState, RelationGrid } from "./relations.js";
import { CHANNELS, ChannelName, ConflictWire } from "./types.js";

export function paint(ctx: CanvasRenderingContext2D, commands: RectCommand[], scale = 0.25) {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  for (const cmd of commands) {
    ctx.strokeStyle = cmd.provenance ? PROVENANCE_COLORS[cmd.provenance] : cmd.color;
    ctx.lineWidth = cmd.selected ? 3 : 1;
    ctx.fillStyle = cmd.color + "33";
    ctx.fillRect(cmd.x * scale, cmd.y * scale, cmd.w * scale, cmd.h * scale);
    ctx.strokeRect(cmd.x * scale, cmd.y * scale, cmd.w * scale, cmd.h * scale);
    ctx.fillStyle = "#111";
    ctx.font = "11px sans-serif";
    ctx.fillText(cmd.label, cmd.x * scale + 3, cmd.y * scale + 12);
  }
}

const CELL_CLASS: Record<CellState, string> = {
  off: "cell off",
  machine: "cell machine",
  human: "cell human",
};

export function buildMatrixGrid(
  root: HTMLElement,
  grid: RelationGrid,
  conflicts: ConflictWire[],
  onToggle: (channel: ChannelName, i: number, j: number) => void,
) {
  root.innerHTML = "";
  const conflicted = new Set(
    conflicts.flatMap((c) => c.nodes.map((node) => `${c.channel}:${node}`)),
  );
  for (const channel of CHANNELS) {
    const section = document.createElement("section");
    const title = document.createElement("h3");
    title.textContent = channel.toUpperCase();
    section.appendChild(title);
    const table = document.createElement("table");
    for (let i = 1; i <= grid.n; i++) {
      const row = document.createElement("tr");
      for (let j = 1; j <= grid.n; j++) {
        const cell = document.createElement("td");
        if (i !== j) {
          cell.className = CELL_CLASS[grid.cellState(channel, i, j)];
          if (conflicted.has(`${channel}:${i}`) && conflicted.has(`${channel}:${j}`)) {
            cell.className += " conflict";
          }
          cell.onclick = () => onToggle(channel, i, j);
        } else {
          cell.className = "cell diagonal";
        }
        row.appendChild(cell);
      }
      table.appendChild(row);
    }
    section.appendChild(table);
    root.appendChild(section);
  }
}
