/** Pure canvas-view logic: node records plus a view transform become draw
 * commands. Coordinates always originate from the service; the client never
 * re-lays anything out. */

import { NodeRecord } from "./types.js";

// Fixed category palette, stable for screenshot diffing.
export const CATEGORY_COLORS: Record<string, string> = {
  BACKGROUND: "#9e9e9e",
  IMAGE: "#2196f3",
  TEXT: "#4caf50",
  "SLIDING BAR": "#ff9800",
  ICON: "#9c27b0",
  INPUT: "#f44336",
};

export interface ViewTransform {
  zoom: number;
  panX: number;
  panY: number;
}

export const IDENTITY: ViewTransform = { zoom: 1, panX: 0, panY: 0 };

export interface RectCommand {
  nodeId: number;
  x: number;
  y: number;
  w: number;
  h: number;
  color: string;
  label: string;
  selected: boolean;
  provenance?: "fixed" | "solved" | "inserted";
}

export const PROVENANCE_COLORS = {
  fixed: "#607d8b",
  solved: "#03a9f4",
  inserted: "#e91e63",
} as const;

export function renderLayout(
  records: NodeRecord[],
  transform: ViewTransform,
  selection: Set<number> = new Set(),
  provenance?: Record<string, "fixed" | "solved" | "inserted">,
): RectCommand[] {
  return records.map((record) => {
    const [x, y, w, h] = record.Coordinate;
    const nodeId = Number(record.Node_id);
    return {
      nodeId,
      x: x * transform.zoom + transform.panX,
      y: y * transform.zoom + transform.panY,
      w: w * transform.zoom,
      h: h * transform.zoom,
      color: CATEGORY_COLORS[record.Category] ?? "#000000",
      label: record.Node_id,
      selected: selection.has(nodeId),
      provenance: provenance?.[record.Node_id],
    };
  });
}

/** Selection toggling: at most two nodes stay selected (a relation's pair). */
export function toggleSelection(selection: Set<number>, nodeId: number): Set<number> {
  const next = new Set(selection);
  if (next.has(nodeId)) {
    next.delete(nodeId);
  } else {
    if (next.size >= 2) {
      const oldest = next.values().next().value as number;
      next.delete(oldest);
    }
    next.add(nodeId);
  }
  return next;
}
