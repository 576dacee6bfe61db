import { describe, expect, it } from "vitest";

import { CATEGORY_COLORS, IDENTITY, renderLayout, toggleSelection } from "../src/render.js";
import { NodeRecord } from "../src/types.js";

const published: NodeRecord = {
  Node_id: "1",
  Category: "SLIDING BAR",
  Coordinate: [1, 33, 172, 208],
  Top: [3, 5, 6, 7, 9, 10, 11],
  Left: [2, 3, 4],
  Parallel: [7, 9],
  Contain: [],
};

describe("renderLayout", () => {
  it("matches service pixel coordinates exactly under identity zoom", () => {
    const [rect] = renderLayout([published], IDENTITY);
    expect([rect.x, rect.y, rect.w, rect.h]).toEqual([1, 33, 172, 208]);
    expect(rect.label).toBe("1");
  });

  it("applies zoom and pan without reordering", () => {
    const [rect] = renderLayout([published], { zoom: 2, panX: 10, panY: -5 });
    expect([rect.x, rect.y, rect.w, rect.h]).toEqual([12, 61, 344, 416]);
  });

  it("uses the fixed category palette", () => {
    expect(CATEGORY_COLORS["BACKGROUND"]).toBe("#9e9e9e");
    expect(CATEGORY_COLORS["SLIDING BAR"]).toBe("#ff9800");
    const [rect] = renderLayout([published], IDENTITY);
    expect(rect.color).toBe("#ff9800");
  });

  it("tags provenance for generated nodes", () => {
    const [rect] = renderLayout([published], IDENTITY, new Set(), { "1": "inserted" });
    expect(rect.provenance).toBe("inserted");
  });
});

describe("toggleSelection", () => {
  it("keeps at most two nodes selected", () => {
    let selection = new Set<number>();
    selection = toggleSelection(selection, 1);
    selection = toggleSelection(selection, 2);
    selection = toggleSelection(selection, 3);
    expect(selection.size).toBe(2);
    expect(selection.has(3)).toBe(true);
    expect(selection.has(1)).toBe(false);
  });

  it("deselects on repeat", () => {
    let selection = new Set<number>([4]);
    selection = toggleSelection(selection, 4);
    expect(selection.size).toBe(0);
  });
});
