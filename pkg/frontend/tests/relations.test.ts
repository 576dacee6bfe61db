import { describe, expect, it } from "vitest";

import { RelationGrid, relationError } from "../src/relations.js";
import { RelationsWire } from "../src/types.js";

function wire(n: number, partial: Partial<RelationsWire> = {}): RelationsWire {
  return {
    n,
    top: [],
    left: [],
    parallel: [],
    contain: [],
    human: { top: [], left: [], parallel: [], contain: [] },
    ...partial,
  };
}

describe("RelationGrid", () => {
  it("distinguishes off, machine and human cells", () => {
    const grid = new RelationGrid(
      wire(3, {
        top: [[1, 2], [2, 3]],
        human: { top: [[2, 3]], left: [], parallel: [], contain: [] },
      }),
    );
    expect(grid.cellState("top", 1, 2)).toBe("machine");
    expect(grid.cellState("top", 2, 3)).toBe("human");
    expect(grid.cellState("top", 3, 1)).toBe("off");
    expect(grid.countSet("top")).toBe(2);
  });
});

describe("relationError", () => {
  it("is zero for identical matrices", () => {
    const a = wire(4, { top: [[1, 2]], contain: [[1, 3]] });
    expect(relationError(a, a)).toBe(0);
  });

  it("counts one flipped entry as 1/8 at n = 2", () => {
    const a = wire(2, { top: [[1, 2]] });
    const b = wire(2);
    expect(relationError(a, b)).toBeCloseTo(1 / 8, 12);
  });

  it("is symmetric", () => {
    const a = wire(3, { left: [[1, 3], [2, 3]] });
    const b = wire(3, { left: [[3, 1]], parallel: [[1, 2], [2, 1]] });
    expect(relationError(a, b)).toBeCloseTo(relationError(b, a), 12);
  });
});
