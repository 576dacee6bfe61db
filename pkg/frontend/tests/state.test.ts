import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { EditorStore } from "../src/state.js";
import { FakeService, sampleRecords } from "./fake_service.js";

let store: EditorStore;

beforeEach(() => {
  store = new EditorStore(new ApiClient("http://fake", new FakeService().fetch));
});

describe("loading", () => {
  it("adopts the server session wholesale", async () => {
    const view = await store.loadFromDocument(sampleRecords());
    expect(view.records).toEqual(sampleRecords());
    expect(view.canvas).toEqual([1440, 2560]);
    expect(view.conflicts).toEqual([]);
    expect(view.generationDisabled).toBe(false);
  });

  it("surfaces unknown corpus ids verbatim", async () => {
    await expect(store.loadFromCorpus("nope")).rejects.toSatisfy(
      (err: unknown) => err instanceof ApiError && err.status === 404,
    );
  });
});

describe("editing", () => {
  it("matrix state always equals the last server response", async () => {
    await store.loadFromDocument(sampleRecords());
    const view = await store.toggleRelation("parallel", 2, 3); // clears existing pair
    expect(view.grid.cellState("parallel", 2, 3)).toBe("off");
    expect(view.grid.cellState("parallel", 3, 2)).toBe("off");
    const again = await store.toggleRelation("parallel", 2, 3); // sets it back, human
    expect(again.grid.cellState("parallel", 2, 3)).toBe("human");
    expect(again.grid.cellState("parallel", 3, 2)).toBe("human");
  });

  it("reports cleared machine entries for flashing", async () => {
    await store.loadFromDocument(sampleRecords());
    await store.toggleRelation("top", 3, 2); // contradicts machine top (2, 3)
    const flashes = store.drainFlashes();
    expect(flashes).toEqual([{ channel: "top", i: 2, j: 3 }]);
    expect(store.drainFlashes()).toEqual([]); // drained
  });

  it("human cells survive a refresh", async () => {
    await store.loadFromDocument(sampleRecords());
    await store.toggleRelation("top", 3, 2);
    const view = await store.refresh();
    expect(view.grid.cellState("top", 3, 2)).toBe("human");
    expect(view.grid.cellState("top", 2, 3)).toBe("off");
  });

  it("disables generation while conflicts exist", async () => {
    await store.loadFromDocument(sampleRecords());
    await store.toggleRelation("contain", 2, 3);
    const view = await store.toggleRelation("contain", 3, 2); // human-vs-human cycle
    expect(view.conflicts.length).toBeGreaterThan(0);
    expect(view.generationDisabled).toBe(true);
    await expect(store.regenerate("solver", 1)).rejects.toThrow(/disabled/);
  });
});

describe("regeneration", () => {
  it("keeps before and after views with provenance", async () => {
    await store.loadFromDocument(sampleRecords());
    const outcome = await store.regenerate("solver", 7, 2);
    expect(outcome.before).toEqual(sampleRecords());
    expect(outcome.after.length).toBe(sampleRecords().length + 2);
    const inserted = Object.values(outcome.report).filter((v) => v === "inserted");
    expect(inserted.length).toBeLessThanOrEqual(2);
    expect(outcome.displayedRelationError).toBe(0);
  });
});
