import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { FakeService, sampleRecords } from "./fake_service.js";

describe("ApiClient", () => {
  it("round-trips a session", async () => {
    const api = new ApiClient("http://fake", new FakeService().fetch);
    const id = await api.createSession({ layout: sampleRecords() });
    const session = await api.getSession(id);
    expect(session.session_id).toBe(id);
    expect(session.layout).toEqual(sampleRecords());
    const exported = await api.exportLayout(id);
    expect(exported).toEqual(sampleRecords());
  });

  it("maps service errors to ApiError with the body intact", async () => {
    const api = new ApiClient("http://fake", new FakeService().fetch);
    try {
      await api.getSession("missing");
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      const apiError = err as ApiError;
      expect(apiError.status).toBe(404);
      expect(apiError.body.code).toBe("unknown_session");
    }
  });

  it("sends edits with explicit origin", async () => {
    let captured: unknown = null;
    const spy = async (url: string, init?: RequestInit) => {
      captured = JSON.parse(init!.body as string);
      return new Response(JSON.stringify({ relations: {}, conflicts: [], cleared: [] }), {
        status: 200,
      });
    };
    const api = new ApiClient("http://spy", spy);
    await api.patchRelations("x", [{ op: "set", channel: "top", i: 1, j: 2, origin: "human" }]);
    expect(captured).toEqual([{ op: "set", channel: "top", i: 1, j: 2, origin: "human" }]);
  });
});
