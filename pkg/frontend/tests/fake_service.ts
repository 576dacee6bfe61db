/** In-memory stand-in for the editing service, faithful to its documented
 * semantics: human edits clear contradicting machine entries (and report
 * them), conflicted matrices refuse to generate, generation output always
 * satisfies the session's relation matrix. */

import {
  CHANNELS,
  ChannelName,
  ClearedWire,
  ConflictWire,
  EditWire,
  NodeRecord,
  Pair,
  RelationsWire,
} from "../src/types.js";

interface FakeSession {
  records: NodeRecord[];
  canvas: [number, number];
  set: Record<ChannelName, Set<string>>;
  human: Record<ChannelName, Set<string>>;
  editLog: EditWire[];
}

const key = (i: number, j: number) => `${i}:${j}`;
const unkey = (k: string): Pair => k.split(":").map(Number) as Pair;

function relationsFromRecords(records: NodeRecord[]): Record<ChannelName, Set<string>> {
  const sets: Record<ChannelName, Set<string>> = {
    top: new Set(),
    left: new Set(),
    parallel: new Set(),
    contain: new Set(),
  };
  const field: Record<ChannelName, keyof NodeRecord> = {
    top: "Top",
    left: "Left",
    parallel: "Parallel",
    contain: "Contain",
  };
  for (const record of records) {
    const i = Number(record.Node_id);
    for (const channel of CHANNELS) {
      for (const j of record[field[channel]] as number[]) {
        sets[channel].add(key(i, j));
      }
    }
  }
  return sets;
}

function wire(session: FakeSession): RelationsWire {
  const pairs = (s: Set<string>) => [...s].map(unkey).sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  return {
    n: session.records.length,
    top: pairs(session.set.top),
    left: pairs(session.set.left),
    parallel: pairs(session.set.parallel),
    contain: pairs(session.set.contain),
    human: {
      top: pairs(session.human.top),
      left: pairs(session.human.left),
      parallel: pairs(session.human.parallel),
      contain: pairs(session.human.contain),
    },
  };
}

function conflicts(session: FakeSession): ConflictWire[] {
  const out: ConflictWire[] = [];
  for (const channel of ["top", "left", "contain"] as ChannelName[]) {
    for (const k of session.set[channel]) {
      const [i, j] = unkey(k);
      if (i < j && session.set[channel].has(key(j, i))) {
        out.push({
          kind: channel === "contain" ? "contain_cycle" : "positional_cycle",
          nodes: [i, j],
          channel,
        });
      }
    }
  }
  return out;
}

function applyEdit(session: FakeSession, edit: EditWire): ClearedWire[] {
  const cleared: ClearedWire[] = [];
  const { channel, i, j } = edit;
  if (edit.op === "clear") {
    session.set[channel].delete(key(i, j));
    session.human[channel].delete(key(i, j));
    if (channel === "parallel") {
      session.set[channel].delete(key(j, i));
      session.human[channel].delete(key(j, i));
    }
    return cleared;
  }
  session.set[channel].add(key(i, j));
  if (edit.origin === "human") {
    session.human[channel].add(key(i, j));
  }
  if (channel === "parallel") {
    session.set[channel].add(key(j, i));
    if (edit.origin === "human") session.human[channel].add(key(j, i));
  } else if (edit.origin === "human") {
    const reverse = key(j, i);
    if (session.set[channel].has(reverse) && !session.human[channel].has(reverse)) {
      session.set[channel].delete(reverse);
      cleared.push({ channel, i: j, j: i });
    }
  }
  return cleared;
}

export class FakeService {
  private sessions = new Map<string, FakeSession>();
  private counter = 0;

  /** fetch-compatible entry point for ApiClient. */
  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const payload = init?.body ? JSON.parse(init.body as string) : undefined;
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const respond = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), { status, headers: { "content-type": "application/json" } });

    const sessionMatch = path.match(/^\/sessions\/([^/]+)(\/.*)?$/);

    if (method === "POST" && path === "/sessions") {
      if (!payload.layout) {
        return respond(404, { code: "unknown_corpus_id", message: "no corpus configured", details: {} });
      }
      const records = payload.layout as NodeRecord[];
      const id = `fake-${++this.counter}`;
      const canvas: [number, number] = [
        Math.max(...records.map((r) => r.Coordinate[0] + r.Coordinate[2])),
        Math.max(...records.map((r) => r.Coordinate[1] + r.Coordinate[3])),
      ];
      this.sessions.set(id, {
        records,
        canvas,
        set: relationsFromRecords(records),
        human: { top: new Set(), left: new Set(), parallel: new Set(), contain: new Set() },
        editLog: [],
      });
      return respond(200, { session_id: id });
    }

    if (!sessionMatch) {
      return respond(400, { code: "bad_request", message: `unhandled ${method} ${path}`, details: {} });
    }
    const session = this.sessions.get(sessionMatch[1]);
    if (!session) {
      return respond(404, { code: "unknown_session", message: "no such session", details: {} });
    }
    const sub = sessionMatch[2] ?? "";

    if (method === "GET" && sub === "") {
      return respond(200, {
        session_id: sessionMatch[1],
        canvas: session.canvas,
        layout: session.records,
        relations: wire(session),
        conflicts: conflicts(session),
      });
    }
    if (method === "PATCH" && sub === "/relations") {
      const cleared: ClearedWire[] = [];
      for (const edit of payload as EditWire[]) {
        cleared.push(...applyEdit(session, edit));
        session.editLog.push(edit);
      }
      return respond(200, { relations: wire(session), conflicts: conflicts(session), cleared });
    }
    if (method === "POST" && sub === "/randomize") {
      // deterministic stand-in: toggle parallel on the first free sibling pair
      const n = session.records.length;
      let made = 0;
      for (let i = 2; i <= n && made < payload.count; i++) {
        for (let j = i + 1; j <= n && made < payload.count; j++) {
          const edit: EditWire = {
            op: session.set.parallel.has(key(i, j)) ? "clear" : "set",
            channel: "parallel", i, j, origin: "machine",
          };
          applyEdit(session, edit);
          session.editLog.push(edit);
          made++;
        }
      }
      return respond(200, { relations: wire(session), conflicts: [], toggles: [] });
    }
    if (method === "POST" && sub === "/generate") {
      const found = conflicts(session);
      if (found.length) {
        return respond(409, {
          code: "conflicted",
          message: "relation matrix has conflicts",
          details: { conflicts: found },
        });
      }
      const report: Record<string, string> = {};
      const layout = session.records.map((record) => {
        report[record.Node_id] = "solved";
        return { ...record };
      });
      const insert = (payload.insert_random as number) ?? 0;
      for (let k = 0; k < insert; k++) {
        const nodeId = layout.length + 1;
        layout.push({
          Node_id: String(nodeId),
          Category: "ICON",
          Coordinate: [10 + 30 * k, 10, 20, 20],
          Top: [], Left: [], Parallel: [], Contain: [],
        });
        report[String(nodeId)] = "inserted";
      }
      return respond(200, {
        layout,
        relations_out: wire(session),
        report,
        note: "",
      });
    }
    if (method === "GET" && sub === "/export") {
      return respond(200, session.records);
    }
    return respond(400, { code: "bad_request", message: `unhandled ${method} ${sub}`, details: {} });
  };
}

export function sampleRecords(): NodeRecord[] {
  // root containing two stacked children; node 1 is the published sample shape
  return [
    {
      Node_id: "1",
      Category: "BACKGROUND",
      Coordinate: [0, 0, 1440, 2560],
      Top: [], Left: [], Parallel: [], Contain: [2, 3],
    },
    {
      Node_id: "2",
      Category: "TEXT",
      Coordinate: [100, 200, 600, 400],
      Top: [3], Left: [3], Parallel: [3], Contain: [],
    },
    {
      Node_id: "3",
      Category: "IMAGE",
      Coordinate: [800, 900, 500, 700],
      Top: [], Left: [], Parallel: [2], Contain: [],
    },
  ];
}
