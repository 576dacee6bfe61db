/** Editor session store. Mutations go to the service and the store adopts the
 * response wholesale (optimistic updates are deliberately disabled), so view
 * state can never drift from the server. */

import { ApiClient, ApiError } from "./api.js";
import { RelationGrid, relationError } from "./relations.js";
import {
  ChannelName,
  ClearedWire,
  ConflictWire,
  EditWire,
  GenerateResponse,
  NodeRecord,
  RelationsWire,
  SessionWire,
} from "./types.js";

export interface EditorView {
  sessionId: string;
  canvas: [number, number];
  records: NodeRecord[];
  relations: RelationsWire;
  grid: RelationGrid;
  conflicts: ConflictWire[];
  generationDisabled: boolean;
}

export interface RegenerateOutcome {
  before: NodeRecord[];
  after: NodeRecord[];
  afterRelations: RelationsWire;
  report: GenerateResponse["report"];
  displayedRelationError: number;
}

export class EditorStore {
  private view: EditorView | null = null;
  private lastGeneration: RegenerateOutcome | null = null;
  private flashQueue: ClearedWire[] = [];
  readonly submittedEdits: EditWire[] = [];

  constructor(private readonly api: ApiClient) {}

  current(): EditorView {
    if (!this.view) throw new Error("no session loaded");
    return this.view;
  }

  generation(): RegenerateOutcome | null {
    return this.lastGeneration;
  }

  /** Cleared machine entries from the last edit, for flash highlighting. */
  drainFlashes(): ClearedWire[] {
    const out = this.flashQueue;
    this.flashQueue = [];
    return out;
  }

  private adopt(session: SessionWire): EditorView {
    this.view = {
      sessionId: session.session_id,
      canvas: session.canvas,
      records: session.layout,
      relations: session.relations,
      grid: new RelationGrid(session.relations),
      conflicts: session.conflicts,
      generationDisabled: session.conflicts.length > 0,
    };
    return this.view;
  }

  async loadFromDocument(records: NodeRecord[]): Promise<EditorView> {
    const sessionId = await this.api.createSession({ layout: records });
    return this.adopt(await this.api.getSession(sessionId));
  }

  async loadFromCorpus(corpusId: string): Promise<EditorView> {
    const sessionId = await this.api.createSession({ corpus_id: corpusId });
    return this.adopt(await this.api.getSession(sessionId));
  }

  /** Re-fetch server state (page refresh); human cells persist server-side. */
  async refresh(): Promise<EditorView> {
    const view = this.current();
    return this.adopt(await this.api.getSession(view.sessionId));
  }

  async toggleRelation(channel: ChannelName, i: number, j: number): Promise<EditorView> {
    const view = this.current();
    const op = view.grid.has(channel, i, j) ? "clear" : "set";
    const edit: EditWire = { op, channel, i, j, origin: "human" };
    const response = await this.api.patchRelations(view.sessionId, [edit]);
    this.submittedEdits.push(edit);
    this.flashQueue.push(...response.cleared);
    this.view = {
      ...view,
      relations: response.relations,
      grid: new RelationGrid(response.relations),
      conflicts: response.conflicts,
      generationDisabled: response.conflicts.length > 0,
    };
    return this.view;
  }

  async randomize(count: number, seed: number): Promise<EditorView> {
    const view = this.current();
    const response = await this.api.randomize(view.sessionId, count, seed);
    this.view = {
      ...view,
      relations: response.relations,
      grid: new RelationGrid(response.relations),
      conflicts: response.conflicts,
      generationDisabled: response.conflicts.length > 0,
    };
    return this.view;
  }

  async regenerate(backend: string, seed: number, insertK = 0): Promise<RegenerateOutcome> {
    const view = this.current();
    if (view.generationDisabled) {
      throw new Error("generation disabled: resolve the listed conflicts first");
    }
    const response = await this.api.generate(view.sessionId, {
      backend,
      seed,
      insert_random: insertK,
    });
    this.lastGeneration = {
      before: view.records,
      after: response.layout,
      afterRelations: response.relations_out,
      report: response.report,
      displayedRelationError: relationError(view.relations, response.relations_out),
    };
    return this.lastGeneration;
  }
}

export function describeApiError(error: unknown): string {
  if (error instanceof ApiError) {
    return `${error.status} ${error.body.code}: ${error.body.message}`;
  }
  return String(error);
}
