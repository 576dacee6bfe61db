/** Wire types mirroring the editing service's JSON bodies. */

export type ChannelName = "top" | "left" | "parallel" | "contain";

export const CHANNELS: ChannelName[] = ["top", "left", "parallel", "contain"];

export interface NodeRecord {
  Node_id: string;
  Category: string;
  Coordinate: [number, number, number, number]; // left, top, width, height in px
  Top: number[];
  Left: number[];
  Parallel: number[];
  Contain: number[];
}

export type Pair = [number, number];

export interface RelationsWire {
  n: number;
  top: Pair[];
  left: Pair[];
  parallel: Pair[];
  contain: Pair[];
  human: Record<ChannelName, Pair[]>;
}

export interface ConflictWire {
  kind: string;
  nodes: number[];
  channel: ChannelName;
}

export interface EditWire {
  op: "set" | "clear";
  channel: ChannelName;
  i: number;
  j: number;
  origin: "human" | "machine";
}

export interface ClearedWire {
  channel: ChannelName;
  i: number;
  j: number;
}

export interface SessionWire {
  session_id: string;
  canvas: [number, number];
  layout: NodeRecord[];
  relations: RelationsWire;
  conflicts: ConflictWire[];
}

export interface PatchResponse {
  relations: RelationsWire;
  conflicts: ConflictWire[];
  cleared: ClearedWire[];
}

export interface GenerateResponse {
  layout: NodeRecord[];
  relations_out: RelationsWire;
  report: Record<string, "fixed" | "solved" | "inserted">;
  note: string;
}

export interface ErrorBody {
  code: string;
  message: string;
  details: Record<string, unknown>;
}
