/** Dense views over the sparse relation wire format, plus the RE metric the
 * UI displays after regeneration. */

import { CHANNELS, ChannelName, Pair, RelationsWire } from "./types.js";

export type CellState = "off" | "machine" | "human";

export class RelationGrid {
  readonly n: number;
  private readonly set: Record<ChannelName, Set<number>>;
  private readonly human: Record<ChannelName, Set<number>>;

  constructor(wire: RelationsWire) {
    this.n = wire.n;
    const pack = (pairs: Pair[]) => new Set(pairs.map(([i, j]) => (i - 1) * this.n + (j - 1)));
    this.set = {
      top: pack(wire.top),
      left: pack(wire.left),
      parallel: pack(wire.parallel),
      contain: pack(wire.contain),
    };
    this.human = {
      top: pack(wire.human?.top ?? []),
      left: pack(wire.human?.left ?? []),
      parallel: pack(wire.human?.parallel ?? []),
      contain: pack(wire.human?.contain ?? []),
    };
  }

  has(channel: ChannelName, i: number, j: number): boolean {
    return this.set[channel].has((i - 1) * this.n + (j - 1));
  }

  cellState(channel: ChannelName, i: number, j: number): CellState {
    const key = (i - 1) * this.n + (j - 1);
    if (!this.set[channel].has(key)) return "off";
    return this.human[channel].has(key) ? "human" : "machine";
  }

  countSet(channel: ChannelName): number {
    return this.set[channel].size;
  }
}

/** Mean squared difference over the off-diagonal entries of all four
 * channels, computed on the common leading n x n block. */
export function relationError(a: RelationsWire, b: RelationsWire): number {
  const n = Math.min(a.n, b.n);
  if (n < 2) return 0;
  const ga = new RelationGrid(a);
  const gb = new RelationGrid(b);
  let sum = 0;
  for (const channel of CHANNELS) {
    for (let i = 1; i <= n; i++) {
      for (let j = 1; j <= n; j++) {
        if (i === j) continue;
        const va = ga.has(channel, i, j) ? 1 : 0;
        const vb = gb.has(channel, i, j) ? 1 : 0;
        sum += (va - vb) * (va - vb);
      }
    }
  }
  return sum / (4 * n * (n - 1));
}
