"""Relation matrices: derivation from geometry, validation, and editing.

Four binary channels per node pair: TOP and LEFT order centers on the two
axes (positional), PARALLEL marks siblings and CONTAIN marks direct
parent-child nesting (semantic). Human edits take priority over
machine-derived entries when they clash.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ContainForestError, ContractError, UnknownNodeError
from .model import LayoutGraph, require_canonical

POS_EPS = 1e-6          # center-coordinate tie band, normalized units
CONTAIN_RATIO = 0.95    # fraction of the child's area the container must cover


class RelationChannel(enum.Enum):
    TOP = "top"
    LEFT = "left"
    PARALLEL = "parallel"
    CONTAIN = "contain"

    @property
    def positional(self) -> bool:
        return self in (RelationChannel.TOP, RelationChannel.LEFT)


CHANNELS = tuple(RelationChannel)


class RelationMatrix:
    """Four n x n boolean matrices plus per-entry human-origin flags.

    Instances are frozen after construction; editing goes through
    apply_edit which returns a new matrix.
    """

    __slots__ = ("n", "_data", "_human")

    def __init__(self, data: np.ndarray, human: np.ndarray | None = None):
        if data.ndim != 3 or data.shape[0] != 4 or data.shape[1] != data.shape[2]:
            raise ContractError(f"expected (4, n, n) relation data, got {data.shape}")
        self.n = data.shape[1]
        self._data = data.astype(bool)
        self._human = human.astype(bool) if human is not None else np.zeros_like(self._data)
        if self._human.shape != self._data.shape:
            raise ContractError("origin mask shape mismatch")

    @classmethod
    def zeros(cls, n: int) -> "RelationMatrix":
        return cls(np.zeros((4, n, n), dtype=bool))

    def freeze(self) -> "RelationMatrix":
        self._data.setflags(write=False)
        self._human.setflags(write=False)
        return self

    def copy(self) -> "RelationMatrix":
        return RelationMatrix(self._data.copy(), self._human.copy())

    def channel(self, ch: RelationChannel) -> np.ndarray:
        return self._data[CHANNELS.index(ch)]

    def human_mask(self, ch: RelationChannel) -> np.ndarray:
        return self._human[CHANNELS.index(ch)]

    @property
    def top(self) -> np.ndarray:
        return self._data[0]

    @property
    def left(self) -> np.ndarray:
        return self._data[1]

    @property
    def parallel(self) -> np.ndarray:
        return self._data[2]

    @property
    def contain(self) -> np.ndarray:
        return self._data[3]

    def stacked(self) -> np.ndarray:
        return self._data

    def __eq__(self, other):
        return isinstance(other, RelationMatrix) and np.array_equal(self._data, other._data)

    def __hash__(self):
        return hash((self.n, self._data.tobytes()))

    def equals_with_origin(self, other: "RelationMatrix") -> bool:
        return self == other and np.array_equal(self._human, other._human)

    def to_dict(self) -> dict:
        out: dict = {"n": self.n}
        for k, ch in enumerate(CHANNELS):
            out[ch.value] = [[int(i) + 1, int(j) + 1] for i, j in zip(*self._data[k].nonzero())]
        out["human"] = {
            ch.value: [[int(i) + 1, int(j) + 1] for i, j in zip(*self._human[k].nonzero())]
            for k, ch in enumerate(CHANNELS)
        }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RelationMatrix":
        n = int(d["n"])
        data = np.zeros((4, n, n), dtype=bool)
        human = np.zeros((4, n, n), dtype=bool)
        for k, ch in enumerate(CHANNELS):
            for i, j in d.get(ch.value, []):
                if not (1 <= i <= n and 1 <= j <= n):
                    raise ContractError(f"relation entry ({i},{j}) outside 1..{n}")
                data[k, i - 1, j - 1] = True
            for i, j in d.get("human", {}).get(ch.value, []):
                human[k, i - 1, j - 1] = True
        return cls(data, human).freeze()


class ConflictKind(enum.Enum):
    SELF_RELATION = "self_relation"
    POSITIONAL_CYCLE = "positional_cycle"
    CONTAIN_CYCLE = "contain_cycle"
    CONTAIN_PARALLEL_CLASH = "contain_parallel_clash"
    SYMMETRY_VIOLATION = "symmetry_violation"
    ORPHAN_PARALLEL = "orphan_parallel"


@dataclass(frozen=True)
class Conflict:
    kind: ConflictKind
    nodes: tuple[int, ...]
    channel: RelationChannel

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "nodes": list(self.nodes), "channel": self.channel.value}


@dataclass(frozen=True)
class Edit:
    op: str  # "set" | "clear"
    channel: RelationChannel
    i: int
    j: int
    origin: str = "human"  # "human" | "machine"

    def __post_init__(self):
        if self.op not in ("set", "clear"):
            raise ContractError(f"unknown edit op {self.op!r}")
        if self.origin not in ("human", "machine"):
            raise ContractError(f"unknown edit origin {self.origin!r}")
        if self.i == self.j:
            raise ContractError("edits must reference two distinct nodes")

    def to_dict(self) -> dict:
        return {"op": self.op, "channel": self.channel.value, "i": self.i, "j": self.j, "origin": self.origin}

    @classmethod
    def from_dict(cls, d: dict) -> "Edit":
        return cls(d["op"], RelationChannel(d["channel"]), int(d["i"]), int(d["j"]), d.get("origin", "human"))


@dataclass(frozen=True)
class ClearedEntry:
    channel: RelationChannel
    i: int
    j: int

    def to_dict(self) -> dict:
        return {"channel": self.channel.value, "i": self.i, "j": self.j}


@dataclass(frozen=True)
class EditResult:
    matrix: RelationMatrix
    conflicts: tuple[Conflict, ...]
    cleared: tuple[ClearedEntry, ...]


@dataclass(frozen=True)
class ContainForest:
    parent: dict[int, int | None]
    children: dict[int, tuple[int, ...]]

    @property
    def roots(self) -> tuple[int, ...]:
        return tuple(sorted(i for i, p in self.parent.items() if p is None))

    def ancestors(self, node: int) -> tuple[int, ...]:
        out = []
        cur = self.parent[node]
        while cur is not None:
            out.append(cur)
            cur = self.parent[cur]
        return tuple(out)


# ---------------------------------------------------------------------------
# derivation

def _geometry_arrays(graph: LayoutGraph):
    xs = np.array([nd.bbox.x for nd in graph.nodes])
    ys = np.array([nd.bbox.y for nd in graph.nodes])
    ws = np.array([nd.bbox.w for nd in graph.nodes])
    hs = np.array([nd.bbox.h for nd in graph.nodes])
    return xs, ys, ws, hs


def _pairwise_intersection(xs, ys, ws, hs) -> np.ndarray:
    l, r = xs - ws / 2, xs + ws / 2
    t, b = ys - hs / 2, ys + hs / 2
    dx = np.minimum(r[:, None], r[None, :]) - np.maximum(l[:, None], l[None, :])
    dy = np.minimum(b[:, None], b[None, :]) - np.maximum(t[:, None], t[None, :])
    return np.clip(dx, 0, None) * np.clip(dy, 0, None)


def _direct_parents(graph: LayoutGraph) -> list[int | None]:
    """parent index per node: the smallest box covering >= 95% of its area."""
    xs, ys, ws, hs = _geometry_arrays(graph)
    areas = ws * hs
    inter = _pairwise_intersection(xs, ys, ws, hs)
    n = graph.n
    parents: list[int | None] = [None] * n
    for j in range(n):
        best = None
        for i in range(n):
            if i == j:
                continue
            if inter[i, j] >= CONTAIN_RATIO * areas[j] and areas[j] < areas[i]:
                if best is None or (areas[i], i) < (areas[best], best):
                    best = i
        parents[j] = best
    return parents


def derive_relations(graph: LayoutGraph) -> RelationMatrix:
    """Compute all four relation channels from node geometry."""
    require_canonical(graph)
    n = graph.n
    parents = _direct_parents(graph)

    ancestor = np.zeros((n, n), dtype=bool)  # ancestor[i, j]: i is an ancestor of j
    for j in range(n):
        cur = parents[j]
        while cur is not None:
            ancestor[cur, j] = True
            cur = parents[cur]

    _, ys, _, _ = _geometry_arrays(graph)
    xs = np.array([nd.bbox.x for nd in graph.nodes])

    unrelated = ~ancestor & ~ancestor.T & ~np.eye(n, dtype=bool)
    top = unrelated & (ys[:, None] < ys[None, :] - POS_EPS)
    left = unrelated & (xs[:, None] < xs[None, :] - POS_EPS)

    contain = np.zeros((n, n), dtype=bool)
    for j, p in enumerate(parents):
        if p is not None:
            contain[p, j] = True

    parallel = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if parents[i] is not None and parents[i] == parents[j]:
                parallel[i, j] = parallel[j, i] = True

    return RelationMatrix(np.stack([top, left, parallel, contain])).freeze()


def contain_forest(m: RelationMatrix) -> ContainForest:
    """Read the parent/children maps off the CONTAIN channel."""
    n = m.n
    contain = m.contain
    parent: dict[int, int | None] = {}
    for j in range(n):
        holders = [int(i) + 1 for i in contain[:, j].nonzero()[0]]
        if len(holders) > 1:
            raise ContainForestError(
                f"node {j + 1} has multiple containers: {holders}", nodes=holders + [j + 1]
            )
        parent[j + 1] = holders[0] if holders else None

    # cycle check by following parent pointers
    for start in range(1, n + 1):
        seen = {start}
        cur = parent[start]
        while cur is not None:
            if cur in seen:
                cycle = sorted(seen)
                raise ContainForestError(f"containment cycle through nodes {cycle}", nodes=cycle)
            seen.add(cur)
            cur = parent[cur]

    children: dict[int, tuple[int, ...]] = {
        i: tuple(sorted(j for j, p in parent.items() if p == i)) for i in range(1, n + 1)
    }
    return ContainForest(parent, children)


# ---------------------------------------------------------------------------
# validation

def _cycle_components(adj: np.ndarray) -> list[tuple[int, ...]]:
    """Strongly connected components of size >= 2 (Tarjan, iterative)."""
    n = adj.shape[0]
    succ = [list(adj[i].nonzero()[0]) for i in range(n)]
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    counter = [0]
    out: list[tuple[int, ...]] = []

    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter[0]
                counter[0] += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while pi < len(succ[v]):
                w = succ[v][pi]
                pi += 1
                if index[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                if len(comp) > 1:
                    out.append(tuple(sorted(int(c) + 1 for c in comp)))
            if work:
                u, _ = work[-1]
                low[u] = min(low[u], low[v])
    return sorted(out)


def validate(m: RelationMatrix) -> list[Conflict]:
    """Detect every invariant violation in a relation matrix."""
    conflicts: list[Conflict] = []
    n = m.n

    for ch in CHANNELS:
        diag = np.diagonal(m.channel(ch))
        for i in diag.nonzero()[0]:
            conflicts.append(Conflict(ConflictKind.SELF_RELATION, (int(i) + 1,), ch))

    par = m.parallel
    asym = par ^ par.T
    for i, j in zip(*asym.nonzero()):
        if i < j:
            conflicts.append(
                Conflict(ConflictKind.SYMMETRY_VIOLATION, (int(i) + 1, int(j) + 1), RelationChannel.PARALLEL)
            )

    for ch in (RelationChannel.TOP, RelationChannel.LEFT):
        for comp in _cycle_components(m.channel(ch)):
            conflicts.append(Conflict(ConflictKind.POSITIONAL_CYCLE, comp, ch))

    contain = m.contain
    for comp in _cycle_components(contain):
        conflicts.append(Conflict(ConflictKind.CONTAIN_CYCLE, comp, RelationChannel.CONTAIN))
    # multiple direct containers break the forest encoding
    multi = contain.sum(axis=0) > 1
    for j in multi.nonzero()[0]:
        holders = tuple(int(i) + 1 for i in contain[:, j].nonzero()[0])
        conflicts.append(
            Conflict(ConflictKind.CONTAIN_CYCLE, holders + (int(j) + 1,), RelationChannel.CONTAIN)
        )

    clash = contain & (par | par.T)
    for i, j in zip(*clash.nonzero()):
        conflicts.append(
            Conflict(ConflictKind.CONTAIN_PARALLEL_CLASH, (int(i) + 1, int(j) + 1), RelationChannel.CONTAIN)
        )

    # orphan check only makes sense when the forest is readable
    if not multi.any() and not _cycle_components(contain):
        parent = {}
        for j in range(n):
            holders = contain[:, j].nonzero()[0]
            parent[j] = int(holders[0]) if holders.size else None
        for i, j in zip(*par.nonzero()):
            if i < j and parent[int(i)] != parent[int(j)]:
                conflicts.append(
                    Conflict(ConflictKind.ORPHAN_PARALLEL, (int(i) + 1, int(j) + 1), RelationChannel.PARALLEL)
                )
    return conflicts


def underivable_entries(m: RelationMatrix) -> list[tuple[RelationChannel, int, int]]:
    """Entries no geometry can reproduce: positional relations between nested
    (ancestor-related) nodes, and PARALLEL pairs lacking a shared real parent.
    Returns [] when the CONTAIN channel is not a readable forest (validate
    reports those states)."""
    try:
        forest = contain_forest(m)
    except ContainForestError:
        return []
    n = m.n
    anc = np.zeros((n, n), dtype=bool)
    for j in range(1, n + 1):
        for a in forest.ancestors(j):
            anc[a - 1, j - 1] = True
    nested = anc | anc.T
    out = []
    for ch in (RelationChannel.TOP, RelationChannel.LEFT):
        for i, j in zip(*(m.channel(ch) & nested).nonzero()):
            out.append((ch, int(i) + 1, int(j) + 1))
    for i, j in zip(*m.parallel.nonzero()):
        if i < j and (forest.parent[int(i) + 1] is None or forest.parent[int(i) + 1] != forest.parent[int(j) + 1]):
            out.append((RelationChannel.PARALLEL, int(i) + 1, int(j) + 1))
    return out


# ---------------------------------------------------------------------------
# editing

def _cycles_through_edge(adj: np.ndarray, i: int, j: int) -> list[list[tuple[int, int]]]:
    """Simple cycles that use edge (i, j), as edge lists. Paths j -> i via DFS."""
    n = adj.shape[0]
    cycles = []
    path = [j]
    seen = {j}

    def dfs(cur: int):
        if len(cycles) >= 64:  # conflict reporting does not need exhaustive enumeration
            return
        for nxt in adj[cur].nonzero()[0]:
            nxt = int(nxt)
            if nxt == i:
                edges = [(i, j)] + [(path[k], path[k + 1]) for k in range(len(path) - 1)] + [(path[-1], i)]
                cycles.append(edges)
            elif nxt not in seen:
                seen.add(nxt)
                path.append(nxt)
                dfs(nxt)
                path.pop()
                seen.discard(nxt)

    dfs(j)
    return cycles


def apply_edit(m: RelationMatrix, e: Edit) -> EditResult:
    """Apply one edit, resolving clashes in favor of human-origin entries.

    Human edits silently clear machine-derived entries they contradict (the
    cleared entries are reported); contradictions between human entries are
    left in place and surface as conflicts.
    """
    if not (1 <= e.i <= m.n and 1 <= e.j <= m.n):
        raise UnknownNodeError(f"edit references node outside 1..{m.n}: ({e.i}, {e.j})")

    new = m.copy()
    k = CHANNELS.index(e.channel)
    data, human = new._data, new._human
    i, j = e.i - 1, e.j - 1
    cleared: list[ClearedEntry] = []

    def clear_entry(ch_idx: int, a: int, b: int):
        if data[ch_idx, a, b]:
            data[ch_idx, a, b] = False
            human[ch_idx, a, b] = False
            cleared.append(ClearedEntry(CHANNELS[ch_idx], a + 1, b + 1))

    if e.op == "clear":
        data[k, i, j] = False
        human[k, i, j] = False
        if e.channel is RelationChannel.PARALLEL:
            data[k, j, i] = False
            human[k, j, i] = False
    else:
        data[k, i, j] = True
        if e.origin == "human":
            human[k, i, j] = True
        if e.channel is RelationChannel.PARALLEL:
            data[k, j, i] = True
            human[k, j, i] = human[k, i, j]
        human_wins = e.origin == "human"

        if e.channel in (RelationChannel.TOP, RelationChannel.LEFT, RelationChannel.CONTAIN):
            if data[k, j, i] and human_wins and not human[k, j, i]:
                clear_entry(k, j, i)
            if human_wins:
                # break cycles the new edge creates, dropping machine edges only
                guard = 0
                while guard < 16:
                    guard += 1
                    cycles = _cycles_through_edge(data[k], i, j)
                    dropped = False
                    for cycle in cycles:
                        for (a, b) in cycle:
                            if (a, b) != (i, j) and not human[k, a, b]:
                                clear_entry(k, a, b)
                                dropped = True
                                break
                        if dropped:
                            break
                    if not dropped:
                        break

        if e.channel is RelationChannel.CONTAIN and human_wins:
            ci = CHANNELS.index(RelationChannel.CONTAIN)
            for other in data[ci, :, j].nonzero()[0]:  # other containers of j
                other = int(other)
                if other != i and not human[ci, other, j]:
                    clear_entry(ci, other, j)
            pi = CHANNELS.index(RelationChannel.PARALLEL)
            for (a, b) in ((i, j), (j, i)):
                if data[pi, a, b] and not human[pi, a, b]:
                    clear_entry(pi, a, b)
                    clear_entry(pi, b, a)
        if e.channel is RelationChannel.PARALLEL and human_wins:
            ci = CHANNELS.index(RelationChannel.CONTAIN)
            for (a, b) in ((i, j), (j, i)):
                if data[ci, a, b] and not human[ci, a, b]:
                    clear_entry(ci, a, b)

    new.freeze()
    return EditResult(new, tuple(validate(new)), tuple(cleared))
