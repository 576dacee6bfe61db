"""Corpus construction: splits, masking, negatives, synthetic layouts.

Synthetic layouts are produced by recursive guillotine partitioning, so
sibling boxes never overlap and the derived relation matrix is conflict-free
by construction. Geometry keeps generous slack (margins >= 0.003 normalized,
distinct non-ancestor center gaps >= 1.2e-3 per axis) so that downstream
constraint solving and pixel round-trips never flip a relation.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, LayoutLabError
from .model import (
    MASK,
    NO_CONTENT,
    BBox,
    Category,
    ComponentNode,
    ContentStub,
    Difficulty,
    LayoutGraph,
    difficulty,
    parse_layout,
    serialize_layout,
    stub_kind_for,
)
from .relations import RelationMatrix, derive_relations

DEFAULT_CANVAS = (1440, 2560)
LEAF_CATEGORIES = (Category.IMAGE, Category.TEXT, Category.SLIDING_BAR, Category.ICON, Category.INPUT)

MIN_BOX_SPAN = 0.012      # smallest generated box edge, normalized
MIN_CELL_SPAN = 0.02
ABS_MARGIN = 0.003        # padding/gap floor, normalized
MIN_CENTER_GAP = 1.2e-3   # distinct center separation for non-ancestor pairs
MASK_RATIO_RANGE = (0.05, 0.25)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    seed: int


def split(entries: list[str], seed: int) -> DatasetSplit:
    """Deterministic 7:2:1 partition of entry ids."""
    if len(entries) < 10:
        raise ContractError(f"need at least 10 entries to split, got {len(entries)}")
    rng = np.random.default_rng(seed)
    order = [entries[i] for i in rng.permutation(len(entries))]
    n = len(order)
    n_train = int(math.floor(0.7 * n))
    n_val = int(math.floor(0.2 * n))
    return DatasetSplit(
        train=tuple(order[:n_train]),
        val=tuple(order[n_train : n_train + n_val]),
        test=tuple(order[n_train + n_val :]),
        seed=seed,
    )


@dataclass(frozen=True)
class MaskedGraph:
    """A layout with some nodes blanked; indices stay aligned with the source."""

    graph: LayoutGraph
    visible: RelationMatrix
    masked_ids: tuple[int, ...]
    ratio: float
    seed: int


def mask_graph(graph: LayoutGraph, relations: RelationMatrix, ratio: float, seed: int) -> MaskedGraph:
    """Blank ceil(ratio * n) non-root nodes; entries touching them are dropped."""
    lo, hi = MASK_RATIO_RANGE
    if not (lo <= ratio <= hi):
        raise ContractError(f"mask ratio must lie in [{lo}, {hi}], got {ratio}")
    if relations.n != graph.n:
        raise ContractError("relation matrix size does not match graph")
    root = graph.root()
    candidates = [nd.node_id for nd in graph.nodes if root is None or nd.node_id != root.node_id]
    k = math.ceil(ratio * graph.n)
    if k > len(candidates) or k < 1:
        raise ContractError(f"cannot mask {k} of {graph.n} nodes (root excluded)")
    rng = np.random.default_rng(seed)
    masked = tuple(sorted(int(candidates[i]) for i in rng.choice(len(candidates), size=k, replace=False)))

    nodes = tuple(
        ComponentNode(nd.node_id, MASK, None, NO_CONTENT) if nd.node_id in masked else nd
        for nd in graph.nodes
    )
    data = relations.stacked().copy()
    human = np.zeros_like(data)
    for node_id in masked:
        data[:, node_id - 1, :] = False
        data[:, :, node_id - 1] = False
    visible = RelationMatrix(data, human).freeze()
    return MaskedGraph(LayoutGraph(graph.canvas, nodes), visible, masked, ratio, seed)


# ---------------------------------------------------------------------------
# corpus

@dataclass
class CorpusEntry:
    id: str
    graph: LayoutGraph
    relations: RelationMatrix
    split: str | None = None

    @property
    def difficulty(self) -> Difficulty:
        return difficulty(self.graph)


class Corpus:
    def __init__(self):
        self.entries: dict[str, CorpusEntry] = {}

    @property
    def ids(self) -> list[str]:
        return list(self.entries)

    def add(self, entry: CorpusEntry):
        if entry.id in self.entries:
            raise ContractError(f"duplicate corpus id {entry.id}")
        self.entries[entry.id] = entry

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, entry_id: str) -> CorpusEntry:
        return self.entries[entry_id]

    def category_multiset(self, entry_id: str) -> tuple:
        counts = Counter(
            nd.category.name for nd in self.entries[entry_id].graph.nodes if not nd.is_masked
        )
        return tuple(sorted(counts.items()))

    def apply_split(self, s: DatasetSplit):
        for name, ids in (("train", s.train), ("val", s.val), ("test", s.test)):
            for entry_id in ids:
                self.entries[entry_id].split = name

    def members(self, split_name: str) -> list[str]:
        return [e.id for e in self.entries.values() if e.split == split_name]

    def category_frequencies(self) -> dict[str, float]:
        """Leaf-category frequencies keyed by wire name, for seeded sampling."""
        counts: Counter = Counter()
        for entry in self.entries.values():
            for nd in entry.graph.nodes:
                if not nd.is_masked and nd.category is not Category.BACKGROUND:
                    counts[nd.category.wire] += 1
        total = sum(counts.values())
        if total == 0:
            return {c.wire: 1.0 / len(LEAF_CATEGORIES) for c in LEAF_CATEGORIES}
        return {name: cnt / total for name, cnt in sorted(counts.items())}


def sample_negative(gt_id: str, pool: Corpus, seed: int) -> str:
    """Uniform draw over the pool minus the anchor, avoiding category twins."""
    others = [i for i in pool.ids if i != gt_id]
    if not others:
        raise ContractError("negative sampling needs a pool of size >= 2")
    rng = np.random.default_rng(seed)
    gt_ms = pool.category_multiset(gt_id)
    pick = others[int(rng.integers(len(others)))]
    for _ in range(15):
        if pool.category_multiset(pick) != gt_ms:
            return pick
        pick = others[int(rng.integers(len(others)))]
    return pick


@dataclass(frozen=True)
class Triplet:
    gt_id: str
    gt_graph: LayoutGraph
    gt_relations: RelationMatrix
    pos: MaskedGraph
    neg_id: str
    neg_graph: LayoutGraph
    neg_relations: RelationMatrix

    def __post_init__(self):
        lo, hi = MASK_RATIO_RANGE
        if not (lo <= self.pos.ratio <= hi):
            raise ContractError(f"triplet mask ratio {self.pos.ratio} outside [{lo}, {hi}]")
        if self.neg_id == self.gt_id:
            raise ContractError("negative must reference a different entry")
        ids = {nd.node_id for nd in self.gt_graph.nodes}
        if not set(self.pos.masked_ids) <= ids:
            raise ContractError("masked ids must be a subset of the ground-truth node ids")


def build_triplets(corpus: Corpus, ids: list[str], seed: int) -> list[Triplet]:
    rng = np.random.default_rng(seed)
    out = []
    for gt_id in ids:
        entry = corpus[gt_id]
        lo, hi = MASK_RATIO_RANGE
        ratio = float(rng.uniform(lo, hi))
        mask_seed = int(rng.integers(2**63))
        neg_seed = int(rng.integers(2**63))
        neg_id = sample_negative(gt_id, corpus, neg_seed)
        neg = corpus[neg_id]
        out.append(
            Triplet(
                gt_id,
                entry.graph,
                entry.relations,
                mask_graph(entry.graph, entry.relations, ratio, mask_seed),
                neg_id,
                neg.graph,
                neg.relations,
            )
        )
    return out


# ---------------------------------------------------------------------------
# synthetic generator

def synthesize_random_layout(
    n: int,
    seed: int,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
    min_center_gap: float = MIN_CENTER_GAP,
) -> LayoutGraph:
    """Random layout with a BACKGROUND root and a guillotine containment tree.

    min_center_gap rejects layouts with near-tied centers; the default keeps
    relations stable under pixel rounding, which large n cannot satisfy, so
    in-memory experiments at n > ~20 should pass a looser gap.
    """
    if not (1 <= n <= 64):
        raise ContractError(f"node count must lie in 1..64, got {n}")
    for attempt in range(64):
        rng = np.random.default_rng([seed, attempt])
        graph = _generate_once(n, rng, canvas)
        if graph is not None and _center_gaps_ok(graph, min_center_gap):
            return graph
    raise LayoutLabError(f"could not generate a well-separated layout for n={n}, seed={seed}")


def _generate_once(n: int, rng: np.random.Generator, canvas: tuple[int, int]) -> LayoutGraph | None:
    children: dict[int, list[int]] = {1: []}
    depth = {1: 0}
    for new_id in range(2, n + 1):
        eligible = [
            v for v in children
            if depth[v] < 3 and (v == 1 or len(children[v]) < 8)
        ]
        weights = np.array([2.0 / (1 + depth[v]) + 0.4 * min(len(children[v]), 4) for v in eligible])
        parent = eligible[int(rng.choice(len(eligible), p=weights / weights.sum()))]
        children[parent].append(new_id)
        children[new_id] = []
        depth[new_id] = depth[parent] + 1

    boxes: dict[int, BBox] = {1: BBox(0.5, 0.5, 1.0, 1.0)}
    if not _place_children(1, boxes, children, rng):
        return None

    nodes = []
    for node_id in range(1, n + 1):
        if children[node_id] or node_id == 1:
            category = Category.BACKGROUND
        else:
            category = LEAF_CATEGORIES[int(rng.integers(len(LEAF_CATEGORIES)))]
        kind = stub_kind_for(category)
        content = NO_CONTENT if kind == "none" else ContentStub(kind, f"{kind}-{node_id}-{int(rng.integers(1 << 30))}")
        nodes.append(ComponentNode(node_id, category, boxes[node_id], content))
    return LayoutGraph(canvas, tuple(nodes))


def _place_children(node: int, boxes: dict[int, BBox], children: dict[int, list[int]], rng) -> bool:
    kids = children[node]
    if not kids:
        return True
    box = boxes[node]
    kids = [kids[i] for i in rng.permutation(len(kids))]
    cols = int(math.ceil(math.sqrt(len(kids))))
    rows = [kids[i : i + cols] for i in range(0, len(kids), cols)]

    pad_y = max(ABS_MARGIN, 0.02 * box.h)
    gap_y = max(ABS_MARGIN, 0.02 * box.h)
    avail_h = box.h - 2 * pad_y - (len(rows) - 1) * gap_y
    if avail_h < MIN_CELL_SPAN * len(rows):
        return False
    row_w = rng.uniform(1.0, 1.8, size=len(rows)) * np.array([len(r) for r in rows])
    row_h = avail_h * row_w / row_w.sum()
    if (row_h < MIN_CELL_SPAN).any():
        return False

    y_cursor = box.top + pad_y
    for row, height in zip(rows, row_h):
        pad_x = max(ABS_MARGIN, 0.02 * box.w)
        gap_x = max(ABS_MARGIN, 0.02 * box.w)
        avail_w = box.w - 2 * pad_x - (len(row) - 1) * gap_x
        if avail_w < MIN_CELL_SPAN * len(row):
            return False
        col_w = rng.uniform(1.0, 1.8, size=len(row))
        col_w = avail_w * col_w / col_w.sum()
        if (col_w < MIN_CELL_SPAN).any():
            return False
        x_cursor = box.left + pad_x
        for kid, width in zip(row, col_w):
            cell_l, cell_t = x_cursor, y_cursor
            lp, rp = rng.uniform(0.04, 0.16, size=2) * width
            tp, bp = rng.uniform(0.04, 0.16, size=2) * height
            kid_box = BBox(
                x=cell_l + lp + (width - lp - rp) / 2,
                y=cell_t + tp + (height - tp - bp) / 2,
                w=width - lp - rp,
                h=height - tp - bp,
            )
            if kid_box.w < MIN_BOX_SPAN or kid_box.h < MIN_BOX_SPAN:
                return False
            boxes[kid] = kid_box
            if not _place_children(kid, boxes, children, rng):
                return False
            x_cursor += width + gap_x
        y_cursor += height + gap_y
    return True


def _center_gaps_ok(graph: LayoutGraph, min_gap: float = MIN_CENTER_GAP) -> bool:
    """Non-ancestor pairs must have clearly distinct centers on both axes."""
    rel = derive_relations(graph)
    anc = _ancestor_closure(rel.contain)
    xs = np.array([nd.bbox.x for nd in graph.nodes])
    ys = np.array([nd.bbox.y for nd in graph.nodes])
    n = graph.n
    unrelated = ~anc & ~anc.T & ~np.eye(n, dtype=bool)
    dx = np.abs(xs[:, None] - xs[None, :])
    dy = np.abs(ys[:, None] - ys[None, :])
    return bool((dx[unrelated] >= min_gap).all() and (dy[unrelated] >= min_gap).all())


def _ancestor_closure(contain: np.ndarray) -> np.ndarray:
    n = contain.shape[0]
    anc = contain.copy()
    while True:
        nxt = anc | (anc @ anc)
        if np.array_equal(nxt, anc):
            return anc
        anc = nxt


def build_synthetic_corpus(
    count: int,
    seed: int,
    n_range: tuple[int, int] = (6, 14),
    canvas: tuple[int, int] = DEFAULT_CANVAS,
    prefix: str = "synth",
) -> Corpus:
    rng = np.random.default_rng(seed)
    corpus = Corpus()
    for k in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        layout_seed = int(rng.integers(2**63))
        graph = synthesize_random_layout(n, layout_seed, canvas)
        corpus.add(CorpusEntry(f"{prefix}-{k:05d}", graph, derive_relations(graph)))
    return corpus


# ---------------------------------------------------------------------------
# manifest IO

def save_corpus(corpus: Corpus, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    (out / "layouts").mkdir(parents=True, exist_ok=True)
    for entry in corpus.entries.values():
        path = out / "layouts" / f"{entry.id}.json"
        path.write_text(serialize_layout(entry.graph, entry.relations), encoding="utf-8")
    return write_manifest(corpus, out / "manifest.jsonl", layout_dir=out)


def write_manifest(corpus: Corpus, path: str | Path, layout_dir: str | Path | None = None) -> Path:
    path = Path(path)
    base = Path(layout_dir) if layout_dir else path.parent
    lines = []
    for entry in corpus.entries.values():
        lines.append(
            json.dumps(
                {
                    "id": entry.id,
                    "path": str(Path("layouts") / f"{entry.id}.json"),
                    "split": entry.split,
                    "n": entry.graph.n,
                    "difficulty": entry.difficulty.value,
                },
                sort_keys=True,
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    del base
    return path


def load_corpus(manifest_path: str | Path) -> Corpus:
    manifest_path = Path(manifest_path)
    corpus = Corpus()
    for line in manifest_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        layout_path = manifest_path.parent / rec["path"]
        graph, relations = parse_layout(layout_path.read_text(encoding="utf-8"))
        corpus.add(CorpusEntry(rec["id"], graph, relations, rec.get("split")))
    return corpus
