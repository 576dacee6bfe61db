"""Typed layout-graph data model, RICO ingestion and the layout wire format.

Internal geometry is normalized and center-based: every box is (x, y, w, h)
with x/y the center in [0, 1] fractions of the canvas. The wire format uses
integer pixels with top-left anchoring, matching the layout-JSON records this
package emits and consumes.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

from .errors import (
    BoundsValidationError,
    ContractError,
    DocumentParseError,
    EmptyDocumentError,
    UnknownCategoryError,
)

EDGE_TOL = 1e-9


class Category(enum.Enum):
    """The six component categories; values are the wire-format spellings."""

    BACKGROUND = "BACKGROUND"
    IMAGE = "IMAGE"
    TEXT = "TEXT"
    SLIDING_BAR = "SLIDING BAR"
    ICON = "ICON"
    INPUT = "INPUT"

    @property
    def wire(self) -> str:
        return self.value

    @classmethod
    def from_wire(cls, text: str) -> "Category":
        for member in cls:
            if member.value == text:
                return member
        raise UnknownCategoryError(f"unknown category string: {text!r}")


class _MaskSentinel:
    """Placeholder category for masked nodes. Never appears on the wire."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MASK"


MASK = _MaskSentinel()

# Featurization order: the six categories then the mask sentinel.
CATEGORY_ORDER = (
    Category.BACKGROUND,
    Category.IMAGE,
    Category.TEXT,
    Category.SLIDING_BAR,
    Category.ICON,
    Category.INPUT,
)
MASK_CLASS_INDEX = len(CATEGORY_ORDER)  # 6

STUB_KINDS = ("icon", "image", "text", "none")

_KIND_FOR_CATEGORY = {
    Category.BACKGROUND: "none",
    Category.IMAGE: "image",
    Category.TEXT: "text",
    Category.SLIDING_BAR: "none",
    Category.ICON: "icon",
    Category.INPUT: "none",
}


def stub_kind_for(category: Category) -> str:
    return _KIND_FOR_CATEGORY[category]


@dataclass(frozen=True)
class BBox:
    """Center-based normalized box. Must lie inside the unit canvas."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise BoundsValidationError(f"box must have positive size, got w={self.w} h={self.h}")
        if self.x - self.w / 2 < -EDGE_TOL or self.x + self.w / 2 > 1 + EDGE_TOL:
            raise BoundsValidationError(f"box exceeds canvas horizontally: {self}")
        if self.y - self.h / 2 < -EDGE_TOL or self.y + self.h / 2 > 1 + EDGE_TOL:
            raise BoundsValidationError(f"box exceeds canvas vertically: {self}")

    @property
    def left(self) -> float:
        return self.x - self.w / 2

    @property
    def right(self) -> float:
        return self.x + self.w / 2

    @property
    def top(self) -> float:
        return self.y - self.h / 2

    @property
    def bottom(self) -> float:
        return self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def intersection_area(self, other: "BBox") -> float:
        dx = min(self.right, other.right) - max(self.left, other.left)
        dy = min(self.bottom, other.bottom) - max(self.top, other.top)
        if dx <= 0 or dy <= 0:
            return 0.0
        return dx * dy


@dataclass(frozen=True)
class ContentStub:
    """Opaque payload standing in for real icon/image/text content."""

    kind: str
    payload: str = ""

    def __post_init__(self):
        if self.kind not in STUB_KINDS:
            raise ContractError(f"unknown content kind: {self.kind!r}")


NO_CONTENT = ContentStub("none", "")


@dataclass(frozen=True)
class ComponentNode:
    node_id: int
    category: Category | _MaskSentinel
    bbox: BBox | None
    content: ContentStub = NO_CONTENT

    def __post_init__(self):
        if self.node_id < 1:
            raise ContractError(f"node_id must be positive, got {self.node_id}")
        if self.is_masked:
            if self.bbox is not None:
                raise ContractError("masked nodes carry no geometry")
        else:
            if self.bbox is None:
                raise ContractError(f"node {self.node_id} has no bbox")
            expected = _KIND_FOR_CATEGORY[self.category]
            if self.content.kind not in (expected, "none"):
                raise ContractError(
                    f"node {self.node_id}: content kind {self.content.kind!r} "
                    f"inconsistent with category {self.category.name}"
                )

    @property
    def is_masked(self) -> bool:
        return self.category is MASK


@dataclass(frozen=True)
class LayoutGraph:
    """A canvas plus an ordered list of component nodes.

    Canonical graphs have node ids 1..n in list order; parsers and generators
    always produce canonical graphs.
    """

    canvas: tuple[int, int]
    nodes: tuple[ComponentNode, ...]

    def __post_init__(self):
        w, h = self.canvas
        if w < 1 or h < 1:
            raise ContractError(f"canvas must be positive, got {self.canvas}")
        if not self.nodes:
            raise EmptyDocumentError("layout graph needs at least one node")
        ids = [nd.node_id for nd in self.nodes]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ContractError(f"duplicate node ids: {dupes}")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def is_canonical(self) -> bool:
        return all(nd.node_id == k + 1 for k, nd in enumerate(self.nodes))

    def normalized(self) -> "LayoutGraph":
        """Renumber nodes 1..n following the current id order."""
        ordered = sorted(self.nodes, key=lambda nd: nd.node_id)
        renum = tuple(
            ComponentNode(k + 1, nd.category, nd.bbox, nd.content)
            for k, nd in enumerate(ordered)
        )
        return LayoutGraph(self.canvas, renum)

    def root(self) -> ComponentNode | None:
        """The unique full-canvas BACKGROUND node, if present."""
        hits = [
            nd
            for nd in self.nodes
            if not nd.is_masked
            and nd.category is Category.BACKGROUND
            and abs(nd.bbox.w - 1.0) < 1e-9
            and abs(nd.bbox.h - 1.0) < 1e-9
        ]
        return hits[0] if len(hits) == 1 else None

    def node(self, node_id: int) -> ComponentNode:
        for nd in self.nodes:
            if nd.node_id == node_id:
                return nd
        raise ContractError(f"no node with id {node_id}")


def require_canonical(graph: LayoutGraph) -> None:
    if not graph.is_canonical:
        raise ContractError("operation requires node ids 1..n in list order")


class Difficulty(enum.Enum):
    EASY = "EASY"
    MEDIUM = "MEDIUM"
    HARD = "HARD"


def difficulty(graph: LayoutGraph) -> Difficulty:
    """Bucket a layout by component count: <=8 easy, 9..20 medium, >20 hard."""
    n = graph.n
    if n <= 8:
        return Difficulty.EASY
    if n <= 20:
        return Difficulty.MEDIUM
    return Difficulty.HARD


# ---------------------------------------------------------------------------
# coordinate conversion

def round_half_away(v: float) -> int:
    if v >= 0:
        return int(math.floor(v + 0.5))
    return int(math.ceil(v - 0.5))


def normalize_bounds(x1: float, y1: float, x2: float, y2: float, canvas: tuple[int, int]) -> BBox:
    """Pixel corner bounds -> normalized center-based box."""
    w_px, h_px = canvas
    return BBox(
        x=(x1 + x2) / 2 / w_px,
        y=(y1 + y2) / 2 / h_px,
        w=(x2 - x1) / w_px,
        h=(y2 - y1) / h_px,
    )


def denormalize_bbox(b: BBox, canvas: tuple[int, int]) -> tuple[int, int, int, int]:
    """Normalized box -> (left, top, width, height) integer pixels."""
    w_px, h_px = canvas
    return (
        round_half_away(b.left * w_px),
        round_half_away(b.top * h_px),
        round_half_away(b.w * w_px),
        round_half_away(b.h * h_px),
    )


# ---------------------------------------------------------------------------
# RICO ingestion

# RICO's semantic component labels collapsed onto the six categories.
RICO_LABEL_MAP: dict[str, Category] = {
    "Toolbar": Category.BACKGROUND,
    "Card": Category.BACKGROUND,
    "List Item": Category.BACKGROUND,
    "Drawer": Category.BACKGROUND,
    "Modal": Category.BACKGROUND,
    "Bottom Navigation": Category.BACKGROUND,
    "Button Bar": Category.BACKGROUND,
    "Multi-Tab": Category.BACKGROUND,
    "Text": Category.TEXT,
    "Text Button": Category.TEXT,
    "Slider": Category.SLIDING_BAR,
    "Input": Category.INPUT,
    "Checkbox": Category.INPUT,
    "Radio Button": Category.INPUT,
    "On/Off Switch": Category.INPUT,
    "Number Stepper": Category.INPUT,
    "Date Picker": Category.INPUT,
    "Icon": Category.ICON,
    "Pager Indicator": Category.ICON,
    "Image": Category.IMAGE,
    "Background Image": Category.IMAGE,
    "Advertisement": Category.IMAGE,
    "Map View": Category.IMAGE,
    "Video": Category.IMAGE,
    "Web View": Category.IMAGE,
}


def map_rico_label(label: str | None, has_children: bool) -> Category:
    # Containers become BACKGROUND regardless of label; unknown labels are
    # treated as generic visual content.
    if has_children:
        return Category.BACKGROUND
    if label is None:
        return Category.IMAGE
    return RICO_LABEL_MAP.get(label, Category.IMAGE)


def _default_content(category: Category, node_id: int) -> ContentStub:
    kind = _KIND_FOR_CATEGORY[category]
    if kind == "none":
        return NO_CONTENT
    return ContentStub(kind, f"{kind}-{node_id}")


def parse_rico_document(data: bytes | str, canvas: tuple[int, int]) -> LayoutGraph:
    """Parse a RICO semantic-annotation tree into a canonical LayoutGraph."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentParseError(f"malformed JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict) or not doc:
        raise EmptyDocumentError("document has no node tree")

    w_px, h_px = canvas
    nodes: list[ComponentNode] = []
    bad: list[int] = []

    def walk(element: dict, next_id: list[int]):
        node_id = next_id[0]
        next_id[0] += 1
        bounds = element.get("bounds")
        if not (isinstance(bounds, list) and len(bounds) == 4):
            raise DocumentParseError(f"node {node_id}: missing or malformed bounds")
        x1, y1, x2, y2 = bounds
        children = element.get("children") or []
        if x1 < 0 or y1 < 0 or x2 > w_px or y2 > h_px or x2 <= x1 or y2 <= y1:
            bad.append(node_id)
            category = Category.IMAGE
            bbox = None
        elif (x1, y1, x2, y2) == (0, 0, w_px, h_px):
            category = Category.BACKGROUND  # the full-canvas root
            bbox = normalize_bounds(x1, y1, x2, y2, canvas)
        else:
            category = map_rico_label(element.get("componentLabel"), bool(children))
            bbox = normalize_bounds(x1, y1, x2, y2, canvas)
        if bbox is not None:
            nodes.append(ComponentNode(node_id, category, bbox, _default_content(category, node_id)))
        for child in children:
            walk(child, next_id)

    walk(doc, [1])
    if bad:
        raise BoundsValidationError(
            f"nodes with bounds outside the {w_px}x{h_px} canvas or degenerate size: {bad}",
            nodes=bad,
        )
    if not nodes:
        raise EmptyDocumentError("document parsed to zero nodes")
    graph = LayoutGraph(canvas, tuple(nodes))
    return graph if graph.is_canonical else graph.normalized()


# ---------------------------------------------------------------------------
# layout wire format (one JSON object per node, wrapped in an array)

def serialize_layout(graph: LayoutGraph, relations) -> str:
    """Emit the layout-JSON document for a graph and its relation matrix.

    One record per node with keys Node_id, Category, Coordinate (pixel
    [left, top, width, height]), Top, Left, Parallel, Contain. Records are
    ordered by node id inside a JSON array.
    """
    require_canonical(graph)
    if relations.n != graph.n:
        raise ContractError(
            f"relation matrix is {relations.n}x{relations.n} but graph has {graph.n} nodes"
        )
    records = []
    for idx, nd in enumerate(graph.nodes):
        if nd.is_masked:
            raise ContractError(f"node {nd.node_id} is masked; masked graphs are not serializable")
        px = denormalize_bbox(nd.bbox, graph.canvas)
        records.append(
            {
                "Node_id": str(nd.node_id),
                "Category": nd.category.wire,
                "Coordinate": list(px),
                "Top": [int(j) + 1 for j in relations.top[idx].nonzero()[0]],
                "Left": [int(j) + 1 for j in relations.left[idx].nonzero()[0]],
                "Parallel": [int(j) + 1 for j in relations.parallel[idx].nonzero()[0]],
                "Contain": [int(j) + 1 for j in relations.contain[idx].nonzero()[0]],
            }
        )
    return json.dumps(records, indent=2) + "\n"


def parse_layout(text: str | bytes):
    """Inverse of serialize_layout; returns (LayoutGraph, RelationMatrix)."""
    from .relations import RelationMatrix  # local import to avoid a cycle

    raw = text.decode("utf-8") if isinstance(text, bytes) else text
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DocumentParseError(f"malformed JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, list) or not doc:
        raise EmptyDocumentError("layout document must be a non-empty array of node records")

    n = len(doc)
    seen: set[int] = set()
    parsed = []
    for rec in doc:
        try:
            node_id = int(rec["Node_id"])
        except (KeyError, TypeError, ValueError):
            raise DocumentParseError(f"record missing a usable Node_id: {rec!r}")
        if node_id in seen:
            raise DocumentParseError(f"duplicate Node_id {node_id}")
        seen.add(node_id)
        category = Category.from_wire(rec.get("Category", ""))
        coord = rec.get("Coordinate")
        if not (isinstance(coord, list) and len(coord) == 4):
            raise DocumentParseError(f"node {node_id}: malformed Coordinate {coord!r}")
        parsed.append((node_id, category, coord, rec))
    if seen != set(range(1, n + 1)):
        raise DocumentParseError(f"node ids must form 1..{n}, got {sorted(seen)}")

    parsed.sort(key=lambda t: t[0])
    canvas_w = max(c[0] + c[2] for _, _, c, _ in parsed)
    canvas_h = max(c[1] + c[3] for _, _, c, _ in parsed)
    canvas = (int(canvas_w), int(canvas_h))

    nodes = []
    for node_id, category, (x1, y1, wpx, hpx), _ in parsed:
        if wpx <= 0 or hpx <= 0:
            raise BoundsValidationError(f"node {node_id}: degenerate pixel size", nodes=[node_id])
        bbox = normalize_bounds(x1, y1, x1 + wpx, y1 + hpx, canvas)
        nodes.append(ComponentNode(node_id, category, bbox, _default_content(category, node_id)))

    matrix = RelationMatrix.zeros(n)
    channels = {"Top": matrix.top, "Left": matrix.left, "Parallel": matrix.parallel, "Contain": matrix.contain}
    for node_id, _, _, rec in parsed:
        i = node_id - 1
        for key, arr in channels.items():
            for target in rec.get(key, []):
                t = int(target)
                if t < 1 or t > n:
                    raise DocumentParseError(f"node {node_id}: {key} references unknown node {t}")
                if t == node_id:
                    raise DocumentParseError(f"node {node_id}: self-relation under {key}")
                arr[i, t - 1] = True

    for key in ("Top", "Left", "Contain"):
        arr = channels[key]
        both = arr & arr.T
        if both.any():
            i, j = map(int, min(zip(*both.nonzero())))
            raise DocumentParseError(
                f"antisymmetry violation on {key}: nodes ({i + 1}, {j + 1}) list each other"
            )
    matrix.freeze()
    return LayoutGraph(canvas, tuple(nodes)), matrix
