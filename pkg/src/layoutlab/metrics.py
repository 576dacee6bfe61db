"""Layout evaluation metrics: relation error, maximum IoU, overlap, FID.

FID features come from a small clean-vs-corrupt classifier trained on
handcrafted per-layout statistics; absolute FID values are therefore tied to
the extractor checkpoint and only comparable within one extractor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .autodiff import const, param
from .dataset import _ancestor_closure
from .errors import ContractError, TrainingFailureError
from .model import NO_CONTENT, BBox, Category, ComponentNode, Difficulty, LayoutGraph, difficulty
from .relations import RelationMatrix, derive_relations

FEATURE_DIM = 32  # penultimate width of the corruption classifier


def relation_error(a: RelationMatrix, b: RelationMatrix) -> float:
    """Mean squared difference over all off-diagonal entries of all channels."""
    if a.n != b.n:
        raise ContractError(f"relation matrices differ in size: {a.n} vs {b.n}")
    n = a.n
    if n < 2:
        return 0.0
    off = ~np.eye(n, dtype=bool)
    diff = (a.stacked().astype(np.float64) - b.stacked().astype(np.float64)) ** 2
    return float(diff[:, off].sum() / (4 * n * (n - 1)))


def _iou(a: BBox, b: BBox) -> float:
    inter = a.intersection_area(b)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def assignment_total(weights: np.ndarray) -> float:
    """Maximum-weight perfect matching total on a rectangular weight matrix."""
    if weights.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(-weights)
    return float(weights[rows, cols].sum())


def max_iou(generated: LayoutGraph, reference: LayoutGraph) -> float:
    """Category-wise optimal-assignment IoU, normalized so unmatched boxes
    (hallucinated or missing) count against the score."""
    total = 0.0
    denom = 0
    for category in Category:
        gen = [nd.bbox for nd in generated.nodes if nd.category is category]
        ref = [nd.bbox for nd in reference.nodes if nd.category is category]
        if not gen and not ref:
            continue
        denom += max(len(gen), len(ref))
        if not gen or not ref:
            continue
        weights = np.array([[_iou(g, r) for r in ref] for g in gen])
        total += assignment_total(weights)
    return total / denom if denom else 1.0


def overlap(layout: LayoutGraph) -> float:
    """Percent of canvas area covered by intersections of non-nested pairs."""
    rel = derive_relations(layout)
    anc = _ancestor_closure(rel.contain)
    n = layout.n
    acc = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            if anc[i, j] or anc[j, i]:
                continue
            acc += layout.nodes[i].bbox.intersection_area(layout.nodes[j].bbox)
    return 100.0 * acc


def fid(set_a: list[np.ndarray], set_b: list[np.ndarray]) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ContractError("feature sets must be 2-d with a common dimension")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    d = a.shape[1]
    shrink = 1e-6 * np.eye(d)
    cov_a = np.cov(a, rowvar=False).reshape(d, d) + shrink
    cov_b = np.cov(b, rowvar=False).reshape(d, d) + shrink

    # sqrt(cov_a) via eigendecomposition, then eigenvalues of the symmetrized product
    vals_a, vecs_a = np.linalg.eigh(cov_a)
    root_a = vecs_a @ np.diag(np.sqrt(np.clip(vals_a, 0, None))) @ vecs_a.T
    middle = root_a @ cov_b @ root_a
    vals = np.linalg.eigvalsh((middle + middle.T) / 2)
    trace_sqrt = np.sqrt(np.clip(vals, 0, None)).sum()
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2 * trace_sqrt)


# ---------------------------------------------------------------------------
# corruption classifier (FID feature extractor)

def layout_statistics(layout: LayoutGraph) -> np.ndarray:
    """Handcrafted per-layout vector: category histogram, box-area stats,
    pairwise overlap total (non-nested pairs), component count."""
    hist = np.zeros(len(Category))
    cats = list(Category)
    areas = []
    for nd in layout.nodes:
        hist[cats.index(nd.category)] += 1
        areas.append(nd.bbox.area)
    areas = np.array(areas)
    n = layout.n
    hist = hist / n
    return np.concatenate(
        [
            hist,
            [areas.mean(), areas.std(), areas.min(), areas.max()],
            [overlap(layout), n / 64.0],
        ]
    )


def corrupt_layout(layout: LayoutGraph, seed: int) -> LayoutGraph:
    """Jitter every box by up to 10% of the canvas and reshuffle 20% of the
    category labels."""
    rng = np.random.default_rng(seed)
    nodes = []
    n = layout.n
    k = max(1, int(round(0.2 * n)))
    shuffled = rng.choice(n, size=k, replace=False)
    cats = [c for c in Category if c is not Category.BACKGROUND]
    for idx, nd in enumerate(layout.nodes):
        b = nd.bbox
        jx, jy = rng.uniform(-0.1, 0.1, size=2)
        x = float(np.clip(b.x + jx, b.w / 2, 1 - b.w / 2))
        y = float(np.clip(b.y + jy, b.h / 2, 1 - b.h / 2))
        category, content = nd.category, nd.content
        if idx in shuffled:
            category = cats[int(rng.integers(len(cats)))]
            if content.kind not in ("none",) and category is not nd.category:
                content = NO_CONTENT
        nodes.append(ComponentNode(nd.node_id, category, BBox(x, y, b.w, b.h), content))
    return LayoutGraph(layout.canvas, tuple(nodes))


@dataclass
class FeatureExtractor:
    """2-layer MLP clean-vs-corrupt classifier; the hidden layer activations
    are the layout feature vector."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    accuracy: float

    def features(self, layout: LayoutGraph) -> np.ndarray:
        x = (layout_statistics(layout) - self.mean) / self.scale
        return np.maximum(x @ self.w1 + self.b1, 0.0)

    def predict_corrupt(self, layout: LayoutGraph) -> float:
        h = self.features(layout)
        z = h @ self.w2 + self.b2
        return float(1.0 / (1.0 + np.exp(-z)))

    def save(self, path: str | Path):
        np.savez(
            path,
            w1=self.w1, b1=self.b1, w2=self.w2, b2=self.b2,
            mean=self.mean, scale=self.scale, accuracy=np.array([self.accuracy]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "FeatureExtractor":
        blob = np.load(path)
        return cls(
            blob["w1"], blob["b1"], blob["w2"], blob["b2"],
            blob["mean"], blob["scale"], float(blob["accuracy"][0]),
        )


def train_corruption_classifier(
    clean: list[LayoutGraph],
    seed: int,
    epochs: int = 600,
    lr: float = 0.5,
    target_accuracy: float = 0.85,
    restarts: int = 3,
) -> FeatureExtractor:
    """Train the FID feature extractor on clean layouts vs corrupted twins.

    Retries with reshuffled splits up to the restart budget before failing."""
    if len(clean) < 100:
        raise ContractError(f"need at least 100 clean layouts, got {len(clean)}")

    stats = []
    labels = []
    for idx, layout in enumerate(clean):
        stats.append(layout_statistics(layout))
        labels.append(0.0)
        stats.append(layout_statistics(corrupt_layout(layout, seed + idx)))
        labels.append(1.0)
    x_all = np.array(stats)
    y_all = np.array(labels)

    losses: list[float] = []
    best: tuple[float, FeatureExtractor] | None = None
    for attempt in range(restarts):
        rng = np.random.default_rng([seed, attempt])
        order = rng.permutation(len(x_all))
        x, y = x_all[order], y_all[order]
        n_held = max(20, len(x) // 5)
        x_train, y_train = x[:-n_held], y[:-n_held]
        x_held, y_held = x[-n_held:], y[-n_held:]

        mean = x_train.mean(axis=0)
        scale = np.maximum(x_train.std(axis=0), 1e-8)
        xt = (x_train - mean) / scale
        xh = (x_held - mean) / scale

        dim = x_all.shape[1]
        w1 = param(rng.standard_normal((dim, FEATURE_DIM)) * math.sqrt(2.0 / dim))
        b1 = param(np.zeros(FEATURE_DIM))
        w2 = param(rng.standard_normal(FEATURE_DIM) * 0.1)
        b2 = param(np.zeros(()))

        for _ in range(epochs):
            for t in (w1, b1, w2, b2):
                t.grad = None
            h = (const(xt) @ w1 + b1).relu()
            z = h @ w2 + b2
            p = z.sigmoid().clip(1e-7, 1 - 1e-7)
            yt = const(y_train)
            loss = -(yt * p.log() + (const(1.0) - yt) * (const(1.0) - p).log()).mean()
            losses.append(float(loss.value))
            loss.backward()
            for t in (w1, b1, w2, b2):
                t.value = t.value - lr * t.grad

        h = np.maximum(xh @ w1.value + b1.value, 0.0)
        pred = (h @ w2.value + b2.value) > 0
        accuracy = float((pred == (y_held > 0.5)).mean())
        extractor = FeatureExtractor(w1.value, b1.value, w2.value, b2.value, mean, scale, accuracy)
        if accuracy >= target_accuracy:
            return extractor
        if best is None or accuracy > best[0]:
            best = (accuracy, extractor)

    raise TrainingFailureError(
        f"corruption classifier reached {best[0]:.3f} < {target_accuracy} "
        f"after {restarts} restarts",
        trace=losses,
    )


# ---------------------------------------------------------------------------
# aggregated reports

@dataclass
class MetricReport:
    task: str
    dataset: str
    re: float
    miou: float
    ol: float
    fid: float
    count: int
    per_difficulty: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "task": self.task,
            "dataset": self.dataset,
            "re": self.re,
            "miou": self.miou,
            "ol": self.ol,
            "fid": self.fid,
            "count": self.count,
            "per_difficulty": self.per_difficulty,
        }

    def write_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task", "dataset", "RE", "mIoU", "OL", "FID", "difficulty"])
            for name, row in self.per_difficulty.items():
                fid_text = "" if row["fid"] is None else f"{row['fid']:.6f}"
                writer.writerow(
                    [self.task, self.dataset, f"{row['re']:.6f}", f"{row['miou']:.6f}",
                     f"{row['ol']:.6f}", fid_text, name]
                )
            writer.writerow(
                [self.task, self.dataset, f"{self.re:.6f}", f"{self.miou:.6f}",
                 f"{self.ol:.6f}", f"{self.fid:.6f}", "overall"]
            )


def build_report(
    task: str,
    dataset: str,
    generated: list[LayoutGraph],
    references: list[LayoutGraph],
    target_relations: list[RelationMatrix],
    extractor: FeatureExtractor,
) -> MetricReport:
    """Aggregate the four metrics over paired generated/reference layouts.

    RE, mIoU and OL are per-layout means (overall equals the count-weighted
    mean of the difficulty rows); FID is distributional, computed per set.
    """
    if not (len(generated) == len(references) == len(target_relations)):
        raise ContractError("generated, reference and target lists must align")
    rows = []
    for gen, ref, target in zip(generated, references, target_relations):
        rows.append(
            {
                "difficulty": difficulty(ref).value,
                "re": relation_error(derive_relations(gen), target),
                "miou": max_iou(gen, ref),
                "ol": overlap(gen),
            }
        )
    feats_gen = [extractor.features(g) for g in generated]
    feats_ref = [extractor.features(r) for r in references]

    per_difficulty: dict[str, dict[str, float]] = {}
    for level in Difficulty:
        idx = [i for i, row in enumerate(rows) if row["difficulty"] == level.value]
        if not idx:
            continue
        sub = {
            "re": float(np.mean([rows[i]["re"] for i in idx])),
            "miou": float(np.mean([rows[i]["miou"] for i in idx])),
            "ol": float(np.mean([rows[i]["ol"] for i in idx])),
            "count": len(idx),
        }
        # distributional distance needs at least two members per set
        sub["fid"] = fid([feats_gen[i] for i in idx], [feats_ref[i] for i in idx]) if len(idx) >= 2 else None
        per_difficulty[level.value] = sub

    return MetricReport(
        task=task,
        dataset=dataset,
        re=float(np.mean([r["re"] for r in rows])),
        miou=float(np.mean([r["miou"] for r in rows])),
        ol=float(np.mean([r["ol"] for r in rows])),
        fid=fid(feats_gen, feats_ref),
        count=len(rows),
        per_difficulty=per_difficulty,
    )
