"""Contrastive graph encoder with a relation decoder, trained from scratch.

Node features (geometry, category one-hot incl. the mask class, hashed
content stub) are projected to 128 dims, passed through five message-passing
layers (one neighbor weight per relation channel, mean aggregation, ReLU),
mean-pooled and projected to a 1024-dim graph embedding. Pairwise relation
scores come from per-channel bilinear forms over the final node states in
homogeneous coordinates. Gradients are computed by the reverse-mode tape in
autodiff.py.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, const, param
from .dataset import Triplet
from .errors import ContractError, DegenerateEmbeddingError, TrainingFailureError
from .model import CATEGORY_ORDER, ComponentNode, LayoutGraph, MASK_CLASS_INDEX
from .relations import CHANNELS, RelationChannel, RelationMatrix

RAW_DIM = 4 + 7 + 32     # bbox, category one-hot (6 + mask), content stub
FEATURE_DIM = 128
HIDDEN_DIM = 128
POOLED_DIM = 1024
N_LAYERS = 5
DEGREE_DIM = 2 * len(CHANNELS)
LAYER0_DIM = FEATURE_DIM + DEGREE_DIM
STUB_DIM = 32


# ---------------------------------------------------------------------------
# featurization

def stub_embedding(payload: str) -> np.ndarray:
    """Deterministic unit vector keyed by a 64-bit hash of the payload."""
    if not payload:
        return np.zeros(STUB_DIM)
    digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=8).digest()
    seed = int.from_bytes(digest, "big")
    vec = np.random.default_rng(seed).standard_normal(STUB_DIM)
    return vec / np.linalg.norm(vec)


def raw_node_features(node: ComponentNode) -> np.ndarray:
    """[bbox | category one-hot | content stub] before the learned projection."""
    out = np.zeros(RAW_DIM)
    onehot = np.zeros(7)
    if node.is_masked:
        onehot[MASK_CLASS_INDEX] = 1.0
    else:
        out[0:4] = (node.bbox.x, node.bbox.y, node.bbox.w, node.bbox.h)
        onehot[CATEGORY_ORDER.index(node.category)] = 1.0
        out[11:] = stub_embedding(node.content.payload)
    out[4:11] = onehot
    return out


def raw_graph_features(graph: LayoutGraph) -> np.ndarray:
    return np.stack([raw_node_features(nd) for nd in graph.nodes])


def featurize_node(node: ComponentNode, params: "EncoderParams") -> np.ndarray:
    """128-dim learned node feature."""
    raw = raw_node_features(node)
    return np.maximum(raw @ params.arrays["feat_w"] + params.arrays["feat_b"], 0.0)


# ---------------------------------------------------------------------------
# parameters

def _layer_names() -> list[str]:
    names = ["feat_w", "feat_b"]
    for layer in range(1, N_LAYERS + 1):
        names.append(f"l{layer}_self")
        for ch in CHANNELS:
            names.append(f"l{layer}_{ch.value}")
        names.append(f"l{layer}_bias")
    names += ["pool_w", "pool_b"]
    names += [f"dec_{ch.value}" for ch in CHANNELS]
    return names


@dataclass
class EncoderParams:
    arrays: dict[str, np.ndarray]
    seed: int

    @classmethod
    def initialize(cls, seed: int) -> "EncoderParams":
        rng = np.random.default_rng(seed)

        def he(fan_in, shape):
            return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)

        arrays: dict[str, np.ndarray] = {
            "feat_w": he(RAW_DIM, (RAW_DIM, FEATURE_DIM)),
            "feat_b": np.zeros(FEATURE_DIM),
        }
        for layer in range(1, N_LAYERS + 1):
            in_dim = LAYER0_DIM if layer == 1 else HIDDEN_DIM
            arrays[f"l{layer}_self"] = he(in_dim, (in_dim, HIDDEN_DIM))
            for ch in CHANNELS:
                arrays[f"l{layer}_{ch.value}"] = he(in_dim, (in_dim, HIDDEN_DIM)) * 0.5
            arrays[f"l{layer}_bias"] = np.zeros(HIDDEN_DIM)
        arrays["pool_w"] = he(HIDDEN_DIM, (HIDDEN_DIM, POOLED_DIM))
        arrays["pool_b"] = np.zeros(POOLED_DIM)
        for ch in CHANNELS:
            arrays[f"dec_{ch.value}"] = rng.standard_normal((HIDDEN_DIM + 1, HIDDEN_DIM + 1)) * 0.05
        return cls(arrays, seed)

    def copy(self) -> "EncoderParams":
        return EncoderParams({k: v.copy() for k, v in self.arrays.items()}, self.seed)

    def save(self, path: str | Path):
        meta = {"version": 1, "seed": self.seed, "shapes": {k: list(v.shape) for k, v in self.arrays.items()}}
        np.savez(path, __meta__=json.dumps(meta), **self.arrays)

    @classmethod
    def load(cls, path: str | Path) -> "EncoderParams":
        blob = np.load(path, allow_pickle=False)
        meta = json.loads(str(blob["__meta__"]))
        arrays = {k: blob[k] for k in blob.files if k != "__meta__"}
        for name, shape in meta["shapes"].items():
            if list(arrays[name].shape) != shape:
                raise ContractError(f"checkpoint shape mismatch for {name}")
        return cls(arrays, int(meta["seed"]))


@dataclass(frozen=True)
class GraphEmbedding:
    pooled: np.ndarray    # (1024,)
    per_node: np.ndarray  # (n, 128)


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.07
    negatives_per_anchor: int = 1

    def __post_init__(self):
        if self.tau <= 0:
            raise ContractError("temperature must be positive")


# ---------------------------------------------------------------------------
# forward pass

def _aggregation_matrices(m: RelationMatrix) -> list[np.ndarray]:
    """Per channel: row-normalized in-neighbor averaging (messages flow along edges)."""
    out = []
    for k in range(len(CHANNELS)):
        adj = m.stacked()[k].T.astype(np.float64)  # adj[i, j] = edge j -> i
        deg = adj.sum(axis=1, keepdims=True)
        out.append(np.divide(adj, np.maximum(deg, 1.0)))
    return out


def _degree_features(m: RelationMatrix) -> np.ndarray:
    n = m.n
    scale = 1.0 / max(n - 1, 1)
    cols = []
    for k in range(len(CHANNELS)):
        ch = m.stacked()[k]
        cols.append(ch.sum(axis=1) * scale)
        cols.append(ch.sum(axis=0) * scale)
    return np.stack(cols, axis=1)


def _encode_t(raw: Tensor, m: RelationMatrix, pt: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Tensor-valued forward pass; returns (per_node, pooled)."""
    feats = (raw @ pt["feat_w"] + pt["feat_b"]).relu()
    x = Tensor.concat([feats, const(_degree_features(m))], axis=1)
    aggs = [const(a) for a in _aggregation_matrices(m)]
    for layer in range(1, N_LAYERS + 1):
        z = x @ pt[f"l{layer}_self"]
        for k, ch in enumerate(CHANNELS):
            z = z + (aggs[k] @ x) @ pt[f"l{layer}_{ch.value}"]
        x = (z + pt[f"l{layer}_bias"]).relu()
    pooled = x.mean(axis=0) @ pt["pool_w"] + pt["pool_b"]
    return x, pooled


def _params_t(params: EncoderParams) -> dict[str, Tensor]:
    return {k: param(v) for k, v in params.arrays.items()}


def encode_graph(features: np.ndarray, m: RelationMatrix, params: EncoderParams) -> GraphEmbedding:
    """Encode pre-projection (n, 43) raw features against a relation matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != RAW_DIM:
        raise ContractError(f"expected (n, {RAW_DIM}) raw features, got {features.shape}")
    if features.shape[0] != m.n:
        raise ContractError("feature count does not match relation matrix size")
    per_node, pooled = _encode_t(const(features), m, {k: const(v) for k, v in params.arrays.items()})
    return GraphEmbedding(pooled.value.copy(), per_node.value.copy())


def embed_graph(graph: LayoutGraph, m: RelationMatrix, params: EncoderParams) -> GraphEmbedding:
    return encode_graph(raw_graph_features(graph), m, params)


def _decode_t(per_node: Tensor, pt: dict[str, Tensor], n: int) -> dict[RelationChannel, Tensor]:
    ones = const(np.ones((n, 1)))
    h = Tensor.concat([per_node, ones], axis=1)
    return {ch: (h @ pt[f"dec_{ch.value}"] @ h.T).sigmoid() for ch in CHANNELS}


def decode_relations(emb: GraphEmbedding, params: EncoderParams) -> dict[RelationChannel, np.ndarray]:
    """Pairwise relation scores in (0, 1), one (n, n) matrix per channel."""
    n = emb.per_node.shape[0]
    pt = {k: const(v) for k, v in params.arrays.items()}
    scores = _decode_t(const(emb.per_node), pt, n)
    return {ch: s.value.copy() for ch, s in scores.items()}


def binarize_scores(scores: dict[RelationChannel, np.ndarray], threshold: float = 0.5) -> RelationMatrix:
    """Threshold scores and repair symmetry: PARALLEL by max, directed channels
    keep the larger direction."""
    n = scores[RelationChannel.TOP].shape[0]
    data = np.zeros((4, n, n), dtype=bool)
    off = ~np.eye(n, dtype=bool)
    for k, ch in enumerate(CHANNELS):
        s = scores[ch]
        if ch is RelationChannel.PARALLEL:
            sym = np.maximum(s, s.T)
            data[k] = (sym > threshold) & off
        else:
            hit = (s > threshold) & (s >= s.T)
            both = hit & hit.T
            if both.any():  # exact ties keep the lower (i, j) direction
                upper = np.triu(np.ones((n, n), dtype=bool), 1)
                hit &= ~(both & ~upper)
            data[k] = hit & off
    return RelationMatrix(data).freeze()


# ---------------------------------------------------------------------------
# losses

def _cosine_t(a: Tensor, b: Tensor) -> Tensor:
    na = (a * a).sum().sqrt()
    nb = (b * b).sum().sqrt()
    if na.value <= 0 or nb.value <= 0:
        raise DegenerateEmbeddingError("cosine similarity undefined for zero-norm embedding")
    return (a * b).sum() * na.reciprocal() * nb.reciprocal()


def _simcse_t(anchor: Tensor, positive: Tensor, negatives: list[Tensor], cfg: LossConfig) -> Tensor:
    if not negatives:
        raise ContractError("contrastive loss needs at least one negative")
    inv_tau = 1.0 / cfg.tau
    pos_term = _cosine_t(anchor, positive) * inv_tau
    exp_sum = None
    for neg in negatives:
        term = (_cosine_t(anchor, neg) * inv_tau).exp()
        exp_sum = term if exp_sum is None else exp_sum + term
    return -pos_term + exp_sum.log()


def simcse_loss(anchor: np.ndarray, positive: np.ndarray, negatives: list[np.ndarray], cfg: LossConfig = LossConfig()) -> float:
    """Contrastive loss as written: -log(exp(sim(a,p)/tau) / sum_n exp(sim(a,n)/tau)).

    The denominator runs over the negatives only, so the value can be
    negative; with a single negative it reduces to (sim(a,n) - sim(a,p)) / tau.
    """
    return float(_simcse_t(const(anchor), const(positive), [const(x) for x in negatives], cfg).value)


SCORE_CLIP = 1e-7


def _decode_loss_t(scores: dict[RelationChannel, Tensor], target: RelationMatrix) -> Tensor:
    n = target.n
    off = const(~np.eye(n, dtype=bool))
    total = None
    for k, ch in enumerate(CHANNELS):
        t = const(target.stacked()[k].astype(np.float64))
        s = scores[ch].clip(SCORE_CLIP, 1.0 - SCORE_CLIP)
        bce = -(t * s.log() + (const(1.0) - t) * (const(1.0) - s).log())
        total = (bce * off).sum() if total is None else total + (bce * off).sum()
    return total * (1.0 / (4 * n * (n - 1)))


def relation_decode_loss(scores: dict[RelationChannel, np.ndarray], target: RelationMatrix) -> float:
    """Mean binary cross-entropy over off-diagonal entries of all channels."""
    n = target.n
    for ch in CHANNELS:
        if scores[ch].shape != (n, n):
            raise ContractError(f"score matrix for {ch.value} has shape {scores[ch].shape}, want {(n, n)}")
    if n < 2:
        return 0.0
    t_scores = {ch: const(scores[ch]) for ch in CHANNELS}
    return float(_decode_loss_t(t_scores, target).value)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    epochs: int = 50
    lr_initial: float = 1e-4
    lr_late_factor: float = 0.1
    lr_switch_frac: float = 0.2   # high LR for the first fifth of epochs, then /10
    batch_size: int = 8
    decode_weight: float = 1.0
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0

    def lr_at(self, epoch: int) -> float:
        switch = max(1, int(round(self.lr_switch_frac * self.epochs)))
        return self.lr_initial if epoch < switch else self.lr_initial * self.lr_late_factor


@dataclass
class EpochRecord:
    epoch: int
    simcse: float
    decode: float
    total: float


def _triplet_loss_t(triplet: Triplet, pt: dict[str, Tensor], cfg: TrainConfig) -> tuple[Tensor, Tensor, Tensor]:
    """Returns (simcse, decode, total) tensors for one triplet."""
    _, h_gt = _encode_t(const(raw_graph_features(triplet.gt_graph)), triplet.gt_relations, pt)
    pos_nodes, h_pos = _encode_t(const(raw_graph_features(triplet.pos.graph)), triplet.pos.visible, pt)
    _, h_neg = _encode_t(const(raw_graph_features(triplet.neg_graph)), triplet.neg_relations, pt)

    contrastive = _simcse_t(h_gt, h_pos, [h_neg], cfg.loss)
    scores = _decode_t(pos_nodes, pt, triplet.gt_graph.n)
    decode = _decode_loss_t(scores, triplet.gt_relations)
    total = contrastive + decode * cfg.decode_weight
    return contrastive, decode, total


def triplet_loss(triplet: Triplet, params: EncoderParams, cfg: TrainConfig) -> float:
    pt = {k: const(v) for k, v in params.arrays.items()}
    return float(_triplet_loss_t(triplet, pt, cfg)[2].value)


def train(corpus: list[Triplet], cfg: TrainConfig, initial: EncoderParams | None = None) -> tuple[EncoderParams, list[EpochRecord]]:
    """Mini-batch gradient descent with the two-stage learning-rate schedule."""
    if not corpus:
        raise ContractError("training corpus is empty")
    params = (initial or EncoderParams.initialize(cfg.seed)).copy()
    order_rng = np.random.default_rng(cfg.seed + 1)
    trace: list[EpochRecord] = []

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = order_rng.permutation(len(corpus))
        sums = np.zeros(3)
        for start in range(0, len(order), cfg.batch_size):
            batch = [corpus[i] for i in order[start : start + cfg.batch_size]]
            grads = {k: np.zeros_like(v) for k, v in params.arrays.items()}
            for triplet in batch:
                pt = _params_t(params)
                sim_t, dec_t, total_t = _triplet_loss_t(triplet, pt, cfg)
                if not np.isfinite(total_t.value):
                    raise TrainingFailureError(
                        f"non-finite loss at epoch {epoch} (simcse={sim_t.value}, decode={dec_t.value})",
                        trace=trace,
                    )
                total_t.backward()
                for k, t in pt.items():
                    if t.grad is not None:
                        grads[k] += t.grad
                sums += (float(sim_t.value), float(dec_t.value), float(total_t.value))
            scale = lr / len(batch)
            for k in params.arrays:
                params.arrays[k] -= scale * grads[k]
        trace.append(EpochRecord(epoch, *(sums / len(corpus))))
    return params, trace


def write_loss_trace(trace: list[EpochRecord], path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "simcse", "decode", "total"])
        for rec in trace:
            writer.writerow([rec.epoch, f"{rec.simcse:.8f}", f"{rec.decode:.8f}", f"{rec.total:.8f}"])


# ---------------------------------------------------------------------------
# evaluation helpers

def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= 0 or nb <= 0:
        raise DegenerateEmbeddingError("cosine similarity undefined for zero-norm embedding")
    return float(a @ b / (na * nb))


def ranking_accuracy(triplets: list[Triplet], params: EncoderParams) -> float:
    hits = 0
    for t in triplets:
        h_gt = embed_graph(t.gt_graph, t.gt_relations, params).pooled
        h_pos = embed_graph(t.pos.graph, t.pos.visible, params).pooled
        h_neg = embed_graph(t.neg_graph, t.neg_relations, params).pooled
        if cosine_similarity(h_gt, h_pos) > cosine_similarity(h_gt, h_neg):
            hits += 1
    return hits / len(triplets)


def decoder_f1(pairs: list[tuple[LayoutGraph, RelationMatrix]], params: EncoderParams) -> dict[RelationChannel, float]:
    """Micro-averaged per-channel F1 of binarized predictions vs. the truth."""
    tp = {ch: 0 for ch in CHANNELS}
    fp = {ch: 0 for ch in CHANNELS}
    fn = {ch: 0 for ch in CHANNELS}
    for graph, matrix in pairs:
        emb = embed_graph(graph, matrix, params)
        pred = binarize_scores(decode_relations(emb, params))
        off = ~np.eye(graph.n, dtype=bool)
        for k, ch in enumerate(CHANNELS):
            p = pred.stacked()[k] & off
            t = matrix.stacked()[k] & off
            tp[ch] += int((p & t).sum())
            fp[ch] += int((p & ~t).sum())
            fn[ch] += int((~p & t).sum())
    out = {}
    for ch in CHANNELS:
        denom = 2 * tp[ch] + fp[ch] + fn[ch]
        out[ch] = 1.0 if denom == 0 else 2 * tp[ch] / denom
    return out


# ---------------------------------------------------------------------------
# gradient verification

GRAD_CHECK_FLOOR = 1e-5  # absolute scale below which quotient noise dominates

def grad_check(
    params: EncoderParams,
    sample: Triplet,
    epsilon: float = 1e-5,
    cfg: TrainConfig | None = None,
    fraction: float = 0.01,
    seed: int = 0,
    max_coords: int = 300,
) -> float:
    """Max relative error between tape gradients and central finite differences
    over a random subset of parameter coordinates.

    ReLU makes the loss piecewise: a perturbation that crosses an activation
    kink biases the central difference without the gradient being wrong. When
    an estimate disagrees, the step is shrunk; only coordinates whose
    difference quotients converge are scored (non-converging neighborhoods sit
    on a kink and are skipped, which is the standard finite-difference caveat).
    The relative error uses an absolute floor of 1e-5 because difference
    quotients of a loss of magnitude ~1/tau carry ~1e-10 of cancellation
    noise, which caps what any finite-difference oracle can resolve.
    """
    cfg = cfg or TrainConfig()
    pt = _params_t(params)
    _, _, total = _triplet_loss_t(sample, pt, cfg)
    total.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in pt.items()}

    rng = np.random.default_rng(seed)
    coords: list[tuple[str, tuple[int, ...]]] = []
    for name, arr in params.arrays.items():
        k = max(1, int(round(fraction * arr.size)))
        flat = rng.choice(arr.size, size=min(k, arr.size), replace=False)
        coords.extend((name, np.unravel_index(int(f), arr.shape)) for f in flat)
    if len(coords) > max_coords:
        idx = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[int(i)] for i in idx]

    working = params.copy()

    def central(name, where, eps):
        original = working.arrays[name][where]
        working.arrays[name][where] = original + eps
        up = triplet_loss(sample, working, cfg)
        working.arrays[name][where] = original - eps
        down = triplet_loss(sample, working, cfg)
        working.arrays[name][where] = original
        return (up - down) / (2 * eps)

    worst = 0.0
    for name, where in coords:
        an = analytic[name][where]
        fd = central(name, where, epsilon)
        err = abs(fd - an) / max(abs(fd), abs(an), GRAD_CHECK_FLOOR)
        if err > 1e-5:
            refined = central(name, where, epsilon / 16)
            drift = abs(refined - fd) / max(abs(refined), abs(fd), 1e-8)
            if drift > 1e-4:
                # the estimate moved with the step size: kink in range; retry
                again = central(name, where, epsilon / 256)
                settle = abs(again - refined) / max(abs(again), abs(refined), 1e-8)
                if settle > 1e-3:
                    continue  # no convergent quotient at this coordinate
                fd = again
            else:
                fd = refined
            err = abs(fd - an) / max(abs(fd), abs(an), GRAD_CHECK_FLOOR)
        worst = max(worst, err)
    return worst
