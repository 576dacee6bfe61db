"""Acceptance suite: each test enforces one shipping criterion at its stated
tolerance and prints a [PASS] line. Run with `pytest tests/test_acceptance.py -v -s`.
"""

import json
import time

import numpy as np
import pytest

from layoutlab.dataset import (
    build_synthetic_corpus,
    build_triplets,
    mask_graph,
    split,
    synthesize_random_layout,
)
from layoutlab.encoder import (
    EncoderParams,
    LossConfig,
    TrainConfig,
    decoder_f1,
    grad_check,
    ranking_accuracy,
    train,
)
from layoutlab.metrics import (
    assignment_total,
    fid,
    max_iou,
    overlap,
    relation_error,
    train_corruption_classifier,
)
from layoutlab.model import parse_layout, serialize_layout
from layoutlab.relations import (
    CHANNELS,
    ConflictKind,
    Edit,
    RelationChannel,
    RelationMatrix,
    apply_edit,
    contain_forest,
    derive_relations,
    validate,
)
from layoutlab.synthesis import GenerationRequest, complete, synthesize
from layoutlab.tasks import ablation_reports

from test_relations import oracle_relations


def _ok(line: str):
    print(f"\n[PASS] {line}")


def _sibling_overlap(layout) -> float:
    m = derive_relations(layout)
    forest = contain_forest(m)
    anc = {i: set(forest.ancestors(i)) for i in range(1, layout.n + 1)}
    total = 0.0
    for i in range(1, layout.n + 1):
        for j in range(i + 1, layout.n + 1):
            if j in anc[i] or i in anc[j]:
                continue
            total += layout.nodes[i - 1].bbox.intersection_area(layout.nodes[j - 1].bbox)
    return total


def test_relation_derivation_oracle_equivalence():
    """1,000 seeded random layouts (n <= 32): derive_relations equals the
    independent brute-force pairwise oracle on all four channels, within 30 s."""
    rng = np.random.default_rng(2024)
    start = time.time()
    for trial in range(1000):
        n = int(rng.integers(2, 33))
        layout = synthesize_random_layout(n, int(rng.integers(2**31)), min_center_gap=2e-5)
        assert np.array_equal(derive_relations(layout).stacked(), oracle_relations(layout)), (
            f"oracle mismatch at trial {trial} (n={n})"
        )
    elapsed = time.time() - start
    assert elapsed < 30.0, f"oracle sweep took {elapsed:.1f}s"
    _ok(f"relation derivation == brute-force oracle on 1000 layouts in {elapsed:.1f}s")


def test_structural_round_trip():
    """synthesize(derive_relations(L)) reproduces the relation matrix exactly
    (RE = 0) with zero sibling overlap, over 100 seeded layouts."""
    rng = np.random.default_rng(7)
    for trial in range(100):
        n = int(rng.integers(2, 33))
        layout = synthesize_random_layout(n, int(rng.integers(2**31)), min_center_gap=2e-5)
        matrix = derive_relations(layout)
        result = synthesize(
            GenerationRequest(matrix, {}, frozenset(range(1, n + 1)), layout.canvas, seed=trial)
        )
        re = relation_error(derive_relations(result.layout), matrix)
        assert re == 0.0, f"trial {trial}: RE {re}"
        ov = _sibling_overlap(result.layout)
        assert ov == 0.0, f"trial {trial}: sibling overlap {ov}"
    _ok("structural round trip exact (RE = 0, overlap = 0) on 100 layouts")


def test_completion_contract():
    """Masking 15% and completing against the ground-truth matrix keeps RE = 0
    on specified pairs and preserves unmasked nodes bit-exactly, 100 trials."""
    rng = np.random.default_rng(11)
    for trial in range(100):
        n = int(rng.integers(8, 21))
        layout = synthesize_random_layout(n, int(rng.integers(2**31)))
        matrix = derive_relations(layout)
        masked = mask_graph(layout, matrix, 0.15, int(rng.integers(2**31)))
        result = complete(masked.graph, matrix, seed=trial)
        for nd in masked.graph.nodes:
            if not nd.is_masked:
                out = result.layout.nodes[nd.node_id - 1]
                assert out == nd, f"trial {trial}: node {nd.node_id} altered"
        derived = derive_relations(result.layout)
        missing = matrix.stacked() & ~derived.stacked()
        assert not missing.any(), f"trial {trial}: specified relations violated"
    _ok("completion honors the target matrix with bit-exact fixed nodes, 100 trials")


def test_gradient_correctness():
    """Tape gradients match central finite differences within 1e-4 relative
    error on 20 seeded small graphs (n <= 8)."""
    corpus = build_synthetic_corpus(40, 23, n_range=(4, 8))
    triplets = build_triplets(corpus, corpus.ids[:20], 5)
    params = EncoderParams.initialize(9)
    worst = 0.0
    for k, triplet in enumerate(triplets):
        err = grad_check(params, triplet, epsilon=1e-5, fraction=0.002, seed=k, max_coords=80)
        worst = max(worst, err)
        assert err < 1e-4, f"sample {k}: relative error {err:.2e}"
    _ok(f"gradient check < 1e-4 on 20 graphs (worst {worst:.2e})")


@pytest.fixture(scope="module")
def toy_training():
    corpus = build_synthetic_corpus(500, 5)
    parts = split(corpus.ids, 42)
    corpus.apply_split(parts)
    assert (len(parts.train), len(parts.val), len(parts.test)) == (350, 100, 50)
    train_triplets = build_triplets(corpus, list(parts.train), 7)
    test_triplets = build_triplets(corpus, list(parts.test), 9)
    cfg = TrainConfig(
        epochs=50,
        lr_initial=0.01,
        lr_switch_frac=0.4,
        batch_size=4,
        decode_weight=30.0,
        loss=LossConfig(tau=0.1),
        seed=0,
    )
    started = time.time()
    params, trace = train(train_triplets, cfg)
    duration = time.time() - started
    return corpus, parts, params, trace, test_triplets, duration


def test_toy_contrastive_training(toy_training):
    """500 synthetic layouts (350/100/50), <= 50 epochs: held-out triplet
    ranking accuracy >= 0.90 and per-channel decoder F1 >= 0.90, under 10 min."""
    corpus, parts, params, trace, test_triplets, duration = toy_training
    assert len(trace) <= 50
    assert duration < 600.0, f"training took {duration:.0f}s"
    rank = ranking_accuracy(test_triplets, params)
    assert rank >= 0.90, f"ranking accuracy {rank:.3f}"
    pairs = [(corpus[i].graph, corpus[i].relations) for i in parts.test]
    f1 = decoder_f1(pairs, params)
    for channel, value in f1.items():
        assert value >= 0.90, f"{channel.value} F1 {value:.3f}"
    summary = ", ".join(f"{ch.value}={value:.3f}" for ch, value in f1.items())
    _ok(
        f"toy training: ranking {rank:.3f}, decoder F1 {{{summary}}} "
        f"in {duration:.0f}s / 50 epochs"
    )


def test_ablation_direction(toy_training):
    """Generation from the decoded relation matrix beats the all-zeros
    baseline: strictly lower RE and strictly higher mIoU on the held-out set."""
    corpus, parts, params, *_ = toy_training
    with_rm, without_rm = ablation_reports(corpus, list(parts.test), params, seed=3)
    assert with_rm.re < without_rm.re, (
        f"RE with matrix {with_rm.re:.4f} !< baseline {without_rm.re:.4f}"
    )
    assert with_rm.miou > without_rm.miou, (
        f"mIoU with matrix {with_rm.miou:.4f} !> baseline {without_rm.miou:.4f}"
    )
    _ok(
        f"ablation: RE {with_rm.re:.4f} < {without_rm.re:.4f}, "
        f"mIoU {with_rm.miou:.4f} > {without_rm.miou:.4f}"
    )


def test_metric_self_consistency():
    """mIoU(L, L) = 1 +- 1e-9; RE(M, M) = 0; fid(X, X) < 1e-6; overlap of every
    guillotine layout = 0; the 2x2 assignment example beats greedy matching."""
    rng = np.random.default_rng(3)
    for seed in range(30):
        layout = synthesize_random_layout(int(rng.integers(2, 24)), seed, min_center_gap=2e-5)
        matrix = derive_relations(layout)
        assert abs(max_iou(layout, layout) - 1.0) <= 1e-9
        assert relation_error(matrix, matrix) == 0.0
        assert overlap(layout) == 0.0
    feats = [rng.standard_normal(16) for _ in range(64)]
    assert fid(feats, list(feats)) < 1e-6
    weights = np.array([[0.9, 0.8], [0.85, 0.1]])
    optimal = assignment_total(weights)
    greedy = 0.9 + 0.1
    assert optimal == pytest.approx(1.65) and optimal > greedy
    _ok("metric self-consistency holds (identity scores, fid(X,X), 2x2 assignment)")


def test_listing_format_round_trip():
    """serialize -> parse -> serialize is byte-identical for 1,000 layouts and
    the published sample record round-trips verbatim."""
    rng = np.random.default_rng(17)
    for trial in range(1000):
        layout = synthesize_random_layout(int(rng.integers(1, 15)), int(rng.integers(2**31)))
        matrix = derive_relations(layout)
        text = serialize_layout(layout, matrix)
        graph2, matrix2 = parse_layout(text)
        assert serialize_layout(graph2, matrix2) == text, f"trial {trial} not byte-identical"

    from test_model import LISTING_RECORD, _listing_document

    graph, matrix = parse_layout(json.dumps(_listing_document()))
    assert json.loads(serialize_layout(graph, matrix))[0] == LISTING_RECORD
    _ok("layout JSON round trip byte-identical on 1000 layouts; sample record verbatim")


def test_conflict_handling():
    """Injected positional cycles, contain cycles and contain/parallel clashes
    are all detected; human edits always beat machine entries and report what
    they cleared."""
    rng = np.random.default_rng(29)
    detected = {"positional_cycle": 0, "contain_cycle": 0, "contain_parallel_clash": 0}
    for trial in range(100):
        n = int(rng.integers(4, 12))
        cycle_len = int(rng.integers(2, min(n, 5) + 1))
        nodes = list(rng.choice(n, size=cycle_len, replace=False) + 1)

        data = np.zeros((4, n, n), dtype=bool)
        channel = (RelationChannel.TOP, RelationChannel.LEFT)[trial % 2]
        k = CHANNELS.index(channel)
        for a, b in zip(nodes, nodes[1:] + nodes[:1]):
            data[k, a - 1, b - 1] = True
        conflicts = validate(RelationMatrix(data).freeze())
        if any(c.kind is ConflictKind.POSITIONAL_CYCLE and set(nodes) <= set(c.nodes) for c in conflicts):
            detected["positional_cycle"] += 1

        data = np.zeros((4, n, n), dtype=bool)
        ck = CHANNELS.index(RelationChannel.CONTAIN)
        for a, b in zip(nodes, nodes[1:] + nodes[:1]):
            data[ck, a - 1, b - 1] = True
        conflicts = validate(RelationMatrix(data).freeze())
        if any(c.kind is ConflictKind.CONTAIN_CYCLE for c in conflicts):
            detected["contain_cycle"] += 1

        data = np.zeros((4, n, n), dtype=bool)
        i, j = nodes[0], nodes[1]
        data[ck, i - 1, j - 1] = True
        pk = CHANNELS.index(RelationChannel.PARALLEL)
        data[pk, i - 1, j - 1] = data[pk, j - 1, i - 1] = True
        conflicts = validate(RelationMatrix(data).freeze())
        if any(c.kind is ConflictKind.CONTAIN_PARALLEL_CLASH for c in conflicts):
            detected["contain_parallel_clash"] += 1

    assert detected == {
        "positional_cycle": 100,
        "contain_cycle": 100,
        "contain_parallel_clash": 100,
    }, f"detection counts {detected}"

    overridden = 0
    for trial in range(100):
        layout = synthesize_random_layout(int(rng.integers(4, 14)), trial + 6000)
        matrix = derive_relations(layout)
        entries = list(zip(*matrix.top.nonzero()))
        if not entries:
            continue
        i, j = (int(v) for v in entries[int(rng.integers(len(entries)))])
        outcome = apply_edit(matrix, Edit("set", RelationChannel.TOP, j + 1, i + 1, origin="human"))
        assert outcome.matrix.top[j, i] and not outcome.matrix.top[i, j]
        assert any(c.channel is RelationChannel.TOP and (c.i, c.j) == (i + 1, j + 1) for c in outcome.cleared)
        overridden += 1
    assert overridden >= 95
    _ok(f"conflict handling: 100% detection, human edits won in all {overridden} override trials")
