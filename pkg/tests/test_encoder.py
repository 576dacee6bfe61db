import numpy as np
import pytest

from layoutlab.autodiff import const
from layoutlab.dataset import Triplet, build_triplets, mask_graph, synthesize_random_layout
from layoutlab.encoder import (
    EncoderParams,
    GraphEmbedding,
    LossConfig,
    TrainConfig,
    binarize_scores,
    cosine_similarity,
    decode_relations,
    decoder_f1,
    embed_graph,
    encode_graph,
    featurize_node,
    grad_check,
    raw_graph_features,
    raw_node_features,
    relation_decode_loss,
    simcse_loss,
    stub_embedding,
    train,
    triplet_loss,
)
from layoutlab.errors import ContractError, DegenerateEmbeddingError
from layoutlab.model import MASK, BBox, Category, ComponentNode, ContentStub, LayoutGraph
from layoutlab.relations import CHANNELS, RelationChannel, RelationMatrix, derive_relations


@pytest.fixture(scope="module")
def params():
    return EncoderParams.initialize(0)


class TestFeaturization:
    def test_mask_sentinel(self):
        raw = raw_node_features(ComponentNode(3, MASK, None))
        assert np.array_equal(raw[0:4], np.zeros(4))
        onehot = raw[4:11]
        assert onehot[6] == 1.0 and onehot.sum() == 1.0
        assert np.array_equal(raw[11:], np.zeros(32))

    def test_identical_payloads_identical_embeddings(self):
        assert np.array_equal(stub_embedding("icon-biff"), stub_embedding("icon-biff"))

    def test_distinct_payloads_mostly_decorrelated(self):
        rng = np.random.default_rng(1)
        hits = 0
        trials = 10_000
        for _ in range(trials):
            a, b = rng.integers(1 << 40, size=2)
            ea, eb = stub_embedding(f"p{a}"), stub_embedding(f"p{b}")
            if abs(float(ea @ eb)) < 0.5:
                hits += 1
        assert hits / trials > 0.99

    def test_projection_shape(self, params):
        node = ComponentNode(1, Category.TEXT, BBox(0.3, 0.3, 0.2, 0.1), ContentStub("text", "t"))
        vec = featurize_node(node, params)
        assert vec.shape == (128,)
        assert np.isfinite(vec).all()


def single_node_graph():
    return LayoutGraph((100, 100), (ComponentNode(1, Category.BACKGROUND, BBox(0.5, 0.5, 1.0, 1.0)),))


class TestEncode:
    def test_single_node_equals_stacked_mlp(self, params):
        g = single_node_graph()
        m = RelationMatrix.zeros(1).freeze()
        emb = embed_graph(g, m, params)
        # replicate by hand: featurize, append zero degrees, run the layers
        x = np.maximum(raw_node_features(g.nodes[0]) @ params.arrays["feat_w"] + params.arrays["feat_b"], 0)
        x = np.concatenate([x, np.zeros(8)])
        for layer in range(1, 6):
            x = np.maximum(x @ params.arrays[f"l{layer}_self"] + params.arrays[f"l{layer}_bias"], 0)
        pooled = x @ params.arrays["pool_w"] + params.arrays["pool_b"]
        assert np.allclose(emb.per_node[0], x, atol=1e-12)
        assert np.allclose(emb.pooled, pooled, atol=1e-12)

    def test_permutation_equivariance(self, params):
        g = synthesize_random_layout(9, 13)
        m = derive_relations(g)
        feats = raw_graph_features(g)
        emb = embed_graph(g, m, params)
        rng = np.random.default_rng(5)
        perm = rng.permutation(g.n)
        pfeats = feats[perm]
        pm = RelationMatrix(m.stacked()[:, perm][:, :, perm]).freeze()
        pemb = encode_graph(pfeats, pm, params)
        assert np.allclose(pemb.per_node, emb.per_node[perm], atol=1e-9)
        assert np.allclose(pemb.pooled, emb.pooled, atol=1e-9)
        scores = decode_relations(emb, params)
        pscores = decode_relations(pemb, params)
        for ch in CHANNELS:
            assert np.allclose(pscores[ch], scores[ch][perm][:, perm], atol=1e-9)

    def test_self_similarity_is_one(self, params):
        g = synthesize_random_layout(7, 3)
        emb = embed_graph(g, derive_relations(g), params)
        assert cosine_similarity(emb.pooled, emb.pooled) == pytest.approx(1.0, abs=1e-12)

    def test_dimension_checks(self, params):
        with pytest.raises(ContractError):
            encode_graph(np.zeros((3, 10)), RelationMatrix.zeros(3).freeze(), params)
        with pytest.raises(ContractError):
            encode_graph(np.zeros((3, 43)), RelationMatrix.zeros(4).freeze(), params)

    def test_deterministic(self, params):
        g = synthesize_random_layout(8, 21)
        m = derive_relations(g)
        a = embed_graph(g, m, params)
        b = embed_graph(g, m, params)
        assert np.array_equal(a.pooled, b.pooled)


class TestDecode:
    def test_diagonal_forced_zero(self, params):
        g = synthesize_random_layout(6, 2)
        emb = embed_graph(g, derive_relations(g), params)
        pred = binarize_scores(decode_relations(emb, params))
        for k in range(4):
            assert not np.diagonal(pred.stacked()[k]).any()

    def test_binarization_repairs_symmetry(self):
        n = 3
        rng = np.random.default_rng(0)
        scores = {ch: rng.uniform(0.0, 1.0, (n, n)) for ch in CHANNELS}
        pred = binarize_scores(scores)
        par = pred.parallel
        assert np.array_equal(par, par.T)
        for k, ch in enumerate(CHANNELS):
            if ch is RelationChannel.PARALLEL:
                continue
            mat = pred.stacked()[k]
            assert not (mat & mat.T).any()

    def test_untrained_f1_near_base_rate(self, params):
        pairs = []
        for seed in range(30):
            g = synthesize_random_layout(8, seed + 100)
            pairs.append((g, derive_relations(g)))
        f1 = decoder_f1(pairs, params)
        for ch, value in f1.items():
            assert value < 0.7, f"untrained decoder should not score {value} on {ch}"


class TestLosses:
    def test_simcse_equal_sims_zero(self):
        a = np.array([1.0, 0.0, 0.0])
        p = np.array([0.5, 0.5, 0.0])
        n = np.array([0.5, 0.0, 0.5])  # same cosine to a as p
        for tau in (0.05, 0.5, 2.0):
            assert simcse_loss(a, p, [n], LossConfig(tau=tau)) == pytest.approx(0.0, abs=1e-12)

    def test_simcse_direct_substitution(self):
        a = np.array([1.0, 0.0])
        p = np.array([2.0, 0.0])       # sim = 1
        n = np.array([0.0, 3.0])       # sim = 0
        assert simcse_loss(a, p, [n], LossConfig(tau=1.0)) == pytest.approx(-1.0, abs=1e-12)

    def test_simcse_monotone_in_positive_similarity(self):
        a = np.array([1.0, 0.0])
        n = np.array([0.0, 1.0])
        sims = []
        for angle in (0.1, 0.4, 0.8, 1.2):
            p = np.array([np.cos(angle), np.sin(angle)])
            sims.append(simcse_loss(a, p, [n], LossConfig(tau=0.3)))
        assert sims == sorted(sims)  # loss grows as sim(a, p) falls

    def test_simcse_zero_norm_rejected(self):
        with pytest.raises(DegenerateEmbeddingError):
            simcse_loss(np.zeros(3), np.ones(3), [np.ones(3)])

    def test_simcse_requires_negative(self):
        with pytest.raises(ContractError):
            simcse_loss(np.ones(3), np.ones(3), [])

    def test_decode_loss_exact_match(self):
        g = synthesize_random_layout(6, 5)
        m = derive_relations(g)
        scores = {
            ch: np.clip(m.stacked()[k].astype(float), 1e-7, 1 - 1e-7)
            for k, ch in enumerate(CHANNELS)
        }
        assert relation_decode_loss(scores, m) <= 1e-6

    def test_decode_loss_all_half(self):
        g = synthesize_random_layout(6, 5)
        m = derive_relations(g)
        scores = {ch: np.full((6, 6), 0.5) for ch in CHANNELS}
        assert relation_decode_loss(scores, m) == pytest.approx(np.log(2), abs=1e-9)

    def test_decode_loss_dimension_check(self):
        m = RelationMatrix.zeros(4).freeze()
        scores = {ch: np.full((3, 3), 0.5) for ch in CHANNELS}
        with pytest.raises(ContractError):
            relation_decode_loss(scores, m)


def tiny_triplet(seed=0):
    g = synthesize_random_layout(6, seed)
    m = derive_relations(g)
    neg = synthesize_random_layout(7, seed + 1)
    return Triplet("a", g, m, mask_graph(g, m, 0.2, seed), "b", neg, derive_relations(neg))


class TestTraining:
    def test_overfit_one_triplet(self):
        t = tiny_triplet(3)
        cfg = TrainConfig(epochs=200, lr_initial=0.02, batch_size=1, seed=0, decode_weight=5.0)
        params0 = EncoderParams.initialize(0)
        start = triplet_loss(t, params0, cfg)
        trained, trace = train([t], cfg, initial=params0)
        end = triplet_loss(t, trained, cfg)
        assert end <= start - 0.5 * abs(start)

    def test_seeded_runs_identical(self):
        triplets = [tiny_triplet(s) for s in range(4)]
        cfg = TrainConfig(epochs=3, lr_initial=0.01, batch_size=2, seed=9)
        _, trace_a = train(triplets, cfg)
        _, trace_b = train(triplets, cfg)
        assert [(r.simcse, r.decode, r.total) for r in trace_a] == [
            (r.simcse, r.decode, r.total) for r in trace_b
        ]

    def test_empty_corpus_rejected(self):
        with pytest.raises(ContractError):
            train([], TrainConfig())

    def test_checkpoint_round_trip(self, tmp_path, params):
        path = tmp_path / "enc.npz"
        params.save(path)
        again = EncoderParams.load(path)
        assert again.seed == params.seed
        for name, arr in params.arrays.items():
            assert np.array_equal(again.arrays[name], arr)

    def test_decode_loss_improves_with_training(self):
        t = tiny_triplet(11)
        cfg = TrainConfig(epochs=100, lr_initial=0.01, batch_size=1, seed=1, decode_weight=10.0)
        params0 = EncoderParams.initialize(1)
        trained, trace = train([t], cfg, initial=params0)
        assert trace[-1].decode < trace[0].decode


class TestGradCheck:
    def test_small_graphs_under_tolerance(self):
        t = tiny_triplet(7)
        params = EncoderParams.initialize(3)
        err = grad_check(params, t, fraction=0.003, seed=2, max_coords=120)
        assert err < 1e-4

    def test_zero_loss_configuration_has_zero_gradient(self):
        g = synthesize_random_layout(5, 2)
        m = derive_relations(g)
        degenerate = Triplet(
            "a", g, m,
            mask_graph(g, m, 0.2, 0),
            "b", g, m,
        )
        # positive == negative == anchor graph: contrastive term is identically 0
        from layoutlab.encoder import _params_t, _encode_t, _simcse_t

        params = EncoderParams.initialize(0)
        pt = _params_t(params)
        _, h = _encode_t(const(raw_graph_features(g)), m, pt)
        loss = _simcse_t(h, h, [h], LossConfig())
        assert abs(float(loss.value)) <= 1e-12
        loss.backward()
        for t_ in pt.values():
            if t_.grad is not None:
                assert np.abs(t_.grad).max() <= 1e-8

    def test_epsilon_convergence_second_order(self):
        # central differences converge at O(eps^2): quadrupling the error when
        # eps doubles, measured against the analytic gradient
        t = tiny_triplet(5)
        params = EncoderParams.initialize(5)
        cfg = TrainConfig()

        from layoutlab.encoder import _params_t, _triplet_loss_t

        pt = _params_t(params)
        _, _, total = _triplet_loss_t(t, pt, cfg)
        total.backward()
        name = "pool_w"
        where = (3, 11)
        analytic = pt[name].grad[where]

        def fd(eps):
            working = params.copy()
            orig = working.arrays[name][where]
            working.arrays[name][where] = orig + eps
            up = triplet_loss(t, working, cfg)
            working.arrays[name][where] = orig - eps
            down = triplet_loss(t, working, cfg)
            return (up - down) / (2 * eps)

        errs = [abs(fd(eps) - analytic) for eps in (4e-3, 8e-3, 16e-3)]
        assert errs[0] > 1e-12  # above the noise floor
        for small, big in zip(errs, errs[1:]):
            assert 2.0 < big / small < 8.0
