import numpy as np
import pytest

from krst import encoder, nn
from krst import tensor as T
from krst.errors import DimensionError, VocabularyError
from krst.model import EMBED_DIM, ModelConfig, init_params
from krst.params import ParamStore


class TestProjectObjects:
    def test_identity_ignores_geometry(self, rng):
        O_s, O_p = rng.normal(size=(4, 5)), rng.uniform(size=(4, 6))
        W = np.hstack([np.eye(5), np.zeros((5, 6))])
        assert np.array_equal(encoder.project_objects(O_s, O_p, W).data, O_s)

    def test_geometry_block(self, rng):
        O_s, O_p = rng.normal(size=(4, 5)), rng.uniform(size=(4, 6))
        W = np.hstack([np.zeros((6, 5)), np.eye(6)])
        assert np.array_equal(encoder.project_objects(O_s, O_p, W).data, O_p)

    def test_rowwise_matvec(self, rng):
        O_s, O_p, W = rng.normal(size=(2, 3)), rng.normal(size=(2, 6)), rng.normal(size=(4, 9))
        out = encoder.project_objects(O_s, O_p, W).data
        for i in range(2):
            assert np.allclose(out[i], W @ np.concatenate([O_s[i], O_p[i]]), rtol=1e-14, atol=1e-14)

    def test_linearity(self, rng):
        O_s, O_p, W = rng.normal(size=(3, 3)), rng.normal(size=(3, 6)), rng.normal(size=(4, 9))
        a = encoder.project_objects(2.0 * O_s, 2.0 * O_p, W).data
        assert np.allclose(a, 2.0 * encoder.project_objects(O_s, O_p, W).data, rtol=1e-14)

    def test_bad_width(self, rng):
        with pytest.raises(DimensionError):
            encoder.project_objects(np.ones((2, 3)), np.ones((2, 6)), np.ones((4, 8)))


class TestTileAndFuse:
    def test_tile_index_contract(self, rng):
        I = rng.normal(size=(3, 4))
        tiled = encoder.tile(I, 5).data
        for t in range(3):
            for k in range(5):
                assert np.array_equal(tiled[t * 5 + k], I[t])

    def test_k_one_is_identity(self, rng):
        I = rng.normal(size=(3, 4))
        assert np.array_equal(encoder.tile(I, 1).data, I)

    def test_fusion_is_concat_then_mlp(self, rng):
        store = ParamStore()
        nn.init_mlp2(store, "f", 6, 5, 5, rng)
        O, I = rng.normal(size=(4, 3)), rng.normal(size=(2, 3))
        got = encoder.fuse_video_object(O, I, store, "f", 2).data
        joined = np.hstack([O, np.repeat(I, 2, axis=0)])
        want = nn.apply_mlp2(store, "f", joined).data
        assert np.array_equal(got, want)

    def test_row_mismatch(self, rng):
        store = ParamStore()
        nn.init_mlp2(store, "f", 6, 5, 5, rng)
        with pytest.raises(DimensionError):
            encoder.fuse_video_object(np.ones((5, 3)), np.ones((2, 3)), store, "f", 2)


def _qstore(rng, vocab=6, c_w=8):
    store = ParamStore()
    store.add("embed.table", rng.normal(size=(vocab, EMBED_DIM)))
    nn.init_lstm(store, "q.fwd", EMBED_DIM, c_w // 2, rng)
    nn.init_lstm(store, "q.bwd", EMBED_DIM, c_w // 2, rng)
    return store


class TestEncodeQuestion:
    def test_single_token(self, rng):
        store = _qstore(rng)
        q = encoder.encode_question([3], store["embed.table"], store, "q")
        assert q.Q_w.shape == (1, 1, 8) and np.array_equal(q.Q_w.data[0, 0], q.Q_s.data[0, 0])
        assert q.E.shape == (1, 1, EMBED_DIM)

    def test_order_matters(self, rng):
        store = _qstore(rng)
        a = encoder.encode_question([1, 2, 3], store["embed.table"], store, "q")
        b = encoder.encode_question([3, 2, 1], store["embed.table"], store, "q")
        assert not np.allclose(a.Q_w.data, b.Q_w.data)
        again = encoder.encode_question([1, 2, 3], store["embed.table"], store, "q")
        assert again.Q_w.data.tobytes() == a.Q_w.data.tobytes()

    def test_empty_and_unknown(self, rng):
        store = _qstore(rng)
        with pytest.raises(DimensionError):
            encoder.encode_question([], store["embed.table"], store, "q")
        with pytest.raises(VocabularyError):
            encoder.encode_question([1, 6], store["embed.table"], store, "q")


def _banks(rng, B=2, T_=2, K=3, C=8):
    boxes = np.tile(np.array([0.1, 0.1, 0.2, 0.3, 0.1, 0.2]), (B, T_ * K, 1))
    return (rng.normal(size=(B, T_, C)), rng.normal(size=(B, T_ * K, C)), boxes)


class TestTwoStream:
    cfg = ModelConfig(vocab_size=6, T=2, K=3, C=8, C_s=8, C_o=8, C_w=8)

    def test_identical_streams_match_with_shared_params(self, rng):
        store = init_params(self.cfg, 0)
        for name in store.names():
            if name.startswith("motion."):
                store[name].data = store[name.replace("motion.", "appearance.", 1)].data.copy()
        bank = _banks(rng)
        out = encoder.build_two_stream({"appearance": bank, "motion": bank}, np.array([[1, 2]] * 2), store, self.cfg)
        (oa, qa), (om, qm) = out["appearance"], out["motion"]
        assert np.array_equal(oa.data, om.data) and np.array_equal(qa.Q_w.data, qm.Q_w.data)

    def test_single_stream(self, rng):
        cfg = ModelConfig(vocab_size=6, T=2, K=3, C=8, C_s=8, C_o=8, C_w=8, two_stream=False)
        store = init_params(cfg, 0)
        assert not any(n.startswith("motion.") for n in store.names())
        out = encoder.build_two_stream({"appearance": _banks(rng)}, np.array([[1, 2]] * 2), store, cfg)
        assert list(out) == ["appearance"]

    def test_stream_params_disjoint(self):
        store = init_params(self.cfg, 0)
        app = {n.split(".", 1)[1] for n in store.names() if n.startswith("appearance.")}
        mot = {n.split(".", 1)[1] for n in store.names() if n.startswith("motion.")}
        assert app == mot and app
        shared = [n for n in store.names() if not n.startswith(("appearance.", "motion."))]
        assert set(shared) == {"embed.table", "merge.W", "merge.b", "head.cls.l1.W", "head.cls.l1.b",
                               "head.cls.l2.W", "head.cls.l2.b"}

    def test_stream_shape_mismatch(self, rng):
        store = init_params(self.cfg, 0)
        with pytest.raises(DimensionError):
            encoder.build_two_stream({"appearance": _banks(rng), "motion": _banks(rng, T_=3)},
                                     np.array([[1]] * 2), store, self.cfg)
