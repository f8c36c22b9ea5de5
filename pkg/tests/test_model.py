import numpy as np
import pytest

from agagi import autograd as ag
from agagi import model as md


def toy_config(**over):
    base = dict(
        extractor="cnn",
        vocab_size=12,
        n_classes=2,
        embed_dim=6,
        sent_len=5,
        filter_windows=(2, 3),
        filters_per_window=4,
        hidden_dim=8,
        epsilon=0.25,
        dropout="none",
        seed=0,
    )
    base.update(over)
    return md.ModelConfig(**base)


def toy_instance(config, seed=0, batch=None):
    rng = np.random.default_rng(seed)
    shape = (config.sent_len,) if batch is None else (batch, config.sent_len)
    tokens = rng.integers(0, config.vocab_size, size=shape)
    zshape = (
        (config.n_classes, config.sent_len)
        if batch is None
        else (batch, config.n_classes, config.sent_len)
    )
    zeta = rng.integers(0, 30, size=zshape).astype(np.float32)
    return tokens, zeta


class TestConfig:
    def test_paper_defaults(self):
        config = md.ModelConfig()
        assert config.filter_windows == (3, 4, 5)
        assert config.filters_per_window == 100
        assert config.hidden_dim == 128
        assert config.batch_size == 64
        assert config.beta == 0.5

    def test_cnn_feature_dim_is_window_sum(self):
        config = md.ModelConfig()
        assert config.feature_dim == 300

    def test_epsilon_range(self):
        with pytest.raises(md.ConfigError):
            toy_config(epsilon=0.6)

    def test_unknown_extractor(self):
        with pytest.raises(md.ConfigError):
            toy_config(extractor="transformer")

    def test_unknown_key_in_items(self):
        with pytest.raises(md.ConfigError, match="banana"):
            md.config_from_items([("banana", "1")])

    def test_items_round_trip(self):
        config = toy_config(epsilon=0.05, dropout="leaky")
        again = md.config_from_items([(k, str(v)) for k, v in config.to_items()])
        assert again == config


class TestParameters:
    def test_canonical_order(self):
        params = md.Parameters(toy_config())
        names = [n for n, _ in params.named()]
        assert names == [
            "embedding",
            "conv_w2",
            "conv_b2",
            "conv_w3",
            "conv_b3",
            "proj_sem_w",
            "proj_sem_b",
            "proj_stat_w",
            "proj_stat_b",
            "head_w0",
            "head_b0",
        ]

    def test_seeded_init_reproducible(self):
        a = md.Parameters(toy_config())
        b = md.Parameters(toy_config())
        for (_, ta), (_, tb) in zip(a.named(), b.named()):
            assert np.array_equal(ta.data, tb.data)

    def test_bias_zero_and_bounds(self):
        params = md.Parameters(toy_config())
        named = dict(params.named())
        assert np.all(named["proj_sem_b"].data == 0)
        assert np.abs(named["embedding"].data).max() <= 0.05
        d = params.config.feature_dim
        assert np.abs(named["proj_sem_w"].data).max() <= 1 / np.sqrt(d)

    def test_frozen_embeddings_not_trainable(self):
        params = md.Parameters(toy_config(freeze_embeddings=True))
        assert params.embedding not in params.trainable()


class TestExtractFeatures:
    def test_cnn_paper_row_count(self):
        config = toy_config(
            vocab_size=30, filter_windows=(3, 4, 5), filters_per_window=100, sent_len=7
        )
        params = md.Parameters(config)
        tokens, _ = toy_instance(config)
        feats = md.extract_features(md.embed(tokens, params), params, config)
        assert feats.data.shape == (300, 7)

    def test_cnn_zero_weights_give_activated_bias(self):
        config = toy_config()
        params = md.Parameters(config)
        for _, w, b in params.conv:
            w.data = np.zeros_like(w.data)
            b.data = np.full_like(b.data, -1.5)
        tokens, _ = toy_instance(config)
        feats = md.extract_features(md.embed(tokens, params), params, config)
        assert np.all(feats.data == 0.0)  # relu(-1.5)
        for _, w, b in params.conv:
            b.data = np.full_like(b.data, 0.75)
        feats = md.extract_features(md.embed(tokens, params), params, config)
        assert np.all(feats.data == 0.75)

    def test_lstm_zero_everything_gives_zero(self):
        config = toy_config(extractor="lstm")
        params = md.Parameters(config)
        params.lstm_wx.data = np.zeros_like(params.lstm_wx.data)
        params.lstm_wh.data = np.zeros_like(params.lstm_wh.data)
        params.embedding.data = np.zeros_like(params.embedding.data)
        tokens, _ = toy_instance(config)
        feats = md.extract_features(md.embed(tokens, params), params, config)
        assert np.all(feats.data == 0.0)

    def test_lstm_shape(self):
        config = toy_config(extractor="lstm", hidden_dim=8)
        params = md.Parameters(config)
        tokens, _ = toy_instance(config, batch=3)
        feats = md.extract_features(md.embed(tokens, params), params, config)
        assert feats.data.shape == (3, 8, config.sent_len)


class TestProjectShared:
    def test_identity_weights_pass_features(self):
        config = toy_config()
        params = md.Parameters(config)
        d = config.feature_dim
        params.proj_sem_w.data = np.eye(d, dtype=np.float32)
        params.proj_sem_b.data = np.zeros(d, dtype=np.float32)
        feats = ag.Tensor(np.random.default_rng(0).normal(size=(d, 5)).astype(np.float32))
        zeta = ag.Tensor(np.zeros((config.n_classes, 5), dtype=np.float32))
        hc, _ = md.project_shared(feats, zeta, params)
        np.testing.assert_allclose(hc.data, feats.data, rtol=1e-6)

    def test_zero_stats_zero_bias_gives_zero(self):
        config = toy_config()
        params = md.Parameters(config)
        d = config.feature_dim
        feats = ag.Tensor(np.zeros((d, 5), dtype=np.float32))
        zeta = ag.Tensor(np.zeros((config.n_classes, 5), dtype=np.float32))
        _, hz = md.project_shared(feats, zeta, params)
        assert np.all(hz.data == 0)

    def test_hand_projection(self):
        config = toy_config(filters_per_window=1, filter_windows=(2, 3), n_classes=2)
        params = md.Parameters(config)
        params.proj_stat_w.data = np.eye(2, dtype=np.float32)
        params.proj_stat_b.data = np.zeros(2, dtype=np.float32)
        zeta = ag.Tensor(np.array([[0.4], [0.0]], dtype=np.float32))
        feats = ag.Tensor(np.zeros((2, 1), dtype=np.float32))
        _, hz = md.project_shared(feats, zeta, params)
        np.testing.assert_allclose(hz.data[:, 0], [0.4, 0.0], rtol=1e-6)


class TestAdagate:
    def test_zero_preactivation_passes_half_hz(self):
        hc = ag.Tensor(np.zeros((3, 4), dtype=np.float32))
        hz = ag.Tensor(np.random.default_rng(0).normal(size=(3, 4)).astype(np.float32))
        for eps in (0.0, 0.1, 0.5):
            out = md.adagate(hc, hz, eps)
            np.testing.assert_allclose(out.data, 0.5 * hz.data, rtol=1e-6)

    def test_full_width_is_plain_sigmoid_fusion(self):
        rng = np.random.default_rng(1)
        hc = ag.Tensor(rng.normal(size=(4, 6)).astype(np.float32))
        hz = ag.Tensor(rng.normal(size=(4, 6)).astype(np.float32))
        out = md.adagate(hc, hz, 0.5)
        sig = 1 / (1 + np.exp(-hc.data.astype(np.float64)))
        expect = np.maximum(hc.data, 0) + sig * hz.data
        np.testing.assert_allclose(out.data, expect, rtol=1e-5)

    def test_zero_width_is_relu_only(self):
        rng = np.random.default_rng(2)
        hc = ag.Tensor(rng.normal(size=(4, 6)).astype(np.float32))
        hz = ag.Tensor(rng.normal(size=(4, 6)).astype(np.float32))
        out = md.adagate(hc, hz, 0.0)
        assert np.array_equal(out.data, np.maximum(hc.data, 0))

    def test_open_set_monotone_in_eps(self):
        rng = np.random.default_rng(3)
        sig = 1 / (1 + np.exp(-rng.normal(size=500)))
        prev = None
        for eps in np.linspace(0, 0.5, 21):
            open_set = np.abs(sig - 0.5) <= eps
            if prev is not None:
                assert np.all(open_set | ~prev)  # prev open stays open
            prev = open_set
        assert prev.all()


class TestAttendPool:
    def test_constant_scores_average_features(self):
        feats = ag.Tensor(np.arange(12.0, dtype=np.float32).reshape(3, 4))
        ho = ag.Tensor(np.ones((3, 4), dtype=np.float32))
        out = md.attend_pool(ho, feats)
        np.testing.assert_allclose(out.data, feats.data.mean(axis=1), rtol=1e-6)

    def test_single_position_passthrough(self):
        feats = ag.Tensor(np.array([[3.0], [5.0]], dtype=np.float32))
        ho = ag.Tensor(np.array([[0.2], [-4.0]], dtype=np.float32))
        out = md.attend_pool(ho, feats)
        np.testing.assert_allclose(out.data, [3.0, 5.0], rtol=1e-6)

    def test_derived_weighted_sum(self):
        ho = ag.Tensor(np.log(np.array([[1.0, 3.0]], dtype=np.float32)))
        feats = ag.Tensor(np.array([[10.0, 20.0]], dtype=np.float32))
        out = md.attend_pool(ho, feats)
        assert out.data[0] == pytest.approx(17.5, rel=1e-5)

    def test_output_in_row_hull(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            feats = ag.Tensor(rng.normal(size=(5, 7)).astype(np.float32))
            ho = ag.Tensor(rng.normal(size=(5, 7)).astype(np.float32))
            out = md.attend_pool(ho, feats).data
            assert np.all(out >= feats.data.min(axis=1) - 1e-5)
            assert np.all(out <= feats.data.max(axis=1) + 1e-5)


class TestClassify:
    def test_eval_mode_dropout_identity(self):
        config = toy_config(dropout="leaky", beta=0.9)
        params = md.Parameters(config)
        pooled = ag.Tensor(np.random.default_rng(0).normal(size=config.feature_dim).astype(np.float32))
        a = md.classify(pooled, params, config, mode="eval")
        b = md.classify(pooled, params, config, mode="eval")
        assert np.array_equal(a.data, b.data)

    def test_zero_weights_zero_logits(self):
        config = toy_config()
        params = md.Parameters(config)
        for w, b in params.head:
            w.data = np.zeros_like(w.data)
        pooled = ag.Tensor(np.ones(config.feature_dim, dtype=np.float32))
        out = md.classify(pooled, params, config, mode="eval")
        assert np.all(out.data == 0)

    def test_loss_ties_to_cross_entropy(self):
        logits = ag.Tensor(np.array([1.0, 2.0], dtype=np.float32))
        assert ag.cross_entropy(logits, 0).item() == pytest.approx(1.3133, abs=1e-4)

    def test_deeper_head_shapes(self):
        config = toy_config(head_depth=2)
        params = md.Parameters(config)
        pooled = ag.Tensor(np.ones((3, config.feature_dim), dtype=np.float32))
        out = md.classify(pooled, params, config, mode="eval")
        assert out.data.shape == (3, config.n_classes)


class TestForward:
    def test_gate_closed_equals_zeroed_branch_bitwise(self):
        config = toy_config(epsilon=0.0)
        params = md.Parameters(config)
        rng = np.random.default_rng(5)
        for _ in range(20):
            tokens = rng.integers(0, config.vocab_size, size=(2, config.sent_len))
            zeta = rng.integers(0, 50, size=(2, config.n_classes, config.sent_len)).astype(
                np.float32
            )
            a = md.forward(tokens, zeta, params, config, mode="eval")
            b = md.forward(tokens, zeta, params, config, mode="eval", zero_gi=True)
            assert np.array_equal(a.data, b.data)

    def test_eval_deterministic(self):
        config = toy_config(dropout="leaky")
        params = md.Parameters(config)
        tokens, zeta = toy_instance(config, batch=3)
        a = md.forward(tokens, zeta, params, config, mode="eval")
        b = md.forward(tokens, zeta, params, config, mode="eval")
        assert np.array_equal(a.data, b.data)

    def test_single_and_batched_agree(self):
        config = toy_config()
        params = md.Parameters(config)
        tokens, zeta = toy_instance(config, batch=3)
        batched = md.forward(tokens, zeta, params, config, mode="eval")
        for i in range(3):
            single = md.forward(tokens[i], zeta[i], params, config, mode="eval")
            np.testing.assert_allclose(single.data, batched.data[i], rtol=2e-5, atol=1e-6)

    def test_epsilon_widens_opening_monotonically(self):
        config = toy_config()
        params = md.Parameters(config)
        tokens, zeta = toy_instance(config)
        x = md.embed(tokens, params)
        feats = md.extract_features(x, params, config)
        from agagi.tcol import normalize_tcol

        zn = ag.Tensor(normalize_tcol(zeta, config.vocab_size))
        hc, _ = md.project_shared(feats, zn, params)
        sig = 1 / (1 + np.exp(-hc.data.astype(np.float64)))
        prev_open = None
        for eps in np.linspace(0.0, 0.5, 11):
            open_set = np.abs(sig - 0.5) <= eps
            if prev_open is not None:
                assert np.all(open_set >= prev_open)
            prev_open = open_set


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        config = toy_config(dropout="leaky", epsilon=0.05)
        params = md.Parameters(config)
        path = str(tmp_path / "model.bin")
        md.save_checkpoint(path, params, extra_items=[("classes", "neg,pos")])
        loaded, extra = md.load_checkpoint(path)
        assert extra["classes"] == "neg,pos"
        assert loaded.config == config
        for (na, ta), (nb, tb) in zip(params.named(), loaded.named()):
            assert na == nb
            assert np.array_equal(ta.data, tb.data)

    def test_truncated_rejected(self, tmp_path):
        config = toy_config()
        params = md.Parameters(config)
        path = tmp_path / "model.bin"
        md.save_checkpoint(str(path), params)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 10])
        with pytest.raises(md.CheckpointError, match="truncated"):
            md.load_checkpoint(str(path))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "model.bin"
        path.write_bytes(b"NOTAGA\x00\x01\x00\x00\x00")
        with pytest.raises(md.CheckpointError, match="magic"):
            md.load_checkpoint(str(path))

    def test_trailing_garbage_rejected(self, tmp_path):
        config = toy_config()
        params = md.Parameters(config)
        path = tmp_path / "model.bin"
        md.save_checkpoint(str(path), params)
        path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(md.CheckpointError, match="trailing"):
            md.load_checkpoint(str(path))


class TestEmbeddingImport:
    def test_found_words_overwritten_missing_kept(self, tmp_path):
        from agagi import corpus as cp

        vocab = cp.build_vocab([["alpha", "beta"]])
        config = toy_config(vocab_size=vocab.size, embed_dim=3)
        params = md.Parameters(config)
        before = params.embedding.data.copy()
        path = tmp_path / "vectors.txt"
        path.write_text("alpha 1.0 2.0 3.0\nmissingword 9 9 9\n", encoding="utf-8")
        found = md.apply_pretrained_embeddings(params, vocab, str(path))
        assert found == 1
        idx = vocab.encode_token("alpha")
        np.testing.assert_allclose(params.embedding.data[idx], [1.0, 2.0, 3.0])
        other = vocab.encode_token("beta")
        np.testing.assert_array_equal(params.embedding.data[other], before[other])

    def test_dimension_mismatch(self, tmp_path):
        from agagi import corpus as cp

        vocab = cp.build_vocab([["alpha"]])
        config = toy_config(vocab_size=vocab.size, embed_dim=3)
        params = md.Parameters(config)
        path = tmp_path / "vectors.txt"
        path.write_text("alpha 1.0 2.0\n", encoding="utf-8")
        with pytest.raises(md.ConfigError, match="line 1"):
            md.apply_pretrained_embeddings(params, vocab, str(path))
