"""
Unit tests for the multi-scale self-attentive encoder.

Tests for camse/encoder.py
"""

import numpy as np
from django.test import SimpleTestCase

from qa_engine.camse import numerics as nx
from qa_engine.camse.encoder import (
    CamseConfig,
    CamseParams,
    contextual_attention,
    embed_tensor,
    encode,
    multi_scale_context,
)
from qa_engine.camse.exceptions import ConfigError, DimensionError, SequenceTooShortError
from qa_engine.camse.text import Vocabulary, lookup, random_embeddings, tokenize

WORDS = 'the patient had a high fever and a dry cough for days'.split()


def _setup(config, seed=0, trainable=False):
    vocab = Vocabulary(WORDS)
    table = random_embeddings(vocab, config.embedding_dim, seed=seed, trainable=trainable)
    params = nx.ParameterSet()
    encoder = CamseParams(config, params, np.random.default_rng(seed))
    return vocab, table, params, encoder


# ============================================================================
# Shape Tests
# ============================================================================

class EncoderShapeTests(SimpleTestCase):
    """Tests for encoder output shapes and attention normalization."""

    def setUp(self):
        self.config = CamseConfig(scales=3, subspaces=15, embedding_dim=8, context_size=128,
                                  attention_context_size=8, attention_hidden=16, dropout=0.0,
                                  attention_context=True)
        self.vocab, self.table, self.params, self.encoder = _setup(self.config)
        self.seq = tokenize(' '.join(WORDS[:10]), self.vocab)

    def test_tensor_shape(self):
        """Test that a 10-token sentence gives a 3×15×256 tensor."""
        t = encode(self.seq, self.table, self.encoder)
        self.assertEqual(t.k, 3)
        self.assertEqual(t.as_array().shape, (3, 15, 256))

    def test_context_lengths_per_scale(self):
        """Test that scale i yields n-i+1 context rows."""
        contexts = multi_scale_context(lookup(self.seq, self.table), self.encoder)
        self.assertEqual([h.shape for h in contexts], [(10, 256), (9, 256), (8, 256)])

    def test_attention_columns_sum_to_one(self):
        """Test that every subspace distributes unit weight over positions."""
        t = encode(self.seq, self.table, self.encoder)
        for a in t.attention:
            np.testing.assert_allclose(a.data.sum(axis=0), np.ones(15), atol=1e-5)
            self.assertTrue(np.all(a.data >= 0))

    def test_sequence_shorter_than_scales(self):
        """Test that fewer tokens than scales is rejected."""
        with self.assertRaises(SequenceTooShortError):
            encode(tokenize('high fever', self.vocab), self.table, self.encoder)

    def test_sequence_of_exactly_k_tokens(self):
        """Test that n = k leaves a single position at the widest scale."""
        t = encode(tokenize('high fever and', self.vocab), self.table, self.encoder)
        np.testing.assert_allclose(t.attention[2].data, np.ones((1, 15)), atol=1e-6)

    def test_parameter_names(self):
        """Test per-scale parameter naming and shapes."""
        self.assertEqual(self.params['scale2.conv.weight'].shape, (16, 8))
        self.assertEqual(self.params['scale1.attention.w_s1'].shape, (256, 16))
        self.assertEqual(self.params['scale3.attention.w_s2'].shape, (16, 15))
        self.assertIn('scale3.attention.fwd.w_x', self.params)


# ============================================================================
# Behaviour Tests
# ============================================================================

class EncoderBehaviourTests(SimpleTestCase):
    """Tests for isolation, dropout modes and the plain-attention variant."""

    def setUp(self):
        self.config = CamseConfig(scales=2, subspaces=3, embedding_dim=4, context_size=3,
                                  attention_context_size=2, attention_hidden=5, dropout=0.3)
        self.vocab, self.table, self.params, self.encoder = _setup(self.config)

    def test_encoding_is_isolated(self):
        """Test that encoding another sentence first does not change a result."""
        seq = tokenize('the patient had a fever', self.vocab)
        alone = encode(seq, self.table, self.encoder).as_array()
        encode(tokenize('dry cough for days', self.vocab), self.table, self.encoder)
        again = encode(seq, self.table, self.encoder).as_array()
        np.testing.assert_array_equal(alone, again)

    def test_eval_mode_ignores_dropout(self):
        """Test that eval encodings are deterministic and training ones are not."""
        seq = tokenize('the patient had a fever', self.vocab)
        first = encode(seq, self.table, self.encoder).as_array()
        np.testing.assert_array_equal(first, encode(seq, self.table, self.encoder).as_array())
        rng = np.random.default_rng(0)
        noisy = encode(seq, self.table, self.encoder, training=True, rng=rng).as_array()
        self.assertFalse(np.array_equal(first, noisy))

    def test_plain_attention_variant(self):
        """Test that without the attention context unit W_s2 maps d_a to r."""
        config = CamseConfig(scales=2, subspaces=3, embedding_dim=4, context_size=3,
                             attention_hidden=5, attention_context=False)
        _, table, params, encoder = _setup(config)
        self.assertEqual(params['scale1.attention.w_s2'].shape, (5, 3))
        self.assertNotIn('scale1.attention.fwd.w_x', params)
        t = encode(tokenize('the patient had a fever', self.vocab), table, encoder)
        self.assertEqual(t.as_array().shape, (2, 3, 6))

    def test_attention_width_checked(self):
        """Test that a context matrix of the wrong width is rejected."""
        with self.assertRaises(DimensionError):
            contextual_attention(nx.Tensor(np.ones((4, 5))), self.encoder.scales[0], self.config)
        with self.assertRaises(DimensionError):
            embed_tensor(nx.Tensor(np.ones((4, 6))), nx.Tensor(np.ones((3, 3))))

    def test_attention_size_defaults_to_context(self):
        """Test that u2 = 0 means u2 = u1."""
        config = CamseConfig(scales=1, subspaces=2, embedding_dim=4, context_size=7, attention_context_size=0)
        self.assertEqual(config.attention_size, 7)
        self.assertEqual(config.output_width, 14)

    def test_invalid_configuration(self):
        """Test configuration validation."""
        with self.assertRaises(ConfigError):
            CamseConfig(scales=0)
        with self.assertRaises(ConfigError):
            CamseConfig(dropout=1.0)


class EncoderGradientTests(SimpleTestCase):
    """Finite-difference check through the whole encoder."""

    def test_encode_gradients(self):
        """Test backward through conv, both Bi-LSTMs, attention and the tensor product."""
        with nx.precision('f64'):
            config = CamseConfig(scales=2, subspaces=2, embedding_dim=3, context_size=2,
                                 attention_context_size=2, attention_hidden=3, dropout=0.0)
            vocab, table, params, encoder = _setup(config, seed=4, trainable=True)
            params.add(table.weights)
            seq = tokenize('the patient had fever', vocab)
            weights = [nx.Tensor(w) for w in np.random.default_rng(5).normal(size=(2, 2, 4))]

            def f():
                t = encode(seq, table, encoder)
                return nx.add(nx.reduce_sum(nx.mul(t.scales[0], weights[0])),
                              nx.reduce_sum(nx.mul(t.scales[1], weights[1])))

            self.assertLess(nx.grad_check(f, list(params)), 1e-4)


# ============================================================================
# Attention and Tensor Property Tests
# ============================================================================

class AttentionPropertyTests(SimpleTestCase):
    """Tests for attention normalization and the weighted tensor rows."""

    def test_columns_sum_to_one_over_many_models(self):
        """Test unit column sums for 100 random models and sentences."""
        config = CamseConfig(scales=2, subspaces=3, embedding_dim=4, context_size=3,
                             attention_context_size=2, attention_hidden=4, dropout=0.0)
        with nx.precision('f64'):
            for seed in range(100):
                vocab, table, _, encoder = _setup(config, seed=seed)
                rng = np.random.default_rng(seed)
                words = [WORDS[int(i)] for i in rng.integers(len(WORDS), size=int(rng.integers(2, 9)))]
                t = encode(tokenize(' '.join(words), vocab), table, encoder)
                for a in t.attention:
                    np.testing.assert_allclose(a.data.sum(axis=0), np.ones(3), rtol=0, atol=1e-6,
                                               err_msg=f"seed {seed}")
                    self.assertTrue(np.all((a.data > 0) & (a.data <= 1)))

    def test_uniform_attention_averages_rows(self):
        """Test that uniform weights give the mean context row in every subspace."""
        h = np.random.default_rng(0).normal(size=(5, 4))
        t = embed_tensor(nx.Tensor(h), nx.Tensor(np.full((5, 3), 0.2))).data
        for row in t:
            np.testing.assert_allclose(row, h.mean(axis=0), atol=1e-6)

    def test_one_hot_attention_selects_row(self):
        """Test that a one-hot column copies the selected context row."""
        h = np.random.default_rng(1).normal(size=(4, 6))
        a = np.full((4, 2), 0.25)
        a[:, 1] = 0.0
        a[2, 1] = 1.0
        t = embed_tensor(nx.Tensor(h), nx.Tensor(a)).data
        np.testing.assert_allclose(t[1], h[2], atol=1e-6)

    def test_rows_lie_in_convex_hull(self):
        """Test that every tensor row is the convex combination given by its column."""
        with nx.precision('f64'):
            rng = np.random.default_rng(2)
            for _ in range(20):
                h = rng.normal(size=(6, 4))
                a = rng.dirichlet(np.ones(6), size=3).T
                t = embed_tensor(nx.Tensor(h), nx.Tensor(a)).data
                for j in range(3):
                    np.testing.assert_allclose(t[j], a[:, j] @ h, atol=1e-12)
                    self.assertTrue(np.all(t[j] >= h.min(axis=0) - 1e-12))
                    self.assertTrue(np.all(t[j] <= h.max(axis=0) + 1e-12))
                    self.assertLessEqual(np.linalg.norm(t[j]), np.linalg.norm(h, axis=1).max() + 1e-12)
