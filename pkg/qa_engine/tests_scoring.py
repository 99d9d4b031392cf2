"""
Unit tests for SMS/SAS dual scoring, the gate and aggregation.

Tests for camse/scoring.py
"""

import numpy as np
from django.test import SimpleTestCase

from qa_engine.camse import numerics as nx
from qa_engine.camse.encoder import EmbeddingTensor
from qa_engine.camse.exceptions import ConfigError
from qa_engine.camse.scoring import (
    ScoringConfig,
    ScoringParams,
    aggregate_scale,
    gate,
    sas,
    score_pair,
    sms,
    statement_gates,
)


def _tensor(rng, k, r, width):
    return EmbeddingTensor([nx.Tensor(rng.normal(size=(r, width))) for _ in range(k)])


def _scorer(mode='sms+sas', scales=2, subspaces=3, context_size=2, seed=0):
    config = ScoringConfig(scales=scales, subspaces=subspaces, context_size=context_size,
                           gate_hidden=4, sas_bias=True, mode=mode)
    params = nx.ParameterSet()
    return ScoringParams(config, params, np.random.default_rng(seed)), params


# ============================================================================
# Pathway Tests
# ============================================================================

class PathwayTests(SimpleTestCase):
    """Tests for the individual scoring pathways."""

    def test_sms_aligned_cosine(self):
        """Test that [1, 0] against [1, 1] scores 1/sqrt(2)."""
        values, degenerate = sms(nx.Tensor(np.array([[1.0, 0.0]])), nx.Tensor(np.array([[1.0, 1.0]])))
        self.assertAlmostEqual(float(values.data[0]), 0.7071, places=4)
        self.assertFalse(degenerate.any())

    def test_sms_zero_row_logged(self):
        """Test that a zero subspace row is scored 0 with a warning."""
        with self.assertLogs('qa_engine.camse.scoring', level='WARNING'):
            values, degenerate = sms(nx.Tensor(np.zeros((2, 3))), nx.Tensor(np.ones((2, 3))))
        np.testing.assert_array_equal(values.data, [0.0, 0.0])
        self.assertTrue(degenerate.all())

    def test_sas_zero_weights_give_half(self):
        """Test that zero weights and bias score every off-diagonal pair 0.5."""
        rng = np.random.default_rng(0)
        t1, t2 = nx.Tensor(rng.normal(size=(3, 4))), nx.Tensor(rng.normal(size=(3, 4)))
        m = sas(t1, t2, nx.Tensor(np.zeros((6, 8))), nx.Tensor(np.zeros(6))).data
        expected = np.full((3, 3), 0.5)
        np.fill_diagonal(expected, 0.0)
        np.testing.assert_allclose(m, expected)

    def test_sas_pair_order(self):
        """Test that pair (u, v) uses row u of T1 and row v of T2 with its own weights."""
        t1 = nx.Tensor(np.array([[1.0], [2.0]]))
        t2 = nx.Tensor(np.array([[3.0], [5.0]]))
        weight = nx.Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
        m = sas(t1, t2, weight, None).data
        self.assertAlmostEqual(float(m[0, 1]), 1 / (1 + np.exp(-1.0)), places=6)
        self.assertAlmostEqual(float(m[1, 0]), 1 / (1 + np.exp(-3.0)), places=6)

    def test_gate_zero_output_layer(self):
        """Test that a zero second gate layer gives 0.5 everywhere."""
        rng = np.random.default_rng(1)
        g = gate(nx.Tensor(rng.normal(size=(3, 4))), nx.Tensor(rng.normal(size=(5, 12))),
                 nx.Tensor(np.zeros((9, 5)))).data
        np.testing.assert_allclose(g, np.full((3, 3), 0.5))

    def test_aggregate_matches_loop(self):
        """Test the masked sums against a direct double loop."""
        with nx.precision('f64'):
            rng = np.random.default_rng(2)
            sms_m, sas_m, g = (rng.normal(size=(4, 4)) for _ in range(3))
            o_sms, o_sas = aggregate_scale(nx.Tensor(sms_m), nx.Tensor(sas_m), nx.Tensor(g))
        expect_sms = sum(sms_m[u, u] * g[u, u] for u in range(4))
        expect_sas = sum(sas_m[u, v] * g[u, v] for u in range(4) for v in range(4) if u != v)
        self.assertAlmostEqual(float(o_sms.data), expect_sms, delta=1e-12)
        self.assertAlmostEqual(float(o_sas.data), expect_sas, delta=1e-12)

    def test_aggregate_masks_are_isolated(self):
        """Test that SMS off-diagonal and SAS diagonal entries never reach the sums."""
        with nx.precision('f64'):
            rng = np.random.default_rng(3)
            sms_m, sas_m, g = (rng.normal(size=(3, 3)) for _ in range(3))
            base = aggregate_scale(nx.Tensor(sms_m), nx.Tensor(sas_m), nx.Tensor(g))
            sms_m2 = sms_m + 100.0 * (1 - np.eye(3))
            sas_m2 = sas_m + 100.0 * np.eye(3)
            moved = aggregate_scale(nx.Tensor(sms_m2), nx.Tensor(sas_m2), nx.Tensor(g))
        self.assertEqual(float(base[0].data), float(moved[0].data))
        self.assertEqual(float(base[1].data), float(moved[1].data))


# ============================================================================
# Pair Score Tests
# ============================================================================

class ScorePairTests(SimpleTestCase):
    """Tests for the aggregated pair score."""

    def test_zero_aggregation_weights_give_bias(self):
        """Test that w_s = 0 makes S equal to b_s."""
        scorer, params = _scorer()
        params['aggregate.weight'].data[...] = 0.0
        params['aggregate.bias'].data[...] = 0.37
        rng = np.random.default_rng(0)
        s, pack = score_pair(_tensor(rng, 2, 3, 4), _tensor(rng, 2, 3, 4), scorer)
        self.assertAlmostEqual(float(s.data), 0.37, places=6)
        self.assertAlmostEqual(pack.score, 0.37, places=6)

    def test_pack_contents(self):
        """Test that the pack exposes one combined r×r matrix and gate per scale."""
        scorer, _ = _scorer()
        rng = np.random.default_rng(1)
        _, pack = score_pair(_tensor(rng, 2, 3, 4), _tensor(rng, 2, 3, 4), scorer)
        self.assertEqual(len(pack.sms), 2)
        matrix = pack.combined_matrix(0)
        self.assertEqual(matrix.shape, (3, 3))
        np.testing.assert_array_equal(np.diag(matrix), pack.sms[0])
        self.assertEqual(pack.gate[1].shape, (3, 3))

    def test_ablation_modes(self):
        """Test that a dropped pathway contributes exactly 0."""
        rng = np.random.default_rng(2)
        t1, t2 = _tensor(rng, 2, 3, 4), _tensor(rng, 2, 3, 4)
        _, sms_pack = score_pair(t1, t2, _scorer('sms_only')[0])
        _, sas_pack = score_pair(t1, t2, _scorer('sas_only')[0])
        self.assertEqual(sms_pack.o_sas, [0.0, 0.0])
        self.assertEqual(sas_pack.o_sms, [0.0, 0.0])
        self.assertNotEqual(sms_pack.o_sms, [0.0, 0.0])

    def test_single_subspace_has_no_association(self):
        """Test that r = 1 creates no SAS weights and O_sas = 0."""
        scorer, params = _scorer(subspaces=1)
        self.assertNotIn('scale1.sas.weight', params)
        rng = np.random.default_rng(3)
        _, pack = score_pair(_tensor(rng, 2, 1, 4), _tensor(rng, 2, 1, 4), scorer)
        self.assertEqual(pack.o_sas, [0.0, 0.0])

    def test_mismatched_tensors_rejected(self):
        """Test that tensors of the wrong shape are a configuration error."""
        scorer, _ = _scorer()
        rng = np.random.default_rng(4)
        with self.assertRaises(ConfigError):
            score_pair(_tensor(rng, 2, 3, 4), _tensor(rng, 1, 3, 4), scorer)
        with self.assertRaises(ConfigError):
            score_pair(_tensor(rng, 2, 3, 4), _tensor(rng, 2, 3, 6), scorer)

    def test_invalid_mode(self):
        """Test that unknown scoring modes are rejected."""
        with self.assertRaises(ConfigError):
            ScoringConfig(mode='cosine')

    def test_score_gradients(self):
        """Test backward through SMS, SAS, the gate and aggregation."""
        with nx.precision('f64'):
            scorer, params = _scorer(seed=5)
            rng = np.random.default_rng(6)
            a = [nx.Parameter(rng.normal(size=(3, 4)), f"t1.{i}") for i in range(2)]
            b = [nx.Parameter(rng.normal(size=(3, 4)), f"t2.{i}") for i in range(2)]

            def f():
                s, _ = score_pair(EmbeddingTensor(a), EmbeddingTensor(b), scorer)
                return s

            self.assertLess(nx.grad_check(f, list(params) + a + b), 1e-4)

    def test_scalar_outputs_are_zero_dimensional(self):
        """Test that aggregated sums and S are 0-d, so features stack to a 2k vector."""
        scorer, _ = _scorer()
        rng = np.random.default_rng(7)
        t1, t2 = _tensor(rng, 2, 3, 4), _tensor(rng, 2, 3, 4)
        values, _ = sms(t1.scales[0], t2.scales[0])
        self.assertEqual(values.shape, (3,))
        o_sms, o_sas = aggregate_scale(values, sas(t1.scales[0], t2.scales[0],
                                                   nx.Tensor(rng.normal(size=(6, 8))), None),
                                       nx.Tensor(np.ones((3, 3))))
        self.assertEqual((o_sms.shape, o_sas.shape), ((), ()))
        s, _ = score_pair(t1, t2, scorer)
        self.assertEqual(s.shape, ())


# ============================================================================
# Gate Tests
# ============================================================================

class GateInvarianceTests(SimpleTestCase):
    """Tests that the gate depends on the statement only."""

    def test_gate_identical_across_documents(self):
        """Test bitwise-equal gates for one statement against different documents."""
        scorer, _ = _scorer(seed=8)
        rng = np.random.default_rng(9)
        statement = _tensor(rng, 2, 3, 4)
        packs = [score_pair(statement, _tensor(rng, 2, 3, 4), scorer)[1] for _ in range(3)]
        precomputed = statement_gates(statement, scorer)
        for pack in packs:
            for scale in range(2):
                np.testing.assert_array_equal(pack.gate[scale], packs[0].gate[scale])
                np.testing.assert_array_equal(pack.gate[scale], precomputed[scale].data)

    def test_gate_changes_with_statement(self):
        """Test that another statement gives another gate."""
        scorer, _ = _scorer(seed=10)
        rng = np.random.default_rng(11)
        document = _tensor(rng, 2, 3, 4)
        first = score_pair(_tensor(rng, 2, 3, 4), document, scorer)[1]
        second = score_pair(_tensor(rng, 2, 3, 4), document, scorer)[1]
        self.assertFalse(np.array_equal(first.gate[0], second.gate[0]))

    def test_sas_is_asymmetric(self):
        """Test that S_sas[u, v] and S_sas[v, u] use distinct weights."""
        rng = np.random.default_rng(12)
        t1, t2 = nx.Tensor(rng.normal(size=(3, 4))), nx.Tensor(rng.normal(size=(3, 4)))
        m = sas(t1, t2, nx.Tensor(rng.normal(size=(6, 8))), nx.Tensor(rng.normal(size=6))).data
        self.assertFalse(np.allclose(m, m.T))
