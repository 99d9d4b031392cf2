"""
Unit tests for the tensor, tape, layer and optimizer primitives.

Tests for camse/numerics.py
"""

import numpy as np
from django.test import SimpleTestCase

from qa_engine.camse import numerics as nx
from qa_engine.camse.exceptions import (
    ConfigError,
    DimensionError,
    GradCheckError,
    OptimizerStateError,
    SequenceTooShortError,
    TapeError,
)

GRAD_TOLERANCE = 1e-4


def _param(rng, shape, name, scale=1.0):
    return nx.Parameter(rng.normal(scale=scale, size=shape), name)


def _lstm(rng, input_size, hidden, prefix):
    return nx.LstmWeights(
        _param(rng, (4 * hidden, input_size), f"{prefix}.w_x", 0.5),
        _param(rng, (4 * hidden, hidden), f"{prefix}.w_h", 0.5),
        _param(rng, (4 * hidden,), f"{prefix}.b", 0.5),
    )


# ============================================================================
# Tape Tests
# ============================================================================

class TapeTests(SimpleTestCase):
    """Tests for recording and replaying operations."""

    def test_gradients_accumulate_over_shared_inputs(self):
        """Test that a tensor used twice receives the sum of both adjoints."""
        with nx.precision('f64'):
            x = nx.Parameter(np.array([1.0, -2.0, 3.0]), 'x')
            with nx.Tape() as tape:
                y = nx.reduce_sum(nx.add(nx.mul(x, x), x))
                tape.backward(y)
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_non_scalar_loss_rejected(self):
        """Test that backward requires a scalar loss."""
        x = nx.Parameter(np.ones((2, 2)), 'x')
        with nx.Tape() as tape:
            y = nx.scale(x, 2.0)
            with self.assertRaises(TapeError):
                tape.backward(y)

    def test_backward_twice_requires_reset(self):
        """Test that a replayed tape must be reset before reuse."""
        x = nx.Parameter(np.ones(3), 'x')
        with nx.Tape() as tape:
            loss = nx.reduce_sum(x)
            tape.backward(loss)
            with self.assertRaises(TapeError):
                tape.backward(loss)
            tape.reset()
            x.zero_grad()
            loss = nx.reduce_sum(nx.scale(x, 3.0))
            tape.backward(loss)
        np.testing.assert_array_equal(x.grad, np.full(3, 3.0))

    def test_loss_from_other_tape_rejected(self):
        """Test that a loss recorded elsewhere cannot be replayed."""
        x = nx.Parameter(np.ones(3), 'x')
        with nx.Tape():
            foreign = nx.reduce_sum(x)
        with nx.Tape() as tape:
            with self.assertRaises(TapeError):
                tape.backward(foreign)

    def test_no_recording_without_tape(self):
        """Test that operations outside a tape are plain forward computations."""
        x = nx.Parameter(np.ones(3), 'x')
        y = nx.reduce_sum(x)
        self.assertFalse(y.requires_grad)

    def test_unreachable_parameters_keep_zero_gradient(self):
        """Test that parameters the loss does not depend on get zero gradient."""
        x = nx.Parameter(np.ones(3), 'x')
        unused = nx.Parameter(np.ones(3), 'unused')
        with nx.Tape() as tape:
            nx.reduce_sum(unused)
            tape.backward(nx.reduce_sum(x))
        np.testing.assert_array_equal(unused.grad, np.zeros(3))

    def test_scalars_keep_zero_dimensions(self):
        """Test that 0-d values stay 0-d through wrapping and reductions."""
        self.assertEqual(nx.Tensor(np.float64(2.5)).shape, ())
        self.assertEqual(nx.Tensor(3.0).shape, ())
        x = nx.Parameter(np.ones(4), 'x')
        with nx.Tape() as tape:
            total = nx.reduce_sum(x)
            dotted = nx.dot(x, x)
            averaged = nx.mean([total, dotted])
            tape.backward(averaged)
        self.assertEqual((total.shape, dotted.shape, averaged.shape), ((), (), ()))
        self.assertEqual(nx.stack([total, dotted]).shape, (2,))
        np.testing.assert_allclose(x.grad, 0.5 + x.data)


# ============================================================================
# Operation Tests
# ============================================================================

class OperationTests(SimpleTestCase):
    """Tests for forward semantics and error handling of operations."""

    def test_matmul_shape_error_names_shapes(self):
        """Test that a mismatched product reports both shapes."""
        with self.assertRaises(DimensionError) as ctx:
            nx.matmul(nx.Tensor(np.ones((2, 3))), nx.Tensor(np.ones((4, 5))))
        self.assertIn('(2, 3)', str(ctx.exception))
        self.assertIn('(4, 5)', str(ctx.exception))

    def test_softmax_columns_sum_to_one(self):
        """Test column normalization over rows, including extreme logits."""
        rng = np.random.default_rng(0)
        logits = rng.normal(scale=30.0, size=(7, 4))
        s = nx.softmax_axis(nx.Tensor(logits), axis='columns').data
        np.testing.assert_allclose(s.sum(axis=0), np.ones(4), atol=1e-6)
        self.assertTrue(np.all(np.isfinite(s)))

    def test_softmax_single_row_is_one(self):
        """Test that a one-position column normalizes to 1."""
        s = nx.softmax_axis(nx.Tensor(np.array([[3.0, -1.0, 0.5]])), axis='columns').data
        np.testing.assert_allclose(s, np.ones((1, 3)))

    def test_conv_window_lengths_and_short_input(self):
        """Test output length n-i+1 and the too-short error."""
        rng = np.random.default_rng(1)
        e = nx.Tensor(rng.normal(size=(5, 2)))
        w = nx.Tensor(rng.normal(size=(6, 2)))
        b = nx.Tensor(np.zeros(2))
        self.assertEqual(nx.conv_window(e, 3, w, b).shape, (3, 2))
        with self.assertRaises(SequenceTooShortError):
            nx.conv_window(nx.Tensor(rng.normal(size=(2, 2))), 3, w, b)

    def test_cosine_zero_row_guarded(self):
        """Test that a zero-norm row scores 0 and is flagged."""
        a = nx.Tensor(np.array([[1.0, 0.0], [0.0, 0.0]]))
        b = nx.Tensor(np.array([[1.0, 1.0], [1.0, 0.0]]))
        values, degenerate = nx.cosine_rows(a, b)
        self.assertAlmostEqual(float(values.data[0]), 1 / np.sqrt(2), places=6)
        self.assertEqual(float(values.data[1]), 0.0)
        np.testing.assert_array_equal(degenerate, [False, True])

    def test_cosine_zero_row_has_zero_gradient(self):
        """Test that guarded rows pass no gradient."""
        with nx.precision('f64'):
            a = nx.Parameter(np.array([[0.0, 0.0], [1.0, 2.0]]), 'a')
            b = nx.Parameter(np.array([[1.0, 3.0], [2.0, 1.0]]), 'b')
            with nx.Tape() as tape:
                values, _ = nx.cosine_rows(a, b)
                tape.backward(nx.reduce_sum(values))
        np.testing.assert_array_equal(a.grad[0], [0.0, 0.0])
        np.testing.assert_array_equal(b.grad[0], [0.0, 0.0])

    def test_cross_entropy_uniform_scores(self):
        """Test that equal scores over 5 choices cost ln 5."""
        with nx.precision('f64'):
            loss = nx.cross_entropy(nx.Tensor(np.full(5, 0.7)), 2)
        self.assertAlmostEqual(float(loss.data), np.log(5), delta=1e-9)

    def test_cross_entropy_large_margin(self):
        """Test that a gold margin of 20 drives the loss below 1e-8."""
        with nx.precision('f64'):
            loss = nx.cross_entropy(nx.Tensor(np.array([0.0, 20.0, 0.0, 0.0, 0.0])), 1)
        self.assertLess(float(loss.data), 1e-8)

    def test_cross_entropy_shift_invariance(self):
        """Test that adding a constant to all scores leaves the loss unchanged."""
        with nx.precision('f64'):
            scores = np.array([0.3, -1.2, 2.5])
            base = float(nx.cross_entropy(nx.Tensor(scores), 0).data)
            shifted = float(nx.cross_entropy(nx.Tensor(scores + 17.0), 0).data)
        self.assertAlmostEqual(base, shifted, delta=1e-9)

    def test_dropout_modes(self):
        """Test eval-mode identity, rate validation and inverted scaling."""
        x = nx.Tensor(np.ones((200, 50)))
        self.assertIs(nx.dropout(x, 0.5, training=False, rng=None), x)
        with self.assertRaises(ConfigError):
            nx.dropout(x, 1.0, training=True, rng=np.random.default_rng(0))
        with self.assertRaises(ConfigError):
            nx.dropout(x, -0.1, training=False, rng=None)
        out = nx.dropout(x, 0.2, training=True, rng=np.random.default_rng(0)).data
        self.assertEqual(set(np.unique(out).round(5)), {0.0, 1.25})
        self.assertAlmostEqual(float(out.mean()), 1.0, delta=0.05)

    def test_embed_offdiagonal_row_major(self):
        """Test that values fill the off-diagonal in row-major order."""
        m = nx.embed_offdiagonal(nx.Tensor(np.arange(1.0, 7.0)), 3).data
        np.testing.assert_array_equal(m, [[0, 1, 2], [3, 0, 4], [5, 6, 0]])


# ============================================================================
# LSTM Tests
# ============================================================================

class LstmTests(SimpleTestCase):
    """Tests for the LSTM cell and the fused recurrence."""

    def test_saturated_forget_gate_keeps_cell(self):
        """Test that forget bias 20 with zero weights carries c_prev through."""
        u, d = 3, 2
        weights = nx.LstmWeights(
            nx.Parameter(np.zeros((4 * u, d)), 'w_x'),
            nx.Parameter(np.zeros((4 * u, u)), 'w_h'),
            nx.Parameter(np.concatenate([np.zeros(u), np.full(u, 20.0), np.zeros(2 * u)]), 'b'),
        )
        c_prev = nx.Tensor(np.array([[0.5, -0.3, 0.9]]))
        _, c = nx.lstm_cell(nx.Tensor(np.ones((1, d))), nx.Tensor(np.zeros((1, u))), c_prev, weights)
        np.testing.assert_allclose(c.data, c_prev.data, atol=1e-6)

    def test_fused_sequence_matches_cell_loop(self):
        """Test that the fused recurrence equals stepping lstm_cell in both directions."""
        with nx.precision('f64'):
            rng = np.random.default_rng(2)
            weights = _lstm(rng, 3, 4, 'lstm')
            x = nx.Tensor(rng.normal(size=(5, 3)))
            for reverse in (False, True):
                rows = range(4, -1, -1) if reverse else range(5)
                h = nx.Tensor(np.zeros((1, 4)))
                c = nx.Tensor(np.zeros((1, 4)))
                expected = np.zeros((5, 4))
                for t in rows:
                    h, c = nx.lstm_cell(nx.Tensor(x.data[t:t + 1]), h, c, weights)
                    expected[t] = h.data[0]
                fused = nx.lstm_sequence(x, weights, reverse=reverse).data
                np.testing.assert_allclose(fused, expected, atol=1e-12)

    def test_bilstm_width_and_empty_input(self):
        """Test output width 2u and rejection of empty sequences."""
        rng = np.random.default_rng(3)
        fwd, bwd = _lstm(rng, 2, 3, 'f'), _lstm(rng, 2, 3, 'b')
        self.assertEqual(nx.bilstm(nx.Tensor(rng.normal(size=(4, 2))), fwd, bwd).shape, (4, 6))
        with self.assertRaises(SequenceTooShortError):
            nx.bilstm(nx.Tensor(np.zeros((0, 2))), fwd, bwd)

    def test_create_lstm_initialization(self):
        """Test Glorot bounds and the +1 forget-gate bias."""
        params = nx.ParameterSet()
        weights = params.create_lstm('ctx', 6, 4, np.random.default_rng(0))
        limit = np.sqrt(6.0 / (16 + 6))
        self.assertTrue(np.all(np.abs(weights.w_x.data) <= limit + 1e-6))
        np.testing.assert_array_equal(weights.b.data[4:8], np.ones(4))
        np.testing.assert_array_equal(weights.b.data[:4], np.zeros(4))
        self.assertEqual(params.names(), ['ctx.w_x', 'ctx.w_h', 'ctx.b'])


# ============================================================================
# Gradient Check Tests
# ============================================================================

class GradCheckTests(SimpleTestCase):
    """Finite-difference checks of every differentiable primitive."""

    SEEDS = range(20)

    def _check(self, build):
        for seed in self.SEEDS:
            with self.subTest(seed=seed), nx.precision('f64'):
                rng = np.random.default_rng(seed)
                f, params = build(rng)
                self.assertLess(nx.grad_check(f, params), GRAD_TOLERANCE)

    def test_matmul(self):
        def build(rng):
            a, b = _param(rng, (3, 4), 'a'), _param(rng, (4, 2), 'b')
            w = rng.normal(size=(3, 2))
            return lambda: nx.reduce_sum(nx.mul(nx.matmul(a, b), nx.Tensor(w))), [a, b]
        self._check(build)

    def test_broadcast_add_and_pointwise(self):
        def build(rng):
            x, bias = _param(rng, (4, 3), 'x'), _param(rng, (3,), 'bias')
            w = rng.normal(size=(4, 3))
            return lambda: nx.reduce_sum(nx.mul(nx.sigmoid(nx.tanh(nx.add(x, bias))), nx.Tensor(w))), [x, bias]
        self._check(build)

    def test_softmax_columns(self):
        def build(rng):
            m = _param(rng, (5, 3), 'm')
            w = rng.normal(size=(5, 3))
            return lambda: nx.reduce_sum(nx.mul(nx.softmax_axis(m, 'columns'), nx.Tensor(w))), [m]
        self._check(build)

    def test_conv_window(self):
        def build(rng):
            e, w, b = _param(rng, (6, 2), 'e'), _param(rng, (6, 3), 'w', 0.5), _param(rng, (3,), 'b')
            r = rng.normal(size=(4, 3))
            return lambda: nx.reduce_sum(nx.mul(nx.conv_window(e, 3, w, b), nx.Tensor(r))), [e, w, b]
        self._check(build)

    def test_lstm_cell(self):
        def build(rng):
            weights = _lstm(rng, 3, 2, 'cell')
            x, h, c = _param(rng, (1, 3), 'x'), _param(rng, (1, 2), 'h'), _param(rng, (1, 2), 'c')
            wh, wc = rng.normal(size=(1, 2)), rng.normal(size=(1, 2))

            def f():
                h_next, c_next = nx.lstm_cell(x, h, c, weights)
                return nx.add(nx.reduce_sum(nx.mul(h_next, nx.Tensor(wh))),
                              nx.reduce_sum(nx.mul(c_next, nx.Tensor(wc))))
            return f, [x, h, c] + weights.parameters()
        self._check(build)

    def test_bilstm(self):
        def build(rng):
            fwd, bwd = _lstm(rng, 2, 2, 'f'), _lstm(rng, 2, 3, 'b')
            x = _param(rng, (4, 2), 'x')
            r = rng.normal(size=(4, 5))
            return lambda: nx.reduce_sum(nx.mul(nx.bilstm(x, fwd, bwd), nx.Tensor(r))), \
                [x] + fwd.parameters() + bwd.parameters()
        self._check(build)

    def test_cosine_rows(self):
        def build(rng):
            a, b = _param(rng, (3, 4), 'a'), _param(rng, (3, 4), 'b')
            w = rng.normal(size=3)
            return lambda: nx.reduce_sum(nx.mul(nx.cosine_rows(a, b)[0], nx.Tensor(w))), [a, b]
        self._check(build)

    def test_structural_ops(self):
        def build(rng):
            a = _param(rng, (4, 3), 'a')
            v = _param(rng, (6,), 'v')
            w = rng.normal(size=(3, 3))

            def f():
                rows = nx.take_rows(a, [2, 0, 2])
                square = nx.add(nx.slice_cols(nx.concat([rows, rows], axis=1), 1, 4),
                                nx.embed_offdiagonal(v, 3))
                square = nx.add(square, nx.diag_matrix(nx.reduce_sum(nx.transpose(a), axis=1)))
                return nx.reduce_sum(nx.mul(nx.reshape(square, (3, 3)), nx.Tensor(w)))
            return f, [a, v]
        self._check(build)

    def test_cross_entropy(self):
        def build(rng):
            s = _param(rng, (5,), 's')
            return lambda: nx.cross_entropy(s, 3), [s]
        self._check(build)

    def test_requires_64_bit(self):
        """Test that 32-bit parameters are refused."""
        with nx.precision('f32'):
            p = nx.Parameter(np.ones(2), 'p')
        with self.assertRaises(GradCheckError):
            nx.grad_check(lambda: nx.reduce_sum(p), [p])

    def test_rejects_non_deterministic_loss(self):
        """Test that a loss with live dropout is refused."""
        with nx.precision('f64'):
            p = nx.Parameter(np.ones(50), 'p')
            rng = np.random.default_rng(0)
            with self.assertRaises(GradCheckError):
                nx.grad_check(lambda: nx.reduce_sum(nx.dropout(p, 0.5, True, rng)), [p])

    def test_rejects_loss_with_stable_value_but_changing_gradient(self):
        """Test that gradients are compared across replays, not only loss values."""
        with nx.precision('f64'):
            p = nx.Parameter(np.ones(6), 'p')
            rng = np.random.default_rng(0)
            weights = np.arange(6.0)

            def shuffled():
                return nx.reduce_sum(nx.mul(p, nx.Tensor(rng.permutation(weights))))

            with self.assertRaises(GradCheckError):
                nx.grad_check(shuffled, [p])

    def test_rejects_dropout_over_many_seeds(self):
        """Test that live dropout is refused whatever the generator seed."""
        with nx.precision('f64'):
            p = nx.Parameter(np.ones(50), 'p')
            for seed in range(10):
                rng = np.random.default_rng(seed)
                with self.subTest(seed=seed), self.assertRaises(GradCheckError):
                    nx.grad_check(lambda: nx.reduce_sum(nx.dropout(p, 0.5, True, rng)), [p])


# ============================================================================
# Optimizer Tests
# ============================================================================

class AdamTests(SimpleTestCase):
    """Tests for the Adam update and its state."""

    def _params(self):
        params = nx.ParameterSet()
        params.add(nx.Parameter(np.array([1.0, 2.0, 3.0]), 'w'))
        return params

    def test_zero_gradient_leaves_parameters(self):
        """Test that a zero gradient produces no update."""
        with nx.precision('f64'):
            params = self._params()
            params.zero_grad()
            state = nx.AdamState()
            nx.adam_step(params, state)
        np.testing.assert_array_equal(params['w'].data, [1.0, 2.0, 3.0])
        self.assertEqual(state.step, 1)

    def test_first_step_moves_by_learning_rate(self):
        """Test that the bias-corrected first step is lr·g/(|g|+eps)."""
        with nx.precision('f64'):
            params = self._params()
            params['w'].grad = np.array([0.5, -2.0, 0.0])
            state = nx.AdamState(base_lr=0.01, eps=1e-8)
            nx.adam_step(params, state)
        expected = np.array([1.0, 2.0, 3.0]) - 0.01 * np.array([0.5, -2.0, 0.0]) / (
            np.abs([0.5, -2.0, 0.0]) + 1e-8)
        np.testing.assert_allclose(params['w'].data, expected, rtol=1e-12)

    def test_learning_rate_decays_per_epoch(self):
        """Test lr = base · decay^epoch."""
        state = nx.AdamState(base_lr=1e-3, decay=0.95, epoch=3)
        self.assertAlmostEqual(state.learning_rate, 1e-3 * 0.95 ** 3)

    def test_state_bound_to_parameter_set(self):
        """Test that state reused for different parameters is rejected."""
        params = self._params()
        state = nx.AdamState()
        nx.adam_step(params, state)
        other = nx.ParameterSet()
        other.add(nx.Parameter(np.ones(2), 'v'))
        with self.assertRaises(OptimizerStateError):
            nx.adam_step(other, state)

    def test_snapshot_restore(self):
        """Test that restore brings back snapshotted values."""
        params = self._params()
        saved = params.snapshot()
        params['w'].data[...] = 0.0
        params.restore(saved)
        np.testing.assert_array_equal(params['w'].data, [1.0, 2.0, 3.0])

    def test_duplicate_names_rejected(self):
        """Test that parameter names are unique."""
        params = self._params()
        with self.assertRaises(ConfigError):
            params.add(nx.Parameter(np.ones(1), 'w'))
