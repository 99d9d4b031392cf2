"""
Unit tests for candidate scoring, prediction, evaluation and training.

Tests for camse/qa.py
"""

import json
import math
import shutil
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from qa_engine.camse import numerics as nx
from qa_engine.camse.encoder import CamseConfig
from qa_engine.camse.exceptions import ConfigError, DatasetError, DivergenceError, ParseError
from qa_engine.camse.qa import (
    CamseModel,
    QaInstance,
    TrainConfig,
    baseline_mean_cosine,
    candidate_score,
    candidate_scores,
    evaluate,
    evaluate_report,
    load_dataset,
    loss,
    predict,
    save_dataset,
    select_answer,
    train,
)
from qa_engine.camse.scoring import ScoringConfig
from qa_engine.camse.text import Vocabulary, random_embeddings

TOKENS = 'fever cough rash flu cold measles causes which disease gives a high temperature dry'.split()


def build_model(evidence_cap=4, epochs=5, learning_rate=0.01, separator='', trainable=False, seed=0):
    vocab = Vocabulary(TOKENS)
    table = random_embeddings(vocab, 4, seed=seed, trainable=trainable)
    encoder = CamseConfig(scales=2, subspaces=2, embedding_dim=4, context_size=2,
                          attention_context_size=2, attention_hidden=3, dropout=0.0)
    scoring = ScoringConfig(scales=2, subspaces=2, context_size=2, gate_hidden=3)
    config = TrainConfig(batch_size=2, epochs=epochs, learning_rate=learning_rate, lr_decay=1.0,
                         max_statement_len=10, max_document_len=10, evidence_cap=evidence_cap,
                         seed=seed, separator=separator)
    return CamseModel(vocab, table, encoder, scoring, config)


def constant_pair_score(model, value):
    """Make every (statement, document) pair score exactly `value`."""
    model.params['aggregate.weight'].data[...] = 0.0
    model.params['aggregate.bias'].data[...] = value


def instance(answer=0, evidence=None, choices=('flu', 'cold', 'measles'), ident='q'):
    evidence = evidence if evidence is not None else [['high fever'], ['dry cough'], ['a rash']]
    return QaInstance(ident, 'which disease gives fever', list(choices), evidence, answer)


# ============================================================================
# Dataset Tests
# ============================================================================

class DatasetTests(SimpleTestCase):
    """Tests for instance validation and the JSON-lines format."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_instance_validation(self):
        """Test choice counts, evidence alignment and the answer range."""
        with self.assertRaises(DatasetError):
            QaInstance('x', 'q', ['only'], [[]])
        with self.assertRaises(DatasetError):
            QaInstance('x', 'q', ['a', 'b'], [[]])
        with self.assertRaises(DatasetError):
            QaInstance('x', 'q', ['a', 'b'], [[], []], answer=2)

    def test_save_and_load(self):
        """Test that saved datasets load back as equal instances."""
        path = Path(self.temp_dir) / 'data.jsonl'
        items = [instance(ident='a'), instance(answer=None, ident='b')]
        save_dataset(path, items)
        self.assertEqual(load_dataset(path), items)

    def test_malformed_line_reported(self):
        """Test that a bad record names its line."""
        path = Path(self.temp_dir) / 'data.jsonl'
        good = json.dumps(instance().to_record())
        path.write_text(good + '\n{"id": "b", "question": "q"}\n', encoding='utf-8')
        with self.assertRaises(ParseError) as ctx:
            load_dataset(path)
        self.assertEqual(ctx.exception.line, 2)

    def test_invalid_record_reported(self):
        """Test that a record violating instance rules is a parse error."""
        path = Path(self.temp_dir) / 'data.jsonl'
        record = instance().to_record()
        record['answer'] = 7
        path.write_text(json.dumps(record) + '\n', encoding='utf-8')
        with self.assertRaises(ParseError):
            load_dataset(path)


# ============================================================================
# Scoring and Prediction Tests
# ============================================================================

class CandidateScoreTests(SimpleTestCase):
    """Tests for candidate reliability, answer selection and the loss."""

    def test_uniform_scores_cost_log_choices(self):
        """Test that equal reliabilities over 5 choices give loss ln 5."""
        with nx.precision('f64'):
            model = build_model()
            constant_pair_score(model, 0.8)
            item = QaInstance('u', 'which disease', ['flu', 'cold', 'measles', 'rash', 'cough'],
                              [['high fever']] * 5, answer=3)
            value = float(loss(item, model).data)
        self.assertAlmostEqual(value, math.log(5), delta=1e-9)

    def test_large_margin_costs_nothing(self):
        """Test that a gold margin of 20 gives loss below 1e-8."""
        with nx.precision('f64'):
            model = build_model()
            constant_pair_score(model, 20.0)
            item = QaInstance('m', 'which disease', ['flu', 'cold', 'measles', 'rash', 'cough'],
                              [[], ['dry cough'], [], [], []], answer=1)
            with self.assertLogs('qa_engine.camse.qa', level='WARNING'):
                value = float(loss(item, model).data)
        self.assertLess(value, 1e-8)

    def test_evidence_cap_limits_documents(self):
        """Test that only the first evidence_cap documents are summed."""
        model = build_model(evidence_cap=2)
        constant_pair_score(model, 1.0)
        statement = model.statement('which disease', 'flu')
        s, empty = candidate_score(statement, ['high fever'] * 5, model)
        self.assertAlmostEqual(float(s.data), 2.0, places=5)
        self.assertFalse(empty)

    def test_empty_evidence_scores_zero(self):
        """Test that a choice without evidence is scored 0 and flagged."""
        model = build_model()
        constant_pair_score(model, 3.0)
        s, empty = candidate_score(model.statement('which disease', 'flu'), [], model)
        self.assertEqual(float(s.data), 0.0)
        self.assertTrue(empty)

    def test_ties_go_to_lowest_index(self):
        """Test that equal candidate scores select the first choice."""
        self.assertEqual(select_answer(np.array([0.5, 0.5, 0.5])), 0)
        self.assertEqual(select_answer(np.array([0.1, 0.9, 0.9])), 1)
        model = build_model()
        constant_pair_score(model, 1.0)
        self.assertEqual(predict(instance(answer=2), model), 0)

    def test_missing_gold_rejected(self):
        """Test that the loss needs a gold answer."""
        with self.assertRaises(DatasetError):
            loss(instance(answer=None), build_model())

    def test_candidate_scores_shape(self):
        """Test one reliability per choice."""
        scores = candidate_scores(instance(), build_model())
        self.assertEqual(scores.shape, (3,))

    def test_statement_separator(self):
        """Test that a configured separator sits between question and choice."""
        model = build_model(separator='flu')
        self.assertEqual(model.statement('which disease', 'cold').raw, ('which', 'disease', 'flu', 'cold'))
        self.assertEqual(build_model().statement('which disease', 'cold').raw, ('which', 'disease', 'cold'))

    def test_embedding_width_mismatch(self):
        """Test that the table width must equal embedding_dim."""
        vocab = Vocabulary(TOKENS)
        with self.assertRaises(ConfigError):
            CamseModel(vocab, random_embeddings(vocab, 5, seed=0), CamseConfig(scales=2, subspaces=2, embedding_dim=4,
                                                                                context_size=2),
                       ScoringConfig(scales=2, subspaces=2, context_size=2))


# ============================================================================
# Evaluation Tests
# ============================================================================

class EvaluationTests(SimpleTestCase):
    """Tests for accuracy, reports and the mean-cosine baseline."""

    def test_accuracy_counts_ties_as_first_choice(self):
        """Test accuracy when every candidate ties."""
        model = build_model()
        constant_pair_score(model, 1.0)
        data = [instance(answer=0, ident='a'), instance(answer=1, ident='b'), instance(answer=0, ident='c')]
        self.assertAlmostEqual(evaluate(data, model), 2 / 3)

    def test_threaded_report_matches_serial(self):
        """Test that worker threads do not change scores or order."""
        model = build_model()
        data = [instance(answer=i % 3, ident=f"i{i}") for i in range(6)]
        serial = evaluate_report(data, model, threads=1)
        threaded = evaluate_report(data, model, threads=3)
        self.assertEqual(serial, threaded)
        self.assertEqual([r['id'] for r in serial['instances']], [f"i{i}" for i in range(6)])
        self.assertEqual(serial['count'], 6)

    def test_empty_or_unlabelled_sets_rejected(self):
        """Test that evaluation needs labelled instances."""
        model = build_model()
        with self.assertRaises(DatasetError):
            evaluate([], model)
        with self.assertRaises(DatasetError):
            evaluate([instance(answer=None)], model)

    def test_baseline_prefers_matching_evidence(self):
        """Test that identical mean vectors win the word-level baseline."""
        vocab = Vocabulary(TOKENS)
        table = random_embeddings(vocab, 8, seed=3)
        item = QaInstance('b', 'which disease', ['flu', 'cold'],
                          [['dry rash'], ['which disease cold']], answer=1)
        self.assertEqual(baseline_mean_cosine(item, vocab, table), 1)


# ============================================================================
# Training Tests
# ============================================================================

class TrainingTests(SimpleTestCase):
    """Tests for the training loop."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_overfits_single_instance(self):
        """Test that repeated updates on one instance drive its loss down."""
        with nx.precision('f64'):
            model = build_model(epochs=30, learning_rate=0.02)
            item = instance(answer=2)
            before = float(loss(item, model).data)
            result = train([item], [], model)
            after = float(loss(item, model).data)
        self.assertLess(after, before)
        self.assertEqual(result.best_epoch, 30)
        self.assertIsNone(result.best_dev_accuracy)
        self.assertEqual(predict(item, model), 2)

    def test_metrics_file_has_one_line_per_epoch(self):
        """Test the JSON-lines metrics record."""
        model = build_model(epochs=3)
        path = Path(self.temp_dir) / 'metrics.jsonl'
        data = [instance(answer=0, ident='a'), instance(answer=1, ident='b')]
        result = train(data, data, model, metrics_path=path)
        records = [json.loads(line) for line in path.read_text(encoding='utf-8').splitlines()]
        self.assertEqual([r['epoch'] for r in records], [1, 2, 3])
        self.assertEqual(records, result.history)
        best = max(r['dev_accuracy'] for r in records)
        first_best = next(r['epoch'] for r in records if r['dev_accuracy'] == best)
        self.assertEqual(result.best_epoch, first_best)

    def test_training_is_deterministic(self):
        """Test that equal seeds give identical parameters."""
        data = [instance(answer=0, ident='a'), instance(answer=1, ident='b'), instance(answer=2, ident='c')]
        first, second = build_model(epochs=2), build_model(epochs=2)
        train(data, [], first)
        train(data, [], second)
        for name, param in first.params.items():
            np.testing.assert_array_equal(param.data, second.params[name].data)

    def test_divergence_detected(self):
        """Test that a non-finite loss stops training."""
        model = build_model(epochs=1)
        model.params['aggregate.bias'].data[...] = np.nan
        with self.assertRaises(DivergenceError):
            train([instance()], [], model)

    def test_fine_tuning_keeps_oov_row_zero(self):
        """Test that fine-tuned embeddings never move the OOV row."""
        model = build_model(epochs=2, trainable=True)
        item = QaInstance('o', 'which unknownword disease', ['flu', 'cold'], [['high fever'], ['dry cough']], answer=0)
        train([item], [], model)
        np.testing.assert_array_equal(model.table.weights.data[0], np.zeros(4))
        self.assertIn('embeddings', model.params)

    def test_empty_training_set(self):
        """Test that training needs data."""
        with self.assertRaises(DatasetError):
            train([], [], build_model())

    def test_loss_decreases_over_first_epochs(self):
        """Test that the mean training loss of epoch 5 is below that of epoch 1."""
        with nx.precision('f64'):
            model = build_model(epochs=5, learning_rate=0.02)
            data = [QaInstance(f"d{i}", q, ['flu', 'cold', 'measles'], [['high fever'], ['dry cough'], ['a rash']], i)
                    for i, q in enumerate(['which disease gives fever', 'which disease gives cough',
                                           'which disease gives rash'])]
            result = train(data, [], model)
        losses = [record['train_loss'] for record in result.history]
        self.assertLess(losses[-1], losses[0])

    def test_zeroed_scoring_weights_predict_first_choice(self):
        """Test that w_s = 0 and b_s = 0 tie every candidate and select index 0."""
        model = build_model()
        model.params['aggregate.weight'].data[...] = 0.0
        model.params['aggregate.bias'].data[...] = 0.0
        data = [instance(answer=i % 3, ident=f"z{i}") for i in range(9)]
        for item in data:
            np.testing.assert_array_equal(candidate_scores(item, model).data, np.zeros(3))
            self.assertEqual(predict(item, model), 0)
        self.assertAlmostEqual(evaluate(data, model), 1 / 3)


# ============================================================================
# Whole-Model Gradient Tests
# ============================================================================

class ModelGradientTests(SimpleTestCase):
    """Finite-difference check of the loss with respect to every parameter."""

    def test_full_model_gradients(self):
        """Test the loss gradient on a tiny model (d=8, u=4, d_a=5, r=3, k=2, 3 choices, 2 documents)."""
        with nx.precision('f64'):
            vocab = Vocabulary(TOKENS)
            table = random_embeddings(vocab, 8, seed=21, trainable=True)
            encoder = CamseConfig(scales=2, subspaces=3, embedding_dim=8, context_size=4,
                                  attention_context_size=4, attention_hidden=5, dropout=0.0)
            scoring = ScoringConfig(scales=2, subspaces=3, context_size=4, gate_hidden=4)
            config = TrainConfig(max_statement_len=10, max_document_len=10, evidence_cap=2, seed=21)
            model = CamseModel(vocab, table, encoder, scoring, config)
            item = QaInstance('g', 'which disease gives high fever', ['flu', 'cold', 'measles'],
                              [['a high fever', 'dry cough'], ['a rash', 'high temperature'],
                               ['dry cough', 'a rash']], answer=1)
            self.assertEqual(len(model.statement(item.question, 'flu')), 6)

            error = nx.grad_check(lambda: loss(item, model), list(model.params), floor=1e-6)
        self.assertLess(error, 1e-3)
