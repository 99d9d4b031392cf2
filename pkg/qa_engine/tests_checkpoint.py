"""
Unit tests for run configuration files, checkpoints and inspection dumps.

Tests for camse/runconfig.py, camse/checkpoint.py and camse/inspection.py
"""

import csv
import shutil
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
from decouple import Config
from django.test import SimpleTestCase

from qa_engine.camse import config as engine_config
from qa_engine.camse.checkpoint import MAGIC, encode_checkpoint, load_checkpoint, save_checkpoint
from qa_engine.camse.exceptions import CheckpointError, ConfigError
from qa_engine.camse.inspection import (
    attention_dump,
    ngram_units,
    render_attention_heatmap,
    score_dump,
    subspace_keywords,
    write_attention_csv,
)
from qa_engine.camse.qa import CamseModel, candidate_scores
from qa_engine.camse.runconfig import RunConfig, TextRepository
from qa_engine.camse.text import Vocabulary, random_embeddings

from .tests_qa import TOKENS, instance

TINY = dict(scales=2, subspaces=3, embedding_dim=4, context_size=2, attention_context_size=2,
            attention_hidden=3, gate_hidden=3, dropout=0.0, max_statement_len=10,
            max_document_len=10, epochs=1, seed=5)


def tiny_model(run_config, trainable=False):
    vocab = Vocabulary(TOKENS)
    table = random_embeddings(vocab, run_config.embedding_dim, seed=run_config.seed, trainable=trainable)
    return CamseModel(vocab, table, run_config.camse_config(), run_config.scoring_config(),
                      run_config.train_config())


# ============================================================================
# Run Configuration Tests
# ============================================================================

class RunConfigTests(SimpleTestCase):
    """Tests for key=value run configuration files."""

    def test_text_snapshot_restores_fields(self):
        """Test that to_text() parses back to an equal configuration."""
        rc = RunConfig(**TINY, embeddings='vectors.txt', sas_bias=False, learning_rate=0.0025)
        self.assertEqual(RunConfig.from_text(rc.to_text()), rc)

    def test_partial_file_keeps_defaults(self):
        """Test that unlisted keys keep their defaults and comments are skipped."""
        rc = RunConfig.from_text('# tiny run\nscales=2\nfine_tune_embeddings=yes\ntrain_data=data/train.jsonl\n')
        self.assertEqual(rc.scales, 2)
        self.assertTrue(rc.fine_tune_embeddings)
        self.assertEqual(rc.train_data, 'data/train.jsonl')
        self.assertEqual(rc.subspaces, RunConfig().subspaces)

    def test_unknown_key_rejected(self):
        """Test that misspelled keys are configuration errors."""
        with self.assertRaises(ConfigError):
            RunConfig.from_text('scale=2\n')

    def test_malformed_line_rejected(self):
        """Test that a line without '=' names its position."""
        with self.assertRaises(ConfigError) as ctx:
            RunConfig.from_text('scales=2\njust words\n', source='run.env')
        self.assertIn('run.env:2', str(ctx.exception))

    def test_bad_values_rejected(self):
        """Test type errors and out-of-range values."""
        with self.assertRaises(ConfigError):
            RunConfig.from_text('epochs=many\n')
        with self.assertRaises(ConfigError):
            RunConfig.from_text('sas_bias=perhaps\n')
        with self.assertRaises(ConfigError):
            RunConfig(scoring_mode='both').validate()
        with self.assertRaises(ConfigError):
            RunConfig(evidence_source='bm25').validate()

    def test_replace_ignores_none(self):
        """Test that command-line overrides only apply when given."""
        rc = RunConfig(seed=3)
        self.assertEqual(rc.replace(seed=None, threads=4).seed, 3)
        self.assertEqual(rc.replace(seed=None, threads=4).threads, 4)

    def test_text_repository_feeds_decouple_config(self):
        """Test that parsed text is readable through decouple's Config and casts."""
        repository = TextRepository('# comment\nepochs = 4\nseparator="flu"\nsas_bias=off\n')
        read = Config(repository)
        self.assertEqual(read('epochs', cast=int), 4)
        self.assertEqual(read('separator'), 'flu')
        self.assertFalse(read('sas_bias', cast=bool))
        self.assertNotIn('comment', repository)

    def test_file_read_through_env_repository(self):
        """Test that from_file() and from_text() agree on the same lines."""
        text = "scales=2\nsas_bias=on\nlearning_rate=0.5\nseparator='sep'\ncheckpoint=\n"
        temp_dir = tempfile.mkdtemp()
        try:
            path = Path(temp_dir) / 'run.env'
            path.write_text(text, encoding='utf-8')
            from_file = RunConfig.from_file(path)
        finally:
            shutil.rmtree(temp_dir, ignore_errors=True)
        self.assertEqual(from_file, RunConfig.from_text(text))
        self.assertEqual(from_file.separator, 'sep')
        self.assertTrue(from_file.sas_bias)
        self.assertIsNone(from_file.checkpoint)
        self.assertEqual(from_file.learning_rate, 0.5)

    def test_empty_integer_rejected(self):
        """Test that a blank numeric value is a configuration error."""
        with self.assertRaises(ConfigError):
            RunConfig.from_text('epochs=\n')


# ============================================================================
# Engine Defaults Tests
# ============================================================================

class EngineDefaultsTests(SimpleTestCase):
    """Tests for validation of the settings-backed defaults."""

    def test_shipped_defaults_are_valid(self):
        """Test that the default settings pass validation."""
        is_valid, errors = engine_config.validate_configuration()
        self.assertTrue(is_valid, errors)

    def test_invalid_defaults_reported(self):
        """Test that out-of-range settings are listed and logged."""
        with patch.object(engine_config, 'DROPOUT', 1.5), \
                patch.object(engine_config, 'SCORING_MODE', 'both'):
            with self.assertLogs('qa_engine.camse.config', level='WARNING'):
                is_valid, errors = engine_config.validate_configuration()
        self.assertFalse(is_valid)
        self.assertEqual(len(errors), 2)
        self.assertIn('CAMSE_DROPOUT', errors[0])


# ============================================================================
# Checkpoint Tests
# ============================================================================

class CheckpointTests(SimpleTestCase):
    """Tests for the binary checkpoint format."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.rc = RunConfig(**TINY)
        self.model = tiny_model(self.rc)
        self.path = Path(self.temp_dir) / 'model.ckpt'

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_identical_models_identical_bytes(self):
        """Test that equal models serialize to equal bytes."""
        self.assertEqual(encode_checkpoint(self.model, self.rc),
                         encode_checkpoint(tiny_model(self.rc), self.rc))
        self.assertTrue(encode_checkpoint(self.model, self.rc).startswith(MAGIC))

    def test_loaded_model_predicts_identically(self):
        """Test that a reloaded model reproduces candidate scores exactly."""
        save_checkpoint(self.path, self.model, self.rc)
        loaded, rc = load_checkpoint(self.path)
        self.assertEqual(rc, self.rc)
        self.assertEqual(loaded.vocab.tokens, self.model.vocab.tokens)
        np.testing.assert_array_equal(candidate_scores(instance(), loaded).data,
                                      candidate_scores(instance(), self.model).data)

    def test_reencoding_is_stable(self):
        """Test save → load → save gives the same bytes."""
        save_checkpoint(self.path, self.model, self.rc)
        loaded, rc = load_checkpoint(self.path)
        self.assertEqual(encode_checkpoint(loaded, rc), self.path.read_bytes())

    def test_fine_tuned_embeddings_restored(self):
        """Test that a trainable table comes back trainable with its values."""
        rc = self.rc.replace(fine_tune_embeddings=True)
        model = tiny_model(rc, trainable=True)
        model.table.weights.data[1] += 0.5
        save_checkpoint(self.path, model, rc)
        loaded, _ = load_checkpoint(self.path)
        self.assertTrue(loaded.table.trainable)
        self.assertIn('embeddings', loaded.params)
        np.testing.assert_array_equal(loaded.table.weights.data, model.table.weights.data)

    def test_truncated_file_rejected(self):
        """Test that a cut-off checkpoint is refused."""
        data = encode_checkpoint(self.model, self.rc)
        self.path.write_bytes(data[:len(data) // 2])
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_wrong_magic_rejected(self):
        """Test that foreign files are refused."""
        self.path.write_bytes(b'NOTACKPT' + bytes(16))
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_configuration_mismatch_rejected(self):
        """Test that records not matching the stored configuration are refused."""
        other = self.rc.replace(subspaces=4)
        self.path.write_bytes(encode_checkpoint(self.model, self.rc).replace(
            self.rc.to_text().encode('utf-8'), other.to_text().encode('utf-8')))
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)


# ============================================================================
# Inspection Tests
# ============================================================================

class InspectionTests(SimpleTestCase):
    """Tests for attention and score dumps."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.model = tiny_model(RunConfig(**TINY))

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_ngram_units(self):
        """Test the labels of scale-i positions."""
        self.assertEqual(ngram_units(['a', 'b', 'c'], 2), ['a b', 'b c'])

    def test_keywords_by_weight(self):
        """Test that keywords are the top-weighted units, ties by position."""
        attention = np.array([[0.2, 0.5], [0.5, 0.25], [0.3, 0.25]])
        keywords = subspace_keywords(['x', 'y', 'z'], attention, top=2)
        self.assertEqual([u for u, _ in keywords[0]], ['y', 'z'])
        self.assertEqual([u for u, _ in keywords[1]], ['x', 'y'])

    def test_attention_dump(self):
        """Test per-scale units and unit column sums."""
        dump = attention_dump(self.model, 'which disease gives a high fever', top=2)
        self.assertEqual(dump['tokens'], 6)
        self.assertEqual([len(s['units']) for s in dump['scales']], [6, 5])
        for scale in dump['scales']:
            np.testing.assert_allclose(scale['column_sums'], np.ones(3), atol=1e-5)
            self.assertEqual(len(scale['keywords']), 3)

    def test_attention_files(self):
        """Test the CSV rows and the heatmap image."""
        dump = attention_dump(self.model, 'which disease gives a high fever')
        csv_path = Path(self.temp_dir) / 'attention.csv'
        write_attention_csv(dump, csv_path)
        with open(csv_path, encoding='utf-8', newline='') as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(rows[0], ['scale', 'position', 'unit', 'subspace_1', 'subspace_2', 'subspace_3'])
        self.assertEqual(len(rows), 1 + 6 + 5)
        image = render_attention_heatmap(dump, Path(self.temp_dir) / 'attention.png')
        self.assertTrue(image.exists())

    def test_score_dump(self):
        """Test the combined matrices and the score."""
        dump = score_dump(self.model, 'which disease gives fever flu', 'a high fever')
        self.assertEqual(len(dump['scales']), 2)
        self.assertEqual(np.array(dump['scales'][0]['matrix']).shape, (3, 3))
        self.assertEqual(dump['mode'], 'sms+sas')
        self.assertIsInstance(dump['score'], float)
