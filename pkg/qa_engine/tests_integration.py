"""
Integration tests for the management commands.

These tests drive the full pipeline through call_command on a tiny
synthetic corpus: generate, index, train, evaluate, answer and inspect.
Longer convergence runs are skipped unless CAMSE_RUN_SLOW_TESTS=1.
"""

import json
import logging
import os
import shutil
import tempfile
import unittest
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from qa_engine.camse.qa import evaluate_baseline, load_dataset, save_dataset
from qa_engine.camse.text import load_embeddings

logger = logging.getLogger(__name__)

RUN_SLOW = os.environ.get('CAMSE_RUN_SLOW_TESTS') == '1'

TINY_CONFIG = """\
# tiny desk-scale run
scales=2
subspaces=3
embedding_dim=6
context_size=3
attention_context_size=2
attention_hidden=4
gate_hidden=4
dropout=0.0
epochs={epochs}
batch_size=4
learning_rate=0.01
max_statement_len=16
max_document_len=16
evidence_cap=2
seed=3
"""


def run(name, *args, **options):
    out = StringIO()
    call_command(name, *args, stdout=out, **options)
    return out.getvalue()


class CommandPipelineTests(SimpleTestCase):
    """End-to-end tests of the command-line surface."""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())
        self.corpus = self.temp_dir / 'corpus'
        run('synth', 'association', str(self.corpus), vocab_size=120, num_diseases=8, train_size=12,
            test_size=6, embedding_dim=6, seed=11)
        self.checkpoint = self.temp_dir / 'model.ckpt'
        self.config = self.write_config(epochs=1)

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def write_config(self, epochs, **extra):
        lines = TINY_CONFIG.format(epochs=epochs)
        lines += f"train_data={self.corpus / 'train.jsonl'}\n"
        lines += f"test_data={self.corpus / 'test.jsonl'}\n"
        lines += f"embeddings={self.corpus / 'embeddings.txt'}\n"
        lines += f"checkpoint={self.checkpoint}\n"
        for key, value in extra.items():
            lines += f"{key}={value}\n"
        path = self.temp_dir / 'run.env'
        path.write_text(lines, encoding='utf-8')
        return str(path)

    def train(self, **options):
        return json.loads(run('train', config=self.config, **options))

    def test_synth_writes_manifest(self):
        """Test that synth writes both splits, embeddings and a manifest."""
        manifest = json.loads((self.corpus / 'manifest.json').read_text(encoding='utf-8'))
        self.assertEqual(manifest['train_count'], 12)
        self.assertEqual(len(load_dataset(self.corpus / 'test.jsonl')), 6)

    def test_train_then_eval(self):
        """Test that training writes a checkpoint that eval can score."""
        metrics = self.temp_dir / 'metrics.jsonl'
        summary = self.train(metrics=str(metrics))
        self.assertTrue(self.checkpoint.exists())
        self.assertEqual(summary['best_epoch'], 1)
        self.assertIn('test_accuracy', summary)
        self.assertEqual(len(metrics.read_text(encoding='utf-8').splitlines()), 1)

        report = self.temp_dir / 'report.json'
        output = run('eval', str(self.checkpoint), str(self.corpus / 'test.jsonl'), report=str(report))
        self.assertTrue(output.startswith('accuracy '))
        payload = json.loads(report.read_text(encoding='utf-8'))
        self.assertEqual(payload['count'], 6)
        self.assertAlmostEqual(payload['accuracy'], summary['test_accuracy'])

    def test_training_is_reproducible(self):
        """Test that the same configuration and seed give identical checkpoints and metrics."""
        self.config = self.write_config(epochs=2)
        metrics = self.temp_dir / 'metrics.jsonl'
        self.train(metrics=str(metrics))
        first, first_log = self.checkpoint.read_bytes(), metrics.read_bytes()
        self.train(metrics=str(metrics))
        self.assertEqual(first, self.checkpoint.read_bytes())
        self.assertEqual(first_log, metrics.read_bytes())
        self.assertEqual(len(first_log.splitlines()), 2)

    def test_answer_and_dumps(self):
        """Test the per-question answer and both inspection dumps."""
        self.train()
        single = self.temp_dir / 'one.jsonl'
        item = load_dataset(self.corpus / 'test.jsonl')[0]
        save_dataset(single, [item])

        answer = json.loads(run('answer', str(self.checkpoint), str(single)))
        self.assertEqual(answer['id'], item.id)
        self.assertEqual(len(answer['scores']), len(item.choices))
        self.assertEqual([len(p) for p in answer['pair_scores']], [2] * len(item.choices))
        self.assertEqual(answer['choice'], item.choices[answer['predicted']])

        csv_path = self.temp_dir / 'attention.csv'
        dump = json.loads(run('dump_attention', str(self.checkpoint), item.question, csv=str(csv_path)))
        self.assertEqual(len(dump['scales']), 2)
        self.assertTrue(csv_path.exists())

        scores = json.loads(run('dump_scores', str(self.checkpoint), f"{item.question} {item.choices[0]}",
                                item.evidence[0][0]))
        self.assertEqual(len(scores['scales'][0]['matrix']), 3)

    def test_bm25_evidence_source(self):
        """Test training with evidence retrieved from an indexed corpus."""
        corpus_file = self.temp_dir / 'documents.txt'
        docs = sorted({
            f"{choice} {doc}"
            for inst in load_dataset(self.corpus / 'train.jsonl')
            for choice, evidence in zip(inst.choices, inst.evidence)
            for doc in evidence
        })
        corpus_file.write_text('\n'.join(docs) + '\n', encoding='utf-8')
        index = self.temp_dir / 'index.json'
        output = run('index', str(corpus_file), str(index))
        self.assertIn(f"Indexed {len(docs)} documents", output)

        self.config = self.write_config(epochs=1, evidence_source='bm25', index=index)
        summary = self.train()
        self.assertIn('test_accuracy', summary)

    def test_missing_training_data_is_usage_error(self):
        """Test that a missing required key exits with code 1."""
        path = self.temp_dir / 'bare.env'
        path.write_text(TINY_CONFIG.format(epochs=1) + f"checkpoint={self.checkpoint}\n", encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            run('train', config=str(path))
        self.assertEqual(ctx.exception.returncode, 1)

    def test_unknown_config_key_is_usage_error(self):
        """Test that a misspelled configuration key exits with code 1."""
        path = self.temp_dir / 'typo.env'
        path.write_text('epoch=3\n', encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            run('train', config=str(path))
        self.assertEqual(ctx.exception.returncode, 1)

    def test_missing_checkpoint_is_io_error(self):
        """Test that unreadable inputs exit with code 2."""
        with self.assertRaises(CommandError) as ctx:
            run('eval', str(self.temp_dir / 'absent.ckpt'), str(self.corpus / 'test.jsonl'))
        self.assertEqual(ctx.exception.returncode, 2)

        corrupt = self.temp_dir / 'corrupt.ckpt'
        corrupt.write_bytes(b'garbage')
        with self.assertRaises(CommandError) as ctx:
            run('eval', str(corrupt), str(self.corpus / 'test.jsonl'))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_answer_needs_single_record(self):
        """Test that answer refuses files with several records."""
        self.train()
        with self.assertRaises(CommandError) as ctx:
            run('answer', str(self.checkpoint), str(self.corpus / 'test.jsonl'))
        self.assertEqual(ctx.exception.returncode, 2)

    @unittest.skipUnless(RUN_SLOW, "set CAMSE_RUN_SLOW_TESTS=1 to run convergence tests")
    def test_association_corpus_is_learnable(self):
        """Test that a longer run beats chance on the association corpus."""
        run('synth', 'association', str(self.corpus), vocab_size=120, num_diseases=8, train_size=300,
            test_size=100, embedding_dim=6, seed=11)
        self.config = self.write_config(epochs=15)
        summary = self.train()
        self.assertGreater(summary['test_accuracy'], 0.4)

    @unittest.skipUnless(RUN_SLOW, "set CAMSE_RUN_SLOW_TESTS=1 to run convergence tests")
    def test_entity_corpus_separates_model_from_baseline(self):
        """Test that the encoder orders entities while mean-cosine pooling stays near chance."""
        run('synth', 'entity', str(self.corpus), vocab_size=200, train_size=500, test_size=200,
            embedding_dim=6, seed=11)
        self.config = self.write_config(epochs=30, subspaces=8, context_size=32, scales=3)
        summary = self.train()
        self.assertGreaterEqual(summary['test_accuracy'], 0.9)

        test_set = load_dataset(self.corpus / 'test.jsonl')
        vocab, table = load_embeddings(self.corpus / 'embeddings.txt')
        self.assertLessEqual(evaluate_baseline(test_set, vocab, table), 0.6)

    @unittest.skipUnless(RUN_SLOW, "set CAMSE_RUN_SLOW_TESTS=1 to run convergence tests")
    def test_association_pathway_helps(self):
        """Test that adding SAS does not lose to SMS alone on the association corpus."""
        run('synth', 'association', str(self.corpus), vocab_size=120, num_diseases=8, train_size=300,
            test_size=100, embedding_dim=6, seed=11)
        self.config = self.write_config(epochs=15)
        full = self.train()['test_accuracy']
        self.config = self.write_config(epochs=15, scoring_mode='sms_only')
        sms_only = self.train()['test_accuracy']
        logger.info(f"SMS+SAS {full:.4f} vs SMS only {sms_only:.4f} (gap {full - sms_only:+.4f})")
        self.assertGreaterEqual(full, sms_only)
