"""
Unit tests for the synthetic corpus generators.

Tests for camse/synth.py
"""

import json
import shutil
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from qa_engine.camse.exceptions import SynthConfigError
from qa_engine.camse.qa import CamseModel, evaluate, evaluate_baseline, load_dataset
from qa_engine.camse.runconfig import RunConfig
from qa_engine.camse.synth import VALID_KINDS, SynthConfig, generate, write_corpus
from qa_engine.camse.text import load_embeddings

SMALL = dict(vocab_size=120, num_diseases=8, train_size=20, test_size=10, embedding_dim=6, seed=11)


class EntityCorpusTests(SimpleTestCase):
    """Tests for the ordered-entity corpus."""

    def setUp(self):
        self.cfg = SynthConfig(**SMALL)
        self.corpus = generate('entity', self.cfg)

    def test_sizes_and_choices(self):
        """Test split sizes, choice counts and evidence per choice."""
        self.assertEqual(len(self.corpus.train), 20)
        self.assertEqual(len(self.corpus.test), 10)
        for inst in self.corpus.train:
            self.assertEqual(len(inst.choices), 4)
            self.assertEqual(len(set(inst.choices)), 4)
            self.assertTrue(all(len(docs) == 2 for docs in inst.evidence))
            self.assertEqual(len(inst.question.split()), 12)

    def test_distractors_share_bag_of_words(self):
        """Test that all choices' evidence entities use the same token set."""
        for inst in self.corpus.train:
            families = set()
            for docs in inst.evidence:
                entity = frozenset(t for t in docs[0].split() if t.startswith('e'))
                families.add(entity)
            self.assertEqual(len(families), 1)

    def test_gold_evidence_repeats_question_entity(self):
        """Test that the gold choice's evidence contains the question's entity in order."""
        for inst in self.corpus.train:
            q_entity = [t for t in inst.question.split() if t.startswith('e')]
            gold_doc = [t for t in inst.evidence[inst.answer][0].split() if t.startswith('e')]
            self.assertEqual(q_entity, gold_doc)

    def test_generation_is_deterministic(self):
        """Test that equal configurations give equal corpora."""
        again = generate('entity', SynthConfig(**SMALL))
        self.assertEqual(again.train, self.corpus.train)
        self.assertEqual(again.vocab.tokens, self.corpus.vocab.tokens)

    def test_seed_changes_corpus(self):
        """Test that another seed gives another corpus."""
        other = generate('entity', SynthConfig(**{**SMALL, 'seed': 12}))
        self.assertNotEqual(other.train, self.corpus.train)


class AssociationCorpusTests(SimpleTestCase):
    """Tests for the cause/symptom association corpus."""

    def setUp(self):
        self.corpus = generate('association', SynthConfig(**SMALL))

    def test_question_and_gold_evidence_disjoint(self):
        """Test that questions share no token with any evidence document."""
        for inst in self.corpus.train + self.corpus.test:
            question = set(inst.question.split())
            for docs in inst.evidence:
                for doc in docs:
                    self.assertFalse(question & set(doc.split()))

    def test_gold_evidence_names_gold_symptoms(self):
        """Test that gold evidence carries the symptoms of the disease whose causes are asked."""
        for inst in self.corpus.train:
            cause = next(t for t in inst.question.split() if t.startswith('c'))
            symptoms = {t for t in inst.evidence[inst.answer][0].split() if t.startswith('s')}
            self.assertTrue(all(s[1:3] == cause[1:3] for s in symptoms))


class SynthConfigTests(SimpleTestCase):
    """Tests for configuration validation and corpus files."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_invalid_configurations(self):
        """Test rejected configurations."""
        for bad in ({'num_choices': 1}, {'num_diseases': 2}, {'entity_length': 1},
                    {'question_length': 3}, {'vocab_size': 20}):
            with self.subTest(bad=bad), self.assertRaises(SynthConfigError):
                generate('entity', SynthConfig(**{**SMALL, **bad}))

    def test_unknown_kind(self):
        """Test that unknown corpus kinds are rejected."""
        with self.assertRaises(SynthConfigError):
            generate('riddles', SynthConfig(**SMALL))

    def test_written_files_load(self):
        """Test that written datasets, embeddings and manifest agree."""
        cfg = SynthConfig(**SMALL)
        corpus = generate('association', cfg)
        out = write_corpus(corpus, cfg, Path(self.temp_dir) / 'corpus')
        self.assertEqual(load_dataset(out / 'train.jsonl'), corpus.train)
        vocab, table = load_embeddings(out / 'embeddings.txt')
        self.assertEqual(vocab.tokens, corpus.vocab.tokens)
        self.assertEqual(table.dim, 6)
        manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
        self.assertEqual(manifest['kind'], 'association')
        self.assertEqual(manifest['config']['seed'], 11)
        self.assertEqual(manifest['test_count'], 10)


# ============================================================================
# Corpus Statistics Tests
# ============================================================================

class CorpusStatisticsTests(SimpleTestCase):
    """Tests for label balance and the accuracy of uninformed predictors."""

    def test_gold_slots_are_balanced(self):
        """Test that each answer index holds 1/n_c of 2000 instances within 0.05."""
        for kind in VALID_KINDS:
            corpus = generate(kind, SynthConfig(**{**SMALL, 'train_size': 2000, 'test_size': 1}))
            counts = np.bincount([inst.answer for inst in corpus.train], minlength=4)
            with self.subTest(kind=kind):
                np.testing.assert_allclose(counts / 2000, np.full(4, 0.25), atol=0.05)

    def test_constant_predictor_scores_chance(self):
        """Test that zeroed scoring weights reach exactly the share of gold index 0."""
        cfg = SynthConfig(**{**SMALL, 'test_size': 60})
        corpus = generate('association', cfg)
        run_config = RunConfig(scales=2, subspaces=2, embedding_dim=6, context_size=2,
                               attention_context_size=2, attention_hidden=3, gate_hidden=3,
                               dropout=0.0, max_statement_len=16, max_document_len=16)
        model = CamseModel(corpus.vocab, corpus.table, run_config.camse_config(),
                           run_config.scoring_config(), run_config.train_config())
        model.params['aggregate.weight'].data[...] = 0.0
        model.params['aggregate.bias'].data[...] = 0.0
        share = sum(inst.answer == 0 for inst in corpus.test) / len(corpus.test)
        accuracy = evaluate(corpus.test, model)
        self.assertEqual(accuracy, share)
        self.assertLess(abs(accuracy - 0.25), 0.2)

    def test_mean_cosine_baseline_is_misled_by_entities(self):
        """Test that word-level pooling cannot tell entity orderings apart."""
        corpus = generate('entity', SynthConfig(**{**SMALL, 'test_size': 200}))
        self.assertLessEqual(evaluate_baseline(corpus.test, corpus.vocab, corpus.table), 0.6)
