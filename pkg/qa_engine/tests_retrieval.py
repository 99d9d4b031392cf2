"""
Unit tests for BM25 retrieval and neighbour evidence.

Tests for camse/retrieval.py
"""

import math
import shutil
import tempfile
from pathlib import Path
from unittest.mock import Mock

import numpy as np
from django.test import SimpleTestCase

from qa_engine.camse.exceptions import DatasetError, IndexFormatError
from qa_engine.camse.qa import QaInstance
from qa_engine.camse.retrieval import (
    NeighborBank,
    attach_bm25_evidence,
    bm25,
    build_index,
    build_neighbor_bank,
    load_index,
    neighbor_evidence,
    save_index,
    top_k_evidence,
    train_repr_classifier,
)
from qa_engine.camse.text import Vocabulary, random_embeddings

CORPUS = [
    'fever is a common symptom of infection',
    'the heart pumps blood through the body',
    'infection of the lungs causes cough and fever',
    'blood pressure rises with stress',
    'cough cough cough is typical of bronchitis',
]


def _brute_force_bm25(query, corpus, k1=1.2, b=0.75):
    docs = [doc.split() for doc in corpus]
    n = len(docs)
    avg = sum(len(d) for d in docs) / n
    scores = []
    for doc in docs:
        total = 0.0
        for term in query.split():
            df = sum(1 for d in docs if term in d)
            if df == 0:
                continue
            idf = math.log((n - df + 0.5) / (df + 0.5) + 1)
            tf = doc.count(term)
            total += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(doc) / avg))
        scores.append(total)
    return scores


# ============================================================================
# BM25 Tests
# ============================================================================

class Bm25Tests(SimpleTestCase):
    """Tests for the inverted index and BM25 ranking."""

    def setUp(self):
        self.index = build_index(CORPUS)
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_scores_match_direct_formula(self):
        """Test index-based scores against a scan of every document."""
        for query in ['fever infection', 'cough fever cough', 'blood heart stress', 'unknown words']:
            with self.subTest(query=query):
                expected = _brute_force_bm25(query, CORPUS)
                ranked = bm25(query, self.index, k1=1.2, b=0.75)
                got = {doc.doc_id: doc.score for doc in ranked}
                for doc_id, score in enumerate(expected):
                    if score > 0:
                        self.assertAlmostEqual(got[doc_id], score, places=9)
                    else:
                        self.assertNotIn(doc_id, got)

    def test_ranking_order_and_ties(self):
        """Test descending scores, ascending ids on ties and 1-based ranks."""
        index = build_index(['a b', 'a b', 'c d'])
        ranked = bm25('a', index)
        self.assertEqual([d.doc_id for d in ranked], [0, 1])
        self.assertEqual([d.rank for d in ranked], [1, 2])
        self.assertEqual(ranked[0].score, ranked[1].score)

    def test_top_k_is_prefix(self):
        """Test that top-k is the first k of the full ranking."""
        full = bm25('fever cough blood', self.index)
        for k in (1, 2, 10):
            self.assertEqual(top_k_evidence('fever cough blood', self.index, k=k), full[:k])

    def test_postings_sorted_by_doc(self):
        """Test postings are ordered by document id with term counts."""
        self.assertEqual(self.index.postings['cough'], [(2, 1), (4, 3)])
        self.assertEqual(self.index.document_frequency('fever'), 2)
        self.assertEqual(self.index.term_frequency('cough', 4), 3)

    def test_empty_corpus_and_document(self):
        """Test that empty corpora and empty documents are rejected."""
        with self.assertRaises(DatasetError):
            build_index([])
        with self.assertRaises(DatasetError) as ctx:
            build_index(['a b', '   '])
        self.assertIn('Document 1', str(ctx.exception))

    def test_saved_index_is_stable(self):
        """Test that saving a loaded index reproduces the file byte for byte."""
        first = Path(self.temp_dir) / 'first.json'
        second = Path(self.temp_dir) / 'second.json'
        save_index(self.index, first)
        save_index(load_index(first), second)
        self.assertEqual(first.read_bytes(), second.read_bytes())
        self.assertEqual(bm25('fever', load_index(first)), bm25('fever', self.index))

    def test_load_rejects_foreign_files(self):
        """Test that non-index files raise IndexFormatError."""
        path = Path(self.temp_dir) / 'bad.json'
        path.write_text('{"format_version": 99}', encoding='utf-8')
        with self.assertRaises(IndexFormatError):
            load_index(path)
        path.write_text('not json', encoding='utf-8')
        with self.assertRaises(IndexFormatError):
            load_index(path)

    def test_attach_bm25_evidence(self):
        """Test that each choice receives documents retrieved for question ⊕ choice."""
        instance = QaInstance('q1', 'about', ['fever', 'blood'], [[], []], answer=0)
        (attached,) = attach_bm25_evidence([instance], self.index, k=1)
        self.assertEqual(attached.evidence[0], [CORPUS[0]])
        self.assertEqual(attached.evidence[1], [CORPUS[3]])
        self.assertEqual(instance.evidence, [[], []])


# ============================================================================
# Neighbour Evidence Tests
# ============================================================================

class NeighborEvidenceTests(SimpleTestCase):
    """Tests for nearest-neighbour evidence among solved questions."""

    def setUp(self):
        self.bank = NeighborBank(
            ids=['t1', 't2', 't3', 't4'],
            texts=['first flu', 'second flu', 'first cold', 'second cold'],
            labels=['flu', 'flu', 'cold', 'cold'],
            vectors=np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0], [1.0, 0.1]]),
        )
        self.classifier = Mock()
        self.classifier.represent.return_value = np.array([1.0, 0.0])

    def test_most_similar_per_class(self):
        """Test that evidence per choice is ordered by cosine within the class."""
        evidence = neighbor_evidence('q', ['cold', 'flu'], self.classifier, self.bank, per_class_k=1)
        self.assertEqual(evidence, [['second cold'], ['first flu']])

    def test_self_excluded(self):
        """Test that an instance never retrieves itself."""
        evidence = neighbor_evidence('q', ['flu'], self.classifier, self.bank, per_class_k=2, exclude_ids=['t1'])
        self.assertEqual(evidence, [['second flu']])

    def test_absent_class_gets_no_evidence(self):
        """Test that a choice with no bank members gets an empty list."""
        with self.assertLogs('qa_engine.camse.retrieval', level='WARNING'):
            evidence = neighbor_evidence('q', ['measles', 'flu'], self.classifier, self.bank, per_class_k=1)
        self.assertEqual(evidence[0], [])


class ReprClassifierTests(SimpleTestCase):
    """Tests for the LSTM-MLP representation classifier."""

    def setUp(self):
        self.texts = ['red apple fruit', 'apple red sweet', 'fruit apple red',
                      'blue sky wide', 'sky blue open', 'wide blue sky']
        self.labels = ['apple', 'apple', 'apple', 'sky', 'sky', 'sky']
        self.vocab = Vocabulary.from_texts(self.texts)
        self.table = random_embeddings(self.vocab, 6, seed=1)

    def _train(self):
        return train_repr_classifier(self.texts, self.labels, self.vocab, self.table, epochs=40,
                                     learning_rate=0.05, batch_size=3, seed=2,
                                     context_size=4, hidden_size=5, max_len=10)

    def test_fits_separable_classes(self):
        """Test that training separates two disjoint-vocabulary classes."""
        classifier = self._train()
        self.assertEqual([classifier.predict(t) for t in self.texts], self.labels)
        self.assertEqual(classifier.represent('red apple').shape, (5,))

    def test_training_is_deterministic(self):
        """Test that equal seeds give identical representations."""
        a, b = self._train(), self._train()
        np.testing.assert_array_equal(a.represent('blue apple'), b.represent('blue apple'))

    def test_single_class_rejected(self):
        """Test that one class cannot train a classifier."""
        with self.assertRaises(DatasetError):
            train_repr_classifier(['a b'], ['x'], self.vocab, self.table, epochs=1)

    def test_bank_skips_unlabelled(self):
        """Test that only instances with a gold answer enter the bank."""
        classifier = self._train()
        instances = [
            QaInstance('a', 'red apple', ['apple', 'sky'], [[], []], answer=0),
            QaInstance('b', 'blue sky', ['apple', 'sky'], [[], []]),
        ]
        bank = build_neighbor_bank(classifier, instances)
        self.assertEqual(bank.ids, ['a'])
        self.assertEqual(bank.labels, ['apple'])
        self.assertEqual(bank.vectors.shape, (1, 5))
