"""
Unit tests for tokenization, embeddings and near-duplicate filtering.

Tests for camse/text.py
"""

import shutil
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from qa_engine.camse.exceptions import ConfigError, CorruptionError, EmptySequenceError, ParseError
from qa_engine.camse.text import (
    OOV_ID,
    EmbeddingTable,
    Vocabulary,
    dedup_train,
    levenshtein,
    levenshtein_ratio,
    load_embeddings,
    lookup,
    random_embeddings,
    save_embeddings,
    tokenize,
    truncate,
)


# ============================================================================
# Tokenization Tests
# ============================================================================

class TokenizeTests(SimpleTestCase):
    """Tests for whitespace tokenization and truncation."""

    def setUp(self):
        self.vocab = Vocabulary(['the', 'cat', 'sat'])

    def test_known_and_unknown_tokens(self):
        """Test id mapping with unknown tokens sent to 0."""
        seq = tokenize('the  dog sat', self.vocab)
        self.assertEqual(seq.ids, (1, OOV_ID, 3))
        self.assertEqual(seq.raw, ('the', 'dog', 'sat'))

    def test_blank_text_rejected(self):
        """Test that text with no tokens raises EmptySequenceError."""
        with self.assertRaises(EmptySequenceError):
            tokenize('   \t ', self.vocab)

    def test_truncate_keeps_prefix(self):
        """Test that truncation keeps the first max_len tokens."""
        seq = tokenize('the cat sat the cat sat', self.vocab)
        short = truncate(seq, 4, min_len=3)
        self.assertEqual(short.ids, (1, 2, 3, 1))
        self.assertIs(truncate(seq, 10, min_len=3), seq)

    def test_truncate_below_window_rejected(self):
        """Test that max_len under the widest window is a configuration error."""
        seq = tokenize('the cat sat', self.vocab)
        with self.assertRaises(ConfigError):
            truncate(seq, 2, min_len=3)

    def test_vocabulary_reserves_zero(self):
        """Test that id 0 is the OOV sentinel and tokens are numbered from 1."""
        self.assertEqual(len(self.vocab), 4)
        self.assertEqual(self.vocab.tokens, ['the', 'cat', 'sat'])
        self.assertEqual(self.vocab.id_of('sat'), 3)
        with self.assertRaises(CorruptionError):
            self.vocab.token_of(4)


# ============================================================================
# Embedding Tests
# ============================================================================

class EmbeddingTests(SimpleTestCase):
    """Tests for embedding tables and the text file format."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _write(self, content):
        path = Path(self.temp_dir) / 'vectors.txt'
        path.write_text(content, encoding='utf-8')
        return path

    def test_load_valid_file(self):
        """Test loading a well-formed file with the zero OOV row."""
        vocab, table = load_embeddings(self._write('2 3\nfoo 1 2 3\nbar 0.5 -1 0\n'))
        self.assertEqual(vocab.tokens, ['foo', 'bar'])
        self.assertEqual((table.size, table.dim), (3, 3))
        np.testing.assert_array_equal(table.weights.data[0], np.zeros(3))
        np.testing.assert_allclose(table.weights.data[1], [1, 2, 3])

    def test_short_row_reports_line(self):
        """Test that a row with the wrong width names its line."""
        with self.assertRaises(ParseError) as ctx:
            load_embeddings(self._write('2 3\nfoo 1 2 3\nbar 1 2\n'))
        self.assertEqual(ctx.exception.line, 3)

    def test_bad_header_rejected(self):
        """Test that a non-numeric header is refused."""
        with self.assertRaises(ParseError) as ctx:
            load_embeddings(self._write('two 3\nfoo 1 2 3\n'))
        self.assertEqual(ctx.exception.line, 1)

    def test_non_finite_value_rejected(self):
        """Test that nan and inf entries are refused."""
        with self.assertRaises(ParseError) as ctx:
            load_embeddings(self._write('1 2\nfoo nan 1\n'))
        self.assertEqual(ctx.exception.line, 2)

    def test_duplicate_token_rejected(self):
        """Test that a token cannot appear twice."""
        with self.assertRaises(ParseError):
            load_embeddings(self._write('2 1\nfoo 1\nfoo 2\n'))

    def test_row_count_mismatch_rejected(self):
        """Test that the header count must match the rows."""
        with self.assertRaises(ParseError):
            load_embeddings(self._write('3 1\nfoo 1\nbar 2\n'))

    def test_save_then_load_preserves_vectors(self):
        """Test that saved tables load back with identical values."""
        vocab = Vocabulary(['alpha', 'beta'])
        table = random_embeddings(vocab, 4, seed=3)
        path = Path(self.temp_dir) / 'out.txt'
        save_embeddings(path, vocab, table)
        loaded_vocab, loaded = load_embeddings(path)
        self.assertEqual(loaded_vocab.tokens, vocab.tokens)
        np.testing.assert_array_equal(loaded.weights.data, table.weights.data)

    def test_oov_row_forced_to_zero(self):
        """Test that row 0 is zeroed whatever the input matrix holds."""
        table = EmbeddingTable(np.ones((3, 2)))
        np.testing.assert_array_equal(table.weights.data[0], [0.0, 0.0])

    def test_lookup_out_of_range_id(self):
        """Test that an id beyond the table is corruption."""
        vocab = Vocabulary(['a'])
        table = random_embeddings(vocab, 2, seed=0)
        seq = tokenize('a', Vocabulary(['a', 'b', 'c']))
        self.assertEqual(lookup(seq, table).shape, (1, 2))
        bad = tokenize('c', Vocabulary(['a', 'b', 'c']))
        with self.assertRaises(CorruptionError):
            lookup(bad, table)


# ============================================================================
# Deduplication Tests
# ============================================================================

class DedupTests(SimpleTestCase):
    """Tests for Levenshtein ratios and training-set filtering."""

    def test_known_distances(self):
        """Test the classic kitten/sitting example and empty strings."""
        self.assertEqual(levenshtein('kitten', 'sitting'), 3)
        self.assertAlmostEqual(levenshtein_ratio('kitten', 'sitting'), 4 / 7, places=4)
        self.assertEqual(levenshtein_ratio('', ''), 1.0)
        self.assertEqual(levenshtein_ratio('abc', ''), 0.0)

    def test_near_duplicates_dropped(self):
        """Test that training questions at or above the threshold are removed."""
        train = ['what causes fever in children', 'how do lungs work', 'what causes fevers in children']
        test = ['what causes fever in children ?']
        kept = dedup_train(train, test, threshold=0.8)
        self.assertEqual(kept, ['how do lungs work'])

    def test_threshold_one_keeps_non_identical(self):
        """Test that a threshold of 1 drops only exact copies."""
        kept = dedup_train(['abc', 'abd'], ['abc'], threshold=1.0)
        self.assertEqual(kept, ['abd'])

    def test_invalid_threshold(self):
        """Test that thresholds outside (0, 1] are rejected."""
        with self.assertRaises(ConfigError):
            dedup_train(['a'], ['a'], threshold=0.0)


# ============================================================================
# Edit Distance Property Tests
# ============================================================================

def _full_table_distance(a, b):
    table = np.zeros((len(a) + 1, len(b) + 1), dtype=int)
    table[:, 0] = np.arange(len(a) + 1)
    table[0, :] = np.arange(len(b) + 1)
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            table[i, j] = min(table[i - 1, j] + 1, table[i, j - 1] + 1,
                              table[i - 1, j - 1] + (a[i - 1] != b[j - 1]))
    return int(table[-1, -1])


class EditDistancePropertyTests(SimpleTestCase):
    """Metric properties of the edit distance on random short strings."""

    def setUp(self):
        rng = np.random.default_rng(17)
        self.strings = [''.join(rng.choice(list('abc'), size=int(rng.integers(0, 11))))
                        for _ in range(40)]

    def test_matches_full_table(self):
        """Test the rolling-row distance against the full dynamic-programming table."""
        for a, b in zip(self.strings, reversed(self.strings)):
            self.assertEqual(levenshtein(a, b), _full_table_distance(a, b), msg=f"{a!r} {b!r}")

    def test_symmetry(self):
        """Test that distance and ratio do not depend on argument order."""
        for a in self.strings:
            for b in self.strings[:10]:
                self.assertEqual(levenshtein(a, b), levenshtein(b, a))
                self.assertEqual(levenshtein_ratio(a, b), levenshtein_ratio(b, a))

    def test_triangle_inequality(self):
        """Test d(a, c) <= d(a, b) + d(b, c) over string triples."""
        sample = self.strings[:12]
        for a in sample:
            for b in sample:
                for c in sample:
                    self.assertLessEqual(levenshtein(a, c), levenshtein(a, b) + levenshtein(b, c))

    def test_identity(self):
        """Test that only equal strings are at distance 0."""
        for a in self.strings:
            self.assertEqual(levenshtein(a, a), 0)
            self.assertEqual(levenshtein_ratio(a, a), 1.0)
            self.assertEqual(levenshtein(a, a + 'c'), 1)
