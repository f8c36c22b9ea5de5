"""Term-count-of-labels table: per-word occurrence counts under each class.

Counts come from the training split only.  Words never seen in training (and
the reserved pad/unk indices) look up as zero vectors, the neutral element of
the additive fusion downstream.
"""

from __future__ import annotations

import numpy as np

from .corpus import PAD_INDEX, UNK_INDEX, CorpusError


class TcolTable:
    """word -> length-c count vector, plus the vocabulary size used as the
    normalizer."""

    def __init__(self, counts, n_classes, vocab_size):
        self.counts = counts
        self.n_classes = n_classes
        self.vocab_size = vocab_size

    def __eq__(self, other):
        return (
            isinstance(other, TcolTable)
            and self.n_classes == other.n_classes
            and self.vocab_size == other.vocab_size
            and self.counts.keys() == other.counts.keys()
            and all(np.array_equal(v, other.counts[w]) for w, v in self.counts.items())
        )

    def vector(self, word):
        """Count vector for a word; all zeros when unseen in training."""
        v = self.counts.get(word)
        if v is None:
            return np.zeros(self.n_classes, dtype=np.int64)
        return v

    def total(self):
        return sum(int(v.sum()) for v in self.counts.values())

    def index_matrix(self, vocab, dtype=np.float32):
        """Dense (V, c) matrix of raw counts aligned to vocabulary indices.

        Pad and unk rows are zero.  This is the fast path the trainer uses;
        it agrees entry-for-entry with per-token vector() lookups.
        """
        mat = np.zeros((vocab.size, self.n_classes), dtype=dtype)
        for i, tok in enumerate(vocab.index_to_token):
            if i in (PAD_INDEX, UNK_INDEX):
                continue
            v = self.counts.get(tok)
            if v is not None:
                mat[i] = v
        return mat


def build_tcol(examples, n_classes, vocab):
    """Accumulate counts[word][label] over encoded training examples.

    ``examples`` is an iterable of (token_index_list, label) pairs; pad
    positions are skipped.  Raises on labels outside [0, n_classes).
    """
    counts = {}
    for tokens, label in examples:
        if not 0 <= label < n_classes:
            raise ValueError("label %r outside [0, %d)" % (label, n_classes))
        for idx in tokens:
            if idx == PAD_INDEX:
                continue
            word = vocab.index_to_token[idx]
            vec = counts.get(word)
            if vec is None:
                vec = np.zeros(n_classes, dtype=np.int64)
                counts[word] = vec
            vec[label] += 1
    return TcolTable(counts, n_classes, vocab.size)


def sentence_tcol(tokens, table, vocab):
    """The (c, m) count matrix of a sentence: column j is the TCoL vector of
    token j.  Pad and unknown tokens give zero columns."""
    m = len(tokens)
    out = np.zeros((table.n_classes, m), dtype=np.float32)
    for j, idx in enumerate(tokens):
        if idx in (PAD_INDEX, UNK_INDEX):
            continue
        out[:, j] = table.vector(vocab.index_to_token[idx])
    return out


def normalize_tcol(mat, vocab_size):
    """Scale counts by the dictionary size."""
    if vocab_size <= 0:
        raise ValueError("vocabulary size must be positive, got %r" % (vocab_size,))
    return np.asarray(mat, dtype=np.float32) / np.float32(vocab_size)


def save_tcol(table, path):
    """One `word<TAB>count...` line per word after a `#classes=c vocab=V`
    header, words in lexicographic order."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("#classes=%d vocab=%d\n" % (table.n_classes, table.vocab_size))
        for word in sorted(table.counts):
            f.write("%s\t%s\n" % (word, "\t".join(str(int(x)) for x in table.counts[word])))


def load_tcol(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        parts = header.split()
        if (
            len(parts) != 2
            or not parts[0].startswith("#classes=")
            or not parts[1].startswith("vocab=")
        ):
            raise CorpusError("%s: line 1 is not a `#classes=c vocab=V` header" % (path,))
        n_classes = int(parts[0][len("#classes=") :])
        vocab_size = int(parts[1][len("vocab=") :])
        counts = {}
        for lineno, line in enumerate(f, start=2):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 1 + n_classes:
                raise CorpusError(
                    "%s: line %d has %d count fields, expected %d"
                    % (path, lineno, len(fields) - 1, n_classes)
                )
            counts[fields[0]] = np.array([int(x) for x in fields[1:]], dtype=np.int64)
    return TcolTable(counts, n_classes, vocab_size)
