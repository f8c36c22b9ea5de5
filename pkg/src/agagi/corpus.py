"""Corpus ingestion: TSV reading, tokenization, vocabulary, padding, folds."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

PAD = "<pad>"
UNK = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class CorpusError(ValueError):
    """Malformed or empty corpus input."""


def ingest(path):
    """Read `label<TAB>text` lines, returned in file order."""
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if "\t" not in line:
                raise CorpusError("%s: line %d has no tab separator" % (path, lineno))
            label, text = line.split("\t", 1)
            records.append((label, text))
    if not records:
        raise CorpusError("%s: empty corpus" % (path,))
    return records


def class_indices(records):
    """Class index per label string, assigned lexicographically."""
    return {label: i for i, label in enumerate(sorted({lab for lab, _ in records}))}


def tokenize(text):
    """Lowercase and split, with punctuation as standalone tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocab:
    token_to_index: dict
    index_to_token: list

    @property
    def size(self):
        return len(self.index_to_token)

    def encode_token(self, token):
        return self.token_to_index.get(token, UNK_INDEX)

    def decode(self, indices):
        """Tokens for the given indices, with padding stripped."""
        return [self.index_to_token[i] for i in indices if i != PAD_INDEX]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for i, tok in enumerate(self.index_to_token):
                f.write("%s\t%d\n" % (tok, i))

    @classmethod
    def load(cls, path):
        pairs = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 2:
                    raise CorpusError("%s: line %d is not token<TAB>index" % (path, lineno))
                pairs.append((parts[0], int(parts[1])))
        pairs.sort(key=lambda p: p[1])
        if [i for _, i in pairs] != list(range(len(pairs))):
            raise CorpusError("%s: indices are not contiguous from 0" % (path,))
        index_to_token = [tok for tok, _ in pairs]
        return cls({tok: i for i, tok in enumerate(index_to_token)}, index_to_token)


def build_vocab(token_lists):
    """Vocabulary over the training tokens: reserved pad/unk, then tokens by
    descending frequency with lexicographic tie-break."""
    if not token_lists:
        raise CorpusError("cannot build a vocabulary from an empty training set")
    freq = {}
    for tokens in token_lists:
        for tok in tokens:
            freq[tok] = freq.get(tok, 0) + 1
    ordered = sorted(freq, key=lambda t: (-freq[t], t))
    index_to_token = [PAD, UNK] + ordered
    return Vocab({tok: i for i, tok in enumerate(index_to_token)}, index_to_token)


def pad_encode(tokens, vocab, m):
    """Encode to exactly m indices: right-padded with pad, truncated past m."""
    if m < 1:
        raise ValueError("target length must be >= 1, got %d" % m)
    ids = [vocab.encode_token(t) for t in tokens[:m]]
    ids.extend([PAD_INDEX] * (m - len(ids)))
    return ids


def resolve_sent_len(token_lists, percentile=95):
    """Default uniform length: the 95th-percentile training sentence length."""
    lengths = [len(t) for t in token_lists]
    return max(1, int(np.ceil(np.percentile(lengths, percentile))))


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray  # example index -> fold index
    seed: int

    def fold_indices(self, fold):
        train = np.flatnonzero(self.assignments != fold)
        test = np.flatnonzero(self.assignments == fold)
        return train, test


def make_folds(n, k, seed):
    """Seeded shuffle then round-robin fold assignment; sizes differ by <= 1."""
    if k < 2:
        raise ValueError("fold count must be >= 2, got %d" % k)
    if n < k:
        raise ValueError("dataset size %d is smaller than fold count %d" % (n, k))
    order = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[order] = np.arange(n) % k
    return FoldPlan(k, assignments, seed)
