"""Seeded synthetic review corpus for desk-scale experiments.

Two classes with 20 cue words (10 per class) whose presence correlates with
the label, embedded in shared filler vocabulary.  Small label noise keeps
the task from being trivially linearly saturated.
"""

from __future__ import annotations

import numpy as np

N_CUES_PER_CLASS = 10
LABELS = ("neg", "pos")


def cue_words():
    neg = ["cue_neg%02d" % i for i in range(N_CUES_PER_CLASS)]
    pos = ["cue_pos%02d" % i for i in range(N_CUES_PER_CLASS)]
    return neg, pos


def filler_words(n=180):
    return ["w%03d" % i for i in range(n)]


def generate(n=2000, seed=0, noise=0.02, min_len=6, max_len=12):
    """`n` (label, text) records; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    neg_cues, pos_cues = cue_words()
    fillers = filler_words()
    records = []
    for _ in range(n):
        label = int(rng.integers(0, 2))
        cues = pos_cues if label == 1 else neg_cues
        off_cues = neg_cues if label == 1 else pos_cues
        length = int(rng.integers(min_len, max_len + 1))
        n_cue = int(rng.integers(1, 4))
        words = []
        for _ in range(min(n_cue, length)):
            pool = off_cues if rng.random() < noise else cues
            words.append(pool[int(rng.integers(0, len(pool)))])
        while len(words) < length:
            words.append(fillers[int(rng.integers(0, len(fillers)))])
        rng.shuffle(words)
        records.append((LABELS[label], " ".join(words)))
    return records


def write_tsv(records, path):
    with open(path, "w", encoding="utf-8") as f:
        for label, text in records:
            f.write("%s\t%s\n" % (label, text))


def split_records(records, test_fraction=0.15):
    """Leading/trailing split; generation order is already shuffled."""
    n_test = max(1, int(len(records) * test_fraction))
    return records[:-n_test], records[-n_test:]
