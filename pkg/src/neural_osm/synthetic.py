"""Seeded toy corpus: word-for-word translations, some with one adjacent swap."""

from __future__ import annotations

import random

from .corpus import AlignedSentencePair


def synthetic_corpus(sentences=500, vocab=50, min_len=3, max_len=8,
                     swap_rate=0.2, seed=13):
    """Source word ``sK`` always translates to ``tK`` with a 1-1 link.

    A ``swap_rate`` share of sentences swap one adjacent target pair, so the
    corpus carries a small amount of learnable reordering signal.
    """
    rng = random.Random(seed)
    out = []
    for _ in range(sentences):
        length = rng.randint(min_len, max_len)
        ids = [rng.randrange(vocab) for _ in range(length)]
        order = list(range(length))
        if rng.random() < swap_rate:
            i = rng.randrange(length - 1)
            order[i], order[i + 1] = order[i + 1], order[i]
        src = ["s%d" % k for k in ids]
        tgt = ["t%d" % ids[i] for i in order]
        links = {(i, j) for j, i in enumerate(order)}
        out.append(AlignedSentencePair(src, tgt, links))
    return out
