"""Count-based models: a Kneser-Ney operation n-gram model and the
lexicalised orientation table.

The n-gram model follows the usual ARPA conventions: a single ``<s>``
opens each sentence, ``</s>`` is predicted at the end, and the lowest
order interpolates with a uniform distribution over the vocabulary
(``</s>`` and ``<unk>`` included, ``<s>`` excluded).  All public scores are
natural-log probabilities; the ARPA file stores log10.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict

from .corpus import BOS, EOS, UNK
from .opgen import BD, FD, M, S, D, orientation_events

LOG10 = math.log(10.0)
# fallback discounts for orders whose counts-of-counts are too thin
DEFAULT_DISCOUNTS = (0.5, 1.0, 1.5)


class NgramError(ValueError):
    pass


def _discounts(counts):
    """Modified KN discounts (D1, D2, D3+) from a Counter of adjusted counts."""
    coc = Counter(c for c in counts if c <= 4)
    n1, n2, n3, n4 = (coc.get(k, 0) for k in (1, 2, 3, 4))
    if min(n1, n2, n3, n4) > 0:
        y = n1 / (n1 + 2.0 * n2)
        d = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
        if all(0 < dk < k + 1 for k, dk in enumerate(d)):
            return d
    return DEFAULT_DISCOUNTS


def _discount(d, c):
    return d[min(c, 3) - 1] if c > 0 else 0.0


class NgramModel:
    """Backoff n-gram model over string tokens.

    ``probs[k]`` maps a (k+1)-gram tuple to its natural-log probability and
    ``backoffs[k]`` maps a (k+1)-gram used as a history to its natural-log
    backoff weight.
    """

    def __init__(self, order, vocab, probs, backoffs, discounts=None, smoothing="kn"):
        self.order = order
        self.vocab = tuple(vocab)
        self._vocab_set = frozenset(vocab)
        self.probs = probs
        self.backoffs = backoffs
        self.discounts = discounts or []
        self.smoothing = smoothing

    def map_token(self, tok):
        return tok if tok in self._vocab_set or tok == BOS else UNK

    def predictable(self):
        """Tokens that receive probability mass."""
        return [w for w in self.vocab if w != BOS]

    def logprob(self, word, history=()):
        """ln P(word | history); only the last ``order-1`` history tokens matter."""
        word = self.map_token(word)
        hist = tuple(self.map_token(t) for t in history)[-(self.order - 1):] if self.order > 1 else ()
        acc = 0.0
        while True:
            ngram = hist + (word,)
            lp = self.probs[len(ngram) - 1].get(ngram)
            if lp is not None:
                return acc + lp
            if not hist:
                return -math.inf
            acc += self.backoffs[len(hist) - 1].get(hist, 0.0)
            hist = hist[1:]

    def score_tokens(self, tokens, eos=True, history=(BOS,)):
        """Sum of per-token log-probabilities, optionally ending with ``</s>``."""
        hist = list(history)
        total = 0.0
        for tok in tokens:
            total += self.logprob(tok, hist)
            hist.append(tok)
        if eos:
            total += self.logprob(EOS, hist)
        return total

    def write_arpa(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\\data\\\n")
            for k in range(self.order):
                f.write("ngram %d=%d\n" % (k + 1, len(self.probs[k])))
            for k in range(self.order):
                f.write("\n\\%d-grams:\n" % (k + 1))
                for ngram in sorted(self.probs[k]):
                    lp = self.probs[k][ngram]
                    lp10 = -99.0 if lp == -math.inf else lp / LOG10
                    line = "%.10f\t%s" % (lp10, " ".join(ngram))
                    if k < self.order - 1 and ngram in self.backoffs[k]:
                        line += "\t%.10f" % (self.backoffs[k][ngram] / LOG10)
                    f.write(line + "\n")
            f.write("\n\\end\\\n")

    @classmethod
    def read_arpa(cls, path):
        probs, backoffs = [], []
        counts = []
        section = None
        with open(path, encoding="utf-8") as f:
            for n, raw in enumerate(f, start=1):
                line = raw.strip()
                if not line:
                    continue
                if line == "\\data\\":
                    section = "data"
                    continue
                if line == "\\end\\":
                    break
                if line.startswith("\\") and line.endswith("-grams:"):
                    section = int(line[1:-len("-grams:")]) - 1
                    continue
                if section == "data":
                    if not line.startswith("ngram "):
                        raise NgramError("line %d: bad ARPA header %r" % (n, line))
                    counts.append(int(line.split("=")[1]))
                    probs.append({})
                    backoffs.append({})
                elif isinstance(section, int):
                    fields = line.split("\t")
                    if len(fields) == 1:
                        fields = line.split()
                        words = tuple(fields[1:section + 2])
                        bow = fields[section + 2:] if len(fields) > section + 2 else []
                        fields = [fields[0], " ".join(words)] + bow
                    lp10 = float(fields[0])
                    ngram = tuple(fields[1].split(" "))
                    if len(ngram) != section + 1:
                        raise NgramError("line %d: expected a %d-gram" % (n, section + 1))
                    probs[section][ngram] = -math.inf if lp10 <= -99 else lp10 * LOG10
                    if len(fields) > 2:
                        backoffs[section][ngram] = float(fields[2]) * LOG10
                else:
                    raise NgramError("line %d: not an ARPA file" % n)
        if not probs:
            raise NgramError("%s: no ARPA data section" % path)
        for k, c in enumerate(counts):
            if len(probs[k]) != c:
                raise NgramError("%d-gram count mismatch: header %d, found %d"
                                 % (k + 1, c, len(probs[k])))
        vocab = sorted(w for (w,) in probs[0])
        return cls(len(probs), vocab, probs, backoffs)


def _count(corpus, order):
    """Raw n-gram counts per order: counts[k][ngram] for (k+1)-grams."""
    counts = [Counter() for _ in range(order)]
    n_sent = 0
    for tokens in corpus:
        n_sent += 1
        seq = [BOS] + list(tokens) + [EOS]
        for i in range(1, len(seq)):
            for k in range(order):
                if i - k < 0:
                    break
                counts[k][tuple(seq[i - k:i + 1])] += 1
    return counts, n_sent


def _adjusted_counts(raw, order):
    """KN adjusted counts: continuation counts below the top order, except
    for n-grams starting with ``<s>`` (which have no left extension)."""
    adjusted = [Counter() for _ in range(order)]
    adjusted[order - 1] = Counter(raw[order - 1])
    for k in range(order - 1):
        cont = Counter()
        for ngram in raw[k + 1]:
            cont[ngram[1:]] += 1
        for ngram, c in raw[k].items():
            adjusted[k][ngram] = c if ngram[0] == BOS else cont[ngram]
    return adjusted


def train_ngram(corpus, order=5, smoothing="kn"):
    """Estimate an n-gram model from an iterable of token sequences.

    ``smoothing="kn"`` is interpolated modified Kneser-Ney; ``"mle"`` gives
    unsmoothed relative frequencies (a checking aid, not for scoring unseen
    data).
    """
    if order < 1:
        raise NgramError("order must be >= 1")
    corpus = [list(t) for t in corpus]
    raw, n_sent = _count(corpus, order)
    if n_sent == 0:
        raise NgramError("empty corpus")
    vocab = sorted({w for (w,) in raw[0]} | {EOS, UNK, BOS})
    predictable = [w for w in vocab if w != BOS]
    if smoothing == "mle":
        return _train_mle(raw, order, vocab)
    if smoothing != "kn":
        raise NgramError("unknown smoothing %r" % smoothing)

    adjusted = _adjusted_counts(raw, order)
    discounts = [_discounts(adjusted[k].values()) for k in range(order)]

    lin = []      # lin[k][ngram]: interpolated probability of a seen (k+1)-gram
    gammas = []   # gammas[k][history]: mass left for the lower order
    for k in range(order):
        d = discounts[k]
        total = defaultdict(float)
        mass = defaultdict(float)
        for ngram, c in adjusted[k].items():
            total[ngram[:-1]] += c
            mass[ngram[:-1]] += _discount(d, c)
        gamma = {h: mass[h] / total[h] for h in total}
        table = {}
        for ngram, c in adjusted[k].items():
            lower = 1.0 / len(predictable) if k == 0 else _interp(lin, gammas, ngram[1:])
            table[ngram] = (c - _discount(d, c)) / total[ngram[:-1]] + gamma[ngram[:-1]] * lower
        if k == 0:
            for w in predictable:
                table.setdefault((w,), gamma[()] / len(predictable))
        lin.append(table)
        gammas.append(gamma)

    probs = [{g: math.log(p) for g, p in lin[k].items()} for k in range(order)]
    probs[0][(BOS,)] = -math.inf
    backoffs = [dict() for _ in range(order)]
    for k in range(1, order):
        for h, g in gammas[k].items():
            backoffs[k - 1][h] = math.log(g) if g > 0 else -math.inf
    return NgramModel(order, vocab, probs, backoffs, discounts, "kn")


def _interp(lin, gammas, ngram):
    """Interpolated probability of ``ngram`` from the lower-order tables."""
    k = len(ngram) - 1
    p = lin[k].get(ngram)
    if p is not None:
        return p
    g = gammas[k].get(ngram[:-1])
    lower = _interp(lin, gammas, ngram[1:])
    return lower if g is None else g * lower


def _train_mle(raw, order, vocab):
    probs = [dict() for _ in range(order)]
    backoffs = [dict() for _ in range(order)]
    for k in range(order):
        totals = defaultdict(int)
        for ngram, c in raw[k].items():
            totals[ngram[:-1]] += c
        for ngram, c in raw[k].items():
            probs[k][ngram] = math.log(c / totals[ngram[:-1]])
    probs[0][(BOS,)] = -math.inf
    for w in vocab:
        probs[0].setdefault((w,), -math.inf)
    return NgramModel(order, vocab, probs, backoffs, None, "mle")


def score_sequence(model: NgramModel, tokens) -> float:
    """ln P of ``tokens`` followed by ``</s>``, starting from ``<s>``."""
    return model.score_tokens(tokens, eos=True)


# ---------------------------------------------------------------------------
# Orientation table

MSD_CLASSES = (M, S, D)
REFINED_CLASSES = (M, S, FD, BD)


class OrientationTable:
    """p(o | F, E) with additive smoothing over the orientation classes."""

    def __init__(self, counts, classes=REFINED_CLASSES, sigma=0.5):
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.counts = counts      # {(F, E): Counter(o -> n)}
        self.classes = tuple(classes)
        self.sigma = sigma

    def probabilities(self, f, e):
        c = self.counts.get((f, e), Counter())
        total = sum(c[o] for o in self.classes)
        denom = total + len(self.classes) * self.sigma
        if denom == 0:
            return {o: 1.0 / len(self.classes) for o in self.classes}
        return {o: (c[o] + self.sigma) / denom for o in self.classes}

    def prob(self, o, f, e):
        return self.probabilities(f, e)[o]

    def pairs(self):
        return sorted(self.counts)

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as out:
            out.write("# F ||| E ||| %s\n" % " ".join("p" + o for o in self.classes))
            for f, e in self.pairs():
                p = self.probabilities(f, e)
                out.write("%s ||| %s ||| %s\n" % (f, e, " ".join("%.10g" % p[o] for o in self.classes)))

    @classmethod
    def read(cls, path):
        """Load probabilities back as a table whose counts are the probabilities (sigma 0)."""
        rows = {}
        classes = REFINED_CLASSES
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if line.startswith("#"):
                    classes = tuple(x[1:] for x in line.split("|||")[2].split())
                    continue
                if not line:
                    continue
                fsrc, etgt, ps = (x.strip() for x in line.split("|||"))
                rows[(fsrc, etgt)] = Counter(dict(zip(classes, map(float, ps.split()))))
        return cls(rows, classes, sigma=0.0)


def train_orientation_table(pairs, sigma=0.5, refined=True):
    """Count orientations of consecutive MTUs keyed by the current unit's
    (source text, target text), with the sentence start as the first
    predecessor."""
    counts = defaultdict(Counter)
    for pair in pairs:
        for unit, o in orientation_events(pair, refined=refined):
            key = (" ".join(unit.source_text), " ".join(unit.target_text))
            counts[key][o] += 1
    return OrientationTable(dict(counts), REFINED_CLASSES if refined else MSD_CLASSES, sigma)
