import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_pair
from neural_osm.corpus import BOS, EOS, UNK, AlignedSentencePair
from neural_osm.ngram import (MSD_CLASSES, REFINED_CLASSES, NgramError, NgramModel,
                              OrientationTable, score_sequence, train_ngram,
                              train_orientation_table)
from neural_osm.opgen import extract_mtus


class ReferenceKN:
    """Interpolated modified Kneser-Ney written straight from the definitions."""

    def __init__(self, corpus, order):
        self.order = order
        sents = [[BOS] + list(s) + [EOS] for s in corpus]
        self.raw = Counter()
        for s in sents:
            for i in range(1, len(s)):
                for k in range(order):
                    if i - k >= 0:
                        self.raw[tuple(s[i - k:i + 1])] += 1
        self.vocab = sorted({w for s in sents for w in s[1:]} | {UNK})
        self.left = {}
        for g in self.raw:
            if len(g) >= 2:
                self.left.setdefault(g[1:], set()).add(g[0])
        self.disc = {}
        for n in range(1, order + 1):
            coc = Counter(self.count(g) for g in self.raw if len(g) == n)
            n1, n2, n3, n4 = (coc[i] for i in (1, 2, 3, 4))
            d = (0.5, 1.0, 1.5)
            if min(n1, n2, n3, n4) > 0:
                y = n1 / (n1 + 2 * n2)
                cand = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
                if all(0 < c < i + 2 for i, c in enumerate(cand)):
                    d = cand
            self.disc[n] = d

    def count(self, g):
        if len(g) == self.order or g[0] == BOS:
            return self.raw.get(g, 0)
        return len(self.left.get(g, ()))

    def prob(self, w, h):
        h = tuple(h)[-(self.order - 1):] if self.order > 1 else ()
        n = len(h) + 1
        if n == 1:
            lower = 1.0 / len(self.vocab)
        else:
            lower = self.prob(w, h[1:])
        ext = [g for g in self.raw if len(g) == n and g[:-1] == h]
        total = sum(self.count(g) for g in ext)
        if total == 0:
            return lower
        d = self.disc[n]
        dis = lambda c: d[min(c, 3) - 1] if c else 0.0  # noqa: E731
        gamma = sum(dis(self.count(g)) for g in ext) / total
        c = self.count(h + (w,))
        return (c - dis(c)) / total + gamma * lower


def _op_corpus(seed, n=40, vocab=7):
    rng = random.Random(seed)
    # squared draws give a skewed, Zipf-like frequency profile
    return [["w%d" % int(rng.random() ** 2 * vocab) for _ in range(rng.randint(0, 9))]
            for _ in range(n)]


class TestKneserNey:
    def test_two_token_corpus(self):
        model = train_ngram([["A", "B"]], order=2)
        # D = 0.5 everywhere (thin counts); uniform base over A, B, </s>, <unk>
        expected = 0.5 + 0.5 * (0.5 / 3 + 0.5 * 0.25)
        assert math.exp(model.logprob("B", ["A"])) == pytest.approx(expected, abs=1e-12)
        assert math.exp(model.logprob("B", ["A"])) > 0.5

    def test_two_token_normalization(self):
        model = train_ngram([["A", "B"]], order=2)
        total = sum(math.exp(model.logprob(w, ["A"])) for w in model.predictable())
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_mle_unigram(self):
        model = train_ngram([["A", "A", "A"]], order=1, smoothing="mle")
        assert math.exp(model.logprob("A")) == pytest.approx(0.75)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 4), st.sampled_from([(40, 7), (150, 40)]))
    def test_matches_reference(self, seed, order, shape):
        corpus = _op_corpus(seed, *shape)
        model = train_ngram(corpus, order=order)
        ref = ReferenceKN(corpus, order)
        rng = random.Random(seed)
        tokens = ref.vocab + [BOS, "unseen"]
        for _ in range(30):
            h = [BOS] + [rng.choice(tokens[:-2]) for _ in range(rng.randint(0, 4))]
            w = rng.choice(tokens[:-2] + ["unseen"])
            expect = ref.prob(w if w in ref.vocab else UNK, h)
            assert math.exp(model.logprob(w, h)) == pytest.approx(expect, rel=1e-9)

    def test_discounts_estimated_on_richer_data(self):
        model = train_ngram(_op_corpus(5, n=150, vocab=40), order=3)
        assert model.discounts[0] == (0.5, 1.0, 1.5)   # unigram continuation counts are thin
        assert all(d != (0.5, 1.0, 1.5) for d in model.discounts[1:])

    def test_empty_corpus(self):
        with pytest.raises(NgramError):
            train_ngram([], order=3)

    def test_unknown_smoothing(self):
        with pytest.raises(NgramError):
            train_ngram([["a"]], smoothing="witten-bell")


class TestScoring:
    def test_empty_sequence(self):
        model = train_ngram([["a", "b"], []], order=3)
        assert score_sequence(model, []) == pytest.approx(model.logprob(EOS, [BOS]))

    def test_chain_rule(self):
        model = train_ngram(_op_corpus(3), order=3)
        x, y = ["w1", "w2"], ["w3", "w0", "w1"]
        prefix = model.score_tokens(x, eos=False)
        cont = model.score_tokens(y, eos=True, history=[BOS] + x)
        assert score_sequence(model, x + y) == pytest.approx(prefix + cont, abs=1e-12)

    def test_training_sentence_beats_perturbations(self):
        sentence = ["GEN(a|A)", "GAP", "GEN(c|C)", "JB_1", "GEN(b|B)"]
        model = train_ngram([sentence], order=3)
        best = score_sequence(model, sentence)
        for i in range(len(sentence)):
            for tok in list(model.vocab) + ["never-seen"]:
                if tok in (sentence[i], BOS):
                    continue
                variant = sentence[:i] + [tok] + sentence[i + 1:]
                assert score_sequence(model, variant) <= best

    def test_scores_are_finite_for_unknowns(self):
        model = train_ngram(_op_corpus(4), order=5)
        assert math.isfinite(score_sequence(model, ["zzz", "yyy", "w1"]))

    def test_arpa_round_trip(self, tmp_path):
        corpus = _op_corpus(5, n=100)
        model = train_ngram(corpus, order=4)
        path = tmp_path / "lm.arpa"
        model.write_arpa(path)
        text = path.read_text(encoding="utf-8")
        assert text.startswith("\\data\\\nngram 1=")
        back = NgramModel.read_arpa(path)
        for sent in corpus[:20] + [["unseen", "w1"]]:
            assert score_sequence(back, sent) == pytest.approx(score_sequence(model, sent), abs=1e-7)

    def test_arpa_is_log10(self, tmp_path):
        model = train_ngram([["A", "B"]], order=2)
        path = tmp_path / "lm.arpa"
        model.write_arpa(path)
        line = next(l for l in path.read_text().splitlines() if l.endswith("\tA B"))
        assert float(line.split("\t")[0]) == pytest.approx(math.log10(math.exp(model.logprob("B", ["A"]))))

    def test_not_arpa(self, tmp_path):
        path = tmp_path / "junk"
        path.write_text("hello\n")
        with pytest.raises(NgramError):
            NgramModel.read_arpa(path)


class TestOrientationTable:
    def _table(self, m, s, d, sigma):
        return OrientationTable({("f", "e"): Counter({"M": m, "S": s, "D": d})}, MSD_CLASSES, sigma)

    def test_direct_ratio(self):
        p = self._table(2, 0, 2, 0.0).probabilities("f", "e")
        assert p == {"M": 0.5, "S": 0.0, "D": 0.5}

    def test_smoothed(self):
        assert self._table(2, 0, 2, 0.5).prob("M", "f", "e") == pytest.approx(2.5 / 5.5)

    def test_monotone_corpus(self):
        pairs = [AlignedSentencePair("a b c".split(), "A B C".split(), {(0, 0), (1, 1), (2, 2)})]
        table = train_orientation_table(pairs, sigma=0.0)
        for f, e in table.pairs():
            assert table.prob("M", f, e) == 1.0

    @settings(max_examples=30)
    @given(st.integers(0, 10**6), st.floats(0.01, 3.0), st.booleans())
    def test_smoothing_keeps_probabilities_open(self, seed, sigma, refined):
        rng = random.Random(seed)
        table = train_orientation_table([random_pair(rng) for _ in range(10)], sigma, refined)
        for f, e in table.pairs():
            probs = table.probabilities(f, e)
            assert all(0.0 < p < 1.0 for p in probs.values())
            assert sum(probs.values()) == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=30)
    @given(st.integers(0, 10**6))
    def test_count_oracle(self, seed):
        rng = random.Random(seed)
        pairs = [random_pair(rng, max_len=8) for _ in range(rng.randint(1, 10))]
        expected = {}
        for pair in pairs:
            units = [u for u in extract_mtus(pair)[0] if u.source_positions]
            prev_s, prev_e = -1, -1
            for u in units:
                s, e = u.source_positions[0], u.source_positions[-1]
                if s == prev_e + 1:
                    o = "M"
                elif e + 1 == prev_s:
                    o = "S"
                else:
                    o = "FD" if s > prev_e + 1 else "BD"
                key = (" ".join(u.source_text), " ".join(u.target_text))
                expected.setdefault(key, Counter())[o] += 1
                prev_s, prev_e = s, e
        table = train_orientation_table(pairs, sigma=0.0)
        assert {k: Counter({o: n for o, n in v.items() if n}) for k, v in table.counts.items()} == expected

    def test_file_round_trip(self, tmp_path):
        rng = random.Random(8)
        table = train_orientation_table([random_pair(rng) for _ in range(20)])
        path = tmp_path / "ro.txt"
        table.write(path)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "# F ||| E ||| pM pS pFD pBD"
        back = OrientationTable.read(path)
        assert back.classes == REFINED_CLASSES
        for f, e in table.pairs():
            for o in REFINED_CLASSES:
                assert back.prob(o, f, e) == pytest.approx(table.prob(o, f, e), rel=1e-9)

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            OrientationTable({}, MSD_CLASSES, -1)
