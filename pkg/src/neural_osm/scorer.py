"""Incremental scoring for decoder-style use.

A decoder extends a hypothesis one phrase pair at a time.  Each phrase
continues the stored generator state, so its operations (and, for the
neural backend, its stream tokens) are the ones the whole-sentence
conversion would produce for the same sequence of units.  States are
immutable: ``extend`` returns a new state and leaves its input untouched.

Phrase source words carry absolute sentence positions; the generator needs
them to place gaps and jumps.  A phrase whose translation units would need
source words outside the phrase is rejected.

Unaligned source words are generated as soon as the cursor reaches them,
so the sum of deltas matches whole-sentence scoring when each unaligned
source word travels with the phrase holding its nearest aligned left
neighbour (or the first phrase, if it has none).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .corpus import BOS, EOS, AlignedSentencePair
from .neural import NeuralModel, score_stream
from .ngram import NgramModel, score_sequence
from .opgen import (GEN_T, CoarseTagger, GenerationError, GeneratorState, Operation,
                    _close_spans, _components, convert, format_operation,
                    generate_operations, to_lexical, translation_units)
from .streams import StreamBuilder, split_streams


class ScorerError(ValueError):
    pass


@dataclass(frozen=True)
class Phrase:
    source_positions: tuple
    source: tuple
    target: tuple
    links: frozenset = frozenset()   # (i, j) indices local to this phrase

    def __post_init__(self):
        for name in ("source_positions", "source", "target"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "links", frozenset(self.links))

    def __bool__(self):
        return bool(self.source or self.target)


@dataclass(frozen=True)
class ScorerState:
    target_window: tuple
    source_window: tuple
    history: tuple                  # n-gram backend: previous operation tokens
    logprob: float = 0.0
    predicted: int = 0              # scored tokens so far, without the end term
    sources: tuple = ()             # sorted (position, token) pairs seen so far
    generator: object = field(default=None, compare=False, repr=False)
    tagger: object = field(default=None, compare=False, repr=False)


def _unit_events(phrase):
    """Phrase-local units in target order, interleaved with unaligned target words.

    Returns (events, unaligned absolute source positions).
    """
    n_s, n_t = len(phrase.source), len(phrase.target)
    for i, j in phrase.links:
        if not (0 <= i < n_s and 0 <= j < n_t):
            raise ScorerError("link %d-%d out of range for a %d-by-%d phrase" % (i, j, n_s, n_t))
    pos = phrase.source_positions
    links = {(pos[i], j) for i, j in phrase.links}
    aligned_s = {i for i, _ in links}
    aligned_t = {j for _, j in links}
    free_s = [p for p in pos if p not in aligned_s]
    free_t = [j for j in range(n_t) if j not in aligned_t]
    units, free_s, free_t = _close_spans(_components(links), free_src=free_s, free_tgt=free_t)
    inside = set(pos)
    events = []
    for s, t in units:
        lo, hi = min(s), max(s)
        if any(p not in inside for p in range(lo, hi + 1)):
            raise ScorerError("phrase does not respect translation unit boundaries: "
                              "source span %d..%d is not inside the phrase" % (lo, hi))
        events.append((min(t), tuple(sorted(s)), tuple(phrase.target[j] for j in sorted(t))))
    events += [(j, None, (phrase.target[j],)) for j in free_t]
    events.sort(key=lambda e: e[0])
    return events, sorted(free_s)


class IncrementalScorer:
    """Scores phrase-by-phrase with an n-gram or neural backend.

    ``variant`` selects the operation view (``osm``, ``coarse`` or
    ``lexical``); for a neural model it defaults to the variant the model
    was trained on.
    """

    def __init__(self, model, variant=None, swap_detection=False):
        if isinstance(model, NeuralModel):
            self.backend = "nn"
            variant = variant or model.config.variant
        elif isinstance(model, NgramModel):
            self.backend = "ngram"
            variant = variant or "osm"
        else:
            raise TypeError("unsupported model type %s" % type(model).__name__)
        self.model = model
        self.variant = variant
        self.swap_detection = swap_detection

    # -- windows ---------------------------------------------------------

    def _sizes(self):
        if self.backend == "nn":
            return self.model.config.n - 1, self.model.config.m
        return 0, 0

    def init_state(self) -> ScorerState:
        nt, ns = self._sizes()
        hist = (BOS,) if self.backend == "ngram" else ()
        tagger = CoarseTagger(self.swap_detection) if self.variant == "coarse" else None
        return ScorerState((BOS,) * nt, (BOS,) * ns, hist,
                           generator=GeneratorState(), tagger=tagger)

    def _view(self, ops, tagger):
        if self.variant == "coarse":
            return tagger.feed(ops)
        if self.variant == "lexical":
            return to_lexical(ops)
        return ops

    def _score_ops(self, state, ops, end=False):
        """Score converted ops (plus the end event); returns updated fields."""
        nt, ns = self._sizes()
        if self.backend == "ngram":
            hist = list(state.history)
            total = 0.0
            for op in ops:
                tok = format_operation(op)
                total += self.model.logprob(tok, hist)
                hist.append(tok)
            if end:
                total += self.model.logprob(EOS, hist)
            keep = max(self.model.order - 1, 1)
            return total, len(ops), state.target_window, state.source_window, tuple(hist[-keep:])

        builder = StreamBuilder(self.variant)
        tw, sw = list(state.target_window), list(state.source_window)
        contexts, labels = [], []
        for op in ops:
            before = len(builder.source)
            emitted = builder.add(op)
            consumed = 0
            for tok, sync in emitted:
                # extend the source window up to this token's sync point
                new_src = builder.source[before + consumed:sync]
                consumed = sync - before
                sw.extend(new_src)
                sw = sw[len(sw) - ns:] if ns else []
                contexts.append(tuple(tw) + tuple(sw))
                labels.append(tok)
                tw.append(tok)
                tw = tw[len(tw) - nt:] if nt else []
            sw.extend(builder.source[before + consumed:])
            sw = sw[len(sw) - ns:] if ns else []
        if end:
            contexts.append(tuple(tw) + tuple(sw))
            labels.append(EOS)
        total = 0.0
        if contexts:
            v = self.model.vocabs
            ids = [v.encode_context(c, nt + 1) for c in contexts]
            ys = [v.target.lookup(t) for t in labels]
            total = float(self.model.logprobs(ids, ys).sum())
        predicted = len(labels) - (1 if end else 0)
        return total, predicted, tuple(tw), tuple(sw), state.history

    # -- public API ------------------------------------------------------

    def extend(self, state: ScorerState, phrase: Phrase):
        """Return ``(new_state, delta)`` after appending ``phrase``."""
        if not phrase:
            return state, 0.0
        if len(phrase.source) != len(phrase.source_positions):
            raise ScorerError("phrase has %d source words but %d positions"
                              % (len(phrase.source), len(phrase.source_positions)))
        if len(set(phrase.source_positions)) != len(phrase.source_positions):
            raise ScorerError("repeated source position in phrase")
        known = dict(state.sources)
        clash = [p for p in phrase.source_positions if p in known or p < 0]
        if clash:
            raise ScorerError("source positions already used or negative: %s" % clash)
        events, free_s = _unit_events(phrase)

        gen = state.generator.copy()
        tagger = state.tagger.copy() if state.tagger is not None else None
        known.update(zip(phrase.source_positions, phrase.source))
        ops = []
        try:
            gen.add_unaligned(free_s)
            for _, src_pos, tgt in events:
                if src_pos is None:
                    ops.append(Operation(GEN_T, tgt=tgt))
                else:
                    ops.extend(gen.generate_unit(src_pos, known, tgt))
        except GenerationError as exc:
            raise ScorerError("phrase incompatible with the current coverage: %s" % exc) from None
        ops = self._view(ops, tagger)
        delta, k, tw, sw, hist = self._score_ops(state, ops)
        new = replace(state, target_window=tw, source_window=sw, history=hist,
                      logprob=state.logprob + delta, predicted=state.predicted + k,
                      sources=tuple(sorted(known.items())), generator=gen, tagger=tagger)
        return new, delta

    def finalize(self, state: ScorerState) -> float:
        """Total log-probability including any pending words and the end event."""
        gen = state.generator.copy()
        tagger = state.tagger.copy() if state.tagger is not None else None
        ops = gen.finish(dict(state.sources))
        total, _, _, _, _ = self._score_ops(state, self._view(ops, tagger), end=True)
        return state.logprob + total

    def score_phrases(self, phrases):
        state = self.init_state()
        for ph in phrases:
            state, _ = self.extend(state, ph)
        return self.finalize(state)

    # -- whole sentence --------------------------------------------------

    def operations(self, pair: AlignedSentencePair):
        return convert(generate_operations(pair), self.variant, self.swap_detection)

    def score_pair(self, pair: AlignedSentencePair) -> float:
        ops = self.operations(pair)
        if self.backend == "ngram":
            return score_sequence(self.model, [format_operation(o) for o in ops])
        return score_stream(self.model, split_streams(ops, self.variant))

    def count_predictions(self, pair: AlignedSentencePair) -> int:
        """Number of scored events for ``pair``, end symbol included."""
        ops = self.operations(pair)
        if self.backend == "ngram":
            return len(ops) + 1
        return len(split_streams(ops, self.variant).target) + 1


def phrases_from_cuts(pair: AlignedSentencePair, cuts):
    """Split ``pair`` into consecutive phrases at target positions ``cuts``.

    Each translation unit goes to the phrase holding its first target word;
    unaligned source words follow their nearest aligned left neighbour.
    """
    cuts = sorted(set(c for c in cuts if 0 < c < len(pair.target)))
    bounds = [0] + cuts + [len(pair.target)]
    units, free_s, _ = translation_units(pair)

    def chunk_of(j):
        for k in range(len(bounds) - 1):
            if bounds[k] <= j < bounds[k + 1]:
                return k
        raise ValueError(j)

    n = len(bounds) - 1
    src_of = [set() for _ in range(n)]
    tgt_of = [set() for _ in range(n)]
    owner = {}
    for u in units:
        k = chunk_of(u.target_positions[0])
        if chunk_of(u.target_positions[-1]) != k:
            raise ScorerError("cut splits a translation unit")
        src_of[k].update(u.source_positions)
        tgt_of[k].update(u.target_positions)
        for p in u.source_positions:
            owner[p] = k
    for j in range(len(pair.target)):
        if not any(j in t for t in tgt_of):
            tgt_of[chunk_of(j)].add(j)
    for p in sorted(free_s):
        k = owner.get(p - 1, 0)
        owner[p] = k
        src_of[k].add(p)

    phrases = []
    for k in range(n):
        sp = sorted(src_of[k])
        tp = sorted(tgt_of[k])
        s_idx = {p: i for i, p in enumerate(sp)}
        t_idx = {j: i for i, j in enumerate(tp)}
        links = {(s_idx[i], t_idx[j]) for i, j in pair.links if i in s_idx and j in t_idx}
        phrases.append(Phrase(sp, [pair.source[p] for p in sp], [pair.target[j] for j in tp], links))
    return phrases


def valid_cuts(pair: AlignedSentencePair):
    """Target positions where a cut does not split a translation unit."""
    units, _, _ = translation_units(pair)
    bad = set()
    for u in units:
        bad.update(range(u.target_positions[0] + 1, u.target_positions[-1] + 1))
    return [c for c in range(1, len(pair.target)) if c not in bad]
