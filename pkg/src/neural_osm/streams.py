"""Source/target stream pairs and (m+n)-gram training instances."""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import zip_longest

from .corpus import BOS, EOS, CorpusError, _read_lines, tokenize
from .opgen import (BD, COARSE_KINDS, FD, GAP, GEN, GEN_S, GEN_SELF, GEN_T,
                    JB, JF, JOIN, REORDER_KINDS, SW)

INSERT_GAP = "Insert_Gap"
JUMP_FORWARD = "Jump_Forward"
JUMP_BACK = "Jump_Back_%d"

FIXED_REORDERING_SYMBOLS = frozenset({INSERT_GAP, JUMP_FORWARD, FD, BD, SW})
_JUMP_BACK_RE = re.compile(r"^Jump_Back_\d+$")


def is_reordering_symbol(token):
    return token in FIXED_REORDERING_SYMBOLS or bool(_JUMP_BACK_RE.match(token))


class StreamError(ValueError):
    pass


@dataclass(frozen=True)
class StreamPair:
    source: tuple
    target: tuple
    sync: tuple

    def __post_init__(self):
        if len(self.sync) != len(self.target):
            raise StreamError("sync length %d != target stream length %d"
                              % (len(self.sync), len(self.target)))
        prev = 0
        for a in self.sync:
            if a < prev or a > len(self.source):
                raise StreamError("sync map must be non-decreasing and within the source stream")
            prev = a


def _symbol(op):
    if op.kind == GAP:
        return INSERT_GAP
    if op.kind == JF:
        return JUMP_FORWARD
    if op.kind == JB:
        return JUMP_BACK % op.n
    return op.kind


def _check_variant(op, variant):
    if variant == "osm" and op.kind in COARSE_KINDS:
        raise StreamError("coarse tag %s in an osm sequence" % op.kind)
    if variant == "coarse" and op.kind in REORDER_KINDS:
        raise StreamError("%s in a coarse sequence" % op.kind)
    if variant == "lexical" and (op.kind in REORDER_KINDS or op.kind in COARSE_KINDS):
        raise StreamError("reordering operation %s in a lexical sequence" % op.kind)
    if variant not in ("osm", "coarse", "lexical"):
        raise StreamError("unknown variant %r" % variant)


class StreamBuilder:
    """Appends operations to a growing stream pair (used whole or incrementally)."""

    def __init__(self, variant="osm", collapse=True):
        self.variant = variant
        self.collapse = collapse
        self.source = []
        self.target = []
        self.sync = []

    def _words(self, payload):
        return [JOIN.join(payload)] if self.collapse else list(payload)

    def add(self, op):
        """Append one operation; returns the target tokens it emitted with their sync."""
        _check_variant(op, self.variant)
        emitted = []
        k = op.kind
        if k == GEN:
            self.source.extend(self._words(op.src))
            tgt = self._words(op.tgt)
        elif k == GEN_SELF:
            self.source.extend(self._words(op.src))
            tgt = self._words(op.src)
        elif k == GEN_S:
            self.source.extend(self._words(op.src))
            tgt = []
        elif k == GEN_T:
            tgt = self._words(op.tgt)
        else:
            sym = _symbol(op)
            self.source.append(sym)
            tgt = [sym]
        for t in tgt:
            self.target.append(t)
            self.sync.append(len(self.source))
            emitted.append((t, len(self.source)))
        return emitted

    def result(self):
        return StreamPair(tuple(self.source), tuple(self.target), tuple(self.sync))


def split_streams(ops, variant="osm", collapse=True) -> StreamPair:
    """Split an operation sequence into synchronised source/target streams.

    Unaligned words go to their own side only, reordering symbols to both,
    and ``GEN_SELF`` words to both.  ``collapse=False`` emits multi-word
    payloads one word at a time instead of as ``_``-joined tokens.
    """
    b = StreamBuilder(variant, collapse)
    for op in ops:
        b.add(op)
    return b.result()


@dataclass(frozen=True)
class TrainingInstance:
    context: tuple  # (n-1) target-history tokens followed by m source-window tokens
    label: str


def _window(seq, end, size):
    start = end - size
    pad = max(0, -start)
    return (BOS,) * pad + tuple(seq[max(0, start):end])


def make_instances(sp: StreamPair, n: int, m: int):
    """One instance per target-stream token plus one end-of-sentence instance.

    The context is the ``n-1`` previous target tokens, then the source-stream
    window of ``m`` tokens ending at the position co-emitted with the label.
    Both parts are left-padded with ``<s>``.
    """
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    out = []
    labels = list(sp.target) + [EOS]
    syncs = list(sp.sync) + [len(sp.source)]
    for j, (label, a) in enumerate(zip(labels, syncs)):
        ctx = _window(sp.target, j, n - 1) + _window(sp.source, a, m)
        out.append(TrainingInstance(ctx, label))
    return out


def write_streams(pairs, src_path, tgt_path, sync_path):
    with open(src_path, "w", encoding="utf-8", newline="\n") as fs, \
            open(tgt_path, "w", encoding="utf-8", newline="\n") as ft, \
            open(sync_path, "w", encoding="utf-8", newline="\n") as fy:
        for sp in pairs:
            fs.write(" ".join(sp.source) + "\n")
            ft.write(" ".join(sp.target) + "\n")
            fy.write(" ".join(map(str, sp.sync)) + "\n")


def read_streams(src_path, tgt_path, sync_path):
    missing = object()
    out = []
    rows = zip_longest(_read_lines(src_path), _read_lines(tgt_path),
                       _read_lines(sync_path), fillvalue=missing)
    for n, (s, t, y) in enumerate(rows, start=1):
        if missing in (s, t, y):
            raise CorpusError("line-count mismatch between stream files", n)
        try:
            out.append(StreamPair(tuple(tokenize(s)), tuple(tokenize(t)),
                                  tuple(int(x) for x in tokenize(y))))
        except (ValueError, StreamError) as exc:
            raise CorpusError(str(exc), n) from None
    return out


def write_instances(instances, path):
    """Debug dump, one ``label<TAB>ctx1 ctx2 ...`` line per instance."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for inst in instances:
            f.write("%s\t%s\n" % (inst.label, " ".join(inst.context)))
