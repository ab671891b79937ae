"""Operation sequences from word-aligned sentence pairs.

A sentence pair is linearised in target order into lexical generations
(``GEN``, ``GEN_S``, ``GEN_T``, ``GEN_SELF``) and reordering operations on
the source side (``GAP``, ``JB_n``, ``JF``).  The conversion is exactly
invertible: :func:`interpret_operations` rebuilds both sentences from the
operations alone.

Gap bookkeeping
---------------
Open gaps are numbered from the right, nearest to the end of the covered
source span being 1.  ``JB_n`` moves the insertion point to the start of
gap ``n`` and removes that gap; generation then proceeds left to right
inside it.  If the generator leaves such a region with uncovered words
still in it, it re-opens the remainder with a ``GAP`` first, so the gap
list seen by the interpreter always matches the generator's.

Discontiguous cepts
-------------------
Translation units are connected components of the link graph, widened to
the smallest unit whose source span and target span are both contiguous
(any unit or unaligned word inside the span of another is merged into
it).  For alignments whose cepts are already contiguous -- by far the
usual case -- units and minimal translation units coincide.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .corpus import AlignedSentencePair

GEN = "GEN"
GEN_S = "GEN_S"
GEN_T = "GEN_T"
GEN_SELF = "GEN_SELF"
GAP = "GAP"
JB = "JB"
JF = "JF"
FD = "FD"
BD = "BD"
SW = "SW"

LEXICAL_KINDS = frozenset({GEN, GEN_S, GEN_T, GEN_SELF})
JOINT_KINDS = frozenset({GEN, GEN_SELF})
REORDER_KINDS = frozenset({GAP, JB, JF})
COARSE_KINDS = frozenset({FD, BD, SW})

JOIN = "_"


class CorruptSequenceError(ValueError):
    pass


class GenerationError(ValueError):
    """A unit cannot be generated from the current generator state."""


@dataclass(frozen=True)
class Operation:
    kind: str
    src: tuple = ()
    tgt: tuple = ()
    n: int = 0
    # absolute source positions of the generated words; not serialised
    positions: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == JB and self.n < 1:
            raise ValueError("JumpBack index must be >= 1")
        if self.kind in (GEN, GEN_S) and not self.src:
            raise ValueError("%s needs a source payload" % self.kind)
        if self.kind in (GEN, GEN_T) and not self.tgt:
            raise ValueError("%s needs a target payload" % self.kind)
        if self.kind == GEN_SELF and not self.src:
            raise ValueError("GEN_SELF needs a payload")

    @property
    def is_reordering(self):
        return self.kind in REORDER_KINDS or self.kind in COARSE_KINDS

    def source_words(self):
        if self.kind in (GEN, GEN_S, GEN_SELF):
            return self.src
        return ()

    def target_words(self):
        if self.kind in (GEN, GEN_T):
            return self.tgt
        if self.kind == GEN_SELF:
            return self.src
        return ()

    def __str__(self):
        return format_operation(self)


def generate(src, tgt):
    src, tgt = tuple(src), tuple(tgt)
    if len(src) == 1 and src == tgt:
        return Operation(GEN_SELF, src)
    return Operation(GEN, src, tgt)


def format_operation(op: Operation) -> str:
    k = op.kind
    if k == GEN:
        return "GEN(%s|%s)" % (JOIN.join(op.src), JOIN.join(op.tgt))
    if k == GEN_S:
        return "GEN_S(%s)" % JOIN.join(op.src)
    if k == GEN_T:
        return "GEN_T(%s)" % JOIN.join(op.tgt)
    if k == GEN_SELF:
        return "GEN_SELF(%s)" % JOIN.join(op.src)
    if k == JB:
        return "JB_%d" % op.n
    return k


_OP_RE = re.compile(r"^(GEN|GEN_S|GEN_T|GEN_SELF)\((.*)\)$")


def parse_operation(token: str) -> Operation:
    if token in (GAP, JF, FD, BD, SW):
        return Operation(token)
    if token.startswith("JB_") and token[3:].isdigit():
        return Operation(JB, n=int(token[3:]))
    m = _OP_RE.match(token)
    if not m:
        raise CorruptSequenceError("unrecognised operation %r" % token)
    kind, body = m.groups()
    if kind == GEN:
        if "|" not in body:
            raise CorruptSequenceError("GEN payload needs src|tgt: %r" % token)
        s, t = body.split("|", 1)
        return Operation(GEN, tuple(s.split(JOIN)), tuple(t.split(JOIN)))
    if kind == GEN_T:
        return Operation(GEN_T, tgt=tuple(body.split(JOIN)))
    return Operation(kind, tuple(body.split(JOIN)))


def format_sequence(ops) -> str:
    return " ".join(format_operation(op) for op in ops)


def parse_sequence(line: str) -> list[Operation]:
    return [parse_operation(tok) for tok in line.split()]


# ---------------------------------------------------------------------------
# Minimal translation units


@dataclass(frozen=True)
class Mtu:
    source_positions: tuple
    target_positions: tuple
    source_text: tuple
    target_text: tuple

    @property
    def source_start(self):
        return self.source_positions[0]

    @property
    def source_end(self):
        return self.source_positions[-1]

    @property
    def is_aligned(self):
        return bool(self.source_positions) and bool(self.target_positions)


def _make_mtu(pair, src_pos, tgt_pos):
    src_pos = tuple(sorted(src_pos))
    tgt_pos = tuple(sorted(tgt_pos))
    return Mtu(src_pos, tgt_pos,
               tuple(pair.source[i] for i in src_pos),
               tuple(pair.target[j] for j in tgt_pos))


def _components(links):
    """Connected components of the bipartite link graph, as (src set, tgt set)."""
    parent = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in links:
        a, b = ("s", i), ("t", j)
        parent.setdefault(a, a)
        parent.setdefault(b, b)
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for node in parent:
        groups.setdefault(find(node), []).append(node)
    comps = []
    for nodes in groups.values():
        comps.append(({p for side, p in nodes if side == "s"},
                      {p for side, p in nodes if side == "t"}))
    return comps


def extract_mtus(pair: AlignedSentencePair):
    """Return ``(mtus, unaligned_source, unaligned_target)``.

    MTUs are the connected components of the link graph, ordered by their
    first target position; cepts are collapsed even when non-contiguous.
    """
    comps = _components(pair.links)
    mtus = sorted((_make_mtu(pair, s, t) for s, t in comps),
                  key=lambda u: u.target_positions[0])
    aligned_s = {i for i, _ in pair.links}
    aligned_t = {j for _, j in pair.links}
    unaligned_s = [i for i in range(len(pair.source)) if i not in aligned_s]
    unaligned_t = [j for j in range(len(pair.target)) if j not in aligned_t]
    return mtus, unaligned_s, unaligned_t


def _close_spans(comps, n_src=None, n_tgt=None, free_src=(), free_tgt=()):
    """Merge components until every source and target span is contiguous.

    ``free_src``/``free_tgt`` are unaligned positions that get absorbed when
    they fall inside a span.  Returns a list of (src set, tgt set).
    """
    units = [(set(s), set(t)) for s, t in comps]
    free_src, free_tgt = set(free_src), set(free_tgt)
    changed = True
    while changed:
        changed = False
        owner_s = {}
        owner_t = {}
        for k, (s, t) in enumerate(units):
            for p in s:
                owner_s[p] = k
            for p in t:
                owner_t[p] = k
        for k, (s, t) in enumerate(units):
            merge = set()
            for span, owner, free, side in ((s, owner_s, free_src, 0), (t, owner_t, free_tgt, 1)):
                if not span:
                    continue
                for p in range(min(span), max(span) + 1):
                    if p in span:
                        continue
                    if p in owner:
                        merge.add(owner[p])
                    elif p in free:
                        units[k][side].add(p)
                        free.discard(p)
                        changed = True
            if merge:
                for other in sorted(merge, reverse=True):
                    units[k][0].update(units[other][0])
                    units[k][1].update(units[other][1])
                for other in sorted(merge, reverse=True):
                    del units[other]
                changed = True
                break
    return units, free_src, free_tgt


def translation_units(pair: AlignedSentencePair):
    """Units used for generation: MTUs widened to contiguous spans.

    Returns ``(units, unaligned_source, unaligned_target)`` with units in
    target order.
    """
    mtus, free_s, free_t = extract_mtus(pair)
    comps = [(set(u.source_positions), set(u.target_positions)) for u in mtus]
    units, free_s, free_t = _close_spans(comps, free_src=free_s, free_tgt=free_t)
    out = sorted((_make_mtu(pair, s, t) for s, t in units),
                 key=lambda u: u.target_positions[0])
    return out, sorted(free_s), sorted(free_t)


# ---------------------------------------------------------------------------
# Generation


class GeneratorState:
    """Source-side cursor for incremental generation.

    ``pointer`` is the next source position to fill.  ``region_end`` is the
    last position of the gap currently being filled, or ``None`` when the
    pointer sits at the right end of the covered span.
    """

    def __init__(self):
        self.covered = set()
        self.unaligned = set()      # known unaligned, not yet generated
        self.gaps = []              # sorted [start, end] of open gaps
        self.pointer = 0
        self.region_end = None

    def copy(self):
        new = GeneratorState.__new__(GeneratorState)
        new.covered = set(self.covered)
        new.unaligned = set(self.unaligned)
        new.gaps = [list(g) for g in self.gaps]
        new.pointer = self.pointer
        new.region_end = self.region_end
        return new

    @property
    def frontier(self):
        return max(self.covered) + 1 if self.covered else 0

    def _check_gaps(self):
        for a, b in self.gaps:
            assert a <= b, self.gaps

    def _in_region(self, s):
        if self.region_end is None:
            return s >= self.pointer
        return self.pointer <= s <= self.region_end

    def _gap_index(self, s):
        for idx, (a, b) in enumerate(self.gaps):
            if a <= s <= b:
                return idx
        return None

    def _cover(self, positions):
        self.covered.update(positions)
        self.unaligned.difference_update(positions)

    def _consume_unaligned(self, src_tokens, ops):
        while self.pointer in self.unaligned:
            p = self.pointer
            ops.append(Operation(GEN_S, (src_tokens[p],), positions=(p,)))
            self._cover((p,))
            self.pointer += 1

    def _open_gap(self, start, end, ops):
        if start > end:
            return
        ops.append(Operation(GAP))
        self.gaps.append([start, end])
        self.gaps.sort()

    def _move_to(self, s, src_tokens, ops):
        """Emit reordering operations so the pointer can generate at ``s``."""
        if not self._in_region(s):
            if self.region_end is not None and self.pointer <= self.region_end:
                self._open_gap(self.pointer, self.region_end, ops)
            idx = self._gap_index(s)
            if idx is not None:
                k = len(self.gaps) - idx
                a, b = self.gaps.pop(idx)
                ops.append(Operation(JB, n=k))
                self.pointer, self.region_end = a, b
            elif s >= self.frontier and s not in self.covered:
                ops.append(Operation(JF))
                self.pointer, self.region_end = self.frontier, None
            else:
                raise GenerationError("source position %d is not reachable "
                                      "(already covered)" % s)
            self._consume_unaligned(src_tokens, ops)
        if s > self.pointer:
            self._open_gap(self.pointer, s - 1, ops)
            self.pointer = s

    def add_unaligned(self, positions):
        overlap = self.covered.intersection(positions)
        if overlap:
            raise GenerationError("positions already covered: %s" % sorted(overlap))
        self.unaligned.update(positions)

    def generate_unit(self, src_positions, src_tokens, tgt_words):
        """Operations for one unit with contiguous ``src_positions``.

        ``src_tokens`` is indexable by absolute source position.
        """
        ops = []
        s, e = src_positions[0], src_positions[-1]
        if any(p in self.covered for p in src_positions):
            raise GenerationError("unit overlaps covered source positions")
        if e - s + 1 != len(src_positions):
            raise GenerationError("unit source span is not contiguous")
        self._consume_unaligned(src_tokens, ops)
        self._move_to(s, src_tokens, ops)
        op = generate(tuple(src_tokens[p] for p in src_positions), tgt_words)
        ops.append(Operation(op.kind, op.src, op.tgt, positions=tuple(src_positions)))
        self._cover(src_positions)
        self.pointer = e + 1
        self._consume_unaligned(src_tokens, ops)
        self._check_gaps()
        return ops

    def finish(self, src_tokens):
        """Generate any known-unaligned source words still pending."""
        ops = []
        self._consume_unaligned(src_tokens, ops)
        for p in sorted(self.unaligned):
            if p in self.covered or p not in self.unaligned:
                continue
            self._move_to(p, src_tokens, ops)
            self._consume_unaligned(src_tokens, ops)
        return ops


def _events(pair, units, unaligned_t):
    ev = [(u.target_positions[0], u) for u in units]
    ev += [(j, j) for j in unaligned_t]
    ev.sort(key=lambda x: x[0])
    return [e for _, e in ev]


def generate_operations(pair: AlignedSentencePair) -> list[Operation]:
    """Deterministic operation sequence for ``pair``."""
    units, unaligned_s, unaligned_t = translation_units(pair)
    state = GeneratorState()
    state.add_unaligned(unaligned_s)
    ops = []
    for ev in _events(pair, units, unaligned_t):
        if isinstance(ev, int):
            ops.append(Operation(GEN_T, tgt=(pair.target[ev],)))
        else:
            ops.extend(state.generate_unit(ev.source_positions, pair.source, ev.target_text))
    ops.extend(state.finish(pair.source))
    assert len(state.covered) == len(pair.source), "source not fully generated"
    return ops


# ---------------------------------------------------------------------------
# Interpretation


class _Gap:
    __slots__ = ()

    def __repr__(self):
        return "<gap>"


def _interpret(ops, source_length=None, strict=True):
    """Replay ``ops``; return (source, target, per-op final source positions)."""
    buf = []            # words as (token, op index) and _Gap markers
    ip = 0
    target = []
    for idx, op in enumerate(ops):
        k = op.kind
        if k in LEXICAL_KINDS:
            words = op.source_words()
            buf[ip:ip] = [(w, idx) for w in words]
            ip += len(words)
            target.extend(op.target_words())
            if source_length is not None and sum(1 for x in buf if not isinstance(x, _Gap)) > source_length:
                raise CorruptSequenceError("operation %d generates past the sentence end" % idx)
        elif k == GAP:
            buf.insert(ip, _Gap())
            ip += 1
        elif k == JB:
            gaps = [i for i, x in enumerate(buf) if isinstance(x, _Gap)]
            if op.n > len(gaps):
                raise CorruptSequenceError(
                    "operation %d: JB_%d with only %d open gap(s)" % (idx, op.n, len(gaps)))
            g = gaps[len(gaps) - op.n]
            del buf[g]
            ip = g
        elif k == JF:
            ip = len(buf)
        elif k in COARSE_KINDS:
            raise CorruptSequenceError("coarse tags cannot be interpreted")
        else:
            raise CorruptSequenceError("unknown operation kind %r" % k)
    if strict and any(isinstance(x, _Gap) for x in buf):
        raise CorruptSequenceError("sequence ends with unfilled gaps")
    words = [x for x in buf if not isinstance(x, _Gap)]
    positions = [[] for _ in ops]
    for pos, (_, idx) in enumerate(words):
        positions[idx].append(pos)
    return [w for w, _ in words], target, positions


def interpret_operations(ops, source_length=None):
    """Rebuild ``(source tokens, target tokens)`` from an operation sequence."""
    source, target, _ = _interpret(ops, source_length)
    return source, target


def with_positions(ops):
    """Return ``ops`` with source positions filled in by replaying them."""
    if all(op.positions is not None for op in ops if op.source_words()):
        return list(ops)
    _, _, positions = _interpret(ops)
    return [Operation(op.kind, op.src, op.tgt, op.n,
                      tuple(positions[i]) if op.source_words() else None)
            for i, op in enumerate(ops)]


# ---------------------------------------------------------------------------
# Coarse orientation tags and lexical-only sequences


class CoarseTagger:
    """Streaming conversion of reordering operations to FD/BD/SW tags.

    JB_n becomes BD and JF becomes FD; a GAP becomes FD unless it directly
    follows a JB, in which case it is dropped.  With ``swap_detection`` a BD
    whose generation lands immediately left of the previous cept and leaves
    no uncovered word behind becomes SW.
    """

    def __init__(self, swap_detection=False):
        self.swap_detection = swap_detection
        self.prev_span = None
        self.covered = set()
        self.last_kind = None

    def copy(self):
        new = CoarseTagger(self.swap_detection)
        new.prev_span = self.prev_span
        new.covered = set(self.covered)
        new.last_kind = self.last_kind
        return new

    def _is_swap(self, span):
        if self.prev_span is None:
            return False
        return (span[1] + 1 == self.prev_span[0]
                and len(self.covered) == max(self.covered) + 1)

    def feed(self, ops):
        """Convert a chunk of operations; positions are needed for swap detection."""
        out = []
        pending_bd = None
        for op in ops:
            k = op.kind
            if k in COARSE_KINDS:
                raise ValueError("sequence is already coarse")
            prev, self.last_kind = self.last_kind, k
            if k == JB:
                pending_bd = len(out)
                out.append(Operation(BD))
                continue
            if k == JF or (k == GAP and prev != JB):
                out.append(Operation(FD))
                continue
            if k == GAP:
                continue
            if self.swap_detection and op.positions is None and op.source_words():
                raise ValueError("swap detection needs source positions")
            out.append(op)
            if op.positions:
                self.covered.update(op.positions)
            if k in JOINT_KINDS:
                span = (op.positions[0], op.positions[-1]) if op.positions else None
                if pending_bd is not None and self.swap_detection and self._is_swap(span):
                    out[pending_bd] = Operation(SW)
                pending_bd = None
                self.prev_span = span
        return out


def to_coarse(ops, swap_detection=False):
    """Replace reordering operations by FD/BD (and optionally SW) tags."""
    if swap_detection:
        ops = with_positions(ops)
    return CoarseTagger(swap_detection).feed(ops)


def to_lexical(ops):
    """Drop every reordering operation, keeping lexical order."""
    return [op for op in ops if not op.is_reordering]


def convert(ops, variant, swap_detection=False):
    if variant == "osm":
        return list(ops)
    if variant == "coarse":
        return to_coarse(ops, swap_detection)
    if variant == "lexical":
        return to_lexical(ops)
    raise ValueError("unknown variant %r" % variant)


VARIANTS = ("osm", "coarse", "lexical")


# ---------------------------------------------------------------------------
# Orientation of consecutive units

M, S, D = "M", "S", "D"


class OrientationError(ValueError):
    pass


def classify_orientation(prev: Mtu | None, cur: Mtu):
    """Return ``(msd, refined)``, e.g. ``("D", "FD")``.

    ``prev=None`` stands for the sentence start (a unit ending at -1).
    """
    if not cur.source_positions or (prev is not None and not prev.source_positions):
        raise OrientationError("orientation is undefined for unaligned units")
    prev_start, prev_end = (-1, -1) if prev is None else (prev.source_start, prev.source_end)
    if cur.source_start == prev_end + 1:
        return M, M
    if cur.source_end + 1 == prev_start:
        return S, S
    return D, (FD if cur.source_start > prev_end + 1 else BD)


def orientation_events(pair: AlignedSentencePair, refined=True):
    """(unit, orientation) for each MTU in target order."""
    mtus, _, _ = extract_mtus(pair)
    prev = None
    out = []
    for u in mtus:
        msd, fine = classify_orientation(prev, u)
        out.append((u, fine if refined else msd))
        prev = u
    return out
