"""Parallel text with word alignments, and frequency-cut vocabularies.

Three line-aligned UTF-8 files make up a corpus: source, target and a
Pharaoh-style alignment file ("i-j" pairs, source index first, 0-based).
Tokens are opaque; lines are split on ASCII blanks only.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from itertools import zip_longest
from typing import Iterable, Iterator

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

_BLANKS = re.compile(r"[ \t]+")
_STRIP = " \t\r\n"


class CorpusError(ValueError):
    """Raised for inconsistent or out-of-range corpus data."""

    def __init__(self, message, sentence=None):
        self.sentence = sentence
        if sentence is not None:
            message = "sentence %d: %s" % (sentence, message)
        super().__init__(message)


class AlignmentParseError(CorpusError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append("line %d" % line)
        if column is not None:
            where.append("column %d" % column)
        if where:
            message = "%s: %s" % (", ".join(where), message)
        ValueError.__init__(self, message)
        self.sentence = line


def tokenize(line: str) -> list[str]:
    line = line.strip(_STRIP)
    if not line:
        return []
    return _BLANKS.split(line)


@dataclass(frozen=True)
class AlignedSentencePair:
    source: tuple
    target: tuple
    links: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))
        object.__setattr__(self, "links", frozenset(self.links))

    def validate(self, sentence=None):
        for i, j in self.links:
            if not 0 <= i < len(self.source):
                raise CorpusError(
                    "link %d-%d: source index out of range (source has %d tokens)"
                    % (i, j, len(self.source)), sentence)
            if not 0 <= j < len(self.target):
                raise CorpusError(
                    "link %d-%d: target index out of range (target has %d tokens)"
                    % (i, j, len(self.target)), sentence)
        return self

    def sorted_links(self):
        return sorted(self.links)


def parse_alignment_line(text: str, line: int | None = None) -> frozenset:
    """Parse a Pharaoh alignment line such as ``"0-0 1-2"`` into a link set.

    Column numbers in errors are 1-based character offsets.
    """
    links = set()
    stripped = text.rstrip("\r\n")
    for m in re.finditer(r"[^ \t]+", stripped):
        item = m.group(0)
        col = m.start() + 1
        left, sep, right = item.partition("-")
        if not sep:
            raise AlignmentParseError("malformed link %r (expected i-j)" % item, line, col)
        if not (left.isdigit() and right.isdigit()):
            raise AlignmentParseError("non-integer link %r" % item, line, col)
        links.add((int(left), int(right)))
    return frozenset(links)


def format_alignment(links) -> str:
    return " ".join("%d-%d" % link for link in sorted(links))


def _read_lines(path):
    with open(path, encoding="utf-8", newline="\n") as f:
        for line in f:
            yield line.rstrip("\n")


def iter_corpus(src_path, tgt_path, align_path) -> Iterator[AlignedSentencePair]:
    """Stream validated pairs from three line-aligned files.

    Sentence numbers in errors are 1-based line numbers.
    """
    missing = object()
    rows = zip_longest(_read_lines(src_path), _read_lines(tgt_path),
                       _read_lines(align_path), fillvalue=missing)
    for n, (src, tgt, al) in enumerate(rows, start=1):
        if missing in (src, tgt, al):
            raise CorpusError("line-count mismatch between %s, %s and %s"
                              % (src_path, tgt_path, align_path), n)
        pair = AlignedSentencePair(tokenize(src), tokenize(tgt),
                                   parse_alignment_line(al, line=n))
        yield pair.validate(sentence=n)


def load_corpus(src_path, tgt_path, align_path) -> list[AlignedSentencePair]:
    return list(iter_corpus(src_path, tgt_path, align_path))


def write_corpus(pairs: Iterable[AlignedSentencePair], src_path, tgt_path, align_path):
    with open(src_path, "w", encoding="utf-8", newline="\n") as fs, \
            open(tgt_path, "w", encoding="utf-8", newline="\n") as ft, \
            open(align_path, "w", encoding="utf-8", newline="\n") as fa:
        for pair in pairs:
            fs.write(" ".join(pair.source) + "\n")
            ft.write(" ".join(pair.target) + "\n")
            fa.write(format_alignment(pair.links) + "\n")


class Vocabulary:
    """Immutable token <-> id map with reserved symbols first.

    ``<s>``, ``</s>`` and ``<unk>`` always take ids 0, 1 and 2; remaining
    reserved symbols follow in sorted order, then the kept tokens by
    descending frequency.
    """

    def __init__(self, tokens, reserved=()):
        specials = [BOS, EOS, UNK]
        extra = sorted(set(reserved) - set(specials))
        ordered = specials + extra
        seen = set(ordered)
        for tok in tokens:
            if tok not in seen:
                ordered.append(tok)
                seen.add(tok)
        self._id_to_token = tuple(ordered)
        self._token_to_id = {t: i for i, t in enumerate(ordered)}
        self.reserved = frozenset(ordered[:len(specials) + len(extra)])

    bos_id = 0
    eos_id = 1
    unk_id = 2

    def __len__(self):
        return len(self._id_to_token)

    def __contains__(self, token):
        return token in self._token_to_id

    def __iter__(self):
        return iter(self._id_to_token)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._id_to_token == other._id_to_token

    def lookup(self, token) -> int:
        return self._token_to_id.get(token, self.unk_id)

    def encode(self, tokens) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def token(self, idx: int) -> str:
        return self._id_to_token[idx]

    def tokens(self):
        return self._id_to_token

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for i, tok in enumerate(self._id_to_token):
                f.write("%s\t%d\n" % (tok, i))

    @classmethod
    def load(cls, path, reserved=()):
        """Read a ``token<TAB>id`` file; ``reserved`` marks extra protected symbols."""
        toks = []
        for n, line in enumerate(_read_lines(path), start=1):
            tok, _, idx = line.rpartition("\t")
            if not idx.isdigit() or int(idx) != len(toks):
                raise CorpusError("vocabulary ids must be dense and ordered", n)
            toks.append(tok)
        if toks[:3] != [BOS, EOS, UNK]:
            raise CorpusError("vocabulary must start with %s, %s, %s" % (BOS, EOS, UNK))
        return cls.from_tokens(toks, set(toks[:3]) | (set(reserved) & set(toks)))

    @classmethod
    def from_tokens(cls, tokens, reserved):
        """Rebuild from an exact id-ordered token list (used by model loading)."""
        vocab = cls.__new__(cls)
        vocab._id_to_token = tuple(tokens)
        vocab._token_to_id = {t: i for i, t in enumerate(tokens)}
        vocab.reserved = frozenset(reserved)
        return vocab


def build_vocabulary(token_stream: Iterable[str], cap: int, reserved=()) -> Vocabulary:
    """Keep the ``cap`` most frequent tokens plus every reserved symbol.

    Frequency ties are broken lexicographically.
    """
    if cap < 0:
        raise ValueError("cap must be >= 0")
    reserved = set(reserved) | {BOS, EOS, UNK}
    counts = Counter(t for t in token_stream if t not in reserved)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([tok for tok, _ in ranked[:cap]], reserved)
