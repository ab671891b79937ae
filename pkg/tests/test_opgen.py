import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import WORKED_OPS, random_pair
from neural_osm.corpus import AlignedSentencePair
from neural_osm.opgen import (BD, FD, GAP, GEN, JB, JF, SW, CorruptSequenceError, Mtu,
                              Operation, OrientationError, _interpret, classify_orientation,
                              extract_mtus, format_sequence, generate_operations,
                              interpret_operations, orientation_events, parse_sequence,
                              to_coarse, to_lexical)


def ops_of(text):
    return parse_sequence(text)


def mtu(src, tgt=(0,)):
    return Mtu(tuple(src), tuple(tgt), tuple("s%d" % i for i in src), tuple("t%d" % j for j in tgt))


def components_oracle(links):
    """Flood fill over shared rows and columns."""
    links = set(links)
    out = []
    while links:
        stack = [links.pop()]
        comp = set(stack)
        while stack:
            i, j = stack.pop()
            for other in [l for l in links if l[0] == i or l[1] == j]:
                links.discard(other)
                comp.add(other)
                stack.append(other)
        out.append(({i for i, _ in comp}, {j for _, j in comp}))
    return sorted(out, key=lambda c: min(c[1]))


pairs_strategy = st.builds(
    lambda seed, kind: random_pair(random.Random(seed), kind=kind),
    st.integers(0, 10**9), st.sampled_from(["perm", "many", "sparse"]))


class TestExtractMtus:
    def test_one_to_one(self):
        mtus, us, ut = extract_mtus(AlignedSentencePair("a b".split(), "A B".split(), {(0, 0), (1, 1)}))
        assert [(m.source_positions, m.target_positions) for m in mtus] == [((0,), (0,)), ((1,), (1,))]
        assert us == ut == []

    def test_many_to_one(self):
        pair = AlignedSentencePair(["noch", "weiter"], ["further"], {(0, 0), (1, 0)})
        (m,), _, _ = extract_mtus(pair)
        assert m.source_text == ("noch", "weiter") and m.target_text == ("further",)

    def test_discontinuous_target_collapsed(self):
        pair = AlignedSentencePair("a b".split(), "x y z".split(), {(0, 0), (0, 2), (1, 1)})
        mtus, _, _ = extract_mtus(pair)
        assert [(m.source_positions, m.target_positions) for m in mtus] == [((0,), (0, 2)), ((1,), (1,))]

    def test_empty_alignment(self):
        mtus, us, ut = extract_mtus(AlignedSentencePair("a b".split(), ["x"], set()))
        assert mtus == [] and us == [0, 1] and ut == [0]

    @given(pairs_strategy)
    def test_connected_components(self, pair):
        mtus, us, ut = extract_mtus(pair)
        got = [(set(m.source_positions), set(m.target_positions)) for m in mtus]
        assert got == components_oracle(pair.links)
        aligned_s = {i for i, _ in pair.links}
        assert set(us) == set(range(len(pair.source))) - aligned_s


class TestGenerate:
    def test_worked_example(self, worked_pair):
        assert format_sequence(generate_operations(worked_pair)) == WORKED_OPS

    def test_monotone(self):
        pair = AlignedSentencePair("a b c".split(), "A B C".split(), {(0, 0), (1, 1), (2, 2)})
        assert format_sequence(generate_operations(pair)) == "GEN(a|A) GEN(b|B) GEN(c|C)"

    def test_swap(self):
        pair = AlignedSentencePair("a b".split(), "B A".split(), {(0, 1), (1, 0)})
        assert format_sequence(generate_operations(pair)) == "GAP GEN(b|B) JB_1 GEN(a|A)"

    def test_generate_self(self):
        pair = AlignedSentencePair("Berlin ist".split(), "Berlin is".split(), {(0, 0), (1, 1)})
        assert format_sequence(generate_operations(pair)) == "GEN_SELF(Berlin) GEN(ist|is)"

    def test_generate_self_is_case_sensitive(self):
        pair = AlignedSentencePair(["Haus"], ["haus"], {(0, 0)})
        assert generate_operations(pair)[0].kind == GEN

    def test_jump_forward(self):
        # a c b : targets A C B -> B is generated inside the gap, then C needs JF
        pair = AlignedSentencePair("a b c d".split(), "A C B D".split(),
                                   {(0, 0), (2, 1), (1, 2), (3, 3)})
        ops = generate_operations(pair)
        assert format_sequence(ops) == "GEN(a|A) GAP GEN(c|C) JB_1 GEN(b|B) JF GEN(d|D)"

    def test_empty_pair(self):
        assert generate_operations(AlignedSentencePair([], [], set())) == []

    def test_deterministic(self, worked_pair):
        assert generate_operations(worked_pair) == generate_operations(worked_pair)

    @settings(max_examples=300)
    @given(pairs_strategy)
    def test_round_trip(self, pair):
        src, tgt = interpret_operations(generate_operations(pair), len(pair.source))
        assert (tuple(src), tuple(tgt)) == (pair.source, pair.target)

    @settings(max_examples=200)
    @given(pairs_strategy)
    def test_serialization_round_trip(self, pair):
        ops = generate_operations(pair)
        assert parse_sequence(format_sequence(ops)) == ops

    @given(st.permutations(range(7)))
    def test_monotone_identity(self, perm):
        # MTUs in the same order on both sides never trigger reordering
        ordered = sorted(perm)
        pair = AlignedSentencePair(["s%d" % i for i in ordered], ["t%d" % i for i in ordered],
                                   {(i, i) for i in ordered})
        assert not any(op.is_reordering for op in generate_operations(pair))

    @settings(max_examples=200)
    @given(pairs_strategy)
    def test_gap_discipline(self, pair):
        open_gaps = 0
        for op in generate_operations(pair):
            if op.kind == GAP:
                open_gaps += 1
            elif op.kind == JB:
                assert 1 <= op.n <= open_gaps
                open_gaps -= 1


class TestInterpret:
    def test_worked_example(self, worked_pair):
        src, tgt = interpret_operations(ops_of(WORKED_OPS))
        assert tuple(src) == worked_pair.source and tuple(tgt) == worked_pair.target

    def test_single_generate(self):
        assert interpret_operations([Operation(GEN, ("a",), ("A",))]) == (["a"], ["A"])

    def test_jump_past_open_gaps(self):
        with pytest.raises(CorruptSequenceError):
            interpret_operations(ops_of("GAP GEN(b|B) JB_2 GEN(a|A)"))

    def test_generation_past_end(self):
        with pytest.raises(CorruptSequenceError):
            interpret_operations(ops_of("GEN(a|A) GEN(b|B)"), source_length=1)

    def test_unfilled_gap(self):
        with pytest.raises(CorruptSequenceError):
            interpret_operations(ops_of("GAP GEN(b|B)"))

    def test_lenient_mode_keeps_gaps(self):
        src, _, _ = _interpret(ops_of("GAP GEN(b|B)"), strict=False)
        assert src == ["b"]


class TestCoarse:
    def test_worked_example(self, worked_pair):
        coarse = to_coarse(generate_operations(worked_pair))
        assert [op.kind for op in coarse if op.kind in (FD, BD, SW)] == [FD, BD, BD, BD]

    def test_monotone_has_no_tags(self):
        ops = ops_of("GEN(a|A) GEN(b|B)")
        assert to_coarse(ops) == ops

    def test_swap_detection(self):
        ops = ops_of("GAP GEN(b|B) JB_1 GEN(a|A)")
        assert format_sequence(to_coarse(ops)) == "FD GEN(b|B) BD GEN(a|A)"
        assert format_sequence(to_coarse(ops, swap_detection=True)) == "FD GEN(b|B) SW GEN(a|A)"

    def test_swap_needs_adjacency(self):
        # c generated first, then a: not adjacent to c, so it stays BD
        ops = ops_of("GAP GEN(c|C) JB_1 GEN(a|A) GEN(b|B)")
        assert [o.kind for o in to_coarse(ops, True)][2] == BD

    def test_swap_needs_no_remaining_gap(self):
        ops = ops_of("GAP GEN(c|C) JB_1 GAP GEN(b|B) JB_1 GEN(a|A)")
        kinds = [o.kind for o in to_coarse(ops, True)]
        assert kinds == [FD, GEN, BD, GEN, SW, GEN]

    def test_mechanical_mapping(self):
        ops = ops_of("GEN(a|A) GAP GEN(c|C) JB_1 GEN(b|B) JF GEN(d|D)")
        assert [o.kind for o in to_coarse(ops)] == [GEN, FD, GEN, BD, GEN, FD, GEN]

    @given(pairs_strategy)
    def test_tags_replace_reordering(self, pair):
        ops = generate_operations(pair)
        coarse = to_coarse(ops, swap_detection=True)
        lexical = [o for o in coarse if o.kind not in (FD, BD, SW)]
        assert lexical == to_lexical(ops)
        assert sum(o.kind in (BD, SW) for o in coarse) == sum(o.kind == JB for o in ops)


class TestLexical:
    def test_worked_example(self, worked_pair):
        lex = to_lexical(generate_operations(worked_pair))
        # 15 operations, of which 3 gaps and 3 jumps
        assert len(lex) == 9
        assert format_sequence(lex) == " ".join(t for t in WORKED_OPS.split() if t not in ("GAP", "JB_1"))

    def test_swap(self):
        assert format_sequence(to_lexical(ops_of("GAP GEN(b|B) JB_1 GEN(a|A)"))) == "GEN(b|B) GEN(a|A)"

    @given(pairs_strategy)
    def test_filter_equivalence(self, pair):
        ops = generate_operations(pair)
        assert to_lexical(ops) == [o for o in ops if o.kind not in (GAP, JB, JF)]


class TestOrientation:
    def test_monotone(self):
        assert classify_orientation(mtu([2]), mtu([3])) == ("M", "M")

    def test_swap(self):
        assert classify_orientation(mtu([1]), mtu([0])) == ("S", "S")

    def test_forward_discontinuity(self):
        assert classify_orientation(mtu([2]), mtu([6])) == ("D", "FD")

    def test_backward_discontinuity(self):
        assert classify_orientation(mtu([4]), mtu([0])) == ("D", "BD")

    def test_sentence_start(self):
        assert classify_orientation(None, mtu([0]))[0] == "M"
        assert classify_orientation(None, mtu([3]))[1] == "FD"

    def test_unaligned_rejected(self):
        with pytest.raises(OrientationError):
            classify_orientation(mtu([1]), Mtu((), (0,), (), ("t0",)))

    def test_events_skip_unaligned(self, worked_pair):
        events = orientation_events(worked_pair)
        assert len(events) == 7
        assert [o for _, o in events][:2] == ["FD", "M"]
