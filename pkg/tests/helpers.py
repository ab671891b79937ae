import random

from neural_osm.corpus import AlignedSentencePair

GERMAN = "noch weiter gehen zu wollen , wäre ebenso unverantwortlich".split()
ENGLISH = "it would be just as irresponsible to wish to go further".split()
LINKS = frozenset({(6, 1), (6, 2), (7, 3), (7, 4), (8, 5), (3, 6), (4, 7), (2, 8), (2, 9),
                   (0, 10), (1, 10)})

WORKED_OPS = ("GEN_T(it) GAP GEN(wäre|would_be) GEN(ebenso|just_as) "
              "GEN(unverantwortlich|irresponsible) JB_1 GAP GEN(zu|to) GEN(wollen|wish) "
              "GEN_S(,) JB_1 GAP GEN(gehen|to_go) JB_1 GEN(noch_weiter|further)")
WORKED_SOURCE_STREAM = ("Insert_Gap wäre ebenso unverantwortlich Jump_Back_1 Insert_Gap zu wollen , "
                        "Jump_Back_1 Insert_Gap gehen Jump_Back_1 noch_weiter")
WORKED_TARGET_STREAM = ("it Insert_Gap would_be just_as irresponsible Jump_Back_1 Insert_Gap to wish "
                        "Jump_Back_1 Insert_Gap to_go Jump_Back_1 further")


def worked_example():
    return AlignedSentencePair(GERMAN, ENGLISH, LINKS)


def random_pair(rng: random.Random, max_len=12, kind=None, vocab=8):
    """A 1-1 permutation, a dense many-to-many link set, or a sparse one."""
    kind = kind or rng.choice(("perm", "many", "sparse"))
    ns = rng.randint(1, max_len)
    src = ["s%d" % rng.randrange(vocab) for _ in range(ns)]
    if kind == "perm":
        order = list(range(ns))
        rng.shuffle(order)
        tgt = ["t%d" % rng.randrange(vocab) for _ in range(ns)]
        links = {(i, j) for j, i in enumerate(order)}
    else:
        nt = rng.randint(1, max_len)
        tgt = ["t%d" % rng.randrange(vocab) for _ in range(nt)]
        if kind == "many":
            n_links = rng.randint(0, ns + nt)
        else:
            n_links = rng.randint(0, max(1, min(ns, nt) // 2))
        links = {(rng.randrange(ns), rng.randrange(nt)) for _ in range(n_links)}
    return AlignedSentencePair(src, tgt, links)
