"""Figures for training runs and operation corpora.

Every figure is written next to a TSV holding exactly the plotted numbers.
"""

from __future__ import annotations

import math
from collections import Counter

import matplotlib
matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from .opgen import GAP, JB, JF  # noqa: E402

OPERATION_CLASSES = ("GEN", "GEN_SELF", "GEN_S", "GEN_T", "GAP", "JB", "JF", "FD", "BD", "SW")


def _save(fig, path):
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})


def learning_curve(records, png_path, tsv_path):
    """Validation perplexity and training NCE loss per epoch."""
    with open(tsv_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("epoch\ttrain_nce_loss\tvalid_ppl\tlr\n")
        for r in records:
            f.write(r.line() + "\n")

    epochs = [r.epoch for r in records]
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(111)
    lines = ax.plot(epochs, [r.valid_ppl for r in records], "o-", color="C0",
                    label="validation perplexity")
    ax.set_xlabel("epoch")
    ax.set_ylabel("perplexity")
    ppl = [r.valid_ppl for r in records if math.isfinite(r.valid_ppl)]
    if ppl and min(ppl) > 0 and max(ppl) / min(ppl) > 20:
        ax.set_yscale("log")
    trained = [r for r in records if not math.isnan(r.train_nce_loss)]
    if trained:
        ax2 = ax.twinx()
        lines += ax2.plot([r.epoch for r in trained], [r.train_nce_loss for r in trained],
                          "s--", color="C1", label="training NCE loss")
        ax2.set_ylabel("NCE loss")
    ax.legend(lines, [l.get_label() for l in lines], loc="upper right", frameon=False)
    fig.tight_layout()
    _save(fig, png_path)


def operation_class(op):
    if op.kind == JB:
        return "JB"
    return op.kind


def operation_counts(sequences):
    counts = Counter()
    jumps = Counter()
    for ops in sequences:
        for op in ops:
            counts[operation_class(op)] += 1
            if op.kind == JB:
                jumps[op.n] += 1
    return counts, jumps


def operation_histogram(sequences, png_path, tsv_path):
    """Operation-kind frequencies, plus the distribution of Jump Back distances."""
    counts, jumps = operation_counts(sequences)
    total = sum(counts.values()) or 1
    with open(tsv_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("operation\tcount\tshare\n")
        for kind in OPERATION_CLASSES:
            f.write("%s\t%d\t%.6f\n" % (kind, counts[kind], counts[kind] / total))
        for n in sorted(jumps):
            f.write("JB_%d\t%d\t%.6f\n" % (n, jumps[n], jumps[n] / total))

    fig = Figure(figsize=(8, 3.5))
    ax, bx = fig.subplots(1, 2, gridspec_kw={"width_ratios": [3, 2]})
    kinds = [k for k in OPERATION_CLASSES if counts[k]] or list(OPERATION_CLASSES)
    reorder = {GAP, JB, JF, "FD", "BD", "SW"}
    ax.bar(kinds, [counts[k] for k in kinds],
           color=["C3" if k in reorder else "C0" for k in kinds])
    ax.set_ylabel("count")
    ax.set_title("operations")
    ax.tick_params(axis="x", labelrotation=45)
    if jumps:
        xs = sorted(jumps)
        bx.bar([str(n) for n in xs], [jumps[n] for n in xs], color="C3")
    bx.set_xlabel("jump back distance")
    bx.set_title("JB_n")
    fig.tight_layout()
    _save(fig, png_path)
    return counts
