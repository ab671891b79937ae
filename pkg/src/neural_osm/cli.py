"""neural-osm command line.

Exit codes: 0 success, 1 usage, 2 invalid data or model, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import fields

from . import __version__
from .corpus import CorpusError, iter_corpus, load_corpus, _read_lines
from .neural import (MAGIC, DivergenceError, ModelConfig, NeuralError, load_model,
                     read_training_log, save_model, train, write_training_log)
from .ngram import NgramError, NgramModel, train_ngram, train_orientation_table
from .opgen import (VARIANTS, CorruptSequenceError, GenerationError, OrientationError,
                    convert, format_sequence, generate_operations, parse_sequence)
from .report import learning_curve, operation_histogram
from .scorer import IncrementalScorer, ScorerError, phrases_from_cuts
from .streams import StreamError, read_streams, split_streams, write_streams

log = logging.getLogger("neural_osm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATA_ERRORS = (CorpusError, StreamError, NgramError, NeuralError, ScorerError,
               CorruptSequenceError, GenerationError, OrientationError, OSError,
               UnicodeDecodeError, json.JSONDecodeError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


# ---------------------------------------------------------------------------
# manifests


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, command, config, inputs, seed=None):
    manifest = {
        "command": command,
        "config": config,
        "inputs": {os.path.basename(p): _digest(p) for p in inputs},
        "seed": seed,
        "version": __version__,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _config_of(args, skip=("func",)):
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------------------
# commands


def cmd_extract_ops(args):
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        for pair in iter_corpus(args.src, args.tgt, args.align):
            ops = convert(generate_operations(pair), args.variant, args.swap_detection)
            f.write(format_sequence(ops) + "\n")
    write_manifest(args.out + ".manifest.json", "extract-ops", _config_of(args),
                   [args.src, args.tgt, args.align])


def cmd_streams(args):
    pairs = []
    for n, line in enumerate(_read_lines(args.ops), start=1):
        try:
            ops = parse_sequence(line)
            pairs.append(split_streams(ops, args.variant, collapse=not args.no_collapse))
        except (CorruptSequenceError, StreamError) as exc:
            raise CorpusError(str(exc), n) from None
    write_streams(pairs, args.out_src, args.out_tgt, args.out_sync)
    write_manifest(args.out_tgt + ".manifest.json", "streams", _config_of(args), [args.ops])


def _stream_files(prefix):
    return prefix + ".src", prefix + ".tgt", prefix + ".sync"


def _model_config(args):
    return ModelConfig(**{f.name: getattr(args, f.name) for f in fields(ModelConfig)})


def cmd_train(args):
    if args.backend == "ngram":
        if not args.ops:
            raise _UsageError("--backend ngram needs --ops")
        corpus = [line.split() for line in _read_lines(args.ops)]
        model = train_ngram(corpus, order=args.order, smoothing=args.smoothing)
        model.write_arpa(args.out)
        inputs = [args.ops]
    elif args.backend == "orientation":
        if not args.corpus:
            raise _UsageError("--backend orientation needs --corpus SRC TGT ALIGN")
        table = train_orientation_table(iter_corpus(*args.corpus), sigma=args.sigma,
                                       refined=not args.msd)
        table.write(args.out)
        inputs = list(args.corpus)
    else:
        if not args.train:
            raise _UsageError("--backend nn needs --train PREFIX")
        config = _model_config(args)
        train_pairs = read_streams(*_stream_files(args.train))
        inputs = list(_stream_files(args.train))
        if args.valid:
            valid_pairs = read_streams(*_stream_files(args.valid))
            inputs += list(_stream_files(args.valid))
        else:
            held = max(1, len(train_pairs) // 10)
            if len(train_pairs) < 2:
                raise NeuralError("need at least two sentences to hold out validation data")
            train_pairs, valid_pairs = train_pairs[:-held], train_pairs[-held:]
        result = train(config, train_pairs, valid_pairs,
                       progress=lambda r: log.info("epoch %s", r.line()))
        save_model(result.model, args.out)
        write_training_log(result.log, args.log or args.out + ".log.tsv")
    write_manifest(args.out + ".manifest.json", "train", _config_of(args), inputs,
                   seed=args.seed if args.backend == "nn" else None)


def _load_any(path):
    with open(path, "rb") as f:
        head = f.read(len(MAGIC))
    if head == MAGIC:
        return load_model(path)
    return NgramModel.read_arpa(path)


def _read_cuts(path):
    out = []
    for n, line in enumerate(_read_lines(path), start=1):
        try:
            out.append([int(x) for x in line.split()])
        except ValueError:
            raise CorpusError("phrase cut points must be integers", n) from None
    return out


def cmd_score(args, out=None):
    out = out or sys.stdout
    model = _load_any(args.model)
    scorer = IncrementalScorer(model, args.variant, args.swap_detection)
    pairs = load_corpus(args.src, args.tgt, args.align)
    cuts = None
    if args.incremental:
        cuts = _read_cuts(args.phrases) if args.phrases else [[] for _ in pairs]
        if len(cuts) != len(pairs):
            raise CorpusError("phrase file has %d lines for %d sentences" % (len(cuts), len(pairs)))
    total, events = 0.0, 0
    for n, pair in enumerate(pairs, start=1):
        try:
            if cuts is None:
                lp = scorer.score_pair(pair)
            else:
                lp = scorer.score_phrases(phrases_from_cuts(pair, cuts[n - 1]))
        except (ScorerError, NeuralError) as exc:
            raise CorpusError(str(exc), n) from None
        if not math.isfinite(lp):
            raise DivergenceError("sentence %d: non-finite log-probability" % n)
        total += lp
        events += scorer.count_predictions(pair)
        out.write("%d\t%.6f\n" % (n, lp))
    if events:
        out.write("PPL\t%.6f\n" % math.exp(-total / events))
    else:
        out.write("PPL\tnan\n")


def export_lines(pair, mode):
    """(transformed source, target side) token lists for one sentence pair."""
    ops = generate_operations(pair)
    if mode == "preordered":
        sp = split_streams(convert(ops, "lexical"), "lexical", collapse=False)
        return list(sp.source), list(pair.target)
    variant = "osm" if mode == "osm-augmented" else "coarse"
    sp = split_streams(convert(ops, variant), variant, collapse=False)
    return list(sp.source), list(sp.target)


def cmd_export_nmt(args):
    aux_orig = args.out_aux_orig or args.out_src + ".orig"
    aux_trans = args.out_aux_trans or args.out_src + ".trans"
    with open(args.out_src, "w", encoding="utf-8", newline="\n") as fs, \
            open(args.out_tgt, "w", encoding="utf-8", newline="\n") as ft, \
            open(aux_orig, "w", encoding="utf-8", newline="\n") as fo, \
            open(aux_trans, "w", encoding="utf-8", newline="\n") as fx:
        for pair in iter_corpus(args.src, args.tgt, args.align):
            src, tgt = export_lines(pair, args.mode)
            fs.write(" ".join(src) + "\n")
            ft.write(" ".join(tgt) + "\n")
            fo.write(" ".join(pair.source) + "\n")
            fx.write(" ".join(src) + "\n")
    write_manifest(args.out_src + ".manifest.json", "export-nmt", _config_of(args),
                   [args.src, args.tgt, args.align])


def cmd_report(args):
    if not (args.log or args.ops):
        raise _UsageError("report needs --log and/or --ops")
    os.makedirs(args.out_dir, exist_ok=True)
    inputs = []
    if args.log:
        records = read_training_log(args.log)
        learning_curve(records, os.path.join(args.out_dir, "learning_curve.png"),
                       os.path.join(args.out_dir, "learning_curve.tsv"))
        inputs.append(args.log)
    if args.ops:
        seqs = []
        for n, line in enumerate(_read_lines(args.ops), start=1):
            try:
                seqs.append(parse_sequence(line))
            except CorruptSequenceError as exc:
                raise CorpusError(str(exc), n) from None
        operation_histogram(seqs, os.path.join(args.out_dir, "operations.png"),
                            os.path.join(args.out_dir, "operations.tsv"))
        inputs.append(args.ops)
    write_manifest(os.path.join(args.out_dir, "report.manifest.json"), "report",
                   _config_of(args), inputs)


class _UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# parser


def _corpus_args(p):
    p.add_argument("src", help="source text, one sentence per line")
    p.add_argument("tgt", help="target text, line-aligned with src")
    p.add_argument("align", help="Pharaoh alignments (i-j, 0-based)")


def build_parser():
    parser = _Parser(prog="neural-osm",
                     description="Operation sequences, stream models and incremental scoring.")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add("extract-ops", help="convert an aligned corpus to operation sequences")
    _corpus_args(p)
    p.add_argument("--variant", choices=VARIANTS, default="osm")
    p.add_argument("--swap-detection", action="store_true",
                   help="tag adjacent swaps as SW in the coarse variant")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_ops)

    p = add("streams", help="split operation sequences into source/target streams")
    p.add_argument("ops")
    p.add_argument("--variant", choices=VARIANTS, default="osm")
    p.add_argument("--no-collapse", action="store_true",
                   help="emit multi-word cepts word by word")
    p.add_argument("--out-src", required=True)
    p.add_argument("--out-tgt", required=True)
    p.add_argument("--out-sync", required=True)
    p.set_defaults(func=cmd_streams)

    p = add("train", help="train an n-gram, orientation or neural model")
    p.add_argument("--backend", choices=("ngram", "nn", "orientation"), default="nn")
    p.add_argument("--out", required=True)
    g = p.add_argument_group("n-gram")
    g.add_argument("--ops", help="operation corpus")
    g.add_argument("--order", type=int, default=5)
    g.add_argument("--smoothing", choices=("kn", "mle"), default="kn")
    g = p.add_argument_group("orientation")
    g.add_argument("--corpus", nargs=3, metavar=("SRC", "TGT", "ALIGN"))
    g.add_argument("--sigma", type=float, default=0.5)
    g.add_argument("--msd", action="store_true", help="three classes M/S/D instead of M/S/FD/BD")
    g = p.add_argument_group("neural")
    g.add_argument("--train", metavar="PREFIX", help="PREFIX.src, PREFIX.tgt, PREFIX.sync")
    g.add_argument("--valid", metavar="PREFIX")
    g.add_argument("--log", help="training log path (default OUT.log.tsv)")
    defaults = ModelConfig()
    for f in fields(ModelConfig):
        flag = "--" + f.name.replace("_", "-")
        g.add_argument(flag, type=type(getattr(defaults, f.name)), default=getattr(defaults, f.name))
    p.set_defaults(func=cmd_train)

    p = add("score", help="per-sentence log-probabilities and perplexity")
    p.add_argument("model", help="ARPA file or neural model container")
    _corpus_args(p)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--swap-detection", action="store_true")
    p.add_argument("--incremental", action="store_true", help="score phrase by phrase")
    p.add_argument("--phrases", help="one line per sentence: target positions where phrases start")
    p.set_defaults(func=cmd_score)

    p = add("export-nmt", help="pre-ordered or reordering-augmented parallel text")
    _corpus_args(p)
    p.add_argument("--mode", choices=("preordered", "osm-augmented", "coarse-augmented"),
                   required=True)
    p.add_argument("--out-src", required=True)
    p.add_argument("--out-tgt", required=True)
    p.add_argument("--out-aux-orig", help="original source side of the auxiliary pair")
    p.add_argument("--out-aux-trans", help="transformed source side of the auxiliary pair")
    p.set_defaults(func=cmd_export_nmt)

    p = add("report", help="figures with matching TSV tables")
    p.add_argument("--log", help="training log from 'train --backend nn'")
    p.add_argument("--ops", help="operation corpus from 'extract-ops'")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except _UsageError as exc:
        print("neural-osm: error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, FloatingPointError, OverflowError) as exc:
        print("neural-osm: numeric failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print("neural-osm: %s" % exc, file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
