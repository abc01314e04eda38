"""Command line entry point: ``parselab <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import evaluation as ev
from .config import ConfigError, ExperimentConfig
from .dcst import self_train
from .graph_parser import train_margin
from .l2s import train_l2s
from .linear import ModelFormatError
from .models import load_model_file, model_bytes, parse_sentences
from .neural.biaff import ModelFormatError as NeuralFormatError
from .neural.biaff import TrainingDivergence, parse_corpus, train_biaff
from .transition import train_early_update
from .treebank import Corpus, TreebankError, permute_words, read_conll_file, validate_tree, write_conll_file

log = logging.getLogger("parselab")

RUNTIME_ERRORS = (OSError, TreebankError, ConfigError, ModelFormatError, NeuralFormatError, TrainingDivergence,
                  ev.EvaluationError, ValueError)


def _read(path) -> Corpus:
    return read_conll_file(path)


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(getattr(args, "config", None))
    log.info("resolved config:\n%s", cfg.resolved().rstrip())
    return cfg


def _write_bytes(path, data: bytes) -> None:
    Path(path).write_bytes(data)


def _dev_logger(dev: Optional[Corpus], parse_fn, what: str):
    """Per-epoch callback that logs dev (or nothing) and returns the scores."""
    def cb(epoch, model, loss=None):
        extra = "" if loss is None else f" loss {loss:.5f}"
        if dev is None or not dev.sentences:
            log.info("%s epoch %d%s", what, epoch, extra)
            return None
        pred = parse_fn(model, dev)
        uas, las = ev.micro_scores(dev, pred)
        log.info("%s epoch %d%s dev UAS %.4f LAS %.4f", what, epoch, extra, uas, las)
        return uas
    return cb


def cmd_train(args) -> int:
    cfg = _config(args)
    train = _read(args.train)
    dev = _read(args.dev) if args.dev else None
    t0 = time.time()
    if args.parser == "graph":
        cb = _dev_logger(dev, lambda m, c: [m.parse(s) for s in c.sentences], "graph")
        model = train_margin(train, config=cfg.margin(), on_epoch=lambda e, m: cb(e, m))
    elif args.parser == "arceager":
        beam = cfg["arceager.beam"]
        cb = _dev_logger(dev, lambda m, c: [m.parse(s, beam=beam) for s in c.sentences], "arceager")
        model = train_early_update(train, config=cfg.early_update(), on_epoch=lambda e, m: cb(e, m))
    elif args.parser == "l2s":
        cb = _dev_logger(dev, lambda m, c: [m.parse(s) for s in c.sentences], "l2s")
        model = train_l2s(train, config=cfg.l2s(), on_epoch=lambda e, m: cb(e, m))
    else:
        target = cfg["biaff.target_uas"]
        cb = _dev_logger(dev, lambda m, c: parse_corpus(m, c), "biaff")

        def on_epoch(e, loss, m):
            uas = cb(e, m, loss)
            return uas is not None and uas >= target
        model = train_biaff(train, cfg.biaff(), on_epoch=on_epoch)
    _write_bytes(args.model, model_bytes(model))
    log.info("trained %s on %d sentences in %.1fs; model written to %s", args.parser, len(train.sentences),
             time.time() - t0, args.model)
    return 0


def cmd_parse(args) -> int:
    model = load_model_file(args.model)
    corpus = _read(args.input)
    trees = parse_sentences(model, corpus.sentences, args.jobs)
    for i, t in enumerate(trees):
        problems = validate_tree(t.heads)
        if problems:
            raise ValueError(f"sentence {i + 1}: parser produced an invalid tree ({problems[0]})")
    write_conll_file(Corpus(corpus.sentences, trees), args.output, which="predicted")
    log.info("parsed %d sentences into %s", len(trees), args.output)
    return 0


def cmd_eval(args) -> int:
    gold, pred = _read(args.gold), _read(args.pred)
    mu, ml = ev.micro_scores(gold, pred)
    Mu, Ml = ev.macro_scores(gold, pred)
    text = (f"micro_uas\t{mu:.6f}\nmicro_las\t{ml:.6f}\nmacro_uas\t{Mu:.6f}\nmacro_las\t{Ml:.6f}\n")
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_profile(args) -> int:
    cfg = _config(args)
    gold, pred = _read(args.gold), _read(args.pred)
    min_support = cfg["eval.min_support"] if args.min_support is None else args.min_support
    dims = args.by or list(cfg["eval.dimensions"])
    if len(dims) == 1 and args.out and not args.out.endswith("/") and not Path(args.out).is_dir():
        table = ev.bucket_report(gold, pred, dims[0], min_support)
        Path(args.out).write_text(table.to_csv(), encoding="utf-8")
        sys.stdout.write(table.to_csv())
        return 0
    sent_ms = min_support if args.min_support is not None else cfg["eval.sentlen_min_support"]
    summary = ev.profile(gold, {args.name: pred}, args.out, min_support, dims, sent_ms)
    for dim, table in summary["tables"][args.name].items():
        sys.stdout.write(f"# {dim}\n{table.to_csv()}")
    return 0


def cmd_selftrain(args) -> int:
    cfg = _config(args)
    dc = cfg.dcst()
    if args.tasks:
        dc.tasks = tuple(t.strip() for t in args.tasks.split(",") if t.strip())
    if args.freeze_aux is not None:
        dc.freeze_aux = args.freeze_aux
    dc.autolabeled_path = args.autolabeled
    labeled, unlabeled = _read(args.labeled), _read(args.unlabeled)
    result = self_train(labeled, unlabeled, dc)
    _write_bytes(args.model, result.model.to_bytes())
    log.info("self-training finished; final model written to %s", args.model)
    return 0


def cmd_permute(args) -> int:
    cfg = _config(args)
    corpus = _read(args.input)
    seed = cfg["seed"] if args.seed is None else args.seed
    seeds = np.random.default_rng(seed).integers(0, 2 ** 32, size=len(corpus.sentences))
    out = Corpus([permute_words(s, args.mode or cfg["permute.mode"], int(k)) for s, k in zip(corpus.sentences, seeds)])
    write_conll_file(out, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parselab", description="Dependency parsing lab")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a parser")
    t.add_argument("--parser", required=True, choices=["graph", "arceager", "l2s", "biaff"])
    t.add_argument("--train", required=True)
    t.add_argument("--dev")
    t.add_argument("--model", required=True)
    t.add_argument("--config")
    t.set_defaults(func=cmd_train)

    q = sub.add_parser("parse", help="parse a CoNLL file")
    q.add_argument("--model", required=True)
    q.add_argument("--input", required=True)
    q.add_argument("--output", required=True)
    q.add_argument("--jobs", type=int, default=1)
    q.set_defaults(func=cmd_parse)

    e = sub.add_parser("eval", help="micro/macro UAS and LAS")
    e.add_argument("--gold", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--out")
    e.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; scoring is single-pass")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("profile", help="bucketed precision/recall reports")
    f.add_argument("--gold", required=True)
    f.add_argument("--pred", required=True)
    f.add_argument("--by", action="append", choices=list(ev.DIMENSIONS) + list(ev.ALIASES))
    f.add_argument("--min-support", type=int)
    f.add_argument("--out", help="CSV file (single --by) or output directory")
    f.add_argument("--name", default="system", help="system name used in output file names")
    f.add_argument("--config")
    f.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; scoring is single-pass")
    f.set_defaults(func=cmd_profile)

    s = sub.add_parser("selftrain", help="deep contextualized self-training")
    s.add_argument("--labeled", required=True)
    s.add_argument("--unlabeled", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--tasks", help="comma list of children,rootdist,relpos")
    s.add_argument("--freeze-aux", dest="freeze_aux", action="store_true", default=None)
    s.add_argument("--no-freeze-aux", dest="freeze_aux", action="store_false")
    s.add_argument("--autolabeled", help="write the auto-labelled corpus here")
    s.add_argument("--config")
    s.set_defaults(func=cmd_selftrain)

    m = sub.add_parser("permute", help="seeded word-order permutation")
    m.add_argument("--input", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--seed", type=int)
    m.add_argument("--mode", choices=["seeded-shuffle", "identity"])
    m.add_argument("--config")
    m.set_defaults(func=cmd_permute)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except RUNTIME_ERRORS as e:
        print(f"parselab {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
