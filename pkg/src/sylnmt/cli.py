"""Command-line entry point: ``sylnmt <subcommand> ...``.

Exit codes: 0 success, 1 runtime error, 2 usage error. Tables go to stdout,
logs and the effective seed to stderr. With ``--seed S`` the consumers are:
split S, model init S, batch shuffling S+1, dropout S+2.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .corpus import Direction, load_corpus, save_corpus, split_corpus, validate_corpus
from .gradsuite import TOLERANCE, run_suite
from .iohub import export_history, load_model, read_history, render_curves, save_model
from .metrics import format_table
from .models import (EmptyInput, ModelConfig, ModelKind, Vocabs, build_model,
                     translate_greedy)
from .textproc import StemRules, Vocab
from .training import EncodedSplit, TrainConfig, build_vocabs, encode_corpus, evaluate, fit

log = logging.getLogger("sylnmt")

MANIFEST = "manifest.json"
VOCAB_FILES = {"joint": "vocab.joint.tsv", "src": "vocab.src.tsv", "tgt": "vocab.tgt.tsv"}


def _default_seed() -> int:
    return int(os.environ.get("SYLNMT_SEED", "0"))


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (default: $SYLNMT_SEED or 0)")


def _add_arch(p):
    p.add_argument("--vocab", type=int, help="joint vocabulary size (lstm, bilstm)")
    p.add_argument("--vocab-src", type=int)
    p.add_argument("--vocab-tgt", type=int)
    p.add_argument("--max-len", type=int, help="source length (and target for transducers)")
    p.add_argument("--max-len-tgt", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--dropout", type=float)


def _arch_overrides(args) -> dict:
    out = {}
    for flag, field in (("vocab", "vocab_src"), ("vocab_src", "vocab_src"),
                        ("vocab_tgt", "vocab_tgt"), ("max_len", "max_len_src"),
                        ("max_len_tgt", "max_len_tgt"), ("embed_dim", "embed_dim"),
                        ("hidden_dim", "hidden_dim"), ("dropout", "dropout_rate")):
        v = getattr(args, flag, None)
        if v is not None:
            out[field] = v
    if getattr(args, "vocab", None) is not None:
        out["vocab_tgt"] = args.vocab
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sylnmt", description="Sylheti <-> Bangla NMT toolkit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate, split and build vocabularies")
    p.add_argument("--corpus", required=True, help="TSV with header bangla<TAB>sylheti")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--split", type=float, default=0.8, help="train fraction")
    p.add_argument("--direction", choices=[d.value for d in Direction],
                   default=Direction.SylhetiToBangla.value)
    p.add_argument("--stem", action="store_true", help="apply suffix stemming")
    p.add_argument("--cap", type=int, default=10000, help="vocabulary size cap")
    p.add_argument("--keep-duplicates", action="store_true")
    _add_seed(p)

    p = sub.add_parser("train", help="train a model on a prepared data directory")
    p.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, help="batch size (default 32, bilstm 64)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--mask-pad", action="store_true", help="exclude PAD from loss/accuracy")
    p.add_argument("--stop-at-accuracy", type=float)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--history", help="history CSV to write")
    _add_arch(p)
    _add_seed(p)

    p = sub.add_parser("evaluate", help="score a model on prepared data")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["validation", "train"], default="validation")
    p.add_argument("--mask-pad", action="store_true")
    _add_seed(p)

    p = sub.add_parser("translate", help="translate --text, or lines from stdin")
    p.add_argument("--model-file", required=True)
    p.add_argument("--text")
    _add_seed(p)

    p = sub.add_parser("params", help="per-layer parameter counts")
    p.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    _add_arch(p)
    _add_seed(p)

    p = sub.add_parser("grad-check", help="finite-difference check of every layer")
    p.add_argument("--seeds", type=int, default=10, help="seeds per layer")
    _add_seed(p)

    p = sub.add_parser("plot", help="render history CSVs to SVG")
    p.add_argument("--history", action="append", required=True, metavar="[NAME=]CSV")
    p.add_argument("--kind", choices=["accuracy", "loss", "bar"], default="accuracy")
    p.add_argument("--out", required=True)
    _add_seed(p)
    return ap


# subcommands ---------------------------------------------------------------

def cmd_prepare(args, out):
    direction = Direction(args.direction)
    corpus = load_corpus(args.corpus, direction=direction)
    rep = validate_corpus(corpus, dedup=not args.keep_duplicates)
    for f in rep.findings:
        log.warning("line %d: %s %s", f.line_no, f.kind, f.detail)
    cleaned = rep.cleaned
    split = split_corpus(cleaned, args.split, args.seed)
    stem = StemRules.default() if args.stem else None
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    save_corpus(cleaned, dest / "cleaned.tsv")
    save_corpus(split.train, dest / "train.tsv")
    save_corpus(split.validation, dest / "validation.tsv")
    joint = build_vocabs(split.train, joint=True, cap=args.cap, stem=stem)
    sep = build_vocabs(split.train, joint=False, cap=args.cap, stem=stem)
    joint.src.save(dest / VOCAB_FILES["joint"])
    sep.src.save(dest / VOCAB_FILES["src"])
    sep.tgt.save(dest / VOCAB_FILES["tgt"])
    manifest = {
        "direction": direction.value, "stem": bool(args.stem), "seed": args.seed,
        "ratio": args.split, "cap": args.cap, "pairs": len(cleaned),
        "train": len(split.train), "validation": len(split.validation),
        "findings": {"NonBengaliChar": rep.count("NonBengaliChar"),
                     "Duplicate": rep.count("Duplicate")},
    }
    (dest / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
    print(f"{'pairs':<12}{len(cleaned):>8}", file=out)
    print(f"{'train':<12}{len(split.train):>8}", file=out)
    print(f"{'validation':<12}{len(split.validation):>8}", file=out)
    print(f"{'vocab_joint':<12}{len(joint.src):>8}", file=out)
    print(f"{'vocab_src':<12}{len(sep.src):>8}", file=out)
    print(f"{'vocab_tgt':<12}{len(sep.tgt):>8}", file=out)
    return 0


def _load_prepared(data_dir, kind: ModelKind):
    d = Path(data_dir)
    manifest = json.loads((d / MANIFEST).read_text(encoding="utf-8"))
    direction = Direction(manifest["direction"])
    if kind is ModelKind.Seq2SeqC:
        vocabs = Vocabs(Vocab.load(d / VOCAB_FILES["src"]), Vocab.load(d / VOCAB_FILES["tgt"]))
    else:
        v = Vocab.load(d / VOCAB_FILES["joint"])
        vocabs = Vocabs(v, v)
    train = load_corpus(d / "train.tsv", direction=direction)
    val = load_corpus(d / "validation.tsv", direction=direction)
    stem = StemRules.default() if manifest.get("stem") else None
    return manifest, vocabs, train, val, stem


def cmd_train(args, out):
    kind = ModelKind(args.model)
    manifest, vocabs, train, val, stem = _load_prepared(args.data, kind)
    overrides = _arch_overrides(args)
    overrides.update(vocab_src=len(vocabs.src), vocab_tgt=len(vocabs.tgt))
    cfg = ModelConfig.default(kind, **overrides)
    batch = args.batch or (64 if kind is ModelKind.BiLstmB else 32)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=batch, lr=args.lr, seed=args.seed + 1,
                       mask_pad=args.mask_pad, stop_at_accuracy=args.stop_at_accuracy)
    model = build_model(cfg, args.seed)
    log.info("%s: %d parameters", kind.value, model.total_params)
    data = EncodedSplit(encode_corpus(train, vocabs, cfg, stem), encode_corpus(val, vocabs, cfg, stem))
    history = fit(model, data, tcfg)
    save_model(model, vocabs, args.out, {
        "direction": manifest["direction"], "stem": bool(manifest.get("stem")),
        "seed": args.seed, "epochs_run": len(history),
    })
    if args.history:
        export_history(history, args.history)
    last = history[-1]
    print(f"{'epoch':>6}{'loss':>10}{'acc':>10}{'val_loss':>10}{'val_acc':>10}", file=out)
    print(f"{last.epoch:>6}{last.train_loss:>10.4f}{last.train_acc:>10.4f}"
          f"{last.val_loss:>10.4f}{last.val_acc:>10.4f}", file=out)
    return 0


def cmd_evaluate(args, out):
    model, vocabs, meta = load_model(args.model_file)
    direction = Direction(meta.get("direction", Direction.SylhetiToBangla.value))
    d = Path(args.data)
    corpus = load_corpus(d / f"{args.split}.tsv", direction=direction)
    stem = StemRules.default() if meta.get("stem") else None
    data = encode_corpus(corpus, vocabs, model.config, stem)
    rep = evaluate(model, data, mask_pad=args.mask_pad)
    names = {ModelKind.LstmA: "LSTM", ModelKind.BiLstmB: "Bi-LSTM", ModelKind.Seq2SeqC: "Seq2Seq"}
    print(format_table({names[model.kind]: rep}), file=out)
    return 0


def cmd_translate(args, out, stdin=None):
    model, vocabs, meta = load_model(args.model_file)
    stem = StemRules.default() if meta.get("stem") else None
    if args.text is not None:
        print(translate_greedy(model, args.text, vocabs, stem), file=out)
        return 0
    stdin = stdin or sys.stdin
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            print(translate_greedy(model, line, vocabs, stem), file=out, flush=True)
        except EmptyInput:
            print("", file=out, flush=True)
    return 0


def cmd_params(args, out):
    kind = ModelKind(args.model)
    cfg = ModelConfig.default(kind, **_arch_overrides(args))
    model = build_model(cfg, args.seed)
    print(f"{'layer':<20}{'type':<12}{'params':>12}", file=out)
    for name, typ, n in model.summary():
        print(f"{name:<20}{typ:<12}{n:>12,}", file=out)
    print(f"{'total':<32}{model.total_params:>12,}", file=out)
    return 0


def cmd_grad_check(args, out):
    results = run_suite(range(args.seed, args.seed + args.seeds))
    worst: dict[str, float] = {}
    for r in results:
        worst[r.layer] = max(worst.get(r.layer, 0.0), r.report.max_rel_err)
    failed = {r.layer for r in results if not r.passed}
    print(f"{'layer':<16}{'seeds':>6}{'max_rel_err':>14}  status", file=out)
    for layer, err in worst.items():
        status = "FAIL" if layer in failed else "ok"
        print(f"{layer:<16}{args.seeds:>6}{err:>14.3e}  {status}", file=out)
    print(f"tolerance {TOLERANCE:g}", file=out)
    return 1 if failed else 0


def cmd_plot(args, out):
    histories = {}
    for spec in args.history:
        name, sep, path = spec.partition("=")
        if not sep:
            path, name = spec, Path(spec).stem
        histories[name] = read_history(path)
    render_curves(histories, args.kind, args.out)
    print(args.out, file=out)
    return 0


COMMANDS = {
    "prepare": cmd_prepare, "train": cmd_train, "evaluate": cmd_evaluate,
    "translate": cmd_translate, "params": cmd_params, "grad-check": cmd_grad_check,
    "plot": cmd_plot,
}


def run_cli(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(stream=err, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None:
        args.seed = _default_seed()
    print(f"seed={args.seed}", file=err)
    try:
        return COMMANDS[args.command](args, out)
    except KeyboardInterrupt:
        return 1
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=err)
        return 1


def main():
    sys.exit(run_cli())
