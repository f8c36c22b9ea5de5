"""Command-line harness: build-tcol, train, eval, gradcheck, dropout-sweep,
make-corpus.

Exit codes are stable across commands: 0 success, 1 check failure,
2 input or config error.  Every run writes a manifest naming its inputs and
outputs with content hashes, so a run can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time

import numpy as np

from dataclasses import replace

from . import corpus as cp
from . import gradcheck as gc
from . import model as md
from . import synthetic
from . import tcol as tc
from . import training as tr
from .kernels import BACKEND


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command, args_items, config=None, inputs=(), outputs=(), wall_clock=0.0):
    lines = ["command=%s" % command, "backend=%s" % BACKEND]
    lines.extend("arg.%s=%s" % (k, v) for k, v in args_items)
    if config is not None:
        lines.extend("config.%s=%s" % (k, v) for k, v in config.to_items())
    for name, p in inputs:
        lines.append("input.%s.path=%s" % (name, p))
        lines.append("input.%s.sha256=%s" % (name, _sha256(p)))
    for name, p in outputs:
        lines.append("output.%s.path=%s" % (name, p))
        lines.append("output.%s.sha256=%s" % (name, _sha256(p)))
    lines.append("wall_clock=%s" % wall_clock)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def read_config_file(path):
    items = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise md.ConfigError("%s: line %d is not key=value" % (path, lineno))
            key, val = line.split("=", 1)
            items.append((key.strip(), val.strip()))
    return items


_FLAG_KEYS = (
    "extractor",
    "epsilon",
    "dropout",
    "beta",
    "c_sup",
    "seed",
    "embed_dim",
    "sent_len",
    "filters_per_window",
    "hidden_dim",
    "head_depth",
    "lr",
    "epochs",
    "batch_size",
)


def resolve_config(args):
    """Config file first, then command-line overrides."""
    items = {}
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config):
            items[k] = v
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            items[key] = val
    if getattr(args, "filter_windows", None):
        items["filter_windows"] = args.filter_windows
    if getattr(args, "no_gi", False):
        items["epsilon"] = 0.0
    if getattr(args, "freeze_embeddings", False):
        items["freeze_embeddings"] = True
    return md.config_from_items(sorted(items.items()))


def _add_config_flags(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--extractor", choices=("cnn", "lstm"))
    p.add_argument("--epsilon", type=float, help="valve half-width in [0, 0.5]")
    p.add_argument("--no-gi", action="store_true", help="shorthand for --epsilon 0")
    p.add_argument("--dropout", choices=("vanilla", "leaky", "none"))
    p.add_argument("--beta", type=float, help="drop rate")
    p.add_argument("--c-sup", dest="c_sup", type=float, help="leaky suppression constant")
    p.add_argument("--seed", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--sent-len", dest="sent_len", type=int)
    p.add_argument("--filter-windows", dest="filter_windows", help="e.g. 3,4,5")
    p.add_argument("--filters-per-window", dest="filters_per_window", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--head-depth", dest="head_depth", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--embedding-file", dest="embedding_file", help="word v1..vk text file")
    p.add_argument("--freeze-embeddings", dest="freeze_embeddings", action="store_true")


def _load_corpus(path):
    records = cp.ingest(path)
    classes = cp.class_indices(records)
    token_lists = [cp.tokenize(text) for _, text in records]
    labels = [classes[lab] for lab, _ in records]
    return token_lists, labels, sorted(classes)


def cmd_build_tcol(args):
    t0 = time.perf_counter()
    token_lists, labels, class_names = _load_corpus(args.data)
    vocab = cp.build_vocab(token_lists)
    m = args.sent_len or cp.resolve_sent_len(token_lists)
    encoded = [cp.pad_encode(toks, vocab, m) for toks in token_lists]
    table = tc.build_tcol(zip(encoded, labels), len(class_names), vocab)
    os.makedirs(args.out_dir, exist_ok=True)
    vocab_path = os.path.join(args.out_dir, "vocab.tsv")
    tcol_path = os.path.join(args.out_dir, "tcol.tsv")
    vocab.save(vocab_path)
    tc.save_tcol(table, tcol_path)
    write_manifest(
        os.path.join(args.out_dir, "manifest.txt"),
        "build-tcol",
        [("data", args.data), ("sent_len", m)],
        inputs=[("data", args.data)],
        outputs=[("vocab", vocab_path), ("tcol", tcol_path)],
        wall_clock=time.perf_counter() - t0,
    )
    print("wrote %s (%d words, %d classes) and %s" % (tcol_path, len(table.counts), len(class_names), vocab_path))
    return 0


def _split_holdout(token_lists, labels, fraction, seed):
    n = len(token_lists)
    n_test = max(1, int(round(n * fraction)))
    if n_test >= n:
        raise md.ConfigError("holdout fraction %r leaves no training data" % (fraction,))
    order = np.random.default_rng([seed, 99]).permutation(n)
    te = set(order[:n_test].tolist())
    tr_idx = [i for i in range(n) if i not in te]
    te_idx = [i for i in range(n) if i in te]
    return tr_idx, te_idx


def cmd_train(args):
    t0 = time.perf_counter()
    config = resolve_config(args)
    token_lists, labels, class_names = _load_corpus(args.data)
    os.makedirs(args.out_dir, exist_ok=True)
    inputs = [("data", args.data)]
    outputs = []
    if args.folds:
        config = replace(config, n_classes=len(class_names))
        cv, _ = tr.crossval_run(config, token_lists, labels, args.folds)
        report_path = os.path.join(args.out_dir, "report.txt")
        curves_path = os.path.join(args.out_dir, "curves.csv")
        tr.write_report(cv, report_path)
        tr.write_curves(cv, curves_path)
        outputs += [("report", report_path), ("curves", curves_path)]
        agg = cv.aggregate()
        for name, (mean, std) in agg.items():
            print("%s mean=%.4f std=%.4f over %d folds" % (name, mean, std, cv.k))
    else:
        if args.test:
            tr_tokens, tr_labels = token_lists, labels
            te_records = cp.ingest(args.test)
            te_classes = sorted({lab for lab, _ in te_records})
            if not set(te_classes) <= set(class_names):
                raise cp.CorpusError(
                    "test labels %r not a subset of training labels %r" % (te_classes, class_names)
                )
            name_to_idx = {name: i for i, name in enumerate(class_names)}
            te_tokens = [cp.tokenize(text) for _, text in te_records]
            te_labels = [name_to_idx[lab] for lab, _ in te_records]
            inputs.append(("test", args.test))
        else:
            tr_i, te_i = _split_holdout(token_lists, labels, args.holdout, config.seed)
            tr_tokens = [token_lists[i] for i in tr_i]
            tr_labels = [labels[i] for i in tr_i]
            te_tokens = [token_lists[i] for i in te_i]
            te_labels = [labels[i] for i in te_i]
        vocab = cp.build_vocab(tr_tokens)
        m = config.sent_len or cp.resolve_sent_len(tr_tokens)
        config = replace(
            config, vocab_size=vocab.size, sent_len=m, n_classes=len(class_names)
        )
        tr_split = tr.encode_split(tr_tokens, tr_labels, vocab, m)
        te_split = tr.encode_split(te_tokens, te_labels, vocab, m)
        table = tc.build_tcol(zip(tr_split.tokens, tr_split.labels), config.n_classes, vocab)
        vocab_path = os.path.join(args.out_dir, "vocab.tsv")
        tcol_path = os.path.join(args.out_dir, "tcol.tsv")
        vocab.save(vocab_path)
        tc.save_tcol(table, tcol_path)
        params = md.Parameters(config)
        if args.embedding_file:
            md.apply_pretrained_embeddings(params, vocab, args.embedding_file)
            inputs.append(("embeddings", args.embedding_file))
        report, best_state, params = tr.train(config, tr_split, te_split, vocab, table, params)
        params.load_state(best_state)
        ckpt_path = os.path.join(args.out_dir, "checkpoint.bin")
        md.save_checkpoint(
            ckpt_path,
            params,
            extra_items=[
                ("classes", ",".join(class_names)),
                ("vocab_sha256", _sha256(vocab_path)),
                ("tcol_sha256", _sha256(tcol_path)),
            ],
        )
        report_path = os.path.join(args.out_dir, "report.txt")
        curves_path = os.path.join(args.out_dir, "curves.csv")
        tr.write_report(report, report_path)
        tr.write_curves(report, curves_path)
        outputs += [
            ("vocab", vocab_path),
            ("tcol", tcol_path),
            ("checkpoint", ckpt_path),
            ("report", report_path),
            ("curves", curves_path),
        ]
        f = report.final
        print(
            "best epoch %d: test_acc=%.4f test_f1=%.4f (%s backend)"
            % (report.best_epoch, f.test_acc, f.test_f1, BACKEND)
        )
    write_manifest(
        os.path.join(args.out_dir, "manifest.txt"),
        "train",
        [("data", args.data), ("folds", args.folds or 0), ("seed", config.seed)],
        config=config,
        inputs=inputs,
        outputs=outputs,
        wall_clock=time.perf_counter() - t0,
    )
    return 0


def cmd_eval(args):
    params, extra = md.load_checkpoint(args.checkpoint)
    config = params.config
    for name, path in (("vocab_sha256", args.vocab), ("tcol_sha256", args.tcol)):
        want = extra.get(name)
        if want is None:
            raise md.CheckpointError("%s: checkpoint lacks %s" % (args.checkpoint, name))
        got = _sha256(path)
        if got != want:
            raise md.CheckpointError(
                "%s does not match the checkpoint's %s (%s != %s)" % (path, name, got, want)
            )
    vocab = cp.Vocab.load(args.vocab)
    table = tc.load_tcol(args.tcol)
    class_names = extra.get("classes", "").split(",")
    if len(class_names) != config.n_classes:
        raise md.CheckpointError("%s: class list does not match n_classes" % (args.checkpoint,))
    records = cp.ingest(args.data)
    name_to_idx = {name: i for i, name in enumerate(class_names)}
    try:
        labels = [name_to_idx[lab] for lab, _ in records]
    except KeyError as e:
        raise cp.CorpusError("%s: label %s not in checkpoint classes" % (args.data, e)) from None
    token_lists = [cp.tokenize(text) for _, text in records]
    split = tr.encode_split(token_lists, labels, vocab, config.sent_len)
    zeta_index = table.index_matrix(vocab)
    loss, acc, f1, _ = tr.evaluate(params, config, split, zeta_index)
    print("loss=%s accuracy=%s macro_f1=%s" % (repr(loss), repr(acc), repr(f1)))
    return 0


def cmd_gradcheck(args):
    results = gc.run_all(args.seed)
    worst = 0.0
    failed = []
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print("%-22s max_rel=%.3e max_abs=%.3e %s" % (r.name, r.max_rel_err, r.max_abs_err, status))
        worst = max(worst, r.max_rel_err)
        if not r.ok:
            failed.append(r.name)
    if failed:
        print("FAILED: %s" % ", ".join(failed))
        return 1
    print("all %d gradient checks passed (worst relative error %.3e)" % (len(results), worst))
    return 0


def cmd_dropout_sweep(args):
    t0 = time.perf_counter()
    config = resolve_config(args)
    token_lists, labels, class_names = _load_corpus(args.data)
    tr_i, te_i = _split_holdout(token_lists, labels, args.holdout, config.seed)
    tr_tokens = [token_lists[i] for i in tr_i]
    tr_labels = [labels[i] for i in tr_i]
    te_tokens = [token_lists[i] for i in te_i]
    te_labels = [labels[i] for i in te_i]
    vocab = cp.build_vocab(tr_tokens)
    m = config.sent_len or cp.resolve_sent_len(tr_tokens)
    tr_split = tr.encode_split(tr_tokens, tr_labels, vocab, m)
    te_split = tr.encode_split(te_tokens, te_labels, vocab, m)
    table = tc.build_tcol(zip(tr_split.tokens, tr_split.labels), len(class_names), vocab)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    c_list = [float(c) for c in args.c_list.split(",") if c.strip()]
    cells = []
    for kind in kinds:
        if kind == "leaky":
            cells.extend(("leaky", c) for c in c_list)
        else:
            cells.append((kind, None))
    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("kind,c_sup,epoch,split,loss,accuracy,f1\n")
        for kind, c_sup in cells:
            cell_config = replace(
                config,
                dropout=kind,
                c_sup=c_sup if c_sup is not None else config.c_sup,
                vocab_size=vocab.size,
                sent_len=m,
                n_classes=len(class_names),
            )
            report, _, _ = tr.train(cell_config, tr_split, te_split, vocab, table)
            key = "" if c_sup is None else ("%g" % c_sup)
            for epoch, split, loss, acc, f1 in tr.curve_rows(report):
                f.write(
                    "%s,%s,%d,%s,%s,%s,%s\n"
                    % (kind, key, epoch, split, repr(loss), repr(acc), repr(f1))
                )
            print("cell kind=%s c_sup=%s best_test_acc=%.4f" % (kind, key or "-", report.final.test_acc))
    write_manifest(
        os.path.join(args.out_dir, "manifest.txt"),
        "dropout-sweep",
        [("data", args.data), ("kinds", args.kinds), ("c_list", args.c_list)],
        config=config,
        inputs=[("data", args.data)],
        outputs=[("sweep", csv_path)],
        wall_clock=time.perf_counter() - t0,
    )
    return 0


def cmd_make_corpus(args):
    records = synthetic.generate(n=args.n, seed=args.seed)
    synthetic.write_tsv(records, args.out)
    print("wrote %d synthetic examples to %s" % (len(records), args.out))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="agagi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-tcol", help="persist the label-count table of a corpus")
    p.add_argument("data", help="label<TAB>text TSV file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sent-len", dest="sent_len", type=int)
    p.set_defaults(fn=cmd_build_tcol)

    p = sub.add_parser("train", help="train once or run cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--test", help="separate test TSV; default is a seeded holdout")
    p.add_argument("--folds", type=int, help="k-fold cross-validation instead of one split")
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a TSV corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--tcol", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward rule")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("dropout-sweep", help="train one cell per dropout kind and constant")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kinds", default="vanilla,leaky,none")
    p.add_argument("--c-list", dest="c_list", default="10,500,1000,10000")
    p.add_argument("--holdout", type=float, default=0.1)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_dropout_sweep)

    p = sub.add_parser("make-corpus", help="write the bundled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_make_corpus)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (md.ConfigError, md.CheckpointError, cp.CorpusError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print("error: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
