"""Training loop (Adam over minibatches), evaluation, cross-validation,
and run reporting."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import autograd as ag
from . import corpus as cp
from . import dropout as do
from . import model as md
from . import metrics as mt
from . import tcol as tc


class Adam:
    """Bias-corrected Adam; moments shaped like their parameters."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError("parameter %d has no gradient; run backward first" % i)
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (g * g)
            mhat = self.m[i] / (1 - self.beta1**t)
            vhat = self.v[i] / (1 - self.beta2**t)
            p.data = p.data - (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


@dataclass
class EncodedSplit:
    tokens: np.ndarray  # (n, m) int64
    labels: np.ndarray  # (n,)


def encode_split(token_lists, labels, vocab, m):
    rows = [cp.pad_encode(toks, vocab, m) for toks in token_lists]
    return EncodedSplit(np.asarray(rows, dtype=np.int64), np.asarray(labels, dtype=np.int64))


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    train_f1: float
    test_loss: float
    test_acc: float
    test_f1: float


@dataclass
class RunReport:
    config_items: list
    seed: int
    epochs: list
    best_epoch: int
    fold: int = -1  # -1: plain train/test run
    wall_clock: float = 0.0  # manifest-only; never serialized into the report

    @property
    def final(self):
        return self.epochs[self.best_epoch - 1]


@dataclass
class CrossvalReport:
    config_items: list
    seed: int
    k: int
    folds: list  # RunReport per fold
    wall_clock: float = 0.0

    def aggregate(self):
        """Mean and sample standard deviation of the fold finals."""
        out = {}
        for name in ("test_acc", "test_f1"):
            vals = np.array([getattr(r.final, name) for r in self.folds], dtype=np.float64)
            out[name] = (float(vals.mean()), float(vals.std(ddof=1)))
        return out


def _batch_zeta(zeta_index, tokens):
    # (V, c) counts gathered per token -> (B, c, m)
    return np.ascontiguousarray(zeta_index[tokens].transpose(0, 2, 1))


def evaluate(params, config, split, zeta_index, batch_size=256):
    """Mean loss, accuracy, macro-F1 and the predictions, in eval mode."""
    n = split.labels.shape[0]
    preds = np.empty(n, dtype=np.int64)
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        tok = split.tokens[start : start + batch_size]
        lab = split.labels[start : start + batch_size]
        logits = md.forward(tok, _batch_zeta(zeta_index, tok), params, config, mode="eval")
        loss = ag.cross_entropy(logits, lab)
        loss_sum += float(loss.data) * lab.shape[0]
        preds[start : start + tok.shape[0]] = logits.data.argmax(axis=1)
    return (
        loss_sum / n,
        mt.accuracy(preds, split.labels),
        mt.macro_f1(preds, split.labels, config.n_classes),
        preds,
    )


def train(config, train_split, test_split, vocab, table, params=None):
    """Fit on the training split, evaluating both splits every epoch.

    The TCoL table must come from the training portion only.  Returns the
    report and the parameter state of the best epoch by test accuracy.
    """
    if train_split.labels.size == 0 or test_split.labels.size == 0:
        raise ValueError("train and test splits must be nonempty")
    t0 = time.perf_counter()
    if params is None:
        params = md.Parameters(config)
    zeta_index = table.index_matrix(vocab)
    sampler = do.DropoutSampler(config.dropout_spec())
    shuffle_rng = np.random.default_rng([config.seed, 1])
    opt = Adam(params.trainable(), lr=config.lr)
    n = train_split.labels.shape[0]
    stats = []
    best_epoch = 0
    best_acc = -1.0
    best_state = None
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            tok = train_split.tokens[idx]
            lab = train_split.labels[idx]
            opt.zero_grad()
            with ag.Tape() as tape:
                logits = md.forward(
                    tok, _batch_zeta(zeta_index, tok), params, config, mode="train", sampler=sampler
                )
                loss = ag.cross_entropy(logits, lab)
            tape.backward(loss)
            opt.step()
        tr_loss, tr_acc, tr_f1, _ = evaluate(params, config, train_split, zeta_index)
        te_loss, te_acc, te_f1, _ = evaluate(params, config, test_split, zeta_index)
        stats.append(EpochStats(epoch, tr_loss, tr_acc, tr_f1, te_loss, te_acc, te_f1))
        if te_acc > best_acc:
            best_acc = te_acc
            best_epoch = epoch
            best_state = params.state()
    report = RunReport(
        config_items=config.to_items(),
        seed=config.seed,
        epochs=stats,
        best_epoch=best_epoch,
        wall_clock=time.perf_counter() - t0,
    )
    return report, best_state, params


@dataclass
class FoldArtifacts:
    vocab: object
    table: object
    report: RunReport


def crossval_run(config, token_lists, labels, k):
    """k-fold cross-validation with fold-local vocabulary and TCoL."""
    if k < 2:
        raise ValueError("fold count must be >= 2")
    t0 = time.perf_counter()
    labels = np.asarray(labels, dtype=np.int64)
    plan = cp.make_folds(len(token_lists), k, config.seed)
    artifacts = []
    for fold in range(k):
        tr_idx, te_idx = plan.fold_indices(fold)
        tr_tokens = [token_lists[i] for i in tr_idx]
        te_tokens = [token_lists[i] for i in te_idx]
        vocab = cp.build_vocab(tr_tokens)
        m = config.sent_len or cp.resolve_sent_len(tr_tokens)
        fold_config = replace(config, vocab_size=vocab.size, sent_len=m)
        tr_split = encode_split(tr_tokens, labels[tr_idx], vocab, m)
        te_split = encode_split(te_tokens, labels[te_idx], vocab, m)
        table = tc.build_tcol(zip(tr_split.tokens, tr_split.labels), config.n_classes, vocab)
        report, _, _ = train(fold_config, tr_split, te_split, vocab, table)
        report.fold = fold
        artifacts.append(FoldArtifacts(vocab, table, report))
    return CrossvalReport(
        config_items=config.to_items(),
        seed=config.seed,
        k=k,
        folds=[a.report for a in artifacts],
        wall_clock=time.perf_counter() - t0,
    ), artifacts


# ---------------------------------------------------------------------------
# report serialization: key=value records, one per line, plus a curves CSV

def _fmt(x):
    return repr(float(x))


def report_lines(report):
    lines = ["run seed=%d best_epoch=%d" % (report.seed, report.best_epoch)]
    lines.append("config " + " ".join("%s=%s" % (k, v) for k, v in report.config_items))
    for s in report.epochs:
        lines.append(
            "epoch idx=%d train_loss=%s train_acc=%s train_f1=%s"
            " test_loss=%s test_acc=%s test_f1=%s"
            % (
                s.epoch,
                _fmt(s.train_loss),
                _fmt(s.train_acc),
                _fmt(s.train_f1),
                _fmt(s.test_loss),
                _fmt(s.test_acc),
                _fmt(s.test_f1),
            )
        )
    f = report.final
    lines.append(
        "final epoch=%d test_loss=%s test_acc=%s test_f1=%s"
        % (report.best_epoch, _fmt(f.test_loss), _fmt(f.test_acc), _fmt(f.test_f1))
    )
    return lines


def crossval_lines(cv):
    lines = ["run seed=%d folds=%d" % (cv.seed, cv.k)]
    lines.append("config " + " ".join("%s=%s" % (k, v) for k, v in cv.config_items))
    for r in cv.folds:
        f = r.final
        lines.append(
            "final fold=%d epoch=%d test_loss=%s test_acc=%s test_f1=%s"
            % (r.fold, r.best_epoch, _fmt(f.test_loss), _fmt(f.test_acc), _fmt(f.test_f1))
        )
    for name, (mean, std) in cv.aggregate().items():
        lines.append("aggregate metric=%s mean=%s std=%s" % (name, _fmt(mean), _fmt(std)))
    return lines


def write_report(report, path):
    lines = crossval_lines(report) if isinstance(report, CrossvalReport) else report_lines(report)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def curve_rows(report):
    """(epoch, split, loss, accuracy, f1) rows for one run."""
    rows = []
    for s in report.epochs:
        rows.append((s.epoch, "train", s.train_loss, s.train_acc, s.train_f1))
        rows.append((s.epoch, "test", s.test_loss, s.test_acc, s.test_f1))
    return rows


def write_curves(report, path):
    with open(path, "w", encoding="utf-8") as f:
        if isinstance(report, CrossvalReport):
            f.write("fold,epoch,split,loss,accuracy,f1\n")
            for r in report.folds:
                for epoch, split, loss, acc, f1 in curve_rows(r):
                    f.write(
                        "%d,%d,%s,%s,%s,%s\n"
                        % (r.fold, epoch, split, _fmt(loss), _fmt(acc), _fmt(f1))
                    )
        else:
            f.write("epoch,split,loss,accuracy,f1\n")
            for epoch, split, loss, acc, f1 in curve_rows(report):
                f.write("%d,%s,%s,%s,%s\n" % (epoch, split, _fmt(loss), _fmt(acc), _fmt(f1)))
