"""Mini-batch training with Adam, per-epoch history, and evaluation.

Seeds inside :func:`fit`: ``tcfg.seed`` shuffles batches, ``tcfg.seed + 1``
drives dropout masks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import PAD
from .corpus import ParallelCorpus, SplitResult
from .metrics import MetricsReport, confusion, report
from .models import Model, ModelConfig, Vocabs, encode_sources, encode_targets
from .numcore import make_rng, softmax_cross_entropy
from .textproc import StemRules, preprocess

log = logging.getLogger(__name__)


class TrainingError(ValueError):
    pass


class ShapeMismatch(TrainingError):
    pass


class EmptyTrainSet(TrainingError):
    pass


class EmptyDataset(TrainingError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    mask_pad: bool = False
    early_stopping: bool = False
    patience: int = 5
    clip_norm: float | None = 5.0
    # stop once train accuracy reaches this value (memorization runs)
    stop_at_accuracy: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, cfg: TrainConfig):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    for k, p in params.items():
        if grads[k].shape != p.shape or state.m[k].shape != p.shape:
            raise ShapeMismatch(f"{k}: param {p.shape}, grad {grads[k].shape}")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    corr1 = 1 - b1 ** state.t
    corr2 = 1 - b2 ** state.t
    for k, p in params.items():
        g = grads[k]
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (cfg.lr * (m / corr1) / (np.sqrt(v / corr2) + cfg.epsilon)).astype(p.dtype)
    return params, state


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for g in grads.values():
            g *= scale
    return norm


@dataclass(frozen=True)
class EncodedData:
    src: np.ndarray
    tgt: np.ndarray

    def __len__(self):
        return self.src.shape[0]

    def take(self, idx) -> "EncodedData":
        return EncodedData(self.src[idx], self.tgt[idx])


@dataclass(frozen=True)
class EncodedSplit:
    train: EncodedData
    validation: EncodedData


def encode_corpus(corpus: ParallelCorpus, vocabs: Vocabs, cfg: ModelConfig,
                  stem: StemRules | None = None) -> EncodedData:
    src_tok = [preprocess(s, stem) for s in corpus.sources()]
    tgt_tok = [preprocess(t, stem) for t in corpus.targets()]
    return EncodedData(encode_sources(cfg, vocabs.src, src_tok),
                       encode_targets(cfg, vocabs.tgt, tgt_tok))


def encode_split(split: SplitResult, vocabs: Vocabs, cfg: ModelConfig,
                 stem: StemRules | None = None) -> EncodedSplit:
    return EncodedSplit(encode_corpus(split.train, vocabs, cfg, stem),
                        encode_corpus(split.validation, vocabs, cfg, stem))


def scan(model: Model, data: EncodedData, mask_pad: bool = False, batch_size: int = 256):
    """One eval-mode pass: mean cross-entropy and argmax ids.

    Seq2seq predictions are teacher-forced, so positions line up with targets.
    """
    if len(data) == 0:
        raise EmptyDataset("nothing to evaluate")
    preds = []
    total, count = 0.0, 0
    for lo in range(0, len(data), batch_size):
        batch = data.take(slice(lo, lo + batch_size))
        logits = model.logits(batch.src, batch.tgt)
        preds.append(logits.argmax(axis=-1))
        mask = (batch.tgt != PAD) if mask_pad else None
        n = int(mask.sum()) if mask_pad else batch.tgt.size
        if n:
            total += softmax_cross_entropy(logits, batch.tgt, mask)[0] * n
            count += n
    if count == 0:
        raise EmptyDataset("every target position is padding")
    return total / count, np.concatenate(preds, axis=0)


def _metrics(model: Model, data: EncodedData, pred, mask_pad: bool) -> MetricsReport:
    keep = (data.tgt != PAD) if mask_pad else np.ones(data.tgt.shape, dtype=bool)
    return report(confusion(data.tgt[keep], pred[keep], model.config.vocab_tgt))


def evaluate(model: Model, data: EncodedData, mask_pad: bool = False) -> MetricsReport:
    _, pred = scan(model, data, mask_pad)
    return _metrics(model, data, pred, mask_pad)


def fit(model: Model, data: EncodedSplit, tcfg: TrainConfig,
        on_epoch: Callable[[EpochRecord], None] | None = None) -> list[EpochRecord]:
    train = data.train
    if len(train) == 0:
        raise EmptyTrainSet("training set is empty")
    shuffle_rng = make_rng(tcfg.seed)
    dropout_rng = make_rng(tcfg.seed + 1)
    params = model.params()
    state = AdamState.for_params(params)
    history: list[EpochRecord] = []
    best, stale = np.inf, 0
    for epoch in range(1, tcfg.epochs + 1):
        order = shuffle_rng.permutation(len(train))
        for lo in range(0, len(train), tcfg.batch_size):
            batch = train.take(order[lo:lo + tcfg.batch_size])
            _, _, grads = model.loss_and_grads(batch.src, batch.tgt, tcfg.mask_pad,
                                               train=True, rng=dropout_rng)
            if tcfg.clip_norm is not None:
                clip_global_norm(grads, tcfg.clip_norm)
            adam_step(params, grads, state, tcfg)
        rec = _epoch_record(model, data, tcfg.mask_pad, epoch)
        history.append(rec)
        log.info("epoch %d loss %.4f acc %.4f val_loss %.4f val_acc %.4f", *(
            rec.epoch, rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc))
        if on_epoch is not None:
            on_epoch(rec)
        if tcfg.stop_at_accuracy is not None and rec.train_acc >= tcfg.stop_at_accuracy:
            break
        if tcfg.early_stopping:
            if rec.val_loss < best:
                best, stale = rec.val_loss, 0
            else:
                stale += 1
                if stale >= tcfg.patience:
                    break
    return history


def _epoch_record(model: Model, data: EncodedSplit, mask_pad: bool, epoch: int) -> EpochRecord:
    train_loss, train_pred = scan(model, data.train, mask_pad)
    val_loss, val_pred = scan(model, data.validation, mask_pad)
    return EpochRecord(
        epoch=epoch,
        train_loss=train_loss,
        train_acc=_metrics(model, data.train, train_pred, mask_pad).accuracy,
        val_loss=val_loss,
        val_acc=_metrics(model, data.validation, val_pred, mask_pad).accuracy,
    )


def final_val_accuracy(history: Sequence[EpochRecord]) -> float:
    return history[-1].val_acc if history else float("nan")


def build_vocabs(corpus: ParallelCorpus, joint: bool, cap: int = 10000,
                 stem: StemRules | None = None) -> Vocabs:
    """Joint vocabulary over both sides, or one per side."""
    from .textproc import build_vocab

    src_tok = [preprocess(s, stem) for s in corpus.sources()]
    tgt_tok = [preprocess(t, stem) for t in corpus.targets()]
    if joint:
        v = build_vocab(src_tok + tgt_tok, cap)
        return Vocabs(v, v)
    return Vocabs(build_vocab(src_tok, cap), build_vocab(tgt_tok, cap))
