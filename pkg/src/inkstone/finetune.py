"""Task fine-tuning: sentence classification and seq2seq generation.

The whole encoder is always trainable. Classification adds a linear
head over the pooled state and trains with a flat learning rate;
generation attaches a fresh decoder, trains teacher-forced with the
Noam schedule, and selects the epoch with the best dev metric (ties go
to the later epoch).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, DatasetError
from .corpus import ParallelExample
from .decode import greedy_decode
from .evaluate import bleu
from .model import (
    Checkpoint,
    cls_head,
    decoder_forward,
    encoder_forward,
    ensure_cls_head,
    init_seq2seq_from_encoder,
)
from .optim import AdamState, adam_step, collect_grads, noam_lr
from .vocab import Vocab, encode, tokenize


@dataclass
class ClsTaskConfig:
    num_classes: int = 2
    batch_size: int = 24
    learning_rate: float = 5e-5
    epochs: int = 5
    dropout: float = 0.1
    max_len: int = 512
    seed: int = 0

    def validate(self) -> "ClsTaskConfig":
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be at least 2, got {self.num_classes}")
        if min(self.batch_size, self.epochs) < 1 or self.learning_rate <= 0:
            raise ConfigError(f"invalid classifier config: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        return self


@dataclass
class Seq2SeqTaskConfig:
    task: str = "AMCT"
    batch_size: int = 30
    decoder_layers: int = 4
    warmup_steps: int = 4000
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    dropout: float = 0.1
    epochs: int = 10
    bleu_n: int = 4
    max_len: int = 512
    max_decode_len: int = 64
    seed: int = 0
    freeze_encoder: bool = False

    def validate(self) -> "Seq2SeqTaskConfig":
        if min(self.batch_size, self.decoder_layers, self.warmup_steps, self.epochs,
               self.bleu_n, self.max_decode_len) < 1:
            raise ConfigError(f"invalid seq2seq config: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        return self


# batch size, decoder depth, BLEU order per generation task
TASK_DEFAULTS: dict[str, dict] = {
    "AMCT": {"batch_size": 30, "decoder_layers": 4, "bleu_n": 4},
    "CPG22": {"batch_size": 80, "decoder_layers": 2, "bleu_n": 4},
    "CPG13": {"batch_size": 80, "decoder_layers": 2, "bleu_n": 4},
    "CCG": {"batch_size": 80, "decoder_layers": 4, "bleu_n": 2},
}
GENERATION_TASKS = tuple(TASK_DEFAULTS)
ALL_TASKS = ("PTC",) + GENERATION_TASKS


def resolve_task_config(task: str, **overrides):
    """Resolve per-task defaults into a config object."""
    if task == "PTC":
        return ClsTaskConfig(**overrides).validate()
    if task not in TASK_DEFAULTS:
        raise ConfigError(f"unknown task {task!r}, expected one of {ALL_TASKS}")
    merged = {"task": task, **TASK_DEFAULTS[task], **overrides}
    return Seq2SeqTaskConfig(**merged).validate()


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo : lo + batch_size]


def classify(ckpt: Checkpoint, vocab: Vocab, texts: Sequence[str],
             max_len: int = 512, batch_size: int = 32) -> list[int]:
    """Predicted class per text, eval mode."""
    max_len = min(max_len, ckpt.config.max_positions)
    preds: list[int] = []
    with T.no_grad():
        for lo in range(0, len(texts), batch_size):
            chunk = texts[lo : lo + batch_size]
            enc = [encode(tokenize(t), vocab, max_len) for t in chunk]
            ids = np.stack([e[0] for e in enc])
            mask = np.stack([e[1] for e in enc])
            out = encoder_forward(ckpt, ids, mask)
            logits = cls_head(ckpt, out.pooled).data
            preds.extend(int(i) for i in logits.argmax(axis=-1))
    return preds


def finetune_classifier(encoder_ckpt: Checkpoint, vocab: Vocab,
                        train_data: Sequence[tuple[str, int]],
                        dev_data: Sequence[tuple[str, int]],
                        cfg: ClsTaskConfig) -> tuple[Checkpoint, list[tuple]]:
    """Train encoder plus classifier head; return best-dev checkpoint.

    History rows are (epoch, mean train loss, dev accuracy).
    """
    cfg.validate()
    if not train_data or not dev_data:
        raise DatasetError("classification needs non-empty train and dev sets")
    for text, label in list(train_data) + list(dev_data):
        if not 0 <= label < cfg.num_classes:
            raise DatasetError(f"label {label} outside [0, {cfg.num_classes}) for {text!r}")

    ckpt = encoder_ckpt.copy()
    ckpt.config.dropout_rate = cfg.dropout
    ensure_cls_head(ckpt, cfg.num_classes, init_seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    max_len = min(cfg.max_len, ckpt.config.max_positions)

    encoded = [encode(tokenize(t), vocab, max_len) for t, _ in train_data]
    ids_all = np.stack([e[0] for e in encoded])
    mask_all = np.stack([e[1] for e in encoded])
    labels_all = np.array([lab for _, lab in train_data], dtype=np.int64)

    best = (-1.0, -1, None)
    history: list[tuple] = []
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in _batches(len(train_data), cfg.batch_size, rng):
            train_mode = cfg.dropout > 0.0
            out = encoder_forward(ckpt, ids_all[idx], mask_all[idx],
                                  train=train_mode, rng=rng)
            logits = cls_head(ckpt, out.pooled, train=train_mode, rng=rng)
            loss = T.cross_entropy_masked(logits, np.arange(idx.size), labels_all[idx])
            T.backward(loss)
            adam_step(ckpt.params, collect_grads(ckpt.params), state,
                      lr=cfg.learning_rate)
            losses.append(float(loss.data))
        preds = classify(ckpt, vocab, [t for t, _ in dev_data], max_len)
        dev_acc = float(np.mean([p == lab for p, (_, lab) in zip(preds, dev_data)]))
        history.append((epoch, float(np.mean(losses)), dev_acc))
        if dev_acc >= best[0]:
            best = (dev_acc, epoch, {k: v.data.copy() for k, v in ckpt.params.items()})
    assert best[2] is not None
    for name, data in best[2].items():
        ckpt.params[name].data = data
    ckpt.step = best[1]
    return ckpt, history


def _teacher_forced_batch(pairs: Sequence[ParallelExample], vocab: Vocab,
                          max_len: int):
    """Encode sources and build decoder inputs/labels with padding."""
    src = [encode(p.source, vocab, max_len) for p in pairs]
    src_ids = np.stack([s[0] for s in src])
    src_mask = np.stack([s[1] for s in src])
    tgt_tokens = [[vocab.id_of(t) for t in p.target] for p in pairs]
    t_max = max(len(t) for t in tgt_tokens) + 1
    dec_in = np.full((len(pairs), t_max), vocab.pad_id, dtype=np.int64)
    rows, cols, labels = [], [], []
    for i, toks in enumerate(tgt_tokens):
        dec_in[i, 0] = vocab.cls_id
        dec_in[i, 1 : 1 + len(toks)] = toks
        for j, lab in enumerate(toks + [vocab.sep_id]):
            rows.append(i)
            cols.append(j)
            labels.append(lab)
    return src_ids, src_mask, dec_in, np.array(rows), np.array(cols), np.array(labels)


def seq2seq_loss(ckpt: Checkpoint, vocab: Vocab, pairs: Sequence[ParallelExample],
                 max_len: int, train: bool = False, rng=None) -> T.Tensor:
    """Mean token NLL under teacher forcing; padding is excluded."""
    src_ids, src_mask, dec_in, rows, cols, labels = _teacher_forced_batch(
        pairs, vocab, max_len)
    enc = encoder_forward(ckpt, src_ids, src_mask, train=train, rng=rng)
    logits = decoder_forward(ckpt, dec_in, enc.hidden, src_mask, train=train, rng=rng)
    t_len = dec_in.shape[1]
    flat = T.reshape(logits, (len(pairs) * t_len, len(vocab)))
    return T.cross_entropy_masked(flat, rows * t_len + cols, labels)


def dev_bleu(ckpt: Checkpoint, vocab: Vocab, pairs: Sequence[ParallelExample],
             bleu_n: int, max_decode_len: int) -> float:
    """Corpus BLEU of greedy generations against the dev targets."""
    cands, refs = [], []
    for p in pairs:
        out = greedy_decode(ckpt, vocab, p.source, max_decode_len)
        cands.append([vocab.id_to_token[i] for i in out])
        refs.append(list(p.target.tokens))
    return bleu(cands, refs, max_n=bleu_n).score


def finetune_seq2seq(encoder_ckpt: Checkpoint, vocab: Vocab,
                     train_pairs: Sequence[ParallelExample],
                     dev_pairs: Sequence[ParallelExample],
                     cfg: Seq2SeqTaskConfig) -> tuple[Checkpoint, list[tuple]]:
    """Attach a decoder, train teacher-forced, return best-dev-BLEU epoch.

    History rows are (epoch, mean train loss, dev BLEU).
    """
    cfg.validate()
    if not train_pairs or not dev_pairs:
        raise DatasetError("seq2seq needs non-empty train and dev sets")
    max_len = min(cfg.max_len, encoder_ckpt.config.max_positions)
    budget = max_len - 2
    for p in list(train_pairs) + list(dev_pairs):
        if len(p.source) > budget or len(p.target) + 1 > max_len:
            raise DatasetError(
                f"example exceeds max_len {max_len}: source {len(p.source)}, "
                f"target {len(p.target)} tokens"
            )

    ckpt = init_seq2seq_from_encoder(encoder_ckpt, cfg.decoder_layers,
                                     init_seed=cfg.seed)
    ckpt.config.dropout_rate = cfg.dropout
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    d_model = ckpt.config.hidden_size
    trainable = dict(ckpt.params)
    if cfg.freeze_encoder:
        from .model import parameter_spec

        enc_names = set(parameter_spec(encoder_ckpt.config))
        trainable = {k: v for k, v in ckpt.params.items() if k not in enc_names}

    step = 0
    best = (-1.0, -1, None)
    history: list[tuple] = []
    pairs = list(train_pairs)
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in _batches(len(pairs), cfg.batch_size, rng):
            step += 1
            batch = [pairs[i] for i in idx]
            train_mode = cfg.dropout > 0.0
            loss = seq2seq_loss(ckpt, vocab, batch, max_len,
                                train=train_mode, rng=rng)
            T.backward(loss)
            grads = collect_grads(ckpt.params)
            grads = {k: g for k, g in grads.items() if k in trainable}
            adam_step(trainable, grads, state,
                      lr=noam_lr(step, cfg.warmup_steps, d_model),
                      beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
            losses.append(float(loss.data))
        score = dev_bleu(ckpt, vocab, dev_pairs, cfg.bleu_n, cfg.max_decode_len)
        history.append((epoch, float(np.mean(losses)), score))
        if score >= best[0]:
            best = (score, epoch, {k: v.data.copy() for k, v in ckpt.params.items()})
    assert best[2] is not None
    for name, data in best[2].items():
        ckpt.params[name].data = data
    ckpt.step = best[1]
    return ckpt, history


def run_task(task: str, encoder_ckpt: Checkpoint, vocab: Vocab, train_data,
             dev_data, out_dir=None, **overrides) -> tuple[Checkpoint, list[tuple]]:
    """Dispatch on task name with published defaults; optionally write a report."""
    cfg = resolve_task_config(task, **overrides)
    if task == "PTC":
        ckpt, history = finetune_classifier(encoder_ckpt, vocab, train_data,
                                            dev_data, cfg)
        metric = "dev_accuracy"
    else:
        ckpt, history = finetune_seq2seq(encoder_ckpt, vocab, train_data,
                                         dev_data, cfg)
        metric = "dev_bleu"
    if out_dir is not None:
        import pathlib

        out_dir = pathlib.Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "metrics.tsv", "w", encoding="utf-8", newline="\n") as f:
            f.write(f"epoch\ttrain_loss\t{metric}\n")
            for epoch, loss, score in history:
                f.write(f"{epoch}\t{loss:.6f}\t{score:.4f}\n")
    return ckpt, history
