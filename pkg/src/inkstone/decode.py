"""Greedy and beam-search decoding for the seq2seq model.

Both strategies are written against a step function mapping the tokens
generated so far to a log-probability row, so tests can drive them with
synthetic distributions. Model-backed decoding encodes the source once
and re-runs the decoder prefix each step (quadratic but fine at desk
scale). BOS and PAD logits are suppressed, so a hypothesis can never
contain them; EOS terminates and is excluded from the returned body.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .model import Checkpoint, decoder_forward, encoder_forward
from .vocab import Vocab, decode as decode_ids, encode, tokenize

StepFn = Callable[[Sequence[int]], np.ndarray]


@dataclass
class DecodeConfig:
    strategy: str = "greedy"
    beam_size: int = 4
    max_decode_len: int = 64
    length_penalty: float = 0.0

    def validate(self) -> "DecodeConfig":
        if self.strategy not in ("greedy", "beam"):
            raise ConfigError(f"unknown decode strategy {self.strategy!r}")
        if self.beam_size < 1:
            raise ConfigError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.max_decode_len < 1:
            raise ConfigError(f"max_decode_len must be >= 1, got {self.max_decode_len}")
        if self.length_penalty < 0:
            raise ConfigError(f"length_penalty must be >= 0, got {self.length_penalty}")
        return self


def greedy_from_step(step_fn: StepFn, eos_id: int, max_len: int) -> list[int]:
    """Follow the argmax until EOS or the length cap; ties pick the lowest id."""
    out: list[int] = []
    for _ in range(max_len):
        logprobs = step_fn(out)
        token = int(np.argmax(logprobs))
        if token == eos_id:
            break
        out.append(token)
    return out


def _normalized(score: float, length: int, alpha: float) -> float:
    return score / (max(length, 1) ** alpha)


def beam_from_step(step_fn: StepFn, eos_id: int, max_len: int, beam_size: int,
                   alpha: float = 0.0) -> tuple[list[int], float]:
    """Beam search over the step function.

    A hypothesis retires when it selects EOS. The result is the finished
    hypothesis with the best length-normalized score (sum of token
    log-probs including EOS, divided by body length ** alpha), or the
    best unfinished one if nothing finished under the cap.
    """
    active: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[tuple[list[int], float]] = []
    for _ in range(max_len):
        candidates: list[tuple[float, list[int], int]] = []
        for tokens, score in active:
            logprobs = step_fn(tokens)
            for tok in range(len(logprobs)):
                candidates.append((score + float(logprobs[tok]), tokens, tok))
        # stable sort: equal scores fall back to hypothesis order, then token id
        candidates.sort(key=lambda c: -c[0])
        active = []
        for score, tokens, tok in candidates[:beam_size]:
            if tok == eos_id:
                finished.append((tokens, score))
            else:
                active.append((tokens + [tok], score))
        if not active:
            break
    pool = finished if finished else active
    best_tokens, best_score = max(
        pool, key=lambda item: _normalized(item[1], len(item[0]), alpha)
    )
    return list(best_tokens), _normalized(best_score, len(best_tokens), alpha)


def _model_step_fn(ckpt: Checkpoint, source_ids: np.ndarray,
                   source_mask: np.ndarray, vocab: Vocab) -> StepFn:
    if ckpt.config.decoder_layers < 1:
        raise ConfigError("decoding needs a seq2seq checkpoint (decoder_layers >= 1)")
    with T.no_grad():
        enc = encoder_forward(ckpt, source_ids[None, :], source_mask[None, :])
    enc_hidden = T.Tensor(enc.hidden.data)
    suppress = [vocab.cls_id, vocab.pad_id]
    bos = vocab.cls_id
    cap = ckpt.config.max_positions

    def step(prefix: Sequence[int]) -> np.ndarray:
        ids = np.array([[bos] + list(prefix)], dtype=np.int64)[:, :cap]
        with T.no_grad():
            logits = decoder_forward(ckpt, ids, enc_hidden, source_mask[None, :])
        row = logits.data[0, min(len(prefix), cap - 1)].astype(np.float64)
        row = row - row.max()
        logprobs = row - np.log(np.exp(row).sum())
        logprobs[suppress] = -np.inf
        return logprobs

    return step


def _encode_source(ckpt: Checkpoint, vocab: Vocab, source) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(source, str):
        source = tokenize(source)
    if isinstance(source, np.ndarray):
        ids = source.astype(np.int64)
        return ids, (ids != vocab.pad_id).astype(np.int64)
    return encode(source, vocab, ckpt.config.max_positions)


def greedy_decode(ckpt: Checkpoint, vocab: Vocab, source,
                  max_decode_len: int = 64) -> list[int]:
    """Greedy generation; returns body token ids without specials."""
    ids, mask = _encode_source(ckpt, vocab, source)
    step = _model_step_fn(ckpt, ids, mask, vocab)
    cap = min(max_decode_len, ckpt.config.max_positions - 1)
    return greedy_from_step(step, vocab.sep_id, cap)


def beam_search(ckpt: Checkpoint, vocab: Vocab, source,
                cfg: DecodeConfig) -> tuple[list[int], float]:
    """Beam generation; returns (body token ids, normalized score)."""
    cfg.validate()
    ids, mask = _encode_source(ckpt, vocab, source)
    step = _model_step_fn(ckpt, ids, mask, vocab)
    cap = min(cfg.max_decode_len, ckpt.config.max_positions - 1)
    return beam_from_step(step, vocab.sep_id, cap, cfg.beam_size, cfg.length_penalty)


def generate_text(ckpt: Checkpoint, vocab: Vocab, source: str,
                  cfg: DecodeConfig) -> str:
    cfg.validate()
    if cfg.strategy == "greedy":
        out = greedy_decode(ckpt, vocab, source, cfg.max_decode_len)
    else:
        out, _ = beam_search(ckpt, vocab, source, cfg)
    return decode_ids(np.array(out, dtype=np.int64), vocab) if out else ""


def decode_file(ckpt: Checkpoint, vocab: Vocab, input_path, output_path,
                cfg: DecodeConfig) -> int:
    """One generation per input line, order preserved; returns line count."""
    with open(input_path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    while lines and lines[-1] == "":
        lines.pop()
    outputs = [generate_text(ckpt, vocab, ln, cfg) for ln in lines]
    with open(output_path, "w", encoding="utf-8", newline="\n") as f:
        for out in outputs:
            f.write(out + "\n")
    return len(outputs)
