import math

import numpy as np
import pytest

from inkstone.decode import (
    DecodeConfig,
    beam_from_step,
    beam_search,
    decode_file,
    generate_text,
    greedy_decode,
    greedy_from_step,
)
from inkstone.errors import ConfigError
from inkstone.model import ModelConfig, build_model
from inkstone.vocab import SPECIAL_TOKENS, build_vocab


def table_step(table, vocab_size):
    """Step function from an explicit prefix -> logprob row mapping."""

    def step(prefix):
        return np.array(table[tuple(prefix)], dtype=np.float64)

    return step


def random_step(rng, vocab_size):
    """Random but self-consistent step function (cached per prefix)."""
    cache = {}

    def step(prefix):
        key = tuple(prefix)
        if key not in cache:
            logits = rng.standard_normal(vocab_size)
            cache[key] = logits - math.log(float(np.exp(logits).sum()))
        return cache[key]

    return step


def enumerate_best(step_fn, eos_id, max_len, vocab_size, alpha=0.0):
    """Score every EOS-terminated sequence with body length <= max_len - 1."""
    best = (-math.inf, None)

    def rec(prefix, score):
        nonlocal best
        logprobs = step_fn(prefix)
        done = score + float(logprobs[eos_id])
        norm = done / (max(len(prefix), 1) ** alpha)
        if norm > best[0]:
            best = (norm, list(prefix))
        if len(prefix) < max_len - 1:
            for tok in range(vocab_size):
                if tok != eos_id:
                    rec(prefix + [tok], score + float(logprobs[tok]))

    rec([], 0.0)
    return best[1], best[0]


class TestGreedyStep:
    def test_follows_argmax_until_eos(self):
        table = {
            (): [0.1, 0.7, 0.2],
            (1,): [0.1, 0.2, 0.7],
            (1, 2): [0.9, 0.05, 0.05],
        }
        assert greedy_from_step(table_step(table, 3), eos_id=0, max_len=10) == [1, 2]

    def test_tie_breaks_to_lowest_id(self):
        table = {(): [0.5, 0.5, 0.5]}
        # argmax tie: ids 0..2 all equal, and 0 is EOS here
        assert greedy_from_step(table_step(table, 3), eos_id=0, max_len=4) == []
        table = {(): [0.1, 0.5, 0.5], (1,): [0.9, 0.0, 0.0]}
        assert greedy_from_step(table_step(table, 3), eos_id=0, max_len=4) == [1]

    def test_length_cap(self):
        # EOS never preferred: body fills the cap exactly
        step = lambda prefix: np.array([-9.0, -0.1, -5.0])
        assert greedy_from_step(step, eos_id=0, max_len=3) == [1, 1, 1]

    def test_immediate_eos_gives_empty_body(self):
        step = lambda prefix: np.array([0.0, -1.0, -1.0])
        assert greedy_from_step(step, eos_id=0, max_len=5) == []


class TestBeamStep:
    def test_beam_one_equals_greedy(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            step = random_step(rng, 4)
            greedy = greedy_from_step(step, eos_id=0, max_len=5)
            tokens, _ = beam_from_step(step, eos_id=0, max_len=5, beam_size=1)
            assert tokens == greedy

    def test_exhaustive_beam_matches_enumeration(self):
        vocab_size, max_len = 3, 3
        rng = np.random.default_rng(7)
        width = vocab_size ** max_len
        for _ in range(100):
            step = random_step(rng, vocab_size)
            want_tokens, want_score = enumerate_best(step, 0, max_len, vocab_size)
            got_tokens, got_score = beam_from_step(step, 0, max_len, width)
            assert got_tokens == want_tokens
            assert got_score == pytest.approx(want_score, abs=1e-12)

    def test_exhaustive_beam_matches_enumeration_with_length_penalty(self):
        vocab_size, max_len, alpha = 3, 4, 0.8
        rng = np.random.default_rng(23)
        width = vocab_size ** max_len
        for _ in range(30):
            step = random_step(rng, vocab_size)
            want_tokens, want_score = enumerate_best(step, 0, max_len, vocab_size,
                                                     alpha=alpha)
            got_tokens, got_score = beam_from_step(step, 0, max_len, width,
                                                   alpha=alpha)
            assert got_tokens == want_tokens
            assert got_score == pytest.approx(want_score, abs=1e-12)

    def test_finished_preferred_over_longer_unfinished(self):
        # beam keeps the finished hypothesis even when an unfinished one
        # has a higher raw running score
        table = {
            (): [math.log(0.4), math.log(0.59), math.log(0.01)],
            (1,): [math.log(0.98), math.log(0.01), math.log(0.01)],
            (2,): [math.log(0.01), math.log(0.01), math.log(0.98)],
        }
        tokens, score = beam_from_step(table_step(table, 3), 0, max_len=2,
                                       beam_size=3)
        assert tokens == [1]
        assert score == pytest.approx(math.log(0.59) + math.log(0.98), abs=1e-12)

    def test_unfinished_returned_when_nothing_terminates(self):
        step = lambda prefix: np.array([-50.0, -0.5, -1.0])
        tokens, score = beam_from_step(step, 0, max_len=3, beam_size=2)
        assert tokens == [1, 1, 1]
        assert score == pytest.approx(-1.5, abs=1e-12)

    def test_deterministic(self):
        step = random_step(np.random.default_rng(3), 5)
        first = beam_from_step(step, 0, max_len=4, beam_size=3)
        again = beam_from_step(step, 0, max_len=4, beam_size=3)
        assert first == again


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            DecodeConfig(strategy="sample").validate()
        with pytest.raises(ConfigError):
            DecodeConfig(beam_size=0).validate()
        with pytest.raises(ConfigError):
            DecodeConfig(max_decode_len=0).validate()
        with pytest.raises(ConfigError):
            DecodeConfig(length_penalty=-0.5).validate()
        assert DecodeConfig().validate() is not None


@pytest.fixture(scope="module")
def tiny_seq2seq():
    chars = [chr(c) for c in range(0x4E00, 0x4E0C)]
    vocab = build_vocab(chars)
    cfg = ModelConfig(vocab_size=len(vocab), num_layers=1, hidden_size=16,
                      num_heads=2, ff_size=32, max_positions=12,
                      dropout_rate=0.0, decoder_layers=1)
    return build_model(cfg, init_seed=5), vocab


class TestModelDecode:
    def test_no_special_ids_in_output(self, tiny_seq2seq):
        ckpt, vocab = tiny_seq2seq
        out = greedy_decode(ckpt, vocab, "一丁丂", max_decode_len=6)
        assert len(out) <= 6
        assert not set(out) & vocab.special_ids

    def test_beam_one_matches_greedy_on_model(self, tiny_seq2seq):
        ckpt, vocab = tiny_seq2seq
        src = "七丅"
        greedy = greedy_decode(ckpt, vocab, src, max_decode_len=5)
        cfg = DecodeConfig(strategy="beam", beam_size=1, max_decode_len=5)
        tokens, _ = beam_search(ckpt, vocab, src, cfg)
        assert tokens == greedy

    def test_beam_output_avoids_specials(self, tiny_seq2seq):
        ckpt, vocab = tiny_seq2seq
        cfg = DecodeConfig(strategy="beam", beam_size=3, max_decode_len=5,
                           length_penalty=0.7)
        tokens, score = beam_search(ckpt, vocab, "丆万", cfg)
        assert not set(tokens) & vocab.special_ids
        assert np.isfinite(score)

    def test_generate_text_returns_plain_string(self, tiny_seq2seq):
        ckpt, vocab = tiny_seq2seq
        text = generate_text(ckpt, vocab, "一丁",
                             DecodeConfig(max_decode_len=4))
        assert isinstance(text, str)
        for special in SPECIAL_TOKENS:
            assert special not in text

    def test_encoder_only_checkpoint_rejected(self, tiny_seq2seq):
        _, vocab = tiny_seq2seq
        cfg = ModelConfig(vocab_size=len(vocab), num_layers=1, hidden_size=16,
                          num_heads=2, ff_size=32, max_positions=12,
                          dropout_rate=0.0)
        encoder_only = build_model(cfg, init_seed=1)
        with pytest.raises(ConfigError, match="seq2seq"):
            greedy_decode(encoder_only, vocab, "一")

    def test_decode_file_preserves_order(self, tiny_seq2seq, tmp_path):
        ckpt, vocab = tiny_seq2seq
        lines = ["一丁", "丂", "七丄丅"]
        src = tmp_path / "in.txt"
        src.write_text("\n".join(lines) + "\n\n", encoding="utf-8")
        out = tmp_path / "out.txt"
        cfg = DecodeConfig(max_decode_len=4)
        n = decode_file(ckpt, vocab, src, out, cfg)
        assert n == 3
        got = out.read_text(encoding="utf-8").splitlines()
        assert got == [generate_text(ckpt, vocab, ln, cfg) for ln in lines]
