"""Loop-based reference transformer used as an independent oracle.

Deliberately structured unlike the library: per-example, per-head,
per-position loops, hard masking (excluded keys never enter the
softmax), float64 arithmetic. Only basic numpy dot products are shared.
"""

import math

import numpy as np


def ref_gelu(x):
    k = math.sqrt(2.0 / math.pi)
    return 0.5 * x * (1.0 + np.tanh(k * (x + 0.044715 * x**3)))


def ref_layer_norm(x, gamma, beta, eps=1e-12):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        row = x[i]
        mu = row.mean()
        var = ((row - mu) ** 2).mean()
        out[i] = (row - mu) / math.sqrt(var + eps) * gamma + beta
    return out


def ref_attention(p, prefix, q_in, kv_in, allowed, num_heads):
    """allowed[i, j] is True when query i may attend to key j."""
    lq, hidden = q_in.shape
    lk = kv_in.shape[0]
    dh = hidden // num_heads
    q = q_in @ p[f"{prefix}.wq"] + p[f"{prefix}.bq"]
    k = kv_in @ p[f"{prefix}.wk"] + p[f"{prefix}.bk"]
    v = kv_in @ p[f"{prefix}.wv"] + p[f"{prefix}.bv"]
    ctx = np.zeros((lq, hidden))
    for h in range(num_heads):
        cols = slice(h * dh, (h + 1) * dh)
        for i in range(lq):
            js = [j for j in range(lk) if allowed[i, j]]
            scores = [float(q[i, cols] @ k[j, cols]) / math.sqrt(dh) for j in js]
            mx = max(scores)
            exps = [math.exp(s - mx) for s in scores]
            z = sum(exps)
            for j, e in zip(js, exps):
                ctx[i, cols] += (e / z) * v[j, cols]
    return ctx @ p[f"{prefix}.wo"] + p[f"{prefix}.bo"]


def ref_ffn(p, prefix, x):
    return ref_gelu(x @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"]) @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]


def _params64(ckpt):
    return {k: v.data.astype(np.float64) for k, v in ckpt.params.items()}


def ref_encoder_hidden(ckpt, ids, mask, segment_ids=None):
    """Per-example encoder stack; returns (batch, length, hidden) float64."""
    cfg = ckpt.config
    p = _params64(ckpt)
    ids = np.atleast_2d(np.asarray(ids))
    mask = np.atleast_2d(np.asarray(mask))
    if segment_ids is None:
        segment_ids = np.zeros_like(ids)
    out = []
    for b in range(ids.shape[0]):
        length = ids.shape[1]
        h = p["emb.token"][ids[b]] + p["emb.pos"][:length] + p["emb.seg"][segment_ids[b]]
        allowed = np.tile(mask[b].astype(bool), (length, 1))
        for i in range(cfg.num_layers):
            attn = ref_attention(p, f"enc.{i}.attn", h, h, allowed, cfg.num_heads)
            h = ref_layer_norm(h + attn, p[f"enc.{i}.attn_ln.gamma"], p[f"enc.{i}.attn_ln.beta"])
            f = ref_ffn(p, f"enc.{i}.ffn", h)
            h = ref_layer_norm(h + f, p[f"enc.{i}.ffn_ln.gamma"], p[f"enc.{i}.ffn_ln.beta"])
        out.append(h)
    return np.stack(out)


def ref_decoder_logits(ckpt, target_ids, encoder_hidden, source_mask):
    """Per-example causal decoder; returns (batch, t_len, vocab) float64."""
    cfg = ckpt.config
    p = _params64(ckpt)
    target_ids = np.atleast_2d(np.asarray(target_ids))
    source_mask = np.atleast_2d(np.asarray(source_mask))
    encoder_hidden = np.asarray(encoder_hidden, dtype=np.float64)
    out = []
    for b in range(target_ids.shape[0]):
        t_len = target_ids.shape[1]
        s_len = source_mask.shape[1]
        h = p["dec.emb.token"][target_ids[b]] + p["dec.emb.pos"][:t_len]
        causal = np.tril(np.ones((t_len, t_len), dtype=bool))
        cross = np.tile(source_mask[b].astype(bool), (t_len, 1))
        assert cross.shape == (t_len, s_len)
        for i in range(cfg.decoder_layers):
            sa = ref_attention(p, f"dec.{i}.self_attn", h, h, causal, cfg.num_heads)
            h = ref_layer_norm(h + sa, p[f"dec.{i}.self_ln.gamma"], p[f"dec.{i}.self_ln.beta"])
            ca = ref_attention(p, f"dec.{i}.cross_attn", h, encoder_hidden[b], cross, cfg.num_heads)
            h = ref_layer_norm(h + ca, p[f"dec.{i}.cross_ln.gamma"], p[f"dec.{i}.cross_ln.beta"])
            f = ref_ffn(p, f"dec.{i}.ffn", h)
            h = ref_layer_norm(h + f, p[f"dec.{i}.ffn_ln.gamma"], p[f"dec.{i}.ffn_ln.beta"])
        out.append(h @ p["dec.out.w"] + p["dec.out.b"])
    return np.stack(out)
