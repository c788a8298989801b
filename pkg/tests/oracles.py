"""Independent reference computations used as test oracles."""
import math

import numpy as np


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def naive_power(a, k):
    out = np.eye(a.shape[0])
    for _ in range(k):
        out = naive_matmul(out, a)
    return out


def naive_cosine(x):
    n = x.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            ni, nj = math.sqrt(sum(v * v for v in x[i])), math.sqrt(sum(v * v for v in x[j]))
            if ni > 0 and nj > 0:
                total += sum(x[i, c] * x[j, c] for c in range(x.shape[1])) / (ni * nj)
    return total / (n * (n - 1))


def random_stochastic(rng, n, positive=False):
    a = rng.random((n, n))
    if positive:
        a += 0.05
    return a / a.sum(axis=1, keepdims=True)


def _rms(v, gain, eps=1e-6):
    return v / math.sqrt(sum(t * t for t in v) / len(v) + eps) * gain


def _gelu(v):
    c = math.sqrt(2.0 / math.pi)
    return np.array([0.5 * t * (1.0 + math.tanh(c * (t + 0.044715 * t ** 3))) for t in v])


def reference_forward(p, cfg, tokens):
    """Per-sequence, per-head loop implementation of the toy model's logits."""
    d, h, dh, K = cfg.model_dim, cfg.heads, cfg.model_dim // cfg.heads, cfg.filter_order
    out = []
    for seq in np.asarray(tokens):
        n = len(seq)
        x = np.array([p["tok_emb"][t] + p["pos_emb"][i] for i, t in enumerate(seq)])
        for layer in range(cfg.layers):
            pre = f"layer{layer}."
            z = np.array([_rms(row, p[pre + "norm1"]) for row in x])
            q, k, v = z @ p[pre + "w_qry"], z @ p[pre + "w_key"], z @ p[pre + "w_val"]
            mixed = np.zeros((n, d))
            for head in range(h):
                cols = slice(head * dh, (head + 1) * dh)
                s = q[:, cols] @ k[:, cols].T / math.sqrt(dh)
                a = np.exp(s - s.max(axis=1, keepdims=True))
                a /= a.sum(axis=1, keepdims=True)
                if cfg.uses_gfsa(layer):
                    w0 = p["gfsa_w0"][layer, head]
                    w1 = p["gfsa_w1"][layer, head]
                    wk = p["gfsa_wk"][layer, head]
                    a2 = naive_matmul(a, a)
                    a = w0 * np.eye(n) + w1 * a + wk * (a + (K - 1) * (a2 - a))
                mixed[:, cols] = a @ v[:, cols]
            x = x + mixed
            z = np.array([_rms(row, p[pre + "norm2"]) for row in x])
            hidden = np.array([_gelu(row) for row in z @ p[pre + "ffn_w1"] + p[pre + "ffn_b1"]])
            x = x + hidden @ p[pre + "ffn_w2"] + p[pre + "ffn_b2"]
        z = np.array([_rms(row, p["norm_out"]) for row in x])
        out.append(z @ p["out_w"] + p["out_b"])
    return np.array(out)
