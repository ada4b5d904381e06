"""Straight-line reference implementations used as test oracles.

Everything here works on nested Python lists with explicit loops and
``math`` functions, independent of the numpy/autodiff code under test.
"""

from __future__ import annotations

import math


def matmul(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            s = 0.0
            for t in range(inner):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return out


def softmax_row(row):
    peak = max(row)
    exps = [math.exp(x - peak) for x in row]
    total = sum(exps)
    return [e / total for e in exps]


def attention(q, k, v):
    """softmax(q k^T / sqrt(d_k)) v for lists of rows."""
    d_k = len(q[0])
    out = []
    for qi in q:
        scores = [sum(a * b for a, b in zip(qi, kj)) / math.sqrt(d_k) for kj in k]
        w = softmax_row(scores)
        out.append([sum(w[j] * v[j][c] for j in range(len(v))) for c in range(len(v[0]))])
    return out


def mvsa(m, w_o, n_heads):
    d = len(m[0])
    d_k = d // n_heads
    heads = []
    for h in range(n_heads):
        part = [row[h * d_k : (h + 1) * d_k] for row in m]
        heads.append(attention(part, part, part))
    concat = [sum((heads[h][i] for h in range(n_heads)), []) for i in range(len(m))]
    return matmul(concat, w_o)


def view_block(x, valid, proj, w_o, n_heads, rows):
    """Project the first ``valid`` rows, attend among them, zero-pad to ``rows``."""
    d = len(w_o)
    if valid == 0:
        return [[0.0] * d for _ in range(rows)]
    live = matmul([list(r) for r in x[:valid]], proj)
    out = mvsa(live, w_o, n_heads)
    return out + [[0.0] * d for _ in range(rows - valid)]


def conv_relu_mean(x, kernels, bias):
    """Valid single-channel cross-correlation, ReLU, mean over positions."""
    h, w = len(x), len(x[0])
    pooled = []
    for c, k in enumerate(kernels):
        kh, kw = len(k), len(k[0])
        total, count = 0.0, 0
        for r in range(h - kh + 1):
            for s in range(w - kw + 1):
                acc = bias[c]
                for i in range(kh):
                    for j in range(kw):
                        acc += x[r + i][s + j] * k[i][j]
                total += max(acc, 0.0)
                count += 1
        pooled.append(total / count)
    return pooled


def head(x, kernels, bias, w1, b1, w2, b2):
    pooled = conv_relu_mean(x, kernels, bias)
    hidden = [max(sum(pooled[i] * w1[i][j] for i in range(len(pooled))) + b1[j], 0.0) for j in range(len(b1))]
    logit = sum(hidden[j] * w2[j][0] for j in range(len(hidden))) + b2[0]
    return 1.0 / (1.0 + math.exp(-logit))


def bce(p, y):
    return -(y * math.log(p) + (1 - y) * math.log(1 - p))


def metrics(tp, fp, tn, fn):
    """(accuracy, precision, recall, f1) with zero-division mapped to 0."""
    total = tp + fp + tn + fn
    acc = (tp + tn) / total if total else 0.0
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return acc, prec, rec, f1
