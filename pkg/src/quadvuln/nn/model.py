"""Quad multi-view self-attention classifier.

Data path for a batch of snippets::

    AST, CFG, DFG adjacency (padded to L_v x L_v) --P_v--> L_v x d --MVSA_v--+
    token embeddings (T_max x width) -------------P_css--> T_max x d --MVSA--+--> fuse
    fuse --> conv (valid) --> ReLU --> global average pool --> MLP --> sigmoid

Each MVSA splits its input columns into ``n_heads`` contiguous slices,
runs scaled dot-product self-attention on each slice (the slice is query,
key and value at once), concatenates the heads and multiplies by W_o.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from quadvuln.embedding import sinusoidal_positions
from quadvuln.errors import ConfigError, NumericError
from quadvuln.nn import tensor as T
from quadvuln.nn.tensor import Tensor, as_tensor

VIEWS = ("ast", "cfg", "dfg", "css")
FUSION_MODES = ("rows", "sum", "cols")
PROVIDERS = ("learned", "file")


@dataclass(frozen=True)
class Architecture:
    """Everything that fixes parameter shapes; stored in checkpoint headers."""

    d: int = 64
    n_heads: int = 4
    t_max: int = 512
    l_ast: int = 256
    l_cfg: int = 64
    l_dfg: int = 64
    css_width: int = 64
    vocab_size: int = 0  # 0 when embeddings come from files
    conv_kernels: int = 8
    kernel_h: int = 3
    kernel_w: int = 3
    mlp_hidden: int = 32
    fusion: str = "rows"
    learned_qkv: bool = False
    positional: bool = False

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, int) and not isinstance(v, bool) and f.name != "vocab_size" and v < 1:
                raise ConfigError(f"{f.name} must be positive, got {v}")
        if self.d % self.n_heads:
            raise ConfigError(f"d={self.d} is not divisible by n_heads={self.n_heads}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        h, w = self.fused_shape
        if self.kernel_h > h or self.kernel_w > w:
            raise ConfigError(f"conv kernel {self.kernel_h}x{self.kernel_w} larger than fused matrix {h}x{w}")

    @property
    def d_k(self) -> int:
        return self.d // self.n_heads

    def view_rows(self, view: str) -> int:
        return {"ast": self.l_ast, "cfg": self.l_cfg, "dfg": self.l_dfg, "css": self.t_max}[view]

    def view_width(self, view: str) -> int:
        return self.css_width if view == "css" else self.view_rows(view)

    @property
    def fused_shape(self) -> tuple[int, int]:
        rows = [self.view_rows(v) for v in VIEWS]
        if self.fusion == "rows":
            return sum(rows), self.d
        if self.fusion == "sum":
            return max(rows), self.d
        return max(rows), 4 * self.d

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Trainable tensors in their fixed serialization order."""
        shapes: list[tuple[str, tuple[int, ...]]] = []
        if self.vocab_size:
            shapes.append(("embedding", (self.vocab_size, self.css_width)))
        for v in VIEWS:
            shapes.append((f"{v}.proj", (self.view_width(v), self.d)))
            if self.learned_qkv:
                for m in ("w_q", "w_k", "w_v"):
                    shapes.append((f"{v}.{m}", (self.d, self.d)))
            shapes.append((f"{v}.w_o", (self.d, self.d)))
        shapes += [
            ("conv.kernels", (self.conv_kernels, self.kernel_h, self.kernel_w)),
            ("conv.bias", (self.conv_kernels,)),
            ("mlp.w1", (self.conv_kernels, self.mlp_hidden)),
            ("mlp.b1", (self.mlp_hidden,)),
            ("mlp.w2", (self.mlp_hidden, 1)),
            ("mlp.b2", (1,)),
        ]
        return shapes

    def parameter_count(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.param_shapes())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(arch: Architecture, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    for name, shape in arch.param_shapes():
        if name == "embedding":
            params[name] = rng.normal(0.0, 0.02, size=shape)
        elif name == "conv.kernels":
            fan_in = shape[1] * shape[2]
            params[name] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
        elif name == "mlp.w1":
            params[name] = rng.normal(0.0, math.sqrt(2.0 / shape[0]), size=shape)
        elif len(shape) == 2:
            params[name] = _glorot(rng, shape[0], shape[1], shape)
        else:
            params[name] = np.zeros(shape)
    return params


# -- batched inputs -------------------------------------------------------------


@dataclass
class ViewInput:
    features: np.ndarray  # (B, L, width) rows; zero beyond each sample's valid length
    valid: np.ndarray  # (B,) number of real rows


@dataclass
class Batch:
    ast: ViewInput
    cfg: ViewInput
    dfg: ViewInput
    css: ViewInput | None = None  # dense CSS rows (file provider)
    css_ids: np.ndarray | None = None  # (B, T) token ids (learned provider)
    css_valid: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.ast.features.shape[0]


@dataclass(frozen=True)
class ViewMask:
    ast: bool = True
    cfg: bool = True
    dfg: bool = True
    css: bool = True

    def __post_init__(self) -> None:
        if not any((self.ast, self.cfg, self.dfg, self.css)):
            raise ConfigError("at least one view must stay enabled")

    def enabled(self, view: str) -> bool:
        return getattr(self, view)


FULL = ViewMask()


# -- attention --------------------------------------------------------------------


def canonical_row_order(arrays: Sequence[np.ndarray], mask: np.ndarray) -> np.ndarray:
    """Per-sample permutation that sorts rows by (valid flag, row contents).

    Running attention on rows in this order makes the floating-point
    reduction order depend only on row contents, never on row positions.
    """
    cols = [mask.astype(np.float64)[..., None]] + [np.broadcast_to(a, mask.shape + a.shape[-1:]) for a in arrays]
    stacked = np.concatenate(cols, axis=-1)  # (..., L, K)
    keys = np.moveaxis(stacked, -1, 0)[::-1]  # lexsort treats the last key as primary
    return np.lexsort(keys, axis=-1)


def attention_head(q, k, v, d_k: int, mask: np.ndarray | None = None) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V over the last two axes.

    ``mask`` marks valid rows (shape ``(..., L)``). Padding rows are
    excluded as keys and their own output rows are zero. Rows are
    processed in a content-determined order and scattered back, so
    permuting the input rows permutes the output rows bit for bit.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if d_k <= 0:
        raise ValueError(f"d_k must be positive, got {d_k}")
    if not (q.shape == k.shape == v.shape):
        raise ValueError(f"Q, K, V shapes differ: {q.shape}, {k.shape}, {v.shape}")
    valid = np.ones(q.shape[:-1], dtype=bool) if mask is None else np.broadcast_to(np.asarray(mask, dtype=bool), q.shape[:-1])
    distinct = [q] + [t for t in (k, v) if t is not q]
    order = canonical_row_order([t.data for t in distinct], valid)
    sorted_rows = {id(t): T.permute_rows(t, order) for t in distinct}
    qs, ks, vs = (sorted_rows[id(t)] for t in (q, k, v))
    valid_sorted = np.take_along_axis(valid, order, axis=-1)

    scores = T.scale(T.matmul(qs, T.transpose(ks)), 1.0 / math.sqrt(d_k))
    weights = T.masked_softmax(scores, valid_sorted[..., None, :])
    out = T.mul(T.matmul(weights, vs), valid_sorted[..., :, None].astype(np.float64))
    return T.permute_rows(out, np.argsort(order, axis=-1))


def mvsa(
    m,
    w_o,
    n_heads: int,
    mask: np.ndarray | None = None,
    qkv: tuple | None = None,
) -> Tensor:
    """Multi-view self-attention: per-slice heads, concat, times W_o."""
    m = as_tensor(m)
    d = m.shape[-1]
    if d % n_heads:
        raise ValueError(f"width {d} is not divisible by {n_heads} heads")
    d_k = d // n_heads
    if qkv is not None:
        q, k, v = (T.matmul(m, w) for w in qkv)
    heads = []
    for i in range(n_heads):
        cols = (Ellipsis, slice(i * d_k, (i + 1) * d_k))
        if qkv is None:
            part = T.take(m, cols)
            heads.append(attention_head(part, part, part, d_k, mask))
        else:
            heads.append(attention_head(T.take(q, cols), T.take(k, cols), T.take(v, cols), d_k, mask))
    h = heads[0] if n_heads == 1 else T.concat(heads, axis=-1)
    return T.matmul(h, w_o)


def _view_block(view: str, x: Tensor, valid: np.ndarray, params: dict[str, Tensor], arch: Architecture) -> Tensor:
    """Project one view to width d and run its MVSA on the non-padding prefix."""
    rows = x.shape[1]
    live = int(valid.max()) if valid.size else 0
    if live == 0:
        return Tensor(np.zeros((x.shape[0], rows, arch.d)))
    mask = np.arange(live)[None, :] < valid[:, None]
    x_live = T.take(x, (slice(None), slice(0, live))) if live < rows else x
    projected = T.matmul(x_live, params[f"{view}.proj"])
    qkv = tuple(params[f"{view}.{w}"] for w in ("w_q", "w_k", "w_v")) if arch.learned_qkv else None
    out = mvsa(projected, params[f"{view}.w_o"], arch.n_heads, mask, qkv)
    return T.pad_axis(out, 1, rows)


def css_rows(batch: Batch, params: dict[str, Tensor], arch: Architecture) -> tuple[Tensor, np.ndarray]:
    if batch.css_ids is not None:
        valid = batch.css_valid
        mask = np.arange(batch.css_ids.shape[1])[None, :] < valid[:, None]
        x = T.gather_rows(params["embedding"], batch.css_ids, mask)
    else:
        valid = batch.css.valid
        mask = np.arange(batch.css.features.shape[1])[None, :] < valid[:, None]
        x = Tensor(batch.css.features)
    if arch.positional:
        pos = sinusoidal_positions(x.shape[1], x.shape[2]) * mask[..., None]
        x = T.add(x, pos)
    return x, valid


def fuse_views(batch: Batch, params: dict[str, Tensor], arch: Architecture, views: ViewMask = FULL) -> tuple[Tensor, np.ndarray]:
    """Run the four per-view MVSAs and merge them into one matrix per sample.

    Also returns a row flag marking rows that are padding constants for the
    whole batch (disabled views, rows past every sample's valid length).
    A disabled view contributes exact zeros and never touches its
    parameters, so they receive no gradient.
    """
    outs, pads = [], []
    b = batch.size
    for view in VIEWS:
        rows = arch.view_rows(view)
        if not views.enabled(view):
            outs.append(Tensor(np.zeros((b, rows, arch.d))))
            pads.append(np.ones(rows, dtype=bool))
            continue
        try:
            if view == "css":
                x, valid = css_rows(batch, params, arch)
            else:
                vin: ViewInput = getattr(batch, view)
                x, valid = Tensor(vin.features), vin.valid
            outs.append(_view_block(view, x, valid, params, arch))
        except NumericError as exc:
            raise NumericError(f"{view} view: {exc}") from exc
        live = int(valid.max()) if valid.size else 0
        pads.append(np.arange(rows) >= live)
    if arch.fusion == "rows":
        return T.concat(outs, axis=1), np.concatenate(pads)
    height = max(o.shape[1] for o in outs)
    outs = [T.pad_axis(o, 1, height) for o in outs]
    pads = [np.concatenate([p, np.ones(height - p.size, dtype=bool)]) for p in pads]
    zero_rows = np.logical_and.reduce(pads)
    if arch.fusion == "cols":
        return T.concat(outs, axis=2), zero_rows
    total = outs[0]
    for o in outs[1:]:
        total = T.add(total, o)
    return total, zero_rows


def quad_fuse(batch: Batch, params: dict[str, Tensor], arch: Architecture, views: ViewMask = FULL) -> Tensor:
    return fuse_views(batch, params, arch, views)[0]


def head_forward(fused, params: dict[str, Tensor], zero_rows: np.ndarray | None = None) -> Tensor:
    """Conv -> ReLU -> global average pool -> MLP -> sigmoid; returns p of shape (B,)."""
    fused = as_tensor(fused)
    pooled = T.conv_relu_mean(fused, params["conv.kernels"], params["conv.bias"], zero_rows)
    hidden = T.relu(T.add(T.matmul(pooled, params["mlp.w1"]), params["mlp.b1"]))
    logit = T.add(T.matmul(hidden, params["mlp.w2"]), params["mlp.b2"])
    return T.sigmoid(T.reshape(logit, (logit.shape[0],)))


def forward(batch: Batch, params: dict[str, Tensor], arch: Architecture, views: ViewMask = FULL) -> Tensor:
    fused, zero_rows = fuse_views(batch, params, arch, views)
    return head_forward(fused, params, zero_rows)


def ce_loss(p, y) -> Tensor:
    """Mean binary cross-entropy, -[y log p + (1-y) log(1-p)]."""
    p = as_tensor(p)
    if p.data.ndim == 0:
        p = T.reshape(p, (1,))
    return T.binary_cross_entropy(p, np.atleast_1d(np.asarray(y, dtype=np.float64)))


def as_leaves(params: dict[str, np.ndarray], trainable: bool = True) -> dict[str, Tensor]:
    return {name: Tensor(value, requires_grad=trainable, name=name) for name, value in params.items()}


def loss_and_grads(
    batch: Batch,
    labels: np.ndarray,
    params: dict[str, np.ndarray],
    arch: Architecture,
    views: ViewMask = FULL,
) -> tuple[float, np.ndarray, dict[str, np.ndarray]]:
    """Forward + backward for one batch.

    Returns (mean loss, probabilities, gradients). Parameters that the
    forward pass never touched get an all-zero gradient.
    """
    leaves = as_leaves(params)
    p = forward(batch, leaves, arch, views)
    loss = ce_loss(p, labels)
    loss.backward()
    grads = {}
    for name, leaf in leaves.items():
        grads[name] = leaf.grad if leaf.grad is not None else np.zeros_like(params[name])
    return float(loss.data), p.data.copy(), grads


def predict_proba(batch: Batch, params: dict[str, np.ndarray], arch: Architecture, views: ViewMask = FULL) -> np.ndarray:
    return forward(batch, as_leaves(params, trainable=False), arch, views).data
