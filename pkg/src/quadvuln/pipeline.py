"""Datasets, splitting, featurization, training, evaluation, ablation, prediction."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from quadvuln.config import RunConfig
from quadvuln.embedding import Vocabulary, build_vocabulary, load_css_file, read_css_payload, token_ids
from quadvuln.errors import DatasetError, GraphError, InputError, NumericError, ParseDiagnostic, ParseError
from quadvuln.frontend.lexer import tokenize
from quadvuln.frontend.parser import parse
from quadvuln.graphs import apply_metapath, build_ast_graph, build_cfg, build_dfg
from quadvuln.nn.checkpoint import Checkpoint
from quadvuln.nn.model import Architecture, Batch, ViewInput, ViewMask, init_params, loss_and_grads, predict_proba
from quadvuln.nn.optim import AdamState, adam_step
from quadvuln.viewgraph import ViewGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabeledSnippet:
    id: str
    source: str
    label: int
    css_path: str | None = None


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    seed: int = 42

    def __post_init__(self) -> None:
        ratios = (self.train, self.val, self.test)
        if min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError("split ratios must be positive and sum to 1")


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        predicted = self.tp + self.fp
        return self.tp / predicted if predicted else 0.0

    @property
    def recall(self) -> float:
        actual = self.tp + self.fn
        return self.tp / actual if actual else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def as_row(self) -> dict[str, float]:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall, "f1": self.f1}

    @classmethod
    def from_predictions(cls, labels: Sequence[int], predicted: Sequence[int]) -> Metrics:
        y = np.asarray(labels, dtype=int)
        yhat = np.asarray(predicted, dtype=int)
        return cls(
            tp=int(np.sum((y == 1) & (yhat == 1))),
            fp=int(np.sum((y == 0) & (yhat == 1))),
            tn=int(np.sum((y == 0) & (yhat == 0))),
            fn=int(np.sum((y == 1) & (yhat == 0))),
        )


ABLATIONS: dict[str, ViewMask] = {
    "full": ViewMask(),
    "no_ast": ViewMask(ast=False),
    "no_cfg": ViewMask(cfg=False),
    "no_dfg": ViewMask(dfg=False),
    "no_css": ViewMask(css=False),
}


# -- datasets -------------------------------------------------------------------


def load_dataset(manifest_path: str | Path) -> list[LabeledSnippet]:
    """Read a ``path,label[,css]`` CSV manifest; paths are relative to it."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    snippets: list[LabeledSnippet] = []
    seen: set[str] = set()
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["path", "label"]:
            raise DatasetError(f"{manifest_path}: header must start with 'path,label'")
        has_css = len(header) > 2 and header[2].strip() == "css"
        for row_no, row in enumerate(reader, 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DatasetError(f"missing label at row {row_no}")
            rel, raw_label = row[0].strip(), row[1].strip()
            if raw_label not in ("0", "1"):
                raise DatasetError(f"label out of range at row {row_no}")
            if rel in seen:
                raise DatasetError(f"duplicate id {rel!r} at row {row_no}")
            seen.add(rel)
            path = base / rel
            if not path.is_file():
                raise DatasetError(f"missing file {path} at row {row_no}")
            css = None
            if has_css and len(row) > 2 and row[2].strip():
                css_path = base / row[2].strip()
                if not css_path.is_file():
                    raise DatasetError(f"missing CSS file {css_path} at row {row_no}")
                css = str(css_path)
            snippets.append(LabeledSnippet(rel, path.read_text(encoding="utf-8"), int(raw_label), css))
    return snippets


def write_manifest(path: str | Path, rows: Sequence[tuple[str, int]] | Sequence[tuple[str, int, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        with_css = any(len(r) > 2 for r in rows)
        writer.writerow(["path", "label", "css"] if with_css else ["path", "label"])
        writer.writerows(rows)


def split_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    n_train = math.floor(spec.train * n + 1e-9)
    n_val = math.floor(spec.val * n + 1e-9)
    return n_train, n_val, n - n_train - n_val


def split(dataset: Sequence, spec: SplitSpec = SplitSpec()) -> tuple[list, list, list]:
    """Seeded shuffle, then contiguous floor(train*N) / floor(val*N) / rest."""
    n = len(dataset)
    if n < 3:
        raise DatasetError(f"dataset too small to split ({n} items, need at least 3)")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train, n_val, _ = split_sizes(n, spec)
    items = [dataset[i] for i in order]
    return items[:n_train], items[n_train : n_train + n_val], items[n_train + n_val :]


# -- featurization ----------------------------------------------------------------


@dataclass
class Features:
    """Everything the model needs from one snippet, independent of vocabulary."""

    id: str
    label: int
    tokens: list[str]
    ast: ViewGraph
    cfg: ViewGraph
    dfg: ViewGraph
    css_path: str | None = None


def featurize(snippet: LabeledSnippet, metapath: bool = True) -> Features:
    try:
        toks = tokenize(snippet.source)
        tree = parse(toks)
        views = [build_ast_graph(tree), build_cfg(tree), build_dfg(tree)]
    except ParseError as exc:
        d = exc.diagnostic
        raise ParseError(ParseDiagnostic(f"{snippet.id}: {d.message}", d.line, d.col, d.severity)) from exc
    except GraphError as exc:
        raise GraphError(f"{snippet.id}: {exc}") from exc
    if metapath:
        views = [apply_metapath(g) for g in views]
    return Features(snippet.id, snippet.label, [t.text for t in toks], *views, css_path=snippet.css_path)


def _featurize_star(args) -> Features:
    return featurize(*args)


def featurize_all(snippets: Sequence[LabeledSnippet], metapath: bool = True, jobs: int = 1) -> list[Features]:
    if jobs <= 1 or len(snippets) < 2:
        return [featurize(s, metapath) for s in snippets]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map preserves input order, so results are independent of scheduling
        return list(pool.map(_featurize_star, [(s, metapath) for s in snippets], chunksize=8))


def _fit(adj: np.ndarray, rows: int) -> tuple[np.ndarray, int]:
    n = adj.shape[0]
    out = np.zeros((rows, rows))
    k = min(n, rows)
    out[:k, :k] = adj[:k, :k]
    return out, k


class Encoder:
    """Turns Features into padded model batches for a fixed architecture."""

    def __init__(self, arch: Architecture, vocab: Vocabulary | None, provider: str = "learned") -> None:
        self.arch = arch
        self.vocab = vocab
        self.provider = provider
        self._warned: set[tuple[str, str]] = set()

    def _view(self, feats: Sequence[Features], view: str) -> ViewInput:
        rows = self.arch.view_rows(view)
        mats, valid = [], []
        for f in feats:
            g: ViewGraph = getattr(f, view)
            if g.n > rows and (f.id, view) not in self._warned:
                self._warned.add((f.id, view))
                log.warning("%s: %s graph has %d nodes, truncated to %d", f.id, view, g.n, rows)
            m, k = _fit(g.adjacency, rows)
            mats.append(m)
            valid.append(k)
        return ViewInput(np.stack(mats), np.asarray(valid))

    def batch(self, feats: Sequence[Features]) -> Batch:
        out = Batch(self._view(feats, "ast"), self._view(feats, "cfg"), self._view(feats, "dfg"))
        if self.provider == "learned":
            ids, valid = zip(*(token_ids(f.tokens, self.vocab, self.arch.t_max) for f in feats))
            out.css_ids = np.stack(ids)
            out.css_valid = np.asarray(valid)
        else:
            mats = []
            for f in feats:
                if f.css_path is None:
                    raise InputError(f"{f.id}: file provider selected but no CSS file given")
                mats.append(load_css_file(f.css_path, self.arch.t_max, self.arch.css_width))
            out.css = ViewInput(np.stack([m.data for m in mats]), np.asarray([m.valid_len for m in mats]))
        return out


def css_width_of(feats: Sequence[Features], config: RunConfig) -> int | None:
    if config.provider == "learned":
        return None
    for f in feats:
        if f.css_path is None:
            raise InputError(f"{f.id}: file provider selected but no CSS file given")
    return int(read_css_payload(feats[0].css_path).shape[1])


# -- training ---------------------------------------------------------------------

LOG_FIELDS = ("epoch", "split", "loss", "accuracy", "precision", "recall", "f1")


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list[dict[str, object]] = field(default_factory=list)
    best_epoch: int = 0
    final_params: dict[str, np.ndarray] = field(default_factory=dict)


def run_settings(config: RunConfig) -> dict[str, str]:
    return {
        "metapath": "true" if config.metapath else "false",
        "provider": config.provider,
        "threshold": repr(config.threshold),
        "seed": str(config.seed),
    }


def _batches(items: Sequence, size: int):
    for start in range(0, len(items), size):
        yield items[start : start + size]


StepHook = Callable[[int, int, dict[str, np.ndarray]], None]


def train(
    train_set: Sequence[LabeledSnippet | Features],
    val_set: Sequence[LabeledSnippet | Features],
    config: RunConfig,
    mask: ViewMask = ViewMask(),
    on_step: StepHook | None = None,
) -> TrainResult:
    """Mini-batch Adam on mean cross-entropy with best-validation-F1 selection.

    The vocabulary comes from the training split only. Each epoch logs the
    running training loss/metrics (predictions made before each update) and
    the validation metrics after the epoch. The returned checkpoint holds
    the parameters from the epoch with the highest validation F1 (ties go
    to lower validation loss, then the earlier epoch); with 0 epochs it
    holds the initial parameters.
    """
    train_feats = _ensure_features(train_set, config)
    val_feats = _ensure_features(val_set, config)
    if not train_feats:
        raise DatasetError("training split is empty")
    vocab = build_vocabulary([f.tokens for f in train_feats], config.min_count) if config.provider == "learned" else None
    arch = config.architecture(vocab.size if vocab else 0, css_width_of(train_feats, config))
    rng = np.random.default_rng(config.seed)
    params = init_params(arch, rng)
    log.info("model has %d trainable parameters", arch.parameter_count())
    encoder = Encoder(arch, vocab, config.provider)
    state = AdamState(lr=config.lr)
    settings = run_settings(config)

    best = Checkpoint(arch, {k: v.copy() for k, v in params.items()}, vocab, settings)
    best_key: tuple[float, float, int] | None = None
    best_epoch = 0
    history: list[dict[str, object]] = []
    labels_all = np.array([f.label for f in train_feats])
    shuffle_rng = np.random.default_rng(config.seed + 1)
    # encode once; batches are re-assembled by index each epoch
    val_batches = [encoder.batch(chunk) for chunk in _batches(val_feats, config.batch_size)]
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_feats))
        losses, preds, seen = [], [], []
        for batch_no, idx in enumerate(_batches(order, config.batch_size)):
            chunk = [train_feats[i] for i in idx]
            loss, probs, grads = loss_and_grads(encoder.batch(chunk), labels_all[idx], params, arch, mask)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            step += 1
            if on_step is not None:
                on_step(epoch, step, grads)
            params = adam_step(params, grads, state)
            losses.append(loss * len(idx))
            preds.extend((probs >= config.threshold).astype(int).tolist())
            seen.extend(labels_all[idx].tolist())
        train_metrics = Metrics.from_predictions(seen, preds)
        history.append({"epoch": epoch, "split": "train", "loss": sum(losses) / len(seen), **train_metrics.as_row()})
        if val_batches:
            val_loss, val_metrics = _evaluate_batches(val_batches, [f.label for f in val_feats], params, arch, mask, config.threshold)
            history.append({"epoch": epoch, "split": "val", "loss": val_loss, **val_metrics.as_row()})
            key = (val_metrics.f1, -val_loss, -epoch)
        else:
            key = (train_metrics.f1, -history[-1]["loss"], -epoch)
        if best_key is None or key > best_key:
            best_key = key
            best_epoch = epoch
            best = Checkpoint(arch, {k: v.copy() for k, v in params.items()}, vocab, settings)
    return TrainResult(best, history, best_epoch, params)


def _ensure_features(items: Sequence[LabeledSnippet | Features], config: RunConfig) -> list[Features]:
    if all(isinstance(i, Features) for i in items):
        return list(items)
    return featurize_all(items, config.metapath, config.jobs)


def _evaluate_batches(batches, labels, params, arch, mask, threshold) -> tuple[float, Metrics]:
    probs = np.concatenate([predict_proba(b, params, arch, mask) for b in batches])
    y = np.asarray(labels, dtype=np.float64)
    q = np.clip(probs, 1e-12, 1 - 1e-12)
    loss = float(-np.mean(y * np.log(q) + (1 - y) * np.log1p(-q)))
    return loss, Metrics.from_predictions(labels, (probs >= threshold).astype(int))


def checkpoint_threshold(ckpt: Checkpoint, default: float = 0.5) -> float:
    return float(ckpt.settings.get("threshold", default))


def _checkpoint_encoder(ckpt: Checkpoint) -> Encoder:
    return Encoder(ckpt.arch, ckpt.vocab, ckpt.settings.get("provider", "learned"))


def predict_probabilities(ckpt: Checkpoint, items: Sequence[LabeledSnippet | Features], mask: ViewMask = ViewMask(), batch_size: int = 16, jobs: int = 1) -> np.ndarray:
    metapath = ckpt.settings.get("metapath", "true") == "true"
    feats = list(items) if all(isinstance(i, Features) for i in items) else featurize_all(items, metapath, jobs)
    if not feats:
        return np.zeros(0)
    encoder = _checkpoint_encoder(ckpt)
    return np.concatenate([predict_proba(encoder.batch(chunk), ckpt.params, ckpt.arch, mask) for chunk in _batches(feats, batch_size)])


def evaluate(ckpt: Checkpoint, snippets: Sequence[LabeledSnippet | Features], mask: ViewMask = ViewMask(), batch_size: int = 16, jobs: int = 1) -> Metrics:
    probs = predict_probabilities(ckpt, snippets, mask, batch_size, jobs)
    predicted = (probs >= checkpoint_threshold(ckpt)).astype(int)
    return Metrics.from_predictions([s.label for s in snippets], predicted)


@dataclass
class AblationRow:
    mask: str
    metrics: Metrics
    seconds: float


def ablate(
    splits: tuple[Sequence, Sequence, Sequence],
    config: RunConfig,
    masks: dict[str, ViewMask] | None = None,
    on_step: Callable[[str, int, int, dict[str, np.ndarray]], None] | None = None,
) -> list[AblationRow]:
    """Train and test once per view mask, all with the same seed."""
    masks = ABLATIONS if masks is None else masks
    train_set, val_set, test_set = (_ensure_features(s, config) for s in splits)
    rows = []
    for name, mask in masks.items():
        started = time.perf_counter()
        hook = None if on_step is None else (lambda e, s, g, _n=name: on_step(_n, e, s, g))
        result = train(train_set, val_set, config, mask, hook)
        metrics = evaluate(result.checkpoint, test_set, mask, config.batch_size)
        rows.append(AblationRow(name, metrics, time.perf_counter() - started))
        log.info("ablation %s: f1=%.4f acc=%.4f", name, metrics.f1, metrics.accuracy)
    return rows


def write_ablation_report(path: str | Path, rows: Sequence[AblationRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mask", "accuracy", "precision", "recall", "f1"])
        for row in rows:
            m = row.metrics
            writer.writerow([row.mask, f"{m.accuracy:.6f}", f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f1:.6f}"])


def write_metric_log(path: str | Path, history: Sequence[dict[str, object]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        for row in history:
            writer.writerow([row["epoch"], row["split"]] + [f"{float(row[k]):.6f}" for k in LOG_FIELDS[2:]])


def predict(ckpt: Checkpoint, source: str, css_path: str | None = None) -> tuple[int, float]:
    """Classify one snippet; parse failures propagate as ParseError."""
    snippet = LabeledSnippet("<input>", source, 0, css_path)
    p = float(predict_probabilities(ckpt, [snippet])[0])
    return int(p >= checkpoint_threshold(ckpt)), p
