"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 malformed input
(source, manifest, DOT, CSSM, checkpoint), 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from quadvuln.config import FIELD_TYPES, RunConfig, read_config_file, resolve
from quadvuln.embedding import build_vocabulary, encode_learned, init_embedding_table, load_css_file, write_css_file
from quadvuln.errors import ConfigError, InputError, NumericError
from quadvuln.frontend.lexer import tokenize
from quadvuln.frontend.parser import parse
from quadvuln.graphs import apply_metapath, build_ast_graph, build_cfg, build_dfg, export_dot
from quadvuln.nn.checkpoint import load_checkpoint, save_checkpoint
from quadvuln.nn.model import FUSION_MODES, PROVIDERS, Architecture
from quadvuln.pipeline import (
    ABLATIONS,
    SplitSpec,
    ablate,
    evaluate,
    load_dataset,
    predict,
    split,
    train,
    write_ablation_report,
    write_metric_log,
)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4
BUILDERS = {"ast": build_ast_graph, "cfg": build_cfg, "dfg": build_dfg}
_CHOICES = {"fusion": FUSION_MODES, "provider": PROVIDERS}

_HELP = {
    "d": "model width after projection",
    "n_heads": "attention heads per view",
    "t_max": "token rows kept for the CSS view",
    "l_ast": "padded AST node count",
    "l_cfg": "padded CFG node count",
    "l_dfg": "padded DFG node count",
    "conv_kernels": "number of conv kernels",
    "kernel_h": "conv kernel height",
    "kernel_w": "conv kernel width",
    "mlp_hidden": "hidden units in the classifier MLP",
    "lr": "Adam learning rate",
    "batch_size": "mini-batch size",
    "epochs": "training epochs",
    "seed": "seed for init, shuffling and splitting",
    "metapath": "add reverse edges to every graph view",
    "fusion": "how the four view outputs are merged: rows, sum or cols",
    "provider": "token embedding source: learned or file",
    "threshold": "probability at or above which a snippet is labelled 1",
    "min_count": "minimum token frequency for the vocabulary",
    "positional": "add sinusoidal positions to the CSS rows",
    "learned_qkv": "learn separate Q/K/V maps instead of reusing the head slice",
    "train_ratio": "training share of the split",
    "val_ratio": "validation share of the split",
    "test_ratio": "test share of the split",
    "jobs": "worker processes for featurization",
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with code 1 instead of argparse's 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (flags > --config file > defaults)")
    g.add_argument("--config", metavar="FILE", help="key=value configuration file")
    g.add_argument("--out", metavar="DIR", default="out", help="directory for produced artifacts (default: out)")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = FIELD_TYPES[f.name]
        text = f"{_HELP[f.name]} (default: {f.default})"
        if kind is bool:
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None, help=text)
        else:
            g.add_argument(flag, dest=f.name, type=kind, default=None, choices=_CHOICES.get(f.name), metavar=f.name.upper(), help=text)


def _add_input(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("source", nargs="?", help="Java source file")
    p.add_argument("--input", dest="input_file", metavar="FILE", help="Java source file (alternative to the positional form)")
    p.set_defaults(_input_required=required)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadvuln", description="Multi-view Java vulnerability classifier.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("parse", help="print the syntax tree of a source file")
    _add_input(p)
    p.add_argument("--tokens", action="store_true", help="print the token stream instead of the tree")
    _add_config_flags(p)

    p = sub.add_parser("graph", help="print one structural view of a method")
    _add_input(p)
    p.add_argument("--view", choices=sorted(BUILDERS), required=True, help="which graph to build")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--dot", dest="fmt", action="store_const", const="dot", help="DOT output (default)")
    fmt.add_argument("--matrix", dest="fmt", action="store_const", const="matrix", help="adjacency matrix: n, then n rows of 0/1")
    _add_config_flags(p)

    p = sub.add_parser("embed", help="write the CSS matrix of a source file as a CSSM file")
    _add_input(p, required=False)
    p.add_argument("--checkpoint", metavar="FILE", help="take the vocabulary and embedding table from a checkpoint")
    p.add_argument("--css", metavar="FILE", help="CSSM file to load (file provider)")
    _add_config_flags(p)

    p = sub.add_parser("train", help="train on a manifest and write a checkpoint")
    p.add_argument("--manifest", required=True, metavar="CSV", help="path,label[,css] manifest")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--manifest", required=True, metavar="CSV")
    p.add_argument("--checkpoint", required=True, metavar="FILE")
    p.add_argument("--split", choices=("all", "train", "val", "test"), default="all", help="which split of the manifest to score (default: all)")
    _add_config_flags(p)

    p = sub.add_parser("ablate", help="train and test once per view mask")
    p.add_argument("--manifest", required=True, metavar="CSV")
    _add_config_flags(p)

    p = sub.add_parser("predict", help="classify one source file")
    _add_input(p)
    p.add_argument("--checkpoint", required=True, metavar="FILE")
    _add_config_flags(p)
    return parser


# -- helpers ------------------------------------------------------------------------


class _Run:
    """Resolved configuration plus the list of files written under --out."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig) if getattr(args, f.name) is not None}
        file_values = read_config_file(args.config) if args.config else {}
        self.config = resolve(file_values, self.overrides)
        self.explicit = {**file_values, **self.overrides}
        self.out = Path(args.out)
        self.written: list[Path] = []

    def source(self) -> str | None:
        path = self.args.input_file or self.args.source
        if path is None:
            if getattr(self.args, "_input_required", False):
                raise ConfigError("an input file is required")
            return None
        return Path(path).read_text(encoding="utf-8")

    def artifact(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        self.written.append(path)
        return path

    def finish(self) -> None:
        if not self.written:
            return
        lines = [f"{hashlib.sha256(p.read_bytes()).hexdigest()}  {p.name}" for p in self.written]
        (self.out / "artifacts.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    def check_checkpoint(self, arch: Architecture) -> None:
        """Explicitly configured shape fields must agree with the checkpoint."""
        wanted = self.config.architecture(arch.vocab_size, arch.css_width)
        diffs = [
            f.name
            for f in dataclasses.fields(Architecture)
            if f.name in self.explicit and getattr(wanted, f.name) != getattr(arch, f.name)
        ]
        if diffs:
            raise ConfigError(f"checkpoint does not match configuration: {', '.join(diffs)} differ")


def _metrics_line(m) -> str:
    return f"accuracy={m.accuracy:.4f} precision={m.precision:.4f} recall={m.recall:.4f} f1={m.f1:.4f} (tp={m.tp} fp={m.fp} tn={m.tn} fn={m.fn})"


def _splits(run: _Run):
    data = load_dataset(run.args.manifest)
    c = run.config
    return split(data, SplitSpec(c.train_ratio, c.val_ratio, c.test_ratio, c.seed))


# -- subcommands ----------------------------------------------------------------------


def cmd_parse(run: _Run) -> int:
    tokens = tokenize(run.source())
    if run.args.tokens:
        for t in tokens:
            print(f"{t.line}:{t.col}\t{t.kind.value}\t{t.text}")
        return EXIT_OK
    print(parse(tokens).pretty())
    return EXIT_OK


def cmd_graph(run: _Run) -> int:
    tree = parse(tokenize(run.source()))
    g = BUILDERS[run.args.view](tree)
    if run.config.metapath:
        g = apply_metapath(g)
    print(g.to_matrix_text() if run.args.fmt == "matrix" else export_dot(g), end="")
    return EXIT_OK


def cmd_embed(run: _Run) -> int:
    c = run.config
    if c.provider == "file":
        if not run.args.css:
            raise ConfigError("--css is required with --provider file")
        css = load_css_file(run.args.css, c.t_max, None)
    else:
        source = run.source()
        if source is None:
            raise ConfigError("an input file is required with --provider learned")
        tokens = tokenize(source)
        if run.args.checkpoint:
            ckpt = load_checkpoint(run.args.checkpoint)
            if ckpt.vocab is None:
                raise InputError(f"{run.args.checkpoint}: checkpoint has no vocabulary")
            vocab, table, t_max = ckpt.vocab, ckpt.params["embedding"], ckpt.arch.t_max
        else:
            vocab = build_vocabulary([tokens], c.min_count)
            table, t_max = init_embedding_table(vocab.size, c.d, np.random.default_rng(c.seed)), c.t_max
        css = encode_learned(tokens, vocab, table, t_max)
    path = run.artifact("embedding.cssm")
    write_css_file(path, css.data)
    print(f"rows={css.rows} cols={css.cols} valid={css.valid_len} -> {path}")
    return EXIT_OK


def cmd_train(run: _Run) -> int:
    train_set, val_set, test_set = _splits(run)
    result = train(train_set, val_set, run.config)
    save_checkpoint(result.checkpoint, run.artifact("checkpoint.vfck"))
    write_metric_log(run.artifact("metrics.csv"), result.log)
    print(f"train={len(train_set)} val={len(val_set)} test={len(test_set)} best_epoch={result.best_epoch}")
    if test_set:
        m = evaluate(result.checkpoint, test_set, batch_size=run.config.batch_size, jobs=run.config.jobs)
        print("test " + _metrics_line(m))
    return EXIT_OK


def cmd_eval(run: _Run) -> int:
    ckpt = load_checkpoint(run.args.checkpoint)
    run.check_checkpoint(ckpt.arch)
    if run.args.split == "all":
        items = load_dataset(run.args.manifest)
    else:
        items = dict(zip(("train", "val", "test"), _splits(run)))[run.args.split]
    m = evaluate(ckpt, items, batch_size=run.config.batch_size, jobs=run.config.jobs)
    print(f"{run.args.split} " + _metrics_line(m))
    return EXIT_OK


def cmd_ablate(run: _Run) -> int:
    rows = ablate(_splits(run), run.config, ABLATIONS)
    path = run.artifact("ablation.csv")
    write_ablation_report(path, rows)
    print(path.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_predict(run: _Run) -> int:
    ckpt = load_checkpoint(run.args.checkpoint)
    run.check_checkpoint(ckpt.arch)
    label, p = predict(ckpt, run.source())
    print(f"label={label} p={p:.6f}")
    return EXIT_OK


COMMANDS = {
    "parse": cmd_parse,
    "graph": cmd_graph,
    "embed": cmd_embed,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "predict": cmd_predict,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        run = _Run(args)
        code = COMMANDS[args.command](run)
        run.finish()
        return code
    except ConfigError as exc:
        print(f"quadvuln: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"quadvuln: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"quadvuln: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, UnicodeDecodeError) as exc:
        print(f"quadvuln: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
