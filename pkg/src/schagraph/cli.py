"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Configuration is a flat key=value INI file with [model], [train], and
[serve] sections; SCHG_SEED in the environment overrides the model seed,
and --set section.key=value overrides individual entries.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from schagraph.graph import build_graph, graph_to_json
from schagraph.model import ConfigError, ModelConfig, forward_scores
from schagraph.musicxml import import_musicxml
from schagraph.pooling import membership
from schagraph.score import ScoreError, parse_score_json, serialize_score
from schagraph.training import (
    CheckpointError,
    DivergenceError,
    TrainConfig,
    ablation_sweep,
    build_dataset,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    sweep_to_csv,
    train,
)
from schagraph import corpus, service

log = logging.getLogger("schagraph")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_SERVE_DEFAULTS = {"host": "127.0.0.1", "port": "8080", "ui_dir": ""}


def load_config(path: str | None, overrides: list[str]):
    """Resolve (ModelConfig, TrainConfig, serve dict) from INI + overrides."""
    sections = {"model": {}, "train": {}, "serve": dict(_SERVE_DEFAULTS)}
    if path:
        parser = configparser.ConfigParser()
        with open(path) as handle:
            parser.read_file(handle)
        for section in parser.sections():
            if section not in sections:
                raise UsageError(f"unknown config section [{section}]")
            sections[section].update(dict(parser[section]))
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UsageError(f"override must look like section.key=value: {item!r}")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in sections:
            raise UsageError(f"unknown config section {section!r}")
        sections[section][key] = value

    model_fields = {f.name: f for f in dataclasses.fields(ModelConfig)}
    train_fields = {f.name: f for f in dataclasses.fields(TrainConfig)}

    def coerce(fields, section_name, raw):
        out = {}
        for key, value in raw.items():
            if key not in fields:
                raise UsageError(f"unknown key {key!r} in [{section_name}]")
            kind = fields[key].type
            if kind in ("int", int):
                out[key] = int(value)
            elif kind in ("float", float):
                out[key] = float(value)
            elif kind in ("bool", bool):
                out[key] = value.strip().lower() in ("1", "true", "yes", "on")
            elif "tuple" in str(kind):
                out[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif "float | None" in str(kind):
                out[key] = None if value.strip() == "" else float(value)
            else:
                out[key] = value
        return out

    model_kwargs = coerce(model_fields, "model", sections["model"])
    if "SCHG_SEED" in os.environ:
        model_kwargs["seed"] = int(os.environ["SCHG_SEED"])
    train_kwargs = coerce(train_fields, "train", sections["train"])
    model_config = ModelConfig(**model_kwargs)
    train_config = TrainConfig(**train_kwargs)
    serve_cfg = sections["serve"]
    for key in serve_cfg:
        if key not in _SERVE_DEFAULTS:
            raise UsageError(f"unknown key {key!r} in [serve]")
    log.info("resolved model config: %s", model_config.to_dict())
    log.info("resolved train config: %s", dataclasses.asdict(train_config))
    return model_config, train_config, serve_cfg


def _parse_thresholds(raw: str) -> list[float]:
    try:
        return [float(v) for v in raw.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad threshold list {raw!r}") from exc


def cmd_import(args) -> int:
    score = import_musicxml(Path(args.input).read_bytes())
    payload = serialize_score(score) + b"\n"
    Path(args.output).write_bytes(payload)
    log.info("imported %s (%d notes) -> %s", args.input, score.n, args.output)
    return EXIT_OK


def cmd_build_graph(args) -> int:
    score = parse_score_json(Path(args.input).read_bytes())
    graph = build_graph(score)
    Path(args.output).write_bytes(graph_to_json(graph) + b"\n")
    log.info("built graph n=%d p=%d -> %s", graph.n, graph.p, args.output)
    return EXIT_OK


def cmd_train(args) -> int:
    model_config, train_config, _ = load_config(args.config, args.set or [])
    pieces = corpus.load_corpus_dir(Path(args.corpus))
    dataset = build_dataset(
        pieces,
        val_fraction=train_config.val_fraction,
        seed=train_config.seed,
        augment=train_config.augment,
    )
    result = train(dataset, model_config, train_config)
    save_checkpoint(result.checkpoint, Path(args.output))
    eval_entries = dataset.validation or dataset.train
    metrics = evaluate(eval_entries, model_config, result.checkpoint.params)
    sys.stdout.write(metrics.to_json().decode("utf-8") + "\n")
    log.info("checkpoint (epoch %d) -> %s", result.checkpoint.epoch, args.output)
    return EXIT_OK


def cmd_eval(args) -> int:
    checkpoint = load_checkpoint(Path(args.checkpoint))
    pieces = corpus.load_corpus_dir(Path(args.corpus))
    _, train_config, _ = load_config(args.config, args.set or [])
    dataset = build_dataset(
        pieces,
        val_fraction=train_config.val_fraction,
        seed=train_config.seed,
        augment=train_config.augment,
    )
    entries = dataset.validation if args.split == "validation" else dataset.train
    if not entries:
        raise ScoreError(f"{args.split} split is empty")
    metrics = evaluate(entries, checkpoint.config, checkpoint.params)
    sys.stdout.write(metrics.to_json().decode("utf-8") + "\n")
    return EXIT_OK


def cmd_infer(args) -> int:
    checkpoint = load_checkpoint(Path(args.checkpoint))
    score = parse_score_json(Path(args.piece).read_bytes())
    thresholds = _parse_thresholds(args.c_min)
    d = checkpoint.config.depth_count
    if len(thresholds) not in (1, d):
        raise ScoreError(f"expected 1 or {d} thresholds, got {len(thresholds)}")
    graph = build_graph(score)
    result = forward_scores(graph, checkpoint.config, checkpoint.params)
    scores = result.stack.scores
    full = thresholds * d if len(thresholds) == 1 else thresholds
    doc = {
        "scores": {"c_min": checkpoint.config.c_min, "scores": scores.tolist()},
        "voices": result.voice.value.tolist() if result.voice is not None else [],
        "assignment": membership(scores, full).tolist(),
    }
    json.dump(doc, sys.stdout)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    model_config, train_config, _ = load_config(args.config, args.set or [])
    pieces = corpus.load_corpus_dir(Path(args.corpus))
    dataset = build_dataset(
        pieces,
        val_fraction=train_config.val_fraction,
        seed=train_config.seed,
        augment=train_config.augment,
    )
    if args.axis in ("c_min", "alpha"):
        values = [float(v) for v in args.values.split(",")]
    else:
        values = [v.strip() for v in args.values.split(",") if v.strip()]
    rows = ablation_sweep(
        dataset, model_config, args.axis, values,
        copies=args.copies, train_config=train_config,
    )
    csv_text = sweep_to_csv(rows)
    if args.output:
        Path(args.output).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_serve(args) -> int:
    _, _, serve_cfg = load_config(args.config, args.set or [])
    checkpoint = load_checkpoint(Path(args.checkpoint))
    port = args.port if args.port is not None else int(serve_cfg["port"])
    ui_dir = args.ui_dir or (serve_cfg["ui_dir"] or None)
    service.serve(
        checkpoint,
        Path(args.corpus),
        port=port,
        host=serve_cfg["host"],
        ui_dir=Path(ui_dir) if ui_dir else None,
    )
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="schagraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="MusicXML -> score JSON")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_import)

    p = sub.add_parser("build-graph", help="score JSON -> graph JSON")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_build_graph)

    for name, fn in (("train", cmd_train), ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        p.add_argument("corpus", help="directory of *.score.json/*.annotation.json")
        p.add_argument("--config", default=None)
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
        if name == "train":
            p.add_argument("-o", "--output", required=True, help="checkpoint path")
            p.set_defaults(fn=fn)
        else:
            p.add_argument("--axis", required=True,
                           choices=("feature_groups", "edge_types", "c_min", "alpha"))
            p.add_argument("--values", required=True, help="comma-separated grid")
            p.add_argument("--copies", type=int, default=3)
            p.add_argument("-o", "--output", default=None, help="CSV path (default stdout)")
            p.set_defaults(fn=fn)

    p = sub.add_parser("eval")
    p.add_argument("corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="validation", choices=("train", "validation"))
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer")
    p.add_argument("piece", help="score JSON path")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--c-min", default="0.5", help="one value or d comma-separated")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("serve")
    p.add_argument("corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--ui-dir", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScoreError, ConfigError, CheckpointError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
