"""Command-line entry point.

Subcommands:
    train-embeddings   train item embeddings from a graph snapshot
    simulate           run a closed-loop experiment, write CSV + artifacts
    rerank             one-off diversified selection from a matrix-text file
    report             compare metrics CSVs: lift table, series files, figures

Configuration is line-oriented ``key = value`` (# comments allowed) with three
override layers: built-in defaults < config file < GRAPHDIV_* environment
variables < repeated ``--override KEY=VALUE`` flags. Every effective value is
echoed into the run manifest.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import typing
from pathlib import Path

import numpy as np

from . import __version__
from .embedding import EmbeddingTable, train_unsupervised
from .graph_store import ItemGraph, SnapshotFormatError
from .personalization import F_MAX, F_MIN
from .rerank import RerankInput, rerank
from .simulator import ExperimentConfig, run_experiment
from . import report as report_mod

ENV_PREFIX = "GRAPHDIV_"


class ConfigError(ValueError):
    """Bad configuration or unusable input; maps to exit code 2."""


# ----------------------------------------------------------------------
# config loading
# ----------------------------------------------------------------------

_FIELD_TYPES = typing.get_type_hints(ExperimentConfig)
_FIELD_NAMES = {f.name for f in dataclasses.fields(ExperimentConfig)}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if typing.get_origin(kind) is tuple:
            return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc
    raise ConfigError(f"config key {key!r} has unsupported type {kind}")


def _parse_config_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(
    config_path: str | None,
    overrides: list[str] | None = None,
    env: typing.Mapping[str, str] | None = None,
) -> ExperimentConfig:
    """Merge defaults, config file, environment, and CLI overrides."""
    env = os.environ if env is None else env
    values: dict[str, object] = {}

    def apply(key: str, raw: str, source: str):
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown config key {key!r} ({source})")
        values[key] = _coerce(key, raw)

    if config_path:
        for key, raw in _parse_config_file(Path(config_path)).items():
            apply(key, raw, f"config file {config_path}")
    for name in sorted(_FIELD_NAMES):
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is not None:
            apply(name, raw, "environment")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--override expects KEY=VALUE, got {item!r}")
        key, _, raw = item.partition("=")
        apply(key.strip(), raw, "--override")

    config = ExperimentConfig(**values)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def _cmd_train_embeddings(args) -> int:
    config = load_config(args.config, args.override)
    if args.threads is not None:
        config = dataclasses.replace(config, threads=args.threads)
    if not config.graph_snapshot:
        raise ConfigError("config key 'graph_snapshot' is required")
    snapshot = Path(config.graph_snapshot)
    if not snapshot.is_file():
        raise ConfigError(f"graph snapshot not found: {snapshot}")
    try:
        graph = ItemGraph.load(snapshot)
    except SnapshotFormatError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train_unsupervised(graph, config.train_config())
    result.table.save(out / "embeddings.tsv")
    result.weights.save(out / "weights.tsv")
    print(
        f"trained {len(result.table)} embeddings (dim {result.table.dim}, "
        f"graph version {graph.version}) -> {out / 'embeddings.tsv'}"
    )
    return 0


def _cmd_simulate(args) -> int:
    config = load_config(args.config, args.override)
    if args.threads is not None:
        config = dataclasses.replace(config, threads=args.threads)
    reports = run_experiment(config, out_dir=args.out)
    last = reports[-1]
    print(
        f"{len(reports)} rounds -> {Path(args.out) / 'metrics.csv'} "
        f"(final ilad {last.ilad:.4f}, rd {last.rd:.4f}, coverage {last.coverage:.4f})"
    )
    return 0


def _parse_instance(path: Path) -> RerankInput:
    if not path.is_file():
        raise ConfigError(f"instance file not found: {path}")
    tokens_by_line = [
        line.split() for line in path.read_text(encoding="utf-8").splitlines()
    ]
    tokens_by_line = [t for t in tokens_by_line if t]
    try:
        n, k = int(tokens_by_line[0][0]), int(tokens_by_line[0][1])
        f = float(tokens_by_line[0][2])
        if len(tokens_by_line[0]) != 3:
            raise ValueError("first line must be 'n k f'")
        scores = [float(x) for x in tokens_by_line[1]]
        if len(scores) != n:
            raise ValueError(f"expected {n} scores, got {len(scores)}")
        sim_rows = []
        for row in range(n):
            cells = [float(x) for x in tokens_by_line[2 + row]]
            if len(cells) != n:
                raise ValueError(f"similarity row {row} has {len(cells)} values, expected {n}")
            sim_rows.append(cells)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed instance: {exc}") from exc
    try:
        return RerankInput(
            items=list(range(n)),
            scores=np.asarray(scores),
            similarity=np.asarray(sim_rows),
            propensity=min(max(f, F_MIN), F_MAX),
            k=k,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid instance: {exc}") from exc


def _cmd_rerank(args) -> int:
    instance = _parse_instance(Path(args.instance))
    for index in rerank(instance):
        print(index)
    return 0


def _cmd_report(args) -> int:
    try:
        runs = [report_mod.load_metrics_csv(p) for p in args.csv]
        print(report_mod.lift_table(runs))
        out = Path(args.out)
        series = report_mod.write_series(runs, out)
        figures = report_mod.render_figures(runs, out)
    except report_mod.ReportError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"wrote {len(series)} series files and {len(figures)} figures to {out}")
    return 0


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------


def _add_config_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="key = value config file")
    sub.add_argument(
        "--override",
        metavar="KEY=VALUE",
        action="append",
        default=[],
        help="override one config key (repeatable)",
    )
    sub.add_argument("--out", metavar="DIR", default="out", help="output directory")
    sub.add_argument("--threads", metavar="N", type=int, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphdiv",
        description="diversity-aware graph-exploration recommender toolkit",
    )
    parser.add_argument("--version", action="version", version=f"graphdiv {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser(
        "train-embeddings", help="train item embeddings from a graph snapshot"
    )
    _add_config_args(train)
    train.set_defaults(func=_cmd_train_embeddings)

    simulate = commands.add_parser("simulate", help="run a closed-loop experiment")
    _add_config_args(simulate)
    simulate.set_defaults(func=_cmd_simulate)

    rr = commands.add_parser(
        "rerank", help="diversified selection for one matrix-text instance"
    )
    rr.add_argument("instance", metavar="FILE", help="matrix-text instance file")
    rr.set_defaults(func=_cmd_rerank)

    rep = commands.add_parser("report", help="compare metrics CSVs")
    rep.add_argument("csv", metavar="CSV", nargs="+", help="metrics CSV paths (first is base)")
    rep.add_argument("--out", metavar="DIR", default="out", help="output directory")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
