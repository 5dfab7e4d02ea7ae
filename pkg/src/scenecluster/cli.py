"""Command line entry point: ``scg <stage> --config pipeline.json``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .clusterer import k_distance, suggest_eps
from .pipeline import (
    RUN_ORDER,
    ConfigError,
    PipelineConfig,
    StageError,
    config_from_dict,
    read_embeddings,
    run_pipeline,
    run_stage,
)

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

# per-subcommand flags that redirect an artifact path: flag dest -> artifact key
PATH_FLAGS = {
    "synth": {"out": "tracks", "labels": "archetypes", "map": "map"},
    "ingest": {"tracks": "tracks", "out": "scenes"},
    "augment": {"scenes": "scenes", "map": "map", "out": "augmented"},
    "build-graphs": {"scenes": "scenes", "augmented": "augmented", "map": "map", "out": "graphs"},
    "train": {"graphs": "graphs", "out": "checkpoint", "history": "history"},
    "embed": {"checkpoint": "checkpoint", "graphs": "graphs", "out": "emb"},
    "stats": {"scenes": "scenes", "graphs": "graphs", "embeddings": "emb", "out": "stats"},
    "cluster": {"embeddings": "emb", "out": "labels"},
    "sweep": {"checkpoint": "checkpoint", "scenes": "scenes", "map": "map", "labels": "labels", "out": "sweep"},
    "gradcheck": {"out": "gradcheck"},
    "run": {},
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline JSON config")
    common.add_argument("--force", action="store_true", help="rerun even if outputs are up to date")
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("--workdir", type=Path, help="override paths.workdir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="scg", description="Self-supervised traffic scene clustering pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in [*RUN_ORDER, "gradcheck", "run"]:
        p = sub.add_parser(name, parents=[common])
        for dest in PATH_FLAGS[name]:
            p.add_argument(f"--{dest.replace('_', '-')}", dest=f"path_{dest}", type=Path)
        if name == "synth":
            p.add_argument("--count", type=int)
        if name == "augment":
            p.add_argument("--sigma-pos", type=float)
            p.add_argument("--sigma-vel", type=float)
            p.add_argument("--p-entity", type=float)
            p.add_argument("--copies", type=int)
        if name == "train":
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch-size", type=int)
        if name == "cluster":
            p.add_argument("--eps", type=float)
            p.add_argument("--min-samples", type=int)
            p.add_argument("--suggest-eps", action="store_true",
                           help="print the k-distance knee eps and exit without clustering")
        if name == "gradcheck":
            p.add_argument("--instances", type=int)
    return parser


def _apply_overrides(data: dict, args) -> dict:
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}

    def put(section, key, value):
        if value is not None:
            data.setdefault(section, {})[key] = value

    for dest, key in PATH_FLAGS[args.command].items():
        value = getattr(args, f"path_{dest}")
        if value is not None:
            put("paths", key, str(value.resolve()))
    if args.workdir is not None:
        put("paths", "workdir", str(args.workdir.resolve()))
    if args.command == "synth" and args.count is not None:
        data.setdefault("synthetic", {})
        put("synthetic", "count", args.count)
    if args.command == "augment":
        put("augment", "sigma_pos", args.sigma_pos)
        put("augment", "sigma_vel", args.sigma_vel)
        put("augment", "p_entity", args.p_entity)
        put("augment", "copies", args.copies)
        if args.seed is not None:
            put("augment", "rng_seed", args.seed)
    if args.command == "train":
        put("train", "epochs", args.epochs)
        put("train", "batch_size", args.batch_size)
        if args.seed is not None:
            put("train", "seed", args.seed)
    if args.command == "cluster":
        put("cluster", "eps", args.eps)
        put("cluster", "min_samples", args.min_samples)
    if args.command == "gradcheck":
        put("gradcheck", "instances", args.instances)
    return data


def resolve_config(args) -> PipelineConfig:
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from None
        base = args.config.parent
    else:
        data, base = {}, Path.cwd()
        if args.command in ("synth", "run", "gradcheck"):
            data["synthetic"] = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(_apply_overrides(data, args), base, args.seed)


def _suggest_eps(cfg: PipelineConfig) -> None:
    _, points = read_embeddings(cfg.path("emb"))
    k = cfg.cluster.knee_k or cfg.cluster.min_samples
    kd = k_distance(points, k)
    print(f"suggested eps {suggest_eps(kd):.6g} (k={k}, {len(points)} points)")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            ran = run_pipeline(cfg, force=args.force)
            print(f"pipeline finished; ran {', '.join(ran) if ran else 'nothing (all up to date)'}")
        elif args.command == "cluster" and args.suggest_eps:
            _suggest_eps(cfg)
        else:
            ran = run_stage(cfg, args.command, force=args.force)
            print(f"{args.command}: {'done' if ran else 'up to date'}")
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_STAGE
    except (OSError, ValueError) as exc:
        print(f"stage {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
