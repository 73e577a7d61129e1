"""Command line entry point: ``litscape <stage|all|verify|init-demo>``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .config import ConfigError, load_config
from .harvest import ProviderConfig
from .llmextract.providers import TransportError
from .pipeline import STAGES, DependencyError, PipelineError, StageError, run, verify_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_STAGE = 4
EXIT_TRANSPORT = 5
EXIT_VERIFY = 6

log = logging.getLogger("litscape")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="litscape", description="Literature-landscape pipeline.")
    p.add_argument("command", choices=STAGES + ("all", "verify", "init-demo"),
                   help="a single stage, 'all', 'verify' (check manifest hashes) or 'init-demo'")
    p.add_argument("target", nargs="?", help="destination directory for init-demo")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--resume", action="store_true", help="skip stages whose inputs and settings are unchanged")
    p.add_argument("--workers", type=int, help="worker threads for per-document stages")
    p.add_argument("--providers", help="JSON file overriding the 'open_access' and 'publisher' provider settings")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def apply_providers(cfg, path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict) or set(data) - {"open_access", "publisher"}:
        raise ConfigError("expected an object with 'open_access' and/or 'publisher'")
    changes = {}
    for name, section in data.items():
        try:
            changes[name] = ProviderConfig.from_dict(section) if section is not None else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    return dataclasses.replace(cfg, **changes)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "init-demo":
        from .minicorpus import init_demo

        if not args.target:
            log.error("init-demo needs a target directory")
            return EXIT_CONFIG
        try:
            path = init_demo(args.target)
        except FileExistsError as exc:
            log.error("%s", exc)
            return EXIT_CONFIG
        print(path)
        return EXIT_OK

    if not args.config:
        log.error("--config is required")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.providers:
        try:
            cfg = apply_providers(cfg, args.providers)
        except ConfigError as exc:
            log.error("providers: %s", exc)
            return EXIT_CONFIG

    if args.command == "verify":
        problems = verify_manifest(cfg.paths.outputs)
        for p in problems:
            log.error("verify: %s", p)
        if problems:
            return EXIT_VERIFY
        log.info("manifest verified")
        return EXIT_OK

    stages = STAGES if args.command == "all" else (args.command,)
    try:
        manifest = run(cfg, stages, resume=args.resume, workers=args.workers)
    except DependencyError as exc:
        log.error("%s", exc)
        return EXIT_DEPENDENCY
    except StageError as exc:
        log.error("%s", exc)
        cause = exc.cause
        while cause is not None:
            if isinstance(cause, TransportError):
                return EXIT_TRANSPORT
            cause = cause.__cause__
        return EXIT_STAGE
    except PipelineError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    summary = {name: ("skipped" if e.get("skipped") else e["status"]) for name, e in manifest["stages"].items()
               if name in stages}
    log.info("done: %s", json.dumps(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
