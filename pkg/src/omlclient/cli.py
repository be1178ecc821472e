"""Command-line interface.

    omlclient [--server URL] [--apikey KEY] [--cachedir DIR] [--offline] <command> ...

Exit status is 0 on success, 1 on a domain error (reported as one JSON line on
standard error) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import cache as cachemod, codec, export, protocol, runner
from .extension.reference import parse_spec
from .transport import DEFAULT_SERVER, ServerConfig

DEFAULT_CONFIG_FILE = Path("~/.omlclient/config")
ENV_VARS = {"server": "OMLCLIENT_SERVER", "apikey": "OMLCLIENT_APIKEY", "cachedir": "OMLCLIENT_CACHEDIR"}


@dataclass(frozen=True)
class ClientConfig:
    server: str = DEFAULT_SERVER
    apikey: str | None = None
    cachedir: str | None = None
    offline: bool = False
    workers: int = 1

    def server_config(self) -> ServerConfig:
        return ServerConfig(self.server, self.apikey)

    def cache_config(self) -> cachemod.CacheConfig:
        return cachemod.CacheConfig(cachemod.resolve_root(self.cachedir, env={}), self.offline)


def read_config_file(path: Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    if not path.is_file():
        return values
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or key.strip() not in ENV_VARS:
            raise ValueError(f"{path}:{n}: expected one of {sorted(ENV_VARS)} = value")
        values[key.strip()] = value.strip()
    return values


def resolve_config(args: argparse.Namespace, env: Mapping[str, str] = os.environ) -> ClientConfig:
    """Config file, then environment variables, then command-line flags."""
    path = Path(args.config) if args.config else DEFAULT_CONFIG_FILE
    values: dict[str, Any] = read_config_file(path.expanduser())
    values |= {key: env[var] for key, var in ENV_VARS.items() if env.get(var)}
    values |= {key: getattr(args, key) for key in ENV_VARS if getattr(args, key) is not None}
    return ClientConfig(offline=args.offline, workers=args.workers, **values)


def _emit(obj: Any) -> None:
    print(json.dumps(obj, sort_keys=True))


def _kv(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key, value


# -- commands -----------------------------------------------------------------


def cmd_datasets_list(cfg: ClientConfig, args: argparse.Namespace) -> None:
    rows = protocol.list_entities(
        cfg.server_config(), "dataset", dict(args.filter), (args.offset, args.limit), cfg.cache_config()
    )
    for row in rows:
        _emit(row)


def cmd_datasets_get(cfg: ClientConfig, args: argparse.Namespace) -> None:
    server, cache = cfg.server_config(), cfg.cache_config()
    desc = protocol.get_entity(server, "dataset", args.id, cache)
    table = cachemod.fetch_dataset_payload(cache, server, desc)
    _emit(
        {
            "id": desc.id,
            "name": desc.name,
            "version": desc.version,
            "rows": table.row_count,
            "features": [f.name for f in desc.features],
            "default_target_attribute": desc.default_target_attribute,
            "file_checksum": desc.file_checksum,
        }
    )


def cmd_datasets_upload(cfg: ClientConfig, args: argparse.Namespace) -> None:
    description = codec.decode_dataset(Path(args.description).read_bytes())
    new_id = protocol.publish_dataset(cfg.server_config(), description, Path(args.data).read_bytes())
    _emit({"id": new_id})


def cmd_tasks_get(cfg: ClientConfig, args: argparse.Namespace) -> None:
    server, cache = cfg.server_config(), cfg.cache_config()
    task = protocol.get_entity(server, "task", args.id, cache)
    splits = runner.iter_splits(task, runner.fetch_splits(server, cache, task))
    ep = task.estimation_procedure
    _emit(
        {
            "id": task.id,
            "dataset_id": task.dataset_id,
            "target_name": task.target_name,
            "class_labels": list(task.class_labels),
            "estimation_procedure": {"kind": ep.kind, "repeats": ep.repeats, "folds": ep.folds},
            "splits": len(splits),
        }
    )


def cmd_tasks_create(cfg: ClientConfig, args: argparse.Namespace) -> None:
    server = cfg.server_config()
    dataset = protocol.get_entity(server, "dataset", args.dataset, cfg.cache_config())
    draft = protocol.classification_task(dataset, args.target, args.folds, args.repeats)
    _emit({"id": protocol.publish_entity(server, draft)})


def cmd_suites_get(cfg: ClientConfig, args: argparse.Namespace) -> None:
    key: int | str = int(args.alias) if args.alias.isdigit() else args.alias
    suite = protocol.get_entity(cfg.server_config(), "suite", key, cfg.cache_config())
    _emit({"id": suite.id, "alias": suite.alias, "name": suite.name, "tasks": list(suite.task_ids)})


def cmd_run(cfg: ClientConfig, args: argparse.Namespace) -> None:
    server, cache = cfg.server_config(), cfg.cache_config()
    model = parse_spec(args.model)
    if args.suite:
        task_ids = protocol.get_entity(server, "suite", args.suite, cache).task_ids
    else:
        task_ids = (args.task,)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for task_id in task_ids:
        task = protocol.get_entity(server, "task", task_id, cache)
        run = runner.run_model_on_task(model, task, args.seed, server, cache, cfg.workers)
        line: dict[str, Any] = {"task": task.id, "predictive_accuracy": run.local_evaluations["predictive_accuracy"]}
        if out:
            (out / f"task_{task.id}.predictions.arff").write_bytes(runner.predictions_arff_bytes(run, task))
            (out / f"task_{task.id}.run.xml").write_bytes(codec.encode_run(run))
        if args.publish:
            run = runner.publish_run(run, task, server)
            line |= {"run_id": run.id, "flow_id": run.flow_id}
        _emit(line)


def cmd_evals_export(cfg: ClientConfig, args: argparse.Namespace) -> None:
    table = protocol.list_evaluations_setups(
        cfg.server_config(), args.function, args.flow, args.task, cache=cfg.cache_config()
    )
    n = export.export_evaluations(table, args.log10, args.out, ln_cols=args.ln)
    _emit({"rows": n, "out": str(args.out)})


def cmd_cache_clear(cfg: ClientConfig, args: argparse.Namespace) -> None:
    key: int | str | None = args.id
    if key is not None and key.isdigit():
        key = int(key)
    removed = cachemod.clear(cfg.cache_config(), args.kind, key)
    _emit({"removed": removed})


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="omlclient", description="Client for an OpenML-style experiment server.")
    p.add_argument("--server", help="base URL of the XML API")
    p.add_argument("--apikey", help="API key used for uploads")
    p.add_argument("--cachedir", help="cache root directory")
    p.add_argument("--config", help="config file (default ~/.omlclient/config)")
    p.add_argument("--offline", action="store_true", help="serve reads from the cache only")
    p.add_argument("--workers", type=int, default=1, help="parallel folds per run")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("datasets").add_subparsers(dest="action", required=True)
    c = ds.add_parser("list")
    c.add_argument("--filter", type=_kv, action="append", default=[], metavar="KEY=VALUE")
    c.add_argument("--limit", type=int, default=100)
    c.add_argument("--offset", type=int, default=0)
    c.set_defaults(func=cmd_datasets_list)
    c = ds.add_parser("get")
    c.add_argument("id", type=int)
    c.set_defaults(func=cmd_datasets_get)
    c = ds.add_parser("upload")
    c.add_argument("--description", required=True, help="dataset description XML")
    c.add_argument("--data", required=True, help="ARFF payload")
    c.set_defaults(func=cmd_datasets_upload)

    ts = sub.add_parser("tasks").add_subparsers(dest="action", required=True)
    c = ts.add_parser("get")
    c.add_argument("id", type=int)
    c.set_defaults(func=cmd_tasks_get)
    c = ts.add_parser("create")
    c.add_argument("--dataset", type=int, required=True)
    c.add_argument("--target")
    c.add_argument("--folds", type=int, default=10)
    c.add_argument("--repeats", type=int, default=1)
    c.set_defaults(func=cmd_tasks_create)

    ss = sub.add_parser("suites").add_subparsers(dest="action", required=True)
    c = ss.add_parser("get")
    c.add_argument("alias")
    c.set_defaults(func=cmd_suites_get)

    c = sub.add_parser("run")
    target = c.add_mutually_exclusive_group(required=True)
    target.add_argument("--task", type=int)
    target.add_argument("--suite")
    c.add_argument("--model", required=True, help="e.g. ref.pipeline:impute.mean,onehot,stump")
    c.add_argument("--seed", type=int, default=runner.DEFAULT_SEED)
    c.add_argument("--publish", action="store_true")
    c.add_argument("--out", help="directory for predictions and run XML")
    c.set_defaults(func=cmd_run)

    es = sub.add_parser("evals").add_subparsers(dest="action", required=True)
    c = es.add_parser("export")
    c.add_argument("--function", required=True)
    c.add_argument("--flow", type=int, nargs="+", action="extend", default=[])
    c.add_argument("--task", type=int, nargs="+", action="extend", default=[])
    c.add_argument("--log10", action="append", default=[], metavar="COL")
    c.add_argument("--ln", action="append", default=[], metavar="COL")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_evals_export)

    cs = sub.add_parser("cache").add_subparsers(dest="action", required=True)
    c = cs.add_parser("clear")
    c.add_argument("--kind")
    c.add_argument("--id")
    c.set_defaults(func=cmd_cache_clear)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        args.func(cfg, args)
    except (OSError, ValueError, LookupError, RuntimeError, protocol.ApiError, protocol.TransportError,
            cachemod.OfflineError, cachemod.ChecksumError) as exc:
        error: dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, protocol.ApiError):
            error |= {"code": exc.code, "http_status": exc.http_status}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
