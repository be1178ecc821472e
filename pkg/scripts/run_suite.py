"""Run one reference model over every task of a suite and publish the runs.

Without ``--server`` a local mock server is started for the duration.

    python scripts/run_suite.py [--suite local-mini] [--model SPEC] [--seed 42] [--out DIR]
"""

from __future__ import annotations

import argparse
import contextlib
import json
import tempfile
from dataclasses import dataclass
from pathlib import Path

from omlclient import codec, protocol, runner
from omlclient.cache import CacheConfig
from omlclient.extension.reference import parse_spec
from omlclient.mockserver import MockServer
from omlclient.transport import ServerConfig


@dataclass(frozen=True)
class SuiteRunConfig:
    suite: str = "local-mini"
    model: str = "ref.pipeline:impute.mean,onehot,stump"
    seed: int = 42
    workers: int = 1
    publish: bool = True
    server: str | None = None
    apikey: str = "local-key"
    out: Path | None = None


def run_suite(cfg: SuiteRunConfig, server: ServerConfig, cache: CacheConfig) -> list[dict]:
    model = parse_spec(cfg.model)
    suite = protocol.get_entity(server, "suite", cfg.suite, cache)
    results = []
    for task_id in suite.task_ids:
        task = protocol.get_entity(server, "task", task_id, cache)
        run = runner.run_model_on_task(model, task, cfg.seed, server, cache, cfg.workers)
        row = {"task": task.id, "predictive_accuracy": run.local_evaluations["predictive_accuracy"]}
        if cfg.out:
            cfg.out.mkdir(parents=True, exist_ok=True)
            (cfg.out / f"task_{task.id}.predictions.arff").write_bytes(runner.predictions_arff_bytes(run, task))
            (cfg.out / f"task_{task.id}.run.xml").write_bytes(codec.encode_run(run))
        if cfg.publish:
            run = runner.publish_run(run, task, server)
            row |= {"run_id": run.id, "flow_id": run.flow_id}
        results.append(row)
    return results


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--suite", default=SuiteRunConfig.suite)
    p.add_argument("--model", default=SuiteRunConfig.model)
    p.add_argument("--seed", type=int, default=SuiteRunConfig.seed)
    p.add_argument("--workers", type=int, default=SuiteRunConfig.workers)
    p.add_argument("--no-publish", dest="publish", action="store_false")
    p.add_argument("--server")
    p.add_argument("--apikey", default=SuiteRunConfig.apikey)
    p.add_argument("--out", type=Path)
    cfg = SuiteRunConfig(**vars(p.parse_args()))

    with contextlib.ExitStack() as stack:
        url = cfg.server or stack.enter_context(MockServer()).base_url
        cachedir = stack.enter_context(tempfile.TemporaryDirectory())
        for row in run_suite(cfg, ServerConfig(url, cfg.apikey), CacheConfig(Path(cachedir))):
            print(json.dumps(row, sort_keys=True))


if __name__ == "__main__":
    main()
