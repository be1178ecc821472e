"""Export the SVM hyperparameter landscape (C against gamma, both log10) as CSV and SVG.

Uses the 50 fixture evaluations of flow 8353 on task 6 unless ``--server`` points elsewhere.

    python scripts/svm_landscape.py [--out landscape.csv]
"""

from __future__ import annotations

import argparse
import contextlib
from dataclasses import dataclass
from pathlib import Path

from omlclient import export, protocol
from omlclient.mockserver import MockServer
from omlclient.transport import ServerConfig


@dataclass(frozen=True)
class LandscapeConfig:
    flow: int = 8353
    task: int = 6
    function: str = "predictive_accuracy"
    x: str = "sklearn.svm.classes.SVC(16)_C"
    y: str = "sklearn.svm.classes.SVC(16)_gamma"
    out: Path = Path("landscape.csv")
    server: str | None = None


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, default in vars(LandscapeConfig()).items():
        p.add_argument(f"--{name}", default=default, type=type(default) if default is not None else str)
    cfg = LandscapeConfig(**vars(p.parse_args()))

    with contextlib.ExitStack() as stack:
        url = cfg.server or stack.enter_context(MockServer()).base_url
        table = protocol.list_evaluations_setups(ServerConfig(url), cfg.function, flows=[cfg.flow], tasks=[cfg.task])
        n = export.export_evaluations(table, [cfg.x, cfg.y], cfg.out)
    print(f"wrote {n} rows to {cfg.out} and heatmap to {cfg.out}.svg")


if __name__ == "__main__":
    main()
