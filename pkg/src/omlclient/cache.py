"""On-disk cache for entity descriptions and payload files.

Layout: ``{root}/{host}/{kind}/{id}/{artifact}.{ext}``. Writes go to a temp
file in the destination directory followed by :func:`os.replace`, so readers
in other threads or processes never see a partial file.
"""

from __future__ import annotations

import hashlib
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import arff, transport
from .entities import DatasetDescription

logger = logging.getLogger(__name__)

DEFAULT_HOST = "www.openml.org"
DEFAULT_ROOT = Path("~/.omlclient/cache")
CACHE_ENV = "OMLCLIENT_CACHEDIR"
ARTIFACT_EXT = {"description": "xml", "features": "xml", "payload": "arff", "splits": "arff", "predictions": "arff"}


class OfflineError(Exception):
    pass


class ChecksumError(Exception):
    pass


@dataclass(frozen=True)
class CacheConfig:
    root_dir: Path
    offline: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "root_dir", Path(self.root_dir).expanduser())


def resolve_root(explicit: str | os.PathLike | None = None, env=os.environ) -> Path:
    """Explicit setting, then the environment variable, then the default."""
    if explicit:
        return Path(explicit).expanduser()
    if env.get(CACHE_ENV):
        return Path(env[CACHE_ENV]).expanduser()
    return DEFAULT_ROOT.expanduser()


def _host_dir(host: str) -> str:
    # ports use ':' which we keep out of path components
    return host.replace(":", "_")


def cache_path(kind: str, id: int | str, artifact: str, host: str = DEFAULT_HOST) -> str:
    if artifact not in ARTIFACT_EXT:
        raise ValueError(f"unknown artifact {artifact!r}")
    if isinstance(id, int) and id <= 0:
        raise ValueError("id must be positive")
    if isinstance(id, str) and (not id or "/" in id or id in (".", "..")):
        raise ValueError(f"invalid cache id {id!r}")
    return f"{_host_dir(host)}/{kind}/{id}/{artifact}.{ARTIFACT_EXT[artifact]}"


def md5_hex(data: bytes) -> str:
    return hashlib.md5(data).hexdigest()


def _read(path: Path) -> bytes | None:
    try:
        return path.read_bytes()
    except FileNotFoundError:
        return None


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def fetch_cached(
    cfg: CacheConfig,
    key: tuple,
    expected_checksum: str | None,
    fetcher: Callable[[], bytes],
    host: str = DEFAULT_HOST,
) -> bytes:
    """Return cached bytes for ``key = (kind, id, artifact)``, fetching on a miss.

    A file whose MD5 does not match ``expected_checksum`` counts as a miss.
    """
    path = cfg.root_dir / cache_path(*key, host=host)
    data = _read(path)
    if data is not None and (expected_checksum is None or md5_hex(data) == expected_checksum):
        return data
    if data is not None:
        logger.warning("checksum mismatch for cached %s, refetching", path)
    if cfg.offline:
        raise OfflineError(f"not in cache while offline: {'/'.join(map(str, key))} ({host})")
    data = fetcher()
    if expected_checksum is not None and md5_hex(data) != expected_checksum:
        raise ChecksumError(f"checksum mismatch for {'/'.join(map(str, key))}: expected {expected_checksum}")
    atomic_write(path, data)
    return data


def fetch_listing(cfg: CacheConfig, kind: str, query: str, fetcher: Callable[[], bytes], host: str = DEFAULT_HOST) -> bytes:
    """Listings change over time: always refetch online, serve the last copy offline."""
    path = cfg.root_dir / _host_dir(host) / kind / "list" / f"{md5_hex(query.encode())}.xml"
    if cfg.offline:
        data = _read(path)
        if data is None:
            raise OfflineError(f"listing not in cache while offline: {kind} {query}")
        return data
    data = fetcher()
    atomic_write(path, data)
    return data


def clear(cfg: CacheConfig, kind: str | None = None, id: int | str | None = None, host: str | None = None) -> int:
    """Delete cached entries; returns the number of entry directories removed."""
    hosts = [cfg.root_dir / _host_dir(host)] if host else [p for p in cfg.root_dir.glob("*") if p.is_dir()]
    removed = 0
    for h in hosts:
        kinds = [h / kind] if kind else [p for p in h.glob("*") if p.is_dir()]
        for k in kinds:
            targets = [k / str(id)] if id is not None else [p for p in k.glob("*") if p.is_dir()]
            for t in targets:
                if t.exists():
                    shutil.rmtree(t)
                    removed += 1
    return removed


def fetch_dataset_payload(
    cfg: CacheConfig, server: transport.ServerConfig, dataset: DatasetDescription
) -> arff.DataTable:
    if dataset.id is None or not dataset.file_checksum:
        raise ValueError("dataset needs an id and a file_checksum to fetch its payload")
    url = dataset.url or server.url(f"data/download/{dataset.id}")
    data = fetch_cached(
        cfg,
        ("dataset", dataset.id, "payload"),
        dataset.file_checksum,
        lambda: transport.get(server, url),
        host=server.host,
    )
    return arff.coerce_table(arff.parse(data))
