"""HTTP plumbing: server configuration, error decoding, retries with backoff."""

from __future__ import annotations

import logging
import random
import time
import urllib.error
import urllib.parse
import urllib.request
import uuid
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Callable, Mapping

logger = logging.getLogger(__name__)

DEFAULT_SERVER = "https://www.openml.org/api/v1/xml"
MAX_RETRIES = 10
BACKOFF_BASE = 0.1


@dataclass(frozen=True)
class ServerConfig:
    base_url: str = DEFAULT_SERVER
    api_key: str | None = field(default=None, repr=False)
    timeout: float = 30.0
    retries: int = 2

    def __post_init__(self) -> None:
        parsed = urllib.parse.urlsplit(self.base_url)
        if not parsed.scheme or not parsed.netloc:
            raise ValueError(f"base_url must be absolute: {self.base_url!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if not 0 <= self.retries <= MAX_RETRIES:
            raise ValueError(f"retries must lie in [0, {MAX_RETRIES}]")
        object.__setattr__(self, "base_url", self.base_url.rstrip("/"))

    @property
    def host(self) -> str:
        return urllib.parse.urlsplit(self.base_url).netloc

    def url(self, path: str) -> str:
        return f"{self.base_url}/{path.lstrip('/')}"


class ApiError(Exception):
    """Error reported by the server, carrying its platform error code."""

    def __init__(self, http_status: int, code: int, message: str):
        super().__init__(f"HTTP {http_status}, code {code}: {message}")
        self.http_status = http_status
        self.code = code
        self.message = message


class TransportError(Exception):
    pass


def decode_error(http_status: int, body: bytes) -> ApiError:
    """Build an :class:`ApiError` from an error response body.

    Bodies that are not ``<error><code/><message/></error>`` documents yield
    code 0 with the first 200 bytes of the body as the message.
    """
    try:
        root = ET.fromstring(body)
        if root.tag != "error":
            raise ValueError(root.tag)
        code = int((root.findtext("code") or "").strip())
        message = root.findtext("message") or ""
        if code < 0:
            raise ValueError(code)
        return ApiError(http_status, code, message)
    except (ET.ParseError, ValueError):
        return ApiError(http_status, 0, body[:200].decode("utf-8", errors="replace"))


def scrub(text: str, api_key: str | None) -> str:
    if api_key:
        text = text.replace(api_key, "***")
    return text


def backoff_delays(key: str, attempts: int, base: float = BACKOFF_BASE) -> list[float]:
    """Exponential backoff with jitter that is a pure function of ``key``."""
    rng = random.Random(key)
    return [base * (2**i) * (1.0 + rng.random()) for i in range(attempts)]


def _multipart(fields: Mapping[str, bytes]) -> tuple[bytes, str]:
    boundary = uuid.uuid4().hex
    parts = []
    for name, blob in fields.items():
        parts.append(
            f'--{boundary}\r\nContent-Disposition: form-data; name="{name}"; filename="{name}"\r\n'
            "Content-Type: application/octet-stream\r\n\r\n".encode()
            + blob
            + b"\r\n"
        )
    body = b"".join(parts) + f"--{boundary}--\r\n".encode()
    return body, f"multipart/form-data; boundary={boundary}"


def request(
    cfg: ServerConfig,
    method: str,
    url: str,
    files: Mapping[str, bytes] | None = None,
    authenticated: bool = False,
    sleep: Callable[[float], None] = time.sleep,
) -> bytes:
    """Perform one HTTP exchange and return the response body.

    Transport failures and 5xx responses are retried up to ``cfg.retries``
    additional times; 4xx responses raise immediately.
    """
    if authenticated and cfg.api_key:
        sep = "&" if "?" in url else "?"
        url = f"{url}{sep}{urllib.parse.urlencode({'api_key': cfg.api_key})}"
    data, headers = None, {}
    if files is not None:
        data, content_type = _multipart(files)
        headers["Content-Type"] = content_type
    safe_url = scrub(url, cfg.api_key)
    delays = backoff_delays(f"{method} {safe_url}", cfg.retries)
    last_exc: Exception | None = None
    for attempt in range(cfg.retries + 1):
        if attempt:
            sleep(delays[attempt - 1])
        logger.debug("%s %s (attempt %d)", method, safe_url, attempt + 1)
        req = urllib.request.Request(url, data=data, headers=headers, method=method)
        try:
            with urllib.request.urlopen(req, timeout=cfg.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            body = exc.read()
            err = decode_error(exc.code, body)
            err.message = scrub(err.message, cfg.api_key)
            err.args = (scrub(str(err.args[0]), cfg.api_key),)
            if exc.code < 500:
                raise err from None
            last_exc = err
        except (urllib.error.URLError, OSError) as exc:
            last_exc = TransportError(scrub(f"{method} {safe_url} failed: {exc}", cfg.api_key))
    assert last_exc is not None
    raise last_exc


def get(cfg: ServerConfig, path_or_url: str, **kw) -> bytes:
    url = path_or_url if "://" in path_or_url else cfg.url(path_or_url)
    return request(cfg, "GET", url, **kw)
