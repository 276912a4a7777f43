"""
Input locations for timerefine.

Event logs are read either from the local filesystem or over HTTP(S),
since public smart-home datasets are usually published as downloadable
files. Remote documents are cached in memory for the lifetime of the
process so that repeated runs over the same URL hit the network once.

Example usage:

    from timerefine.sources import read_input, detect_format
    data = read_input("https://example.org/kasteren.csv")
    fmt = detect_format("https://example.org/kasteren.csv")
"""

from __future__ import annotations

import logging
from functools import lru_cache
from pathlib import Path
from urllib.parse import urlparse

import requests

from .errors import InputError

logger = logging.getLogger(__name__)

USER_AGENT = "timerefine"
TIMEOUT_S = 30


def is_remote(location: str) -> bool:
    return urlparse(location).scheme in ("http", "https")


@lru_cache(maxsize=32)
def fetch_url(url: str) -> bytes:
    """GET ``url`` and return the body.

    Args:
        url: An http or https URL.

    Returns:
        The raw response body. Results are cached per URL.
    """
    headers = {"User-Agent": USER_AGENT}
    try:
        resp = requests.get(url, headers=headers, timeout=TIMEOUT_S)
        resp.raise_for_status()
    except requests.RequestException as exc:
        raise InputError(f"cannot fetch {url}: {exc}") from exc
    logger.info("fetched %s (%d bytes)", url, len(resp.content))
    return resp.content


def read_input(location: str) -> bytes:
    """Read a log document from a path or an http(s) URL."""
    if is_remote(location):
        return fetch_url(location)
    path = Path(location)
    try:
        return path.read_bytes()
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {location}") from exc
    except OSError as exc:
        raise InputError(f"cannot read {location}: {exc}") from exc


def detect_format(location: str) -> str:
    """``"xes"`` for ``.xes`` locations, ``"csv"`` otherwise."""
    path = urlparse(location).path if is_remote(location) else location
    return "xes" if path.lower().endswith(".xes") else "csv"
