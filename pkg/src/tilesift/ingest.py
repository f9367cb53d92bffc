"""Tile crawling: enumerate a layer/date/zoom region, featurize, store.

A crawl walks every (date, row, col) combination of its spec in a fixed
order, skips tiles already in the store (reruns are idempotent), fetches the
rest through a bounded worker pool, and inserts serially so the store keeps
its single-writer contract.  One bad tile never stops the others; the report
accounts for every coordinate.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests

from .errors import DuplicateRecordError, InvalidArgumentError, TileSiftError
from .featurizer import ProviderDescriptor, make_provider, normalize_tile
from .store import EmbeddingStore, coerce_date

DEFAULT_MAX_PARALLEL = 4
DEFAULT_FETCH_RETRIES = 3  # attempts, not extra tries
DEFAULT_BACKOFF_S = 0.5


def grid_bounds(tile_matrix: int) -> tuple[int, int]:
    """(rows, cols) of the geographic grid: 2 tiles wide at level 0."""
    if tile_matrix < 0:
        raise InvalidArgumentError(f"tile matrix level must be >= 0, got {tile_matrix}")
    return 2**tile_matrix, 2 ** (tile_matrix + 1)


@dataclass
class CrawlSpec:
    layer: str
    dates: list
    tile_matrix: int
    row_range: tuple[int, int]  # inclusive
    col_range: tuple[int, int]  # inclusive
    url_template: str
    provider: ProviderDescriptor = field(default_factory=lambda: ProviderDescriptor(kind="reference"))
    max_parallel: int = DEFAULT_MAX_PARALLEL
    fetch_retries: int = DEFAULT_FETCH_RETRIES
    backoff_s: float = DEFAULT_BACKOFF_S
    fetch_timeout_s: float = 10.0
    min_delay_s: float = 0.0  # politeness floor between request starts

    def __post_init__(self):
        self.dates = [coerce_date(d) for d in self.dates]
        if not self.dates:
            raise InvalidArgumentError("crawl needs at least one date")
        rows, cols = grid_bounds(self.tile_matrix)
        r0, r1 = self.row_range
        c0, c1 = self.col_range
        if not (0 <= r0 <= r1 < rows):
            raise InvalidArgumentError(f"row range {self.row_range} outside grid of {rows} rows at level {self.tile_matrix}")
        if not (0 <= c0 <= c1 < cols):
            raise InvalidArgumentError(f"col range {self.col_range} outside grid of {cols} cols at level {self.tile_matrix}")
        if self.max_parallel < 1:
            raise InvalidArgumentError("max_parallel must be >= 1")

    def coordinates(self) -> list[tuple]:
        r0, r1 = self.row_range
        c0, c1 = self.col_range
        return [
            (date, row, col)
            for date in self.dates
            for row in range(r0, r1 + 1)
            for col in range(c0, c1 + 1)
        ]

    def tile_url(self, date, row: int, col: int) -> str:
        return self.url_template.format(
            layer=self.layer, date=date.isoformat(), matrix=self.tile_matrix, row=row, col=col
        )


@dataclass
class CrawlReport:
    fetched: int = 0
    skipped_duplicates: int = 0
    failed: int = 0
    errors: list[dict] = field(default_factory=list)
    elapsed: float = 0.0

    def to_json(self) -> dict:
        return {
            "fetched": self.fetched,
            "skipped_duplicates": self.skipped_duplicates,
            "failed": self.failed,
            "errors": self.errors,
            "elapsed": round(self.elapsed, 3),
        }


class CrawlAbortedError(TileSiftError):
    """Store write failure mid-crawl; carries what completed so far."""

    code = "crawl-aborted"

    def __init__(self, message: str, report: CrawlReport):
        super().__init__(message)
        self.report = report


class _Throttle:
    """Spaces request starts at least ``delay`` seconds apart, across threads."""

    def __init__(self, delay: float):
        self.delay = delay
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self) -> None:
        if self.delay <= 0:
            return
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next_at)
            self._next_at = start + self.delay
        time.sleep(max(0.0, start - time.monotonic()))


def fetch_tile(url: str, session: requests.Session, retries: int = DEFAULT_FETCH_RETRIES,
               backoff_s: float = DEFAULT_BACKOFF_S, timeout_s: float = 10.0) -> tuple[bytes, str]:
    """GET one tile with retry on 5xx/transport errors (never on 404).

    Makes the initial attempt plus up to ``retries`` retries, sleeping
    backoff_s * 2^(n-1) before retry n.  Returns (bytes, declared format).
    Raises TileSiftError on exhaustion.
    """
    last_error = ""
    for attempt in range(1 + retries):
        if attempt:
            time.sleep(backoff_s * (2 ** (attempt - 1)))
        try:
            resp = session.get(url, timeout=timeout_s)
        except requests.RequestException as exc:
            last_error = f"transport error: {exc}"
            continue
        if resp.status_code == 200:
            ctype = resp.headers.get("Content-Type", "").lower()
            if "png" in ctype:
                fmt = "png"
            elif "jpeg" in ctype or "jpg" in ctype:
                fmt = "jpeg"
            else:
                fmt = "png" if url.lower().endswith(".png") else "jpeg"
            return resp.content, fmt
        last_error = f"HTTP {resp.status_code}"
        if resp.status_code == 404:
            break  # the tile genuinely does not exist; retrying cannot help
        if not 500 <= resp.status_code < 600:
            break
    raise TileSiftError(f"fetch failed for {url}: {last_error}")


def crawl(spec: CrawlSpec, store: EmbeddingStore) -> CrawlReport:
    """Run one crawl to completion; every coordinate lands in exactly one
    report bucket (fetched / skipped_duplicates / failed)."""
    provider = make_provider(spec.provider)
    if store.dimension != spec.provider.dimension:
        raise InvalidArgumentError(
            f"store dimension {store.dimension} != provider dimension {spec.provider.dimension}"
        )
    started = time.monotonic()
    report = CrawlReport()
    coords = spec.coordinates()
    pending = []
    for date, row, col in coords:
        if store.contains(spec.layer, date, spec.tile_matrix, row, col):
            report.skipped_duplicates += 1
        else:
            pending.append((date, row, col))

    throttle = _Throttle(spec.min_delay_s)
    local = threading.local()

    def fetch_and_embed(coord):
        date, row, col = coord
        url = spec.tile_url(date, row, col)
        if not hasattr(local, "session"):
            local.session = requests.Session()
        try:
            throttle.wait()
            raw, fmt = fetch_tile(
                url, local.session,
                retries=spec.fetch_retries, backoff_s=spec.backoff_s, timeout_s=spec.fetch_timeout_s,
            )
            return coord, url, provider.embed(normalize_tile(raw, fmt)), None
        except Exception as exc:  # isolate per-tile failures of any kind
            return coord, url, None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=spec.max_parallel) as pool:
        # map() keeps results in submission order: inserts, ids, and the
        # report come out the same no matter which fetch finishes first.
        for (date, row, col), url, embedding, error in pool.map(fetch_and_embed, pending):
            if error is not None:
                report.failed += 1
                report.errors.append({
                    "url": url, "date": date.isoformat(), "row": row, "col": col, "error": error,
                })
                continue
            try:
                store.insert(spec.layer, date, spec.tile_matrix, row, col, embedding)
                report.fetched += 1
            except DuplicateRecordError:
                report.skipped_duplicates += 1
            except Exception as exc:
                report.elapsed = time.monotonic() - started
                raise CrawlAbortedError(f"store write failed: {exc}", report) from exc

    report.elapsed = time.monotonic() - started
    return report
