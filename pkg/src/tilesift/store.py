"""Tile metadata + embedding persistence.

Layout on disk (one directory per store):

    embeddings.f32   raw little-endian float32 rows, row i = item i
    records.jsonl    one JSON object per tile record, line i = item i
    manifest.json    dimension, count, url_template, created_at, featurizer

Writes are append-only in the order embedding row -> record line -> manifest,
so after a crash the durable prefix of both files can disagree by at most one
item; ``open`` truncates both to the longest consistent prefix.  Item ids are
dense from zero and never reused (no deletion), which the ANN index relies on.
Single writer, any number of readers.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import re
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateRecordError,
    InvalidArgumentError,
    InvalidConfigError,
    NotFoundError,
)

EMBEDDINGS_FILE = "embeddings.f32"
RECORDS_FILE = "records.jsonl"
MANIFEST_FILE = "manifest.json"

URL_PLACEHOLDERS = ("layer", "date", "matrix", "row", "col")


@dataclass(frozen=True)
class TileRecord:
    """Identity of one tile, sufficient to rebuild its source URL."""

    item_id: int
    layer: str
    date: dt.date
    tile_matrix: int
    row: int
    col: int

    def __post_init__(self):
        object.__setattr__(self, "date", coerce_date(self.date))

    @property
    def key(self) -> tuple:
        return (self.layer, self.date.isoformat(), self.tile_matrix, self.row, self.col)

    def to_json(self) -> dict:
        d = asdict(self)
        d["date"] = self.date.isoformat()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TileRecord":
        return cls(
            item_id=int(d["item_id"]),
            layer=str(d["layer"]),
            date=coerce_date(d["date"]),
            tile_matrix=int(d["tile_matrix"]),
            row=int(d["row"]),
            col=int(d["col"]),
        )


def coerce_date(value) -> dt.date:
    """Accept a date, datetime, or ISO day string; normalize to day precision."""
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError as exc:
        raise InvalidArgumentError(f"bad date {value!r}: {exc}") from exc


@dataclass
class StoreManifest:
    dimension: int
    count: int
    url_template: str
    created_at: str
    featurizer: dict | None = None

    def to_json(self) -> dict:
        d = {
            "dimension": self.dimension,
            "count": self.count,
            "url_template": self.url_template,
            "created_at": self.created_at,
        }
        if self.featurizer is not None:
            d["featurizer"] = self.featurizer
        return d


def resolve_url(record: TileRecord, manifest_or_template) -> str:
    """Substitute record fields into the URL template.  Pure, no network.

    The template must contain every placeholder: {layer} {date} {matrix}
    {row} {col}.
    """
    template = getattr(manifest_or_template, "url_template", manifest_or_template)
    missing = [p for p in URL_PLACEHOLDERS if ("{%s}" % p) not in template]
    if missing:
        raise InvalidConfigError(
            f"url template is missing placeholder(s): {', '.join('{%s}' % m for m in missing)}"
        )
    return template.format(
        layer=record.layer,
        date=record.date.isoformat(),
        matrix=record.tile_matrix,
        row=record.row,
        col=record.col,
    )


class EmbeddingStore:
    """Append-only store mapping dense item ids to (TileRecord, embedding)."""

    def __init__(self, path: Path, manifest: StoreManifest, records: list[TileRecord], embeddings: np.ndarray):
        self.path = path
        self.manifest = manifest
        self._records = records
        self._by_key = {r.key: r.item_id for r in records}
        n = len(records)
        cap = max(n, 64)
        self._emb = np.empty((cap, manifest.dimension), dtype=np.float32)
        if n:
            self._emb[:n] = embeddings
        self._emb_fh = open(path / EMBEDDINGS_FILE, "ab")
        self._rec_fh = open(path / RECORDS_FILE, "ab")

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def create(cls, path, dimension: int = 128, url_template: str = "", featurizer: dict | None = None) -> "EmbeddingStore":
        if dimension < 1:
            raise InvalidArgumentError(f"dimension must be positive, got {dimension}")
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        if (path / MANIFEST_FILE).exists():
            raise InvalidArgumentError(f"store already exists at {path}")
        manifest = StoreManifest(
            dimension=dimension,
            count=0,
            url_template=url_template,
            created_at=dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
            featurizer=featurizer,
        )
        (path / EMBEDDINGS_FILE).touch()
        (path / RECORDS_FILE).touch()
        _write_manifest(path, manifest)
        return cls(path, manifest, [], np.empty((0, dimension), dtype=np.float32))

    @classmethod
    def open(cls, path) -> "EmbeddingStore":
        path = Path(path)
        manifest_path = path / MANIFEST_FILE
        if not manifest_path.exists():
            raise NotFoundError(f"no store manifest at {manifest_path}")
        raw = json.loads(manifest_path.read_text())
        manifest = StoreManifest(
            dimension=int(raw["dimension"]),
            count=int(raw["count"]),
            url_template=raw.get("url_template", ""),
            created_at=raw.get("created_at", ""),
            featurizer=raw.get("featurizer"),
        )
        records, embeddings = _recover(path, manifest)
        manifest.count = len(records)
        _write_manifest(path, manifest)
        return cls(path, manifest, records, embeddings)

    def close(self) -> None:
        self._emb_fh.close()
        self._rec_fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- operations ----------------------------------------------------------

    @property
    def count(self) -> int:
        return self.manifest.count

    @property
    def dimension(self) -> int:
        return self.manifest.dimension

    def contains(self, layer: str, date, tile_matrix: int, row: int, col: int) -> bool:
        key = (layer, coerce_date(date).isoformat(), int(tile_matrix), int(row), int(col))
        return key in self._by_key

    def insert(self, layer: str, date, tile_matrix: int, row: int, col: int, embedding) -> int:
        """Persist one tile; returns its dense item id.

        The embedding row and the record line hit disk before the manifest
        count moves, so a crash mid-insert loses at most this one item.
        """
        vec = np.asarray(embedding, dtype=np.float32)
        if vec.ndim != 1 or vec.shape[0] != self.manifest.dimension:
            raise InvalidArgumentError(
                f"embedding shape {vec.shape} does not match store dimension {self.manifest.dimension}"
            )
        if not np.all(np.isfinite(vec)):
            raise InvalidArgumentError("embedding contains NaN or infinity")
        record = TileRecord(
            item_id=self.manifest.count,
            layer=str(layer),
            date=coerce_date(date),
            tile_matrix=int(tile_matrix),
            row=int(row),
            col=int(col),
        )
        if record.key in self._by_key:
            raise DuplicateRecordError(f"tile already stored: {record.key}")
        self._emb_fh.write(vec.astype("<f4").tobytes())
        self._emb_fh.flush()
        self._rec_fh.write((json.dumps(record.to_json(), separators=(",", ":")) + "\n").encode())
        self._rec_fh.flush()
        item_id = record.item_id
        if item_id >= self._emb.shape[0]:
            grown = np.empty((max(64, self._emb.shape[0] * 2), self.manifest.dimension), dtype=np.float32)
            grown[:item_id] = self._emb[:item_id]
            self._emb = grown
        self._emb[item_id] = vec
        self._records.append(record)
        self._by_key[record.key] = item_id
        self.manifest.count = item_id + 1
        _write_manifest(self.path, self.manifest)
        return item_id

    def get(self, item_id: int) -> tuple[TileRecord, np.ndarray]:
        if not 0 <= int(item_id) < self.manifest.count:
            raise NotFoundError(f"item id {item_id} not in store of {self.manifest.count}")
        item_id = int(item_id)
        return self._records[item_id], self._emb[item_id].copy()

    def export_embeddings(self) -> np.ndarray:
        """Dense (count, dimension) float32 matrix ordered by item id."""
        return self._emb[: self.manifest.count].copy()

    def resolve_url(self, record: TileRecord) -> str:
        return resolve_url(record, self.manifest)


def _write_manifest(path: Path, manifest: StoreManifest) -> None:
    tmp = path / (MANIFEST_FILE + ".tmp")
    tmp.write_text(json.dumps(manifest.to_json(), indent=2) + "\n")
    os.replace(tmp, path / MANIFEST_FILE)


def _recover(path: Path, manifest: StoreManifest) -> tuple[list[TileRecord], np.ndarray]:
    """Reconcile the data files to their longest consistent prefix."""
    dim = manifest.dimension
    row_bytes = dim * 4
    emb_path = path / EMBEDDINGS_FILE
    rec_path = path / RECORDS_FILE
    emb_size = emb_path.stat().st_size if emb_path.exists() else 0
    n_emb = emb_size // row_bytes

    records: list[TileRecord] = []
    line_ends: list[int] = []
    rec_size = 0
    if rec_path.exists():
        data = rec_path.read_bytes()
        rec_size = len(data)
        offset = 0
        while True:
            nl = data.find(b"\n", offset)
            if nl < 0:
                break  # incomplete trailing line: not durable
            try:
                record = TileRecord.from_json(json.loads(data[offset:nl]))
            except (ValueError, KeyError, TypeError):
                break
            if record.item_id != len(records):
                break
            records.append(record)
            offset = nl + 1
            line_ends.append(offset)
    n = min(n_emb, len(records))
    records = records[:n]
    if emb_size != n * row_bytes:
        with open(emb_path, "r+b") as fh:
            fh.truncate(n * row_bytes)
    keep_bytes = line_ends[n - 1] if n else 0
    if rec_size != keep_bytes:
        with open(rec_path, "r+b") as fh:
            fh.truncate(keep_bytes)
    embeddings = np.empty((0, dim), dtype=np.float32)
    if n:
        embeddings = np.fromfile(emb_path, dtype="<f4", count=n * dim).reshape(n, dim)
    return records, embeddings
