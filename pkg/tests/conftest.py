from __future__ import annotations

import numpy as np
import pytest

from tilesift.featurizer import ProviderDescriptor
from tilesift.store import EmbeddingStore, TileRecord

TEMPLATE = "https://tiles.example/wmts/{layer}/{date}/{matrix}/{row}/{col}.jpg"


def random_points(n: int, dim: int, seed: int, normalized: bool = False) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, dim)).astype(np.float32)
    if normalized:
        pts /= np.linalg.norm(pts.astype(np.float64), axis=1, keepdims=True).astype(np.float32)
    return pts


def synthetic_record(item_id: int, matrix: int = 6) -> TileRecord:
    cols = 2 ** (matrix + 1)
    return TileRecord(
        item_id=item_id,
        layer="synthetic",
        date="2020-01-01",
        tile_matrix=matrix,
        row=item_id // cols,
        col=item_id % cols,
    )


def insert_synthetic(store: EmbeddingStore, item_id: int, embedding, matrix: int = 6) -> int:
    rec = synthetic_record(item_id, matrix)
    return store.insert(rec.layer, rec.date, rec.tile_matrix, rec.row, rec.col, embedding)


def fill_store(path, embeddings: np.ndarray, url_template: str = TEMPLATE,
               featurizer: dict | None = None) -> EmbeddingStore:
    """Create a store at `path` holding the given rows as synthetic tiles."""
    store = EmbeddingStore.create(
        path,
        dimension=embeddings.shape[1],
        url_template=url_template,
        featurizer=featurizer or ProviderDescriptor(
            kind="reference", dimension=embeddings.shape[1]).to_json(),
    )
    for i, row in enumerate(embeddings):
        insert_synthetic(store, i, row)
    return store


@pytest.fixture
def tmp_store_path(tmp_path):
    return str(tmp_path / "store")
