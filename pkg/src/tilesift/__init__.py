"""Reverse image search over tiled satellite imagery.

Tiles are fetched from a WMTS-style endpoint, reduced to compact embeddings,
and indexed in a forest of random-hyperplane trees for sub-second
nearest-neighbour queries with interactive refinement.
"""

from .ann import (
    AnnForest,
    QuerySpec,
    brute_force,
    build_forest,
    default_search_budget,
    distance,
    query,
)
from .errors import (
    CorruptIndexError,
    DegenerateQueryError,
    DuplicateRecordError,
    InvalidArgumentError,
    InvalidConfigError,
    InvalidImageError,
    NotFoundError,
    ProviderContractError,
    ProviderUnavailableError,
    TileSiftError,
)
from .featurizer import ProviderDescriptor, embed_reference, normalize_tile
from .index_io import load_forest, save_forest
from .ingest import CrawlReport, CrawlSpec, crawl, grid_bounds
from .service import SearchEngine, aggregate_queries, create_app
from .store import EmbeddingStore, TileRecord, resolve_url

__version__ = "0.1.0"

__all__ = [
    "AnnForest",
    "CorruptIndexError",
    "CrawlReport",
    "CrawlSpec",
    "DegenerateQueryError",
    "DuplicateRecordError",
    "EmbeddingStore",
    "InvalidArgumentError",
    "InvalidConfigError",
    "InvalidImageError",
    "NotFoundError",
    "ProviderContractError",
    "ProviderDescriptor",
    "ProviderUnavailableError",
    "QuerySpec",
    "SearchEngine",
    "TileRecord",
    "TileSiftError",
    "aggregate_queries",
    "brute_force",
    "build_forest",
    "crawl",
    "create_app",
    "default_search_budget",
    "distance",
    "embed_reference",
    "grid_bounds",
    "load_forest",
    "normalize_tile",
    "query",
    "resolve_url",
    "save_forest",
    "__version__",
]
