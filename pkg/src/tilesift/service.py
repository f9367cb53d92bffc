"""HTTP query service: snip image or prior selections in, ranked tile URLs out.

``SearchEngine`` is the framework-free core (also driven directly by the
CLI, so one-shot queries and the API agree result-for-result); ``create_app``
wraps it in a FastAPI app exposing

    POST /v1/search      multipart image, or JSON {embedding | selected_ids}
    POST /v1/refine      JSON with selected_ids from a prior response
    GET  /v1/tiles/{id}  tile record + resolved URL
    GET  /v1/health      index/store/provider counts

The service is stateless: the client owns the accumulating selection set and
sends it whole on every refinement round.  A loaded (forest, store) pair is
an immutable snapshot shared by concurrent requests; reload is a swap of
``app.state.engine``.
"""

from __future__ import annotations

import json
import logging
import time
import uuid
from dataclasses import dataclass

import numpy as np

from .ann import (
    METRIC_ANGULAR,
    AnnForest,
    QuerySpec,
    as_embedding,
    default_search_budget,
    query as ann_query,
)
from .errors import (
    DegenerateQueryError,
    InvalidArgumentError,
    InvalidConfigError,
    InvalidImageError,
    NotFoundError,
    ProviderContractError,
    ProviderUnavailableError,
    TileSiftError,
)
from .featurizer import ProviderDescriptor, make_provider, normalize_tile
from .index_io import load_forest
from .store import EmbeddingStore, resolve_url

try:
    from fastapi import FastAPI, Request
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse
except ImportError:  # pragma: no cover - fastapi is a hard dependency
    FastAPI = Request = CORSMiddleware = JSONResponse = None

logger = logging.getLogger("tilesift.service")

MAX_K = 1000
DEFAULT_K = 20

RANK_CENTROID = "centroid"
RANK_MIN = "min"


def aggregate_queries(embeddings, metric: str = METRIC_ANGULAR) -> np.ndarray:
    """Combine query embeddings into one: component-wise mean, L2-normalized
    under the angular metric.  A single embedding comes back unchanged (up to
    that normalization).  Opposed vectors cancel to zero, which has no
    direction to search along: degenerate-query."""
    vecs = [as_embedding(e, metric=metric) for e in embeddings]
    if not vecs:
        raise InvalidArgumentError("aggregate_queries needs at least one embedding")
    dims = {v.shape[0] for v in vecs}
    if len(dims) != 1:
        raise InvalidArgumentError(f"query embeddings have mixed dimensions: {sorted(dims)}")
    mean = np.mean(np.stack(vecs), axis=0)
    if metric != METRIC_ANGULAR:
        return mean
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise DegenerateQueryError("query embeddings cancel out; nothing to search for")
    return mean / norm


class SearchEngine:
    """An immutable (forest, store, provider) snapshot plus the search flow."""

    def __init__(
        self,
        forest: AnnForest,
        store: EmbeddingStore,
        provider=None,
        url_template: str | None = None,
        search_budget: int | None = None,
    ):
        self.forest = forest
        self.store = store
        self.provider = provider or make_provider(
            ProviderDescriptor(kind="reference", dimension=forest.dimension)
        )
        self.url_template = url_template or store.manifest.url_template
        self.search_budget = search_budget

    @classmethod
    def load(
        cls,
        index_path,
        store_path,
        provider_descriptor: ProviderDescriptor | None = None,
        url_template: str | None = None,
        search_budget: int | None = None,
    ) -> "SearchEngine":
        forest = load_forest(index_path)
        store = EmbeddingStore.open(store_path)
        desc = provider_descriptor
        if desc is None and store.manifest.featurizer:
            desc = ProviderDescriptor.from_json(store.manifest.featurizer)
        if desc is None:
            desc = ProviderDescriptor(kind="reference", dimension=forest.dimension)
        if desc.dimension != forest.dimension:
            raise InvalidConfigError(
                f"provider dimension {desc.dimension} does not match index dimension {forest.dimension}"
            )
        if store.dimension != forest.dimension:
            logger.warning(
                "store dimension %d != index dimension %d", store.dimension, forest.dimension
            )
        return cls(forest, store, make_provider(desc), url_template, search_budget)

    # -- core flows ----------------------------------------------------------

    def search(
        self,
        image_bytes: bytes | None = None,
        image_format: str = "png",
        embedding=None,
        selected_ids=None,
        k: int = DEFAULT_K,
        exclude_ids=(),
        rank_mode: str = RANK_CENTROID,
    ) -> dict:
        """Resolve the query source, aggregate, run the index, shape results."""
        started = time.perf_counter()
        sources = [s is not None for s in (image_bytes, embedding, selected_ids)]
        if sum(sources) != 1:
            raise InvalidArgumentError(
                "exactly one of image, embedding, or selected_ids must be given"
            )
        if not 1 <= int(k) <= MAX_K:
            raise InvalidArgumentError(f"k must be between 1 and {MAX_K}, got {k}")
        k = int(k)
        if rank_mode not in (RANK_CENTROID, RANK_MIN):
            raise InvalidArgumentError(f"unknown rank_mode {rank_mode!r}")

        excluded = {int(i) for i in exclude_ids or ()}
        if image_bytes is not None:
            tile = normalize_tile(image_bytes, image_format)
            query_vecs = [self.provider.embed(tile)]
        elif embedding is not None:
            query_vecs = [as_embedding(embedding, dimension=self.forest.dimension, metric=self.forest.metric)]
        else:
            ids = [int(i) for i in selected_ids]
            if not ids:
                raise InvalidArgumentError("selected_ids must not be empty")
            query_vecs = [self.store.get(i)[1] for i in ids]
            excluded.update(ids)

        if self.forest.n_items == 0:
            return self._respond([], started)

        if rank_mode == RANK_CENTROID or len(query_vecs) == 1:
            queries = [aggregate_queries(query_vecs, self.forest.metric)]
        else:
            queries = query_vecs
        headroom = k + len(excluded)
        budget = self.search_budget or default_search_budget(headroom, self.forest.n_trees)
        ranked = ann_query(self.forest, QuerySpec(queries=queries, k=headroom, search_budget=max(budget, headroom)))
        results = [(item, dist) for item, dist in ranked if item not in excluded][:k]
        return self._respond(results, started)

    def _respond(self, ranked: list[tuple[int, float]], started: float) -> dict:
        results = []
        for item_id, dist in ranked:
            record, _ = self.store.get(item_id)
            results.append(
                {
                    "item_id": item_id,
                    "distance": dist,
                    "url": resolve_url(record, self.url_template),
                    "layer": record.layer,
                    "date": record.date.isoformat(),
                    "tile_matrix": record.tile_matrix,
                    "row": record.row,
                    "col": record.col,
                }
            )
        return {
            "results": results,
            "query_id": uuid.uuid4().hex,
            "elapsed_ms": int((time.perf_counter() - started) * 1000),
        }

    def tile_meta(self, item_id: int) -> dict:
        record, _ = self.store.get(item_id)
        d = record.to_json()
        d["url"] = resolve_url(record, self.url_template)
        return d

    def health(self) -> dict:
        index_count = self.forest.n_items
        store_count = self.store.count
        return {
            "status": "ok",
            "index_items": index_count,
            "dimension": self.forest.dimension,
            "metric": self.forest.metric,
            "store_items": store_count,
            "provider": self.provider.descriptor.kind,
            "consistent": index_count == store_count and self.forest.dimension == self.store.dimension,
        }


@dataclass
class ServiceConfig:
    index_path: str
    store_path: str
    provider: ProviderDescriptor | None = None
    url_template: str | None = None
    host: str = "127.0.0.1"
    port: int = 8756
    cors_origin: str = "*"
    search_budget: int | None = None


def load_config(path) -> ServiceConfig:
    """Parse and validate the service config file; errors name the field."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config file {path}: {exc}") from exc
    except ValueError as exc:
        raise InvalidConfigError(f"config file {path} is not valid JSON: {exc}") from exc

    def need(fieldname: str) -> str:
        value = raw.get(fieldname)
        if not isinstance(value, str) or not value:
            raise InvalidConfigError(f"config field '{fieldname}' must be a non-empty string")
        return value

    provider = None
    if raw.get("provider") is not None:
        if not isinstance(raw["provider"], dict):
            raise InvalidConfigError("config field 'provider' must be an object")
        try:
            provider = ProviderDescriptor.from_json(raw["provider"])
        except (InvalidArgumentError, ValueError, TypeError) as exc:
            raise InvalidConfigError(f"config field 'provider' is invalid: {exc}") from exc
    port = raw.get("port", 8756)
    if not isinstance(port, int) or not 1 <= port <= 65535:
        raise InvalidConfigError("config field 'port' must be an integer in [1, 65535]")
    budget = raw.get("search_budget")
    if budget is not None and (not isinstance(budget, int) or budget < 1):
        raise InvalidConfigError("config field 'search_budget' must be a positive integer")
    return ServiceConfig(
        index_path=need("index_path"),
        store_path=need("store_path"),
        provider=provider,
        url_template=raw.get("url_template"),
        host=raw.get("host", "127.0.0.1"),
        port=port,
        cors_origin=raw.get("cors_origin", "*"),
        search_budget=budget,
    )


def _error_status(exc: TileSiftError, selected_lookup: bool = False) -> int:
    if isinstance(exc, (ProviderUnavailableError, ProviderContractError)):
        return 502
    if isinstance(exc, NotFoundError):
        # Unknown ids inside a search body are a bad request; only the
        # /v1/tiles/{id} path lookup is a true 404.
        return 400 if selected_lookup else 404
    return 400


def create_app(engine: SearchEngine, cors_origin: str = "*"):
    app = FastAPI(title="tilesift", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[cors_origin] if cors_origin != "*" else ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.engine = engine

    def fail(exc: TileSiftError, status: int) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": exc.code, "detail": str(exc)})

    async def parse_request(request: Request) -> dict:
        ctype = request.headers.get("content-type", "")
        if ctype.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("image")
            if upload is None:
                raise InvalidArgumentError("multipart search needs an 'image' file field")
            data = await upload.read()
            fmt = "png"
            if (upload.content_type or "").endswith("jpeg") or str(upload.filename or "").lower().endswith((".jpg", ".jpeg")):
                fmt = "jpeg"
            out = {"image_bytes": data, "image_format": fmt}
            if form.get("k") is not None:
                out["k"] = _parse_int(form.get("k"), "k")
            if form.get("exclude_ids"):
                out["exclude_ids"] = _parse_id_list(form.get("exclude_ids"), "exclude_ids")
            return out
        try:
            body = await request.json()
        except ValueError as exc:
            raise InvalidArgumentError(f"request body is neither multipart nor JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise InvalidArgumentError("JSON body must be an object")
        out = {}
        if body.get("embedding") is not None:
            out["embedding"] = body["embedding"]
        if body.get("selected_ids") is not None:
            out["selected_ids"] = _parse_id_list(body["selected_ids"], "selected_ids")
        if body.get("exclude_ids") is not None:
            out["exclude_ids"] = _parse_id_list(body["exclude_ids"], "exclude_ids")
        if body.get("k") is not None:
            out["k"] = _parse_int(body["k"], "k")
        if body.get("rank_mode") is not None:
            out["rank_mode"] = str(body["rank_mode"])
        return out

    def run_search(stage: str, params: dict):
        engine: SearchEngine = app.state.engine
        try:
            response = engine.search(**params)
        except TileSiftError as exc:
            logger.info("%s failed error=%s detail=%s", stage, exc.code, exc)
            return fail(exc, _error_status(exc, selected_lookup=True))
        logger.info(
            "%s k=%s results=%d elapsed_ms=%d",
            stage, params.get("k", DEFAULT_K), len(response["results"]), response["elapsed_ms"],
        )
        return response

    @app.post("/v1/search")
    async def search(request: Request):
        try:
            params = await parse_request(request)
        except TileSiftError as exc:
            return fail(exc, 400)
        return run_search("search", params)

    @app.post("/v1/refine")
    async def refine(request: Request):
        try:
            params = await parse_request(request)
            if not params.get("selected_ids"):
                raise InvalidArgumentError("refine requires non-empty selected_ids")
        except TileSiftError as exc:
            return fail(exc, 400)
        return run_search("refine", params)

    @app.get("/v1/tiles/{item_id}")
    async def tile_meta(item_id: int):
        try:
            return app.state.engine.tile_meta(item_id)
        except TileSiftError as exc:
            return fail(exc, _error_status(exc))

    @app.get("/v1/health")
    async def health():
        return app.state.engine.health()

    return app


def _parse_int(value, fieldname: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"field '{fieldname}' must be an integer") from exc


def _parse_id_list(value, fieldname: str) -> list[int]:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    if not isinstance(value, (list, tuple)):
        raise InvalidArgumentError(f"field '{fieldname}' must be a list of item ids")
    try:
        return [int(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"field '{fieldname}' must contain integers") from exc
