"""Operator command line: ingest, build, query, eval, serve.

Exit codes: 0 success, 1 fatal error, 2 completed with partial failures.
Every flag can also come from a JSON config file (--config); explicit flags
win over config values.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import ann
from .errors import InvalidConfigError, TileSiftError
from .featurizer import ProviderDescriptor
from .index_io import load_forest, save_forest
from .ingest import CrawlAbortedError, CrawlSpec, crawl, grid_bounds
from .service import SearchEngine, create_app, load_config
from .store import EmbeddingStore

logger = logging.getLogger("tilesift")


def _parse_range(text: str) -> tuple[int, int]:
    """'3' -> (3, 3); '0:15' -> (0, 15) inclusive."""
    parts = str(text).split(":")
    if len(parts) == 1:
        v = int(parts[0])
        return v, v
    if len(parts) == 2:
        return int(parts[0]), int(parts[1])
    raise argparse.ArgumentTypeError(f"bad range {text!r}, expected MIN:MAX")


def _load_flag_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except ValueError as exc:
            raise InvalidConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InvalidConfigError(f"config file {path} must hold a JSON object")
    return cfg


def _pick(ns, cfg: dict, key: str, default=None):
    """Effective value for one option: explicit flag > config file > default."""
    value = getattr(ns, key, None)
    if value is not None:
        return value
    if key in cfg:
        return cfg[key]
    return default


def _provider_from_options(ns, cfg: dict) -> ProviderDescriptor:
    kind = _pick(ns, cfg, "provider", "reference")
    dimension = int(_pick(ns, cfg, "dim", ann.DEFAULT_DIMENSION))
    if kind == "reference":
        return ProviderDescriptor(kind="reference", dimension=dimension, seed=int(_pick(ns, cfg, "feat_seed", 0)))
    endpoint = _pick(ns, cfg, "endpoint")
    return ProviderDescriptor(kind="external", dimension=dimension, endpoint=endpoint)


def cmd_ingest(ns) -> int:
    cfg = _load_flag_config(ns.config)
    provider = _provider_from_options(ns, cfg)
    template = _pick(ns, cfg, "template")
    store_path = _pick(ns, cfg, "store")
    if not template or not store_path:
        print("ingest needs --template and --store", file=sys.stderr)
        return 1
    dates = _pick(ns, cfg, "dates")
    if isinstance(dates, str):
        dates = [d for d in dates.replace(",", " ").split() if d]
    level = int(_pick(ns, cfg, "level", 0))
    n_rows, n_cols = grid_bounds(level)
    rows = _pick(ns, cfg, "rows")
    cols = _pick(ns, cfg, "cols")
    spec = CrawlSpec(
        layer=_pick(ns, cfg, "layer", "default"),
        dates=dates or [],
        tile_matrix=level,
        row_range=_parse_range(rows) if rows is not None else (0, n_rows - 1),
        col_range=_parse_range(cols) if cols is not None else (0, n_cols - 1),
        url_template=template,
        provider=provider,
        max_parallel=int(_pick(ns, cfg, "parallel", 4)),
        backoff_s=float(_pick(ns, cfg, "backoff", 0.5)),
        min_delay_s=float(_pick(ns, cfg, "min_delay", 0.0)),
    )
    if Path(store_path, "manifest.json").exists():
        store = EmbeddingStore.open(store_path)
    else:
        store = EmbeddingStore.create(
            store_path,
            dimension=provider.dimension,
            url_template=template,
            featurizer=provider.to_json(),
        )
    with store:
        try:
            report = crawl(spec, store)
        except CrawlAbortedError as exc:
            print(json.dumps(exc.report.to_json(), indent=2))
            print(f"crawl aborted: {exc}", file=sys.stderr)
            return 1
    print(json.dumps(report.to_json(), indent=2))
    return 0 if report.failed == 0 else 2


def cmd_build(ns) -> int:
    cfg = _load_flag_config(ns.config)
    store_path = _pick(ns, cfg, "store")
    index_path = _pick(ns, cfg, "index")
    if not store_path or not index_path:
        print("build needs --store and --index", file=sys.stderr)
        return 1
    with EmbeddingStore.open(store_path) as store:
        items = store.export_embeddings()
        if items.shape[0] == 0:
            print("warning: store is empty; writing an empty index", file=sys.stderr)
        started = time.perf_counter()
        forest = ann.build_forest(
            items,
            n_trees=int(_pick(ns, cfg, "trees", ann.DEFAULT_N_TREES)),
            leaf_capacity=int(_pick(ns, cfg, "leaf", ann.DEFAULT_LEAF_CAPACITY)),
            metric=_pick(ns, cfg, "metric", ann.METRIC_ANGULAR),
            seed=int(_pick(ns, cfg, "seed", 0)),
            dimension=store.dimension,
        )
        save_forest(forest, index_path)
        elapsed = time.perf_counter() - started
    print(f"items={forest.n_items} trees={forest.n_trees} build_seconds={elapsed:.2f}")
    return 0


def cmd_query(ns) -> int:
    cfg = _load_flag_config(ns.config)
    budget = _pick(ns, cfg, "budget")
    try:
        engine = SearchEngine.load(
            _pick(ns, cfg, "index"), _pick(ns, cfg, "store"),
            search_budget=int(budget) if budget is not None else None,
        )
    except (TileSiftError, OSError) as exc:
        print(f"cannot load index/store: {exc}", file=sys.stderr)
        return 1
    k = int(_pick(ns, cfg, "k", 10))
    try:
        if ns.image is not None:
            raw = Path(ns.image).read_bytes()
            fmt = "png" if ns.image.lower().endswith(".png") else "jpeg"
            response = engine.search(image_bytes=raw, image_format=fmt, k=k)
        elif ns.exclude_self:
            response = engine.search(selected_ids=[ns.id], k=k)
        else:
            _, embedding = engine.store.get(ns.id)
            response = engine.search(embedding=embedding, k=k)
    except (TileSiftError, OSError) as exc:
        print(f"query failed: {exc}", file=sys.stderr)
        return 1
    if ns.json:
        print(json.dumps(response, indent=2))
    else:
        for rank, r in enumerate(response["results"], start=1):
            print(f"{rank} {r['distance']:.6f} {r['url']}")
    return 0


def cmd_eval(ns) -> int:
    cfg = _load_flag_config(ns.config)
    forest = load_forest(_pick(ns, cfg, "index"))
    with EmbeddingStore.open(_pick(ns, cfg, "store")) as store:
        items = store.export_embeddings()
    n_queries = int(_pick(ns, cfg, "queries", 100))
    k = int(_pick(ns, cfg, "k", 10))
    budget = _pick(ns, cfg, "budget")
    budget = int(budget) if budget is not None else ann.default_search_budget(k, forest.n_trees)
    seed = int(_pick(ns, cfg, "seed", 0))
    if items.shape[0] == 0:
        print("store is empty; nothing to evaluate", file=sys.stderr)
        return 1

    rng = np.random.Generator(np.random.PCG64(seed))
    sample = rng.integers(0, items.shape[0], size=n_queries)
    latencies = []
    recalls = []
    for item_id in sample:
        q = items[int(item_id)]
        started = time.perf_counter()
        got = ann.query(forest, ann.QuerySpec(queries=[q], k=k, search_budget=budget))
        latencies.append((time.perf_counter() - started) * 1000.0)
        truth = ann.brute_force(items, q, k, metric=forest.metric)
        true_ids = {i for i, _ in truth}
        hit = sum(1 for i, _ in got if i in true_ids)
        recalls.append(hit / min(k, items.shape[0]))
    report = {
        "queries": n_queries,
        "k": k,
        "search_budget": budget,
        "recall_at_k": round(float(np.mean(recalls)), 4),
        "p50_ms": round(float(np.percentile(latencies, 50)), 2),
        "p95_ms": round(float(np.percentile(latencies, 95)), 2),
    }
    if ns.json:
        print(json.dumps(report, indent=2))
    else:
        print(" ".join(f"{key}={value}" for key, value in report.items()))
    return 0


def cmd_serve(ns) -> int:
    import uvicorn

    try:
        config = load_config(ns.config)
        engine = SearchEngine.load(
            config.index_path,
            config.store_path,
            provider_descriptor=config.provider,
            url_template=config.url_template,
            search_budget=config.search_budget,
        )
    except (TileSiftError, OSError) as exc:
        print(f"cannot start service: {exc}", file=sys.stderr)
        return 1
    host = ns.host or config.host
    port = int(ns.port) if ns.port is not None else config.port
    app = create_app(engine, cors_origin=config.cors_origin)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"server failed to bind {host}:{port}: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tilesift", description="Reverse image search over satellite tiles.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="crawl tiles into an embedding store")
    p.add_argument("--layer")
    p.add_argument("--dates", help="comma-separated ISO dates")
    p.add_argument("--level", type=int)
    p.add_argument("--rows", help="inclusive MIN:MAX (default: full grid)")
    p.add_argument("--cols", help="inclusive MIN:MAX (default: full grid)")
    p.add_argument("--template", help="tile URL template")
    p.add_argument("--store")
    p.add_argument("--provider", choices=["reference", "external"])
    p.add_argument("--endpoint", help="external provider base URL")
    p.add_argument("--feat-seed", dest="feat_seed", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--parallel", type=int)
    p.add_argument("--backoff", type=float)
    p.add_argument("--min-delay", dest="min_delay", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build", help="build the ANN index from a store")
    p.add_argument("--store")
    p.add_argument("--index")
    p.add_argument("--trees", type=int)
    p.add_argument("--leaf", type=int)
    p.add_argument("--metric", choices=list(ann.METRICS))
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="one-shot similarity query")
    p.add_argument("--index")
    p.add_argument("--store")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--image", help="query image path")
    source.add_argument("--id", type=int, help="query by stored item id")
    p.add_argument("--k", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--json", action="store_true")
    p.add_argument("--exclude-self", dest="exclude_self", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="recall and latency against the exact oracle")
    p.add_argument("--index")
    p.add_argument("--store")
    p.add_argument("--queries", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--json", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the query service")
    p.add_argument("--config", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if ns.verbose > 1 else logging.INFO if ns.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return ns.func(ns)
    except TileSiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
