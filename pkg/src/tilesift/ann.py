"""Random-hyperplane forest for approximate nearest neighbor search.

The index is a forest of binary trees.  Every internal node is a hyperplane
chosen from two points sampled inside that node's partition; every leaf is a
bucket of item ids.  A query walks all trees at once through one best-first
priority queue keyed by margin-to-hyperplane, gathers candidate ids from the
leaves it reaches, and finishes with an exact ranking of the candidates.

Construction is a pure function of (items, parameters, seed): rebuilding with
the same inputs yields bit-identical trees, which is what makes the on-disk
format byte-reproducible (see index_io / docs/FORMATS.md).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .rng import derived_rng

METRIC_ANGULAR = "angular"
METRIC_EUCLIDEAN = "euclidean"
METRICS = (METRIC_ANGULAR, METRIC_EUCLIDEAN)

DEFAULT_DIMENSION = 128
DEFAULT_N_TREES = 50
DEFAULT_LEAF_CAPACITY = 16
MIN_SEARCH_BUDGET = 2000

_MAX_SPLIT_ATTEMPTS = 3


def default_search_budget(k: int, n_trees: int) -> int:
    """Default traversal budget: enough leaves from every tree, never tiny."""
    return max(k * n_trees, MIN_SEARCH_BUDGET)


def _check_metric(metric: str) -> str:
    if metric not in METRICS:
        raise InvalidArgumentError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return metric


def as_embedding(values, dimension: int | None = None, metric: str | None = None) -> np.ndarray:
    """Validate and coerce one embedding to a float64 vector.

    Enforces the embedding invariants: exact dimension when one is given,
    all elements finite, and nonzero under the angular metric.
    """
    try:
        vec = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"embedding is not numeric: {exc}") from exc
    if vec.ndim != 1:
        raise InvalidArgumentError(f"embedding must be 1-D, got shape {vec.shape}")
    if dimension is not None and vec.shape[0] != dimension:
        raise InvalidArgumentError(
            f"embedding has dimension {vec.shape[0]}, index dimension is {dimension}"
        )
    if not np.all(np.isfinite(vec)):
        raise InvalidArgumentError("embedding contains NaN or infinity")
    if metric == METRIC_ANGULAR and not np.any(vec):
        raise InvalidArgumentError("zero vector is undefined under the angular metric")
    return vec


def distance(a, b, metric: str = METRIC_ANGULAR) -> float:
    """Distance between two embeddings.

    euclidean: L2 norm of (a - b).  angular: sqrt(2 - 2*cos(a, b)) with the
    radicand clamped at zero, so it is 0 exactly when the normalized vectors
    coincide and sqrt(2) for orthogonal ones.
    """
    _check_metric(metric)
    va = as_embedding(a, metric=metric)
    vb = as_embedding(b, dimension=va.shape[0], metric=metric)
    if metric == METRIC_EUCLIDEAN:
        return float(np.linalg.norm(va - vb))
    cos = np.dot(va, vb) / (np.linalg.norm(va) * np.linalg.norm(vb))
    cos = min(1.0, max(-1.0, float(cos)))
    return float(np.sqrt(max(0.0, 2.0 - 2.0 * cos)))


@dataclass
class HyperplaneSplit:
    """Internal tree node: side(p) = sign(dot(normal, p) - offset)."""

    normal: np.ndarray  # (dimension,) float32, never all-zero
    offset: float
    left: int  # node id of the non-positive side
    right: int  # node id of the positive side


@dataclass
class LeafBucket:
    """Terminal node holding the item ids of one partition."""

    item_ids: np.ndarray  # uint64, ascending


@dataclass
class HyperplaneTree:
    """One tree of the forest; ``nodes[0]`` is the root."""

    nodes: list[HyperplaneSplit | LeafBucket] = field(default_factory=list)


@dataclass
class AnnForest:
    """Immutable built index: trees plus the dense item matrix."""

    dimension: int
    metric: str
    n_trees: int
    leaf_capacity: int
    seed: int
    trees: list[HyperplaneTree]
    items: np.ndarray  # (n_items, dimension) float32

    @property
    def n_items(self) -> int:
        return int(self.items.shape[0])


@dataclass
class QuerySpec:
    """One query: embeddings, result count, traversal budget.

    ``queries[0]`` is the (pre-aggregated) primary embedding.  When more than
    one embedding is present, candidates are ranked by their minimum distance
    to any of them.
    """

    queries: list
    k: int
    search_budget: int


def _coerce_items(items, dimension: int | None, metric: str) -> np.ndarray:
    """Item list -> validated (n, dimension) float32 matrix."""
    if isinstance(items, np.ndarray) and items.ndim == 2:
        matrix = items.astype(np.float32)
    else:
        rows = list(items)
        if not rows:
            dim = dimension if dimension is not None else DEFAULT_DIMENSION
            return np.empty((0, dim), dtype=np.float32)
        lengths = {len(np.atleast_1d(np.asarray(r))) for r in rows}
        if len(lengths) != 1:
            raise InvalidArgumentError(f"items have mixed dimensions: {sorted(lengths)}")
        try:
            matrix = np.asarray(rows, dtype=np.float32)
        except (TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"items are not numeric: {exc}") from exc
    if matrix.ndim != 2:
        raise InvalidArgumentError(f"items must be a list of vectors, got shape {matrix.shape}")
    if matrix.shape[0] == 0:
        dim = dimension if dimension is not None else (matrix.shape[1] or DEFAULT_DIMENSION)
        return np.empty((0, dim), dtype=np.float32)
    if dimension is not None and matrix.shape[1] != dimension:
        raise InvalidArgumentError(
            f"items have dimension {matrix.shape[1]}, expected {dimension}"
        )
    if matrix.shape[1] == 0:
        raise InvalidArgumentError("items must have positive dimension")
    if not np.all(np.isfinite(matrix)):
        raise InvalidArgumentError("items contain NaN or infinity")
    if metric == METRIC_ANGULAR and not np.all(np.any(matrix, axis=1)):
        raise InvalidArgumentError("all-zero item is undefined under the angular metric")
    return matrix


def _choose_split(pts: np.ndarray, ids: np.ndarray, angular: bool, rng: np.random.Generator):
    """Pick a hyperplane for one node; fall back to alternating assignment.

    Samples two distinct points up to three times; normal = p1 - p2 (on
    normalized points with offset 0 under angular, with the midpoint offset
    under euclidean).  If every attempt leaves one side empty the ids are
    split by alternation, which guarantees termination on duplicate-heavy
    data.  Margins use the float32-cast plane so build-time assignment agrees
    with what the serialized file will route.
    """
    n = len(ids)
    last_normal = None
    for _ in range(_MAX_SPLIT_ATTEMPTS):
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        p1 = pts[ids[i]]
        p2 = pts[ids[j]]
        normal = (p1 - p2).astype(np.float32)
        if not np.any(normal):
            continue
        offset = 0.0 if angular else float(np.float32(normal.astype(np.float64) @ ((p1 + p2) * 0.5)))
        margins = pts[ids] @ normal.astype(np.float64) - offset
        right_mask = margins > 0.0
        n_right = int(np.count_nonzero(right_mask))
        if 0 < n_right < n:
            return normal, offset, ids[~right_mask], ids[right_mask]
        last_normal = normal
    if last_normal is None:
        # All sampled pairs coincided (duplicates); any nonzero plane works
        # for routing since both children are explored by the query frontier.
        while True:
            g = rng.standard_normal(pts.shape[1]).astype(np.float32)
            if np.any(g):
                last_normal = g
                break
    return last_normal, 0.0, ids[0::2], ids[1::2]


def _build_tree(pts: np.ndarray, leaf_capacity: int, angular: bool, rng: np.random.Generator) -> HyperplaneTree:
    """Build one tree over all rows of ``pts`` (float64 working copies)."""
    tree = HyperplaneTree()
    nodes = tree.nodes
    all_ids = np.arange(pts.shape[0], dtype=np.uint64)
    # Explicit stack instead of recursion: unlucky splits can chain far deeper
    # than the interpreter's recursion limit at corpus scale.
    stack = [(all_ids, -1, 0)]  # (ids, parent node id, side: 0 left / 1 right)
    while stack:
        ids, parent, side = stack.pop()
        nid = len(nodes)
        if parent >= 0:
            if side == 0:
                nodes[parent].left = nid
            else:
                nodes[parent].right = nid
        if len(ids) <= leaf_capacity:
            nodes.append(LeafBucket(item_ids=np.ascontiguousarray(ids, dtype=np.uint64)))
            continue
        normal, offset, left_ids, right_ids = _choose_split(pts, ids, angular, rng)
        nodes.append(HyperplaneSplit(normal=normal, offset=offset, left=-1, right=-1))
        # Push right first so the left subtree is laid out immediately after
        # its parent (preorder node ids, fixed by the file format).
        stack.append((right_ids, nid, 1))
        stack.append((left_ids, nid, 0))
    return tree


def build_forest(
    items,
    n_trees: int = DEFAULT_N_TREES,
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
    metric: str = METRIC_ANGULAR,
    seed: int = 0,
    dimension: int | None = None,
) -> AnnForest:
    """Build an immutable forest over ``items``.

    Deterministic for fixed inputs: tree ``t`` draws from an RNG stream
    derived from (seed, t), so build order (or building trees in parallel)
    cannot change the result.  An empty item list yields a valid empty
    forest whose queries return no results.
    """
    _check_metric(metric)
    if n_trees < 1:
        raise InvalidArgumentError(f"n_trees must be >= 1, got {n_trees}")
    if leaf_capacity < 1:
        raise InvalidArgumentError(f"leaf_capacity must be >= 1, got {leaf_capacity}")
    if not 0 <= int(seed) < 2**64:
        raise InvalidArgumentError("seed must fit in an unsigned 64-bit integer")
    matrix = _coerce_items(items, dimension, metric)
    angular = metric == METRIC_ANGULAR
    if matrix.shape[0] == 0:
        trees = [HyperplaneTree(nodes=[LeafBucket(item_ids=np.empty(0, dtype=np.uint64))]) for _ in range(n_trees)]
        return AnnForest(
            dimension=int(matrix.shape[1]),
            metric=metric,
            n_trees=n_trees,
            leaf_capacity=leaf_capacity,
            seed=int(seed),
            trees=trees,
            items=matrix,
        )
    pts = matrix.astype(np.float64)
    if angular:
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    trees = [
        _build_tree(pts, leaf_capacity, angular, derived_rng(int(seed), t))
        for t in range(n_trees)
    ]
    return AnnForest(
        dimension=int(matrix.shape[1]),
        metric=metric,
        n_trees=n_trees,
        leaf_capacity=leaf_capacity,
        seed=int(seed),
        trees=trees,
        items=matrix,
    )


def _coerce_queries(forest: AnnForest, queries) -> np.ndarray:
    rows = [as_embedding(q, dimension=forest.dimension, metric=forest.metric) for q in queries]
    if not rows:
        raise InvalidArgumentError("query list must not be empty")
    return np.asarray(rows, dtype=np.float64)


def collect_candidates(forest: AnnForest, queries, search_budget: int) -> list[int]:
    """Walk all trees best-first and return candidate ids in discovery order.

    One shared max-heap holds frontier nodes of every (tree, query) pair,
    keyed by margin-to-hyperplane; roots start at +infinity.  A child's
    priority is capped by its parent's, so a node deep behind several far
    hyperplanes waits behind everything nearer.  Popping stops once at least
    ``search_budget`` distinct ids are collected (whole leaves at a time) or
    the frontier runs dry — the pop sequence itself never depends on the
    budget, which is what makes larger budgets strict supersets.
    """
    if search_budget < 1:
        raise InvalidArgumentError(f"search_budget must be >= 1, got {search_budget}")
    qs = _coerce_queries(forest, queries)
    if forest.metric == METRIC_ANGULAR:
        # Stored points are normalized at build time, so hyperplane margins are
        # comparable across queries only if queries are unit length too.  This
        # affects only fairness between queries sharing the heap: per query the
        # pop order is scale-invariant, and re-ranking uses the raw vectors.
        qs = qs / np.linalg.norm(qs, axis=1, keepdims=True)
    seen: dict[int, None] = {}
    heap: list[tuple[float, int, int, int, int]] = []
    seq = 0
    for qi in range(qs.shape[0]):
        for t in range(len(forest.trees)):
            heap.append((-np.inf, seq, t, 0, qi))
            seq += 1
    heapq.heapify(heap)
    while heap and len(seen) < search_budget:
        neg_priority, _, t, nid, qi = heapq.heappop(heap)
        node = forest.trees[t].nodes[nid]
        if isinstance(node, LeafBucket):
            for item in node.item_ids:
                seen.setdefault(int(item))
            continue
        cap = -neg_priority
        margin = float(node.normal @ qs[qi]) - node.offset
        heapq.heappush(heap, (-min(cap, margin), seq, t, node.right, qi))
        seq += 1
        heapq.heappush(heap, (-min(cap, -margin), seq, t, node.left, qi))
        seq += 1
    return list(seen)


def _distances_from(matrix: np.ndarray, qs: np.ndarray, metric: str) -> np.ndarray:
    """Min-over-queries distances from each row of ``matrix`` (float64)."""
    per_query = np.empty((qs.shape[0], matrix.shape[0]), dtype=np.float64)
    if metric == METRIC_EUCLIDEAN:
        for i in range(qs.shape[0]):
            per_query[i] = np.linalg.norm(matrix - qs[i], axis=1)
    else:
        row_norms = np.linalg.norm(matrix, axis=1)
        for i in range(qs.shape[0]):
            q = qs[i]
            cos = (matrix @ q) / (row_norms * np.linalg.norm(q))
            np.clip(cos, -1.0, 1.0, out=cos)
            per_query[i] = np.sqrt(np.maximum(0.0, 2.0 - 2.0 * cos))
    return per_query.min(axis=0)


def _rank(ids: np.ndarray, dists: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Top k by (distance, item id): equal distances order by ascending id."""
    order = np.lexsort((ids, dists))[:k]
    return [(int(ids[i]), float(dists[i])) for i in order]


def query(forest: AnnForest, spec: QuerySpec) -> list[tuple[int, float]]:
    """Approximate k-nearest: candidate collection, then exact re-ranking."""
    if spec.k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {spec.k}")
    if spec.search_budget < spec.k:
        raise InvalidArgumentError(
            f"search_budget {spec.search_budget} is smaller than k {spec.k}"
        )
    if forest.n_items == 0:
        _coerce_queries(forest, spec.queries)
        return []
    candidates = collect_candidates(forest, spec.queries, spec.search_budget)
    qs = _coerce_queries(forest, spec.queries)
    ids = np.asarray(candidates, dtype=np.int64)
    dists = _distances_from(forest.items[ids].astype(np.float64), qs, forest.metric)
    return _rank(ids, dists, spec.k)


def brute_force(items, q, k: int, metric: str = METRIC_ANGULAR) -> list[tuple[int, float]]:
    """Exact k-nearest by full scan; same ordering contract as query()."""
    _check_metric(metric)
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    matrix = _coerce_items(items, None, metric)
    qv = as_embedding(q, dimension=matrix.shape[1] if matrix.shape[0] else None, metric=metric)
    if matrix.shape[0] == 0:
        return []
    dists = _distances_from(matrix.astype(np.float64), qv[np.newaxis, :], metric)
    return _rank(np.arange(matrix.shape[0], dtype=np.int64), dists, k)
