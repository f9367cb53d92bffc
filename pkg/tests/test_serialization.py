import struct

import numpy as np
import pytest

from tilesift.ann import (
    METRIC_ANGULAR,
    METRIC_EUCLIDEAN,
    HyperplaneSplit,
    LeafBucket,
    QuerySpec,
    build_forest,
    query,
)
from tilesift.errors import CorruptIndexError
from tilesift.index_io import MAGIC, load_forest, save_forest

from conftest import random_points


def small_forest(metric=METRIC_ANGULAR, n=120, dim=8, seed=4):
    return build_forest(random_points(n, dim, seed=seed), n_trees=5, leaf_capacity=6,
                        metric=metric, seed=seed)


def forests_equal(a, b) -> bool:
    if (a.dimension, a.metric, a.n_trees, a.leaf_capacity, a.seed) != \
       (b.dimension, b.metric, b.n_trees, b.leaf_capacity, b.seed):
        return False
    if not np.array_equal(a.items, b.items):
        return False
    for ta, tb in zip(a.trees, b.trees):
        if len(ta.nodes) != len(tb.nodes):
            return False
        for na, nb in zip(ta.nodes, tb.nodes):
            if type(na) is not type(nb):
                return False
            if isinstance(na, HyperplaneSplit):
                if not np.array_equal(na.normal, nb.normal) or na.offset != nb.offset:
                    return False
                if (na.left, na.right) != (nb.left, nb.right):
                    return False
            else:
                if not np.array_equal(na.item_ids, nb.item_ids):
                    return False
    return True


@pytest.mark.parametrize("metric", [METRIC_ANGULAR, METRIC_EUCLIDEAN])
def test_round_trip_structure(tmp_path, metric):
    forest = small_forest(metric)
    path = tmp_path / "f.idx"
    save_forest(forest, path)
    loaded = load_forest(path)
    assert forests_equal(forest, loaded)


def test_round_trip_query_results(tmp_path):
    forest = small_forest()
    path = tmp_path / "f.idx"
    save_forest(forest, path)
    loaded = load_forest(path)
    rng = np.random.default_rng(0)
    for _ in range(30):
        q = rng.standard_normal(8)
        spec = QuerySpec(queries=[q], k=7, search_budget=60)
        assert query(forest, spec) == query(loaded, spec)


def test_empty_forest_round_trip(tmp_path):
    forest = build_forest(np.empty((0, 16), dtype=np.float32), n_trees=3,
                          leaf_capacity=4, metric=METRIC_ANGULAR, seed=0, dimension=16)
    path = tmp_path / "empty.idx"
    save_forest(forest, path)
    loaded = load_forest(path)
    assert loaded.n_items == 0
    assert query(loaded, QuerySpec(queries=[np.ones(16)], k=3, search_budget=5)) == []


def test_identical_builds_are_byte_identical(tmp_path):
    pts = random_points(200, 16, seed=5)
    a, b = tmp_path / "a.idx", tmp_path / "b.idx"
    save_forest(build_forest(pts, n_trees=6, leaf_capacity=8, seed=42, metric=METRIC_ANGULAR), a)
    save_forest(build_forest(pts, n_trees=6, leaf_capacity=8, seed=42, metric=METRIC_ANGULAR), b)
    assert a.read_bytes() == b.read_bytes()


def test_different_seed_changes_bytes(tmp_path):
    pts = random_points(200, 16, seed=5)
    a, b = tmp_path / "a.idx", tmp_path / "b.idx"
    save_forest(build_forest(pts, n_trees=6, leaf_capacity=8, seed=1, metric=METRIC_ANGULAR), a)
    save_forest(build_forest(pts, n_trees=6, leaf_capacity=8, seed=2, metric=METRIC_ANGULAR), b)
    assert a.read_bytes() != b.read_bytes()


def test_bad_magic_names_magic(tmp_path):
    path = tmp_path / "f.idx"
    save_forest(small_forest(), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(raw)
    with pytest.raises(CorruptIndexError, match="magic"):
        load_forest(path)


def test_bad_version_names_version(tmp_path):
    path = tmp_path / "f.idx"
    save_forest(small_forest(), path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 999)
    path.write_bytes(raw)
    with pytest.raises(CorruptIndexError, match="version"):
        load_forest(path)


def test_bad_metric_byte(tmp_path):
    path = tmp_path / "f.idx"
    save_forest(small_forest(), path)
    raw = bytearray(path.read_bytes())
    raw[12] = 7  # metric byte follows version(4) + dimension(4) at offset 12
    path.write_bytes(raw)
    with pytest.raises(CorruptIndexError, match="metric"):
        load_forest(path)


@pytest.mark.parametrize("keep_fraction", [0.3, 0.6, 0.9, 0.99])
def test_truncation_always_detected_with_field_name(tmp_path, keep_fraction):
    path = tmp_path / "f.idx"
    save_forest(small_forest(), path)
    raw = path.read_bytes()
    path.write_bytes(raw[: int(len(raw) * keep_fraction)])
    with pytest.raises(CorruptIndexError) as err:
        load_forest(path)
    assert "while reading" in str(err.value), "message must name the field being read"


def test_every_truncation_point_raises(tmp_path):
    # exhaustive over a tiny index: no truncation length may crash with
    # anything but CorruptIndexError, and none may load successfully
    forest = build_forest(random_points(10, 3, seed=1), n_trees=2, leaf_capacity=2,
                          metric=METRIC_EUCLIDEAN, seed=0)
    path = tmp_path / "tiny.idx"
    save_forest(forest, path)
    raw = path.read_bytes()
    for cut in range(len(raw)):
        path.write_bytes(raw[:cut])
        with pytest.raises(CorruptIndexError):
            load_forest(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "f.idx"
    save_forest(small_forest(), path)
    path.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(CorruptIndexError, match="trailing"):
        load_forest(path)


def test_out_of_range_leaf_item_rejected(tmp_path):
    forest = small_forest(n=50)
    # corrupt an in-memory copy: point a leaf at a nonexistent item
    for tree in forest.trees:
        for node in tree.nodes:
            if isinstance(node, LeafBucket) and len(node.item_ids):
                node.item_ids[0] = 10_000
                break
        else:
            continue
        break
    path = tmp_path / "f.idx"
    save_forest(forest, path)
    with pytest.raises(CorruptIndexError, match="item id"):
        load_forest(path)


def test_out_of_range_child_rejected(tmp_path):
    forest = small_forest(n=50)
    for node in forest.trees[0].nodes:
        if isinstance(node, HyperplaneSplit):
            node.right = 9_999
            break
    path = tmp_path / "f.idx"
    save_forest(forest, path)
    with pytest.raises(CorruptIndexError, match="child"):
        load_forest(path)


def test_missing_file_is_oserror(tmp_path):
    with pytest.raises(OSError):
        load_forest(tmp_path / "absent.idx")
