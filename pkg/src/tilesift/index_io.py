"""Binary index file reader/writer.

Little-endian layout (full description in docs/FORMATS.md):

    magic "TSF1" | u32 version | u32 dimension | u8 metric | u32 n_trees |
    u32 leaf_capacity | u64 seed | u64 n_items | items (n_items * dim f32) |
    per tree: u64 node count, then tagged nodes --
        tag u8 0: split  = dim * f32 normal, f32 offset, u64 left, u64 right
        tag u8 1: leaf   = u32 count, count * u64 item ids

Node ids are positions in the tree's node array; node 0 is the root.  Any
structural problem raises CorruptIndexError naming the field that failed.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .ann import AnnForest, HyperplaneSplit, HyperplaneTree, LeafBucket, METRICS
from .errors import CorruptIndexError, InvalidArgumentError

MAGIC = b"TSF1"
FORMAT_VERSION = 1

_METRIC_TO_BYTE = {m: i for i, m in enumerate(METRICS)}
_BYTE_TO_METRIC = dict(enumerate(METRICS))

_TAG_SPLIT = 0
_TAG_LEAF = 1


def save_forest(forest: AnnForest, path: str | os.PathLike) -> None:
    """Serialize a forest; identical forests produce identical bytes."""
    out = bytearray()
    out += MAGIC
    out += struct.pack(
        "<IIBII",
        FORMAT_VERSION,
        forest.dimension,
        _METRIC_TO_BYTE[forest.metric],
        forest.n_trees,
        forest.leaf_capacity,
    )
    out += struct.pack("<QQ", forest.seed, forest.n_items)
    out += np.ascontiguousarray(forest.items, dtype="<f4").tobytes()
    for tree in forest.trees:
        out += struct.pack("<Q", len(tree.nodes))
        for node in tree.nodes:
            if isinstance(node, HyperplaneSplit):
                out += struct.pack("<B", _TAG_SPLIT)
                out += np.ascontiguousarray(node.normal, dtype="<f4").tobytes()
                out += struct.pack("<fQQ", node.offset, node.left, node.right)
            else:
                count = len(node.item_ids)
                if count > 0xFFFFFFFF:
                    raise InvalidArgumentError("leaf bucket too large for the u32 count field")
                out += struct.pack("<BI", _TAG_LEAF, count)
                out += np.ascontiguousarray(node.item_ids, dtype="<u8").tobytes()
    with open(path, "wb") as fh:
        fh.write(out)


class _Reader:
    """Cursor over the file bytes; every read names its field on failure."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, nbytes: int, fieldname: str) -> memoryview:
        end = self.pos + nbytes
        if end > len(self.data):
            raise CorruptIndexError(f"truncated index file while reading {fieldname}")
        view = memoryview(self.data)[self.pos:end]
        self.pos = end
        return view

    def unpack(self, fmt: str, fieldname: str):
        values = struct.unpack(fmt, self.take(struct.calcsize(fmt), fieldname))
        return values[0] if len(values) == 1 else values

    def array(self, dtype: str, count: int, fieldname: str) -> np.ndarray:
        raw = self.take(np.dtype(dtype).itemsize * count, fieldname)
        return np.frombuffer(raw, dtype=dtype, count=count)


def load_forest(path: str | os.PathLike) -> AnnForest:
    """Read an index file back into a forest, validating every field."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    magic = bytes(r.take(4, "magic"))
    if magic != MAGIC:
        raise CorruptIndexError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise CorruptIndexError(f"unsupported version {version}, expected {FORMAT_VERSION}")
    dimension = r.unpack("<I", "dimension")
    if dimension == 0:
        raise CorruptIndexError("dimension must be positive")
    metric_byte = r.unpack("<B", "metric")
    if metric_byte not in _BYTE_TO_METRIC:
        raise CorruptIndexError(f"unknown metric byte {metric_byte}")
    n_trees = r.unpack("<I", "n_trees")
    if n_trees == 0:
        raise CorruptIndexError("n_trees must be positive")
    leaf_capacity = r.unpack("<I", "leaf_capacity")
    if leaf_capacity == 0:
        raise CorruptIndexError("leaf_capacity must be positive")
    seed = r.unpack("<Q", "seed")
    n_items = r.unpack("<Q", "n_items")
    items = r.array("<f4", n_items * dimension, "items").reshape(n_items, dimension)
    trees = []
    for t in range(n_trees):
        node_count = r.unpack("<Q", f"tree {t} node count")
        if node_count == 0:
            raise CorruptIndexError(f"tree {t} has zero nodes")
        nodes: list[HyperplaneSplit | LeafBucket] = []
        for n in range(node_count):
            where = f"tree {t} node {n}"
            tag = r.unpack("<B", f"{where} tag")
            if tag == _TAG_SPLIT:
                normal = r.array("<f4", dimension, f"{where} normal")
                offset, left, right = r.unpack("<fQQ", f"{where} split fields")
                if left >= node_count or right >= node_count:
                    raise CorruptIndexError(f"{where} child id out of range")
                nodes.append(HyperplaneSplit(normal=normal, offset=float(offset), left=int(left), right=int(right)))
            elif tag == _TAG_LEAF:
                count = r.unpack("<I", f"{where} leaf count")
                ids = r.array("<u8", count, f"{where} leaf item ids")
                if count and int(ids.max()) >= n_items:
                    raise CorruptIndexError(f"{where} leaf item id out of range")
                nodes.append(LeafBucket(item_ids=ids))
            else:
                raise CorruptIndexError(f"{where} has unknown tag {tag}")
        trees.append(HyperplaneTree(nodes=nodes))
    if r.pos != len(data):
        raise CorruptIndexError(f"{len(data) - r.pos} trailing bytes after the last tree")
    return AnnForest(
        dimension=int(dimension),
        metric=_BYTE_TO_METRIC[metric_byte],
        n_trees=int(n_trees),
        leaf_capacity=int(leaf_capacity),
        seed=int(seed),
        trees=trees,
        items=items,
    )
