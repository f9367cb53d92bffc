"""Tile image -> 128-d embedding.

Two providers share one contract: the built-in reference featurizer (a
deterministic, non-learned descriptor + seeded random projection, so the
whole pipeline is testable without model weights) and an external HTTP
provider where a trained model lives.  Both must return exactly the
declared dimension of finite reals; everything downstream depends on that
width staying fixed.

Reference descriptor, version 1 (768 values, layout frozen in
docs/FORMATS.md): 3 x 32-bin intensity histograms, an 8x8 mean-pooled
per-channel thumbnail, and zero padding reserved for later versions.  The
descriptor is projected to the target dimension by a Gaussian matrix drawn
once per seed, then L2-normalized.
"""

from __future__ import annotations

import io
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import requests
from PIL import Image, UnidentifiedImageError

from .errors import (
    InvalidArgumentError,
    InvalidImageError,
    ProviderContractError,
    ProviderUnavailableError,
)
from .rng import derived_rng

TILE_SIZE = 256
DESCRIPTOR_VERSION = 1
DESCRIPTOR_SIZE = 768  # 3*32 histogram + 3*8*8 thumbnail + 480 reserved zeros
_HIST_BINS = 32
_THUMB = 8

DEFAULT_DIMENSION = 128
_PROJECTION_STREAM = 0x66656174  # distinct spawn key for the projection draw

PROVIDER_REFERENCE = "reference"
PROVIDER_EXTERNAL = "external"

DEFAULT_TIMEOUT_S = 30.0
DEFAULT_RETRIES = 3
DEFAULT_MAX_IN_FLIGHT = 4


@dataclass(frozen=True)
class TileImage:
    """Decoded RGB tile: row-major bytes, 3 channels, 0-255."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        expected = self.width * self.height * 3
        if self.width < 1 or self.height < 1 or len(self.pixels) != expected:
            raise InvalidArgumentError(
                f"pixel buffer has {len(self.pixels)} bytes, expected {expected} "
                f"for {self.width}x{self.height} RGB"
            )


@dataclass(frozen=True)
class ProviderDescriptor:
    kind: str  # "reference" | "external"
    dimension: int = DEFAULT_DIMENSION
    endpoint: str | None = None
    seed: int = 0  # reference projection seed

    def __post_init__(self):
        if self.kind not in (PROVIDER_REFERENCE, PROVIDER_EXTERNAL):
            raise InvalidArgumentError(f"unknown provider kind {self.kind!r}")
        if self.dimension < 1:
            raise InvalidArgumentError("provider dimension must be positive")
        if self.kind == PROVIDER_EXTERNAL and not self.endpoint:
            raise InvalidArgumentError("external provider needs an endpoint URL")

    def to_json(self) -> dict:
        d = {"kind": self.kind, "dimension": self.dimension}
        if self.kind == PROVIDER_EXTERNAL:
            d["endpoint"] = self.endpoint
        else:
            d["seed"] = self.seed
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ProviderDescriptor":
        return cls(
            kind=d.get("kind", PROVIDER_REFERENCE),
            dimension=int(d.get("dimension", DEFAULT_DIMENSION)),
            endpoint=d.get("endpoint"),
            seed=int(d.get("seed", 0)),
        )


def normalize_tile(raw_bytes: bytes, declared_format: str) -> TileImage:
    """Decode, convert to RGB, and resize to 256x256 (bilinear) if needed."""
    fmt = declared_format.lower().lstrip(".")
    if fmt == "jpg":
        fmt = "jpeg"
    if fmt not in ("jpeg", "png"):
        raise InvalidArgumentError(f"unsupported tile format {declared_format!r}")
    try:
        img = Image.open(io.BytesIO(raw_bytes))
        decoded_format = (img.format or "").lower()
        img = img.convert("RGB")
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise InvalidImageError(f"cannot decode {fmt} tile: {exc}") from exc
    if decoded_format != fmt:
        raise InvalidImageError(f"tile declared {fmt} but decoded as {decoded_format or 'unknown'}")
    if img.size != (TILE_SIZE, TILE_SIZE):
        img = img.resize((TILE_SIZE, TILE_SIZE), Image.BILINEAR)
    return TileImage(width=TILE_SIZE, height=TILE_SIZE, pixels=img.tobytes())


def tile_to_png(img: TileImage) -> bytes:
    """Lossless re-encode, used when forwarding a tile to a provider."""
    pil = Image.frombytes("RGB", (img.width, img.height), img.pixels)
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


@lru_cache(maxsize=8)
def _projection(seed: int, dimension: int) -> np.ndarray:
    """(dimension, 768) Gaussian projection, fixed at first use per seed."""
    rng = derived_rng(seed, _PROJECTION_STREAM)
    return rng.standard_normal((dimension, DESCRIPTOR_SIZE))


def raw_descriptor(img: TileImage) -> np.ndarray:
    """Version-1 descriptor of a normalized tile (768 float64 in [0, 1])."""
    if img.width != TILE_SIZE or img.height != TILE_SIZE:
        raise InvalidArgumentError(
            f"descriptor expects a normalized {TILE_SIZE}x{TILE_SIZE} tile, got {img.width}x{img.height}"
        )
    arr = np.frombuffer(img.pixels, dtype=np.uint8).reshape(TILE_SIZE, TILE_SIZE, 3)
    parts = []
    for c in range(3):
        hist = np.bincount(arr[:, :, c].ravel() >> 3, minlength=_HIST_BINS)
        parts.append(hist.astype(np.float64) / (TILE_SIZE * TILE_SIZE))
    block = TILE_SIZE // _THUMB
    pooled = arr.reshape(_THUMB, block, _THUMB, block, 3).mean(axis=(1, 3)) / 255.0
    for c in range(3):
        parts.append(pooled[:, :, c].ravel())
    parts.append(np.zeros(DESCRIPTOR_SIZE - 3 * _HIST_BINS - 3 * _THUMB * _THUMB))
    return np.concatenate(parts)


def embed_reference(img: TileImage, seed: int = 0, dimension: int = DEFAULT_DIMENSION) -> np.ndarray:
    """Deterministic embedding: descriptor, seeded projection, L2 normalize."""
    desc = raw_descriptor(img)
    vec = _projection(int(seed), int(dimension)) @ desc
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise InvalidArgumentError("image descriptor projected to the zero vector")
    return (vec / norm).astype(np.float32)


def embed_external(
    img: TileImage,
    provider: ProviderDescriptor,
    timeout: float = DEFAULT_TIMEOUT_S,
    retries: int = DEFAULT_RETRIES,
    session: requests.Session | None = None,
) -> np.ndarray:
    """POST the tile to the provider and validate the returned vector.

    Wire contract: POST {endpoint}/embed with the PNG bytes as the body;
    the answer must be JSON {"dimension": d, "values": [d finite reals]}
    with d equal to the declared provider dimension.  Transport failures
    and 5xx responses are retried; contract violations are not.
    """
    if provider.kind != PROVIDER_EXTERNAL:
        raise InvalidArgumentError("embed_external requires an external provider descriptor")
    url = provider.endpoint
    if not url.rstrip("/").endswith("/embed"):
        url = url.rstrip("/") + "/embed"
    body = tile_to_png(img)
    http = session or requests
    last_error = None
    for attempt in range(1 + retries):
        try:
            resp = http.post(url, data=body, headers={"Content-Type": "image/png"}, timeout=timeout)
        except requests.RequestException as exc:
            last_error = f"transport error: {exc}"
            continue
        if resp.status_code != 200:
            last_error = f"HTTP {resp.status_code}"
            if 500 <= resp.status_code < 600:
                continue
            break
        return _parse_provider_response(resp, provider)
    raise ProviderUnavailableError(
        f"provider {provider.endpoint} unavailable after {1 + retries} attempt(s): {last_error}"
    )


def _parse_provider_response(resp, provider: ProviderDescriptor) -> np.ndarray:
    try:
        payload = resp.json()
    except ValueError as exc:
        raise ProviderContractError(f"provider response is not JSON: {exc}") from exc
    if not isinstance(payload, dict) or "values" not in payload:
        raise ProviderContractError("provider response must be an object with a 'values' array")
    values = payload["values"]
    declared = payload.get("dimension")
    try:
        vec = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ProviderContractError(f"provider values are not numeric: {exc}") from exc
    if vec.ndim != 1 or vec.shape[0] != provider.dimension:
        raise ProviderContractError(
            f"provider returned {vec.shape[0] if vec.ndim == 1 else vec.shape} values, "
            f"contract requires exactly {provider.dimension}"
        )
    if declared is not None and int(declared) != vec.shape[0]:
        raise ProviderContractError(
            f"provider declared dimension {declared} but sent {vec.shape[0]} values"
        )
    if not np.all(np.isfinite(vec)):
        raise ProviderContractError("provider returned non-finite values")
    return vec


class ReferenceProvider:
    """In-process deterministic featurizer."""

    def __init__(self, seed: int = 0, dimension: int = DEFAULT_DIMENSION):
        self.descriptor = ProviderDescriptor(kind=PROVIDER_REFERENCE, dimension=dimension, seed=seed)

    def embed(self, img: TileImage) -> np.ndarray:
        return embed_reference(img, seed=self.descriptor.seed, dimension=self.descriptor.dimension)


class ExternalProvider:
    """HTTP featurizer client with bounded in-flight requests."""

    def __init__(
        self,
        endpoint: str,
        dimension: int = DEFAULT_DIMENSION,
        timeout: float = DEFAULT_TIMEOUT_S,
        retries: int = DEFAULT_RETRIES,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ):
        self.descriptor = ProviderDescriptor(kind=PROVIDER_EXTERNAL, dimension=dimension, endpoint=endpoint)
        self.timeout = timeout
        self.retries = retries
        self._session = requests.Session()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def embed(self, img: TileImage) -> np.ndarray:
        with self._slots:
            return embed_external(
                img, self.descriptor, timeout=self.timeout, retries=self.retries, session=self._session
            )


def make_provider(descriptor: ProviderDescriptor, timeout: float = DEFAULT_TIMEOUT_S):
    if descriptor.kind == PROVIDER_REFERENCE:
        return ReferenceProvider(seed=descriptor.seed, dimension=descriptor.dimension)
    return ExternalProvider(descriptor.endpoint, dimension=descriptor.dimension, timeout=timeout)
