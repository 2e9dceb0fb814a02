"""Embedding vectors, an immutable cosine-similarity index, and exact top-k search.

Search is an exhaustive exact scan; corpora here are small (<= ~1e5 entries)
and exactness keeps every result oracle-checkable. With the hash embedding
the whole module is bit-deterministic across runs and platforms, which is why
norms and divisions below are computed from exact integer counts rather than
through accumulated float sums.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from compliat.errors import DimensionMismatch, DuplicateKey, ProviderFailure, ProviderMismatch
from compliat.preprocess import normalize_term

if TYPE_CHECKING:
    from compliat.providers import Provider

HASH_DIM = 256

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_PAD_START = "\x02"
_PAD_END = "\x03"

CACHE_MAGIC = b"CAIX1"


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; bit-exact everywhere."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def hash_embed(text: str) -> np.ndarray:
    """Feature-hashed character-trigram embedding, unit-norm float32 of dim 256.

    Trigrams of the normalized text (with start/end sentinels) each increment
    one hash bucket; the count vector is L2-normalized. Empty text maps to the
    unit vector e0.
    """
    cleaned = normalize_term(text)
    counts = [0] * HASH_DIM
    if not cleaned:
        counts[0] = 1
    else:
        padded = _PAD_START + cleaned + _PAD_END
        for i in range(len(padded) - 2):
            counts[fnv1a64(padded[i : i + 3].encode("utf-8")) % HASH_DIM] += 1
    norm = math.sqrt(sum(c * c for c in counts))
    return np.array([c / norm for c in counts], dtype=np.float32)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in float64, clamped to [-1, 1].

    Stored vectors are unit-norm only within 1e-6 (float32 quantization), so
    the norms are divided out rather than assumed; cosine(x, x) is then 1.0 to
    float64 precision.
    """
    if u.shape != v.shape:
        raise DimensionMismatch(f"vector dims differ: {u.shape} vs {v.shape}")
    u64 = u.astype(np.float64)
    v64 = v.astype(np.float64)
    denom = float(np.linalg.norm(u64)) * float(np.linalg.norm(v64))
    if denom == 0.0:
        return 0.0
    value = float(np.dot(u64, v64)) / denom
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class IndexEntry:
    key: str
    payload_text: str
    vector: np.ndarray
    tags: dict[str, str]


@dataclass(frozen=True)
class RetrievalHit:
    key: str
    score: float
    rank: int


class Index:
    """Immutable vector index; build via :func:`build_index` or :func:`load_index`."""

    def __init__(
        self,
        provider_identity: str,
        dim: int,
        keys: Sequence[str],
        payloads: Sequence[str],
        vectors: np.ndarray,
        tags: Sequence[Mapping[str, str]],
    ) -> None:
        self.provider_identity = provider_identity
        self.dim = dim
        self.keys = tuple(keys)
        self.payloads = tuple(payloads)
        self.tags = tuple(dict(t) for t in tags)
        self._vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        self._vectors.flags.writeable = False
        # float64 copy so scoring keeps full precision; exact upcast of the
        # stored float32 data, hence identical before and after a cache round-trip.
        self._matrix = self._vectors.astype(np.float64)
        self._matrix.flags.writeable = False
        if len(self.keys):
            self._norms = np.linalg.norm(self._matrix, axis=1)
        else:
            self._norms = np.zeros(0, dtype=np.float64)
        self._pos = {key: i for i, key in enumerate(self.keys)}

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self._pos

    def vector(self, key: str) -> np.ndarray:
        return self._vectors[self._pos[key]]

    def tag(self, key: str, name: str) -> str | None:
        return self.tags[self._pos[key]].get(name)

    def payload(self, key: str) -> str:
        return self.payloads[self._pos[key]]

    def entries(self) -> list[IndexEntry]:
        return [
            IndexEntry(key=k, payload_text=p, vector=self._vectors[i], tags=dict(t))
            for i, (k, p, t) in enumerate(zip(self.keys, self.payloads, self.tags))
        ]


def _unit(vector: np.ndarray) -> np.ndarray:
    """Return the vector as float32, renormalizing only if the norm is off."""
    vec = np.asarray(vector, dtype=np.float32)
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    if norm == 0.0:
        raise ProviderFailure("provider returned a zero embedding vector")
    if abs(norm - 1.0) > 1e-6:
        vec = (vec.astype(np.float64) / norm).astype(np.float32)
    return vec


def _embed_all(
    texts: Sequence[str], provider: Provider, batch_size: int, max_parallel: int
) -> list[np.ndarray]:
    batches = [list(texts[i : i + batch_size]) for i in range(0, len(texts), batch_size)]
    try:
        if max_parallel > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=max_parallel) as pool:
                results = list(pool.map(provider.embed_batch, batches))
        else:
            results = [provider.embed_batch(batch) for batch in batches]
    except ProviderFailure:
        raise
    except Exception as exc:
        raise ProviderFailure(f"embedding failed: {exc}") from exc
    vectors: list[np.ndarray] = []
    for batch, out in zip(batches, results):
        if len(out) != len(batch):
            raise ProviderFailure(
                f"provider returned {len(out)} vectors for {len(batch)} texts"
            )
        vectors.extend(out)
    return vectors


def build_index(
    entries: Iterable[tuple[str, str, Mapping[str, str]]],
    provider: Provider,
    *,
    batch_size: int = 64,
    max_parallel: int = 4,
) -> Index:
    """Embed every payload and assemble an immutable index.

    Entry order is preserved; keys must be unique. Batches may be embedded in
    parallel but results are reassembled in input order.
    """
    keys: list[str] = []
    seen: set[str] = set()
    payloads: list[str] = []
    tags: list[Mapping[str, str]] = []
    for key, payload, entry_tags in entries:
        if key in seen:
            raise DuplicateKey(f"duplicate index key {key!r}")
        seen.add(key)
        keys.append(key)
        payloads.append(payload)
        tags.append(entry_tags)
    vectors = _embed_all(payloads, provider, batch_size, max_parallel)
    matrix = np.zeros((len(keys), provider.dim), dtype=np.float32)
    for i, vec in enumerate(vectors):
        unit = _unit(vec)
        if unit.shape != (provider.dim,):
            raise DimensionMismatch(
                f"provider vector has dim {unit.shape}, index expects {provider.dim}"
            )
        matrix[i] = unit
    return Index(
        provider_identity=provider.identity,
        dim=provider.dim,
        keys=keys,
        payloads=payloads,
        vectors=matrix,
        tags=tags,
    )


SCORE_DECIMALS = 12


def rank_scores(keys: Sequence[str], scores: np.ndarray, k: int) -> list[RetrievalHit]:
    """Top-k of (key, score) pairs: score descending, ties by key ascending.

    Scores are quantized to 12 decimals before ranking: entries whose true
    cosines are equal can come out a last-ulp apart depending on float
    summation order, and quantizing makes the key tie-break deterministic
    instead of summation-order dependent. 1e-12 is far below any meaningful
    similarity gap and far above accumulated float64 rounding error.
    """
    if len(keys) == 0:
        return []
    keys_arr = np.array(keys, dtype=np.str_)
    quantized = np.round(scores, SCORE_DECIMALS)
    order = np.lexsort((keys_arr, -quantized))
    top = order[: min(k, len(keys))]
    return [
        RetrievalHit(key=str(keys_arr[i]), score=float(quantized[i]), rank=rank)
        for rank, i in enumerate(top, start=1)
    ]


def search(index: Index, query: str, k: int, provider: Provider) -> list[RetrievalHit]:
    """Exact top-k entries by cosine similarity to the query."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if provider.identity != index.provider_identity:
        raise ProviderMismatch(
            f"index built with {index.provider_identity!r}, queried with {provider.identity!r}"
        )
    if len(index) == 0:
        return []
    try:
        qvec = provider.embed_batch([query])[0]
    except ProviderFailure:
        raise
    except Exception as exc:
        raise ProviderFailure(f"embedding failed: {exc}") from exc
    q64 = _unit(qvec).astype(np.float64)
    if q64.shape[0] != index.dim:
        raise DimensionMismatch(f"query dim {q64.shape[0]} != index dim {index.dim}")
    qnorm = float(np.linalg.norm(q64))
    scores = np.clip((index._matrix @ q64) / (index._norms * qnorm), -1.0, 1.0)
    return rank_scores(index.keys, scores, k)


# -- cache file ----------------------------------------------------------------


def _pack_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated index cache")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def save_index(index: Index) -> bytes:
    """Serialize to the binary cache format; byte-exact for the hash provider."""
    parts = [CACHE_MAGIC, _pack_str(index.provider_identity)]
    parts.append(struct.pack("<I", index.dim))
    parts.append(struct.pack("<I", len(index)))
    for i, key in enumerate(index.keys):
        parts.append(_pack_str(key))
        parts.append(_pack_str(index.payloads[i]))
        parts.append(index._vectors[i].astype("<f4").tobytes())
        tags = index.tags[i]
        parts.append(struct.pack("<I", len(tags)))
        for name in sorted(tags):
            parts.append(_pack_str(name))
            parts.append(_pack_str(tags[name]))
    return b"".join(parts)


def load_index(data: bytes) -> Index:
    """Parse a cache file produced by :func:`save_index`; raises ValueError if corrupt."""
    reader = _Reader(data)
    if reader.take(len(CACHE_MAGIC)) != CACHE_MAGIC:
        raise ValueError("bad index cache magic")
    identity = reader.text()
    dim = reader.u32()
    count = reader.u32()
    keys: list[str] = []
    payloads: list[str] = []
    tags: list[dict[str, str]] = []
    matrix = np.zeros((count, dim), dtype=np.float32)
    for i in range(count):
        keys.append(reader.text())
        payloads.append(reader.text())
        matrix[i] = np.frombuffer(reader.take(4 * dim), dtype="<f4")
        tags.append({reader.text(): reader.text() for _ in range(reader.u32())})
    if reader.pos != len(data):
        raise ValueError("trailing bytes in index cache")
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate keys in index cache")
    return Index(
        provider_identity=identity,
        dim=dim,
        keys=keys,
        payloads=payloads,
        vectors=matrix,
        tags=tags,
    )


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write via temp file + rename so readers never see partial content."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def cache_path(cache_dir: Path, provider_identity: str, key_material: bytes) -> Path:
    digest = hashlib.sha256()
    digest.update(provider_identity.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(key_material)
    return Path(cache_dir) / f"{digest.hexdigest()[:32]}.caix"


def load_or_build(
    cache_dir: Path | None,
    key_material: bytes,
    entries: Sequence[tuple[str, str, Mapping[str, str]]],
    provider: Provider,
) -> Index:
    """Build an index, reusing a content-addressed cache file when possible.

    Stale or corrupt cache files are rebuilt silently; the cache key covers
    provider identity and corpus content, so changed inputs miss the cache.
    """
    if cache_dir is None:
        return build_index(entries, provider)
    path = cache_path(Path(cache_dir), provider.identity, key_material)
    if path.exists():
        try:
            index = load_index(path.read_bytes())
            if index.provider_identity == provider.identity and index.dim == provider.dim:
                return index
        except (ValueError, OSError):
            pass
    index = build_index(entries, provider)
    atomic_write_bytes(path, save_index(index))
    return index
