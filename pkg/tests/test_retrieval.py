from __future__ import annotations

import math
import random
import string

import numpy as np
import pytest

from compliat import retrieval
from compliat.errors import DimensionMismatch, DuplicateKey, ProviderMismatch
from compliat.providers import HASH_IDENTITY, MockProvider
from compliat.retrieval import (
    HASH_DIM,
    build_index,
    cosine,
    fnv1a64,
    hash_embed,
    load_index,
    load_or_build,
    save_index,
    search,
)


def oracle_cosine(u: np.ndarray, v: np.ndarray) -> float:
    # High-precision oracle: exact summation of float64 products, norms divided out.
    dot = math.fsum(float(a) * float(b) for a, b in zip(u, v))
    nu = math.sqrt(math.fsum(float(a) * float(a) for a in u))
    nv = math.sqrt(math.fsum(float(b) * float(b) for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (nu * nv)))


def oracle_topk(index: retrieval.Index, query: str, k: int) -> list[tuple[str, int]]:
    # Brute-force scan, independent of the index's vectorized scoring path;
    # same 12-decimal ranking quantum as the ranking contract.
    qvec = hash_embed(query)
    scored = [(round(oracle_cosine(qvec, index.vector(key)), 12), key) for key in index.keys]
    ordered = sorted(scored, key=lambda pair: (-pair[0], pair[1]))
    return [(key, rank) for rank, (_, key) in enumerate(ordered[: min(k, len(scored))], 1)]


def random_texts(rng: random.Random, n: int, *, dupes: bool = True) -> list[str]:
    words = ["knee", "alarm", "walker", "sensor", "fall", "unit", "frame", "test", "load"]
    texts = []
    for _ in range(n):
        length = rng.randrange(1, 6)
        texts.append(" ".join(rng.choice(words) for _ in range(length)))
    if dupes and n >= 4:
        texts[1] = texts[0]  # force at least one exact tie
    return texts


def test_fnv1a64_reference_values() -> None:
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_hash_embed_deterministic() -> None:
    first = hash_embed("knee")
    second = hash_embed("knee")
    assert first.dtype == np.float32
    assert np.array_equal(first, second)


def test_hash_embed_empty_is_e0() -> None:
    vec = hash_embed("")
    assert vec[0] == 1.0
    assert float(np.abs(vec[1:]).sum()) == 0.0
    assert np.array_equal(hash_embed("   "), vec)


def test_hash_embed_case_and_whitespace_insensitive() -> None:
    assert np.array_equal(hash_embed("Knee  Unit"), hash_embed("knee unit"))


def test_hash_embed_unit_norm() -> None:
    rng = random.Random(3)
    for text in random_texts(rng, 50, dupes=False) + [""]:
        norm = math.sqrt(math.fsum(float(x) * float(x) for x in hash_embed(text)))
        assert abs(norm - 1.0) <= 1e-6


def test_hash_embed_similarity_ordering() -> None:
    near = oracle_cosine(hash_embed("knee unit"), hash_embed("knee units"))
    far = oracle_cosine(hash_embed("knee unit"), hash_embed("alarm"))
    assert near > far


def test_cosine_identity() -> None:
    vec = hash_embed("knee prosthesis")
    assert abs(cosine(vec, vec) - 1.0) <= 1e-9


def test_cosine_orthogonal_basis() -> None:
    e0 = np.zeros(4, dtype=np.float32)
    e1 = np.zeros(4, dtype=np.float32)
    e0[0] = 1.0
    e1[1] = 1.0
    assert cosine(e0, e1) == 0.0


def test_cosine_matches_high_precision_oracle() -> None:
    rng = random.Random(5)
    for _ in range(200):
        u = hash_embed("".join(rng.choice(string.ascii_lowercase + " ") for _ in range(20)))
        v = hash_embed("".join(rng.choice(string.ascii_lowercase + " ") for _ in range(20)))
        assert abs(cosine(u, v) - oracle_cosine(u, v)) <= 1e-9


def test_cosine_dimension_mismatch() -> None:
    with pytest.raises(DimensionMismatch):
        cosine(np.ones(3, dtype=np.float32), np.ones(4, dtype=np.float32))


def test_build_index_basic(mock_provider: MockProvider) -> None:
    entries = [("a", "knee units", {}), ("b", "alarms", {}), ("c", "walkers", {"level": "1"})]
    index = build_index(entries, mock_provider)
    assert len(index) == 3
    assert index.dim == HASH_DIM
    assert index.provider_identity == HASH_IDENTITY
    assert index.tag("c", "level") == "1"
    first = index.entries()[0]
    assert (first.key, first.payload_text) == ("a", "knee units")
    assert np.array_equal(first.vector, hash_embed("knee units"))


def test_build_index_duplicate_key(mock_provider: MockProvider) -> None:
    with pytest.raises(DuplicateKey):
        build_index([("06 24", "x", {}), ("06 24", "y", {})], mock_provider)


def test_build_index_parallel_matches_serial(mock_provider: MockProvider) -> None:
    rng = random.Random(9)
    entries = [(f"k{i}", text, {}) for i, text in enumerate(random_texts(rng, 200, dupes=False))]
    serial = build_index(entries, mock_provider, batch_size=16, max_parallel=1)
    parallel = build_index(entries, mock_provider, batch_size=16, max_parallel=4)
    assert save_index(serial) == save_index(parallel)


def test_stored_vectors_unit_norm(mock_provider: MockProvider) -> None:
    rng = random.Random(13)
    entries = [(f"k{i}", t, {}) for i, t in enumerate(random_texts(rng, 40))]
    index = build_index(entries, mock_provider)
    for key in index.keys:
        norm = math.sqrt(math.fsum(float(x) * float(x) for x in index.vector(key)))
        assert abs(norm - 1.0) <= 1e-6


def test_search_matches_bruteforce(mock_provider: MockProvider) -> None:
    rng = random.Random(17)
    for trial in range(20):
        n = rng.randrange(1, 60)
        entries = [(f"k{i:03d}", t, {}) for i, t in enumerate(random_texts(rng, n))]
        index = build_index(entries, mock_provider)
        query = " ".join(random_texts(rng, 1, dupes=False))
        k = rng.randrange(1, n + 3)
        hits = search(index, query, k, mock_provider)
        assert [(h.key, h.rank) for h in hits] == oracle_topk(index, query, k)


def test_search_k_exceeds_size(mock_provider: MockProvider) -> None:
    index = build_index([("a", "knee", {}), ("b", "alarm", {})], mock_provider)
    hits = search(index, "knee", 10, mock_provider)
    assert len(hits) == 2
    assert [h.rank for h in hits] == [1, 2]


def test_search_identity_hit(mock_provider: MockProvider) -> None:
    index = build_index([("a", "knee unit", {}), ("b", "fall alarm", {})], mock_provider)
    hits = search(index, "fall alarm", 1, mock_provider)
    assert hits[0].key == "b"
    assert abs(hits[0].score - 1.0) <= 1e-9


def test_search_prefix_property(mock_provider: MockProvider) -> None:
    rng = random.Random(19)
    entries = [(f"k{i:02d}", t, {}) for i, t in enumerate(random_texts(rng, 30))]
    index = build_index(entries, mock_provider)
    query = "knee fall walker"
    previous: list[tuple[str, int]] = []
    for k in range(1, len(index) + 2):
        hits = [(h.key, h.rank) for h in search(index, query, k, mock_provider)]
        assert hits[: len(previous)] == previous
        previous = hits


def test_search_scores_sorted_and_ranked(mock_provider: MockProvider) -> None:
    rng = random.Random(29)
    entries = [(f"k{i:02d}", t, {}) for i, t in enumerate(random_texts(rng, 25))]
    index = build_index(entries, mock_provider)
    hits = search(index, "sensor unit", len(index), mock_provider)
    assert [h.rank for h in hits] == list(range(1, len(index) + 1))
    for first, second in zip(hits, hits[1:]):
        assert first.score >= second.score
        if first.score == second.score:
            assert first.key < second.key


def test_search_provider_mismatch(mock_provider: MockProvider) -> None:
    index = build_index([("a", "knee", {})], mock_provider)

    class OtherProvider(MockProvider):
        identity = "something-else"

    with pytest.raises(ProviderMismatch):
        search(index, "knee", 1, OtherProvider())


def test_search_rejects_bad_k(mock_provider: MockProvider) -> None:
    index = build_index([("a", "knee", {})], mock_provider)
    with pytest.raises(ValueError):
        search(index, "knee", 0, mock_provider)


def test_cache_roundtrip_bytes_exact(mock_provider: MockProvider) -> None:
    entries = [
        ("06 24", "lower limb prostheses", {"level": "2"}),
        ("06", "orthoses and prostheses", {"level": "1", "extra": "x"}),
    ]
    index = build_index(entries, mock_provider)
    blob = save_index(index)
    reloaded = load_index(blob)
    assert save_index(reloaded) == blob
    assert reloaded.keys == index.keys
    assert reloaded.payloads == index.payloads
    assert reloaded.tags == index.tags


def test_cache_reload_preserves_search_results(mock_provider: MockProvider) -> None:
    rng = random.Random(37)
    entries = [(f"k{i:02d}", t, {}) for i, t in enumerate(random_texts(rng, 40))]
    index = build_index(entries, mock_provider)
    reloaded = load_index(save_index(index))
    for query in random_texts(rng, 10, dupes=False):
        assert search(index, query, 7, mock_provider) == search(reloaded, query, 7, mock_provider)


def test_cache_rejects_corrupt_data(mock_provider: MockProvider) -> None:
    blob = save_index(build_index([("a", "knee", {})], mock_provider))
    with pytest.raises(ValueError):
        load_index(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        load_index(blob[:-3])


class CountingProvider(MockProvider):
    def __init__(self) -> None:
        self.embed_calls = 0

    def embed_batch(self, texts):
        self.embed_calls += 1
        return super().embed_batch(texts)


def test_load_or_build_uses_cache(tmp_path) -> None:
    entries = [("a", "knee unit", {}), ("b", "fall alarm", {})]
    provider = CountingProvider()
    first = load_or_build(tmp_path, b"corpus-v1", entries, provider)
    assert provider.embed_calls > 0
    calls_after_build = provider.embed_calls
    second = load_or_build(tmp_path, b"corpus-v1", entries, provider)
    assert provider.embed_calls == calls_after_build  # served from cache
    assert save_index(first) == save_index(second)


def test_load_or_build_rebuilds_on_corruption(tmp_path) -> None:
    entries = [("a", "knee unit", {})]
    provider = CountingProvider()
    load_or_build(tmp_path, b"corpus-v1", entries, provider)
    cache_file = next(tmp_path.glob("*.caix"))
    cache_file.write_bytes(b"garbage")
    index = load_or_build(tmp_path, b"corpus-v1", entries, provider)
    assert len(index) == 1
    assert load_index(cache_file.read_bytes()).keys == ("a",)
