"""Embedding/generation providers: deterministic mock, transcript replay, remote.

The mock provider is the offline default: hash-trigram embeddings plus a
generator that parses the selection-prompt template and picks the
highest-scoring listed code, and answers NEEDS-REVIEW to everything else.
The replay provider serves recorded transcripts bit-exactly so CI never needs
credentials; the recording wrapper produces those transcripts from live runs.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import urllib.request
from collections import deque
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from compliat.errors import ProviderFailure
from compliat.retrieval import HASH_DIM, hash_embed

HASH_IDENTITY = "hash-trigram-fnv1a-v1-d256"

SELECTION_HEADER = "SELECT ONE CODE"
ASSESSMENT_HEADER = "ASSESS COMPLIANCE"

TRANSCRIPT_FORMAT = "compliat-transcript-v1"

_CANDIDATE_LINE_RE = re.compile(r"^(\d{2}(?: \d{2}){0,2})\t(.*)\t(\d\.\d{4})$")


class Provider(Protocol):
    """What the pipeline needs from a model backend."""

    identity: str
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...

    def generate(self, prompt: str, context: list[str]) -> str: ...


class MockProvider:
    """Fully deterministic offline provider; safe for CI and acceptance runs."""

    identity = HASH_IDENTITY
    dim = HASH_DIM

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [hash_embed(text) for text in texts]

    def generate(self, prompt: str, context: list[str]) -> str:
        if prompt.startswith(SELECTION_HEADER + "\n"):
            best_code = None
            best_score = -1.0
            for line in prompt.splitlines()[1:]:
                match = _CANDIDATE_LINE_RE.match(line)
                if match is None:
                    break
                score = float(match.group(3))
                if score > best_score:
                    best_code = match.group(1)
                    best_score = score
            if best_code is not None:
                return f"{best_code}\nselected the highest-scoring listed candidate"
        return "NEEDS-REVIEW\noffline provider defers judgement to expert review"


def request_digest(op: str, payload: dict) -> str:
    """Stable digest identifying one provider request inside a transcript."""
    body = json.dumps({"op": op, **payload}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def generate_record(prompt: str, context: list[str], response: str) -> dict:
    """Build a transcript record for one generate call (handy for scripted replays)."""
    return {
        "op": "generate",
        "digest": request_digest("generate", {"prompt": prompt, "context": context}),
        "response": response,
    }


def embed_record(texts: list[str], vectors: list[list[float]]) -> dict:
    return {
        "op": "embed",
        "digest": request_digest("embed", {"texts": texts}),
        "response": vectors,
    }


def write_transcript(
    path: Path | str,
    records: list[dict],
    *,
    identity: str = HASH_IDENTITY,
    dim: int = HASH_DIM,
) -> None:
    header = {"format": TRANSCRIPT_FORMAT, "identity": identity, "dim": dim}
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(record, sort_keys=True) for record in records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class ReplayProvider:
    """Replays a recorded transcript; never touches the network.

    Responses are keyed by (op, request digest) and served FIFO per key, so
    replay is insensitive to call interleaving from parallel batches. A
    transcript with no embed records falls back to the hash embedding;
    a missing generate record is a provider failure.
    """

    def __init__(self, path: Path | str) -> None:
        self.path = Path(path)
        try:
            lines = self.path.read_text("utf-8").splitlines()
        except OSError as exc:
            raise ProviderFailure(f"cannot read transcript {self.path}: {exc}") from exc
        if not lines:
            raise ProviderFailure(f"empty transcript {self.path}")
        header = json.loads(lines[0])
        if header.get("format") != TRANSCRIPT_FORMAT:
            raise ProviderFailure(f"unknown transcript format in {self.path}")
        self.identity = str(header["identity"])
        self.dim = int(header["dim"])
        self._queues: dict[tuple[str, str], deque] = {}
        self._has_embeds = False
        for line in lines[1:]:
            if not line.strip():
                continue
            record = json.loads(line)
            key = (record["op"], record["digest"])
            self._queues.setdefault(key, deque()).append(record["response"])
            if record["op"] == "embed":
                self._has_embeds = True
        self._lock = threading.Lock()

    def _pop(self, op: str, digest: str):
        with self._lock:
            queue = self._queues.get((op, digest))
            if not queue:
                raise ProviderFailure(
                    f"transcript {self.path} has no recorded {op} response for this request"
                )
            return queue.popleft()

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not self._has_embeds:
            return [hash_embed(text) for text in texts]
        digest = request_digest("embed", {"texts": list(texts)})
        vectors = self._pop("embed", digest)
        return [np.array(vec, dtype=np.float32) for vec in vectors]

    def generate(self, prompt: str, context: list[str]) -> str:
        digest = request_digest("generate", {"prompt": prompt, "context": context})
        return str(self._pop("generate", digest))


class RecordingProvider:
    """Wraps another provider and appends every exchange to a transcript file."""

    def __init__(self, inner: Provider, path: Path | str) -> None:
        self.inner = inner
        self.identity = inner.identity
        self.dim = inner.dim
        self.path = Path(path)
        self._lock = threading.Lock()
        header = {"format": TRANSCRIPT_FORMAT, "identity": self.identity, "dim": self.dim}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(header, sort_keys=True) + "\n", encoding="utf-8")

    def _append(self, record: dict) -> None:
        with self._lock, self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, sort_keys=True) + "\n")

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        vectors = self.inner.embed_batch(texts)
        self._append(
            embed_record(list(texts), [[float(x) for x in vec] for vec in vectors])
        )
        return vectors

    def generate(self, prompt: str, context: list[str]) -> str:
        response = self.inner.generate(prompt, context)
        self._append(generate_record(prompt, list(context), response))
        return response


class RemoteProvider:
    """JSON-over-HTTP client for a hosted model endpoint.

    Expects ``GET {endpoint}/info`` -> {"identity", "dim"},
    ``POST {endpoint}/embed`` {"texts": [...]} -> {"vectors": [[...], ...]} and
    ``POST {endpoint}/generate`` {"prompt", "context"} -> {"text": ...}.
    Credentials come only from the COMPLIAT_API_KEY environment variable.
    Safe to call from multiple threads.
    """

    def __init__(self, endpoint: str, *, timeout: float = 30.0) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._info_lock = threading.Lock()
        self._identity: str | None = None
        self._dim: int | None = None

    def _headers(self) -> dict[str, str]:
        import os

        headers = {"Content-Type": "application/json"}
        key = os.environ.get("COMPLIAT_API_KEY")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _request(self, path: str, payload: dict | None) -> dict:
        url = f"{self.endpoint}{path}"
        data = json.dumps(payload).encode("utf-8") if payload is not None else None
        req = urllib.request.Request(url, data=data, headers=self._headers())
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as response:
                return json.loads(response.read().decode("utf-8"))
        except Exception as exc:
            raise ProviderFailure(f"remote call {url} failed: {exc}") from exc

    def _info(self) -> tuple[str, int]:
        with self._info_lock:
            if self._identity is None:
                info = self._request("/info", None)
                self._identity = str(info["identity"])
                self._dim = int(info["dim"])
            assert self._dim is not None
            return self._identity, self._dim

    @property
    def identity(self) -> str:
        return self._info()[0]

    @property
    def dim(self) -> int:
        return self._info()[1]

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        body = self._request("/embed", {"texts": list(texts)})
        try:
            return [np.array(vec, dtype=np.float32) for vec in body["vectors"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderFailure(f"malformed embed response: {exc}") from exc

    def generate(self, prompt: str, context: list[str]) -> str:
        body = self._request("/generate", {"prompt": prompt, "context": context})
        try:
            return str(body["text"])
        except KeyError as exc:
            raise ProviderFailure("malformed generate response: missing 'text'") from exc


def make_provider(selector: str, *, record_path: Path | str | None = None) -> Provider:
    """Build a provider from a selector: ``mock``, ``replay:PATH``, or ``remote:URL``."""
    if selector == "mock":
        provider: Provider = MockProvider()
    elif selector.startswith("replay:"):
        provider = ReplayProvider(selector.split(":", 1)[1])
    elif selector.startswith("remote:"):
        provider = RemoteProvider(selector.split(":", 1)[1])
    else:
        raise ValueError(f"unknown provider selector {selector!r}")
    if record_path is not None:
        provider = RecordingProvider(provider, record_path)
    return provider
