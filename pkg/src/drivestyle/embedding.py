"""Text embeddings for semantic descriptions, and their reduction to
low-dimensional privileged vectors.

The embedding backend is pluggable: the mock hashes character 3-grams
into a fixed 768-bin vector (deterministic, offline), while the remote
backend targets any embeddings endpoint speaking the usual JSON shape.
Reduction is likewise an interface; the in-repo implementation is PCA
with a deterministic sign convention.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from .errors import ArtifactError, DimensionError, InputError, ResponseFormatError, TransportError
from .semantics import SemanticResult

MOCK_EMBEDDING_DIM = 768
REDUCER_FORMAT_VERSION = 1
DEFAULT_N_COMPONENTS = 5


@dataclass(frozen=True)
class Embedding:
    segment_id: str
    vector: np.ndarray
    model_id: str


@dataclass(frozen=True)
class PrivilegedVector:
    segment_id: str
    x_star: np.ndarray


class EmbeddingBackend(Protocol):
    model_id: str

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray: ...


class MockEmbeddingBackend:
    """Feature hashing of character 3-grams, L2-normalized."""

    def __init__(self, dim: int = MOCK_EMBEDDING_DIM):
        self.dim = dim
        self.model_id = f"mock-3gram-{dim}"

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for r, text in enumerate(texts):
            padded = f" {text} "
            for k in range(len(padded) - 2):
                gram = padded[k:k + 3].encode("utf-8")
                digest = hashlib.blake2b(gram, digest_size=8).digest()
                out[r, int.from_bytes(digest, "big") % self.dim] += 1.0
            norm = np.linalg.norm(out[r])
            if norm > 0:
                out[r] /= norm
        return out


class RemoteEmbeddingBackend:
    """Client for an embeddings endpoint returning {data: [{embedding: [...]}]}."""

    def __init__(self, endpoint_url: str, model_id: str, api_key: str = "",
                 timeout_s: float = 60.0, max_retries: int = 4):
        self.endpoint_url = endpoint_url
        self.model_id = model_id
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.max_retries = max_retries

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        import requests

        from .semantics import request_with_backoff

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model_id, "input": list(texts)}
        body = request_with_backoff(
            self.endpoint_url, payload, headers, self.timeout_s, self.max_retries)
        try:
            rows = [item["embedding"] for item in body["data"]]
        except (KeyError, TypeError) as exc:
            raise ResponseFormatError(
                f"embedding response missing data/embedding fields: {exc}",
                raw_text=json.dumps(body)[:2000],
            ) from exc
        if len(rows) != len(texts):
            raise ResponseFormatError(
                f"expected {len(texts)} embeddings, got {len(rows)}")
        return np.asarray(rows, dtype=float)


def embed(results: Sequence[SemanticResult], backend: EmbeddingBackend) -> list[Embedding]:
    """One embedding per semantic description, order preserved."""
    vectors = backend.embed_texts([r.semantics for r in results])
    if not np.all(np.isfinite(vectors)):
        raise InputError("backend returned non-finite embedding components")
    return [
        Embedding(segment_id=r.segment_id, vector=vectors[i], model_id=backend.model_id)
        for i, r in enumerate(results)
    ]


@dataclass
class Reducer:
    """Linear projection onto the top principal directions.

    components rows are orthonormal, ordered by descending eigenvalue,
    each flipped so its largest-magnitude entry is positive.
    """

    mean: np.ndarray
    components: np.ndarray  # (n_components, E)
    eigenvalues: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.components)

    def transform_matrix(self, vectors: np.ndarray) -> np.ndarray:
        vectors = np.asarray(vectors, dtype=float)
        if vectors.shape[-1] != self.components.shape[1]:
            raise DimensionError(
                f"reducer expects dimension {self.components.shape[1]}, "
                f"got {vectors.shape[-1]}")
        return (vectors - self.mean) @ self.components.T


def fit_reducer(embeddings: Sequence[Embedding] | np.ndarray, n_components: int) -> Reducer:
    """PCA fit on the embedding rows (descending eigenvalue order)."""
    if isinstance(embeddings, np.ndarray):
        data = np.asarray(embeddings, dtype=float)
    else:
        data = np.asarray([e.vector for e in embeddings], dtype=float)
    n, dim = data.shape
    if n_components < 1 or n_components > dim:
        raise DimensionError(f"n_components must be in [1, {dim}], got {n_components}")
    if n < n_components:
        raise DimensionError(f"need at least {n_components} samples to fit, got {n}")
    mean = data.mean(axis=0)
    centered = data - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if vt.shape[0] < n_components:
        raise DimensionError(
            f"data rank supports only {vt.shape[0]} components, need {n_components}")
    components = vt[:n_components].copy()
    eigenvalues = (svals[:n_components] ** 2) / max(n - 1, 1)
    for row in components:
        pivot = int(np.argmax(np.abs(row)))
        if row[pivot] < 0:
            row *= -1.0
    return Reducer(mean=mean, components=components, eigenvalues=eigenvalues)


def transform(reducer: Reducer, embeddings: Sequence[Embedding]) -> list[PrivilegedVector]:
    reduced = reducer.transform_matrix(np.asarray([e.vector for e in embeddings]))
    return [
        PrivilegedVector(segment_id=e.segment_id, x_star=reduced[i])
        for i, e in enumerate(embeddings)
    ]


def save_reducer(path: str | Path, reducer: Reducer) -> None:
    payload = {
        "format_version": REDUCER_FORMAT_VERSION,
        "mean": [float(v) for v in reducer.mean],
        "components": [[float(v) for v in row] for row in reducer.components],
        "eigenvalues": [float(v) for v in reducer.eigenvalues],
        "n_components": reducer.n_components,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_reducer(path: str | Path) -> Reducer:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("format_version") != REDUCER_FORMAT_VERSION:
        raise ArtifactError(f"unknown reducer format_version: {data.get('format_version')!r}")
    return Reducer(
        mean=np.asarray(data["mean"], dtype=float),
        components=np.asarray(data["components"], dtype=float),
        eigenvalues=np.asarray(data["eigenvalues"], dtype=float),
    )


def write_embeddings(path: str | Path, embeddings: Sequence[Embedding]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in embeddings:
            fh.write(json.dumps({
                "segment_id": e.segment_id,
                "model_id": e.model_id,
                "vector": [float(v) for v in e.vector],
            }, sort_keys=True))
            fh.write("\n")


def read_embeddings(path: str | Path) -> list[Embedding]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(Embedding(
                segment_id=rec["segment_id"],
                vector=np.asarray(rec["vector"], dtype=float),
                model_id=rec.get("model_id", ""),
            ))
    return out


def write_privileged(path: str | Path, vectors: Sequence[PrivilegedVector]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in vectors:
            fh.write(json.dumps({
                "segment_id": v.segment_id,
                "x_star": [float(x) for x in v.x_star],
            }, sort_keys=True))
            fh.write("\n")


def read_privileged(path: str | Path) -> list[PrivilegedVector]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(PrivilegedVector(
                segment_id=rec["segment_id"],
                x_star=np.asarray(rec["x_star"], dtype=float),
            ))
    return out
