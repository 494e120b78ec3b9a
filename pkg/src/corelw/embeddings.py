"""Word vectors, SIF weighting and the per-document input matrix."""

from __future__ import annotations

import hashlib
import logging
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Document
from .errors import LoadError

log = logging.getLogger(__name__)

OOV_RANGE = 0.05


class EmbeddingTable:
    """Frozen token -> vector map; unknown tokens get seeded random vectors."""

    def __init__(self, dim: int, vectors: dict[str, np.ndarray] | None = None, oov_seed: int = 0):
        self.dim = int(dim)
        self.oov_seed = int(oov_seed)
        self.vectors: dict[str, np.ndarray] = {}
        self.skipped = 0
        for tok, vec in (vectors or {}).items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.dim,) or not np.all(np.isfinite(vec)):
                raise ValueError(f"bad vector for {tok!r}")
            self.vectors[tok] = vec
        self._oov: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self):
        return len(self.vectors)

    def oov_vector(self, token: str) -> np.ndarray:
        vec = self._oov.get(token)
        if vec is None:
            h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")
            rng = np.random.default_rng(np.random.SeedSequence([self.oov_seed, h]))
            vec = rng.uniform(-OOV_RANGE, OOV_RANGE, self.dim)
            vec.setflags(write=False)
            with self._lock:
                vec = self._oov.setdefault(token, vec)
        return vec

    def vector(self, token: str) -> np.ndarray:
        vec = self.vectors.get(token)
        return vec if vec is not None else self.oov_vector(token)

    def scaled(self, c: float) -> "EmbeddingTable":
        return EmbeddingTable(self.dim, {t: c * v for t, v in self.vectors.items()}, self.oov_seed)


def load_embeddings(path: str | Path, dim: int, oov_seed: int = 0) -> EmbeddingTable:
    """Parse a GloVe text file; lines with the wrong arity or bad floats are skipped."""
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"embedding file not found: {path}")
    vectors: dict[str, np.ndarray] = {}
    skipped = 0
    with path.open(encoding="utf-8", errors="replace") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if len(parts) != dim + 1:
                skipped += 1
                continue
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                skipped += 1
                continue
            if not np.all(np.isfinite(vec)):
                skipped += 1
                continue
            vectors[parts[0]] = vec
    if not vectors:
        raise LoadError(f"no valid {dim}-dimensional vectors in {path}")
    if skipped:
        log.warning("skipped %d malformed lines in %s", skipped, path)
    table = EmbeddingTable(dim, vectors, oov_seed)
    table.skipped = skipped
    return table


@dataclass
class SifWeights:
    a: float
    frequencies: dict[str, float] = field(default_factory=dict)
    default_weight: float = 1.0

    def weight(self, token: str) -> float:
        p = self.frequencies.get(token)
        if p is None:
            return self.default_weight
        return self.a / (self.a + p)


def compute_sif(docs, a: float = 1e-3) -> SifWeights:
    """SIF weights a / (a + p(w)) with p(w) the relative frequency in ``docs``."""
    if a <= 0:
        raise ValueError("SIF constant a must be positive")
    counts = Counter()
    for d in docs:
        counts.update(d.tokens)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("cannot compute SIF weights from an empty corpus")
    freqs = {w: c / total for w, c in counts.items()}
    return SifWeights(a, freqs, 1.0)


@dataclass
class EmbeddedDoc:
    """``matrix`` is d_w x N, column t the weighted vector of token t."""

    id: str
    matrix: np.ndarray
    score: int

    @property
    def rows(self) -> np.ndarray:
        # token-major view (N x d_w) used by the encoders
        return self.matrix.T


def embed_document(doc: Document, table: EmbeddingTable, sif: SifWeights) -> EmbeddedDoc:
    if not doc.tokens:
        raise ValueError(f"document {doc.id!r} has no tokens")
    cols = [sif.weight(t) * table.vector(t) for t in doc.tokens]
    return EmbeddedDoc(doc.id, np.stack(cols, axis=1), doc.score)


def embed_corpus(docs, table: EmbeddingTable, sif: SifWeights) -> list[EmbeddedDoc]:
    return [embed_document(d, table, sif) for d in docs]
