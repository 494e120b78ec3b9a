"""End-to-end fitting of one scoring method on a training split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .embeddings import EmbeddingTable, compute_sif, embed_corpus, load_embeddings
from .scoring import baseline_mean_pool_predict, build_knn, predict
from .training import train


def load_table(cfg: RunConfig) -> EmbeddingTable:
    """Embedding table from ``embedding_path``; without one every token is OOV."""
    if cfg.embedding_path:
        return load_embeddings(cfg.embedding_path, cfg.embedding_dim, cfg.oov_seed)
    return EmbeddingTable(cfg.embedding_dim, {}, cfg.oov_seed)


def seed_from(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


@dataclass
class FittedKnn:
    model: object
    table: EmbeddingTable
    sif: object

    def predictions(self, docs):
        return [predict(self.model, d) for d in embed_corpus(docs, self.table, self.sif)]

    def __call__(self, docs):
        return [p.predicted_score for p in self.predictions(docs)]


def fit_corel(cfg: RunConfig, train_docs, table: EmbeddingTable, num_levels: int, seed: int):
    """SIF on the training split, triplet training, then a KNN index."""
    sif = compute_sif(train_docs, cfg.sif_a)
    embedded = embed_corpus(train_docs, table, sif)
    params, report = train(embedded, cfg.encoder(seed), cfg.train(seed), cfg.sinkhorn())
    model = build_knn(embedded, params, cfg.k, num_levels, cfg.sinkhorn())
    return FittedKnn(model, table, sif), report


@dataclass
class FittedBaseline:
    cfg: RunConfig
    train_docs: list
    table: EmbeddingTable
    num_levels: int
    seed: int

    def predictions(self, docs):
        sif = compute_sif(self.train_docs, self.cfg.sif_a)
        return baseline_mean_pool_predict(
            embed_corpus(self.train_docs, self.table, sif),
            embed_corpus(docs, self.table, sif),
            self.cfg.encoder(self.seed),
            self.num_levels,
            self.cfg.baseline_head,
            self.cfg.train(self.seed),
        )

    def __call__(self, docs):
        return [p.predicted_score for p in self.predictions(docs)]


@dataclass
class MethodFitter:
    """Picklable ``fit(train_docs, seed_sequence) -> predictor`` for the protocol."""

    cfg: RunConfig
    num_levels: int
    table: EmbeddingTable | None = None

    def __call__(self, train_docs, ss: np.random.SeedSequence):
        table = self.table if self.table is not None else load_table(self.cfg)
        seed = seed_from(ss)
        if self.cfg.is_baseline:
            return FittedBaseline(self.cfg, list(train_docs), table, self.num_levels, seed)
        fitted, _ = fit_corel(self.cfg, train_docs, table, self.num_levels, seed)
        return fitted
