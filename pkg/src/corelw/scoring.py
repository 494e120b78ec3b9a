"""Score prediction: Wasserstein KNN and the mean-pooled recurrent baselines."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import EncoderConfig, EncoderParams
from .errors import ConfigError
from .ot import SinkhornConfig, make_distribution, sinkhorn
from .training import AdamState, TrainConfig, adam_step

log = logging.getLogger(__name__)

RIDGE_FALLBACK = 1e-6


def round_half_away(x: float) -> int:
    """Nearest integer, halves rounded away from zero (2.5 -> 3, -2.5 -> -3)."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def clamp_score(s: int, num_levels: int) -> int:
    return min(max(s, 1), num_levels)


@dataclass
class Prediction:
    doc_id: str
    predicted_score: int
    raw_mean: float
    neighbor_ids: list[str] = field(default_factory=list)
    neighbor_distances: list[float] = field(default_factory=list)
    gold: int | None = None


def knn_vote(doc_id: str, distances, train_ids, train_scores, k: int, num_levels: int,
             gold: int | None = None) -> Prediction:
    """Rounded mean score of the k nearest training documents.

    Distance ties are broken by training id so the result does not depend on
    the order of the training set.
    """
    order = sorted(range(len(train_ids)), key=lambda i: (distances[i], train_ids[i]))[:k]
    raw = math.fsum(train_scores[i] for i in order) / k
    return Prediction(
        doc_id,
        clamp_score(round_half_away(raw), num_levels),
        raw,
        [train_ids[i] for i in order],
        [float(distances[i]) for i in order],
        gold,
    )


@dataclass
class KnnModel:
    params: EncoderParams
    train_ids: list[str]
    train_scores: list[int]
    distributions: list
    k: int
    num_levels: int
    sinkhorn: SinkhornConfig

    def __post_init__(self):
        if not 1 <= self.k <= len(self.train_ids):
            raise ConfigError(f"K={self.k} must lie in [1, {len(self.train_ids)}]")


def build_knn(train_docs, params: EncoderParams, k: int = 7, num_levels: int | None = None,
              sinkhorn_cfg: SinkhornConfig | None = None) -> KnnModel:
    """Encode every training document once and keep its distribution."""
    train_docs = list(train_docs)
    if not 1 <= k <= len(train_docs):
        raise ConfigError(f"K={k} must lie in [1, {len(train_docs)}]")
    dists = [make_distribution(params.encode(d.matrix, d.id), d.id) for d in train_docs]
    return KnnModel(
        params,
        [d.id for d in train_docs],
        [d.score for d in train_docs],
        dists,
        k,
        num_levels or max(max(d.score for d in train_docs), 2),
        sinkhorn_cfg or SinkhornConfig(),
    )


def distances_to_train(model: KnnModel, doc) -> list[float]:
    mu = make_distribution(model.params.encode(doc.matrix, doc.id), doc.id)
    return [sinkhorn(mu, nu, model.sinkhorn).cost for nu in model.distributions]


def predict(model: KnnModel, doc) -> Prediction:
    d = distances_to_train(model, doc)
    return knn_vote(doc.id, d, model.train_ids, model.train_scores, model.k, model.num_levels,
                    getattr(doc, "score", None))


PREDICTION_HEADER = ["id", "gold", "predicted", "raw_mean", "neighbor_ids", "neighbor_distances"]


def write_predictions(path: str | Path, predictions) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_HEADER)
        for p in predictions:
            w.writerow([
                p.doc_id,
                "" if p.gold is None else p.gold,
                p.predicted_score,
                repr(p.raw_mean),
                ";".join(p.neighbor_ids),
                ";".join(repr(x) for x in p.neighbor_distances),
            ])


# ---------------------------------------------------------------- baselines


def mean_pool(points: np.ndarray) -> np.ndarray:
    return points.mean(axis=0)


def fit_least_squares(features: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """OLS with intercept via the normal equations; ridge fallback if singular."""
    X = np.hstack([np.ones((features.shape[0], 1)), features])
    A = X.T @ X
    b = X.T @ targets
    if np.linalg.matrix_rank(A) < A.shape[0]:
        log.warning("singular normal equations; using ridge fallback lambda=%g", RIDGE_FALLBACK)
        A = A + RIDGE_FALLBACK * np.eye(A.shape[0])
    return np.linalg.solve(A, b)


def _apply_linear(coef: np.ndarray, features: np.ndarray) -> np.ndarray:
    return coef[0] + features @ coef[1:]


def _train_regression_head(params: EncoderParams, train_docs, cfg: TrainConfig) -> np.ndarray:
    """Encoder plus linear head trained end to end on squared error with Adam."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xBA5E]))
    d = params.config.d_out
    head = {"w": np.zeros(d), "b": np.array([np.mean([x.score for x in train_docs])])}
    tensors = {**{k: v for k, v in params.tensors().items() if not k.startswith("bn.")}, **head}
    state = AdamState()
    n = len(train_docs)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = [train_docs[i] for i in order[start : start + cfg.batch_size]]
            grads = {k: np.zeros_like(v) for k, v in tensors.items()}
            for doc in batch:
                out = params.forward(doc.matrix, doc.id)
                pooled = mean_pool(out.support_points)
                err = float(head["w"] @ pooled + head["b"][0] - doc.score)
                scale = 2.0 * err / len(batch)
                grads["w"] += scale * pooled
                grads["b"] += scale
                dz = np.broadcast_to(scale * head["w"] / out.n, out.support_points.shape)
                g, _ = params.backward(out, np.array(dz))
                for k, v in g.items():
                    grads[k] += v
            adam_step(tensors, grads, state, cfg.learning_rate,
                      (cfg.adam_beta1, cfg.adam_beta2), cfg.adam_eps)
    return np.concatenate([head["b"], head["w"]])


def baseline_mean_pool_predict(train_docs, test_docs, encoder: EncoderConfig,
                               num_levels: int, head: str = "ols",
                               train_cfg: TrainConfig | None = None) -> list[Prediction]:
    """Mean-pooled (bi)LSTM hidden states followed by a linear regressor.

    ``head="ols"`` fits least squares on a randomly initialized encoder;
    ``head="adam"`` trains encoder and head jointly on squared error.
    """
    if encoder.kind not in ("lstm", "bilstm"):
        raise ConfigError("mean-pool baselines use an lstm or bilstm encoder")
    train_docs = list(train_docs)
    cfg = EncoderConfig(**{**encoder.__dict__, "batch_norm": False})
    params = EncoderParams.init(cfg)
    if head == "ols":
        feats = np.stack([mean_pool(params.forward(d.matrix).support_points) for d in train_docs])
        coef = fit_least_squares(feats, np.array([d.score for d in train_docs], dtype=float))
    elif head == "adam":
        coef = _train_regression_head(params, train_docs, train_cfg or TrainConfig())
    else:
        raise ConfigError(f"unknown baseline head {head!r}")
    preds = []
    for d in test_docs:
        raw = float(_apply_linear(coef, mean_pool(params.forward(d.matrix).support_points)))
        preds.append(Prediction(d.id, clamp_score(round_half_away(raw), num_levels), raw,
                                gold=getattr(d, "score", None)))
    return preds
