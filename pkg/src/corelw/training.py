"""Triplet sampling and margin-loss training of an encoder in Wasserstein space."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .encoders import EncoderConfig, EncoderParams, batchnorm_backward, batchnorm_forward
from .errors import TrainingError, ValidationError
from .ot import SinkhornConfig, make_distribution, sinkhorn, wasserstein_grad

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Triplet:
    anchor_id: str
    positive_id: str
    negative_id: str


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 1.0
    learning_rate: float = 0.01
    batch_size: int = 408
    epochs: int = 5
    triplets_per_anchor: int = 8
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    resample_each_epoch: bool = False
    clip_norm: float | None = None

    def __post_init__(self):
        if self.margin < 0 or self.learning_rate <= 0:
            raise TrainingError("margin must be >= 0 and learning_rate > 0")
        if min(self.batch_size, self.epochs, self.triplets_per_anchor) < 1:
            raise TrainingError("batch_size, epochs and triplets_per_anchor must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise TrainingError("invalid Adam constants")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    active_fractions: list[float] = field(default_factory=list)
    seed: int = 0
    n_triplets: int = 0
    n_batches: int = 0
    skipped_anchors: list[str] = field(default_factory=list)
    unconverged_sinkhorn: int = 0
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        return {
            "epoch_losses": self.epoch_losses,
            "active_fractions": self.active_fractions,
            "seed": self.seed,
            "n_triplets": self.n_triplets,
            "n_batches": self.n_batches,
            "skipped_anchors": self.skipped_anchors,
            "unconverged_sinkhorn": self.unconverged_sinkhorn,
            "checkpoint": self.checkpoint,
        }


# ---------------------------------------------------------------- sampling


def negative_class_probs(anchor_score: int, classes) -> dict[int, float]:
    """P(class k) proportional to |s - k| over the available score classes."""
    classes = sorted(set(classes))
    w = {k: abs(anchor_score - k) for k in classes}
    total = sum(w.values())
    if total == 0:
        return {}
    return {k: w[k] / total for k in classes}


def sample_triplets(docs, cfg: TrainConfig, rng: np.random.Generator) -> list[Triplet]:
    """``triplets_per_anchor`` triplets for every anchor whose class has another member.

    ``docs`` is any sequence of objects with ``id`` and ``score``.
    """
    return _sample(docs, cfg, rng)[0]


def _sample(docs, cfg, rng):
    by_class: dict[int, list[str]] = defaultdict(list)
    for d in docs:
        by_class[d.score].append(d.id)
    if len(by_class) < 2:
        raise TrainingError("no valid triplets: training set has a single score level")

    triplets = []
    skipped = []
    for d in docs:
        positives = [i for i in by_class[d.score] if i != d.id]
        if not positives:
            skipped.append(d.id)
            continue
        probs = negative_class_probs(d.score, by_class.keys())
        levels = list(probs)
        p = np.array([probs[k] for k in levels])
        for _ in range(cfg.triplets_per_anchor):
            pos = positives[rng.integers(len(positives))]
            k = levels[rng.choice(len(levels), p=p)]
            members = by_class[k]
            neg = members[rng.integers(len(members))]
            triplets.append(Triplet(d.id, pos, neg))
    if skipped:
        log.warning("skipped %d anchors in singleton score classes: %s", len(skipped), skipped[:10])
    if not triplets:
        raise TrainingError("no valid triplets")
    return triplets, skipped


def triplet_loss(w_ap: float, w_an: float, m: float) -> float:
    return max(w_ap - w_an + m, 0.0)


# ---------------------------------------------------------------- Adam


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              betas=(0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    b1, b2 = betas
    state.t += 1
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


def clip_grads(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


# ---------------------------------------------------------------- loss


@dataclass
class BatchResult:
    loss: float
    grads: dict
    input_grads: dict
    active: int
    unconverged: int
    bn_mean: np.ndarray | None = None
    bn_var: np.ndarray | None = None


def batch_loss_and_grads(params: EncoderParams, triplets, inputs: dict, cfg: TrainConfig,
                         sinkhorn_cfg: SinkhornConfig) -> BatchResult:
    """Mean hinge loss over ``triplets`` and its gradient w.r.t. every parameter.

    ``inputs`` maps doc id to the d_w x N input matrix. Each distinct document
    is encoded once; batch normalization (when enabled) pools all of their
    support points.
    """
    ids = sorted({i for t in triplets for i in (t.anchor_id, t.positive_id, t.negative_id)})
    outs = {i: params.forward(inputs[i], i) for i in ids}
    raw = [outs[i].support_points for i in ids]
    use_bn = params.config.batch_norm
    if use_bn:
        normed, bn_cache, bn_mean, bn_var = batchnorm_forward(raw, params.bn_gamma, params.bn_beta)
        points = dict(zip(ids, normed))
    else:
        points = dict(zip(ids, raw))
        bn_mean = bn_var = None
    dists = {i: make_distribution(points[i], i) for i in ids}

    cache = {}
    unconverged = 0

    def transport(a, b):
        nonlocal unconverged
        key = (a, b)
        if key not in cache:
            r = sinkhorn(dists[a], dists[b], sinkhorn_cfg)
            if not r.converged:
                unconverged += 1
            cache[key] = (r, wasserstein_grad(r, dists[a], dists[b]))
        return cache[key]

    P = len(triplets)
    dpoints = {i: np.zeros_like(points[i]) for i in ids}
    total = 0.0
    active = 0
    for t in triplets:
        r_ap, (ga_p, gp) = transport(t.anchor_id, t.positive_id)
        r_an, (ga_n, gn) = transport(t.anchor_id, t.negative_id)
        loss = triplet_loss(r_ap.cost, r_an.cost, cfg.margin)
        total += loss
        # hinge subgradient is 0 at the kink
        if loss > 0:
            active += 1
            dpoints[t.anchor_id] += (ga_p - ga_n) / P
            dpoints[t.positive_id] += gp / P
            dpoints[t.negative_id] -= gn / P

    grads = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
    if use_bn:
        draw, dgamma, dbeta = batchnorm_backward([dpoints[i] for i in ids], bn_cache)
        grads["bn.gamma"] += dgamma
        grads["bn.beta"] += dbeta
    else:
        draw = [dpoints[i] for i in ids]
    input_grads = {}
    for i, dz in zip(ids, draw):
        g, dx = params.backward(outs[i], dz)
        for name, val in g.items():
            grads[name] += val
        input_grads[i] = dx
    return BatchResult(total / P, grads, input_grads, active, unconverged, bn_mean, bn_var)


# ---------------------------------------------------------------- training loop


def train(docs, encoder: EncoderConfig | str, cfg: TrainConfig,
          sinkhorn_cfg: SinkhornConfig | None = None, params: EncoderParams | None = None,
          d_w: int | None = None):
    """Fit encoder parameters on embedded training documents.

    ``docs`` are ``EmbeddedDoc`` objects built with training-split SIF weights.
    ``encoder`` is a config or just a kind name, in which case dimensions
    default to the input width. Returns ``(params, report)``.
    """
    sinkhorn_cfg = sinkhorn_cfg or SinkhornConfig()
    docs = list(docs)
    if not docs:
        raise TrainingError("empty training set")
    if isinstance(encoder, str):
        d = d_w or docs[0].matrix.shape[0]
        encoder = EncoderConfig(kind=encoder, d_w=d, d_h=d, d_c=d, seed=cfg.seed)
    if params is None:
        params = EncoderParams.init(encoder)
    inputs = {d.id: d.matrix for d in docs}

    ss = np.random.SeedSequence([cfg.seed, 0x7A1])
    rng = np.random.default_rng(ss)
    triplets, skipped = _sample(docs, cfg, rng)
    report = TrainReport(seed=cfg.seed, n_triplets=len(triplets), skipped_anchors=skipped)
    state = AdamState()
    tensors = params.tensors()
    batch_index = 0
    for epoch in range(cfg.epochs):
        if epoch > 0 and cfg.resample_each_epoch:
            triplets = sample_triplets(docs, cfg, rng)
        order = rng.permutation(len(triplets))
        epoch_loss = 0.0
        epoch_active = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [triplets[k] for k in order[start : start + cfg.batch_size]]
            try:
                res = batch_loss_and_grads(params, batch, inputs, cfg, sinkhorn_cfg)
            except ValidationError as exc:  # non-finite support points
                raise TrainingError(f"training diverged at batch {batch_index}: {exc}") from exc
            if not math.isfinite(res.loss) or not all(np.all(np.isfinite(g)) for g in res.grads.values()):
                raise TrainingError(f"non-finite loss or gradient at batch {batch_index}")
            if cfg.clip_norm is not None:
                clip_grads(res.grads, cfg.clip_norm)
            adam_step(tensors, res.grads, state, cfg.learning_rate,
                      (cfg.adam_beta1, cfg.adam_beta2), cfg.adam_eps)
            if res.bn_mean is not None:
                params.update_running_stats(res.bn_mean, res.bn_var)
            epoch_loss += res.loss * len(batch)
            epoch_active += res.active
            report.unconverged_sinkhorn += res.unconverged
            batch_index += 1
        report.epoch_losses.append(epoch_loss / len(triplets))
        report.active_fractions.append(epoch_active / len(triplets))
        log.info("epoch %d loss %.6f active %.3f", epoch + 1,
                 report.epoch_losses[-1], report.active_fractions[-1])
    report.n_batches = batch_index
    return params, report
