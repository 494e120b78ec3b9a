"""Agreement metrics, the repeated-split protocol and the consistency report."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import CorelError, UndefinedKappaError, ValidationError

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- kappa


@dataclass(frozen=True)
class KappaInput:
    pairs: tuple[tuple[int, int], ...]
    num_levels: int

    def __post_init__(self):
        if not self.pairs:
            raise ValidationError("kappa needs at least one (true, predicted) pair")
        if self.num_levels < 2:
            raise ValidationError("kappa needs at least 2 levels")
        for p, q in self.pairs:
            if not (1 <= p <= self.num_levels and 1 <= q <= self.num_levels):
                raise ValidationError(f"pair ({p}, {q}) outside [1, {self.num_levels}]")

    @classmethod
    def from_scores(cls, true, pred, num_levels: int) -> "KappaInput":
        true, pred = list(true), list(pred)
        if len(true) != len(pred):
            raise ValidationError("true and predicted score lists differ in length")
        return cls(tuple(zip(map(int, true), map(int, pred))), int(num_levels))


def weighted_kappa(data: KappaInput, power: int = 2) -> float:
    """1 - sum(A*O) / sum(A*E) with weights |p - q|^power / (M - 1)^power."""
    M = data.num_levels
    O = np.zeros((M, M))
    for p, q in data.pairs:
        O[p - 1, q - 1] += 1
    levels = np.arange(M)
    A = np.abs(levels[:, None] - levels[None, :]) ** power / (M - 1) ** power
    E = np.outer(O.sum(axis=1), O.sum(axis=0))
    E *= O.sum() / E.sum()
    den = float(np.sum(A * E))
    num = float(np.sum(A * O))
    if den == 0.0:
        raise UndefinedKappaError("kappa undefined: all true and predicted scores share one level")
    return 1.0 - num / den


def qwk(data: KappaInput) -> float:
    return weighted_kappa(data, 2)


def linear_kappa(data: KappaInput) -> float:
    return weighted_kappa(data, 1)


# ---------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitPlan:
    repeats: int = 10
    train_fraction: float = 0.7
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValidationError("train_fraction must lie in (0, 1)")
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")


def repeat_seed(seed: int, repeat: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, repeat])


def _apportion(counts: dict, fraction: float, total: int) -> dict:
    # largest remainder: every class within 1 of its exact share, sum == total
    exact = {k: fraction * n for k, n in counts.items()}
    alloc = {k: math.floor(v) for k, v in exact.items()}
    rest = total - sum(alloc.values())
    for k in sorted(counts, key=lambda k: (-(exact[k] - alloc[k]), k))[:rest]:
        alloc[k] += 1
    return alloc


def split_indices(scores, plan: SplitPlan, repeat: int):
    """Train/test index arrays for one repeat, drawn from the repeat's own stream."""
    scores = list(scores)
    n = len(scores)
    rng = np.random.default_rng(repeat_seed(plan.seed, repeat).spawn(1)[0])
    n_train = math.floor(plan.train_fraction * n + 0.5)
    if not plan.stratified:
        perm = rng.permutation(n)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])
    by_class = defaultdict(list)
    for i, s in enumerate(scores):
        by_class[s].append(i)
    alloc = _apportion({k: len(v) for k, v in by_class.items()}, plan.train_fraction, n_train)
    train, test = [], []
    for k in sorted(by_class):
        members = np.array(by_class[k])
        perm = rng.permutation(len(members))
        train.extend(members[perm[: alloc[k]]])
        test.extend(members[perm[alloc[k] :]])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(test, dtype=int))


# ---------------------------------------------------------------- protocol


@dataclass
class RepeatResult:
    repeat: int
    qwk: float | None
    n_train: int
    n_test: int
    failed: bool = False
    notes: list[str] = field(default_factory=list)


@dataclass
class ProtocolReport:
    method: str
    repeats: list[RepeatResult]
    predictions: list[tuple[int, str, int, int]]  # (repeat, doc id, gold, predicted)
    num_levels: int
    qwk_mean: float | None = None
    qwk_std: float | None = None
    qwk_pooled: float | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "num_levels": self.num_levels,
            "qwk_mean": self.qwk_mean,
            "qwk_std": self.qwk_std,
            "qwk_pooled": self.qwk_pooled,
            "repeats": [r.__dict__ for r in self.repeats],
            "predictions": [
                {"repeat": r, "id": i, "gold": g, "predicted": p} for r, i, g, p in self.predictions
            ],
        }


# fit(train_docs, repeat_seed_sequence) -> predict(test_docs) -> list of int scores
Fitter = Callable[[list, np.random.SeedSequence], Callable[[list], list]]


def _safe_qwk(golds, preds, M):
    try:
        return qwk(KappaInput.from_scores(golds, preds, M))
    except UndefinedKappaError:
        return None


def run_repeat(corpus, fit: Fitter, plan: SplitPlan, repeat: int):
    docs = corpus.documents
    tr, te = split_indices([d.score for d in docs], plan, repeat)
    train = [docs[i] for i in tr]
    test = [docs[i] for i in te]
    result = RepeatResult(repeat, None, len(train), len(test))
    missing = sorted(set(range(1, corpus.num_levels + 1)) - {d.score for d in train})
    if missing:
        msg = f"repeat {repeat}: score classes {missing} absent from the training split"
        log.warning(msg)
        result.notes.append(msg)
    try:
        predict_fn = fit(train, repeat_seed(plan.seed, repeat))
        preds = [int(p) for p in predict_fn(test)]
    except CorelError as exc:
        msg = f"repeat {repeat} failed: {exc}"
        log.warning(msg)
        result.failed = True
        result.notes.append(msg)
        return result, []
    result.qwk = _safe_qwk([d.score for d in test], preds, corpus.num_levels)
    rows = [(repeat, d.id, d.score, p) for d, p in zip(test, preds)]
    return result, rows


def run_protocol(corpus, fit: Fitter, plan: SplitPlan, method: str = "custom",
                 threads: int = 1) -> ProtocolReport:
    """Repeat: split, fit on train, predict test, score. Aggregate over repeats.

    ``qwk_std`` is the population standard deviation across successful
    repeats; ``qwk_pooled`` scores all test predictions concatenated.
    """
    if threads > 1 and plan.repeats > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_repeat, [corpus] * plan.repeats, [fit] * plan.repeats,
                                     [plan] * plan.repeats, range(plan.repeats)))
    else:
        outcomes = [run_repeat(corpus, fit, plan, r) for r in range(plan.repeats)]

    results = [o[0] for o in outcomes]
    rows = [row for o in outcomes for row in o[1]]
    report = ProtocolReport(method, results, rows, corpus.num_levels)
    ok = [r.qwk for r in results if not r.failed and r.qwk is not None]
    n_failed = sum(r.failed for r in results)
    if n_failed:
        log.warning("%d of %d repeats failed and are excluded from aggregates", n_failed, len(results))
    if ok:
        report.qwk_mean = math.fsum(ok) / len(ok)
        report.qwk_std = float(np.std(ok))
    if rows:
        report.qwk_pooled = _safe_qwk([r[2] for r in rows], [r[3] for r in rows], corpus.num_levels)
    return report


# ---------------------------------------------------------------- consistency


CLASS_ORDER = ("consistently-differs", "consistently-matches", "mixed", "never-tested")


@dataclass
class ConsistencyRow:
    doc_id: str
    gold: int
    predictions: list[int]
    modal_prediction: int | None
    consistency: str


def _modal(preds):
    if not preds:
        return None
    counts = Counter(preds)
    best = max(counts.values())
    # ties go to the smallest level
    return min(k for k, c in counts.items() if c == best)


def consistency_report(predictions, golds: dict, min_occurrences: int = 2) -> list[ConsistencyRow]:
    """Classify every document by how its test-time predictions relate to gold.

    ``predictions`` holds ``(repeat, doc_id, gold, predicted)`` rows;
    ``golds`` maps every corpus doc id to its gold score so untested
    documents are listed too.
    """
    seen = defaultdict(list)
    for _, doc_id, _, pred in sorted(predictions, key=lambda r: (r[0], r[1])):
        seen[doc_id].append(int(pred))
    rows = []
    for doc_id, gold in golds.items():
        preds = seen.get(doc_id, [])
        if not preds:
            cls = "never-tested"
        elif len(preds) >= min_occurrences and all(p == gold for p in preds):
            cls = "consistently-matches"
        elif len(preds) >= min_occurrences and all(p != gold for p in preds):
            cls = "consistently-differs"
        else:
            cls = "mixed"
        rows.append(ConsistencyRow(doc_id, gold, preds, _modal(preds), cls))
    rows.sort(key=lambda r: (CLASS_ORDER.index(r.consistency), r.doc_id))
    return rows


def write_consistency_csv(path: str | Path, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["consistency", "id", "original_score", "ml_prediction", "n_tested", "predictions"])
        for r in rows:
            w.writerow([
                r.consistency, r.doc_id, r.gold,
                "" if r.modal_prediction is None else r.modal_prediction,
                len(r.predictions), ";".join(map(str, r.predictions)),
            ])
