"""Empirical distributions and entropic optimal transport between them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ValidationError

EPS_STAGE_FACTOR = 4.0
STAGE_TOL = 1e-6


@dataclass
class DocDistribution:
    support: np.ndarray  # N x d
    weights: np.ndarray  # N, sums to 1
    doc_id: str = ""

    def __post_init__(self):
        self.support = np.atleast_2d(np.asarray(self.support, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.support.shape[0] < 1 or self.weights.shape != (self.support.shape[0],):
            raise ValidationError("distribution needs N >= 1 points and N weights")
        if np.any(self.weights < 0) or abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValidationError("weights must be non-negative and sum to 1")

    @property
    def n(self) -> int:
        return self.support.shape[0]


def make_distribution(points, doc_id: str = "") -> DocDistribution:
    """Uniform weights over the given support points (an ``EncoderOutput`` or array)."""
    z = getattr(points, "support_points", points)
    doc_id = getattr(points, "doc_id", doc_id) or doc_id
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    n = z.shape[0]
    if n < 1:
        raise ValidationError("empty support")
    return DocDistribution(z, np.full(n, 1.0 / n), doc_id)


def cost_matrix(mu, nu) -> np.ndarray:
    """Half squared Euclidean distance between every pair of support points."""
    a = getattr(mu, "support", mu)
    b = getattr(nu, "support", nu)
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return _half_sq_dist(np.ascontiguousarray(a, dtype=np.float64),
                         np.ascontiguousarray(b, dtype=np.float64))


@dataclass(frozen=True)
class SinkhornConfig:
    """``epsilon=None`` means epsilon_scale * mean(C) per pair."""

    epsilon: float | None = None
    epsilon_scale: float = 0.1
    max_iters: int = 500
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if not self.epsilon_scale > 0 or not self.tolerance > 0 or self.max_iters < 1:
            raise ValidationError("invalid Sinkhorn configuration")

    def resolve(self, C: np.ndarray) -> float:
        if self.epsilon is not None:
            return self.epsilon
        scale = float(C.mean())
        # all points coincide: any positive epsilon gives the same plan
        return self.epsilon_scale * scale if scale > 0 else 1.0


@dataclass
class TransportResult:
    plan: np.ndarray
    cost: float
    iterations_used: int
    converged: bool
    epsilon: float
    regularized_cost: float
    marginal_violation: float
    cost_matrix: np.ndarray


@numba.njit(cache=True, fastmath=True)
def _half_sq_dist(a, b):
    n1, d = a.shape
    n2 = b.shape[0]
    C = np.empty((n1, n2))
    for i in range(n1):
        for j in range(n2):
            s = 0.0
            for k in range(d):
                t = a[i, k] - b[j, k]
                s += t * t
            C[i, j] = 0.5 * s
    return C


@numba.njit(cache=True)
def _log_update(C, log_u, log_v, f, g, eps):
    # exact log-domain half steps: f = eps(log u - LSE_j((g - C)/eps)), then g likewise
    n1, n2 = C.shape
    for i in range(n1):
        m = -np.inf
        for j in range(n2):
            val = (g[j] - C[i, j]) / eps
            if val > m:
                m = val
        s = 0.0
        for j in range(n2):
            s += math.exp((g[j] - C[i, j]) / eps - m)
        f[i] = eps * (log_u[i] - m - math.log(s))
    for j in range(n2):
        m = -np.inf
        for i in range(n1):
            val = (f[i] - C[i, j]) / eps
            if val > m:
                m = val
        s = 0.0
        for i in range(n1):
            s += math.exp((f[i] - C[i, j]) / eps - m)
        g[j] = eps * (log_v[j] - m - math.log(s))


@numba.njit(cache=True)
def _kernel(C, f, g, eps):
    n1, n2 = C.shape
    K = np.empty((n1, n2))
    for i in range(n1):
        for j in range(n2):
            K[i, j] = math.exp((f[i] + g[j] - C[i, j]) / eps)
    return K


@numba.njit(cache=True)
def _sinkhorn_stabilized(C, log_u, log_v, eps, max_iters, tol, f, g):
    """Sinkhorn with scalings absorbed into log potentials (f, g).

    The plan is diag(a) K diag(b) with K = exp((f + g - C)/eps). Scaling
    steps are plain mat-vecs; whenever a scaling leaves [1/BIG, BIG] or a
    kernel sum underflows, a and b are folded into f, g and the step is
    redone exactly in the log domain.
    """
    BIG = 1e30
    TINY = 1e-280
    n1, n2 = C.shape
    u = np.exp(log_u)
    v = np.exp(log_v)
    f = f.copy()
    g = g.copy()
    _log_update(C, log_u, log_v, f, g, eps)
    iters = 1
    K = _kernel(C, f, g, eps)
    a = np.ones(n1)
    b = np.ones(n2)
    Kb = np.empty(n1)
    Ka = np.empty(n2)
    converged = False
    viol = np.inf
    while True:
        for i in range(n1):
            s = 0.0
            for j in range(n2):
                s += K[i, j] * b[j]
            Kb[i] = s
        viol = 0.0
        for i in range(n1):
            d = abs(a[i] * Kb[i] - u[i])
            if d > viol:
                viol = d
        if viol < tol:
            converged = True
            break
        if iters >= max_iters:
            break
        absorb = False
        for i in range(n1):
            if Kb[i] < TINY:
                absorb = True
        if not absorb:
            for i in range(n1):
                a[i] = u[i] / Kb[i]
            for j in range(n2):
                s = 0.0
                for i in range(n1):
                    s += K[i, j] * a[i]
                Ka[j] = s
            for j in range(n2):
                if Ka[j] < TINY:
                    absorb = True
        if not absorb:
            for j in range(n2):
                b[j] = v[j] / Ka[j]
            for i in range(n1):
                if a[i] > BIG or a[i] < 1.0 / BIG:
                    absorb = True
            for j in range(n2):
                if b[j] > BIG or b[j] < 1.0 / BIG:
                    absorb = True
            iters += 1
            if absorb:
                for i in range(n1):
                    f[i] += eps * math.log(a[i])
                    a[i] = 1.0
                for j in range(n2):
                    g[j] += eps * math.log(b[j])
                    b[j] = 1.0
                K = _kernel(C, f, g, eps)
        else:
            # a kernel sum underflowed: fold the scalings in and redo exactly
            for i in range(n1):
                f[i] += eps * math.log(a[i])
                a[i] = 1.0
            for j in range(n2):
                g[j] += eps * math.log(b[j])
                b[j] = 1.0
            _log_update(C, log_u, log_v, f, g, eps)
            iters += 1
            K = _kernel(C, f, g, eps)
    for i in range(n1):
        f[i] += eps * math.log(a[i])
    for j in range(n2):
        g[j] += eps * math.log(b[j])
    return f, g, iters, converged, viol


@numba.njit(cache=True)
def _plan_and_kl(C, f, g, eps, log_u, log_v):
    # KL(plan | u v^T); its envelope gradient w.r.t. C is the plan itself
    n1, n2 = C.shape
    plan = np.empty((n1, n2))
    kl = 1.0
    for i in range(n1):
        for j in range(n2):
            lp = (f[i] + g[j] - C[i, j]) / eps
            p = math.exp(lp)
            plan[i, j] = p
            if p > 0.0:
                kl += p * (lp - log_u[i] - log_v[j]) - p
    return plan, kl


def _canonical_swap(mu: DocDistribution, nu: DocDistribution) -> bool:
    # fixed orientation so W(mu, nu) and W(nu, mu) run the identical iteration
    if mu.n != nu.n:
        return mu.n > nu.n
    a = mu.support.tobytes() + mu.weights.tobytes()
    b = nu.support.tobytes() + nu.weights.tobytes()
    return a > b


def sinkhorn(mu: DocDistribution, nu: DocDistribution, cfg: SinkhornConfig | None = None) -> TransportResult:
    """Log-stabilized Sinkhorn; ``cost`` is the unregularized <C, plan>."""
    cfg = cfg or SinkhornConfig()
    if _canonical_swap(mu, nu):
        r = sinkhorn(nu, mu, cfg)
        return TransportResult(
            r.plan.T, r.cost, r.iterations_used, r.converged, r.epsilon,
            r.regularized_cost, r.marginal_violation, r.cost_matrix.T,
        )
    C = cost_matrix(mu, nu)
    if not np.all(np.isfinite(C)):
        raise ValidationError("non-finite cost matrix")
    eps = cfg.resolve(C)
    # zero-weight points carry no mass; solve on the rest
    ru, rv = mu.weights > 0, nu.weights > 0
    Cr = C[np.ix_(ru, rv)]
    log_u = np.log(mu.weights[ru])
    log_v = np.log(nu.weights[rv])
    Cr = np.ascontiguousarray(Cr)
    f, g = np.zeros(len(log_u)), np.zeros(len(log_v))
    iters = 0
    # epsilon scaling: warm-start the potentials from coarser problems so a
    # nearly sparse optimal plan does not leave Sinkhorn crawling in its 1/k tail
    stage = float(Cr.max())
    while stage > EPS_STAGE_FACTOR * eps and iters < cfg.max_iters - 1:
        f, g, used, _, _ = _sinkhorn_stabilized(
            Cr, log_u, log_v, stage, cfg.max_iters - 1 - iters, max(cfg.tolerance, STAGE_TOL), f, g
        )
        iters += used
        stage /= EPS_STAGE_FACTOR
    f, g, used, converged, viol = _sinkhorn_stabilized(
        Cr, log_u, log_v, eps, cfg.max_iters - iters, cfg.tolerance, f, g
    )
    iters += used
    plan_r, kl = _plan_and_kl(Cr, f, g, eps, log_u, log_v)
    plan = np.zeros_like(C)
    plan[np.ix_(ru, rv)] = plan_r
    cost = float(np.sum(plan * C))
    return TransportResult(plan, cost, int(iters), bool(converged), eps,
                           cost + eps * kl, float(viol), C)


def wasserstein(mu, nu, cfg: SinkhornConfig | None = None) -> float:
    return sinkhorn(mu, nu, cfg).cost


def wasserstein_grad(result: TransportResult, mu: DocDistribution, nu: DocDistribution):
    """Gradients of <C, plan> w.r.t. both supports with the plan held fixed."""
    P = result.plan
    z1, z2 = mu.support, nu.support
    g1 = P.sum(axis=1)[:, None] * z1 - P @ z2
    g2 = P.sum(axis=0)[:, None] * z2 - P.T @ z1
    return g1, g2
