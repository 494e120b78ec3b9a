import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import central_difference, exact_ot, exact_ot_permutation
from corelw.errors import ValidationError
from corelw.ot import (
    DocDistribution,
    SinkhornConfig,
    cost_matrix,
    make_distribution,
    sinkhorn,
    wasserstein_grad,
)

TIGHT = dict(max_iters=2_000_000, tolerance=1e-12)


def small_eps(mu, nu, factor=1e-3, **kw):
    C = cost_matrix(mu, nu)
    return SinkhornConfig(epsilon=factor * float(C.max()), **kw)


# ------------------------------------------------------------------ distributions


@pytest.mark.parametrize("n", [1, 3, 4, 7])
def test_uniform_weights(n, rng):
    d = make_distribution(rng.normal(size=(n, 2)))
    assert np.all(d.weights == 1.0 / n)
    assert abs(np.sum(d.weights) - 1) <= 1e-15


def test_distribution_validation():
    with pytest.raises(ValidationError):
        make_distribution(np.zeros((0, 3)))
    with pytest.raises(ValidationError):
        DocDistribution(np.zeros((2, 2)), np.array([0.7, 0.2]))
    with pytest.raises(ValidationError):
        DocDistribution(np.zeros((2, 2)), np.array([1.5, -0.5]))


# ------------------------------------------------------------------ cost matrix


def test_cost_matrix_examples(rng):
    a = make_distribution(np.array([[1.0, 2.0]]))
    assert cost_matrix(a, a).tolist() == [[0.0]]
    b = make_distribution(np.array([[0.0, 0.0]]))
    c = make_distribution(np.array([[3.0, 4.0]]))
    assert cost_matrix(b, c)[0, 0] == pytest.approx(12.5, abs=1e-12)
    z1, z2 = rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
    C = cost_matrix(make_distribution(z1), make_distribution(z2))
    for i in range(3):
        for j in range(2):
            assert C[i, j] == pytest.approx(0.5 * sum((z1[i, k] - z2[j, k]) ** 2 for k in range(4)), rel=1e-12)
    with pytest.raises(ValidationError):
        cost_matrix(make_distribution(z1), make_distribution(rng.normal(size=(2, 3))))


# ------------------------------------------------------------------ sinkhorn examples


def test_self_transport_small_at_small_epsilon(rng):
    z = rng.normal(size=(6, 3))
    mu = make_distribution(z)
    C = cost_matrix(mu, mu)
    r = sinkhorn(mu, mu, SinkhornConfig(epsilon=0.01 * C.mean(), **TIGHT))
    assert r.converged
    assert r.cost < 0.05 * C.mean()


@pytest.mark.parametrize("eps", [1e-4, 0.1, 10.0, None])
def test_two_diracs(eps, rng):
    z1, z2 = rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    mu, nu = make_distribution(z1), make_distribution(z2)
    r = sinkhorn(mu, nu, SinkhornConfig(epsilon=eps))
    assert r.cost == pytest.approx(0.5 * np.sum((z1 - z2) ** 2), rel=1e-14)
    g1, g2 = wasserstein_grad(r, mu, nu)
    np.testing.assert_allclose(g1, z1 - z2, rtol=1e-14)
    np.testing.assert_allclose(g2, z2 - z1, rtol=1e-14)


def test_matches_lp_oracle_on_3x3(rng):
    for _ in range(5):
        z1, z2 = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        mu, nu = make_distribution(z1), make_distribution(z2)
        r = sinkhorn(mu, nu, small_eps(mu, nu, max_iters=5_000_000))
        exact = exact_ot_permutation(z1, z2)
        assert exact_ot(z1, z2) == pytest.approx(exact, rel=1e-9)
        assert abs(r.cost - exact) / exact < 0.02


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_oracle_equivalence_small_instances(n1, n2, seed):
    rng = np.random.default_rng(seed)
    z1, z2 = rng.normal(size=(n1, 3)), rng.normal(size=(n2, 3))
    mu, nu = make_distribution(z1), make_distribution(z2)
    r = sinkhorn(mu, nu, small_eps(mu, nu, max_iters=5_000_000))
    exact = exact_ot(z1, z2)
    assert abs(r.cost - exact) <= 0.02 * exact + 1e-12


def test_non_finite_cost_rejected():
    mu = make_distribution(np.array([[np.inf, 0.0]]))
    with pytest.raises(ValidationError):
        sinkhorn(mu, make_distribution(np.zeros((1, 2))))


def test_non_convergence_is_reported(rng):
    mu, nu = make_distribution(rng.normal(size=(5, 2))), make_distribution(rng.normal(size=(4, 2)))
    r = sinkhorn(mu, nu, small_eps(mu, nu, factor=1e-4, max_iters=2, tolerance=1e-14))
    assert not r.converged
    assert r.iterations_used == 2
    assert np.all(np.isfinite(r.plan))


def test_extreme_small_epsilon_is_stable(rng):
    z1, z2 = 50 * rng.normal(size=(8, 3)), 50 * rng.normal(size=(7, 3))
    mu, nu = make_distribution(z1), make_distribution(z2)
    r = sinkhorn(mu, nu, SinkhornConfig(epsilon=1e-6, max_iters=10_000))
    assert np.all(np.isfinite(r.plan)) and np.isfinite(r.cost)


def test_zero_weight_points_carry_no_mass(rng):
    z1, z2 = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    mu = DocDistribution(z1, np.array([0.5, 0.0, 0.5]))
    nu = make_distribution(z2)
    r = sinkhorn(mu, nu)
    assert np.all(r.plan[1] == 0)
    assert r.converged


# ------------------------------------------------------------------ properties

clouds = st.tuples(st.integers(1, 7), st.integers(1, 7), st.integers(1, 5), st.integers(0, 2**31))


def _pair(spec, scale=1.0):
    n1, n2, d, seed = spec
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n1, d)) * scale, rng.normal(size=(n2, d)) * scale + rng.normal(size=d)


@given(clouds)
@settings(max_examples=60, deadline=None)
def test_symmetry_nonnegativity_and_marginals(spec):
    z1, z2 = _pair(spec)
    mu, nu = make_distribution(z1), make_distribution(z2)
    cfg = SinkhornConfig()
    a, b = sinkhorn(mu, nu, cfg), sinkhorn(nu, mu, cfg)
    assert abs(a.cost - b.cost) < 1e-9
    assert a.cost >= 0
    assert np.all(a.plan >= 0)
    assert a.cost == pytest.approx(float(np.sum(a.plan * cost_matrix(mu, nu))), abs=1e-10)
    if a.converged:
        assert np.max(np.abs(a.plan.sum(1) - mu.weights)) < cfg.tolerance
        assert np.max(np.abs(a.plan.sum(0) - nu.weights)) < cfg.tolerance


@given(clouds, arrays(np.float64, 5, elements=st.floats(-100, 100)))
@settings(max_examples=40, deadline=None)
def test_translation_invariance(spec, shift):
    z1, z2 = _pair(spec)
    t = shift[: z1.shape[1]]
    cfg = SinkhornConfig(**TIGHT)
    a = sinkhorn(make_distribution(z1), make_distribution(z2), cfg).cost
    b = sinkhorn(make_distribution(z1 + t), make_distribution(z2 + t), cfg).cost
    assert abs(a - b) < 1e-9


@given(clouds)
@settings(max_examples=25, deadline=None)
def test_cost_monotone_in_epsilon(spec):
    z1, z2 = _pair(spec)
    mu, nu = make_distribution(z1), make_distribution(z2)
    mean_c = float(cost_matrix(mu, nu).mean())
    if mean_c == 0:
        return
    costs = [sinkhorn(mu, nu, SinkhornConfig(epsilon=f * mean_c, **TIGHT)).cost
             for f in (2.0, 1.0, 0.5, 0.2, 0.1, 0.05)]
    for hi, lo in zip(costs, costs[1:]):
        assert lo <= hi + 1e-9


# ------------------------------------------------------------------ gradients


def test_self_transport_gradient_vanishes(rng):
    z = rng.normal(size=(5, 3))
    mu = make_distribution(z)
    C = cost_matrix(mu, mu)
    r = sinkhorn(mu, mu, SinkhornConfig(epsilon=1e-3 * C.mean(), **TIGHT))
    g1, g2 = wasserstein_grad(r, mu, mu)
    assert np.max(np.abs(g1)) < 1e-6 * np.max(np.abs(z))
    assert np.max(np.abs(g2)) < 1e-6 * np.max(np.abs(z))


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("eps_scale", [0.05, 0.5])
def test_gradient_matches_finite_difference_2x2(seed, eps_scale):
    # With epsilon held fixed, the fixed-plan gradient is the exact derivative of
    # the objective the plan minimizes (<C, plan> + eps * KL). The bare <C, plan>
    # also moves through the plan, so it is not compared here.
    rng = np.random.default_rng(seed)
    z1, z2 = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    eps = eps_scale * float(cost_matrix(make_distribution(z1), make_distribution(z2)).mean())
    cfg = SinkhornConfig(epsilon=eps, **TIGHT)
    r = sinkhorn(make_distribution(z1), make_distribution(z2), cfg)
    assert r.converged
    g1, g2 = wasserstein_grad(r, make_distribution(z1), make_distribution(z2))
    d1, d2 = rng.normal(size=z1.shape), rng.normal(size=z2.shape)
    analytic = float(np.sum(g1 * d1) + np.sum(g2 * d2))

    def reg(t):
        return sinkhorn(make_distribution(z1 + t * d1), make_distribution(z2 + t * d2), cfg).regularized_cost

    fd = central_difference(reg, 0.0, 1.0, h=1e-6)
    assert abs(fd - analytic) / max(abs(fd), 1e-8) < 1e-3


def test_regularized_cost_definition(rng):
    mu, nu = make_distribution(rng.normal(size=(3, 2))), make_distribution(rng.normal(size=(4, 2)))
    r = sinkhorn(mu, nu, SinkhornConfig(epsilon=0.3, **TIGHT))
    P, uv = r.plan, np.outer(mu.weights, nu.weights)
    kl = float(np.sum(P * np.log(P / uv) - P + uv))
    assert r.regularized_cost == pytest.approx(r.cost + 0.3 * kl, rel=1e-10)


def test_default_epsilon_scales_with_cost(rng):
    z1, z2 = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    r1 = sinkhorn(make_distribution(z1), make_distribution(z2))
    r2 = sinkhorn(make_distribution(10 * z1), make_distribution(10 * z2))
    assert r1.epsilon == pytest.approx(0.1 * cost_matrix(make_distribution(z1), make_distribution(z2)).mean())
    assert r2.cost == pytest.approx(100 * r1.cost, rel=1e-5)
