import math

import numpy as np
import pytest

from mixedplap import DomainSpec, EnergyContext, Kernel, SolverParams, build_domain, eigen1
from mixedplap.eigen1 import (check_domain_monotonicity, check_simplicity, dense_oracle_p2,
                              descend, nested_masks, require_converged, solve_lambda1)
from mixedplap.errors import InvalidSpec, NotConverged, NotNested, TooLarge

PARAMS = SolverParams(tol=1e-10)


def _interval(p, n=100, weight=1.0, r=0.2):
    kern = Kernel.make("tent", r, 1, weight)
    grid, mask = build_domain(DomainSpec.interval(0, 1), n, kern.radius)
    return EnergyContext(grid, kern, p), mask


@pytest.mark.parametrize("n", [50, 100])
def test_p2_matches_dense_oracle(n):
    ctx, mask = _interval(2.0, n)
    res = solve_lambda1(ctx, mask, PARAMS)
    l1, _, f1, _ = dense_oracle_p2(ctx, mask)
    assert res.converged
    assert abs(res.lam - l1) / l1 < 1e-6
    assert np.max(np.abs(res.eigenfunction.vector() - f1.vector())) < 1e-4


def test_local_only_interval_close_to_pi_squared():
    grid, mask = build_domain(DomainSpec.interval(0, 1), 100)
    res = solve_lambda1(EnergyContext(grid, None, 2.0), mask, PARAMS)
    assert abs(res.lam - math.pi ** 2) / math.pi ** 2 < 1e-3


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_eigenfunction_positive_and_residual_small(p):
    ctx, mask = _interval(p)
    res = require_converged(solve_lambda1(ctx, mask, PARAMS))
    x = res.eigenfunction.vector()
    assert x.min() * x.max() >= -1e-8
    assert x.sum() > 0
    if p >= 2:
        assert res.residual < 1e-8
    assert res.to_json()["lambda"] == res.lam


def test_descent_is_monotone():
    ctx, mask = _interval(3.0, 60)
    op = ctx.op(mask)
    hist = []
    rng = np.random.default_rng(0)
    descend(op, op.normalize(rng.random(op.size) + 0.1), PARAMS, history=hist)
    assert all(b <= a + 1e-14 * abs(a) for a, b in zip(hist, hist[1:]))


def test_lambda1_decreases_with_kernel_weight():
    lams = [solve_lambda1(*_interval(2.5, 60, w), PARAMS).lam for w in (1.0, 0.5, 0.0)]
    assert lams[0] > lams[1] > lams[2]


def test_not_converged_is_reported():
    ctx, mask = _interval(3.0, 60)
    res = solve_lambda1(ctx, mask, SolverParams(max_iter=1, polish=False))
    assert not res.converged
    with pytest.raises(NotConverged):
        require_converged(res)


def test_simplicity_connected_and_disconnected():
    ctx, mask = _interval(2.5, 60)
    rep = check_simplicity(ctx, mask, PARAMS, trials=3)
    assert rep.passed and rep.connected and rep.sign_constant
    kern = Kernel.make("tent", 0.1, 1)
    grid, m2 = build_domain(DomainSpec.intervals([[0, 0.4], [0.6, 1.0]]), 50, kern.radius)
    rep2 = check_simplicity(EnergyContext(grid, kern, 2.0), m2, PARAMS, trials=2)
    assert not rep2.connected and rep2.flags


def test_domain_monotonicity():
    kern = Kernel.make("tent", 0.2, 1)
    rep = check_domain_monotonicity(DomainSpec.interval(0.2, 0.8), DomainSpec.interval(0, 1),
                                    100, kern, 3.0, PARAMS)
    assert rep.passed and rep.lambda_a > rep.lambda_b
    with pytest.raises(NotNested):
        nested_masks(DomainSpec.interval(-0.5, 0.5), DomainSpec.interval(0, 1), 20)


def test_oracle_limits():
    kern = Kernel.make("tent", 0.2, 2)
    grid, mask = build_domain(DomainSpec.box([0, 0], [1, 1]), 70, kern.radius)
    with pytest.raises(TooLarge):
        dense_oracle_p2(EnergyContext(grid, kern, 2.0), mask)
    with pytest.raises(InvalidSpec):
        dense_oracle_p2(EnergyContext(grid, kern, 3.0), mask)


@pytest.mark.parametrize("kw", [{"tol": 0}, {"shrink": 1.0}, {"nodes": 10}, {"max_iter": 0}])
def test_params_validation(kw):
    with pytest.raises(InvalidSpec):
        SolverParams(**kw)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_matrix_free_newton_matches_direct(monkeypatch, p):
    kern = Kernel.make("tent", 0.2, 2)
    grid, mask = build_domain(DomainSpec.ball([0, 0], 1), 24, kern.radius)
    ctx = EnergyContext(grid, kern, p)
    direct = solve_lambda1(ctx, mask, PARAMS)
    monkeypatch.setattr(eigen1, "ITERATIVE_NNZ", 0)
    iterative = solve_lambda1(ctx, mask, PARAMS)
    assert direct.info["polished"] and iterative.info["polished"]
    assert iterative.residual < 1e-11
    assert abs(iterative.lam - direct.lam) < 1e-11 * direct.lam
