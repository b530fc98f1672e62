import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixedplap import DomainSpec, EnergyContext, Field, Kernel, build_domain
from mixedplap.errors import ConstraintViolated, NegativeInput, NonPositiveU
from mixedplap.lemmas import (calibrate_cp, cp_inequalities, cp_required, g_inequality,
                              picone_check, run_sweeps, sigma_convexity)
from mixedplap.rng import SplitMix64


def test_g_direct_evaluation():
    gt, g1, holds = g_inequality(1.0, -1.0, 2.0, 0.0)
    assert float(gt) == 1.0 and float(g1) == 2.0 and bool(holds)
    ts = np.linspace(-2, 2, 9)
    gt, _, _ = g_inequality(1.0, -1.0, 2.0, ts)
    # g(t) = 1 + 2t - t^2 on this case after |t|^2 = t^2
    assert np.allclose(gt, 1 + 2 * ts - ts ** 2 + 0 * ts)


def test_g_equality_at_one_and_constraint():
    gt, g1, _ = g_inequality(0.7, -2.3, 3.0, 1.0)
    assert abs(float(gt - g1)) <= 1e-14 * abs(float(g1))
    with pytest.raises(ConstraintViolated):
        g_inequality(1.0, 1.0, 2.0, 0.5)


@given(st.floats(-50, 50), st.floats(0, 50), st.floats(-3, 3), st.sampled_from([2.0, 2.5, 3.0, 4.0]))
@settings(max_examples=200, deadline=None)
def test_g_property(u, vmag, t, p):
    v = -math.copysign(vmag, u) if u != 0 else vmag
    assert bool(g_inequality(u, v, p, t)[2])


def test_cp_examples():
    assert calibrate_cp(2.0) <= 2.0 * 2 ** (1 / 16)
    c3 = calibrate_cp(3.0)
    assert cp_required(1.0, -1.0, 3.0) == pytest.approx(6 / math.sqrt(2))
    assert c3 >= 6 / math.sqrt(2)
    out = cp_inequalities(1.0, -1.0, 4.0, part="ii")
    assert float(out["lhs_ii"]) == 8.0 and float(out["rhs_ii"]) == 4.0 and bool(out["holds_ii"])
    out = cp_inequalities(2.5, 0.0, 3.0, part="i")
    assert float(out["lhs_i"]) == float(out["rhs_i"])
    with pytest.raises(ConstraintViolated):
        cp_inequalities(1.0, 1.0, 3.0, part="ii")
    with pytest.raises(ConstraintViolated):
        calibrate_cp(1.5)


def test_cp_calibration_monotone_in_samples():
    vals = [calibrate_cp(3.0, samples=s) for s in (10, 1000, 100000)]
    assert vals == sorted(vals)


def _ctx(p, n=20):
    kern = Kernel.make("tent", 0.2, 1)
    grid, mask = build_domain(DomainSpec.interval(0, 1), n, kern.radius)
    return EnergyContext(grid, kern, p), grid, mask


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_sigma_endpoints_and_random(p):
    ctx, grid, mask = _ctx(p)
    rng = SplitMix64(4)
    u = Field.from_vector(grid, mask, rng.random(20))
    v = Field.from_vector(grid, mask, rng.random(20))
    for t in (0.0, 1.0):
        lhs, rhs, ok = sigma_convexity(ctx, u, v, t)
        assert ok and abs(lhs - rhs) <= 1e-14 * rhs
    for t in np.linspace(0, 1, 11):
        assert sigma_convexity(ctx, u, v, t)[2]
    with pytest.raises(NegativeInput):
        sigma_convexity(ctx, u.scaled(-1), v, 0.5)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_picone(p):
    ctx, grid, mask = _ctx(p)
    rng = SplitMix64(5)
    u = Field.from_vector(grid, mask, rng.random(20) + 0.1)
    assert picone_check(ctx, u, u)["passed"]
    assert picone_check(ctx, u, u.scaled(2.0))["passed"]
    v = Field.from_vector(grid, mask, rng.random(20))
    rep = picone_check(ctx, u, v)
    assert rep["passed"] and rep["pairs"] > 0 and rep["faces"] == 19
    with pytest.raises(NonPositiveU):
        picone_check(ctx, u.scaled(0.0), v)


@pytest.mark.parametrize("lemma", ["g", "sigma", "cp", "picone"])
def test_sweeps_small(lemma):
    (res,) = run_sweeps(lemma, 2.5, 2000, seed=3)
    assert res.passed and res.samples == 2000
    assert res.row()[-1] == "pass"
    assert res.equality_defect <= 1e-14
