"""Elementary inequalities behind the eigenvalue arguments, as vectorised oracles.

Each oracle returns the two sides it compares plus a boolean ``holds``
computed with a relative slack of 1e-12, so randomised sweeps can count
violations directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .energy import _abs_pow, _psi, nonlocal_energy
from .errors import ConstraintViolated, NegativeInput, NonPositiveU
from .grid import Field
from .rng import SplitMix64

SLACK = 1e-12


def _le(lhs, rhs, scale):
    return lhs <= rhs + SLACK * (1.0 + scale)


# -- the auxiliary function g -------------------------------------------------------

def g_inequality(U, V, p, t):
    """``g(t) = |U - tV|^p + |U-V|^(p-2) (U-V) V |t|^p`` against ``g(1)``."""
    U, V, t = np.broadcast_arrays(*(np.asarray(a, float) for a in (U, V, t)))
    if np.any(U * V > 0):
        raise ConstraintViolated("need U * V <= 0")
    w = _psi(U - V, p)
    first, second = _abs_pow(U - t * V, p), w * V * _abs_pow(t, p)
    gt = first + second
    g1 = w * U
    # slack relative to the size of the summed terms, not only of g(1)
    holds = _le(gt, g1, np.abs(g1) + first + np.abs(second))
    return gt, g1, holds


# -- convexity of sigma_t ---------------------------------------------------------------

def sigma_field(u, v, p, t):
    vals = ((1.0 - t) * v.values ** p + t * u.values ** p) ** (1.0 / p)
    return Field(u.grid, vals, u.mask)


def sigma_convexity(ctx, u, v, t):
    """Nonlocal energy of ``sigma_t`` against the convex combination of the endpoints."""
    if np.any(u.values < 0) or np.any(v.values < 0):
        raise NegativeInput("sigma_t needs nonnegative fields")
    if not 0.0 <= t <= 1.0:
        raise ConstraintViolated("t must lie in [0, 1]")
    mask = u.mask | v.mask
    u, v = u.with_mask(mask), v.with_mask(mask)
    if t == 0.0:
        s = v
    elif t == 1.0:
        s = u
    else:
        s = sigma_field(u, v, ctx.p, t)
    ev, eu = nonlocal_energy(ctx, v), nonlocal_energy(ctx, u)
    lhs = nonlocal_energy(ctx, s)
    rhs = (1.0 - t) * ev + t * eu
    return lhs, rhs, bool(_le(lhs, rhs, abs(rhs)))


def sigma_pairwise(a_u, a_v, b_u, b_v, p, t):
    """Pointwise version: ``|s(x)-s(y)|^p <= (1-t)|v(x)-v(y)|^p + t|u(x)-u(y)|^p``."""
    sx = ((1 - t) * a_v ** p + t * a_u ** p) ** (1 / p)
    sy = ((1 - t) * b_v ** p + t * b_u ** p) ** (1 / p)
    lhs = np.abs(sx - sy) ** p
    rhs = (1 - t) * np.abs(a_v - b_v) ** p + t * np.abs(a_u - b_u) ** p
    return lhs, rhs, _le(lhs, rhs, rhs)


# -- the c_p inequalities ------------------------------------------------------------------

def cp_required(a, b, p):
    """Smallest constant making part (i) hold at ``(a, b)``; 0 where ``ab = 0``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    num = np.abs(a - b) ** p - np.abs(a) ** p - np.abs(b) ** p
    den = (a * a + b * b) ** ((p - 2.0) / 2.0) * np.abs(a * b)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


@lru_cache(maxsize=None)
def _calibrated(p, samples, seed):
    rng = SplitMix64(seed)
    # ratios b/a spread over many scales and both signs
    mag = np.exp(rng.uniform(-8.0, 8.0, samples))
    sign = np.where(rng.random(samples) < 0.5, -1.0, 1.0)
    need = cp_required(np.ones(samples), sign * mag, p)
    worst = max(float(need.max()), float(cp_required(1.0, -1.0, p)))
    if worst <= 0:
        return 2.0 ** -4
    k = math.ceil(16.0 * math.log2(worst) - 1e-9)
    # grid points are 2**(k/16); relative slack matches the oracle's own
    while 2.0 ** (k / 16.0) < worst * (1.0 - SLACK):
        k += 1
    return 2.0 ** (k / 16.0)


def calibrate_cp(p, samples=100000, seed=0):
    """Smallest ``2**(k/16)`` that makes part (i) hold on the sampled ratios and on ``a = -b``."""
    if p < 2:
        raise ConstraintViolated("calibration is defined for p >= 2")
    return _calibrated(float(p), int(samples), int(seed))


def cp_inequalities(a, b, p, part="both", c=None):
    """Evaluate part (i) and/or part (ii) on arrays ``a``, ``b``.

    Part (ii) needs ``ab <= 0``.  Returns a dict with ``lhs_*``, ``rhs_*``
    and ``holds_*`` arrays for the requested parts.
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = {}
    if part in ("i", "both"):
        if c is None:
            c = calibrate_cp(max(p, 2.0)) if p >= 2 else cp_required_max(p)
        lhs = np.abs(a - b) ** p
        rhs = np.abs(a) ** p + np.abs(b) ** p + c * _abs_pow(np.sqrt(a * a + b * b), p - 2.0) * np.abs(a * b)
        out.update(lhs_i=lhs, rhs_i=rhs, holds_i=_le(lhs, rhs, rhs), c_p=c)
    if part in ("ii", "both"):
        if np.any(a * b > 0):
            raise ConstraintViolated("part (ii) needs ab <= 0")
        lhs = _psi(a - b, p) * a
        if p >= 2:
            rhs = _abs_pow(a, p) - (p - 1.0) * _abs_pow(a, p - 2.0) * b * a
            valid = np.ones(a.shape, bool)
        else:
            # the weight |a - b|^(p-2) is undefined at a = b (= 0 here)
            valid = a != b
            rhs = _abs_pow(a, p) - (p - 1.0) * _abs_pow(a - b, p - 2.0) * b * a
        holds = np.where(valid, lhs + SLACK * (1.0 + np.abs(lhs) + np.abs(rhs)) >= rhs, True)
        out.update(lhs_ii=lhs, rhs_ii=rhs, holds_ii=holds, valid_ii=valid)
    return out


def cp_required_max(p, samples=20000):
    """Sampled supremum of the part (i) constant for 1 < p < 2 (no grid)."""
    r = np.exp(np.linspace(-12, 12, samples))
    return float(max(cp_required(1.0, r, p).max(), cp_required(1.0, -r, p).max()))


# -- discrete Picone ------------------------------------------------------------------

def picone_pairs(ui, uj, vi, vj, p):
    """``psi(u_i-u_j) (v_i^p/u_i^(p-1) - v_j^p/u_j^(p-1))`` against ``|v_i - v_j|^p``."""
    lhs = _psi(ui - uj, p) * (vi ** p / ui ** (p - 1.0) - vj ** p / uj ** (p - 1.0))
    rhs = np.abs(vi - vj) ** p
    return lhs, rhs, _le(lhs, rhs, rhs + np.abs(lhs))


def picone_check(ctx, u, v):
    """Discrete Picone inequality on kernel pairs and on axis faces inside the mask."""
    mask = u.mask
    if np.any(u.values[mask] <= 0):
        raise NonPositiveU("u must be positive on its mask")
    if np.any(v.values[mask] < 0):
        raise NegativeInput("v must be nonnegative")
    p = ctx.p
    uu, vv = u.values.ravel(), v.values.ravel()
    i, j, _ = ctx.neighbor_table(mask)
    keep = mask.ravel()[j]
    i, j = i[keep], j[keep]
    res = {}
    lhs, rhs, ok = picone_pairs(uu[i], uu[j], vv[i], vv[j], p)
    res["pairs"] = int(i.size)
    res["pair_violations"] = int(np.count_nonzero(~ok))
    faces = 0
    bad = 0
    for a in range(mask.ndim):
        lo = [slice(None)] * mask.ndim
        hi = [slice(None)] * mask.ndim
        lo[a], hi[a] = slice(0, -1), slice(1, None)
        both = mask[tuple(lo)] & mask[tuple(hi)]
        ui, uj = u.values[tuple(lo)][both], u.values[tuple(hi)][both]
        vi, vj = v.values[tuple(lo)][both], v.values[tuple(hi)][both]
        _, _, okf = picone_pairs(ui, uj, vi, vj, p)
        faces += int(both.sum())
        bad += int(np.count_nonzero(~okf))
    res["faces"] = faces
    res["face_violations"] = bad
    res["passed"] = res["pair_violations"] == 0 and bad == 0
    return res


# -- randomised sweeps ------------------------------------------------------------------

def _spread(rng, n, lo=-3.0, hi=3.0):
    """Signed samples over several orders of magnitude."""
    return rng.normal(n) * np.exp(rng.uniform(lo, hi, n))


def _small_context(p, cells=16, dim=1):
    from .energy import EnergyContext
    from .grid import DomainSpec, build_domain
    from .kernel import Kernel

    kern = Kernel.make("tent", 0.25, dim)
    spec = DomainSpec.interval(0.0, 1.0) if dim == 1 else DomainSpec.box([0, 0], [1, 1])
    grid, mask = build_domain(spec, cells, kern.radius)
    return EnergyContext(grid, kern, p), mask


def nonlocal_energy_batch(op, X):
    """Nonlocal energies of the columns of ``X`` (mask coordinates)."""
    Dn, w, _ = op.pair_diff
    return 2.0 * (w @ _abs_pow(Dn @ X, op.p))


@dataclass
class SweepResult:
    lemma: str
    p: float
    samples: int
    violations: int
    equality_defect: float
    example: dict

    @property
    def passed(self):
        return self.violations == 0

    def row(self):
        return [self.lemma, repr(float(self.p)), str(self.samples), str(self.violations),
                repr(float(self.equality_defect)), "pass" if self.passed else "fail"]


def _minimal(bad, **cols):
    """The violating sample of smallest magnitude, as a plain dict."""
    if not bad.any():
        return {}
    idx = np.flatnonzero(bad)
    mag = np.max(np.abs(np.stack([np.asarray(c)[idx] for c in cols.values()])), axis=0)
    k = idx[int(np.argmin(mag))]
    return {name: float(np.asarray(c)[k]) for name, c in cols.items()}


def sweep_g(p, samples, seed=0):
    rng = SplitMix64(seed).spawn(1)
    U = _spread(rng, samples)
    V = -np.sign(U) * np.abs(_spread(rng, samples))
    V[::97] = 0.0
    U[::89] = 0.0
    V[::89] = np.abs(V[::89]) + 1.0
    t = 3.0 * rng.normal(samples)
    _, _, holds = g_inequality(U, V, p, t)
    one = np.ones(samples)
    gt, g1, _ = g_inequality(U, V, p, one)
    # g(1) is a sum of two terms that nearly cancel when |V| >> |U|
    scale = _abs_pow(U - V, p) + np.abs(_psi(U - V, p) * V) + np.abs(g1)
    eq = float(np.max(np.abs(gt - g1) / scale))
    return SweepResult("g", p, samples, int(np.count_nonzero(~holds)), eq,
                       _minimal(~holds, U=U, V=V, t=t))


def sweep_sigma(p, samples, seed=0, chunk=5000):
    rng = SplitMix64(seed).spawn(2)
    ctx, mask = _small_context(p)
    op = ctx.op(mask)
    bad = 0
    example = {}
    eq = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        U = np.abs(rng.normal(op.size * m)).reshape(op.size, m)
        V = np.abs(rng.normal(op.size * m)).reshape(op.size, m)
        # every fifth trial has a zero patch so supports differ
        V[: op.size // 3, ::5] = 0.0
        t = rng.random(m)
        S = ((1.0 - t) * V ** p + t * U ** p) ** (1.0 / p)
        eu, ev, es = (nonlocal_energy_batch(op, A) for A in (U, V, S))
        rhs = (1.0 - t) * ev + t * eu
        ok = _le(es, rhs, np.abs(rhs))
        if not ok.all() and not example:
            k = int(np.flatnonzero(~ok)[0])
            example = {"t": float(t[k]), "lhs": float(es[k]), "rhs": float(rhs[k])}
        bad += int(np.count_nonzero(~ok))
        done += m
    # endpoints reproduce the end fields
    u = Field.from_vector(ctx.grid, mask, np.abs(rng.normal(op.size)))
    v = Field.from_vector(ctx.grid, mask, np.abs(rng.normal(op.size)))
    for t in (0.0, 1.0):
        lhs, rhs, _ = sigma_convexity(ctx, u, v, t)
        eq = max(eq, abs(lhs - rhs) / (1.0 + abs(rhs)))
    return SweepResult("sigma", p, samples, bad, eq, example)


def sweep_cp(p, samples, seed=0):
    rng = SplitMix64(seed).spawn(3)
    a = _spread(rng, samples)
    b = _spread(rng, samples, -6.0, 6.0)
    b[::101] = -a[::101]
    res = cp_inequalities(a, b, p, part="i")
    bi = ~res["holds_i"]
    b2 = -np.sign(a) * np.abs(b)
    res2 = cp_inequalities(a, b2, p, part="ii")
    bii = ~res2["holds_ii"]
    z = cp_inequalities(a, np.zeros(samples), p, part="i")
    eq = float(np.max(np.abs(z["lhs_i"] - z["rhs_i"]) / (1.0 + np.abs(z["rhs_i"]))))
    example = _minimal(bi, a=a, b=b) or _minimal(bii, a=a, b=b2)
    return SweepResult("cp", p, samples, int(bi.sum() + bii.sum()), eq, example)


def sweep_picone(p, samples, seed=0):
    rng = SplitMix64(seed).spawn(4)
    ui = rng.uniform(1e-3, 1.0, samples) * np.exp(rng.uniform(-2, 2, samples))
    uj = rng.uniform(1e-3, 1.0, samples) * np.exp(rng.uniform(-2, 2, samples))
    vi = np.abs(_spread(rng, samples, -2, 2))
    vj = np.abs(_spread(rng, samples, -2, 2))
    vj[::53] = 0.0
    _, _, ok = picone_pairs(ui, uj, vi, vj, p)
    bad = int(np.count_nonzero(~ok))
    example = _minimal(~ok, ui=ui, uj=uj, vi=vi, vj=vj)
    # field-level run on a small grid, plus the v = c u equality case
    ctx, mask = _small_context(p)
    op = ctx.op(mask)
    u = Field.from_vector(ctx.grid, mask, rng.uniform(0.1, 1.0, op.size))
    v = Field.from_vector(ctx.grid, mask, np.abs(rng.normal(op.size)))
    rep = picone_check(ctx, u, v)
    bad += rep["pair_violations"] + rep["face_violations"]
    lhs, rhs, _ = picone_pairs(ui, uj, 2.5 * ui, 2.5 * uj, p)
    eq = float(np.max(np.abs(lhs - rhs) / (1.0 + np.abs(rhs))))
    return SweepResult("picone", p, samples, bad, eq, example)


SWEEPS = {"g": sweep_g, "sigma": sweep_sigma, "cp": sweep_cp, "picone": sweep_picone}


def run_sweeps(lemma, p, samples, seed=0):
    names = list(SWEEPS) if lemma == "all" else [lemma]
    return [SWEEPS[name](p, samples, seed) for name in names]
