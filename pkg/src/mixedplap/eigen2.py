"""Second eigenvalue as a mountain-pass level between -phi1 and +phi1.

A string of K nodes on the unit L^p sphere joins -phi1 to +phi1.  Each sweep
moves every interior node one backtracked step downhill with the component
along the path removed, then redistributes the nodes at equal L^2 arc
length.  A redistribution that would raise the path maximum is discarded,
so the recorded maximum never increases.  The top node is finally refined
by the same bordered Newton solve used for the first eigenpair.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .eigen1 import (EigenResult, SolverParams, _mask_of, descend, hessian_preconditioner,
                     newton_polish, require_converged, solve_lambda1)
from .errors import (CollapsedPath, DegenerateProbe, InvalidSpec, NotSignChanging,
                     NotTwoComponent, ZeroField)
from .grid import Field, components, dump_field_csv, split_signs
from .rng import SplitMix64

PRECOND_REFRESH = 5
STAGNATION_WINDOW = 50


@dataclass
class PathState:
    """Nodes of a discrete path on the unit sphere, stored as mask vectors."""

    grid: object
    mask: np.ndarray
    vectors: np.ndarray  # shape (K, cells)
    ts: np.ndarray = None

    @property
    def K(self):
        return self.vectors.shape[0]

    @property
    def nodes(self):
        return [Field.from_vector(self.grid, self.mask, v) for v in self.vectors]

    def node(self, i):
        return Field.from_vector(self.grid, self.mask, self.vectors[i])

    def rayleigh(self, ctx):
        op = ctx.op(self.mask)
        return np.array([op.rayleigh(v) for v in self.vectors])

    def argmax(self, ctx):
        """Index of the highest node; lowest index wins ties within 1e-14."""
        r = self.rayleigh(ctx)
        top = r.max()
        return int(np.flatnonzero(r >= top - 1e-14 * abs(top))[0]), r


def initial_path(phi1, probe, K, p):
    """Samples of ``t -> (t phi1 + (1-|t|) probe) / norm`` at K uniform t in [-1, 1]."""
    if K < 9 or K % 2 == 0:
        raise InvalidSpec("K must be odd and >= 9")
    if probe.grid != phi1.grid or not np.array_equal(probe.mask, phi1.mask):
        raise InvalidSpec("probe and phi1 must share grid and mask")
    vol = phi1.grid.cell_volume
    a = phi1.vector()
    b = probe.vector()

    def nrm(v):
        return float(np.sum(np.abs(v) ** p) * vol) ** (1.0 / p)

    na = nrm(a)
    if abs(na - 1.0) > 1e-12:
        a = a / na
    nb = nrm(b)
    if nb == 0.0:
        raise DegenerateProbe("probe is the zero field")
    bn = b / nb
    if min(nrm(bn - a), nrm(bn + a)) <= 1e-3:
        raise DegenerateProbe("probe is (numerically) a multiple of phi1")
    ts = np.linspace(-1.0, 1.0, K)
    out = np.empty((K, a.size))
    for k, t in enumerate(ts):
        if k == 0:
            out[k] = -a
        elif k == K - 1:
            out[k] = a
        else:
            v = t * a + (1.0 - abs(t)) * b
            n = nrm(v)
            if n <= 1e-12:
                raise DegenerateProbe(f"path passes through zero at t={t:g}")
            out[k] = v / n
    return PathState(phi1.grid, phi1.mask, out, ts)


def _reparametrize(op, nodes):
    """Equal L^2 arc-length redistribution; endpoints are left untouched."""
    K = nodes.shape[0]
    seg = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    if np.any(seg < 1e-12):
        raise CollapsedPath("adjacent path nodes coincide")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, s[-1], K)
    out = nodes.copy()
    for k in range(1, K - 1):
        j = int(np.clip(np.searchsorted(s, target[k], side="right") - 1, 0, K - 2))
        a = (target[k] - s[j]) / seg[j]
        out[k] = op.normalize((1.0 - a) * nodes[j] + a * nodes[j + 1])
    return out


def string_method(ctx, path, params, *, snapshot=None):
    """Relax ``path`` in place toward a minimax path.

    Returns ``(path, values, sweeps, converged, history)`` where ``history``
    holds the path maximum after every sweep.
    """
    op = ctx.op(path.mask)
    nodes = path.vectors.copy()
    K = nodes.shape[0]
    R = np.array([op.rayleigh(v) for v in nodes])
    taus = np.full(K, params.step0)
    precs = [None] * K
    history = [float(R.max())]
    converged = False
    sweep = 0
    shared = op.p == 2.0  # the p = 2 preconditioner does not depend on the node
    for sweep in range(1, params.max_sweeps + 1):
        refresh = (sweep - 1) % PRECOND_REFRESH == 0
        for i in range(1, K - 1):
            r, g = op.rayleigh_and_grad(nodes[i])
            if shared:
                if precs[0] is None:
                    precs[0] = hessian_preconditioner(op, nodes[i], float(R[0]), params.precond_shift)
                P = precs[0]
            else:
                if refresh or precs[i] is None:
                    precs[i] = hessian_preconditioner(op, nodes[i], r, params.precond_shift)
                P = precs[i]
            tan = nodes[i + 1] - nodes[i - 1]
            tn = np.linalg.norm(tan)
            if tn < 1e-12:
                raise CollapsedPath("neighbouring nodes coincide")
            tan /= tn
            d = -P.solve(g)
            d -= (d @ tan) * tan
            slope = float(g @ d)
            if not slope < 0:
                continue
            t = taus[i]
            while t > 1e-14:
                xn = op.normalize(nodes[i] + t * d)
                rn = op.rayleigh(xn)
                if rn <= r + params.armijo * t * slope:
                    nodes[i], R[i] = xn, rn
                    taus[i] = min(2.0 * t, params.step0)
                    break
                t *= params.shrink
        top = float(R.max())
        rep = _reparametrize(op, nodes)
        Rrep = np.array([op.rayleigh(v) for v in rep])
        if Rrep.max() <= top:
            nodes, R = rep, Rrep
        history.append(float(R.max()))
        if snapshot is not None:
            snapshot(sweep, nodes, R)
        if sweep > STAGNATION_WINDOW:
            old = history[-1 - STAGNATION_WINDOW]
            if abs(old - history[-1]) <= params.string_tol * abs(history[-1]):
                converged = True
                break
    out = PathState(path.grid, path.mask, nodes, path.ts)
    return out, R, sweep, converged, history


def _sign_changing(x, scale):
    return x.max() > 1e-8 * scale and x.min() < -1e-8 * scale


def minimax_lambda2(ctx, params=None, path0=None, *, phi1=None, lam1=None, snapshot=None):
    """lambda2 by the string method followed by a Newton refinement.

    ``path0`` defaults to :func:`initial_path` with a seeded random probe;
    ``phi1`` (and optionally ``lam1``) must be given when ``path0`` is not.
    The returned result carries the raw path maximum in ``info``.
    """
    params = params or SolverParams()
    p = ctx.p
    if path0 is None:
        if phi1 is None:
            raise InvalidSpec("need phi1 or an initial path")
        rng = SplitMix64(params.seed).spawn(2)
        probe = Field.from_vector(phi1.grid, phi1.mask, rng.normal(int(phi1.mask.sum())))
        path0 = initial_path(phi1, probe, params.nodes, p)
    op = ctx.op(path0.mask)
    if lam1 is None:
        lam1 = op.rayleigh(path0.vectors[-1])
    path, R, sweeps, converged, history = string_method(ctx, path0, params, snapshot=snapshot)
    top = float(R.max())
    imax = int(np.flatnonzero(R >= top - 1e-14 * abs(top))[0])
    x = path.vectors[imax]
    lam, res = top, op.residual(x, top)
    polished = False
    if params.polish and p >= 2.0:
        order = [imax] + [j for j in (imax - 1, imax + 1) if 0 < j < path.K - 1]
        best = None
        for j in order:
            xp, lp, rp, _ = newton_polish(op, path.vectors[j])
            ok = (rp < 1e-8 and lp > lam1 * (1 + 1e-8)
                  and _sign_changing(xp, np.abs(xp).max()))
            if ok and (best is None or rp < best[2]):
                best = (xp, lp, rp)
            if ok:
                break
        if best is not None:
            x, lam, res = best
            polished = True
    j = int(np.argmax(np.abs(x)))
    if x[j] < 0:
        x = -x
    u = Field.from_vector(ctx.grid, path.mask, x)
    info = {"path_max": top, "argmax": imax, "sweeps": sweeps, "history": history,
            "path": path, "polished": polished, "lambda1": lam1}
    return EigenResult(float(lam), u, float(res), sweeps, converged, info)


def solve_lambda2(ctx, domain, params=None, *, first=None):
    """First eigenpair then the minimax second eigenpair on a mask."""
    params = params or SolverParams()
    mask = _mask_of(ctx, domain)
    if first is None:
        first = require_converged(solve_lambda1(ctx, mask, params))
    res = minimax_lambda2(ctx, params, phi1=first.eigenfunction, lam1=first.lam)
    res.info["first"] = first
    return res


def dump_path(path, directory, ctx, sweep):
    """Write every node as a field CSV plus ``manifest.json``."""
    os.makedirs(directory, exist_ok=True)
    i, values = path.argmax(ctx)
    for k, f in enumerate(path.nodes):
        dump_field_csv(f, os.path.join(directory, f"node_{k:03d}.csv"))
    manifest = {"sweep": int(sweep), "max_rayleigh": float(values.max()), "argmax_index": i}
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True)
    return manifest


# -- explicit paths used in the mountain-pass argument ----------------------------

@dataclass
class PathFragment:
    name: str
    ts: np.ndarray
    vectors: np.ndarray
    grid: object
    mask: np.ndarray

    def rayleigh(self, ctx):
        op = ctx.op(self.mask)
        return np.array([op.rayleigh(v) for v in self.vectors])

    @property
    def nodes(self):
        return [Field.from_vector(self.grid, self.mask, v) for v in self.vectors]


def paper_paths(u, p, samples=41):
    """The three path pieces through ``u^+`` and ``u^-`` sampled at ``samples`` t in [0, 1].

    gamma1: u^+ - (1-t) u^-, gamma2: ((1-t)(u^+)^p + t (u^-)^p)^(1/p),
    gamma3: (1-t) u^+ - u^-; every sample is normalised in L^p.
    """
    plus, minus, _, _ = split_signs(u)
    a, b = plus.vector(), minus.vector()
    if not a.any() or not b.any():
        raise NotSignChanging("u must take both signs")
    vol = u.grid.cell_volume
    ts = np.linspace(0.0, 1.0, samples)

    def norm(v):
        n = float(np.sum(np.abs(v) ** p) * vol) ** (1.0 / p)
        if n == 0.0:
            raise ZeroField("path sample vanished")
        return v / n

    g1 = np.array([norm(a - (1 - t) * b) for t in ts])
    g2 = np.array([norm(((1 - t) * a ** p + t * b ** p) ** (1.0 / p)) for t in ts])
    g3 = np.array([norm((1 - t) * a - b) for t in ts])
    return tuple(PathFragment(name, ts, v, u.grid, u.mask)
                 for name, v in (("gamma1", g1), ("gamma2", g2), ("gamma3", g3)))


# -- nodal domains -------------------------------------------------------------------

@dataclass
class NodalReport:
    lam: float
    lambda1_plus: float
    lambda1_minus: float
    margins: tuple
    info: dict = field(default_factory=dict)

    @property
    def passed(self):
        return min(self.margins) > 0

    def to_json(self):
        return {"lambda": self.lam, "lambda1_plus": self.lambda1_plus,
                "lambda1_minus": self.lambda1_minus, "margins": list(self.margins)}


def nodal_analysis(ctx, params, u, lam, *, max_residual=1e-6):
    """First eigenvalues of the positivity and negativity sets of ``u``."""
    params = params or SolverParams()
    op = ctx.check_field(u)
    res = op.residual(u.vector(), lam)
    if res > max_residual:
        raise InvalidSpec(f"eigenpair residual {res:.2e} exceeds {max_residual:g}")
    _, _, pos, neg = split_signs(u)
    if not pos.any() or not neg.any():
        raise NotSignChanging("u does not change sign")
    lp = require_converged(solve_lambda1(ctx, pos, params)).lam
    lm = require_converged(solve_lambda1(ctx, neg, params)).lam
    return NodalReport(float(lam), lp, lm, (lam - lp, lam - lm),
                       {"cells_plus": int(pos.sum()), "cells_minus": int(neg.sum()),
                        "residual": res})


def reflection(mask, axis):
    """Index map of the reflection of the padded box along ``axis`` (mask coordinates).

    ``x[perm]`` is the reflected vector.  The mask must be mirror symmetric.
    """
    mask = np.asarray(mask, bool)
    if not np.array_equal(mask, np.flip(mask, axis=axis)):
        raise InvalidSpec(f"mask is not symmetric along axis {axis}")
    flat = np.full(mask.shape, -1)
    flat[mask] = np.arange(int(mask.sum()))
    return np.flip(flat, axis=axis)[mask]


def odd_eigenpair(ctx, domain, axis, params=None, *, start=None):
    """Lowest eigenpair among fields odd under the reflection along ``axis``.

    The energy is invariant under the reflection, so a critical point of the
    Rayleigh quotient restricted to odd fields is an eigenpair of the full
    problem.  Its nodal set is the mirror line, which lies on cell faces when
    the mirror line does, so the two nodal domains are exact mirror halves.
    """
    params = params or SolverParams()
    mask = _mask_of(ctx, domain)
    perm = reflection(mask, axis)
    op = ctx.op(mask)

    def odd(v):
        return 0.5 * (v - v[perm])

    if start is None:
        x0 = SplitMix64(params.seed).spawn(3).normal(op.size)
    else:
        x0 = start.vector() if isinstance(start, Field) else np.asarray(start, float)
    x0 = odd(x0)
    if not np.any(x0):
        raise DegenerateProbe("start has no odd part")
    x, lam, iters, converged = descend(op, op.normalize(x0), params, project=odd)
    res = op.residual(x, lam)
    polished = False
    if params.polish and op.p >= 2.0:
        xp, lp, rp, _ = newton_polish(op, x, project=odd)
        if rp < res and abs(lp - lam) <= 1e-6 * lam:
            x, lam, res, polished = xp, lp, rp, True
    j = int(np.argmax(np.abs(x)))
    if x[j] < 0:
        x = -x
    u = Field.from_vector(ctx.grid, mask, x)
    return EigenResult(float(lam), u, float(res), iters, converged,
                       {"axis": axis, "polished": polished})


# -- two-ball test set -------------------------------------------------------------------

def p_circle(theta_samples, p):
    """``theta_samples`` uniform angles pushed radially onto |a|^p + |b|^p = 1."""
    ang = 2.0 * np.pi * np.arange(theta_samples) / theta_samples
    c, s = np.cos(ang), np.sin(ang)
    r = (np.abs(c) ** p + np.abs(s) ** p) ** (1.0 / p)
    return c / r, s / r


def two_ball_upper_bound(ctx, domain, params=None, theta_samples=720):
    """Maximum Rayleigh value over the circle spanned by the component eigenfunctions.

    With ``phi_s`` and ``phi_t`` the first eigenfunctions of the two
    components, the test set is
    ``f(a, b) = |a|^((2-p)/p) a phi_s - |b|^((2-p)/p) b phi_t`` (normalised)
    over the unit p-circle.  Returns ``(bound, info)``.
    """
    params = params or SolverParams()
    mask = _mask_of(ctx, domain)
    labels, count = components(mask)
    if count != 2:
        raise NotTwoComponent(f"domain has {count} components")
    p = ctx.p
    op = ctx.op(mask)
    phis, lams = [], []
    for lab in (1, 2):
        sub = labels == lab
        r = require_converged(solve_lambda1(ctx, sub, params))
        phis.append(r.eigenfunction.values[mask])
        lams.append(r.lam)
    a, b = p_circle(theta_samples, p)
    ea = np.abs(a) ** ((2.0 - p) / p) * a
    eb = np.abs(b) ** ((2.0 - p) / p) * b
    vals = np.array([op.rayleigh(x * phis[0] - y * phis[1]) for x, y in zip(ea, eb)])
    k = int(np.argmax(vals))
    return float(vals[k]), {"component_lambda1": lams, "theta_index": k,
                            "values": vals}
