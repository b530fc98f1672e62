"""Desk-scale shape experiments: Faber-Krahn, Hong-Krahn-Szego, drifting balls.

Every experiment returns ``(rows, checks)``.  Rows are :class:`ExperimentRow`
records (one CSV line each); checks are :class:`Check` records naming an
inequality and whether it held, which the command line turns into exit
codes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .eigen1 import SolverParams, require_converged, solve_lambda1
from .eigen2 import solve_lambda2, two_ball_upper_bound
from .energy import EnergyContext
from .errors import InvalidSpec, MeasureMismatch, OverlapError
from .grid import DomainSpec, build_domain, components, measure
from .kernel import Kernel

CSV_HEADER = ["experiment", "domain", "p", "kernel", "n", "lambda1", "lambda2",
              "oracle1", "oracle2", "margin", "seconds"]


@dataclass
class ExperimentRow:
    experiment: str
    domain: str
    p: float
    kernel: str
    n: int
    lambda1: float = None
    lambda2: float = None
    oracle1: float = None
    oracle2: float = None
    margin: float = None
    seconds: float = None
    extra: dict = field(default_factory=dict)

    def csv_cells(self, with_time=False):
        def num(v):
            return "" if v is None else repr(float(v))
        return [self.experiment, self.domain, repr(float(self.p)), self.kernel, str(self.n),
                num(self.lambda1), num(self.lambda2), num(self.oracle1), num(self.oracle2),
                num(self.margin), num(self.seconds) if with_time else ""]

    def to_json(self, with_time=False):
        d = asdict(self)
        if not with_time:
            d.pop("seconds")
        return d


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


def rows_to_csv(rows, with_time=False):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_cells(with_time))
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def rows_to_json(rows, checks, config=None, with_time=False):
    doc = {"rows": [r.to_json(with_time) for r in rows],
           "checks": [asdict(c) for c in checks]}
    if config is not None:
        doc["config"] = config
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


# -- helpers -------------------------------------------------------------------------

def describe_domain(spec):
    p = spec.params
    s = spec.shape

    def f(x):
        return format(float(x), ".6g")

    if s == "interval":
        return f"interval({f(p['a'])};{f(p['b'])})"
    if s == "intervals":
        return "intervals(" + ";".join(f"{f(a)}:{f(b)}" for a, b in p["intervals"]) + ")"
    if s == "box":
        return "box(" + ";".join(f"{f(a)}:{f(b)}" for a, b in zip(p["lower"], p["upper"])) + ")"
    if s == "ball":
        return f"ball(c={':'.join(f(c) for c in np.atleast_1d(p['center']))};R={f(p['radius'])})"
    if s == "balls":
        cs = "|".join(":".join(f(c) for c in np.atleast_1d(cc)) for cc in p["centers"])
        return f"balls(c={cs};R={f(p['radius'])})"
    if s == "annulus":
        return f"annulus(R={f(p['r_inner'])}:{f(p['r_outer'])})"
    return f"custom({int(np.sum(p['mask']))} cells)"


def describe_kernel(kernel):
    return "none" if kernel is None else kernel.describe()


def exact_measure(spec):
    """Lebesgue measure of the continuum domain (union pieces assumed disjoint)."""
    p = spec.params
    s = spec.shape
    if s == "interval":
        return float(p["b"] - p["a"])
    if s == "intervals":
        return float(sum(b - a for a, b in p["intervals"]))
    if s == "box":
        return float(np.prod(np.subtract(p["upper"], p["lower"])))
    dim = spec.dim
    unit = 2.0 if dim == 1 else math.pi
    if s == "ball":
        return unit * float(p["radius"]) ** dim
    if s == "balls":
        return len(p["centers"]) * unit * float(p["radius"]) ** dim
    if s == "annulus":
        return unit * (float(p["r_outer"]) ** dim - float(p["r_inner"]) ** dim)
    raise InvalidSpec("no closed-form measure for custom domains")


def ball_of_measure(c, dim, center=None):
    if dim == 1:
        mid = 0.0 if center is None else float(center)
        return DomainSpec.interval(mid - c / 2.0, mid + c / 2.0)
    r = math.sqrt(c / math.pi)
    return DomainSpec.ball([0.0, 0.0] if center is None else center, r)


def _box(spec):
    from .grid import _bounding_box
    return _bounding_box(spec)


def _radius(kernel):
    return 0.0 if kernel is None else kernel.radius


def _map(fn, tasks, workers):
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def _lambda1_task(task):
    spec, n, kernel, p, params, spacing = task
    t0 = time.perf_counter()
    grid, mask = build_domain(spec, n, _radius(kernel), spacing=spacing)
    ctx = EnergyContext(grid, kernel, p)
    res = require_converged(solve_lambda1(ctx, mask, params))
    return res.lam, measure(mask, grid.h), time.perf_counter() - t0


# -- Faber-Krahn ---------------------------------------------------------------------

def faber_krahn_sweep(shapes, resolution, kernel, p, params=None, *, target=None,
                      refine=True, workers=1, labels=None, common_spacing=None):
    """First eigenvalues of equal-measure shapes; the first shape is the ball.

    ``resolution`` counts cells across each shape's longest side, or, with
    ``common_spacing`` (the default in 1-D, where unions of intervals have
    long bounding boxes), across the ball and every shape reuses its
    spacing.  With
    ``refine`` every shape is also solved at twice the resolution and the
    margin over the ball must exceed the sum of both shapes'
    ``|lambda(n) - lambda(2n)|``.
    """
    params = params or SolverParams()
    if p < 2:
        raise InvalidSpec("Faber-Krahn sweep needs p >= 2")
    if kernel is not None and not kernel.is_decreasing:
        raise InvalidSpec("Faber-Krahn sweep needs a decreasing kernel")
    target = exact_measure(shapes[0]) if target is None else float(target)
    levels = [resolution, 2 * resolution] if refine else [resolution]
    if common_spacing is None:
        common_spacing = shapes[0].dim == 1
    extent = float(np.max(np.diff(np.array(_box(shapes[0])), axis=0)))

    def spacing(n):
        return extent / n if common_spacing else None

    tasks = [(s, n, kernel, p, params, spacing(n)) for s in shapes for n in levels]
    out = _map(_lambda1_task, tasks, workers)
    rows, checks = [], []
    lam = {}
    for (s, n, *_), (l1, meas, secs) in zip(tasks, out):
        if abs(meas - target) > 0.01 * target:
            raise MeasureMismatch(f"{describe_domain(s)} realised measure {meas:.6g} "
                                  f"differs from {target:.6g} by more than 1%")
        lam[(describe_domain(s), n)] = (l1, secs, meas)
    ball = describe_domain(shapes[0])
    for k, s in enumerate(shapes):
        d = describe_domain(s)
        l1, secs, meas = lam[(d, resolution)]
        err = abs(l1 - lam[(d, 2 * resolution)][0]) if refine else 0.0
        err_ball = abs(lam[(ball, resolution)][0] - lam[(ball, 2 * resolution)][0]) if refine else 0.0
        margin = l1 - lam[(ball, resolution)][0]
        row = ExperimentRow("faber-krahn", d if labels is None else labels[k], p,
                            describe_kernel(kernel), resolution, lambda1=l1,
                            margin=margin, seconds=secs,
                            extra={"measure": meas, "richardson": err,
                                   "lambda1_refined": lam[(d, 2 * resolution)][0] if refine else None})
        rows.append(row)
        if k > 0:
            bound = err + err_ball
            checks.append(Check(f"faber-krahn {d} n={resolution} p={p:g}",
                                margin > bound,
                                f"margin={margin:.6g} richardson={bound:.3g}"))
    return rows, checks


def faber_krahn_ratio_trend(rows_by_n):
    """``margin / richardson`` per resolution for each non-ball shape (dict n -> rows)."""
    trend = {}
    for n in sorted(rows_by_n):
        rows = rows_by_n[n]
        err_ball = rows[0].extra["richardson"]
        for r in rows[1:]:
            trend.setdefault(r.domain, []).append(r.margin / (r.extra["richardson"] + err_ball))
    return trend


# -- Hong-Krahn-Szego -----------------------------------------------------------------

def hks_check(spec, resolution, kernel, p, params=None, *, splits=(0.3, 0.4, 0.5, 0.6, 0.7),
              workers=1):
    """Second eigenvalue of ``spec`` against the first of a ball of half its measure.

    All domains share the spacing of ``spec``'s grid.  The unequal split
    sweep reports ``max(lambda1(B_1), lambda1(B_2))`` for balls holding the
    fractions ``rho`` and ``1 - rho`` of the measure.
    """
    params = params or SolverParams()
    t0 = time.perf_counter()
    grid, mask = build_domain(spec, resolution, _radius(kernel))
    ctx = EnergyContext(grid, kernel, p)
    r2 = solve_lambda2(ctx, mask, params)
    c = measure(mask, grid.h)
    dim = grid.dim
    _, count = components(mask)
    tasks = [(ball_of_measure(c / 2.0, dim), None, kernel, p, params, grid.h)]
    for rho in splits:
        tasks.append((ball_of_measure(rho * c, dim), None, kernel, p, params, grid.h))
        tasks.append((ball_of_measure((1 - rho) * c, dim), None, kernel, p, params, grid.h))
    out = _map(_lambda1_task, tasks, workers)
    half = out[0][0]
    margin = r2.lam - half
    secs = time.perf_counter() - t0
    sweep = []
    for k, rho in enumerate(splits):
        a, b = out[1 + 2 * k][0], out[2 + 2 * k][0]
        sweep.append((rho, max(a, b)))
    rows = [ExperimentRow("hks", describe_domain(spec), p, describe_kernel(kernel), resolution,
                          lambda1=r2.info["first"].lam, lambda2=r2.lam, oracle1=half,
                          margin=margin, seconds=secs,
                          extra={"components": count, "residual": r2.residual,
                                 "split_sweep": sweep})]
    for rho, val in sweep:
        rows.append(ExperimentRow("hks-split", f"split({rho:g})", p, describe_kernel(kernel),
                                  resolution, lambda1=val, oracle1=half, margin=val - half))
    checks = []
    tol = 10 * params.tol * r2.lam
    if count == 1:
        checks.append(Check(f"hks {describe_domain(spec)} p={p:g}", margin > tol,
                            f"lambda2={r2.lam:.10g} lambda1(half ball)={half:.10g}"))
    else:
        rows[0].extra["flag"] = "disconnected domain: equality is the expected discrete boundary case"
        checks.append(Check(f"hks {describe_domain(spec)} p={p:g} (boundary case)",
                            margin > -tol, f"margin={margin:.3g}"))
    vals = [v for _, v in sweep]
    best = int(np.argmin(vals))
    checks.append(Check(f"hks split minimum at equal halves p={p:g}",
                        abs(sweep[best][0] - 0.5) < 1e-12, f"argmin rho={sweep[best][0]:g}"))
    return rows, checks


# -- drifting balls ----------------------------------------------------------------------

def snap_separations(separations, h):
    """Round separations to multiples of 2h so both components sit alike on the lattice."""
    return [2.0 * h * round(s / (2.0 * h)) for s in separations]


def two_ball_spec(R, sep, dim):
    if dim == 1:
        return DomainSpec.intervals([[-sep / 2 - R, -sep / 2 + R], [sep / 2 - R, sep / 2 + R]])
    return DomainSpec.balls([[-sep / 2, 0.0], [sep / 2, 0.0]], R)


def drift_experiment(R, separations, cells_per_radius, kernel, p, params=None, *, dim=1,
                     theta_samples=720):
    """lambda2 of two radius-R balls as their centres separate.

    The spacing is ``h = R / cells_per_radius`` for every domain, and each
    separation is snapped to a multiple of 2h.
    """
    params = params or SolverParams()
    h = R / int(cells_per_radius)
    seps = snap_separations(separations, h)
    if any(b <= a for a, b in zip(seps, seps[1:])):
        raise InvalidSpec("separations must increase (after snapping to 2h)")
    if seps[0] <= 2 * R:
        raise OverlapError(f"separation {seps[0]:g} <= 2R: the balls intersect")
    single = ball_of_measure(2 * R if dim == 1 else math.pi * R * R, dim)
    g1, m1 = build_domain(single, None, _radius(kernel), spacing=h)
    ctx1 = EnergyContext(g1, kernel, p)
    lam_ball = require_converged(solve_lambda1(ctx1, m1, params)).lam
    rows, checks, lams = [], [], []
    r = _radius(kernel)
    for sep in seps:
        t0 = time.perf_counter()
        spec = two_ball_spec(R, sep, dim)
        grid, mask = build_domain(spec, None, r, spacing=h)
        ctx = EnergyContext(grid, kernel, p)
        res = solve_lambda2(ctx, mask, params)
        bound, info = two_ball_upper_bound(ctx, mask, params, theta_samples)
        lams.append(res.lam)
        rows.append(ExperimentRow("drift", describe_domain(spec), p, describe_kernel(kernel),
                                  int(cells_per_radius), lambda1=res.info["first"].lam,
                                  lambda2=res.lam, oracle1=lam_ball, oracle2=bound,
                                  margin=res.lam - lam_ball,
                                  seconds=time.perf_counter() - t0,
                                  extra={"separation": sep, "gap": sep - 2 * R,
                                         "residual": res.residual}))
        tol = 10 * params.tol * lam_ball
        checks.append(Check(f"drift bound >= minimax sep={sep:g}", bound >= res.lam - tol,
                            f"bound={bound:.10g} lambda2={res.lam:.10g}"))
        if sep - 2 * R > r:
            checks.append(Check(f"drift decoupled sep={sep:g}",
                                abs(res.lam - lam_ball) <= max(tol, 1e-9 * lam_ball),
                                f"|lambda2 - lambda1(B_R)|={abs(res.lam - lam_ball):.3e}"))
        elif r > 0:
            checks.append(Check(f"drift coupled sep={sep:g}", res.lam > lam_ball + tol,
                                f"lambda2 - lambda1(B_R)={res.lam - lam_ball:.3e}"))
    slack = 10 * params.tol * lam_ball
    mono = all(b <= a + slack for a, b in zip(lams, lams[1:]))
    checks.append(Check("drift lambda2 non-increasing", mono,
                        " ".join(f"{v:.10g}" for v in lams)))
    return rows, checks


# -- kernel-strength sweep for nodal margins -------------------------------------------

def nodal_weight_sweep(spec, resolution, kernel, p, params=None, weights=(1.0, 0.75, 0.5, 0.25, 0.0),
                       *, mirror_axis=None):
    """Nodal-domain margins of a second eigenfunction as the kernel is scaled down.

    By default the eigenpair comes from the minimax solver.  With
    ``mirror_axis`` it is the lowest eigenpair odd under that lattice
    reflection, whose nodal line then runs along cell faces; on domains with
    a degenerate second eigenvalue (the disk) this avoids nodal lines that
    cut through cells.
    """
    from .eigen2 import nodal_analysis, odd_eigenpair

    params = params or SolverParams()
    grid, mask = build_domain(spec, resolution, _radius(kernel))
    rows, margins = [], []
    for w in weights:
        k = kernel.scaled(w)
        ctx = EnergyContext(grid, k, p)
        if mirror_axis is None:
            r2 = solve_lambda2(ctx, mask, params)
        else:
            r2 = require_converged(odd_eigenpair(ctx, mask, mirror_axis, params))
        rep = nodal_analysis(ctx, params, r2.eigenfunction, r2.lam)
        m = min(rep.margins)
        margins.append(m)
        rows.append(ExperimentRow("nodal", describe_domain(spec), p, describe_kernel(k), resolution,
                                  lambda1=max(rep.lambda1_plus, rep.lambda1_minus),
                                  lambda2=r2.lam, margin=m,
                                  extra={"mirror_axis": mirror_axis}))
    return rows, margins


# -- charts -------------------------------------------------------------------------------

def svg_line_chart(xs, ys, title, xlabel, ylabel, reference=None, width=480, height=320):
    """Standalone SVG polyline of ``ys`` against ``xs`` with an optional dashed reference level."""
    pad = 56
    vals = list(ys) + ([reference] if reference is not None else [])
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(vals), max(vals)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    y0, y1 = y0 - 0.05 * (y1 - y0), y1 + 0.05 * (y1 - y0)

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 16}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{height / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {height / 2:.1f})">{ylabel}</text>',
    ]
    for t in np.linspace(x0, x1, 5):
        parts.append(f'<text x="{px(t):.2f}" y="{height - pad + 14}" text-anchor="middle">{t:.3g}</text>')
    for t in np.linspace(y0, y1, 5):
        parts.append(f'<text x="{pad - 4}" y="{py(t) + 4:.2f}" text-anchor="end">{t:.5g}</text>')
    if reference is not None:
        parts.append(f'<line x1="{pad}" y1="{py(reference):.2f}" x2="{width - pad}" '
                     f'y2="{py(reference):.2f}" stroke="gray" stroke-dasharray="4 3"/>')
    parts.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="steelblue"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
