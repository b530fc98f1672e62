"""First eigenpair: constrained Rayleigh descent, dense p = 2 oracle, checks.

The descent moves on the unit L^p sphere.  Each step solves with a sparse
preconditioner built from the energy Hessian at the current iterate (plus a
small shift), then backtracks on the Rayleigh value, so the sequence of
Rayleigh values never increases.  For p >= 2 a short bordered Newton solve
polishes the final pair so that its residual reaches round-off level.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .energy import _abs_pow, _psi
from .errors import (EmptyMask, InvalidSpec, NotConverged, NotNested, NotSymmetric,
                     TooLarge)
from .grid import Field, _inside, build_domain, is_connected
from .rng import SplitMix64

DENSE_LIMIT = 4000
# above this many pair-difference entries the Newton system is solved matrix-free
ITERATIVE_NNZ = 1_500_000


@dataclass(frozen=True)
class SolverParams:
    """Knobs shared by the first and second eigenvalue solvers.

    The exponent lives in the :class:`EnergyContext`; everything here is
    iteration control.
    """

    tol: float = 1e-9
    max_iter: int = 50000
    step0: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    seed: int = 0
    precond_shift: float = 1e-2
    polish: bool = True
    # string method
    nodes: int = 17
    string_tol: float = 1e-4
    max_sweeps: int = 5000

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidSpec("tol must be positive")
        if not 0 < self.shrink < 1 or not 0 < self.armijo < 1:
            raise InvalidSpec("backtracking needs 0 < shrink, armijo < 1")
        if self.max_iter < 1 or self.step0 <= 0:
            raise InvalidSpec("max_iter and step0 must be positive")
        if self.nodes < 9 or self.nodes % 2 == 0:
            raise InvalidSpec("path needs an odd number of nodes >= 9")

    def to_json(self):
        return {"tol": self.tol, "max_iter": self.max_iter, "seed": self.seed}


@dataclass
class EigenResult:
    lam: float
    eigenfunction: Field
    residual: float
    iterations: int
    converged: bool
    info: dict = field(default_factory=dict)

    def to_json(self):
        return {"lambda": self.lam, "residual": self.residual,
                "iterations": self.iterations, "converged": self.converged}

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)


# -- linear algebra helpers ------------------------------------------------------

def hessian_preconditioner(op, x, lam, shift):
    """LU of the local Hessian at ``x`` plus the nonlocal Hessian diagonal.

    A shift ``shift * (p-1) lam vol mean|x|^(p-2)`` keeps the factor
    definite.  Only the diagonal of the nonlocal part is kept: its full
    pattern fills the factor.  For 1 < p < 2 the Hessian is unbounded near
    flat spots, so the fixed p = 2 stiffness is used instead.
    """
    p = op.p
    if p < 2.0:
        return op.preconditioner()
    H = op.local_hessian(x)
    diag = op.nonlocal_hessian_diagonal(x)
    reg = shift * (p - 1.0) * lam * op.vol * float(np.mean(_abs_pow(x, p - 2.0)))
    reg = max(reg, 1e-14 * float(abs(H.diagonal()).max()))
    return splinalg.splu(sparse.csc_matrix(H + sparse.diags(diag + reg)))


def _bordered_newton_direct(op, x, lam, F):
    p, vol = op.p, op.vol
    A = op.hessian(x) / p - sparse.diags(lam * (p - 1.0) * _abs_pow(x, p - 2.0) * vol)
    b = sparse.csr_matrix((_psi(x, p) * vol)[:, None])
    J = sparse.bmat([[A, -b], [-b.T, None]], format="csc")
    lu = splinalg.splu(J, permc_spec="MMD_AT_PLUS_A")
    return lu.solve(-np.concatenate([F, [0.0]]))


def _bordered_newton_iterative(op, x, lam, F):
    """Matrix-free GMRES on the bordered system.

    The preconditioner is the descent factorisation (local Hessian plus the
    nonlocal diagonal) with the border eliminated by its Schur complement.
    """
    p, vol, n = op.p, op.vol, op.size
    Hl = op.local_hessian(x)
    Dn, w, Dnt = op.pair_diff
    wd = 4.0 * w if p == 2.0 else 2.0 * p * (p - 1.0) * w * _abs_pow(Dn @ x, p - 2.0)
    shift = lam * (p - 1.0) * _abs_pow(x, p - 2.0) * vol
    b = _psi(x, p) * vol

    def matvec(z):
        y, mu = z[:n], z[n]
        Ay = (Hl @ y + Dnt @ (wd * (Dn @ y))) / p - shift * y - b * mu
        return np.concatenate([Ay, [-(b @ y)]])

    P = hessian_preconditioner(op, x, lam, 1e-2)
    Pb = p * P.solve(b)
    bPb = float(b @ Pb)

    def prec(z):
        Pr = p * P.solve(z[:n])
        mu = -(z[n] + b @ Pr) / bPb
        return np.concatenate([Pr + Pb * mu, [mu]])

    J = splinalg.LinearOperator((n + 1, n + 1), matvec=matvec, dtype=float)
    M = splinalg.LinearOperator((n + 1, n + 1), matvec=prec, dtype=float)
    rhs = -np.concatenate([F, [0.0]])
    sol, info = splinalg.gmres(J, rhs, M=M, rtol=1e-10, atol=0.0, restart=60, maxiter=20)
    if info < 0:
        raise RuntimeError("GMRES breakdown")
    return sol


def newton_polish(op, x, max_iter=30, target=1e-13, *, project=None):
    """Bordered Newton iteration on ``(L u - lam psi(u), N(u) - 1) = 0``.

    Each step must cut the residual norm by at least 10 %; otherwise the
    iteration stops and the best pair so far is returned as
    ``(x, lam, residual, steps)``.  ``project`` (a linear map commuting with
    the operator) is applied to every step.
    """
    p, vol = op.p, op.vol
    x = op.normalize(x)
    lam = op.rayleigh(x)
    res = op.residual(x, lam)
    steps = 0
    if p < 2.0:
        return x, lam, res, steps
    for steps in range(1, max_iter + 1):
        if res < target:
            break
        F = op.residual_vector(x, lam)
        try:
            if op.pair_diff[0].nnz > ITERATIVE_NNZ:
                sol = _bordered_newton_iterative(op, x, lam, F)
            else:
                sol = _bordered_newton_direct(op, x, lam, F)
        except RuntimeError:
            break
        if not np.all(np.isfinite(sol)):
            break
        dx = sol[:-1] if project is None else project(sol[:-1])
        t, accepted = 1.0, False
        while t > 1e-4:
            xn = op.normalize(x + t * dx)
            ln = op.rayleigh(xn)
            rn = op.residual(xn, ln)
            if rn < 0.9 * res:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        x, lam, res = xn, ln, rn
    return x, lam, res, steps


def _positive_start(op, seed):
    rng = SplitMix64(seed)
    return op.normalize(np.abs(rng.normal(op.size)) + 1e-3)


# -- first eigenvalue --------------------------------------------------------------

def _mask_of(ctx, domain):
    if isinstance(domain, Field):
        return domain.mask
    return np.asarray(domain, dtype=bool)


def descend(op, x, params, *, history=None, project=None):
    """Preconditioned projected descent from ``x``; returns ``(x, lam, iters, converged)``.

    With ``project`` (a linear map commuting with the operator, such as the
    odd part under a reflection) every search direction is projected, which
    keeps the iterates in its range.
    """
    r, g = op.rayleigh_and_grad(x)
    if history is not None:
        history.append(r)
    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        P = hessian_preconditioner(op, x, r, params.precond_shift)
        d = -P.solve(g)
        if project is not None:
            d = project(d)
        slope = float(g @ d)
        if not slope < 0:
            d = -g if project is None else -project(g)
            slope = float(g @ d)
        t = params.step0
        while True:
            xn = op.normalize(x + t * d)
            rn = op.rayleigh(xn)
            if rn <= r + params.armijo * t * slope:
                break
            t *= params.shrink
            if t < 1e-14:
                xn, rn = x, r
                break
        if xn is x:
            # no admissible step left: the iterate is stationary to round-off
            converged = True
            break
        rold = r
        x = xn
        r, g = op.rayleigh_and_grad(x)
        if history is not None:
            history.append(r)
        if abs(rold - r) <= params.tol * abs(r) and it > 3:
            converged = True
            break
    return x, r, it, converged


def solve_lambda1(ctx, domain, params=None, *, start=None):
    """First eigenpair on ``domain`` (a mask or a Field whose mask is used).

    Starts from the absolute value of a random field.  A run that exhausts
    ``max_iter`` returns its best iterate with ``converged=False``.
    """
    params = params or SolverParams()
    mask = _mask_of(ctx, domain)
    if not mask.any():
        raise EmptyMask("solver needs a nonempty mask")
    op = ctx.op(mask)
    x = op.normalize(np.asarray(start, float)) if start is not None else _positive_start(op, params.seed)
    history = []
    x, lam, iters, converged = descend(op, x, params, history=history)
    res = op.residual(x, lam)
    polished = False
    if params.polish and op.p >= 2.0:
        xp, lp, rp, _ = newton_polish(op, x)
        if rp < res and abs(lp - lam) <= 1e-6 * lam:
            x, lam, res, polished = xp, lp, rp, True
    if np.sum(x) < 0:
        x = -x
    u = Field.from_vector(ctx.grid, mask, x)
    return EigenResult(lam, u, res, iters, converged,
                       {"history": history, "polished": polished})


def require_converged(result):
    if not result.converged:
        raise NotConverged(f"solver stopped after {result.iterations} iterations "
                           f"(lambda={result.lam:.10g})")
    return result


# -- dense p = 2 oracle -------------------------------------------------------------

def dense_oracle_p2(ctx, domain):
    """Two smallest eigenpairs of the p = 2 discretisation by a dense solve.

    The matrix is ``A_ij = pairing(e_i, e_j) / h^N`` restricted to mask cells;
    it is symmetric, so LAPACK's tridiagonalising symmetric solver applies.
    """
    if ctx.p != 2.0:
        raise InvalidSpec("the dense oracle is only defined for p = 2")
    mask = _mask_of(ctx, domain)
    op = ctx.op(mask)
    if op.size > DENSE_LIMIT:
        raise TooLarge(f"{op.size} mask cells exceed the dense limit {DENSE_LIMIT}")
    if op.size < 2:
        raise TooLarge("need at least two mask cells")
    A = op.stiffness().toarray() / op.vol
    defect = float(np.max(np.abs(A - A.T)))
    if defect > 1e-12 * max(1.0, float(np.max(np.abs(A)))):
        raise NotSymmetric(f"assembled matrix asymmetric by {defect:.3e}")
    A = 0.5 * (A + A.T)
    vals, vecs = linalg.eigh(A, subset_by_index=[0, 1])
    out = []
    for k in range(2):
        v = op.normalize(vecs[:, k])
        # deterministic sign: first entry of largest modulus is positive
        j = int(np.argmax(np.abs(v)))
        if v[j] < 0:
            v = -v
        out.append(Field.from_vector(ctx.grid, mask, v))
    return float(vals[0]), float(vals[1]), out[0], out[1]


# -- property checks ---------------------------------------------------------------

@dataclass
class SimplicityReport:
    lambdas: list
    max_lambda_spread: float
    max_function_gap: float
    min_value: float
    connected: bool
    agree: bool
    sign_constant: bool
    flags: list

    @property
    def passed(self):
        if not self.agree:
            return False
        return self.sign_constant or not self.connected


def check_simplicity(ctx, domain, params=None, trials=5):
    """Re-solve from ``trials`` seeds and compare eigenvalues and eigenfunctions."""
    if trials < 1:
        raise InvalidSpec("trials must be >= 1")
    params = params or SolverParams()
    mask = _mask_of(ctx, domain)
    p = ctx.p
    base = SplitMix64(params.seed)
    results = []
    for k in range(trials):
        seed = int(base.spawn(k).next_uint64(1)[0])
        sub = SolverParams(**{**params.__dict__, "seed": seed})
        results.append(require_converged(solve_lambda1(ctx, mask, sub)))
    lams = [r.lam for r in results]
    ref = results[0].eigenfunction.vector()
    vol = ctx.grid.cell_volume
    gap = 0.0
    for r in results[1:]:
        v = r.eigenfunction.vector()
        if float(ref @ v) < 0:
            v = -v
        gap = max(gap, float(np.sum(np.abs(v - ref) ** p) * vol) ** (1.0 / p))
    spread = (max(lams) - min(lams)) / min(lams)
    mins = min(float(r.eigenfunction.vector().min()) for r in results)
    connected = is_connected(mask)
    flags = [] if connected else ["disconnected domain: sign-constancy not asserted"]
    agree = spread <= 10 * params.tol and gap <= 1e-4
    if not connected:
        # each component carries its own first eigenfunction; the combination
        # picked by the solver need not be unique
        agree = spread <= 10 * params.tol
    return SimplicityReport(lams, spread, gap, mins, connected, agree,
                            mins >= -1e-8, flags)


@dataclass
class MonotonicityReport:
    lambda_a: float
    lambda_b: float
    margin: float
    passed: bool


def nested_masks(spec_a, spec_b, resolution, kernel_radius=0.0):
    """Masks of ``spec_a`` and ``spec_b`` realised on the grid built for ``spec_b``."""
    grid, mask_b = build_domain(spec_b, resolution, kernel_radius)
    mask_a = _inside(spec_a, grid.centers())
    if not mask_a.any():
        raise EmptyMask("inner domain is empty on this grid")
    if np.any(mask_a & ~mask_b) or np.array_equal(mask_a, mask_b):
        raise NotNested("realised mask of A is not a strict subset of B")
    return grid, mask_a, mask_b


def check_domain_monotonicity(spec_a, spec_b, resolution, kernel, p, params=None):
    """Compare first eigenvalues of nested domains A strictly inside B."""
    from .energy import EnergyContext

    params = params or SolverParams()
    radius = kernel.radius if kernel is not None else 0.0
    grid, mask_a, mask_b = nested_masks(spec_a, spec_b, resolution, radius)
    if not is_connected(mask_b):
        raise InvalidSpec("the larger domain must be connected")
    ctx = EnergyContext(grid, kernel, p)
    la = require_converged(solve_lambda1(ctx, mask_a, params)).lam
    lb = require_converged(solve_lambda1(ctx, mask_b, params)).lam
    margin = la - lb
    return MonotonicityReport(la, lb, margin, margin > params.tol * lb)
