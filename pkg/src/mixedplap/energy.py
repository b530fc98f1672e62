"""Discrete energy, weak pairing, operator and gradients.

Conventions
-----------
Local term.  For every cell ``c`` of the padded box and every axis ``a`` the
forward difference ``G[c, a] = s (u[c + e_a] - u[c]) / h`` is formed from the
zero-extended field.  On faces separating a mask cell from a non-mask cell the
boundary value sits on the face itself, half a cell away, which is expressed
by the factor ``s = 2**((p - 1) / p)`` (``s = 1`` elsewhere).  The local
energy is ``sum_c |G[c]|**p h**N`` with ``|.|`` the Euclidean norm over axes.
In 2-D with p != 2 that sum is averaged over the four choices of forward or
backward difference per axis, which makes the energy invariant under every
lattice reflection; for p = 2, or in 1-D, all choices give the same sum.
In 1-D and p = 2 this is the usual second-order cell-centred Dirichlet
Laplacian, whose eigenvalues are ``4/h**2 sin(k pi h / 2)**2`` on the unit
interval.

Nonlocal term.  ``sum_{i,j} |u_i - u_j|**p w_ij`` over ordered pairs with
``w_ij = J(x_i - x_j) h**(2N)``.  Both orderings are counted, as in the
symmetric double integral.

The weak pairing is fixed so that ``pairing(u, u) == total_energy(u)``; the
operator is its discrete adjoint, ``sum_i (L u)_i phi_i h**N = pairing(u, phi)``,
which carries the factor 2 of the nonlocal operator automatically.
"""
from __future__ import annotations

import csv
import io
import itertools

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import GridMismatch, PaddingTooSmall, ZeroField
from .grid import Field
from .kernel import stencil


def face_factor(p):
    return 2.0 ** ((p - 1.0) / p)


def _abs_pow(t, p):
    """|t|**p with cheap paths for small integer exponents; 0**0 taken as 0."""
    a = np.abs(t)
    if p == 2.0:
        return a * a
    if p == 3.0:
        return a * a * a
    if p == 4.0:
        b = a * a
        return b * b
    if p == 1.0:
        return a
    if p == 0.0:
        return (a > 0).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > 0, a ** p, 0.0)


def _psi(t, p):
    """|t|^(p-2) t with the value 0 at t = 0 for every p."""
    if p == 2.0:
        return t
    if p == 3.0:
        return np.abs(t) * t
    if p == 4.0:
        return t * t * t
    return _abs_pow(t, p - 2.0) * t


def _pair_slices(shape, d):
    """Slices ``src``, ``dst`` with ``dst = src + d`` inside a box of ``shape``."""
    src, dst = [], []
    for m, k in zip(shape, d):
        k = int(k)
        if k >= 0:
            src.append(slice(0, m - k))
            dst.append(slice(k, m))
        else:
            src.append(slice(-k, m))
            dst.append(slice(0, m + k))
    return tuple(src), tuple(dst)


def _one_sided_groups(fwd, shape):
    """All 2**N choices of forward or backward difference per axis.

    The backward difference at a cell is the forward difference at its lower
    neighbour, so the backward matrices are row shifts of the forward ones.
    """
    nbox = int(np.prod(shape))
    flat = np.arange(nbox).reshape(shape)
    back = []
    for a, D in enumerate(fwd):
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[a], hi[a] = slice(0, -1), slice(1, None)
        dst, src = flat[tuple(hi)].ravel(), flat[tuple(lo)].ravel()
        S = sparse.csr_matrix((np.ones(dst.size), (dst, src)), shape=(nbox, nbox))
        back.append(sparse.csr_matrix(S @ D))
    return [[back[a] if bit else fwd[a] for a, bit in enumerate(bits)]
            for bits in itertools.product((0, 1), repeat=len(shape))]


class EnergyContext:
    """Grid, kernel and exponent, plus the precomputed nonlocal stencil."""

    def __init__(self, grid, kernel, p):
        if not p > 1:
            raise ValueError("need 1 < p < inf")
        self.grid = grid
        self.kernel = kernel
        self.p = float(p)
        if kernel is not None:
            if kernel.dim != grid.dim:
                raise GridMismatch("kernel and grid dimensions differ")
            if grid.pad * grid.h < kernel.radius - 1e-12:
                raise PaddingTooSmall(
                    f"pad*h = {grid.pad * grid.h:g} < kernel radius {kernel.radius:g}")
        self.offsets, self.weights = stencil(kernel, grid.h)
        self.pairs = [(_pair_slices(grid.shape, d), w)
                      for d, w in zip(self.offsets, self.weights)]
        self._ops = {}

    @property
    def local_only(self):
        return len(self.weights) == 0

    def with_p(self, p):
        return EnergyContext(self.grid, self.kernel, p)

    def with_kernel(self, kernel):
        return EnergyContext(self.grid, kernel, self.p)

    def op(self, mask):
        """Cached :class:`MaskedOperator` for a mask on this grid."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != tuple(self.grid.shape):
            raise GridMismatch("mask does not live on this grid")
        key = mask.tobytes()
        if key not in self._ops:
            self._ops[key] = MaskedOperator(self, mask)
        return self._ops[key]

    def check_field(self, u):
        if u.grid != self.grid:
            raise GridMismatch("field lives on a different grid")
        return self.op(u.mask)

    def neighbor_table(self, mask=None):
        """Ordered pairs ``(i, j, w_ij)`` (flat box indices), optionally only rows in ``mask``."""
        shape = self.grid.shape
        flat = np.arange(int(np.prod(shape))).reshape(shape)
        rows_i, rows_j, rows_w = [], [], []
        for (src, dst), w in self.pairs:
            a, b = flat[src].ravel(), flat[dst].ravel()
            for i, j in ((a, b), (b, a)):
                rows_i.append(i)
                rows_j.append(j)
                rows_w.append(np.full(i.size, w))
        if not rows_i:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        i, j, w = (np.concatenate(x) for x in (rows_i, rows_j, rows_w))
        if mask is not None:
            keep = np.asarray(mask).ravel()[i]
            i, j, w = i[keep], j[keep], w[keep]
        order = np.lexsort((j, i))
        return i[order], j[order], w[order]

    def dump_neighbor_table(self, path=None, mask=None):
        i, j, w = self.neighbor_table(mask)
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["i", "j", "w_ij"])
        for a, b, c in zip(i, j, w):
            wr.writerow([int(a), int(b), repr(float(c))])
        if path is not None:
            with open(path, "w") as fh:
                fh.write(buf.getvalue())
        return buf.getvalue()


class MaskedOperator:
    """Energy, gradient and linearisations acting on mask-cell vectors.

    Solvers work with the vector ``x = u.values[mask]``; the methods here are
    the coordinate versions of the Field-level functions below, with
    ``grad`` the plain partial derivative ``dE/dx``.
    """

    def __init__(self, ctx, mask):
        self.ctx = ctx
        self.grid = ctx.grid
        self.mask = mask
        self.p = ctx.p
        self.idx = np.flatnonzero(mask.ravel())
        self.size = self.idx.size
        self.vol = self.grid.cell_volume
        self._stiff = None
        self._precond = None
        self._local = None
        self._pairs = None
        one_sided = self.grid.dim > 1 and self.p != 2.0
        self.group_weight = 0.5 ** self.grid.dim if one_sided else 1.0

    # -- scatter / gather -------------------------------------------------
    def box(self, x):
        u = np.zeros(self.grid.shape)
        u.ravel()[self.idx] = x
        return u

    def gather(self, arr):
        return arr.ravel()[self.idx]

    # -- cached difference operators -----------------------------------
    @property
    def local_mats(self):
        """Stencil groups for this p: each a list of per-axis difference matrices.

        Rows are box cells touching the mask.  Every group carries the
        weight ``self.group_weight``.
        """
        if self._local is None:
            fwd = self._local_difference_matrices(self.p)
            groups = [fwd]
            if self.grid.dim > 1 and self.p != 2.0:
                groups = _one_sided_groups(fwd, self.grid.shape)
            self._local, self._local_t = [], []
            for mats in groups:
                touched = np.zeros(mats[0].shape[0], dtype=bool)
                for D in mats:
                    touched |= np.diff(D.indptr) > 0
                kept = [sparse.csr_matrix(D[touched]) for D in mats]
                self._local.append(kept)
                self._local_t.append([sparse.csr_matrix(D.T) for D in kept])
        return self._local

    @property
    def pair_diff(self):
        if self._pairs is None:
            Dn, w = self._nonlocal_difference()
            self._pairs = (sparse.csr_matrix(Dn), w, sparse.csr_matrix(Dn.T))
        return self._pairs

    # -- pieces ----------------------------------------------------------
    def _G(self, x):
        return [[D @ x for D in mats] for mats in self.local_mats]

    def _norm(self, G):
        if len(G) == 1:
            return np.abs(G[0])
        return np.sqrt(sum(g * g for g in G))

    def local_energy(self, x):
        total = sum(float(np.sum(_abs_pow(self._norm(G), self.p))) for G in self._G(x))
        return total * self.vol * self.group_weight

    def nonlocal_energy(self, x):
        Dn, w, _ = self.pair_diff
        if not w.size:
            return 0.0
        return 2.0 * float(np.dot(w, _abs_pow(Dn @ x, self.p)))

    def energy(self, x):
        return self.local_energy(x) + self.nonlocal_energy(x)

    def energy_and_grad(self, x):
        p, vol = self.p, self.vol
        el, g = 0.0, 0.0
        for G, mats_t in zip(self._G(x), self._local_t):
            nrm = self._norm(G)
            el += float(np.sum(_abs_pow(nrm, p)))
            fac = 2.0 if p == 2.0 else p * _abs_pow(nrm, p - 2.0)
            g = g + sum(Dt @ (fac * Ga) for Dt, Ga in zip(mats_t, G))
        cw = vol * self.group_weight
        el *= cw
        g = g * cw
        Dn, w, Dnt = self.pair_diff
        en = 0.0
        if w.size:
            d = Dn @ x
            en = 2.0 * float(np.dot(w, _abs_pow(d, p)))
            g = g + Dnt @ ((2.0 * p) * w * _psi(d, p))
        return el + en, g

    def grad(self, x):
        return self.energy_and_grad(x)[1]

    def pairing(self, x, y):
        p = self.p
        loc = 0.0
        for Gu, Gv in zip(self._G(x), self._G(y)):
            fac = _abs_pow(self._norm(Gu), p - 2.0) if p != 2.0 else 1.0
            loc += float(np.sum(fac * sum(a * b for a, b in zip(Gu, Gv))))
        loc *= self.vol * self.group_weight
        Dn, w, _ = self.pair_diff
        nl = 0.0
        if w.size:
            nl = float(np.dot(w, _psi(Dn @ x, p) * (Dn @ y)))
        return loc + 2.0 * nl

    # -- L^p constraint --------------------------------------------------
    def norm_p(self, x):
        return float(np.sum(_abs_pow(x, self.p)) * self.vol)

    def lp_norm(self, x):
        return self.norm_p(x) ** (1.0 / self.p)

    def normalize(self, x):
        n = self.lp_norm(x)
        if n == 0.0:
            raise ZeroField("cannot normalise the zero field")
        return x / n

    def rayleigh(self, x):
        den = self.norm_p(x)
        if den == 0.0:
            raise ZeroField("Rayleigh quotient of the zero field")
        return self.energy(x) / den

    def rayleigh_and_grad(self, x):
        """R(x) and its coordinate gradient ``(dE - R dN) / N``."""
        e, ge = self.energy_and_grad(x)
        den = self.norm_p(x)
        r = e / den
        gn = self.p * _psi(x, self.p) * self.vol
        return r, (ge - r * gn) / den

    def apply(self, x):
        """Strong-form operator values ``(L_h u)_i`` on mask cells."""
        return self.grad(x) / (self.p * self.vol)

    def residual_vector(self, x, lam):
        return (self.apply(x) - lam * _psi(x, self.p)) * self.vol

    def residual(self, x, lam):
        return float(np.linalg.norm(self.residual_vector(x, lam)))

    # -- p = 2 linear algebra ------------------------------------------------
    def stiffness(self):
        """Sparse symmetric K with ``x.K.x`` the p = 2 energy (mask coordinates)."""
        if self._stiff is None:
            self._stiff = self._assemble(2.0, None)
        return self._stiff

    def _local_difference_matrices(self, p):
        """Sparse maps from mask vectors to forward differences on every box cell."""
        h = self.grid.h
        s = face_factor(p)
        nbox = int(np.prod(self.grid.shape))
        col = -np.ones(nbox, dtype=int)
        col[self.idx] = np.arange(self.size)
        flat = np.arange(nbox).reshape(self.grid.shape)
        mats = []
        for a in range(self.grid.dim):
            lo = [slice(None)] * self.grid.dim
            hi = [slice(None)] * self.grid.dim
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            c = flat[tuple(lo)].ravel()
            n = flat[tuple(hi)].ravel()
            mc, mn = col[c] >= 0, col[n] >= 0
            coef = np.where(mc != mn, s, 1.0) / h
            rows, cols, vals = [], [], []
            sel = mn
            rows.append(c[sel]); cols.append(col[n][sel]); vals.append(coef[sel])
            sel = mc
            rows.append(c[sel]); cols.append(col[c][sel]); vals.append(-coef[sel])
            D = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(nbox, self.size))
            mats.append(D)
        return mats

    def _nonlocal_difference(self):
        """Sparse pair-difference matrix (rows: unordered pairs touching the mask) and weights."""
        nbox = int(np.prod(self.grid.shape))
        col = -np.ones(nbox, dtype=int)
        col[self.idx] = np.arange(self.size)
        flat = np.arange(nbox).reshape(self.grid.shape)
        rows, cols, vals, wts = [], [], [], []
        r0 = 0
        for (src, dst), w in self.ctx.pairs:
            a, b = col[flat[src].ravel()], col[flat[dst].ravel()]
            keep = (a >= 0) | (b >= 0)
            a, b = a[keep], b[keep]
            k = a.size
            rid = np.arange(r0, r0 + k)
            ma, mb = a >= 0, b >= 0
            rows += [rid[ma], rid[mb]]
            cols += [a[ma], b[mb]]
            vals += [np.ones(ma.sum()), -np.ones(mb.sum())]
            wts.append(np.full(k, w))
            r0 += k
        if r0 == 0:
            return sparse.csr_matrix((0, self.size)), np.zeros(0)
        D = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(r0, self.size))
        return D, np.concatenate(wts)

    def _assemble(self, p, x):
        """Energy Hessian at x divided by p(p-1) for p != 2; stiffness for p == 2 (x None)."""
        vol = self.vol
        if p == self.p:
            groups, cw = self.local_mats, self.group_weight
        else:
            groups, cw = [self._local_difference_matrices(p)], 1.0
        if x is None:
            K = sum(sum(D.T @ D for D in mats) for mats in groups) * (vol * cw)
        else:
            K = self._local_hessian_groups(groups, x, p) * cw
        Dn, w, _ = self.pair_diff
        if Dn.shape[0]:
            if x is None:
                K = K + 2.0 * (Dn.T @ sparse.diags(w) @ Dn)
            else:
                d = Dn @ x
                wd = 2.0 * p * (p - 1.0) * w * _abs_pow(d, p - 2.0)
                K = K + Dn.T @ sparse.diags(wd) @ Dn
        return sparse.csr_matrix(K)

    def local_hessian(self, x):
        """Hessian of the local energy alone (p >= 2); constant for p = 2."""
        p, vol = self.p, self.vol
        if p == 2.0:
            return sparse.csr_matrix(2.0 * vol * sum(D.T @ D for D in self.local_mats[0]))
        return sparse.csr_matrix(self._local_hessian_groups(self.local_mats, x, p) * self.group_weight)

    def _local_hessian_groups(self, groups, x, p):
        # Hessian of |G|^p is p|G|^(p-2) (I + (p-2) n n^T), summed over groups
        K = None
        for mats in groups:
            G = [D @ x for D in mats]
            nrm = self._norm(G)
            base = p * _abs_pow(nrm, p - 2.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                nhat = [np.where(nrm > 0, g / nrm, 0.0) for g in G]
            for a, Da in enumerate(mats):
                for b, Db in enumerate(mats):
                    wgt = base * ((p - 2.0) * nhat[a] * nhat[b] + (1.0 if a == b else 0.0))
                    term = Da.T @ sparse.diags(wgt * self.vol) @ Db
                    K = term if K is None else K + term
        return K

    def nonlocal_hessian_diagonal(self, x):
        Dn, w, Dnt = self.pair_diff
        if not w.size:
            return np.zeros(self.size)
        p = self.p
        wd = 2.0 * p * (p - 1.0) * w * _abs_pow(Dn @ x, p - 2.0) if p != 2.0 else 4.0 * w
        return abs(Dnt) @ wd

    def hessian(self, x):
        """Sparse Hessian of the energy at x (p >= 2)."""
        if self.p == 2.0:
            return 2.0 * self.stiffness()
        return self._assemble(self.p, x)

    def preconditioner(self):
        """Factorised local p = 2 stiffness plus the nonlocal diagonal."""
        if self._precond is None:
            mats = self._local_difference_matrices(2.0)
            K = sum((D.T @ D) for D in mats) * self.vol
            diag = 4.0 * float(np.sum(self.ctx.weights))
            K = sparse.csc_matrix(K + diag * sparse.identity(self.size))
            self._precond = splinalg.splu(K)
        return self._precond


# -- Field-level API -----------------------------------------------------------

def local_energy(ctx, u):
    return ctx.check_field(u).local_energy(u.vector())


def nonlocal_energy(ctx, u):
    return ctx.check_field(u).nonlocal_energy(u.vector())


def total_energy(ctx, u):
    return ctx.check_field(u).energy(u.vector())


def pairing(ctx, u, phi):
    op = ctx.check_field(u)
    if phi.grid != u.grid or not np.array_equal(phi.mask, u.mask):
        raise GridMismatch("pairing needs both fields on the same grid and mask")
    return op.pairing(u.vector(), phi.vector())


def apply_operator(ctx, u):
    op = ctx.check_field(u)
    return Field.from_vector(u.grid, u.mask, op.apply(u.vector()))


def rayleigh(ctx, u):
    return ctx.check_field(u).rayleigh(u.vector())


def energy_gradient(ctx, u):
    """Field g with ``sum g_i phi_i h^N = p * pairing(u, phi)``."""
    op = ctx.check_field(u)
    return Field.from_vector(u.grid, u.mask, op.grad(u.vector()) / op.vol)


def residual(ctx, u, lam):
    """Euclidean norm of ``((L_h u)_i - lam |u_i|^(p-2) u_i) h^N`` over mask cells."""
    return ctx.check_field(u).residual(u.vector(), lam)
