"""Radial convolution kernels with compact support.

Three compact families are normalised to unit mass in their dimension.  The
truncated fractional kernel ``|x|^-(N+ps)`` restricted to an annulus
``epsilon <= |x| <= r_cut`` stands in for the singular fractional kernel; it
is not normalisable to one and is flagged as such.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import InvalidOrder, InvalidSpec

FAMILIES = ("tent", "truncated_gaussian", "bump", "truncated_fractional")

# gaussian width relative to the support radius
GAUSS_SIGMA_RATIO = 0.5


def _profile(family, rho, r, params):
    """Unnormalised radial profile evaluated at distances ``rho``."""
    rho = np.asarray(rho, dtype=float)
    inside = rho <= r
    if family == "tent":
        out = 1.0 - rho / r
    elif family == "truncated_gaussian":
        sigma = GAUSS_SIGMA_RATIO * r
        out = np.exp(-0.5 * (rho / sigma) ** 2)
    elif family == "bump":
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            q = 1.0 - (rho / r) ** 2
            out = np.where(q > 0, np.exp(1.0 - 1.0 / np.where(q > 0, q, 1.0)), 0.0)
    elif family == "truncated_fractional":
        s, p, eps = params["s"], params["p"], params["epsilon"]
        n = params["dim"]
        with np.errstate(divide="ignore"):
            out = np.where(rho >= eps, np.power(np.maximum(rho, eps), -(n + p * s)), 0.0)
    else:
        raise InvalidSpec(f"unknown kernel family {family!r}")
    return np.where(inside, out, 0.0)


def _radial_mass(family, r, dim, params):
    """Integral of the unnormalised profile over R^dim."""
    if family == "tent":
        # closed forms: 1-D  r,  2-D  pi r^2 / 3
        return r if dim == 1 else math.pi * r * r / 3.0
    f = lambda rho: float(_profile(family, rho, r, params))
    if dim == 1:
        val, _ = integrate.quad(f, 0.0, r, epsabs=1e-12, epsrel=1e-10, limit=200)
        return 2.0 * val
    val, _ = integrate.quad(lambda rho: rho * f(rho), 0.0, r, epsabs=1e-12,
                            epsrel=1e-10, limit=200)
    return 2.0 * math.pi * val


@dataclass(frozen=True)
class Kernel:
    """Radial kernel ``J(x) = weight * norm_const * profile(|x|)``.

    ``weight`` scales the whole kernel; it is 1 for an admissible kernel and
    is varied only in kernel-strength sweeps.
    """

    family: str
    radius: float
    dim: int
    norm_const: float
    weight: float = 1.0
    params: dict = field(default_factory=dict)

    @classmethod
    def make(cls, family, radius, dim, weight=1.0):
        if family not in FAMILIES or family == "truncated_fractional":
            raise InvalidSpec(f"use fractional_kernel() for {family!r}" if family in FAMILIES
                              else f"unknown kernel family {family!r}")
        if not radius > 0 or dim not in (1, 2):
            raise InvalidSpec("kernel radius must be positive and dim in {1, 2}")
        if weight < 0:
            raise InvalidSpec("kernel weight must be nonnegative")
        mass = _radial_mass(family, float(radius), dim, {})
        return cls(family, float(radius), int(dim), 1.0 / mass, float(weight))

    def scaled(self, weight):
        return Kernel(self.family, self.radius, self.dim, self.norm_const,
                      float(weight), dict(self.params))

    @property
    def is_fractional(self):
        return self.family == "truncated_fractional"

    @property
    def is_decreasing(self):
        return not self.is_fractional

    def radial(self, rho):
        prof = _profile(self.family, rho, self.radius, {**self.params, "dim": self.dim})
        return self.weight * self.norm_const * prof

    def to_json(self):
        out = {"family": self.family, "radius": self.radius}
        if self.weight != 1.0:
            out["weight"] = self.weight
        if self.is_fractional:
            out.update(s=self.params["s"], p=self.params["p"],
                       epsilon=self.params["epsilon"], r_cut=self.radius)
        return out

    @classmethod
    def from_json(cls, obj, dim):
        obj = dict(obj)
        family = obj.pop("family")
        weight = float(obj.pop("weight", 1.0))
        if family == "truncated_fractional":
            k = fractional_kernel(obj["s"], obj["p"], obj["epsilon"], obj["r_cut"], dim)
            return k.scaled(weight)
        return cls.make(family, float(obj["radius"]), dim, weight)

    def describe(self):
        if self.is_fractional:
            return (f"fractional (truncated) s={self.params['s']:g} eps={self.params['epsilon']:g}"
                    f" rcut={self.radius:g}")
        tag = f"{self.family} r={self.radius:g}"
        return tag if self.weight == 1.0 else f"{tag} w={self.weight:g}"


def eval_kernel(k, displacement):
    """J at one displacement vector, or at an array of shape (..., dim)."""
    d = np.asarray(displacement, dtype=float)
    if d.ndim == 0:
        d = d[None]
    rho = np.sqrt(np.sum(d * d, axis=-1))
    out = k.radial(rho)
    return float(out) if np.ndim(out) == 0 else out


def normalization_check(k, quadrature_h):
    """Riemann sum of J over a cell-centred lattice covering its support.

    Returns ``(value, flagged)``.  ``flagged`` is True when the value is not
    within 1e-4 of one, or for the truncated fractional family where unit
    mass is not expected at all.
    """
    if quadrature_h > k.radius / 8:
        raise ValueError("quadrature_h must be <= radius / 8")
    m = int(math.ceil(k.radius / quadrature_h)) + 1
    ax = (np.arange(-m, m) + 0.5) * quadrature_h
    if k.dim == 1:
        pts = ax[:, None]
    else:
        pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    value = float(np.sum(eval_kernel(k, pts)) * quadrature_h ** k.dim)
    flagged = k.is_fractional or abs(value - 1.0) > 1e-4
    return value, flagged


def fractional_kernel(s, p, epsilon, r_cut, dim=1):
    """Doubly truncated kernel ``|x|^-(N+ps)`` on ``epsilon <= |x| <= r_cut``."""
    if not 0 < s < 1:
        raise InvalidOrder("fractional order s must lie in (0, 1)")
    if not dim > p * s:
        raise InvalidOrder("need N > p*s")
    if not 0 < epsilon < r_cut:
        raise InvalidSpec("need 0 < epsilon < r_cut")
    params = {"s": float(s), "p": float(p), "epsilon": float(epsilon)}
    return Kernel("truncated_fractional", float(r_cut), int(dim), 1.0, 1.0, params)


def stencil(k, h):
    """Lattice offsets (in cells) with nonzero weight ``J(d h) h^(2N)``.

    Only the lexicographically positive half is returned; the full symmetric
    stencil is the union with the negated offsets.
    """
    if k is None or k.weight == 0.0:
        return np.zeros((0, 1 if k is None else k.dim), dtype=int), np.zeros(0)
    m = int(math.floor(k.radius / h + 1e-9))
    rng = np.arange(-m, m + 1)
    if k.dim == 1:
        offs = rng[:, None]
    else:
        offs = np.stack(np.meshgrid(rng, rng, indexing="ij"), axis=-1).reshape(-1, 2)
    positive = np.array([tuple(o) > (0,) * k.dim for o in offs], dtype=bool)
    offs = offs[positive]
    w = eval_kernel(k, offs * h) * h ** (2 * k.dim)
    keep = w > 0
    return offs[keep].astype(int), np.asarray(w)[keep]
