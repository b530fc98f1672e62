"""Cell-centred grids, domain masks and grid functions.

A domain is realised as the set of cells whose centres fall inside it; the
discrete domain is the union of those cells, so its measure is simply
``count * h**dim``.  Around the bounding box of the domain we keep a collar
of ``pad`` empty cells, wide enough for the nonlocal kernel to see the zero
extension of every field.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMask, InvalidSpec, ZeroField

SHAPES = ("interval", "intervals", "box", "ball", "balls", "annulus", "custom")


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    h: float
    origin: tuple
    pad: int
    shape: tuple

    @property
    def cell_volume(self):
        return self.h ** self.dim

    def axes(self):
        """Cell-centre coordinates along each axis."""
        return [self.origin[a] + (np.arange(self.shape[a]) + 0.5) * self.h
                for a in range(self.dim)]

    def centers(self):
        """Array of shape ``(*shape, dim)`` with every cell centre."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def header(self):
        return {"dim": self.dim, "n": self.n, "h": self.h, "pad": self.pad,
                "origin": list(self.origin), "shape": list(self.shape)}


@dataclass(frozen=True)
class DomainSpec:
    shape: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InvalidSpec(f"unknown shape {self.shape!r}")

    @property
    def dim(self):
        return _spec_dim(self)

    def to_json(self):
        params = dict(self.params)
        if "mask" in params:
            params["mask"] = np.asarray(params["mask"]).astype(int).tolist()
        return {"shape": self.shape, "params": params}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        if set(obj) - {"shape", "params"}:
            raise InvalidSpec(f"unexpected keys {sorted(set(obj) - {'shape', 'params'})}")
        return cls(obj["shape"], dict(obj.get("params", {})))

    # convenience constructors
    @classmethod
    def interval(cls, a, b):
        return cls("interval", {"a": a, "b": b})

    @classmethod
    def intervals(cls, pieces):
        return cls("intervals", {"intervals": [list(p) for p in pieces]})

    @classmethod
    def box(cls, lower, upper):
        return cls("box", {"lower": list(lower), "upper": list(upper)})

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", {"center": list(np.atleast_1d(center)), "radius": radius})

    @classmethod
    def balls(cls, centers, radius):
        return cls("balls", {"centers": [list(np.atleast_1d(c)) for c in centers],
                             "radius": radius})

    @classmethod
    def annulus(cls, center, r_inner, r_outer):
        return cls("annulus", {"center": list(np.atleast_1d(center)),
                               "r_inner": r_inner, "r_outer": r_outer})

    @classmethod
    def custom(cls, mask, h, lower=None):
        mask = np.asarray(mask, dtype=bool)
        params = {"mask": mask, "h": h}
        if lower is not None:
            params["lower"] = list(lower)
        return cls("custom", params)


def _spec_dim(spec):
    p = spec.params
    if spec.shape in ("interval", "intervals"):
        return 1
    if spec.shape == "box":
        return len(p["lower"])
    if spec.shape in ("ball", "annulus"):
        return len(np.atleast_1d(p["center"]))
    if spec.shape == "balls":
        return len(np.atleast_1d(p["centers"][0]))
    return np.asarray(p["mask"]).ndim


def _bounding_box(spec):
    """Lower and upper corners of the domain, validating geometry on the way."""
    p = spec.params
    s = spec.shape
    if s == "interval":
        a, b = float(p["a"]), float(p["b"])
        if not a < b:
            raise InvalidSpec("interval needs a < b")
        return np.array([a]), np.array([b])
    if s == "intervals":
        pieces = [(float(a), float(b)) for a, b in p["intervals"]]
        if not pieces or any(not a < b for a, b in pieces):
            raise InvalidSpec("every interval needs a < b")
        return np.array([min(a for a, _ in pieces)]), np.array([max(b for _, b in pieces)])
    if s == "box":
        lo, hi = np.asarray(p["lower"], float), np.asarray(p["upper"], float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise InvalidSpec("box needs lower < upper on every axis")
        return lo, hi
    if s == "ball":
        c, r = np.atleast_1d(np.asarray(p["center"], float)), float(p["radius"])
        if not r > 0:
            raise InvalidSpec("ball radius must be positive")
        return c - r, c + r
    if s == "balls":
        cs = np.atleast_2d(np.asarray(p["centers"], float))
        r = float(p["radius"])
        if not r > 0 or len(cs) == 0:
            raise InvalidSpec("balls need a positive radius and at least one centre")
        return cs.min(axis=0) - r, cs.max(axis=0) + r
    if s == "annulus":
        c = np.atleast_1d(np.asarray(p["center"], float))
        ri, ro = float(p["r_inner"]), float(p["r_outer"])
        if not 0 <= ri < ro:
            raise InvalidSpec("annulus needs 0 <= r_inner < r_outer")
        return c - ro, c + ro
    raise InvalidSpec(f"no bounding box for {s!r}")


def _inside(spec, pts):
    """Boolean membership of points ``pts`` (shape (..., dim)) in the open domain."""
    p = spec.params
    s = spec.shape
    if s == "interval":
        x = pts[..., 0]
        return (x > p["a"]) & (x < p["b"])
    if s == "intervals":
        x = pts[..., 0]
        out = np.zeros(x.shape, dtype=bool)
        for a, b in p["intervals"]:
            out |= (x > a) & (x < b)
        return out
    if s == "box":
        lo, hi = np.asarray(p["lower"], float), np.asarray(p["upper"], float)
        return np.all((pts > lo) & (pts < hi), axis=-1)
    if s == "ball":
        c = np.atleast_1d(np.asarray(p["center"], float))
        return np.sum((pts - c) ** 2, axis=-1) < float(p["radius"]) ** 2
    if s == "balls":
        out = np.zeros(pts.shape[:-1], dtype=bool)
        for c in np.atleast_2d(np.asarray(p["centers"], float)):
            out |= np.sum((pts - c) ** 2, axis=-1) < float(p["radius"]) ** 2
        return out
    if s == "annulus":
        c = np.atleast_1d(np.asarray(p["center"], float))
        d2 = np.sum((pts - c) ** 2, axis=-1)
        return (d2 > float(p["r_inner"]) ** 2) & (d2 < float(p["r_outer"]) ** 2)
    raise InvalidSpec(f"no membership test for {s!r}")


def padding_for(kernel_radius, h):
    """Collar width in cells: at least one cell, and pad*h >= kernel radius."""
    if kernel_radius < 0:
        raise InvalidSpec("kernel_radius must be >= 0")
    return max(1, int(math.ceil(kernel_radius / h - 1e-9)))


def build_domain(spec, resolution, kernel_radius=0.0, *, spacing=None, margin=0):
    """Realise ``spec`` on a padded cell-centred grid.

    ``resolution`` is the number of cells across the longest side of the
    domain's bounding box; ``spacing`` overrides it with an explicit ``h``
    (useful when several domains must share one spacing).  ``margin`` adds
    extra empty cells beyond the kernel collar.  Returns ``(grid, mask)``.
    """
    if spec.shape == "custom":
        return _build_custom(spec, kernel_radius, margin)
    if spacing is None and int(resolution) < 4:
        raise InvalidSpec("resolution must be >= 4")
    lo, hi = _bounding_box(spec)
    extent = hi - lo
    h = float(spacing) if spacing is not None else float(extent.max()) / int(resolution)
    if not h > 0:
        raise InvalidSpec("spacing must be positive")
    cells = [max(1, int(math.ceil(e / h - 1e-9))) for e in extent]
    pad = padding_for(kernel_radius, h) + int(margin)
    mid = 0.5 * (lo + hi)
    origin = tuple(float(mid[a] - 0.5 * cells[a] * h - pad * h) for a in range(len(cells)))
    shape = tuple(c + 2 * pad for c in cells)
    n = int(resolution) if spacing is None else max(cells)
    grid = Grid(len(cells), n, h, origin, pad, shape)
    mask = _inside(spec, grid.centers())
    if not mask.any():
        raise EmptyMask(f"no cell centre falls inside {spec.shape}")
    mask.setflags(write=False)
    return grid, mask


def _build_custom(spec, kernel_radius, margin):
    core = np.asarray(spec.params["mask"], dtype=bool)
    if core.ndim not in (1, 2):
        raise InvalidSpec("custom masks must be 1-D or 2-D")
    h = float(spec.params["h"])
    if not h > 0:
        raise InvalidSpec("custom mask spacing must be positive")
    if not core.any():
        raise EmptyMask("custom mask is empty")
    pad = padding_for(kernel_radius, h) + int(margin)
    lower = spec.params.get("lower", [0.0] * core.ndim)
    origin = tuple(float(lower[a]) - pad * h for a in range(core.ndim))
    mask = np.pad(core, pad)
    mask.setflags(write=False)
    grid = Grid(core.ndim, max(core.shape), h, origin, pad, mask.shape)
    return grid, mask


def measure(mask, h):
    """Measure of the discrete domain: number of mask cells times h**dim."""
    mask = np.asarray(mask, dtype=bool)
    return float(np.count_nonzero(mask)) * h ** mask.ndim


def components(mask):
    """Label connected components of ``mask`` using 2N-neighbour adjacency."""
    from scipy import ndimage

    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    labels, count = ndimage.label(mask, structure=structure)
    return labels, count


def is_connected(mask):
    return components(mask)[1] == 1


@dataclass(frozen=True, eq=False)
class Field:
    """Grid function vanishing outside its mask."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.shape != tuple(self.grid.shape) or mask.shape != values.shape:
            raise InvalidSpec(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if np.any(values[~mask] != 0.0):
            raise ValueError("field must vanish outside its mask")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def zeros(cls, grid, mask):
        return cls(grid, np.zeros(grid.shape), mask)

    @classmethod
    def from_vector(cls, grid, mask, vec):
        """Scatter a vector of mask-cell values (C order) into a field."""
        values = np.zeros(grid.shape)
        values[mask] = vec
        return cls(grid, values, mask)

    @classmethod
    def from_function(cls, grid, mask, fn):
        pts = grid.centers()
        values = np.where(mask, fn(*np.moveaxis(pts, -1, 0)), 0.0)
        return cls(grid, values, mask)

    def vector(self):
        """Mask-cell values in C order."""
        return self.values[self.mask]

    def with_values(self, values):
        return Field(self.grid, np.where(self.mask, values, 0.0), self.mask)

    def with_mask(self, mask):
        """Same values viewed on another mask (values must vanish off it)."""
        return Field(self.grid, self.values, mask)

    def __neg__(self):
        return Field(self.grid, -self.values, self.mask)

    def scaled(self, t):
        return Field(self.grid, t * self.values, self.mask)


def lp_norm(u, p):
    if p < 1:
        raise ValueError("p must be >= 1")
    total = np.sum(np.abs(u.values) ** p) * u.grid.cell_volume
    return float(total ** (1.0 / p))


def normalize(u, p):
    nrm = lp_norm(u, p)
    if nrm == 0.0:
        raise ZeroField("cannot normalise the zero field")
    return Field(u.grid, u.values / nrm, u.mask)


def split_signs(u):
    """Positive and negative parts plus the masks of {u > 0} and {u < 0}."""
    plus = np.maximum(u.values, 0.0)
    minus = np.maximum(-u.values, 0.0)
    return (Field(u.grid, plus, u.mask), Field(u.grid, minus, u.mask),
            u.values > 0, u.values < 0)


def dump_field_csv(u, path=None):
    """CSV dump: a ``dim,n,h,pad`` header block then one row per cell."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dim", "n", "h", "pad"])
    w.writerow([u.grid.dim, u.grid.n, repr(u.grid.h), u.grid.pad])
    coords = ["x", "y"][: u.grid.dim]
    w.writerow(["index", *coords, "value", "in_mask"])
    centers = u.grid.centers().reshape(-1, u.grid.dim)
    vals = u.values.ravel()
    inm = u.mask.ravel()
    for i in range(vals.size):
        w.writerow([i, *(repr(float(c)) for c in centers[i]), repr(float(vals[i])), int(inm[i])])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def load_field_csv(text, origin=None):
    """Inverse of :func:`dump_field_csv` (grid origin recovered from the centres)."""
    rows = list(csv.reader(io.StringIO(text)))
    dim, n, h, pad = int(rows[1][0]), int(rows[1][1]), float(rows[1][2]), int(rows[1][3])
    body = np.array([[float(x) for x in r] for r in rows[3:]])
    coords = body[:, 1:1 + dim]
    axes = [np.unique(coords[:, a]) for a in range(dim)]
    shape = tuple(len(ax) for ax in axes)
    if origin is None:
        origin = tuple(float(ax[0] - 0.5 * h) for ax in axes)
    grid = Grid(dim, n, h, tuple(origin), pad, shape)
    values = body[:, 1 + dim].reshape(shape)
    mask = body[:, 2 + dim].reshape(shape).astype(bool)
    return Field(grid, values, mask)
