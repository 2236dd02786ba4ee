"""Lattices, domain masks and grid functions.

A `Grid` is the uniform lattice over the box [-L, L]^n with m nodes per axis.
A `DomainMask` selects the interior nodes of a bounded open set; every other
lattice node (and every off-lattice point) carries the value zero, which is how
the exterior Dirichlet condition of the mixed operator is represented.
Functions live on the interior nodes only and integrate with the node weight h^n.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

_SNAP = 1e-9


class DomainError(ValueError):
    """Raised for invalid grids, masks or mismatched grid functions."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _snap(x: float) -> float:
    # snap values within rounding noise of an integer so that lattice
    # translations and rescalings select identical node sets
    r = round(x)
    return float(r) if abs(x - r) < _SNAP * max(1.0, abs(x)) else x


@dataclass(frozen=True)
class Grid:
    n: int
    L: float
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise DomainError(f"dimension must be an integer >= 3, got {self.n}")
        if int(self.m) != self.m or self.m < 3 or self.m % 2 == 0:
            raise DomainError(f"resolution must be odd and >= 3, got {self.m}")
        if not (math.isfinite(self.L) and self.L > 0):
            raise DomainError(f"half width must be positive, got {self.L}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.m - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.n

    @property
    def num_nodes(self) -> int:
        return self.m ** self.n

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.m)

    def index_array(self) -> np.ndarray:
        """Integer multi-indices of all nodes, row-major, shape (m^n, n)."""
        idx = np.indices(self.shape).reshape(self.n, -1).T
        return idx

    def coords(self, index: np.ndarray | None = None) -> np.ndarray:
        index = self.index_array() if index is None else np.asarray(index)
        return -self.L + self.h * index

    def to_dict(self) -> dict:
        return {"n": self.n, "L": self.L, "m": self.m}


def build_grid(n: int, L: float, m: int) -> Grid:
    return Grid(n, L, m)


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Interior-node selection on a grid plus a descriptor of the domain.

    The descriptor is a JSON-compatible dict: ``{"kind": "ball", "center",
    "radius"}``, ``{"kind": "box", "center", "half_widths"}`` or
    ``{"kind": "predicate", "name"}``. Predicate masks keep their node set in
    the serialized form since the closure itself cannot be stored.
    """

    grid: Grid
    interior: np.ndarray
    descriptor: dict
    _contains: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        interior = np.asarray(self.interior, dtype=bool).reshape(self.grid.shape)
        if not interior.any():
            raise DomainError("domain mask has no interior nodes")
        edge = np.zeros(self.grid.shape, dtype=bool)
        for k in range(self.grid.n):
            sl = [slice(None)] * self.grid.n
            sl[k] = 0
            edge[tuple(sl)] = True
            sl[k] = -1
            edge[tuple(sl)] = True
        if (interior & edge).any():
            raise DomainError("interior nodes touch the box boundary; a one-node margin is required")
        object.__setattr__(self, "interior", _readonly(interior))
        flat = np.flatnonzero(interior.ravel())
        object.__setattr__(self, "flat_index", _readonly(flat))

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def num_interior(self) -> int:
        return int(self.flat_index.size)

    @property
    def measure(self) -> float:
        """|Omega| by node counting."""
        return self.num_interior * self.grid.h ** self.grid.n

    @property
    def node_weight(self) -> float:
        return self.grid.h ** self.grid.n

    def multi_index(self) -> np.ndarray:
        return np.stack(np.unravel_index(self.flat_index, self.grid.shape), axis=1)

    def points(self) -> np.ndarray:
        return self.grid.coords(self.multi_index())

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Continuous membership test for arbitrary points (ball/box/predicate)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self._contains is not None:
            return np.asarray(self._contains(x), dtype=bool)
        kind = self.descriptor["kind"]
        c = np.asarray(self.descriptor.get("center", [0.0] * self.n))
        if kind == "ball":
            return np.linalg.norm(x - c, axis=1) < self.descriptor["radius"]
        if kind == "box":
            hw = np.asarray(self.descriptor["half_widths"])
            return np.all(np.abs(x - c) < hw, axis=1)
        raise DomainError("predicate mask has no stored membership closure")

    def key(self) -> str:
        """Content hash of grid, descriptor and node set."""
        d = hashlib.sha256()
        d.update(json.dumps(self.grid.to_dict(), sort_keys=True).encode())
        d.update(json.dumps(self.descriptor, sort_keys=True).encode())
        d.update(self.flat_index.astype("<i8").tobytes())
        return d.hexdigest()

    def to_dict(self) -> dict:
        out = dict(self.grid.to_dict())
        out["domain"] = dict(self.descriptor)
        if self.descriptor["kind"] == "predicate":
            out["interior_indices"] = self.flat_index.tolist()
        return out

    def same_as(self, other: "DomainMask") -> bool:
        return other is self or (
            other.grid == self.grid and np.array_equal(other.flat_index, self.flat_index)
        )


def _center_index(grid: Grid, center: Sequence[float]) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    if c.shape != (grid.n,):
        raise DomainError(f"center must have {grid.n} coordinates")
    return np.array([_snap(v) for v in (c + grid.L) / grid.h])


def mask_ball(grid: Grid, center: Sequence[float] | None, radius: float) -> DomainMask:
    """Nodes with |x - center| < radius."""
    center = [0.0] * grid.n if center is None else list(map(float, center))
    if not radius > 0:
        raise DomainError("radius must be positive")
    if radius < grid.h:
        raise DomainError(f"ball radius {radius} is below the lattice spacing {grid.h}; the domain is unresolved")
    margin = grid.L - grid.h
    if max(abs(c) for c in center) + radius > margin * (1 + 1e-12):
        raise DomainError(
            f"ball (radius {radius}) does not fit inside the box with a one-node margin (L - h = {margin})"
        )
    ci = _center_index(grid, center)
    r_idx2 = _snap((radius / grid.h) ** 2)
    d2 = np.zeros(grid.shape)
    for k in range(grid.n):
        shape = [1] * grid.n
        shape[k] = grid.m
        d2 = d2 + ((np.arange(grid.m) - ci[k]) ** 2).reshape(shape)
    interior = d2 < r_idx2
    if not interior.any():
        raise DomainError("ball contains no lattice node")
    desc = {"kind": "ball", "center": center, "radius": float(radius)}
    return DomainMask(grid, interior, desc)


def mask_box(grid: Grid, half_widths: Sequence[float], center: Sequence[float] | None = None) -> DomainMask:
    """Nodes with |x_k - c_k| < half_widths_k for every axis."""
    center = [0.0] * grid.n if center is None else list(map(float, center))
    hw = [float(v) for v in half_widths]
    if len(hw) != grid.n or min(hw) <= 0:
        raise DomainError("half_widths must be positive, one per axis")
    margin = grid.L - grid.h
    if any(abs(c) + w > margin * (1 + 1e-12) for c, w in zip(center, hw)):
        raise DomainError(f"box does not fit inside the grid with a one-node margin (L - h = {margin})")
    ci = _center_index(grid, center)
    interior = np.ones(grid.shape, dtype=bool)
    for k in range(grid.n):
        shape = [1] * grid.n
        shape[k] = grid.m
        lim = _snap(hw[k] / grid.h)
        interior = interior & (np.abs(np.arange(grid.m) - ci[k]) < lim).reshape(shape)
    if not interior.any():
        raise DomainError("box contains no lattice node")
    desc = {"kind": "box", "center": center, "half_widths": hw}
    return DomainMask(grid, interior, desc)


def mask_predicate(grid: Grid, predicate: Callable[[np.ndarray], np.ndarray], name: str = "predicate") -> DomainMask:
    """Nodes where a vectorized predicate on (N, n) coordinate arrays is true."""
    inside = np.asarray(predicate(grid.coords()), dtype=bool).reshape(grid.shape)
    return DomainMask(grid, inside, {"kind": "predicate", "name": name}, _contains=predicate)


def is_star_shaped(mask: DomainMask, center: Sequence[float] | None = None, samples: int = 32) -> bool:
    """Check that each interior node sees ``center`` along a segment inside the domain."""
    c = np.zeros(mask.n) if center is None else np.asarray(center, dtype=float)
    if not mask.contains(c[None, :])[0]:
        return False
    pts = mask.points()
    for t in np.linspace(0.0, 1.0, samples + 1)[1:]:
        if not mask.contains(c + t * (pts - c)).all():
            return False
    return True


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values on the interior nodes of a mask; zero everywhere else."""

    mask: DomainMask
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.mask.num_interior:
            raise DomainError(f"expected {self.mask.num_interior} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid function values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    def full(self) -> np.ndarray:
        out = np.zeros(self.mask.grid.num_nodes)
        out[self.mask.flat_index] = self.values
        return out.reshape(self.mask.grid.shape)

    def at_node(self, index: Sequence[int]) -> float:
        idx = tuple(int(i) for i in index)
        if any(i < 0 or i >= self.mask.grid.m for i in idx):
            return 0.0
        return float(self.full()[idx])

    def _check(self, other: "GridFunction") -> None:
        if not self.mask.same_as(other.mask):
            raise DomainError("grid functions live on different masks")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.mask, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.mask, self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.mask, float(c) * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.mask, -self.values)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.mask, values)

    def to_dict(self) -> dict:
        out = self.mask.to_dict()
        out["values"] = self.full().ravel().tolist()
        return out


def sample(mask: DomainMask, f: Callable, vectorized: bool = True) -> GridFunction:
    """Evaluate ``f`` at the interior nodes.

    With ``vectorized=True`` ``f`` receives the (N, n) array of node
    coordinates; otherwise it is called once per node with a length-n array.
    """
    pts = mask.points()
    if vectorized:
        vals = np.asarray(f(pts), dtype=float).reshape(-1)
    else:
        vals = np.array([float(f(p)) for p in pts])
    if vals.size != pts.shape[0]:
        raise DomainError("sampled function returned the wrong number of values")
    if not np.all(np.isfinite(vals)):
        raise DomainError("sampled function is not finite on the interior nodes")
    return GridFunction(mask, vals)


def lq_norm(u: GridFunction, q: float) -> float:
    """(sum |u_i|^q h^n)^(1/q)."""
    if not math.isfinite(q):
        raise DomainError("q must be finite")
    if q < 1:
        raise DomainError(f"q must be >= 1, got {q}")
    a = np.abs(u.values)
    top = a.max(initial=0.0)
    if top == 0.0:
        return 0.0
    # scale before powering to avoid overflow for large q
    return float(top * (np.sum((a / top) ** q) * u.mask.node_weight) ** (1.0 / q))


def two_star(n: int) -> Fraction:
    if int(n) != n or n < 3:
        raise DomainError(f"critical exponent needs n >= 3, got {n}")
    return Fraction(2 * int(n), int(n) - 2)


def mask_from_dict(d: dict) -> DomainMask:
    grid = Grid(d["n"], d["L"], d["m"])
    dom = d["domain"]
    kind = dom["kind"]
    if kind == "ball":
        return mask_ball(grid, dom["center"], dom["radius"])
    if kind == "box":
        return mask_box(grid, dom["half_widths"], dom.get("center"))
    if kind == "predicate":
        interior = np.zeros(grid.num_nodes, dtype=bool)
        interior[np.asarray(d["interior_indices"], dtype=np.int64)] = True
        return DomainMask(grid, interior.reshape(grid.shape), dict(dom))
    raise DomainError(f"unknown domain kind {kind!r}")


def function_from_dict(d: dict) -> GridFunction:
    mask = mask_from_dict(d)
    full = np.asarray(d["values"], dtype=float)
    if full.size != mask.grid.num_nodes:
        raise DomainError("values must cover every lattice node")
    outside = np.ones(full.size, dtype=bool)
    outside[mask.flat_index] = False
    if np.any(full[outside] != 0.0):
        raise DomainError("nonzero values outside the domain")
    return GridFunction(mask, full[mask.flat_index])


def to_json(obj: Grid | DomainMask | GridFunction) -> str:
    return json.dumps(obj.to_dict())


def from_json(text: str) -> Grid | DomainMask | GridFunction:
    d = json.loads(text)
    if "values" in d:
        return function_from_dict(d)
    if "domain" in d:
        return mask_from_dict(d)
    return Grid(d["n"], d["L"], d["m"])
