"""Discrete Dirichlet energy, Gagliardo energy and the mixed norm rho^2.

For functions vanishing outside the domain the Gagliardo double integral splits
into an interaction over interior pairs and a confinement potential

    [u]^2 = sum_{i != j} (u_i - u_j)^2 w_ij + 2 sum_i kappa_i u_i^2 h^n,

with w_ij = h^(2n) |x_i - x_j|^-(n+2s) and kappa the exterior integral of the
kernel, computed as a lattice sum within radius R plus the analytic far tail.
The kernel carries no normalizing prefactor.

Node-value quadrature drops the singular i = j cell. Its leading contribution
is proportional to h^(2-2s) times the Dirichlet energy, with a coefficient given
by the continued Epstein zeta of the lattice. By default that term is added
back (``self_cell=True``); it keeps the form symmetric positive definite and
preserves the exact scaling law of the Gagliardo part.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .domain_grid import DomainError, DomainMask, GridFunction
from .lattice import lattice_power_sum, self_cell_coefficient, sphere_area

_BLOCK_BYTES = 32 * 2 ** 20


class FormsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MixedForms:
    mask: DomainMask
    s: float
    tail_radius: float
    lattice_constant: float  # S_R + analytic tail: the kernel integral over |z| > 0 seen by a node
    tail_constant: float
    weights: np.ndarray = field(repr=False)  # dense symmetric N x N, zero diagonal
    row_sums: np.ndarray = field(repr=False)
    kappa: np.ndarray = field(repr=False)
    stiffness: sp.csr_matrix = field(repr=False)  # u^T K u = Dirichlet energy
    self_cell: float  # coefficient multiplying the Dirichlet energy inside [u]^2

    @property
    def n(self) -> int:
        return self.mask.n

    @property
    def h(self) -> float:
        return self.mask.h

    @property
    def size(self) -> int:
        return self.mask.num_interior

    @property
    def node_weight(self) -> float:
        return self.mask.node_weight

    def _values(self, u) -> np.ndarray:
        if isinstance(u, GridFunction):
            if not self.mask.same_as(u.mask):
                raise DomainError("grid function is defined on a different mask")
            return u.values
        v = np.asarray(u, dtype=float)
        if v.shape != (self.size,):
            raise DomainError(f"expected a vector of length {self.size}")
        return v

    # --- matrix-vector actions in energy scaling (no 1/h^n) ---

    def local_matvec(self, v: np.ndarray) -> np.ndarray:
        return self.stiffness @ v

    def fractional_matvec(self, v: np.ndarray) -> np.ndarray:
        out = 2.0 * (self.row_sums * v - self.weights @ v) + 2.0 * self.node_weight * self.kappa * v
        if self.self_cell:
            out += self.self_cell * (self.stiffness @ v)
        return out

    def mixed_matvec(self, v: np.ndarray) -> np.ndarray:
        return self.local_matvec(v) + self.fractional_matvec(v)

    def diagonal(self, which: str = "mixed") -> np.ndarray:
        kd = self.stiffness.diagonal()
        frac = 2.0 * self.row_sums + 2.0 * self.node_weight * self.kappa + self.self_cell * kd
        return {"local": kd, "fractional": frac, "mixed": kd + frac}[which]

    def energy_matrix(self, which: str = "mixed") -> np.ndarray:
        """Dense energy matrix (u^T M u = energy); meant for small problems and checks."""
        K = self.stiffness.toarray()
        frac = (
            2.0 * (np.diag(self.row_sums) - self.weights)
            + np.diag(2.0 * self.node_weight * self.kappa)
            + self.self_cell * K
        )
        return {"local": K, "fractional": frac, "mixed": K + frac}[which]


def _stiffness(mask: DomainMask) -> sp.csr_matrix:
    grid = mask.grid
    n, m = grid.n, grid.m
    pos = -np.ones(grid.num_nodes, dtype=np.int64)
    pos[mask.flat_index] = np.arange(mask.num_interior)
    pos = pos.reshape(grid.shape)
    idx = mask.multi_index()
    N = mask.num_interior
    rows, cols = [np.arange(N)], [np.arange(N)]
    vals = [np.full(N, 2.0 * n)]
    for k in range(n):
        for step in (-1, 1):
            nb = idx.copy()
            nb[:, k] += step
            j = pos[tuple(nb.T)]
            ok = j >= 0
            rows.append(np.arange(N)[ok])
            cols.append(j[ok])
            vals.append(-np.ones(ok.sum()))
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    ).tocsr()
    K.sum_duplicates()
    return K * grid.h ** (n - 2)


def _weight_table(n: int, s: float, h: float, qmax: int) -> np.ndarray:
    q = np.arange(qmax + 1, dtype=float)
    tab = np.zeros(qmax + 1)
    tab[1:] = h ** (n - 2.0 * s) * q[1:] ** (-(n + 2.0 * s) / 2.0)
    return tab


def _squared_offsets(idx: np.ndarray, i0: int, i1: int) -> np.ndarray:
    d = idx[i0:i1, None, :] - idx[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def _interaction_weights(mask: DomainMask, s: float) -> np.ndarray:
    # weights depend only on the integer squared offset, so W is exactly symmetric
    idx = mask.multi_index().astype(np.int64)
    N = idx.shape[0]
    n, h = mask.n, mask.h
    tab = _weight_table(n, s, h, n * (mask.grid.m - 1) ** 2)
    W = np.empty((N, N))
    block = max(1, _BLOCK_BYTES // (8 * n * N))
    for i0 in range(0, N, block):
        i1 = min(N, i0 + block)
        W[i0:i1] = tab[_squared_offsets(idx, i0, i1)]
    return W


def _cache_path(cache_dir: str | os.PathLike, mask: DomainMask, s: float) -> Path:
    key = f"{mask.n}|{mask.grid.L!r}|{mask.grid.m}|{mask.key()}|{float(s)!r}"
    return Path(cache_dir) / f"weights-{hashlib.sha256(key.encode()).hexdigest()[:32]}.bin"


def _load_weights(path: Path, N: int) -> np.ndarray | None:
    if not path.exists():
        return None
    upper = np.fromfile(path, dtype="<f8")
    if upper.size != N * (N - 1) // 2:
        return None
    W = np.zeros((N, N))
    iu = np.triu_indices(N, 1)
    W[iu] = upper
    W.T[iu] = upper
    return W


def _store_weights(path: Path, W: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    W[np.triu_indices(W.shape[0], 1)].astype("<f8").tofile(tmp)
    os.replace(tmp, path)


def assemble(
    mask: DomainMask,
    s: float,
    tail_radius: float | None = None,
    self_cell: bool = True,
    cache_dir: str | os.PathLike | None = None,
) -> MixedForms:
    """Assemble the local and nonlocal forms on ``mask`` for order ``s``.

    ``tail_radius`` (default 2L) bounds the lattice part of the confinement
    sum; beyond it the kernel is integrated exactly. With ``cache_dir`` the
    interaction weights are read from / written to a binary cache.
    """
    if not (0.0 < s < 1.0):
        raise FormsError(f"fractional order must lie in (0, 1), got {s}")
    if mask.num_interior == 0:
        raise FormsError("empty mask")
    n, h = mask.n, mask.h
    R = 2.0 * mask.grid.L if tail_radius is None else float(tail_radius)
    if R <= h:
        raise FormsError("tail radius must exceed the grid spacing")
    N = mask.num_interior

    W = None
    path = None
    if cache_dir is not None:
        path = _cache_path(cache_dir, mask, s)
        W = _load_weights(path, N)
    if W is None:
        W = _interaction_weights(mask, s)
        if path is not None:
            _store_weights(path, W)
    W.setflags(write=False)

    tail = sphere_area(n) / (2.0 * s * R ** (2.0 * s))
    lattice = h ** (-2.0 * s) * lattice_power_sum(n, R / h, n + 2.0 * s)
    c0 = lattice + tail
    # exterior lattice nodes within R plus the far tail, with interior nodes
    # beyond R (if any) removed from the tail by the same lattice quadrature
    row_sums = W.sum(axis=1)
    kappa = c0 - row_sums / h ** n
    if np.any(kappa < 0):
        raise FormsError("negative confinement potential; tail radius too small")
    coef = self_cell_coefficient(n, s) / n * h ** (2.0 - 2.0 * s) if self_cell else 0.0
    return MixedForms(
        mask=mask,
        s=float(s),
        tail_radius=R,
        lattice_constant=c0,
        tail_constant=tail,
        weights=W,
        row_sums=row_sums,
        kappa=kappa,
        stiffness=_stiffness(mask),
        self_cell=coef,
    )


def dirichlet_energy(forms: MixedForms, u) -> float:
    """Sum over lattice edges of (difference)^2 h^(n-2); exterior nodes read as 0."""
    v = forms._values(u)
    full = np.zeros(forms.mask.grid.num_nodes)
    full[forms.mask.flat_index] = v
    full = full.reshape(forms.mask.grid.shape)
    total = 0.0
    for k in range(forms.n):
        total += np.sum(np.diff(full, axis=k) ** 2)
    return float(total * forms.h ** (forms.n - 2))


@dataclass(frozen=True)
class GagliardoParts:
    interaction: float
    confinement: float
    self_cell: float

    @property
    def total(self) -> float:
        return self.interaction + self.confinement + self.self_cell


def gagliardo_parts(forms: MixedForms, u) -> GagliardoParts:
    v = forms._values(u)
    N = v.size
    block = max(1, _BLOCK_BYTES // (8 * max(N, 1)))
    acc = []
    for i0 in range(0, N, block):
        i1 = min(N, i0 + block)
        d = v[i0:i1, None] - v[None, :]
        acc.append(np.sum(d * d * forms.weights[i0:i1]))
    inter = float(np.sum(acc))
    conf = float(2.0 * forms.node_weight * np.sum(forms.kappa * v * v))
    corr = forms.self_cell * dirichlet_energy(forms, v) if forms.self_cell else 0.0
    return GagliardoParts(inter, conf, corr)


def gagliardo_energy(forms: MixedForms, u) -> float:
    return gagliardo_parts(forms, u).total


def rho_squared(forms: MixedForms, u) -> float:
    return dirichlet_energy(forms, u) + gagliardo_energy(forms, u)


def apply_operator(forms: MixedForms, u) -> GridFunction:
    """Nodewise action A u with <A u, v> h^n equal to the mixed bilinear pairing."""
    v = forms._values(u)
    return GridFunction(forms.mask, forms.mixed_matvec(v) / forms.node_weight)


def embedding_constant_probe(forms: MixedForms, u) -> float:
    """[u]^2 / (||u||_2^2 + ||grad u||_2^2)."""
    v = forms._values(u)
    l2 = float(np.sum(v * v) * forms.node_weight)
    if l2 == 0.0:
        raise FormsError("probe needs a nonzero function")
    return gagliardo_energy(forms, v) / (l2 + dirichlet_energy(forms, v))
