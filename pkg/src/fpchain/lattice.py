"""Regular grids on the box [-K, K]^d and potentials evaluated on them.

Design notes
------------
States are the centers of the cubic cells of an axis-aligned partition of
[-K, K]^d with mesh width h.  Along each axis the centers are

    -K + h*n - h/2,   n = 1, ..., 2K/h,

so 2K/h must be an integer.  Cells are addressed either by a 1-based
multi-index (n_1, ..., n_d) or by a flat 0-based index; the flat order is
row-major over (n_1, ..., n_d) with axis 1 varying fastest.

A ``Potential`` bundles a vectorized evaluation callable with optional
analytic gradient/Hessian and structural metadata (additivity, convexity
modulus) that downstream contraction theorems need.  Derivatives fall back
to central differences when no analytic form is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GridSpec",
    "CellIndex",
    "Move",
    "NULL_MOVE",
    "Potential",
    "build_grid",
    "axis_moves",
    "move_row",
    "cell_average",
    "cell_average_all",
    "check_diag_dominance",
]


# --------------------------------------------------------------------------
# moves

@dataclass(frozen=True, order=True)
class Move:
    """A signed coordinate direction; axis is 1-based, sign in {-1, +1}.

    The null move (axis=0, sign=0) stands for "stay put" and is only used
    by couplings, where one component may idle while the other jumps.
    """

    axis: int
    sign: int

    def __post_init__(self) -> None:
        if self.axis == 0 and self.sign == 0:
            return
        if self.axis < 1 or self.sign not in (-1, 1):
            raise ValueError(f"bad move ({self.axis}, {self.sign})")

    @property
    def is_null(self) -> bool:
        return self.axis == 0

    def opposite(self) -> "Move":
        if self.is_null:
            return self
        return Move(self.axis, -self.sign)

    def __str__(self) -> str:
        if self.is_null:
            return "e"
        return f"{'+' if self.sign > 0 else '-'}_{self.axis}"

    @classmethod
    def parse(cls, text: str) -> "Move":
        text = text.strip()
        if text == "e":
            return NULL_MOVE
        sign = {"+": 1, "-": -1}.get(text[0])
        if sign is None or "_" not in text:
            raise ValueError(f"cannot parse move {text!r}")
        return cls(int(text.split("_", 1)[1]), sign)


NULL_MOVE = Move(0, 0)


def axis_moves(d: int) -> list[Move]:
    """All 2d signed moves in fixed row order: (+_1, -_1, +_2, -_2, ...)."""
    out = []
    for j in range(1, d + 1):
        out.append(Move(j, +1))
        out.append(Move(j, -1))
    return out


def move_row(move: Move) -> int:
    """Row index of a non-null move in rate tables: 2*(axis-1) + (sign<0)."""
    if move.is_null:
        raise ValueError("null move has no rate row")
    return 2 * (move.axis - 1) + (0 if move.sign > 0 else 1)


# --------------------------------------------------------------------------
# grid

@dataclass(frozen=True)
class GridSpec:
    """Cubic-cell partition of [-K, K]^d with mesh width h."""

    d: int
    K: float
    h: float
    n_per_axis: int

    @property
    def n_states(self) -> int:
        return self.n_per_axis**self.d

    def axis_centers(self) -> np.ndarray:
        n = np.arange(1, self.n_per_axis + 1)
        return -self.K + self.h * n - self.h / 2.0

    def centers(self) -> np.ndarray:
        """(n_states, d) array of cell centers in flat order."""
        return _centers_cached(self)

    def multi_to_flat(self, multi: Sequence[int]) -> int:
        if len(multi) != self.d:
            raise ValueError(f"multi-index needs {self.d} entries, got {len(multi)}")
        flat = 0
        for j in reversed(range(self.d)):
            nj = multi[j]
            if not 1 <= nj <= self.n_per_axis:
                raise ValueError(f"multi-index {tuple(multi)} outside grid")
            flat = flat * self.n_per_axis + (nj - 1)
        return flat

    def flat_to_multi(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.n_states:
            raise ValueError(f"flat index {flat} outside grid")
        digits = []
        for _ in range(self.d):
            digits.append(flat % self.n_per_axis + 1)
            flat //= self.n_per_axis
        return tuple(digits)

    def cell(self, index) -> "CellIndex":
        """Coerce an int flat index, multi-index tuple, or CellIndex."""
        if isinstance(index, CellIndex):
            return index
        if isinstance(index, (int, np.integer)):
            return CellIndex(int(index), self.flat_to_multi(int(index)))
        multi = tuple(int(v) for v in index)
        return CellIndex(self.multi_to_flat(multi), multi)

    def neighbor_flat(self, flat: int, move: Move) -> int | None:
        """Flat index of the cell one move away, or None outside the grid."""
        multi = self.flat_to_multi(flat)
        nj = multi[move.axis - 1] + move.sign
        if not 1 <= nj <= self.n_per_axis:
            return None
        lst = list(multi)
        lst[move.axis - 1] = nj
        return self.multi_to_flat(lst)

    def admissible_moves(self, index) -> list[tuple[Move, "CellIndex"]]:
        cell = self.cell(index)
        out = []
        for mv in axis_moves(self.d):
            target = self.neighbor_flat(cell.flat, mv)
            if target is not None:
                out.append((mv, self.cell(target)))
        return out

    def graph_distance(self, a, b) -> float:
        """L1 distance between cell centers: h * sum_j |n_j - m_j|."""
        ca, cb = self.cell(a), self.cell(b)
        return self.h * sum(abs(x - y) for x, y in zip(ca.multi, cb.multi))


@dataclass(frozen=True)
class CellIndex:
    """A grid cell addressed both ways: 0-based flat, 1-based multi-index."""

    flat: int
    multi: tuple[int, ...]


def build_grid(d: int, K: float, h: float) -> GridSpec:
    """Validate the (d, K, h) triple and derive the per-axis cell count.

    2K/h must be an integer to relative tolerance 1e-12.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if not (K > 0 and h > 0):
        raise ValueError(f"K and h must be positive, got K={K}, h={h}")
    ratio = 2.0 * K / h
    n = round(ratio)
    if n < 1 or abs(ratio - n) > 1e-12 * max(1.0, abs(ratio)):
        raise ValueError(
            f"2K/h = {ratio!r} is not an integer; the box [-{K}, {K}] does not "
            f"split into cells of width {h}"
        )
    return GridSpec(d=d, K=float(K), h=float(h), n_per_axis=int(n))


@lru_cache(maxsize=64)
def _centers_cached(grid: GridSpec) -> np.ndarray:
    ax = grid.axis_centers()
    idx = np.arange(grid.n_states)
    out = np.empty((grid.n_states, grid.d))
    rem = idx
    for j in range(grid.d):
        out[:, j] = ax[rem % grid.n_per_axis]
        rem = rem // grid.n_per_axis
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def neighbor_table(grid: GridSpec) -> np.ndarray:
    """(2d, n_states) int array: flat index one move away, -1 off-grid.

    Row order matches ``axis_moves``/``move_row``.
    """
    n = grid.n_per_axis
    idx = np.arange(grid.n_states)
    table = np.full((2 * grid.d, grid.n_states), -1, dtype=np.int64)
    stride = 1
    for j in range(grid.d):
        digit = (idx // stride) % n
        up = digit < n - 1
        down = digit > 0
        table[2 * j, up] = idx[up] + stride
        table[2 * j + 1, down] = idx[down] - stride
        stride *= n
    table.setflags(write=False)
    return table


# --------------------------------------------------------------------------
# potentials

@dataclass(frozen=True)
class Potential:
    """Potential V on the box, with optional analytic derivatives.

    ``fn`` maps an (m, d) array of points to (m,) values.  ``grad_fn`` and
    ``hess_fn``, when given, map (m, d) to (m, d) and (m, d, d).  ``kappa``
    is the uniform convexity modulus <x-y, grad V(x) - grad V(y)> >=
    kappa |x-y|^2 when known; contraction bounds require it.
    """

    d: int
    kind: str
    fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray] | None = None
    hess_fn: Callable[[np.ndarray], np.ndarray] | None = None
    kappa: float | None = None
    axis_fns: tuple | None = field(default=None, repr=False)
    matrix: np.ndarray | None = None

    # ---- constructors

    @staticmethod
    def zero(d: int) -> "Potential":
        return Potential(
            d=d,
            kind="zero",
            fn=lambda x: np.zeros(np.asarray(x).shape[0]),
            grad_fn=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            hess_fn=lambda x: np.zeros((np.asarray(x).shape[0], d, d)),
            kappa=0.0,
        )

    @staticmethod
    def quadratic(mat, kappa: float | None = None) -> "Potential":
        """V(x) = x^T M x / 2 for symmetric positive-definite M."""
        m = np.atleast_2d(np.asarray(mat, dtype=float))
        d = m.shape[0]
        if m.shape != (d, d) or not np.allclose(m, m.T, rtol=0, atol=1e-12):
            raise ValueError("quadratic potential needs a symmetric matrix")
        eigs = np.linalg.eigvalsh(m)
        if eigs[0] <= 0:
            raise ValueError(f"matrix not positive definite (min eig {eigs[0]})")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        return Potential(
            d=d,
            kind="quadratic",
            fn=lambda x: 0.5 * np.einsum("mi,ij,mj->m", x, m, x),
            grad_fn=lambda x: np.asarray(x) @ m,
            hess_fn=lambda x: np.broadcast_to(m, (np.asarray(x).shape[0], d, d)),
            kappa=float(eigs[0]) if kappa is None else float(kappa),
            matrix=m,
        )

    @staticmethod
    def additive(
        axis_fns: Sequence[Callable],
        axis_grads: Sequence[Callable] | None = None,
        axis_hess: Sequence[Callable] | None = None,
        kappa: float | None = None,
    ) -> "Potential":
        """V(x) = sum_j V_j(x_j) from vectorized 1d callables."""
        fns = tuple(axis_fns)
        d = len(fns)
        grads = tuple(axis_grads) if axis_grads is not None else None
        hesses = tuple(axis_hess) if axis_hess is not None else None
        if grads is not None and len(grads) != d:
            raise ValueError("need one gradient callable per axis")
        if hesses is not None and len(hesses) != d:
            raise ValueError("need one second-derivative callable per axis")

        def fn(x):
            x = np.asarray(x, dtype=float)
            return sum(fns[j](x[:, j]) for j in range(d))

        grad_fn = None
        if grads is not None:
            def grad_fn(x):
                x = np.asarray(x, dtype=float)
                return np.stack([np.asarray(grads[j](x[:, j]), dtype=float)
                                 for j in range(d)], axis=1)

        hess_fn = None
        if hesses is not None:
            def hess_fn(x):
                x = np.asarray(x, dtype=float)
                out = np.zeros((x.shape[0], d, d))
                for j in range(d):
                    out[:, j, j] = hesses[j](x[:, j])
                return out

        return Potential(d=d, kind="additive", fn=fn, grad_fn=grad_fn,
                         hess_fn=hess_fn, kappa=kappa, axis_fns=fns)

    @staticmethod
    def from_callable(
        fn: Callable,
        d: int,
        grad_fn: Callable | None = None,
        hess_fn: Callable | None = None,
        kappa: float | None = None,
    ) -> "Potential":
        return Potential(d=d, kind="callable", fn=fn, grad_fn=grad_fn,
                         hess_fn=hess_fn, kappa=kappa)

    @staticmethod
    def tabulated(axis_points: Sequence[np.ndarray], values: np.ndarray,
                  kappa: float | None = None, method: str = "cubic") -> "Potential":
        """Interpolate tabulated values on a (finer) rectangular grid."""
        from scipy.interpolate import RegularGridInterpolator

        pts = [np.asarray(p, dtype=float) for p in axis_points]
        d = len(pts)
        values = np.asarray(values, dtype=float)
        if values.shape != tuple(len(p) for p in pts):
            raise ValueError("tabulated values do not match axis point counts")
        if method == "cubic" and any(len(p) < 4 for p in pts):
            method = "linear"
        interp = RegularGridInterpolator(pts, values, method=method,
                                         bounds_error=False, fill_value=None)
        return Potential(d=d, kind="tabulated", fn=lambda x: interp(x),
                         kappa=kappa)

    # ---- structure

    @property
    def is_additive(self) -> bool:
        """True when V splits as a sum of per-axis terms."""
        if self.kind in ("zero", "additive"):
            return True
        if self.d == 1:
            return True
        if self.kind == "quadratic":
            off = self.matrix - np.diag(np.diag(self.matrix))
            return bool(np.all(np.abs(off) <= 1e-14 * max(1.0, np.abs(self.matrix).max())))
        return False

    # ---- evaluation

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.fn(points), dtype=float)

    def gradient(self, points: np.ndarray, step: float = 1e-5) -> np.ndarray:
        """Gradient at each point; central differences if no analytic form."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(points), dtype=float)
        out = np.empty_like(points)
        for j in range(self.d):
            hi = points.copy(); hi[:, j] += step
            lo = points.copy(); lo[:, j] -= step
            out[:, j] = (self(hi) - self(lo)) / (2.0 * step)
        return out

    def hessian(self, points: np.ndarray, step: float = 1e-4) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.hess_fn is not None:
            return np.asarray(self.hess_fn(points), dtype=float)
        m = points.shape[0]
        out = np.empty((m, self.d, self.d))
        f0 = self(points)
        for j in range(self.d):
            for l in range(j, self.d):
                if j == l:
                    hi = points.copy(); hi[:, j] += step
                    lo = points.copy(); lo[:, j] -= step
                    out[:, j, j] = (self(hi) - 2.0 * f0 + self(lo)) / step**2
                else:
                    pp = points.copy(); pp[:, j] += step; pp[:, l] += step
                    pm = points.copy(); pm[:, j] += step; pm[:, l] -= step
                    mp = points.copy(); mp[:, j] -= step; mp[:, l] += step
                    mm = points.copy(); mm[:, j] -= step; mm[:, l] -= step
                    out[:, j, l] = (self(pp) - self(pm) - self(mp) + self(mm)) / (4.0 * step**2)
                    out[:, l, j] = out[:, j, l]
        return out


# --------------------------------------------------------------------------
# cell averages and curvature checks

@lru_cache(maxsize=16)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights / 2.0  # weights sum to 1 on [-1, 1] -> mean value


def cell_average_all(V: Potential, grid: GridSpec, order: int = 4) -> np.ndarray:
    """Mean of V over every cell by tensor Gauss-Legendre quadrature.

    ``order`` points per axis; order 4 integrates polynomial integrands up
    to degree 7 exactly, enough for the quadratic and quartic potentials
    used throughout.
    """
    nodes, weights = _gauss_legendre(order)
    offsets_1d = 0.5 * grid.h * nodes  # cell-local in [-h/2, h/2]
    centers = grid.centers()
    mesh = np.meshgrid(*([offsets_1d] * grid.d), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)  # (order^d, d)
    wmesh = np.meshgrid(*([weights] * grid.d), indexing="ij")
    w = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)

    total = np.zeros(grid.n_states)
    for off, wk in zip(offsets, w):
        total += wk * V(centers + off)
    return total


def cell_average(V: Potential, grid: GridSpec, index, order: int = 4) -> float:
    """Mean of V over one cell; same quadrature as ``cell_average_all``."""
    cell = grid.cell(index)
    nodes, weights = _gauss_legendre(order)
    offsets_1d = 0.5 * grid.h * nodes
    center = grid.centers()[cell.flat]
    mesh = np.meshgrid(*([offsets_1d] * grid.d), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)
    wmesh = np.meshgrid(*([weights] * grid.d), indexing="ij")
    w = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
    vals = V(center[None, :] + offsets)
    return float(np.dot(w, vals))


def check_diag_dominance(V: Potential, grid: GridSpec) -> tuple[bool, float]:
    """Column diagonal dominance of the Hessian at every cell center.

    Returns (ok, min_gap) with
        min_gap = min over centers x and axes j of
                  (D^2 V)_jj(x) - sum_{l != j} |(D^2 V)_lj(x)|.
    Central differences with step h/8 when no analytic Hessian exists.
    """
    hess = V.hessian(grid.centers(), step=grid.h / 8.0)
    diag = np.einsum("mjj->mj", hess)
    abs_cols = np.abs(hess).sum(axis=1)  # sum over row index l of |H_lj|
    gap = diag - (abs_cols - np.abs(diag))
    min_gap = float(gap.min())
    return min_gap >= 0.0, min_gap
