"""Jump rates of lattice chains that discretize drift-diffusion dynamics.

Two constructions for the continuous-time rates c(i, gamma) of nearest-
neighbor jumps on the grid:

* ``fv_rates``: exponential (Gibbs) weights of cell-averaged potential
  differences,  c(i, +-_j) = sigma^2/h^2 * exp(-(Vh(i +- h e_j) - Vh(i)) / (2 sigma^2)).
  Reversible with explicit invariant measure proportional to exp(-Vh/sigma^2).

* ``fd_rates``: the classical upwind-free central scheme,
  c(i, +-_j) = h^-2 (sigma^2 -+ h d_jV(i)/2) in the interior, with doubled
  diffusion and full drift on boundary cells whose opposite neighbor is
  missing.  Requires sigma^2 >= (h/2)|d_jV| pointwise for positivity; its
  rate products are path-dependent unless V is additive.

Rates are stored as a dense (2d, n_states) array in the fixed row order
(+_1, -_1, +_2, -_2, ...): zero entries mark moves off the grid.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .lattice import (
    GridSpec,
    Move,
    Potential,
    axis_moves,
    build_grid,
    cell_average_all,
    move_row,
    neighbor_table,
)

__all__ = [
    "RateTable",
    "GridMeasure",
    "fv_rates",
    "fd_rates",
    "invariant_measure",
    "check_path_independence",
    "check_detailed_balance",
    "check_flux_identity",
    "tv_distance",
    "export_rates_csv",
    "import_rates_csv",
]


@dataclass(frozen=True)
class RateTable:
    """Nearest-neighbor jump rates of one chain.

    ``rates[move_row(mv), i]`` is c(i, mv); exactly zero when the move
    leaves the grid.  ``potential`` is retained for invariant-measure
    formulas and for checking contraction hypotheses; it is None for
    tables reconstructed from CSV.
    """

    grid: GridSpec
    sigma: float
    scheme: str  # "finite_volume" | "finite_difference"
    rates: np.ndarray
    potential: Potential | None = None

    def __post_init__(self) -> None:
        if self.scheme not in ("finite_volume", "finite_difference"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        r = np.asarray(self.rates, dtype=float)
        if r.shape != (2 * self.grid.d, self.grid.n_states):
            raise ValueError(f"rates shape {r.shape} does not match grid")
        nbr = neighbor_table(self.grid)
        if np.any(r[nbr < 0] != 0.0):
            raise ValueError("nonzero rate for a move off the grid")
        if np.any(r < 0):
            bad = np.argwhere(r < 0)[0]
            raise ValueError(
                f"negative rate {r[bad[0], bad[1]]} at cell "
                f"{self.grid.flat_to_multi(int(bad[1]))}, move row {bad[0]}"
            )
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)

    def rate(self, index, move: Move) -> float:
        cell = self.grid.cell(index)
        return float(self.rates[move_row(move), cell.flat])

    def neighbors(self) -> np.ndarray:
        return neighbor_table(self.grid)

    def total_rates(self) -> np.ndarray:
        """Sum over moves of c(i, .) for each cell."""
        return self.rates.sum(axis=0)


@dataclass(frozen=True)
class GridMeasure:
    """Probability weights on the cells of a grid, flat order."""

    grid: GridSpec
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.grid.n_states,):
            raise ValueError(f"weights shape {w.shape} does not match grid")
        if np.any(w < 0):
            raise ValueError(f"negative weight {w.min()}")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @staticmethod
    def from_weights(grid: GridSpec, weights: np.ndarray) -> "GridMeasure":
        """Normalize nonnegative weights to total mass one."""
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have positive total mass")
        return GridMeasure(grid, w / total)

    @staticmethod
    def point(grid: GridSpec, index) -> "GridMeasure":
        w = np.zeros(grid.n_states)
        w[grid.cell(index).flat] = 1.0
        return GridMeasure(grid, w)

    def mean_of(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))


def tv_distance(a: GridMeasure, b: GridMeasure) -> float:
    if a.grid != b.grid:
        raise ValueError("measures live on different grids")
    return 0.5 * float(np.abs(a.weights - b.weights).sum())


# --------------------------------------------------------------------------
# rate constructions

def fv_rates(grid: GridSpec, V: Potential, sigma: float,
             quad_order: int = 4) -> RateTable:
    """Gibbs rates from cell-averaged potential differences."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if V.d != grid.d:
        raise ValueError(f"potential dimension {V.d} != grid dimension {grid.d}")
    vh = cell_average_all(V, grid, order=quad_order)
    nbr = neighbor_table(grid)
    rates = np.zeros((2 * grid.d, grid.n_states))
    base = sigma**2 / grid.h**2
    for row in range(2 * grid.d):
        src = np.nonzero(nbr[row] >= 0)[0]
        tgt = nbr[row, src]
        rates[row, src] = base * np.exp(-(vh[tgt] - vh[src]) / (2.0 * sigma**2))
    return RateTable(grid=grid, sigma=float(sigma), scheme="finite_volume",
                     rates=rates, potential=V)


def fd_rates(grid: GridSpec, V: Potential, sigma: float) -> RateTable:
    """Central-difference rates with one-sided boundary closure.

    Interior: c(i, +-_j) = h^-2 (sigma^2 -+ h d_jV(i) / 2).
    If the opposite neighbor i -+ h e_j is off the grid the cell keeps the
    full flux through its one interior face:
    c(i, +-_j) = h^-2 (2 sigma^2 -+ h d_jV(i)).
    Rejects inputs violating sigma^2 - (h/2)|d_jV| >= 0 at any center.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if V.d != grid.d:
        raise ValueError(f"potential dimension {V.d} != grid dimension {grid.d}")
    grad = V.gradient(grid.centers(), step=grid.h / 8.0)  # (n, d)

    slack = sigma**2 - 0.5 * grid.h * np.abs(grad)
    if slack.min() < -1e-12 * max(1.0, sigma**2):
        i, j = np.unravel_index(np.argmin(slack), slack.shape)
        raise ValueError(
            "positivity condition sigma^2 >= (h/2)|d_jV| fails at cell "
            f"{grid.flat_to_multi(int(i))}, axis {j + 1}: "
            f"sigma^2 = {sigma**2:.6g}, (h/2)|d_jV| = {0.5 * grid.h * abs(grad[i, j]):.6g}"
        )

    nbr = neighbor_table(grid)
    rates = np.zeros((2 * grid.d, grid.n_states))
    h = grid.h
    for j in range(grid.d):
        g = grad[:, j]
        for sign, row, opp_row in ((+1, 2 * j, 2 * j + 1), (-1, 2 * j + 1, 2 * j)):
            has_target = nbr[row] >= 0
            has_opposite = nbr[opp_row] >= 0
            interior = has_target & has_opposite
            edge = has_target & ~has_opposite
            rates[row, interior] = (sigma**2 - sign * 0.5 * h * g[interior]) / h**2
            rates[row, edge] = (2.0 * sigma**2 - sign * h * g[edge]) / h**2
    rates[np.abs(rates) < 1e-30] = 0.0  # clamp roundoff at the positivity margin
    return RateTable(grid=grid, sigma=float(sigma), scheme="finite_difference",
                     rates=rates, potential=V)


# --------------------------------------------------------------------------
# invariant measure

def invariant_measure(table: RateTable, quad_order: int = 4) -> GridMeasure:
    """Stationary distribution of the chain, mass one.

    finite_volume: Gibbs weights exp(-Vh(i)/sigma^2) (detailed balance holds
    by construction).  finite_difference with additive potential: product
    over axes of one-dimensional birth-death solutions m(k+1)/m(k) =
    c(k, +)/c(k+1, -) with the actual rates.  Otherwise a dense linear
    solve of the adjoint stationarity equations with a normalization row.
    The result always satisfies sum_i (L_h f)(i) m(i) = 0.
    """
    grid = table.grid
    if table.scheme == "finite_volume":
        if table.potential is not None:
            vh = cell_average_all(table.potential, grid, order=quad_order)
            w = np.exp(-(vh - vh.min()) / table.sigma**2)
        else:
            # reconstructed table: telescope detailed-balance ratios instead
            w = _telescope_weights(table)
        return GridMeasure.from_weights(grid, w)

    if table.potential is not None and table.potential.is_additive:
        w = _telescope_weights(table)
        return GridMeasure.from_weights(grid, w)

    return _solve_stationary(table)


def _telescope_weights(table: RateTable) -> np.ndarray:
    """Per-axis birth-death telescoping, tensored across axes.

    Valid when rates along each axis depend only on that coordinate
    (additive potential, or any reversible path-independent table).
    """
    grid = table.grid
    n = grid.n_per_axis
    axis_weights = []
    stride = 1
    for j in range(grid.d):
        # rates along the axis-j line through the first corner cell
        line = np.arange(n) * stride
        cp = table.rates[2 * j, line]        # c(k, +_j), k = 1..n
        cm = table.rates[2 * j + 1, line]    # c(k, -_j)
        logw = np.zeros(n)
        for k in range(n - 1):
            if cp[k] <= 0 or cm[k + 1] <= 0:
                raise ValueError(
                    f"axis {j + 1} not irreducible: zero rate between cells "
                    f"{k + 1} and {k + 2}"
                )
            logw[k + 1] = logw[k] + np.log(cp[k]) - np.log(cm[k + 1])
        axis_weights.append(np.exp(logw - logw.max()))
        stride *= n
    w = axis_weights[0]
    for aw in axis_weights[1:]:
        w = (aw[:, None] * w[None, :]).ravel()  # slower axis to the left
    return w


def _solve_stationary(table: RateTable) -> GridMeasure:
    """Dense LU solve of m Q = 0 with a normalization row."""
    from scipy.linalg import solve

    grid = table.grid
    n = grid.n_states
    nbr = neighbor_table(grid)
    Qt = np.zeros((n, n))  # Qt[t, i] = rate i -> t
    for row in range(2 * grid.d):
        ok = nbr[row] >= 0
        src = np.nonzero(ok)[0]
        Qt[nbr[row, ok], src] += table.rates[row, src]
    Qt[np.arange(n), np.arange(n)] -= table.total_rates()
    A = Qt.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        m = solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"stationary system is singular (reducible chain?): {exc}")
    residual = np.abs(Qt @ m).max()
    if m.min() < -1e-10 or residual > 1e-8 * max(1.0, np.abs(table.rates).max()):
        raise ValueError(
            f"stationary solve failed: min weight {m.min():.3e}, "
            f"residual {residual:.3e} (chain may be reducible)"
        )
    return GridMeasure.from_weights(grid, np.maximum(m, 0.0))


# --------------------------------------------------------------------------
# structural checks

def check_path_independence(table: RateTable) -> float:
    """Largest relative defect of the two-step rate-product identity.

    For every cell i, axes j != l and signs s, t the reversible lattice
    construction satisfies
        c(i, s_j) c(i + s h e_j, t_l) = c(i, t_l) c(i + t h e_l, s_j).
    Returns max |lhs - rhs| / max(lhs, rhs) over all admissible cases;
    0.0 for d = 1 (no pairs).
    """
    grid = table.grid
    if grid.d == 1:
        return 0.0
    nbr = neighbor_table(grid)
    worst = 0.0
    for ja in range(2 * grid.d):
        for jb in range(2 * grid.d):
            if ja // 2 == jb // 2:
                continue  # same axis
            ok = (nbr[ja] >= 0) & (nbr[jb] >= 0)
            src = np.nonzero(ok)[0]
            lhs = table.rates[ja, src] * table.rates[jb, nbr[ja, src]]
            rhs = table.rates[jb, src] * table.rates[ja, nbr[jb, src]]
            denom = np.maximum(np.maximum(lhs, rhs), 1e-300)
            worst = max(worst, float((np.abs(lhs - rhs) / denom).max(initial=0.0)))
    return worst


def check_detailed_balance(table: RateTable, m: GridMeasure) -> float:
    """Largest relative defect of c(i,+_j) m(i) = c(i+h e_j, -_j) m(i+h e_j)."""
    grid = table.grid
    nbr = neighbor_table(grid)
    worst = 0.0
    for j in range(grid.d):
        ok = nbr[2 * j] >= 0
        src = np.nonzero(ok)[0]
        tgt = nbr[2 * j, src]
        fwd = table.rates[2 * j, src] * m.weights[src]
        bwd = table.rates[2 * j + 1, tgt] * m.weights[tgt]
        denom = np.maximum(np.maximum(fwd, bwd), 1e-300)
        worst = max(worst, float((np.abs(fwd - bwd) / denom).max(initial=0.0)))
    return worst


def check_flux_identity(table: RateTable, quad_order: int = 4) -> float:
    """Largest absolute defect of the net-flux formula for Gibbs rates.

    c(i, +_j) - c(i + h e_j, -_j) must equal
    2 sigma^2/h^2 * sinh((Vh(i) - Vh(i+h e_j)) / (2 sigma^2)).
    Only meaningful for finite_volume tables with a potential attached.
    """
    if table.scheme != "finite_volume" or table.potential is None:
        raise ValueError("flux identity applies to finite_volume tables with a potential")
    grid = table.grid
    vh = cell_average_all(table.potential, grid, order=quad_order)
    nbr = neighbor_table(grid)
    base = 2.0 * table.sigma**2 / grid.h**2
    worst = 0.0
    for j in range(grid.d):
        src = np.nonzero(nbr[2 * j] >= 0)[0]
        tgt = nbr[2 * j, src]
        net = table.rates[2 * j, src] - table.rates[2 * j + 1, tgt]
        ref = base * np.sinh((vh[src] - vh[tgt]) / (2.0 * table.sigma**2))
        worst = max(worst, float(np.abs(net - ref).max(initial=0.0)))
    return worst


# --------------------------------------------------------------------------
# CSV round trip

def export_rates_csv(table: RateTable, path) -> None:
    """Write (flat_index, move, rate) rows with grid metadata in # comments."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# d={table.grid.d} K={table.grid.K!r} h={table.grid.h!r} "
                 f"sigma={table.sigma!r} scheme={table.scheme}\n")
        writer = csv.writer(fh)
        writer.writerow(["flat_index", "move", "rate"])
        moves = axis_moves(table.grid.d)
        for i in range(table.grid.n_states):
            for mv in moves:
                writer.writerow([i, str(mv), repr(float(table.rates[move_row(mv), i]))])


def import_rates_csv(path) -> RateTable:
    """Rebuild a RateTable from ``export_rates_csv`` output."""
    with open(path, "r", newline="") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError("rate CSV is missing its metadata comment line")
        meta = dict(kv.split("=", 1) for kv in header[1:].split())
        grid = build_grid(int(meta["d"]), float(meta["K"]), float(meta["h"]))
        rates = np.zeros((2 * grid.d, grid.n_states))
        reader = csv.reader(fh)
        head = next(reader)
        if head != ["flat_index", "move", "rate"]:
            raise ValueError(f"unexpected rate CSV columns {head}")
        for flat_s, move_s, rate_s in reader:
            rates[move_row(Move.parse(move_s)), int(flat_s)] = float(rate_s)
    return RateTable(grid=grid, sigma=float(meta["sigma"]),
                     scheme=meta["scheme"], rates=rates, potential=None)
