"""Phi-entropies, Dirichlet forms and Fisher informations on grid chains.

The convex family is

    phi_alpha(x) = (x^alpha - x)/(alpha - 1) - x + 1     for 1 < alpha <= 2,
    phi_1(x)     = x log x - x + 1,

normalized so phi(1) = phi'(1) = 0.  alpha = 1 gives relative entropy,
alpha = 2 the chi-square / variance functional.  Everything downstream is
expressed through phi, its derivative, and the symmetric bracket
Phi(a, b) = (phi'(a) - phi'(b)) (a - b).

Functions on the grid are plain float arrays of length ``n_states`` in
flat order.  All reductions run in fixed flat-index order, so repeated
calls on the same inputs are bit-identical.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .chain import GridMeasure, RateTable
from .lattice import neighbor_table

__all__ = [
    "PhiFamily",
    "as_phi",
    "phi_entropy",
    "apply_generator",
    "apply_adjoint",
    "dirichlet_form",
    "fisher_information",
    "entropy_production",
]


@dataclass(frozen=True)
class PhiFamily:
    """The entropy kernel phi_alpha and its derivative, 1 <= alpha <= 2."""

    alpha: float

    def __post_init__(self) -> None:
        if not 1.0 <= self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in [1, 2], got {self.alpha}")

    def phi(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.alpha == 1.0:
            return xlogy(x, x) - x + 1.0
        return (np.power(x, self.alpha) - x) / (self.alpha - 1.0) - x + 1.0

    def dphi(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.alpha == 1.0:
            return np.log(x)
        return (self.alpha * np.power(x, self.alpha - 1.0) - 1.0) / (self.alpha - 1.0) - 1.0

    def bracket(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Phi(a, b) = (phi'(a) - phi'(b)) (a - b), the two-point carre du champ."""
        return (self.dphi(a) - self.dphi(b)) * (np.asarray(a, float) - np.asarray(b, float))


def as_phi(alpha) -> PhiFamily:
    """Coerce a bare alpha value to a PhiFamily."""
    return alpha if isinstance(alpha, PhiFamily) else PhiFamily(float(alpha))


def phi_entropy(phi: PhiFamily, f: np.ndarray, m: GridMeasure) -> float:
    """H^phi(f | m) = sum_i phi(f(i)) m(i) - phi(sum_i f(i) m(i)).

    Requires f >= 0 (phi is only defined there); nonnegative by Jensen.
    """
    phi = as_phi(phi)
    f = np.asarray(f, dtype=float)
    if f.shape != m.weights.shape:
        raise ValueError(f"function shape {f.shape} does not match grid")
    if np.any(f < 0):
        raise ValueError(f"phi-entropy needs f >= 0, got min {f.min()}")
    mean = float(np.dot(m.weights, f))
    val = float(np.dot(m.weights, phi.phi(f))) - float(phi.phi(mean))
    # Jensen guarantees >= 0; clamp the roundoff dust so callers can take logs
    return max(val, 0.0)


def apply_generator(table: RateTable, f: np.ndarray) -> np.ndarray:
    """(L f)(i) = sum_gamma c(i, gamma) (f(gamma i) - f(i))."""
    f = np.asarray(f, dtype=float)
    nbr = neighbor_table(table.grid)
    tgt = np.where(nbr >= 0, nbr, 0)  # rate is 0 where nbr < 0, value irrelevant
    return np.sum(table.rates * (f[tgt] - f[None, :]), axis=0)


def apply_adjoint(table: RateTable, u: np.ndarray) -> np.ndarray:
    """(L* u)(i) = sum_gamma [c(gamma i, gamma^-1) u(gamma i) - c(i, gamma) u(i)].

    Inflow minus outflow; terms with gamma i off the grid are dropped.
    Satisfies <L f, u> = <f, L* u> in the unweighted inner product.
    """
    u = np.asarray(u, dtype=float)
    nbr = neighbor_table(table.grid)
    out = -table.total_rates() * u
    for row in range(table.rates.shape[0]):
        opp = row + 1 if row % 2 == 0 else row - 1
        ok = nbr[row] >= 0
        src = np.nonzero(ok)[0]
        tgt = nbr[row, src]
        # jump tgt -> src uses the opposite move's rate at tgt
        out[src] += table.rates[opp, tgt] * u[tgt]
    return out


def dirichlet_form(table: RateTable, m: GridMeasure, f: np.ndarray,
                   g: np.ndarray) -> float:
    """E(f, g) = -sum_i f(i) (L g)(i) m(i).

    Computed both as written and as the symmetrized sum
    (1/2) sum_{i, gamma} c(i, gamma) (f(gamma i) - f(i)) (g(gamma i) - g(i)) m(i);
    the two must agree to 1e-10 relative (detailed balance of m), else this
    raises.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    gen_terms = f * m.weights * apply_generator(table, g)
    e_gen = -float(gen_terms.sum())

    nbr = neighbor_table(table.grid)
    tgt = np.where(nbr >= 0, nbr, 0)
    df = f[tgt] - f[None, :]
    dg = g[tgt] - g[None, :]
    terms = table.rates * df * dg * m.weights[None, :]
    e_sym = 0.5 * float(terms.sum())
    scale = 0.5 * float(np.abs(terms).sum())

    # cancellation floor: both routes accumulate sums whose summands can
    # dwarf the result when f, g are nearly constant
    floor = 64 * np.finfo(float).eps * (float(np.abs(gen_terms).sum()) + scale)
    if abs(e_gen - e_sym) > 1e-10 * max(abs(e_gen), abs(e_sym)) + floor + 1e-13 * scale:
        raise ValueError(
            f"Dirichlet form routes disagree: generator {e_gen!r} vs "
            f"symmetrized {e_sym!r}; measure is not reversible for these rates"
        )
    return e_gen


def fisher_information(phi: PhiFamily, table: RateTable, m: GridMeasure,
                       f: np.ndarray, floor_zero: bool = False) -> float:
    """F(f) = E(phi'(f), f), the phi-entropy production functional.

    For alpha = 1, f must be strictly positive; with ``floor_zero`` the
    function is clipped at 1e-12 (with a warning) instead of rejected.
    """
    phi = as_phi(phi)
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("Fisher information needs f >= 0")
    if phi.alpha == 1.0 and np.any(f <= 0):
        if not floor_zero:
            raise ValueError(
                "alpha = 1 Fisher information needs strictly positive f; "
                "pass floor_zero=True to clip at 1e-12"
            )
        warnings.warn("flooring nonpositive entries of f at 1e-12")
        f = np.maximum(f, 1e-12)
    return dirichlet_form(table, m, phi.dphi(f), f)


def entropy_production(phi: PhiFamily, kernel, m: GridMeasure,
                       f: np.ndarray) -> float:
    """One-step production P(f) = (H(f | m) - H(pi f | m)) / tau.

    ``kernel`` is a TransitionKernel (duck-typed: needs apply_to_function
    and tau).  Nonnegative when m is invariant for pi; a value below the
    roundoff allowance signals a corrupted kernel.
    """
    phi = as_phi(phi)
    f = np.asarray(f, dtype=float)
    h_before = phi_entropy(phi, f, m)
    h_after = phi_entropy(phi, kernel.apply_to_function(f), m)
    p = (h_before - h_after) / kernel.tau
    if p < -1e-12 * max(1.0, abs(h_before) / kernel.tau):
        raise ValueError(
            f"entropy production {p!r} is negative beyond roundoff; "
            "kernel does not preserve the measure"
        )
    return p
