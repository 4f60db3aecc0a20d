"""Monte Carlo sampling: single chains, coupled pairs, reflected SDE.

Randomness discipline: every path owns a counter-based Philox stream,
``Philox(key=seed, counter=stream_index << 64)``, so path outcomes depend
only on (seed, stream index) and never on scheduling or batch size.  The
algorithm identifier ``philox4x64`` is recorded on every batch.

Chains are sampled through their uniformization: the number of lazy-kernel
steps on [0, T] is Poisson(T_unif * T) per path (equivalent in law to
accumulating exponential(1)/T_unif holding times), and each step consumes
one uniform draw against the cumulative kernel row.  Coupled pairs run the
same machinery on an enlarged state space of (left, right) pairs whose
transition rows come from the explicit coupling tables; the neighbor
system is closed on coalesced-or-adjacent pairs, so its state space is
only n_states * (2d + 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import GridMeasure, RateTable
from .coupling import neighbor_coupling, product_coupling
from .lattice import GridSpec, Potential, move_row, neighbor_table
from .transport import TransportProblem, wasserstein

__all__ = [
    "SimConfig",
    "TrajectoryBatch",
    "CoupledPairSeries",
    "sample_ctmc",
    "sample_coupled_pair",
    "sample_reflected_sde",
    "bin_points",
    "empirical_measure",
]

ALGORITHM = "philox4x64"
_CHUNK = 20_000


@dataclass(frozen=True)
class SimConfig:
    """Reproducible sampling parameters."""

    seed: int
    n_paths: int
    horizon: float
    sde_step: float | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit nonnegative integer, got {self.seed}")
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be positive, got {self.n_paths}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon}")
        if self.sde_step is not None and self.sde_step <= 0:
            raise ValueError(f"sde_step must be positive, got {self.sde_step}")


@dataclass(frozen=True)
class TrajectoryBatch:
    """Terminal states of a Monte Carlo batch, one row per path."""

    kind: str             # "ctmc" | "sde"
    seed: int
    horizon: float
    terminal: np.ndarray  # (n_paths,) flat indices or (n_paths, d) points
    jump_counts: np.ndarray | None = None
    algorithm: str = ALGORITHM


@dataclass(frozen=True)
class CoupledPairSeries:
    """Coupled-pair decay data: one independent batch per requested time."""

    kind: str                 # "neighbor" | "product"
    seed: int
    times: np.ndarray
    mean_distance: np.ndarray
    stderr: np.ndarray
    distances: tuple          # per time: (n_paths,) summed pair distances
    terminals: tuple          # per time: (n_paths, 2) first/last component states
    algorithm: str = ALGORITHM


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=index << 64))


def _sample_categorical(gen_u: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Category index per row: number of edges <= u (rows align)."""
    return (gen_u[:, None] >= edges).sum(axis=1)


# --------------------------------------------------------------------------
# single-chain sampling

def _kernel_rows(table: RateTable, t_unif: float) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative edges and targets per state for one uniformized step.

    Categories: the 2d moves in row order, then 'stay'.  edges[i, k] is the
    cumulative probability after category k; targets[i, 2d] = i.
    """
    grid = table.grid
    nbr = neighbor_table(grid)
    probs = (table.rates / t_unif).T                  # (n, 2d)
    edges = np.cumsum(probs, axis=1)                  # edge after each move
    targets = np.where(nbr >= 0, nbr, np.arange(grid.n_states)[None, :]).T
    targets = np.hstack([targets, np.arange(grid.n_states)[:, None]])
    return edges, targets


def sample_ctmc(table: RateTable, initial: GridMeasure, cfg: SimConfig,
                stream_offset: int = 0) -> TrajectoryBatch:
    """Terminal states of cfg.n_paths uniformized-chain paths at T."""
    t_unif = 2.0 * float(table.total_rates().max())
    edges, targets = _kernel_rows(table, t_unif)
    lam = t_unif * cfg.horizon
    init_cdf = np.cumsum(initial.weights)

    terminal = np.empty(cfg.n_paths, dtype=np.int64)
    counts = np.empty(cfg.n_paths, dtype=np.int64)
    for lo in range(0, cfg.n_paths, _CHUNK):
        hi = min(lo + _CHUNK, cfg.n_paths)
        m = hi - lo
        n_steps = np.empty(m, dtype=np.int64)
        u_init = np.empty(m)
        draws = []
        for k in range(m):
            gen = _stream(cfg.seed, stream_offset + lo + k)
            u_init[k] = gen.random()
            n_steps[k] = gen.poisson(lam) if lam > 0 else 0
            draws.append(gen.random(n_steps[k]))
        max_n = int(n_steps.max(initial=0))
        u = np.zeros((m, max_n))
        for k, dr in enumerate(draws):
            u[k, : len(dr)] = dr

        states = np.searchsorted(init_cdf, u_init, side="right").astype(np.int64)
        states = np.minimum(states, len(init_cdf) - 1)
        for step in range(max_n):
            active = step < n_steps
            cat = _sample_categorical(u[:, step], edges[states])
            moved = targets[states, cat]
            states = np.where(active, moved, states)
        terminal[lo:hi] = states
        counts[lo:hi] = n_steps
    return TrajectoryBatch(kind="ctmc", seed=cfg.seed, horizon=cfg.horizon,
                           terminal=terminal, jump_counts=counts)


def empirical_measure(grid: GridSpec, states: np.ndarray) -> GridMeasure:
    w = np.bincount(states, minlength=grid.n_states).astype(float)
    return GridMeasure.from_weights(grid, w)


# --------------------------------------------------------------------------
# coupled pairs

class _PairSystem:
    """Uniformized pair chain assembled from coupling tables."""

    def __init__(self, table: RateTable, kind: str):
        grid = table.grid
        nbr = neighbor_table(grid)
        n, d = grid.n_states, grid.d
        self.grid = grid
        self.kind = kind
        if kind == "neighbor":
            self.rel_count = 2 * d + 1  # move rows, then 'coalesced'
            n_pairs = n * self.rel_count
            encode = lambda a, b: (
                a * self.rel_count + 2 * d if a == b
                else a * self.rel_count + _find_rel(nbr, a, b)
            )
        elif kind == "product":
            self.rel_count = 0
            n_pairs = n * n
            encode = lambda a, b: a * n + b
        else:
            raise ValueError(f"unknown coupling kind {kind!r}")
        self.encode = encode

        trans: list[list[tuple[int, float]]] = [[] for _ in range(n_pairs)]
        valid = np.zeros(n_pairs, dtype=bool)
        for a in range(n):
            for b, pid in self._pairs_for(a, nbr):
                valid[pid] = True
                if a == b:
                    # coalesced: both copies take the same jump
                    for row in range(2 * d):
                        if table.rates[row, a] > 0:
                            trans[pid].append((encode(int(nbr[row, a]), int(nbr[row, a])),
                                               float(table.rates[row, a])))
                    continue
                tab = self._coupling(table, a, b, nbr)
                null = tab.null_index
                for ia, ga in enumerate(tab.moves):
                    ta = a if ga.is_null else int(nbr[move_row(ga), a])
                    for ib, gb in enumerate(tab.moves):
                        w = float(tab.entries[ia, ib])
                        if w <= 0.0 or (ia == null and ib == null):
                            continue
                        tb = b if gb.is_null else int(nbr[move_row(gb), b])
                        trans[pid].append((encode(ta, tb), w))

        totals = np.array([sum(w for _, w in tr) for tr in trans])
        self.t_unif = 2.0 * float(totals.max())
        maxcat = max((len(tr) for tr in trans), default=0)
        self.edges = np.full((n_pairs, maxcat), 2.0)  # u in [0,1) never reaches 2
        self.targets = np.empty((n_pairs, maxcat + 1), dtype=np.int64)
        self.targets[:] = np.arange(n_pairs)[:, None]
        for pid, tr in enumerate(trans):
            acc = 0.0
            for k, (tgt, w) in enumerate(tr):
                acc += w / self.t_unif
                self.edges[pid, k] = acc
                self.targets[pid, k] = tgt

    def _pairs_for(self, a: int, nbr: np.ndarray):
        if self.kind == "neighbor":
            for rel in range(self.rel_count - 1):
                if nbr[rel, a] >= 0:
                    yield int(nbr[rel, a]), a * self.rel_count + rel
            yield a, a * self.rel_count + self.rel_count - 1
        else:
            for b in range(self.grid.n_states):
                yield b, a * self.grid.n_states + b

    def _coupling(self, table: RateTable, a: int, b: int, nbr: np.ndarray):
        if self.kind == "product":
            return product_coupling(table, a, b)
        rel = _find_rel(nbr, a, b)
        return neighbor_coupling(table, a, rel // 2 + 1, +1 if rel % 2 == 0 else -1)

    def decode(self, pids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "product":
            n = self.grid.n_states
            return pids // n, pids % n
        nbr = neighbor_table(self.grid)
        a = pids // self.rel_count
        rel = pids % self.rel_count
        coal = rel == self.rel_count - 1
        b = np.where(coal, a, nbr[np.minimum(rel, 2 * self.grid.d - 1), a])
        return a, b


def _find_rel(nbr: np.ndarray, a: int, b: int) -> int:
    for rel in range(nbr.shape[0]):
        if nbr[rel, a] == b:
            return rel
    raise ValueError(f"states {a} and {b} are not lattice neighbors")


def _graph_dist(grid: GridSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    dist = np.zeros(len(a))
    ra, rb = a.copy(), b.copy()
    for _ in range(grid.d):
        dist += np.abs(ra % grid.n_per_axis - rb % grid.n_per_axis)
        ra //= grid.n_per_axis
        rb //= grid.n_per_axis
    return grid.h * dist


def _geodesic(grid: GridSpec, a: int, b: int) -> list[tuple[int, int]]:
    """Consecutive neighbor pairs along a monotone lattice path a -> b."""
    nbr = neighbor_table(grid)
    segs = []
    cur = a
    ma, mb = grid.flat_to_multi(a), grid.flat_to_multi(b)
    for ax in range(grid.d):
        step = 1 if mb[ax] > ma[ax] else -1
        row = 2 * ax if step > 0 else 2 * ax + 1
        for _ in range(abs(mb[ax] - ma[ax])):
            nxt = int(nbr[row, cur])
            segs.append((cur, nxt))
            cur = nxt
    return segs


def sample_coupled_pair(kind: str, table: RateTable, nu: GridMeasure,
                        eta: GridMeasure, cfg: SimConfig,
                        times=None) -> CoupledPairSeries:
    """Coupled-pair decay of E[d(Y1_t, Y2_t)] at each requested time.

    ``neighbor`` draws initial pairs from the graph-optimal transport plan
    of (nu, eta) and chains couplings along lattice geodesics for pairs
    that start more than one cell apart (each geodesic segment evolves as
    its own coupled pair; the summed segment distances upper-bound the
    pair distance).  ``product`` draws comonotone initial pairs and runs
    the synchronous coupling, which is defined for arbitrary pairs.

    Each time point gets an independent batch with its own path streams,
    so the series points carry independent Monte Carlo errors.
    """
    if times is None:
        times = [cfg.horizon]
    times = np.asarray(sorted(float(t) for t in times))
    system = _PairSystem(table, kind)
    grid = table.grid

    if kind == "neighbor":
        _, plan = wasserstein(TransportProblem(nu, eta, cost="graph", p=1))
        flat_plan = plan.ravel()
        support = np.nonzero(flat_plan)[0]
        pair_cdf = np.cumsum(flat_plan[support])
        pair_cdf /= pair_cdf[-1]
    else:
        nu_cdf = np.cumsum(nu.weights)
        eta_cdf = np.cumsum(eta.weights)

    mean_d = np.empty(len(times))
    stderr = np.empty(len(times))
    all_dists, all_terms = [], []
    for ti, t in enumerate(times):
        base = ti * cfg.n_paths * 64  # room for per-segment streams
        lam = system.t_unif * t
        # draw initial pairs and split into geodesic segments
        seg_pairs, seg_owner = [], []
        for pth in range(cfg.n_paths):
            gen = _stream(cfg.seed, base + pth * 64)
            u0 = gen.random()
            if kind == "neighbor":
                idx = support[min(np.searchsorted(pair_cdf, u0, side="right"),
                                  len(support) - 1)]
                a, b = divmod(int(idx), grid.n_states)
                segs = _geodesic(grid, a, b) if a != b else [(a, a)]
            else:
                a = int(np.searchsorted(nu_cdf, u0, side="right"))
                b = int(np.searchsorted(eta_cdf, u0, side="right"))
                a = min(a, grid.n_states - 1)
                b = min(b, grid.n_states - 1)
                segs = [(a, b)]
            if len(segs) > 63:
                raise ValueError("geodesic longer than the per-path stream budget")
            for si, (sa, sb) in enumerate(segs):
                seg_pairs.append(system.encode(sa, sb))
                seg_owner.append((pth, si))

        # evolve every segment in lockstep
        n_segs = len(seg_pairs)
        states = np.array(seg_pairs, dtype=np.int64)
        n_steps = np.empty(n_segs, dtype=np.int64)
        draws = []
        for k, (pth, si) in enumerate(seg_owner):
            gen = _stream(cfg.seed, base + pth * 64 + 1 + si)
            n_steps[k] = gen.poisson(lam) if lam > 0 else 0
            draws.append(gen.random(n_steps[k]))
        max_n = int(n_steps.max(initial=0))
        for lo in range(0, n_segs, _CHUNK):
            hi = min(lo + _CHUNK, n_segs)
            u = np.zeros((hi - lo, max_n))
            for k in range(lo, hi):
                u[k - lo, : n_steps[k]] = draws[k]
            st = states[lo:hi]
            for step in range(max_n):
                active = step < n_steps[lo:hi]
                cat = _sample_categorical(u[:, step], system.edges[st])
                st = np.where(active, system.targets[st, cat], st)
            states[lo:hi] = st

        left, right = system.decode(states)
        seg_dist = _graph_dist(grid, left, right)
        per_path = np.zeros(cfg.n_paths)
        first_state = np.empty(cfg.n_paths, dtype=np.int64)
        last_state = np.empty(cfg.n_paths, dtype=np.int64)
        for k, (pth, si) in enumerate(seg_owner):
            per_path[pth] += seg_dist[k]
            if si == 0:
                first_state[pth] = left[k]
            last_state[pth] = right[k]

        mean_d[ti] = per_path.mean()
        stderr[ti] = per_path.std(ddof=1) / np.sqrt(cfg.n_paths) if cfg.n_paths > 1 else 0.0
        all_dists.append(per_path)
        all_terms.append(np.stack([first_state, last_state], axis=1))

    return CoupledPairSeries(kind=kind, seed=cfg.seed, times=times,
                             mean_distance=mean_d, stderr=stderr,
                             distances=tuple(all_dists),
                             terminals=tuple(all_terms))


# --------------------------------------------------------------------------
# reflected SDE reference

def _fold(x: np.ndarray, K: float) -> np.ndarray:
    """Reflect into [-K, K]: triangle-wave fold with period 4K."""
    z = np.mod(x + K, 4.0 * K)
    return np.where(z <= 2.0 * K, z - K, 3.0 * K - z)


def sample_reflected_sde(V: Potential, sigma: float, K: float,
                         initial_sampler, cfg: SimConfig) -> TrajectoryBatch:
    """Euler-Maruyama for dX = -grad V dt + sqrt(2 sigma^2) dB in [-K, K]^d.

    Reflection at the boundary is the fold-back map applied after every
    step (the boundary local times are treated implicitly).  A step size
    around h^2/(4 sigma^2) keeps the fold a good reflection approximation
    when comparing against a chain of mesh h.  ``initial_sampler(gen, n)``
    must return (n, d) starting points inside the box.
    """
    if cfg.sde_step is None:
        raise ValueError("cfg.sde_step is required for SDE sampling")
    n_steps = max(int(np.ceil(cfg.horizon / cfg.sde_step - 1e-9)), 0)
    dt = cfg.horizon / n_steps if n_steps else 0.0
    noise = np.sqrt(2.0 * sigma**2 * dt) if n_steps else 0.0

    d = V.d
    terminal = np.empty((cfg.n_paths, d))
    for lo in range(0, cfg.n_paths, _CHUNK // 2):
        hi = min(lo + _CHUNK // 2, cfg.n_paths)
        m = hi - lo
        x = np.empty((m, d))
        z = np.empty((m, n_steps, d)) if n_steps else None
        for k in range(m):
            gen = _stream(cfg.seed, lo + k)
            x[k] = initial_sampler(gen, 1)[0]
            if n_steps:
                z[k] = gen.standard_normal((n_steps, d))
        for s in range(n_steps):
            x = x - V.gradient(x) * dt + noise * z[:, s, :]
            x = _fold(x, K)
        terminal[lo:hi] = x
    return TrajectoryBatch(kind="sde", seed=cfg.seed, horizon=cfg.horizon,
                           terminal=terminal)


def bin_points(grid: GridSpec, points: np.ndarray) -> GridMeasure:
    """Empirical measure of points assigned to their containing cells."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    digits = np.floor((pts + grid.K) / grid.h).astype(np.int64)
    digits = np.clip(digits, 0, grid.n_per_axis - 1)
    flat = np.zeros(len(pts), dtype=np.int64)
    stride = 1
    for j in range(grid.d):
        flat += digits[:, j] * stride
        stride *= grid.n_per_axis
    return empirical_measure(grid, flat)
