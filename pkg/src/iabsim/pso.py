"""Particle swarm search over UAV placement and powers.

The swarm maximises the penalised fitness

    theta = R - e1 * (#users below eps_u) - e2 * (#backhauls below eps_d)

for a fixed association.  Positions are stored one particle per row
(``X`` is ``(M, N)``).  Fitness functions take the whole ``(M, N)`` batch and
return ``(M,)`` values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DecodeError
from .fixed_point import Allocation
from .metrics import DAA, DISTRIBUTED, DONOR
from .network import Network

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PsoOptions:
    particles: int = 200
    inertia: tuple = (1.1, 0.1)  # linear schedule start -> end over max_iter
    eta1: float = 1.49
    eta2: float = 1.9
    max_iter: int = 100
    min_iter: int = 0  # convergence is not tested before this iteration
    window: int = 20
    tol: float = 1e-3
    spread: tuple = (0.8, 1.2)
    explore: float = 0.0  # fraction of particles drawn uniformly in bounds
    penalty_user: float | None = None  # None: 10 * log2(1 + eps_u)
    penalty_bh: float | None = None  # None: same as penalty_user

    def __post_init__(self):
        if self.particles < 1:
            raise ValueError("need at least one particle")
        if self.eta1 < 0 or self.eta2 < 0:
            raise ValueError("learning coefficients must be >= 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0.0 <= self.explore <= 1.0:
            raise ValueError("explore must be in [0, 1]")


@dataclass
class SwarmState:
    positions: np.ndarray  # (M, N)
    velocities: np.ndarray
    local_best: np.ndarray
    local_best_fitness: np.ndarray  # (M,)
    global_best: np.ndarray  # (N,)
    global_best_fitness: float
    iteration: int = 0
    history: list = field(default_factory=list)  # global best per iteration


def inertia_at(options: PsoOptions, i: int) -> float:
    a0, a1 = options.inertia
    if options.max_iter <= 1:
        return float(a0)
    frac = min(max(i / (options.max_iter - 1), 0.0), 1.0)
    return float(a0 + (a1 - a0) * frac)


def _bounds(bounds):
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ValueError("bounds must be (N, 2)")
    if np.any(b[:, 0] > b[:, 1]):
        raise ValueError("bounds need min <= max")
    return b


def enforce_bounds(x, v, bounds, periodic=None):
    """Clamp to bounds (zeroing the offending velocity) or wrap periodic axes."""
    b = _bounds(bounds)
    lo, hi = b[:, 0], b[:, 1]
    x = x.copy()
    v = v.copy()
    per = np.zeros(len(b), dtype=bool) if periodic is None else np.asarray(periodic, dtype=bool)
    if per.any():
        width = np.where(per, hi - lo, 1.0)
        x[:, per] = lo[per] + np.mod(x[:, per] - lo[per], width[per])
    out = (~per) & ((x < lo) | (x > hi))
    x = np.where(per, x, np.clip(x, lo, hi))
    v[out] = 0.0
    return x, v


def init_swarm(y, bounds, options: PsoOptions, rng, fitness_fn, seeds=None, periodic=None) -> SwarmState:
    """Swarm around a seed solution.

    Particle 0 is ``y`` itself, followed by any extra ``seeds``.  A fraction
    ``options.explore`` of the rest is uniform in the bounds and the others
    are uniform in ``[spread[0] * y, spread[1] * y]`` (clamped).
    """
    b = _bounds(bounds)
    y = np.asarray(y, dtype=float)
    if y.shape != (len(b),):
        raise ValueError("seed solution does not match the bounds")
    m = options.particles
    lo_f, hi_f = options.spread
    a, c = lo_f * y, hi_f * y
    low, high = np.minimum(a, c), np.maximum(a, c)
    x = low + (high - low) * rng.random((m, len(y)))
    n_explore = int(round(options.explore * m))
    if n_explore:
        x[m - n_explore:] = b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random((n_explore, len(y)))
    fixed = [y] + [np.asarray(s, dtype=float) for s in (seeds or [])]
    for i, s in enumerate(fixed[:m]):
        x[i] = s
    v = np.zeros_like(x)
    x, v = enforce_bounds(x, v, b, periodic)
    f = np.asarray(fitness_fn(x), dtype=float)
    k = int(np.argmax(f))
    return SwarmState(x, v, x.copy(), f.copy(), x[k].copy(), float(f[k]), 0, [float(f[k])])


def step(swarm: SwarmState, fitness_fn, options: PsoOptions, rng, bounds, periodic=None) -> SwarmState:
    """One velocity/position update followed by the best-so-far bookkeeping."""
    x, v = swarm.positions, swarm.velocities
    alpha = inertia_at(options, swarm.iteration)
    r1 = rng.random(x.shape)
    r2 = rng.random(x.shape)
    v = alpha * v + options.eta1 * r1 * (swarm.local_best - x) + options.eta2 * r2 * (swarm.global_best - x)
    x, v = enforce_bounds(x + v, v, bounds, periodic)
    f = np.asarray(fitness_fn(x), dtype=float)
    better = f > swarm.local_best_fitness
    lb = np.where(better[:, None], x, swarm.local_best)
    lf = np.where(better, f, swarm.local_best_fitness)
    k = int(np.argmax(lf))
    if lf[k] > swarm.global_best_fitness:
        gb, gf = lb[k].copy(), float(lf[k])
    else:
        gb, gf = swarm.global_best, swarm.global_best_fitness
    return SwarmState(x, v, lb, lf, gb, gf, swarm.iteration + 1, swarm.history + [gf])


def has_converged(history, window: int, tol: float) -> bool:
    """Change of the best value over the last ``window`` entries.

    Relative to the current value, or absolute when that is below 1 (so a
    best value that tends to 0 still registers as converged).
    """
    if len(history) <= window:
        return False
    new, old = history[-1], history[-window]
    return abs(new - old) <= tol * max(abs(new), 1.0)


@dataclass
class PsoResult:
    best: np.ndarray
    best_fitness: float
    iterations: int
    converged: bool
    history: list


def run_pso(fitness_fn, y, bounds, options: PsoOptions, rng, seeds=None, periodic=None) -> PsoResult:
    swarm = init_swarm(y, bounds, options, rng, fitness_fn, seeds, periodic)
    converged = False
    while swarm.iteration < options.max_iter:
        swarm = step(swarm, fitness_fn, options, rng, bounds, periodic)
        # no stopping while the inertia still expands the swarm
        ready = swarm.iteration >= options.min_iter and inertia_at(options, swarm.iteration) < 1.0
        if ready and has_converged(swarm.history, options.window, options.tol):
            converged = True
            break
    return PsoResult(swarm.global_best, swarm.global_best_fitness, swarm.iteration, converged, swarm.history)


# --- deployment problem -------------------------------------------------------------


def fitness_theta(sum_rate, user_violations, bh_violations, e1: float, e2: float):
    """Sum rate minus the violation penalties."""
    return np.asarray(sum_rate) - e1 * np.asarray(user_violations) - e2 * np.asarray(bh_violations)


def default_penalty(eps_u: float) -> float:
    return 10.0 * float(np.log2(1.0 + eps_u))


class DeploymentProblem:
    """Encoding of (deployment, access powers, backhaul powers) for one association.

    Distributed vector: ``[x1 y1 z1 ... xD yD zD, p(U), p_bh(D)]``.
    Array vector: ``[theta, phi, delta_r, xc, yc, zc, p(U), p_bh(D)]``.
    """

    def __init__(self, net: Network, association, options: PsoOptions):
        self.net = net
        self.association = np.asarray(association, dtype=int)
        sc = net.scenario
        self.u, self.d = net.num_users, net.num_uavs
        self.n_dep = 3 * self.d if net.mode == DISTRIBUTED else 6
        budgets = net.bs_budgets()
        if np.any(self.association >= len(budgets)) or np.any(self.association < 0):
            raise DecodeError("association index outside the station set")
        self.budgets = budgets
        self.e1 = options.penalty_user if options.penalty_user is not None else default_penalty(sc.eps_u)
        self.e2 = options.penalty_bh if options.penalty_bh is not None else self.e1
        if net.mode == DISTRIBUTED:
            dep = np.tile(sc.bounds, (self.d, 1))
            per = np.zeros(self.n_dep, dtype=bool)
        else:
            dep = np.array(
                [[0.0, TWO_PI], [0.0, TWO_PI], [sc.daa_min_separation, sc.daa_max_separation], *sc.bounds]
            )
            per = np.array([True, True, False, False, False, False])
        pw = np.column_stack([np.zeros(self.u), budgets[self.association]])
        bh = np.column_stack([np.zeros(self.d), np.full(self.d, sc.donor_max_power)])
        self.bounds = np.vstack([dep, pw, bh])
        self.periodic = np.concatenate([per, np.zeros(self.u + self.d, dtype=bool)])
        self.one_hot = (self.association[:, None] == np.arange(len(budgets))[None]).astype(float)

    @property
    def size(self) -> int:
        return self.n_dep + self.u + self.d

    def encode(self, deployment, alloc: Allocation) -> np.ndarray:
        dep = np.asarray(deployment, dtype=float).reshape(-1)
        if dep.size != self.n_dep:
            raise DecodeError(f"deployment has {dep.size} values, expected {self.n_dep}")
        return np.concatenate([dep, alloc.access_powers, alloc.backhaul_powers])

    def decode(self, x):
        """Split a batch into (deployment, p, p_bh), scaling over-budget stations down."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.size:
            raise DecodeError(f"vector has {x.shape[1]} entries, expected {self.size}")
        if not np.all(np.isfinite(x)):
            raise DecodeError("non-finite entries")
        dep = x[:, : self.n_dep]
        p = np.maximum(x[:, self.n_dep : self.n_dep + self.u], 0.0)
        p_bh = np.maximum(x[:, self.n_dep + self.u :], 0.0)
        totals = p @ self.one_hot  # (M, S)
        totals[:, DONOR] += p_bh.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(totals > self.budgets, self.budgets / totals, 1.0)
        p = p * factor[:, self.association]
        p_bh = p_bh * factor[:, [DONOR]]
        return dep, p, p_bh

    def evaluate(self, x):
        dep, p, p_bh = self.decode(x)
        return self.net.evaluate(dep, self.association, p, p_bh)

    def fitness(self, x) -> np.ndarray:
        ev = self.evaluate(x)
        return fitness_theta(ev.sum_rate, ev.user_violations, ev.bh_violations, self.e1, self.e2)

    def centroid_placement(self, y) -> np.ndarray:
        """Each UAV (or the array centre) above the centroid of its users at minimum altitude."""
        sc = self.net.scenario
        users = sc.user_positions
        dep = np.array(y[: self.n_dep], dtype=float)
        z = sc.altitude[0]
        if self.net.mode == DISTRIBUTED:
            pos = dep.reshape(self.d, 3)
            for k in range(self.d):
                mine = self.association == k + 1
                if mine.any():
                    pos[k] = [*users[mine, :2].mean(axis=0), z]
            return pos.reshape(-1)
        mine = self.association != DONOR
        if mine.any():
            dep[3:6] = [*users[mine, :2].mean(axis=0), z]
        return dep

    def relay_placement(self, y, frac: float) -> np.ndarray:
        """Centroid placement pulled back towards the donor by ``1 - frac``.

        Trades access gain for backhaul gain when the users are far from
        the donor; the array also opens up to its widest separation.
        """
        dep = self.centroid_placement(y)
        donor = np.asarray(self.net.scenario.donor_position[:2], dtype=float)
        if self.net.mode == DISTRIBUTED:
            pos = dep.reshape(self.d, 3)
            pos[:, :2] = donor + frac * (pos[:, :2] - donor)
            return pos.reshape(-1)
        dep[3:5] = donor + frac * (dep[3:5] - donor)
        dep[2] = self.net.scenario.daa_max_separation
        return dep

    def backhaul_first(self, y) -> np.ndarray:
        """Current powers, with the donor budget left after the ground users split over the backhaul."""
        _, p, _ = self.decode(y)
        p = p[0]
        left = self.budgets[DONOR] - float(np.sum(p[self.association == DONOR]))
        p_bh = np.full(self.d, max(left, 0.0) / max(self.d, 1))
        return np.concatenate([p, p_bh])

    def power_seeds(self, y) -> list:
        """Extra starting points.

        The given placement with every budget fully split, the same powers
        scaled up to the tightest budget, or the backhaul served first; the
        centroid placement with either of the first power choices; and the
        placement pulled towards the donor with full or backhaul-first
        powers.
        """
        dep = y[: self.n_dep]
        counts = self.one_hot.sum(axis=0)
        counts[DONOR] += self.d
        share = self.budgets / np.maximum(counts, 1.0)
        full = np.concatenate([dep, share[self.association], np.full(self.d, share[DONOR])])
        # seed powers scaled up until the tightest station hits its budget
        _, p, p_bh = self.decode(y)
        totals = p[0] @ self.one_hot
        totals[DONOR] += p_bh.sum()
        used = totals > 0
        k = np.min(self.budgets[used] / totals[used]) if used.any() else 1.0
        scaled = np.concatenate([dep, k * p[0], k * p_bh[0]])
        cdep = self.centroid_placement(y)
        bh_first = self.backhaul_first(y)
        seeds = [full, scaled, np.concatenate([cdep, full[self.n_dep:]]), np.concatenate([cdep, y[self.n_dep:]]),
                 np.concatenate([dep, bh_first])]
        for frac in (0.5, 0.75):
            rdep = self.relay_placement(y, frac)
            seeds += [np.concatenate([rdep, full[self.n_dep:]]), np.concatenate([rdep, bh_first])]
        return [np.clip(s, self.bounds[:, 0], self.bounds[:, 1]) for s in seeds]


@dataclass
class PbResult:
    deployment: np.ndarray
    allocation: Allocation
    fitness: float
    sum_rate: float
    iterations: int
    converged: bool
    history: list


def default_pb_options(mode: str) -> PsoOptions:
    return PsoOptions(window=20 if mode == DISTRIBUTED else 5, explore=0.5, max_iter=200, min_iter=100)


def solve_pb(net: Network, association, deployment, alloc: Allocation, options: PsoOptions | None = None,
             rng=None, warm=None) -> PbResult:
    """Optimise placement and powers for a fixed association, seeded at the given solution.

    ``warm`` is an optional list of ``(deployment, Allocation)`` pairs added
    to the starting swarm, e.g. an earlier swarm result.
    """
    opts = options or default_pb_options(net.mode)
    rng = rng if rng is not None else np.random.default_rng(0)
    prob = DeploymentProblem(net, association, opts)
    y = prob.encode(deployment, alloc)
    y = np.clip(y, prob.bounds[:, 0], prob.bounds[:, 1])
    seeds = prob.power_seeds(y)
    for d, a in warm or ():
        seeds.append(np.clip(prob.encode(d, a), prob.bounds[:, 0], prob.bounds[:, 1]))
    res = run_pso(prob.fitness, y, prob.bounds, opts, rng, seeds, prob.periodic)
    dep, p, p_bh = prob.decode(res.best)
    ev = prob.evaluate(res.best)
    shape = (net.num_uavs, 3) if net.mode == DISTRIBUTED else (6,)
    out = Allocation(prob.association.copy(), p[0], p_bh[0])
    return PbResult(dep[0].reshape(shape), out, res.best_fitness, float(ev.sum_rate[0]),
                    res.iterations, res.converged, res.history)
