"""Alternating optimisation of association/power and placement.

The regular order runs the fixed-point allocation first and the swarm
placement second in every outer iteration; the reversed order swaps them.
The best feasible solution seen at any stage is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.cluster.vq import kmeans2

from .fixed_point import Allocation, PaOptions, initial_allocation, solve_pa, station_limits
from .metrics import DAA, DISTRIBUTED, DONOR, UNSERVED, SinrReport
from .network import Network
from .pso import PsoOptions, default_pb_options, fitness_theta, default_penalty, solve_pb


@dataclass(frozen=True)
class SolveOptions:
    max_outer: int = 20
    tol_assoc: int = 0  # users allowed to switch between outer iterations
    tol_deploy: float = 1.0  # l-inf on the deployment vector (m / rad)
    tol_rate: float = 1e-3  # bit/s/Hz
    pa: PaOptions = field(default_factory=PaOptions)
    pso: PsoOptions | None = None  # None: mode defaults
    pso_overrides: dict = field(default_factory=dict)  # applied on top of the mode defaults
    admission: bool = True  # refuse users that still miss the access target

    def pso_for(self, mode: str) -> PsoOptions:
        if self.pso is not None:
            return self.pso
        return replace(default_pb_options(mode), **self.pso_overrides)

    def __post_init__(self):
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


@dataclass
class Solution:
    deployment: np.ndarray  # (D, 3) positions or (6,) array parameters
    allocation: Allocation
    sinr: SinrReport
    sum_rate: float  # bit/s/Hz
    throughput: float  # bit/s
    fitness: float
    feasible: bool
    iterations: int  # outer iterations
    pso_iterations: int
    converged_by: str  # association | deployment | sum_rate | no_uavs | max_iterations
    history: list = field(default_factory=list)  # sum rate after every stage
    dropped: tuple = ()  # users refused by admission control

    @property
    def converged(self) -> bool:
        return self.converged_by != "max_iterations"


def _kmeans(xy, k: int, rng, restarts: int = 10):
    """Lowest-distortion k-means over several k-means++ restarts."""
    best = None
    for _ in range(restarts):
        centres, labels = kmeans2(xy, k, seed=int(rng.integers(2**31)), minit="++")
        cost = float(np.sum((xy - centres[labels]) ** 2))
        if best is None or cost < best[0]:
            best = (cost, centres, labels)
    return best[1], best[2]


def initial_deployment(net: Network, rng) -> np.ndarray:
    """Starting placement: UAVs above k-means centres of the users.

    The array starts above the centre of the most populated cluster,
    horizontal, at the minimum element separation.
    """
    sc = net.scenario
    d = net.num_uavs
    z0 = sc.altitude[0] + 0.2 * (sc.altitude[1] - sc.altitude[0])
    if d == 0:
        return np.zeros((0, 3))
    xy = sc.user_positions[:, :2]
    k = min(d, len(xy))
    centres, labels = _kmeans(xy, k, rng)
    if net.mode == DISTRIBUTED:
        extra = centres[np.arange(d) % k]
        return np.column_stack([extra, np.full(d, z0)])
    big = np.bincount(labels, minlength=k).argmax()
    return np.array([0.0, 0.0, sc.daa_min_separation, centres[big, 0], centres[big, 1], z0])


def nearest_allocation(net: Network, deployment) -> Allocation:
    """Each user on its closest station, equal budget shares.

    Gives placement-first runs a geometric starting association instead
    of a random one.
    """
    users = net.scenario.user_positions
    uavs = net.deployment_positions(np.asarray(deployment, dtype=float)[None])[0]
    if net.mode == DISTRIBUTED:
        stations = np.vstack([net.donor[None], uavs])
    else:
        stations = np.vstack([net.donor[None], uavs.mean(axis=0, keepdims=True)])
    dist = np.linalg.norm(users[:, None, :] - stations[None], axis=-1)
    w = dist.argmin(axis=1)
    lim = station_limits(net.bs_budgets(), w, net.num_uavs)
    return Allocation(w, lim[w], np.full(net.num_uavs, lim[DONOR]))


def _report(net: Network, deployment, alloc: Allocation):
    ev = net.evaluate(deployment, alloc.association, alloc.access_powers[None], alloc.backhaul_powers[None])
    rep = SinrReport(ev.user_sinr[0], ev.bh_sinr[0], alloc.association.copy(),
                     net.mode, ev.gated[0])
    return ev, rep


def is_feasible(net: Network, ev, association, budgets_ok: bool = True) -> bool:
    """Every admitted user that is not gated meets the access target."""
    sc = net.scenario
    served = ~ev.user_gated[0] & (np.asarray(association) != UNSERVED)
    ok_users = np.all(ev.user_sinr[0][served] >= sc.eps_u * (1 - 1e-6))
    return bool(ok_users and budgets_ok)


def admit(net: Network, deployment, alloc: Allocation):
    """Refuse users until every admitted, non-gated user meets the access target.

    The user furthest below the target goes first (its power is released
    and it leaves the precoder); the rest are re-evaluated after each
    removal.  Returns the new allocation, its evaluation and the refused users.
    """
    eps = net.scenario.eps_u * (1 - 1e-6)
    w = alloc.association.copy()
    p = alloc.access_powers.copy()
    dropped = []
    while True:
        ev, _ = _report(net, deployment, Allocation(w, p, alloc.backhaul_powers))
        sinr = ev.user_sinr[0]
        bad = (w != UNSERVED) & ~ev.user_gated[0] & (sinr < eps)
        if not bad.any():
            break
        worst = int(np.flatnonzero(bad)[np.argmin(sinr[bad])])
        w[worst], p[worst] = UNSERVED, 0.0
        dropped.append(worst)
    return Allocation(w, p, alloc.backhaul_powers.copy()), ev, tuple(sorted(dropped))


class _Tracker:
    def __init__(self, net: Network, e1: float, admission: bool = True):
        self.net = net
        self.e1 = e1
        self.admission = admission
        self.best = None
        self.key = None
        self.history = []

    def offer(self, deployment, alloc: Allocation):
        """Keep the candidate with the best penalised objective; refuse its failing users."""
        ev, rep = _report(self.net, deployment, alloc)
        rate = float(ev.sum_rate[0])
        self.history.append(rate)
        feas = is_feasible(self.net, ev, alloc.association)
        theta = float(fitness_theta(ev.sum_rate, ev.user_violations, ev.bh_violations, self.e1, self.e1)[0])
        if self.key is None or theta > self.key:
            kept, dropped = alloc, ()
            if self.admission and not feas:
                kept, _, dropped = admit(self.net, deployment, alloc)
            self.key = theta
            self.best = (np.array(deployment, dtype=float), kept, theta, feas, dropped)
        return rate


def _deploy_change(a, b) -> float:
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


def _finish(net: Network, tracker: _Tracker, iterations: int, pso_iters: int, why: str) -> Solution:
    dep, alloc, theta, feas, dropped = tracker.best
    ev, rep = _report(net, dep, alloc)
    rate = float(ev.sum_rate[0])
    return Solution(dep, alloc, rep, rate, rate * net.scenario.bandwidth, theta, feas,
                    iterations, pso_iters, why, tracker.history, dropped)


def solve(net: Network, options: SolveOptions | None = None, rng=None, reverse: bool = False) -> Solution:
    """Alternate allocation and placement until one of the stopping rules fires."""
    opts = options or SolveOptions()
    rng = rng if rng is not None else np.random.default_rng(0)
    pso_opts = opts.pso_for(net.mode)
    e1 = pso_opts.penalty_user if pso_opts.penalty_user is not None else default_penalty(net.scenario.eps_u)
    tracker = _Tracker(net, e1, opts.admission)
    dep = initial_deployment(net, rng)
    alloc = initial_allocation(net, rng)
    if reverse and net.num_uavs:
        alloc = nearest_allocation(net, dep)
    pso_iters = 0

    if net.num_uavs == 0:
        pa = solve_pa(net, dep, opts.pa, rng, init=alloc)
        tracker.offer(dep, pa.allocation)
        return _finish(net, tracker, 1, 0, "no_uavs")

    prev_w = None
    prev_rate = None
    warm = []
    why = "max_iterations"
    i = 0
    for i in range(1, opts.max_outer + 1):
        for stage in (("pb", "pa") if reverse else ("pa", "pb")):
            if stage == "pa":
                pa = solve_pa(net, dep, opts.pa, rng, init=alloc)
                alloc = pa.allocation
                tracker.offer(dep, alloc)
                w = alloc.association
                if i > 1 and prev_w is not None and int(np.sum(w != prev_w)) <= opts.tol_assoc:
                    why = "association"
                    break
                prev_w = w.copy()
            else:
                pb = solve_pb(net, alloc.association, dep, alloc, pso_opts, rng, warm)
                warm = [(pb.deployment, pb.allocation)]
                pso_iters += pb.iterations
                rate = tracker.offer(pb.deployment, pb.allocation)
                moved = _deploy_change(pb.deployment, dep)
                dep, alloc = pb.deployment, pb.allocation
                if i > 1 and (moved <= opts.tol_deploy or abs(rate - prev_rate) <= opts.tol_rate):
                    why = "deployment" if moved <= opts.tol_deploy else "sum_rate"
                    break
                prev_rate = rate
        else:
            continue
        break
    return _finish(net, tracker, i, pso_iters, why)


def solve_reversed(net: Network, options: SolveOptions | None = None, rng=None) -> Solution:
    """Placement first, association second."""
    return solve(net, options, rng, reverse=True)
