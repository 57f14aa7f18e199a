"""Joint user association and power allocation by fixed-point iteration.

For a fixed deployment every user picks the base station that needs the
least power to give it unit SINR, then all powers are scaled to the SINR
targets and clipped to the per-station budgets.  Interference always uses
the previous iterate's powers (a Jacobi update over all users at once).

Base station 0 is the donor; in distributed mode station ``d + 1`` is UAV
``d``, in array mode station 1 is the whole drone array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible
from .metrics import DAA, DISTRIBUTED, DONOR
from .network import Network, UavLinks

LIMIT_POLICIES = ("donor_share", "none")


@dataclass(frozen=True)
class Allocation:
    association: np.ndarray  # (U,) serving station per user
    access_powers: np.ndarray  # (U,) W
    backhaul_powers: np.ndarray  # (D,) W

    def station_totals(self, num_bs: int) -> np.ndarray:
        """Transmit power per station; the donor total includes backhaul."""
        ok = self.association >= 0
        tot = np.bincount(self.association[ok], weights=self.access_powers[ok], minlength=num_bs).astype(float)
        tot[DONOR] += float(np.sum(self.backhaul_powers))
        return tot


@dataclass(frozen=True)
class PaOptions:
    max_iter: int = 200
    tol_power: float = 1e-6  # W, l-inf on access powers
    tol_backhaul: float = 1e-6  # W, l-inf on backhaul powers
    tol_assoc: int = 0  # number of users allowed to switch
    # backhaul limit used when no stream exceeds zeta:
    #   donor_share -> p_b_max / (T + D), none -> zeta itself
    backhaul_limit: str = "donor_share"
    # freeze the association once it revisits an earlier one (breaks the
    # two-cycles that simultaneous switching can cause near ties)
    lock_on_cycle: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.backhaul_limit not in LIMIT_POLICIES:
            raise ValueError(f"backhaul_limit must be one of {LIMIT_POLICIES}")


@dataclass
class PaTrace:
    powers: list = field(default_factory=list)
    backhaul: list = field(default_factory=list)
    associations: list = field(default_factory=list)

    def record(self, alloc: Allocation) -> None:
        self.powers.append(alloc.access_powers.copy())
        self.backhaul.append(alloc.backhaul_powers.copy())
        self.associations.append(alloc.association.copy())

    def __len__(self):
        return len(self.powers)


@dataclass
class PaResult:
    allocation: Allocation
    trace: PaTrace
    iterations: int
    converged: bool
    meets_targets: bool
    locked_at: int | None = None  # iteration at which the association froze


# --- elementary steps ---------------------------------------------------------


def unity_power_matrix(interference, gain, noise: float) -> np.ndarray:
    """Power each station needs to reach unit SINR at each user.

    ``(interference + noise) / gain``; entries with zero (or underflowing)
    gain are ``+inf``.
    """
    interference = np.asarray(interference, dtype=float)
    gain = np.asarray(gain, dtype=float)
    num = interference + noise
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        t = num / gain
    return np.where((gain > 0) & np.isfinite(t), t, np.inf)


def select_min_power(t) -> tuple[np.ndarray, np.ndarray]:
    """Column minima and arg-minima of the unity power matrix.

    Ties go to the lowest station index.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim != 2 or t.shape[0] < 1:
        raise ValueError("expected an (S, U) matrix")
    dead = ~np.isfinite(t).any(axis=0)
    if dead.any():
        raise Infeasible(f"no station can serve users {np.flatnonzero(dead).tolist()}")
    w = np.argmin(t, axis=0)
    return t[w, np.arange(t.shape[1])], w


def scale_to_targets(p, t_bh, eps_u: float, eps_d: float):
    """Scale unit-SINR powers to the user and backhaul targets."""
    if eps_u < 0 or eps_d < 0:
        raise ValueError("targets must be >= 0")
    return eps_u * np.asarray(p, dtype=float), eps_d * np.asarray(t_bh, dtype=float)


def station_limits(budgets, association, num_backhaul: int = 0) -> np.ndarray:
    """Per-station per-user cap ``budget / attached``.

    The donor also counts its ``num_backhaul`` backhaul streams.
    """
    budgets = np.asarray(budgets, dtype=float)
    counts = np.bincount(np.asarray(association, dtype=int), minlength=len(budgets)).astype(float)
    counts[DONOR] += num_backhaul
    return budgets / np.maximum(counts, 1.0)


def clamp_user_powers(p, budgets, association, num_backhaul: int = 0) -> np.ndarray:
    """Cap each user at its station's budget divided by its attached count."""
    lim = station_limits(budgets, association, num_backhaul)
    return np.minimum(np.asarray(p, dtype=float), lim[np.asarray(association, dtype=int)])


def backhaul_budget_zeta(p_b_max: float, tue_powers, num_uavs: int) -> float:
    """Donor power left per backhaul stream after the terrestrial users."""
    if num_uavs < 1:
        raise ValueError("need at least one backhaul stream")
    return (p_b_max - float(np.sum(tue_powers))) / num_uavs


def clamp_backhaul_powers(p_bh, zeta: float, donor_limit: float, scale: float = 1.0) -> np.ndarray:
    """Two-branch backhaul clamp.

    If any (scaled) stream exceeds ``zeta`` all are capped at ``zeta``;
    otherwise they are capped at ``donor_limit``.  A negative ``zeta`` is
    treated as 0.  ``scale`` multiplies the request first (1 when the
    target scaling was already applied).
    """
    p = scale * np.asarray(p_bh, dtype=float)
    zeta = max(float(zeta), 0.0)
    if np.any(p > zeta):
        return np.minimum(p, zeta)
    return np.minimum(p, donor_limit)


# --- candidate terms --------------------------------------------------------------


def candidate_terms(net: Network, links: UavLinks, alloc: Allocation):
    """Interference and gain of every (station, user) pair, each ``(S, U)``.

    Interference excludes the user's own current transmission.
    """
    w = alloc.association
    p = alloc.access_powers
    p_bh = alloc.backhaul_powers
    tue = np.flatnonzero(w == DONOR)
    aue = np.flatnonzero(w != DONOR)
    streams = net.donor_streams(links, tue)
    donor_int = streams.interference(p[None, tue], p_bh[None])[0]
    u, d = net.num_users, net.num_uavs
    if net.mode == DISTRIBUTED:
        g = links.uav_user_gain[0]  # (D, U)
        totals = np.bincount(w, weights=p, minlength=d + 1)[1:]
        own = np.zeros((d, u))
        if len(aue):
            own[w[aue] - 1, aue] = p[aue]
        # interference from UAV j at user u, without u's own power on j
        per_uav = g * (totals[:, None] - own)  # (D, U)
        total_uav = per_uav.sum(axis=0)
        inter = np.empty((d + 1, u))
        inter[DONOR] = total_uav
        inter[1:] = total_uav[None] - per_uav + donor_int[None]
        gain = np.vstack([streams.direct_gain[0], g])
        return inter, gain
    access = net.daa_access(links, aue)
    leak = access.leak[0][:, aue] * p[aue][None]  # (U, A)
    if len(aue):
        leak[aue, np.arange(len(aue))] = 0.0
    inter = np.vstack([leak.sum(axis=1), donor_int])
    gain = np.vstack([streams.direct_gain[0], net.daa_candidate_gain(links, access)[0]])
    return inter, gain


def backhaul_unity_power(net: Network, links: UavLinks, association, p) -> np.ndarray:
    """Power per backhaul stream for unit backhaul SINR, ``(D,)``."""
    w = np.asarray(association)
    tue = np.flatnonzero(w == DONOR)
    streams = net.donor_streams(links, tue)
    gain = streams.bh_gain[0]
    if net.mode == DISTRIBUTED:
        totals = np.bincount(w, weights=p, minlength=net.num_uavs + 1)[1:]
        inter = links.uav_uav_gain[0].T @ totals
    else:
        inter = np.zeros(net.num_uavs)
    return unity_power_matrix(inter, gain, net.noise)


# --- solver -------------------------------------------------------------------------


def initial_allocation(net: Network, rng) -> Allocation:
    """Random association with equal budget shares."""
    s = net.num_bs
    w = rng.integers(0, s, size=net.num_users)
    d = net.num_uavs
    lim = station_limits(net.bs_budgets(), w, d)
    p = lim[w]
    p_bh = np.full(d, lim[DONOR])
    return Allocation(w, p, p_bh)


def _project(net: Network, w, p, t_bh, opts: PaOptions) -> Allocation:
    sc = net.scenario
    d = net.num_uavs
    p = clamp_user_powers(p, net.bs_budgets(), w, d)
    if d == 0:
        return Allocation(w, p, np.zeros(0))
    tue_pw = p[w == DONOR]
    zeta = backhaul_budget_zeta(sc.donor_max_power, tue_pw, d)
    if opts.backhaul_limit == "donor_share":
        limit = sc.donor_max_power / (len(tue_pw) + d)
    else:
        limit = max(zeta, 0.0)
    p_bh = np.where(np.isfinite(t_bh), t_bh, np.inf)
    p_bh = clamp_backhaul_powers(p_bh, zeta, limit)
    return Allocation(w, p, p_bh)


def pa_step(net: Network, links: UavLinks, alloc: Allocation, opts: PaOptions, locked=None) -> Allocation:
    sc = net.scenario
    inter, gain = candidate_terms(net, links, alloc)
    t = unity_power_matrix(inter, gain, net.noise)
    if locked is None:
        p_unit, w = select_min_power(t)
    else:
        w = np.asarray(locked)
        p_unit = t[w, np.arange(len(w))]
        if not np.all(np.isfinite(p_unit)):
            raise Infeasible("a locked association lost its link")
    p, _ = scale_to_targets(p_unit, np.zeros(0), sc.eps_u, sc.eps_d)
    t_bh = backhaul_unity_power(net, links, w, p) if net.num_uavs else np.zeros(0)
    _, p_bh = scale_to_targets(p, t_bh, sc.eps_u, sc.eps_d)
    return _project(net, w, p, p_bh, opts)


def meets_targets(net: Network, deployment, alloc: Allocation, links: UavLinks | None = None) -> bool:
    ev = net.evaluate(deployment, alloc.association, alloc.access_powers[None],
                      alloc.backhaul_powers[None], links=links)
    return bool(ev.user_violations[0] == 0 and ev.bh_violations[0] == 0)


def solve_pa(net: Network, deployment, options: PaOptions | None = None, rng=None,
             init: Allocation | None = None) -> PaResult:
    """Run the fixed-point iteration for one deployment.

    ``init`` overrides the random initial association (used when the
    orchestrator warm-starts from a previous solution).
    """
    opts = options or PaOptions()
    links = net.uav_links(net.deployment_positions(deployment))
    if init is None:
        if rng is None:
            rng = np.random.default_rng(0)
        init = initial_allocation(net, rng)
    alloc = init
    trace = PaTrace()
    trace.record(alloc)
    converged = False
    it = 0
    locked = None
    locked_at = None
    seen = {alloc.association.tobytes()}
    for it in range(1, opts.max_iter + 1):
        new = pa_step(net, links, alloc, opts, locked)
        trace.record(new)
        key = new.association.tobytes()
        if locked is None and opts.lock_on_cycle:
            changed = np.any(new.association != alloc.association)
            if changed and key in seen:
                locked, locked_at = new.association.copy(), it
            seen.add(key)
        dp = np.max(np.abs(new.access_powers - alloc.access_powers), initial=0.0)
        dbh = np.max(np.abs(new.backhaul_powers - alloc.backhaul_powers), initial=0.0)
        dw = int(np.sum(new.association != alloc.association))
        alloc = new
        if dp <= opts.tol_power and dbh <= opts.tol_backhaul and dw <= opts.tol_assoc:
            converged = True
            break
    ok = meets_targets(net, deployment, alloc, links)
    return PaResult(alloc, trace, it, converged, ok, locked_at)
