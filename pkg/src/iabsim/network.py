"""Batched network evaluation for a fixed trial.

A :class:`Network` holds everything that does not depend on where the UAVs
fly: user positions, the donor-to-user channels and their Gram matrix, and
the per-link random draws.  Candidate deployments are evaluated in batches
of ``M`` (one row per PSO particle), re-using the same draws so candidates
are compared on identical small-scale fading.

Zero-forcing quantities are computed from Gram matrices instead of explicit
precoders.  For a stacked channel ``H`` with Gram ``G = H H^*`` the
unit-norm ZF column ``k`` gives

* own gain ``|h_k v_k|^2 = 1 / [G^-1]_kk``
* leakage to a row ``x``: ``|(h_x H^* G^-1)_k|^2 / [G^-1]_kk``

The donor stack for terrestrial user ``t`` is ``[backhaul rows, t]`` and its
inverse follows from the block (Schur complement) form, so all users are
handled at once.  ``tests/test_network.py`` checks every quantity against
explicit :func:`~iabsim.precoding.zf_precoder` results.

Resource model: the donor serves one terrestrial user per resource together
with all backhaul streams, round-robin over terrestrial users.  Backhaul
gains and donor leakage are therefore averaged over the terrestrial stacks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import LinkDraws, miso_from_draws, path_loss
from .daa import element_positions_batch, form_sdma_groups
from .metrics import DAA, DISTRIBUTED, DONOR, resource_shares
from .scenario import Scenario

LOADING = 1e-12  # relative diagonal loading for the Gram inverses
SINR_RTOL = 1e-6  # slack when counting threshold violations


@dataclass
class UavLinks:
    """Channels that depend on UAV (or array element) positions, batch first."""

    donor_uav: np.ndarray  # (M, D, N)
    cross: np.ndarray  # (M, D, U): h_d . h_u^*
    gram: np.ndarray  # (M, D, D)
    uav_user: np.ndarray  # (M, D, U) complex SISO
    uav_user_gain: np.ndarray  # (M, D, U)
    uav_uav_gain: np.ndarray  # (M, D, D), [j, d] = |h_{j->d}|^2, zero diagonal


@dataclass
class DonorStreams:
    """ZF quantities of the donor for a fixed set of terrestrial users."""

    tue: np.ndarray  # (T,) user indices
    bh_gain: np.ndarray  # (M, D), averaged over stacks
    direct_gain: np.ndarray  # (M, U), own-stack gain of every user as a tUE
    leak_bh: np.ndarray  # (M, U, T, D) leakage of backhaul stream d in stack t
    leak_tue: np.ndarray  # (M, U, T) leakage of the tUE stream of stack t
    solo_leak: np.ndarray  # (M, U, D) leakage with backhaul rows only

    def interference(self, p_tue, p_bh) -> np.ndarray:
        """Mean donor interference at every user, ``(M, U)``.

        The average runs over the stacks of the *other* terrestrial users,
        so a terrestrial user's own stream never counts as interference.
        ``p_tue`` is ``(M, T)`` and ``p_bh`` is ``(M, D)``.
        """
        m, u = self.direct_gain.shape
        t = len(self.tue)
        solo = np.einsum("mxd,md->mx", self.solo_leak, p_bh)
        if t == 0:
            return solo
        per_stack = np.einsum("mxtd,md->mxt", self.leak_bh, p_bh) + self.leak_tue * p_tue[:, None, :]
        own = np.zeros((u, t), dtype=bool)
        own[self.tue, np.arange(t)] = True
        weights = np.where(own, 0.0, 1.0)
        count = weights.sum(axis=1)  # (U,)
        total = np.einsum("mxt,xt->mx", per_stack, weights)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = total / count
        return np.where(count > 0, mean, solo)


@dataclass
class DaaAccess:
    """ZF quantities of the drone array for fixed SDMA groups."""

    groups: list
    gain: np.ndarray  # (M, U), own ZF gain of each array-served user
    leak: np.ndarray  # (M, U, U), [x, i] leakage to x from the stream of user i


@dataclass
class Evaluation:
    user_sinr: np.ndarray  # (M, U)
    bh_sinr: np.ndarray  # (M, D)
    gated: np.ndarray  # (M, D) bool
    user_gated: np.ndarray  # (M, U) bool
    shares: np.ndarray  # (U,)
    sum_rate: np.ndarray  # (M,) bit/s/Hz
    user_violations: np.ndarray  # (M,)
    bh_violations: np.ndarray  # (M,)


def _inv_loaded(g: np.ndarray) -> np.ndarray:
    n = g.shape[-1]
    if n == 0:
        return g.copy()
    scale = np.trace(g, axis1=-2, axis2=-1).real / n
    load = LOADING * np.maximum(scale, np.finfo(float).tiny)
    return np.linalg.inv(g + load[..., None, None] * np.eye(n))


def _diag_real(a: np.ndarray) -> np.ndarray:
    return np.real(np.diagonal(a, axis1=-2, axis2=-1))


class Network:
    """Fixed part of one trial: scenario, users and random draws."""

    def __init__(self, scenario: Scenario, draws: LinkDraws, mode: str = DISTRIBUTED):
        if mode not in (DISTRIBUTED, DAA):
            raise ValueError(f"unknown mode {mode!r}")
        self.scenario = scenario
        self.draws = draws
        self.mode = mode
        self.params = scenario.channel
        self.noise = scenario.channel.noise_power
        self.users = scenario.user_positions
        self.donor = np.asarray(scenario.donor_position, dtype=float)
        self.num_users = len(self.users)
        self.num_uavs = scenario.num_uavs
        self.n_antennas = scenario.donor_antennas
        if draws.num_users != self.num_users or draws.num_uavs != self.num_uavs:
            raise ValueError("draws do not match the scenario size")
        self.donor_user = miso_from_draws(
            self.donor, self.users, self.n_antennas, self.params,
            draws.donor_user_gains, draws.donor_user_offsets,
        )
        self.user_gram = self.donor_user @ self.donor_user.conj().T

    # -- budgets ---------------------------------------------------------------

    @property
    def num_bs(self) -> int:
        return 1 + (self.num_uavs if self.mode == DISTRIBUTED else min(self.num_uavs, 1))

    def bs_budgets(self) -> np.ndarray:
        s = self.scenario
        if self.mode == DISTRIBUTED:
            return np.concatenate([[s.donor_max_power], np.full(self.num_uavs, s.uav_max_power)])
        return np.array([s.donor_max_power, self.num_uavs * s.uav_max_power])[: self.num_bs]

    # -- geometry-dependent channels ---------------------------------------------

    def uav_links(self, positions) -> UavLinks:
        """Evaluate every UAV-dependent link; ``positions`` is ``(M, D, 3)``."""
        pos = np.asarray(positions, dtype=float)
        if pos.ndim == 2:
            pos = pos[None]
        m, d = pos.shape[0], self.num_uavs
        dr = self.draws
        h = miso_from_draws(
            self.donor, pos, self.n_antennas, self.params,
            dr.donor_uav_gains[None], dr.donor_uav_offsets[None],
        )
        h = h.reshape(m, d, self.n_antennas)
        cross = h @ self.donor_user.conj().T
        gram = h @ np.conj(np.swapaxes(h, -1, -2))
        alpha = self.params.pathloss_exponent
        du = np.sqrt(np.sum((pos[:, :, None, :] - self.users[None, None]) ** 2, axis=-1))
        uav_user = dr.uav_user_coeff[None] * path_loss(du, alpha)
        dd = np.sqrt(np.sum((pos[:, :, None, :] - pos[:, None, :, :]) ** 2, axis=-1))
        vv = np.abs(dr.uav_uav_coeff[None]) ** 2 * path_loss(dd, alpha) ** 2
        vv = vv * (1.0 - np.eye(d))
        return UavLinks(h, cross, gram, uav_user, np.abs(uav_user) ** 2, vv)

    def donor_streams(self, links: UavLinks, tue) -> DonorStreams:
        tue = np.asarray(tue, dtype=int).reshape(-1)
        m, d, u = links.cross.shape
        ai = _inv_loaded(links.gram)  # (M, D, D)
        c_xd = np.conj(np.swapaxes(links.cross, -1, -2))  # (M, U, D) = h_x h_d^*
        e = c_xd @ ai  # (M, U, D); row t equals b_t^* A^-1
        q = self.user_gram[None] - e @ links.cross  # (M, U, U): G[x,t] - e_x b_t
        s_all = np.maximum(_diag_real(q), 0.0)  # Schur complements, own ZF gain as tUE
        ai_diag = _diag_real(ai)  # (M, D)
        if d:
            solo = np.abs(e) ** 2 / ai_diag[:, None, :]
        else:
            solo = np.zeros((m, u, 0))
        if len(tue) == 0:
            bh_gain = 1.0 / ai_diag if d else np.zeros((m, 0))
            return DonorStreams(tue, bh_gain, s_all, np.zeros((m, u, 0, d)), np.zeros((m, u, 0)), solo)
        s_t = s_all[:, tue]  # (M, T)
        safe = np.where(s_t > 0, s_t, np.inf)
        e_t = e[:, tue, :]  # (M, T, D)
        ginv_bh = ai_diag[:, None, :] + np.abs(e_t) ** 2 / safe[..., None]  # (M, T, D)
        bh_gain = np.mean(1.0 / ginv_bh, axis=1) if d else np.zeros((m, 0))
        q_t = q[:, :, tue]  # (M, U, T)
        leak_tue = np.abs(q_t) ** 2 / safe[:, None, :]
        rows = e[:, :, None, :] - (q_t / safe[:, None, :])[..., None] * e_t[:, None, :, :]
        leak_bh = np.abs(rows) ** 2 / ginv_bh[:, None, :, :]
        return DonorStreams(tue, bh_gain, s_all, leak_bh, leak_tue, solo)

    # -- drone array -----------------------------------------------------------

    def array_channels(self, links: UavLinks) -> np.ndarray:
        """``(M, U, D)`` array-to-user rows ``h_{r,u}``."""
        return np.swapaxes(links.uav_user, -1, -2) / np.sqrt(self.num_uavs)

    def daa_access(self, links: UavLinks, aue) -> DaaAccess:
        hr = self.array_channels(links)
        m, u, d = hr.shape
        groups = form_sdma_groups(list(np.asarray(aue, dtype=int)), d) if d else []
        gain = np.zeros((m, u))
        leak = np.zeros((m, u, u))
        for g in groups:
            hg = hr[:, g, :]  # (M, L, D)
            kinv = _inv_loaded(hg @ np.conj(np.swapaxes(hg, -1, -2)))
            kd = _diag_real(kinv)  # (M, L)
            gain[:, g] = 1.0 / kd
            c = hr @ np.conj(np.swapaxes(hg, -1, -2))  # (M, U, L)
            leak[:, :, g] = np.abs(c @ kinv) ** 2 / kd[:, None, :]
        return DaaAccess(groups, gain, leak)

    def daa_candidate_gain(self, links: UavLinks, access: DaaAccess) -> np.ndarray:
        """ZF gain each user would get from the array, ``(M, U)``.

        Array-served users keep their group; any other user joins the last
        group when it has room and otherwise opens a new one.
        """
        hr = self.array_channels(links)
        m, u, d = hr.shape
        out = access.gain.copy()
        members = {i for g in access.groups for i in g}
        last = access.groups[-1] if access.groups and len(access.groups[-1]) < d else []
        for x in range(u):
            if x in members:
                continue
            g = list(last) + [x]
            hg = hr[:, g, :]
            kinv = _inv_loaded(hg @ np.conj(np.swapaxes(hg, -1, -2)))
            out[:, x] = 1.0 / _diag_real(kinv)[:, -1]
        return out

    # -- full evaluation ---------------------------------------------------------

    def deployment_positions(self, deployment) -> np.ndarray:
        """``(M, D, 3)`` transmitter positions from a deployment batch.

        Distributed: ``(M, D, 3)`` UAV positions (or ``(D, 3)``).
        Array: ``(M, 6)`` rows ``[theta, phi, delta_r, x, y, z]`` (or ``(6,)``).
        """
        dep = np.asarray(deployment, dtype=float)
        if self.num_uavs == 0:
            return np.zeros((dep.shape[0] if dep.ndim == 3 else 1, 0, 3))
        if self.mode == DISTRIBUTED:
            return dep.reshape(-1, self.num_uavs, 3)
        return element_positions_batch(dep.reshape(-1, 6), self.num_uavs)

    def evaluate(self, deployment, association, p, p_bh, links: UavLinks | None = None) -> Evaluation:
        """SINRs, gating, sum rate and violation counts for a batch.

        ``association`` is shared by the batch; ``p`` is ``(M, U)`` and
        ``p_bh`` is ``(M, D)``.
        """
        if links is None:
            links = self.uav_links(self.deployment_positions(deployment))
        assoc = np.asarray(association, dtype=int)
        p = np.atleast_2d(np.asarray(p, dtype=float))
        p_bh = np.asarray(p_bh, dtype=float).reshape(p.shape[0], -1)
        sc = self.scenario
        tue = np.flatnonzero(assoc == DONOR)
        aue = np.flatnonzero(assoc > DONOR)
        streams = self.donor_streams(links, tue)
        donor_int = streams.interference(p[:, tue], p_bh)
        dropped = assoc < 0
        m, u = p.shape
        user = np.zeros((m, u))
        if self.mode == DISTRIBUTED:
            one_hot = (assoc[:, None] == np.arange(1, self.num_uavs + 1)[None]).astype(float)  # (U, D)
            totals = p @ one_hot  # (M, D) access power per UAV
            g = links.uav_user_gain  # (M, D, U)
            inter_uav = np.einsum("mdu,md->mu", g, totals)
            user[:, tue] = p[:, tue] * streams.direct_gain[:, tue] / (inter_uav[:, tue] + self.noise)
            if len(aue):
                serving = assoc[aue] - 1
                own = g[:, serving, aue]  # (M, A)
                other = inter_uav[:, aue] - own * totals[:, serving]
                user[:, aue] = p[:, aue] * own / (np.maximum(other, 0.0) + donor_int[:, aue] + self.noise)
            inter_bh = np.einsum("mjd,mj->md", links.uav_uav_gain, totals)
            bh = p_bh * streams.bh_gain / (inter_bh + self.noise)
            gated = bh < sc.eps_d
            gated_bs = np.concatenate([np.zeros((m, 1), dtype=bool), gated], axis=1)
            user_gated = gated_bs[:, np.maximum(assoc, 0)] & ~dropped
        else:
            access = self.daa_access(links, aue)
            inter = np.einsum("mxi,mi->mx", access.leak[:, :, aue], p[:, aue])
            user[:, tue] = p[:, tue] * streams.direct_gain[:, tue] / (inter[:, tue] + self.noise)
            user[:, aue] = p[:, aue] * access.gain[:, aue] / (donor_int[:, aue] + self.noise)
            bh = p_bh * streams.bh_gain / self.noise
            gated = bh < sc.eps_d
            user_gated = np.zeros((m, u), dtype=bool)
            user_gated[:, aue] = np.any(gated, axis=1, keepdims=True)
        shares = _shares(assoc, self.mode, self.num_uavs)
        rates = np.where(user_gated, 0.0, shares * np.log2(1.0 + user))
        user_viol = np.sum((user < sc.eps_u * (1 - SINR_RTOL)) & ~dropped, axis=1)
        bh_viol = np.sum(bh < sc.eps_d * (1 - SINR_RTOL), axis=1)
        return Evaluation(user, bh, gated, user_gated, shares, rates.sum(axis=1), user_viol, bh_viol)


def _shares(assoc, mode, num_uavs):
    return resource_shares(assoc, mode, max(num_uavs, 1))
