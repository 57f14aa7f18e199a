"""Received SINR expressions, backhaul gating and the network sum rate.

The SINR functions are literal ratios and broadcast over leading axes; the
interferer dimension is always the last one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

DONOR = 0
UNSERVED = -1  # user refused by admission control
DISTRIBUTED = "distributed"
DAA = "daa"


def _ratio(signal, interference, noise):
    return np.asarray(signal, dtype=float) / (np.asarray(interference, dtype=float) + noise)


def _dot_last(powers, gains):
    powers = np.asarray(powers, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if powers.ndim == 0 and gains.ndim == 0:
        return powers * gains
    return np.sum(powers * gains, axis=-1)


def sinr_backhaul_distributed(p_bh, gain, interferer_powers, interferer_gains, noise):
    """Backhaul SINR at a drone: ``p|hv|^2 / (sum_j |h_jd|^2 P_j + noise)``.

    ``interferer_powers`` are the total access powers of the other UAVs and
    ``interferer_gains`` the UAV-to-UAV gains ``|h_jd|^2``.
    """
    return _ratio(np.multiply(p_bh, gain), _dot_last(interferer_powers, interferer_gains), noise)


def sinr_tue_distributed(p, gain, uav_powers, uav_gains, noise):
    """Direct-link SINR at a terrestrial user, interfered by every UAV."""
    return _ratio(np.multiply(p, gain), _dot_last(uav_powers, uav_gains), noise)


def sinr_aue_distributed(p, gain, uav_powers, uav_gains, donor_powers, donor_leakage, noise):
    """Access SINR at an aerial-served user.

    Intra-tier interference from the other UAVs plus the donor streams
    leaking through ``|h_ba v_bk|^2``.
    """
    interference = _dot_last(uav_powers, uav_gains) + _dot_last(donor_powers, donor_leakage)
    return _ratio(np.multiply(p, gain), interference, noise)


def sinr_backhaul_daa(p_bh, gain, noise):
    return _ratio(np.multiply(p_bh, gain), 0.0, noise)


def sinr_tue_daa(p, gain, daa_powers, daa_leakage, noise):
    return _ratio(np.multiply(p, gain), _dot_last(daa_powers, daa_leakage), noise)


def sinr_aue_daa(p, gain, donor_powers, donor_leakage, noise):
    return _ratio(np.multiply(p, gain), _dot_last(donor_powers, donor_leakage), noise)


@dataclass(frozen=True)
class SinrReport:
    """Linear SINRs for one network state.

    ``association[u]`` is 0 for the donor and ``d + 1`` for UAV ``d``; in
    array mode every aerial-served user has association 1.  ``-1`` marks a
    user that was not admitted.
    """

    user: np.ndarray  # (U,)
    backhaul: np.ndarray  # (D,)
    association: np.ndarray  # (U,)
    mode: str = DISTRIBUTED
    gated: np.ndarray | None = None  # (D,) bool

    @property
    def tue_mask(self) -> np.ndarray:
        return np.asarray(self.association) == DONOR

    @property
    def aue_mask(self) -> np.ndarray:
        return np.asarray(self.association) > DONOR

    @property
    def tue(self) -> np.ndarray:
        return self.user[self.tue_mask]

    @property
    def aue(self) -> np.ndarray:
        return self.user[self.aue_mask]

    @property
    def served(self) -> np.ndarray:
        """Admitted users whose serving station is not gated."""
        return (np.asarray(self.association) >= 0) & ~self.user_gated

    @property
    def gated_uavs(self) -> frozenset:
        if self.gated is None:
            return frozenset()
        return frozenset(int(d) for d in np.flatnonzero(self.gated))

    @property
    def user_gated(self) -> np.ndarray:
        """Users whose serving UAV lost its backhaul."""
        assoc = np.asarray(self.association)
        if self.gated is None or not np.any(self.gated):
            return np.zeros(assoc.shape, dtype=bool)
        if self.mode == DAA:
            return assoc > DONOR
        gated_bs = np.concatenate([[False], np.asarray(self.gated, dtype=bool)])
        return (assoc > DONOR) & gated_bs[np.maximum(assoc, 0)]


def apply_backhaul_gating(report: SinrReport, eps_d: float) -> SinrReport:
    """Mark UAVs whose backhaul SINR is below ``eps_d``."""
    gated = np.asarray(report.backhaul, dtype=float) < eps_d
    return replace(report, gated=gated)


def resource_shares(association, mode: str, num_uavs: int) -> np.ndarray:
    """Fraction of time/frequency resources each user receives.

    Terrestrial users share the donor direct link round-robin, users of a
    distributed UAV share that UAV round-robin, and array-served users share
    by SDMA group (``1 / num_groups``).  Users that were not admitted get 0.
    """
    assoc = np.asarray(association, dtype=int)
    shares = np.zeros(assoc.shape, dtype=float)
    if mode == DAA:
        tue = assoc == DONOR
        aue = assoc > DONOR
        if tue.any():
            shares[tue] = 1.0 / tue.sum()
        n_aue = int(aue.sum())
        if n_aue:
            shares[aue] = 1.0 / int(np.ceil(n_aue / num_uavs))
        return shares
    ok = assoc >= 0
    counts = np.bincount(assoc[ok], minlength=num_uavs + 1)
    shares[ok] = 1.0 / counts[assoc[ok]]
    return shares


def sum_rate(report: SinrReport, resource_shares, bandwidth: float | None = None):
    """Share-weighted sum of ``log2(1 + SINR)``; gated users contribute 0.

    Returns ``(spectral_efficiency, throughput)``; throughput is ``None``
    unless ``bandwidth`` (Hz) is given.
    """
    shares = np.asarray(resource_shares, dtype=float)
    if np.any(shares < 0) or np.any(shares > 1):
        raise ValueError("resource shares must lie in [0, 1]")
    rates = shares * np.log2(1.0 + np.asarray(report.user, dtype=float))
    rates = np.where(report.user_gated, 0.0, rates)
    se = float(np.sum(rates))
    return se, (se * bandwidth if bandwidth is not None else None)
