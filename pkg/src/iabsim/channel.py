"""Geometric multipath channel model and array steering vectors.

Every link is a sum of ``K`` paths with ``CN(0, 1)`` gains and angles of
departure spread uniformly around the line-of-sight azimuth, scaled by the
``1 / (1 + d**alpha)`` path loss.  The random part of a link (path gains and
normalised angle offsets) is drawn once per trial and kept separate from the
geometry, so the same draws can be re-evaluated for any candidate UAV
placement.

The donor ULA lies along the y-axis; azimuth is measured from the +x
broadside direction, so ``los_angle((0,0,0), (1,0,0)) == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry
from .units import dbm_to_watt

# seed-derivation tags, one per link family
DONOR_USER, DONOR_UAV, UAV_USER, UAV_UAV = 0, 1, 2, 3


@dataclass(frozen=True)
class ChannelParams:
    num_paths: int = 6
    pathloss_exponent: float = 3.0
    asd: float = float(np.deg2rad(5.0))
    spacing_ratio: float = 0.5
    noise_power: float = dbm_to_watt(-104.0)

    def __post_init__(self) -> None:
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if not self.pathloss_exponent > 0:
            raise ValueError("pathloss_exponent must be > 0")
        if self.asd < 0:
            raise ValueError("asd must be >= 0")
        if not self.spacing_ratio > 0:
            raise ValueError("spacing_ratio must be > 0")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be > 0")


def steering_vector(theta: float, n_elements: int, spacing_ratio: float) -> np.ndarray:
    """Unit-norm ULA response as an ``(n, 1)`` column."""
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    m = np.arange(n_elements)
    a = np.exp(-2j * np.pi * spacing_ratio * m * np.sin(theta)) / np.sqrt(n_elements)
    return a.reshape(-1, 1)


def los_angle(tx, rx) -> float:
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if np.array_equal(tx, rx):
        raise DegenerateGeometry("transmitter and receiver coincide")
    return float(np.arctan2(rx[1] - tx[1], rx[0] - tx[0]))


def path_loss(distance, exponent: float):
    """Amplitude scaling ``1 / (1 + d**alpha)``."""
    return 1.0 / (1.0 + np.asarray(distance, dtype=float) ** exponent)


def draw_paths(rng: np.random.Generator, num_paths: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``K`` complex path gains and AoD offsets normalised to [-1, 1]."""
    re = rng.standard_normal(num_paths)
    im = rng.standard_normal(num_paths)
    gains = (re + 1j * im) / np.sqrt(2.0)
    offsets = rng.uniform(-1.0, 1.0, num_paths)
    return gains, offsets


def miso_from_draws(tx, rx, n_elements: int, params: ChannelParams, gains, offsets) -> np.ndarray:
    """Evaluate the multipath channel for fixed path draws.

    ``tx`` and ``rx`` broadcast against each other with a trailing axis of 3;
    ``gains`` and ``offsets`` carry a trailing path axis that broadcasts with
    the leading link axes.  Returns an array of shape ``link_shape + (n,)``.
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    delta = rx - tx
    dist = np.sqrt(np.sum(delta**2, axis=-1))
    theta_los = np.arctan2(delta[..., 1], delta[..., 0])
    theta = theta_los[..., None] + params.asd * np.asarray(offsets)
    # conj(a(theta)) has phase +2*pi*r*m*sin(theta).  Element m = b*q + r is
    # split as z**(b*q) * z**r so only two short exponent tables are needed.
    x = 2.0 * np.pi * params.spacing_ratio * np.sin(theta)
    b = max(1, int(np.ceil(np.sqrt(n_elements))))
    q = -(-n_elements // b)
    low = np.exp(1j * x[..., None] * np.arange(b))  # (..., K, b)
    high = np.exp(1j * x[..., None] * (b * np.arange(q)))  # (..., K, q)
    weighted = np.asarray(gains)[..., None] * low
    paths = np.swapaxes(high, -1, -2) @ weighted  # (..., q, b)
    h = paths.reshape(paths.shape[:-2] + (q * b,))[..., :n_elements]
    k = np.shape(offsets)[-1]
    h = h / np.sqrt(k * n_elements)
    return h * path_loss(dist, params.pathloss_exponent)[..., None]


def siso_from_draws(tx, rx, params: ChannelParams, coeff):
    """SISO channel ``coeff / (1 + d**alpha)`` where ``coeff = sum(g) / sqrt(K)``."""
    delta = np.asarray(rx, dtype=float) - np.asarray(tx, dtype=float)
    dist = np.sqrt(np.sum(delta**2, axis=-1))
    return coeff * path_loss(dist, params.pathloss_exponent)


def _check_distinct(tx, rx) -> None:
    if np.any(np.all(np.asarray(tx, dtype=float) == np.asarray(rx, dtype=float), axis=-1)):
        raise DegenerateGeometry("transmitter and receiver coincide")


def sample_miso_channel(tx, rx, n_elements: int, params: ChannelParams, rng) -> np.ndarray:
    """One ``(1, n)`` realisation of the donor-array channel."""
    _check_distinct(tx, rx)
    gains, offsets = draw_paths(rng, params.num_paths)
    return miso_from_draws(tx, rx, n_elements, params, gains, offsets).reshape(1, n_elements)


def sample_siso_channel(tx, rx, params: ChannelParams, rng) -> complex:
    return complex(sample_miso_channel(tx, rx, 1, params, rng)[0, 0])


def sample_daa_channel(element_positions, rx, params: ChannelParams, rng) -> np.ndarray:
    """``(1, D)`` drone-array channel: per-element SISO links scaled by ``1/sqrt(D)``.

    Element ``d`` draws from the ``d``-th child of ``rng.spawn(D)``.
    """
    elements = np.atleast_2d(np.asarray(element_positions, dtype=float))
    d = elements.shape[0]
    if d < 1:
        raise ValueError("need at least one element")
    children = rng.spawn(d)
    h = [sample_siso_channel(e, rx, params, child) for e, child in zip(elements, children)]
    return np.asarray(h, dtype=complex).reshape(1, d) / np.sqrt(d)


def link_rng(seed: int, kind: int, i: int, j: int = 0) -> np.random.Generator:
    """Independent generator for one link, derived from the trial seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(kind, i, j)))


@dataclass(frozen=True)
class LinkDraws:
    """Small-scale randomness of one trial, independent of geometry."""

    seed: int
    num_paths: int
    donor_user_gains: np.ndarray  # (U, K)
    donor_user_offsets: np.ndarray
    donor_uav_gains: np.ndarray  # (D, K)
    donor_uav_offsets: np.ndarray
    uav_user_coeff: np.ndarray  # (D, U) complex, sum(g)/sqrt(K)
    uav_uav_coeff: np.ndarray  # (D, D)

    @classmethod
    def generate(cls, seed: int, num_users: int, num_uavs: int, num_paths: int) -> "LinkDraws":
        def paths(kind, i, j=0):
            return draw_paths(link_rng(seed, kind, i, j), num_paths)

        du = [paths(DONOR_USER, u) for u in range(num_users)]
        dd = [paths(DONOR_UAV, d) for d in range(num_uavs)]
        k = np.sqrt(num_paths)
        uu = np.array(
            [[paths(UAV_USER, d, u)[0].sum() / k for u in range(num_users)] for d in range(num_uavs)],
            dtype=complex,
        ).reshape(num_uavs, num_users)
        vv = np.array(
            [[paths(UAV_UAV, j, d)[0].sum() / k for d in range(num_uavs)] for j in range(num_uavs)],
            dtype=complex,
        ).reshape(num_uavs, num_uavs)

        def stack(items, idx, rows):
            if not items:
                return np.zeros((0, num_paths), dtype=complex if idx == 0 else float)
            return np.array([it[idx] for it in items]).reshape(rows, num_paths)

        return cls(
            seed=seed,
            num_paths=num_paths,
            donor_user_gains=stack(du, 0, num_users),
            donor_user_offsets=stack(du, 1, num_users),
            donor_uav_gains=stack(dd, 0, num_uavs),
            donor_uav_offsets=stack(dd, 1, num_uavs),
            uav_user_coeff=uu,
            uav_uav_coeff=vv,
        )

    @property
    def num_users(self) -> int:
        return self.donor_user_gains.shape[0]

    @property
    def num_uavs(self) -> int:
        return self.donor_uav_gains.shape[0]


@dataclass(frozen=True)
class ChannelSet:
    """Every link of one deployment, evaluated from a fixed set of draws."""

    donor_user: np.ndarray  # (U, N)
    donor_uav: np.ndarray  # (D, N); DAA elements in array mode
    uav_user: np.ndarray  # (D, U) complex scalars
    uav_uav: np.ndarray  # (D, D)
    daa_user: np.ndarray | None = field(default=None)  # (U, D), array mode only


def realize_channels(
    donor_position,
    n_antennas: int,
    users,
    uav_positions,
    params: ChannelParams,
    draws: LinkDraws,
    daa: bool = False,
) -> ChannelSet:
    """Evaluate all links for given node positions.

    In array mode ``uav_positions`` are the drone-element positions.
    """
    users = np.asarray(users, dtype=float).reshape(-1, 3)
    uavs = np.asarray(uav_positions, dtype=float).reshape(-1, 3)
    donor = np.asarray(donor_position, dtype=float)
    _check_distinct(donor, users)
    if len(uavs):
        _check_distinct(donor, uavs)
        _check_distinct(uavs[:, None, :], users[None, :, :])
    donor_user = miso_from_draws(
        donor, users, n_antennas, params, draws.donor_user_gains, draws.donor_user_offsets
    )
    donor_uav = miso_from_draws(
        donor, uavs, n_antennas, params, draws.donor_uav_gains, draws.donor_uav_offsets
    )
    uav_user = siso_from_draws(uavs[:, None, :], users[None, :, :], params, draws.uav_user_coeff)
    with np.errstate(invalid="ignore"):
        uav_uav = siso_from_draws(uavs[:, None, :], uavs[None, :, :], params, draws.uav_uav_coeff)
    np.fill_diagonal(uav_uav, 0.0)
    daa_user = uav_user.T / np.sqrt(len(uavs)) if daa and len(uavs) else None
    return ChannelSet(donor_user, donor_uav, uav_user, uav_uav, daa_user)
