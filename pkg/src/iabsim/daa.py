"""Drone antenna array (DAA) geometry and SDMA grouping.

The array is ``D`` single-antenna drones on a line through ``center``.  By
default ("skewed") its direction is the map
``[cos(phi)cos(theta), cos(phi)sin(theta), sin(phi)sin(theta)]``, rescaled to
unit length so that adjacent drones are always exactly ``delta_r`` apart.
Where that vector vanishes (``cos(phi) = sin(theta) = 0``) the spherical
direction ``[cos(phi)cos(theta), cos(phi)sin(theta), sin(phi)]`` is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DaaConfig:
    theta: float  # azimuth, rad
    phi: float  # elevation, rad
    delta_r: float  # element separation, m
    center: tuple[float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.delta_r > 0:
            raise ValueError("delta_r must be > 0")

    def as_vector(self) -> np.ndarray:
        return np.array([self.theta, self.phi, self.delta_r, *self.center])

    @classmethod
    def from_vector(cls, x) -> "DaaConfig":
        x = np.asarray(x, dtype=float)
        return cls(x[0], x[1], x[2], tuple(x[3:6]))


def array_direction(theta, phi, orientation: str = "skewed") -> np.ndarray:
    """Unit direction of the array axis; broadcasts over ``theta``/``phi``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    spherical = np.stack(
        [np.cos(phi) * np.cos(theta), np.cos(phi) * np.sin(theta), np.sin(phi) * np.ones_like(theta)],
        axis=-1,
    )
    if orientation == "spherical":
        return spherical
    if orientation != "skewed":
        raise ValueError(f"unknown orientation {orientation!r}")
    raw = np.stack(
        [np.cos(phi) * np.cos(theta), np.cos(phi) * np.sin(theta), np.sin(phi) * np.sin(theta)],
        axis=-1,
    )
    norm = np.linalg.norm(raw, axis=-1, keepdims=True)
    degenerate = norm < 1e-12
    safe = np.where(degenerate, 1.0, norm)
    return np.where(degenerate, spherical, raw / safe)


def element_offsets(n: int) -> np.ndarray:
    """``(D - 2d + 1) / 2`` for ``d = 1..D``."""
    d = np.arange(1, n + 1)
    return (n - 2 * d + 1) / 2.0


def element_positions(cfg: DaaConfig, n: int, orientation: str = "skewed") -> np.ndarray:
    if n < 1:
        raise ValueError("D must be >= 1")
    direction = array_direction(cfg.theta, cfg.phi, orientation)
    return np.asarray(cfg.center) + (cfg.delta_r * element_offsets(n))[:, None] * direction


def element_positions_batch(params: np.ndarray, n: int, orientation: str = "skewed") -> np.ndarray:
    """Vectorised :func:`element_positions` for rows ``[theta, phi, delta_r, x, y, z]``.

    Returns ``(M, D, 3)``.
    """
    params = np.atleast_2d(params)
    direction = array_direction(params[:, 0], params[:, 1], orientation)  # (M, 3)
    offs = element_offsets(n)  # (D,)
    return params[:, None, 3:6] + (params[:, 2, None] * offs)[:, :, None] * direction[:, None, :]


def validate_separation(cfg: DaaConfig, n: int, min_sep: float) -> bool:
    """True when adjacent drones are at least ``min_sep`` apart."""
    if n < 2:
        return True
    return bool(cfg.delta_r >= min_sep)


def form_sdma_groups(aue_set, n: int) -> list[list[int]]:
    """Split users, in the given order, into consecutive groups of at most ``n``."""
    if n < 1:
        raise ValueError("D must be >= 1")
    users = list(aue_set)
    return [users[i : i + n] for i in range(0, len(users), n)]
