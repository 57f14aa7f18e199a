"""Scenario description, user-layout generators and JSON configuration I/O.

Configuration documents are JSON objects; every field is optional and falls
back to the defaults below.  Powers are strings with a unit suffix (``"46 dBm"``, ``"2.5 W"``,
``"300 mW"``) or bare numbers in watts; thresholds are ``"3 dB"`` strings or
bare linear ratios.  See ``docs/scenario.schema.md`` for the full layout.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channel import ChannelParams
from .errors import ParseError, ValidationError
from .units import db_to_linear, dbm_to_watt

LAYOUTS = ("multi_cluster", "dual_cluster", "generic", "uniform")


@dataclass(frozen=True)
class Layout:
    kind: str = "multi_cluster"
    num_clusters: int | None = None  # None: one cluster per UAV
    cluster_std: float = 20.0
    clustered_fraction: float = 0.6
    hotspot_fraction: float = 0.8
    donor_cluster_std: float = 40.0
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    donor_position: tuple = (0.0, 0.0, 25.0)
    donor_antennas: int = 64
    num_uavs: int = 4
    num_users: int = 25
    users: tuple = ()
    users_fixed: bool = False
    donor_max_power: float = dbm_to_watt(46.0)
    uav_max_power: float = dbm_to_watt(36.0)
    eps_u: float = db_to_linear(3.0)
    eps_d: float = db_to_linear(3.0)
    channel: ChannelParams = field(default_factory=ChannelParams)
    region: tuple = ((-200.0, 200.0), (-200.0, 200.0))
    altitude: tuple = (20.0, 150.0)
    user_height: float = 0.0
    bandwidth: float = 20e6
    carrier: float = 2e9
    daa_min_separation: float = 1.0
    daa_max_separation: float = 5.0
    layout: Layout = field(default_factory=Layout)

    @property
    def user_positions(self) -> np.ndarray:
        return np.asarray(self.users, dtype=float).reshape(-1, 3)

    @property
    def bounds(self) -> np.ndarray:
        """Per-axis UAV placement bounds as a ``(3, 2)`` array."""
        return np.array([self.region[0], self.region[1], self.altitude], dtype=float)

    @property
    def num_clusters(self) -> int:
        return self.layout.num_clusters or max(self.num_uavs, 1)


def _circle_centers(region, n, rng, radius=(0.5, 0.85)):
    (x0, x1), (y0, y1) = region
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    half = min(x1 - x0, y1 - y0) / 2
    base = rng.uniform(0, 2 * np.pi)
    jitter = rng.uniform(-0.25, 0.25, n) * (2 * np.pi / max(n, 1))
    ang = base + 2 * np.pi * np.arange(n) / max(n, 1) + jitter
    r = half * rng.uniform(radius[0], radius[1], n)
    return np.column_stack([cx + r * np.cos(ang), cy + r * np.sin(ang)])


def _clip(region, xy):
    (x0, x1), (y0, y1) = region
    return np.column_stack([np.clip(xy[:, 0], x0, x1), np.clip(xy[:, 1], y0, y1)])


def gen_multi_cluster(region, num_users: int, num_clusters: int, rng, std: float = 20.0) -> np.ndarray:
    """Users split round-robin over Gaussian clusters in the outer half of the region."""
    if num_users < 0 or num_clusters < 1:
        raise ValueError("need num_users >= 0 and num_clusters >= 1")
    centers = _circle_centers(region, num_clusters, rng)
    which = np.arange(num_users) % num_clusters
    xy = centers[which] + std * rng.standard_normal((num_users, 2))
    return _clip(region, xy)


def gen_dual_cluster(
    region,
    num_users: int,
    rng,
    std: float = 20.0,
    hotspot_fraction: float = 0.8,
    donor_xy=(0.0, 0.0),
    donor_std: float = 40.0,
) -> np.ndarray:
    """One far hotspot plus a small group of users around the donor.

    The hotspot center sits at 60-85 % of the region half-width from the
    donor in a random direction.
    """
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    n_hot = int(round(hotspot_fraction * num_users))
    center = _circle_centers(region, 1, rng, radius=(0.6, 0.85))[0]
    hot = center + std * rng.standard_normal((n_hot, 2))
    near = np.asarray(donor_xy, dtype=float) + donor_std * rng.standard_normal((num_users - n_hot, 2))
    return _clip(region, np.vstack([hot, near]))


def gen_generic(
    region, num_users: int, clustered_fraction: float, rng, num_clusters: int = 4, std: float = 20.0
) -> np.ndarray:
    """A clustered share of users (as in :func:`gen_multi_cluster`) plus uniform users."""
    if not 0.0 <= clustered_fraction <= 1.0:
        raise ValueError("clustered_fraction must be in [0, 1]")
    n_c = int(round(clustered_fraction * num_users))
    clustered = gen_multi_cluster(region, n_c, num_clusters, rng, std)
    (x0, x1), (y0, y1) = region
    uniform = np.column_stack(
        [rng.uniform(x0, x1, num_users - n_c), rng.uniform(y0, y1, num_users - n_c)]
    )
    return np.vstack([clustered, uniform])


def generate_users(scenario: Scenario, rng) -> np.ndarray:
    lay = scenario.layout
    u = scenario.num_users
    if lay.kind == "multi_cluster":
        xy = gen_multi_cluster(scenario.region, u, scenario.num_clusters, rng, lay.cluster_std)
    elif lay.kind == "dual_cluster":
        xy = gen_dual_cluster(
            scenario.region, u, rng, lay.cluster_std, lay.hotspot_fraction,
            scenario.donor_position[:2], lay.donor_cluster_std,
        )
    elif lay.kind == "generic":
        xy = gen_generic(
            scenario.region, u, lay.clustered_fraction, rng, scenario.num_clusters, lay.cluster_std
        )
    elif lay.kind == "uniform":
        xy = gen_generic(scenario.region, u, 0.0, rng)
    else:
        raise ValidationError(f"unknown layout kind {lay.kind!r}", "layout.kind")
    return np.column_stack([xy, np.full(len(xy), scenario.user_height)])


def with_users(scenario: Scenario, users) -> Scenario:
    users = np.asarray(users, dtype=float).reshape(-1, 3)
    return replace(scenario, users=tuple(tuple(float(c) for c in row) for row in users),
                   num_users=len(users))


def realize(scenario: Scenario, rng) -> Scenario:
    """Draw a fresh user layout unless the scenario pins its users."""
    if scenario.users_fixed and scenario.users:
        return scenario
    return with_users(scenario, generate_users(scenario, rng))


def validate(scenario: Scenario) -> Scenario:
    s = scenario
    if s.num_uavs < 0:
        raise ValidationError("num_uavs must be >= 0", "num_uavs")
    if s.donor_antennas < 1:
        raise ValidationError("donor antennas must be >= 1", "donor.antennas")
    if s.num_uavs + 1 > s.donor_antennas:
        raise ValidationError(
            f"zero forcing needs D+1 <= N (D={s.num_uavs}, N={s.donor_antennas})", "D+1<=N"
        )
    if s.num_users < 1:
        raise ValidationError("need at least one user", "num_users")
    if not (s.donor_max_power > 0 and s.uav_max_power > 0):
        raise ValidationError("power budgets must be > 0", "budgets>0")
    if s.eps_u < 0 or s.eps_d < 0:
        raise ValidationError("SINR thresholds must be >= 0", "thresholds>=0")
    if not s.bandwidth > 0:
        raise ValidationError("bandwidth must be > 0", "bandwidth>0")
    for name, (lo, hi) in zip(("x", "y", "z"), s.bounds):
        if lo > hi:
            raise ValidationError(f"bound {name} has min > max", f"bounds.{name}")
    if not 0 < s.daa_min_separation <= s.daa_max_separation:
        raise ValidationError("need 0 < daa min separation <= max separation", "daa.separation")
    if s.layout.kind not in LAYOUTS:
        raise ValidationError(f"unknown layout kind {s.layout.kind!r}", "layout.kind")
    if s.users:
        pos = s.user_positions
        if len(pos) != s.num_users:
            raise ValidationError("num_users does not match users list", "num_users")
        (x0, x1), (y0, y1) = s.region
        inside = (pos[:, 0] >= x0) & (pos[:, 0] <= x1) & (pos[:, 1] >= y0) & (pos[:, 1] <= y1)
        if not inside.all():
            raise ValidationError("all users must lie inside the region", "users-in-region")
    return s


# --- configuration documents -------------------------------------------------

_POWER_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*(dBm|mW|W)\s*$")
_RATIO_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*(dB)?\s*$")


def parse_power(value, where: str) -> float:
    if isinstance(value, bool):
        raise ParseError("expected a power", where)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _POWER_RE.match(value)
        if m:
            x, unit = float(m.group(1)), m.group(2)
            return {"dBm": dbm_to_watt, "mW": lambda v: v / 1e3, "W": float}[unit](x)
    raise ParseError(f"cannot read power {value!r} (use e.g. '46 dBm' or '2 W')", where)


def parse_ratio(value, where: str) -> float:
    if isinstance(value, bool):
        raise ParseError("expected a ratio", where)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _RATIO_RE.match(value)
        if m:
            x = float(m.group(1))
            return db_to_linear(x) if m.group(2) else x
    raise ParseError(f"cannot read ratio {value!r} (use e.g. '3 dB' or 2.0)", where)


def _get(doc: dict, key: str, where: str):
    if not isinstance(doc, dict):
        raise ParseError("expected an object", where)
    return doc.get(key)


def _num(value, where: str, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", where)
    if kind is int:
        if int(value) != value:
            raise ParseError(f"expected an integer, got {value!r}", where)
        return int(value)
    return float(value)


def _pair(value, where: str) -> tuple:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ParseError("expected [min, max]", where)
    return (_num(value[0], where + "[0]"), _num(value[1], where + "[1]"))


_KEYS = {
    "": {"donor", "uav", "users", "layout", "thresholds", "channel", "region", "bandwidth_hz",
         "carrier_hz", "daa", "solver"},
    "donor": {"position", "antennas", "max_power"},
    "uav": {"count", "max_power", "altitude"},
    "users": {"count", "height", "positions"},
    "layout": {"kind", "num_clusters", "cluster_std", "clustered_fraction", "hotspot_fraction",
               "donor_cluster_std", "seed"},
    "thresholds": {"user", "backhaul"},
    "channel": {"num_paths", "pathloss_exponent", "asd_rad", "asd_deg", "spacing_ratio", "noise_power"},
    "region": {"x", "y"},
    "daa": {"min_separation_m", "max_separation_m"},
}


def _check_keys(doc: dict) -> None:
    for section, allowed in _KEYS.items():
        node = doc.get(section) if section else doc
        if node is None or (section and not isinstance(node, dict)):
            if node is not None:
                raise ParseError("expected an object", section)
            continue
        extra = sorted(set(node) - allowed)
        if extra:
            where = f"{section}.{extra[0]}" if section else extra[0]
            raise ParseError("unknown key", where)


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a Scenario from a parsed configuration object.

    The optional ``solver`` section is ignored here (see the experiments
    module); any other unknown key is an error.
    """
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", "$")
    _check_keys(doc)
    s = Scenario()
    kw: dict = {}
    donor = doc.get("donor") or {}
    if "position" in donor:
        pos = donor["position"]
        if not (isinstance(pos, list) and len(pos) == 3):
            raise ParseError("expected [x, y, z]", "donor.position")
        kw["donor_position"] = tuple(_num(c, "donor.position") for c in pos)
    if "antennas" in donor:
        kw["donor_antennas"] = _num(donor["antennas"], "donor.antennas", int)
    if "max_power" in donor:
        kw["donor_max_power"] = parse_power(donor["max_power"], "donor.max_power")
    uav = doc.get("uav") or {}
    if "count" in uav:
        kw["num_uavs"] = _num(uav["count"], "uav.count", int)
    if "max_power" in uav:
        kw["uav_max_power"] = parse_power(uav["max_power"], "uav.max_power")
    if "altitude" in uav:
        kw["altitude"] = _pair(uav["altitude"], "uav.altitude")
    users = doc.get("users")
    if isinstance(users, dict):
        if "count" in users:
            kw["num_users"] = _num(users["count"], "users.count", int)
        if "height" in users:
            kw["user_height"] = _num(users["height"], "users.height")
        if "positions" in users:
            pos = users["positions"]
            if not isinstance(pos, list) or any(not (isinstance(p, list) and len(p) == 3) for p in pos):
                raise ParseError("expected a list of [x, y, z]", "users.positions")
            kw["users"] = tuple(tuple(_num(c, f"users.positions[{i}]") for c in p) for i, p in enumerate(pos))
            kw["users_fixed"] = True
            kw.setdefault("num_users", len(pos))
    elif users is not None:
        raise ParseError("expected an object", "users")
    lay = doc.get("layout") or {}
    if lay:
        lkw = {}
        for key, kind in (("kind", str), ("num_clusters", int), ("cluster_std", float),
                          ("clustered_fraction", float), ("hotspot_fraction", float),
                          ("donor_cluster_std", float), ("seed", int)):
            if key in lay:
                if kind is str:
                    if not isinstance(lay[key], str):
                        raise ParseError("expected a string", f"layout.{key}")
                    lkw[key] = lay[key]
                else:
                    lkw[key] = _num(lay[key], f"layout.{key}", kind)
        kw["layout"] = Layout(**lkw)
    th = doc.get("thresholds") or {}
    if "user" in th:
        kw["eps_u"] = parse_ratio(th["user"], "thresholds.user")
    if "backhaul" in th:
        kw["eps_d"] = parse_ratio(th["backhaul"], "thresholds.backhaul")
    ch = doc.get("channel") or {}
    ckw = {}
    if "num_paths" in ch:
        ckw["num_paths"] = _num(ch["num_paths"], "channel.num_paths", int)
    if "pathloss_exponent" in ch:
        ckw["pathloss_exponent"] = _num(ch["pathloss_exponent"], "channel.pathloss_exponent")
    if "asd_rad" in ch:
        ckw["asd"] = _num(ch["asd_rad"], "channel.asd_rad")
    elif "asd_deg" in ch:
        ckw["asd"] = math.radians(_num(ch["asd_deg"], "channel.asd_deg"))
    if "spacing_ratio" in ch:
        ckw["spacing_ratio"] = _num(ch["spacing_ratio"], "channel.spacing_ratio")
    if "noise_power" in ch:
        ckw["noise_power"] = parse_power(ch["noise_power"], "channel.noise_power")
    if ckw:
        try:
            kw["channel"] = ChannelParams(**ckw)
        except ValueError as exc:
            raise ValidationError(str(exc), "channel") from exc
    reg = doc.get("region")
    if reg is not None:
        kw["region"] = (_pair(_get(reg, "x", "region"), "region.x"), _pair(_get(reg, "y", "region"), "region.y"))
    if "bandwidth_hz" in doc:
        kw["bandwidth"] = _num(doc["bandwidth_hz"], "bandwidth_hz")
    if "carrier_hz" in doc:
        kw["carrier"] = _num(doc["carrier_hz"], "carrier_hz")
    daa = doc.get("daa") or {}
    if "min_separation_m" in daa:
        kw["daa_min_separation"] = _num(daa["min_separation_m"], "daa.min_separation_m")
    if "max_separation_m" in daa:
        kw["daa_max_separation"] = _num(daa["max_separation_m"], "daa.max_separation_m")
    s = replace(s, **kw)
    validate(s)
    if not s.users:
        s = with_users(s, generate_users(s, np.random.default_rng(s.layout.seed)))
    return validate(s)


def load_scenario(document: str) -> Scenario:
    """Parse a JSON configuration document; blank text means all defaults."""
    if document is None or not document.strip():
        return scenario_from_dict({})
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return scenario_from_dict(doc)


def scenario_to_dict(s: Scenario) -> dict:
    """Inverse of :func:`scenario_from_dict`; reloading gives an equal Scenario."""
    doc = {
        "donor": {
            "position": list(s.donor_position),
            "antennas": s.donor_antennas,
            "max_power": f"{s.donor_max_power!r} W",
        },
        "uav": {"count": s.num_uavs, "max_power": f"{s.uav_max_power!r} W", "altitude": list(s.altitude)},
        "users": {"count": s.num_users, "height": s.user_height},
        "layout": asdict(s.layout),
        "thresholds": {"user": s.eps_u, "backhaul": s.eps_d},
        "channel": {
            "num_paths": s.channel.num_paths,
            "pathloss_exponent": s.channel.pathloss_exponent,
            "asd_rad": s.channel.asd,
            "spacing_ratio": s.channel.spacing_ratio,
            "noise_power": f"{s.channel.noise_power!r} W",
        },
        "region": {"x": list(s.region[0]), "y": list(s.region[1])},
        "bandwidth_hz": s.bandwidth,
        "carrier_hz": s.carrier,
        "daa": {"min_separation_m": s.daa_min_separation, "max_separation_m": s.daa_max_separation},
    }
    if doc["layout"]["num_clusters"] is None:
        del doc["layout"]["num_clusters"]
    if s.users_fixed:
        doc["users"]["positions"] = [list(p) for p in s.users]
    return doc


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2)


def set_dotted(doc: dict, key: str, value) -> dict:
    """Return a copy of ``doc`` with ``a.b.c`` set to ``value``."""
    out = json.loads(json.dumps(doc))
    node = out
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ParseError("cannot descend into a non-object", key)
    node[parts[-1]] = value
    return out
