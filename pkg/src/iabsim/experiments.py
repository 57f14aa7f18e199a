"""Monte Carlo harness, waterfilling baseline, aggregation and export."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import LinkDraws, siso_from_draws
from .errors import ParseError
from .fixed_point import PaOptions
from .metrics import DAA, DISTRIBUTED
from .network import Network
from .orchestrator import SolveOptions, solve, solve_reversed
from .scenario import Scenario, realize

BASELINE = "baseline"
REVERSED = "reversed"
MODES = (BASELINE, DISTRIBUTED, DAA, REVERSED)

CSV_COLUMNS = [
    "trial", "mode", "sum_rate_bps_hz", "sum_rate_bps", "mean_tue_sinr_db", "mean_aue_sinr_db",
    "mean_bh_sinr_db", "outage_count", "outer_iters", "pso_iters", "runtime_ms",
]


# --- baseline -------------------------------------------------------------------


def waterfill(gains, noise: float, budget: float, average: bool = False, tol: float = 1e-12):
    """Powers ``(mu - noise / g)^+`` with the water level ``mu`` found by bisection.

    The budget equation is ``sum(p) = budget``; ``average=True`` uses the
    per-user average ``mean(p) = budget`` instead.
    """
    g = np.asarray(gains, dtype=float)
    p = np.zeros_like(g)
    live = g > 0
    if not live.any():
        return p
    target = budget * (len(g) if average else 1)
    floor = noise / g[live]

    def used(mu):
        return np.sum(np.maximum(mu - floor, 0.0))

    lo, hi = 0.0, float(np.max(floor) + target)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if used(mid) > target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * hi:
            break
    mu = 0.5 * (lo + hi)
    p[live] = np.maximum(mu - floor, 0.0)
    active = p > 0
    if active.any():  # remove the residual bisection error on the active set
        p[active] += (target - p.sum()) / active.sum()
    return p


@dataclass
class BaselineResult:
    powers: np.ndarray
    sinr: np.ndarray
    sum_rate: float
    throughput: float


def baseline_gains(scenario: Scenario, draws: LinkDraws) -> np.ndarray:
    """SISO donor-to-user gains from the same path draws as the array channel."""
    coeff = draws.donor_user_gains.sum(axis=1) / np.sqrt(draws.num_paths)
    h = siso_from_draws(scenario.donor_position, scenario.user_positions, scenario.channel, coeff)
    return np.abs(h) ** 2


def waterfilling_baseline(scenario: Scenario, draws: LinkDraws, average: bool = False) -> BaselineResult:
    """Donor-only service: SISO links, round-robin over all users, waterfilled powers."""
    g = baseline_gains(scenario, draws)
    noise = scenario.channel.noise_power
    p = waterfill(g, noise, scenario.donor_max_power, average)
    sinr = p * g / noise
    u = len(g)
    se = float(np.sum(np.log2(1.0 + sinr)) / u)
    return BaselineResult(p, sinr, se, se * scenario.bandwidth)


# --- trials ---------------------------------------------------------------------


@dataclass
class TrialResult:
    trial: int
    seed: int
    mode: str
    sum_rate_bps_hz: float = float("nan")
    sum_rate_bps: float = float("nan")
    user_sinr_db: tuple = ()
    mean_tue_sinr_db: float = float("nan")
    mean_aue_sinr_db: float = float("nan")
    mean_bh_sinr_db: float = float("nan")
    outage_count: int = 0
    outer_iters: int = 0
    pso_iters: int = 0
    runtime_ms: float | None = None
    feasible: bool = True
    converged_by: str = ""
    error: str | None = None
    solution: object = field(default=None, repr=False, compare=False)  # not exported

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def mean_served_sinr_db(self) -> float:
        vals = [v for v in self.user_sinr_db if math.isfinite(v)]
        return float(np.mean(vals)) if vals else float("nan")


def _db(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def _mean_finite(values) -> float:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    return float(np.mean(v)) if v.size else float("nan")


def trial_seed(master_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1, np.uint64)[0])


def run_trial(template: Scenario, modes, master_seed: int, trial: int,
              options: SolveOptions | None = None, timing: bool = False) -> list:
    """Solve every requested mode on one shared layout and set of draws."""
    seed = trial_seed(master_seed, trial)
    layout_rng = np.random.default_rng(np.random.SeedSequence([master_seed, trial, 0]))
    sc = realize(template, layout_rng)
    draws = LinkDraws.generate(seed, sc.num_users, sc.num_uavs, sc.channel.num_paths)
    out = []
    for k, mode in enumerate(modes):
        rng = np.random.default_rng(np.random.SeedSequence([master_seed, trial, 1 + MODES.index(mode)]))
        start = time.perf_counter()
        res = TrialResult(trial, seed, mode)
        try:
            if mode == BASELINE:
                base = waterfilling_baseline(sc, draws)
                db = np.where(base.sinr > 0, _db(base.sinr), -np.inf)
                res.sum_rate_bps_hz, res.sum_rate_bps = base.sum_rate, base.throughput
                res.user_sinr_db = tuple(float(v) for v in db)
                res.mean_tue_sinr_db = _mean_finite(db)
                res.outage_count = int(np.sum(base.sinr <= 0))
                res.converged_by = "closed_form"
            else:
                net = Network(sc, draws, DISTRIBUTED if mode == REVERSED else mode)
                sol = (solve_reversed if mode == REVERSED else solve)(net, options, rng)
                rep = sol.sinr
                served = rep.served
                db = np.where(served, _db(rep.user), -np.inf)
                rates_zero = ~served
                res.sum_rate_bps_hz, res.sum_rate_bps = sol.sum_rate, sol.throughput
                res.user_sinr_db = tuple(float(v) for v in db)
                res.mean_tue_sinr_db = _mean_finite(db[rep.tue_mask])
                res.mean_aue_sinr_db = _mean_finite(db[rep.aue_mask])
                res.mean_bh_sinr_db = _mean_finite(_db(rep.backhaul))
                res.outage_count = int(np.sum(rates_zero))
                res.outer_iters, res.pso_iters = sol.iterations, sol.pso_iterations
                res.feasible, res.converged_by = sol.feasible, sol.converged_by
                res.solution = sol
        except Exception as exc:  # a failed trial is reported, not fatal
            res.error = f"{type(exc).__name__}: {exc}"
        if timing:
            res.runtime_ms = (time.perf_counter() - start) * 1e3
        out.append(res)
    return out


# --- aggregation ---------------------------------------------------------------


@dataclass
class ModeStats:
    trials: int
    failed: int
    sum_rate_mean: float
    sum_rate_median: float
    sum_rate_std: float
    sinr_db_mean: float
    sinr_db_median: float
    sinr_db_std: float
    outage_mean: float


@dataclass
class Aggregate:
    modes: dict = field(default_factory=dict)  # mode -> ModeStats
    cdf: dict = field(default_factory=dict)  # (metric, mode) -> sorted samples
    gain_ratios: dict = field(default_factory=dict)  # "a/b" -> mean(a) / mean(b)
    trials: list = field(default_factory=list)


def _stats(values):
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if not v.size:
        return float("nan"), float("nan"), float("nan")
    return float(np.mean(v)), float(np.median(v)), float(np.std(v))


def aggregate(results) -> Aggregate:
    agg = Aggregate(trials=list(results))
    modes = []
    for r in results:
        if r.mode not in modes:
            modes.append(r.mode)
    for mode in modes:
        rows = [r for r in results if r.mode == mode]
        good = [r for r in rows if r.ok]
        rate = [r.sum_rate_bps_hz for r in good]
        sinr = [v for r in good for v in r.user_sinr_db if math.isfinite(v)]
        m1 = _stats(rate)
        m2 = _stats(sinr)
        outage = float(np.mean([r.outage_count for r in good])) if good else float("nan")
        agg.modes[mode] = ModeStats(len(rows), len(rows) - len(good), *m1, *m2, outage)
        agg.cdf[("sum_rate", mode)] = sorted(rate)
        agg.cdf[("sinr_db", mode)] = sorted(sinr)
    for a in modes:
        for b in modes:
            if a != b:
                ma, mb = agg.modes[a].sum_rate_mean, agg.modes[b].sum_rate_mean
                agg.gain_ratios[f"{a}/{b}"] = ma / mb if mb and math.isfinite(mb) else float("nan")
    return agg


def _worker(args):
    template, modes, master_seed, trial, options, timing = args
    return run_trial(template, modes, master_seed, trial, options, timing)


def run_monte_carlo(template: Scenario, modes, trials: int, master_seed: int, workers: int = 1,
                    options: SolveOptions | None = None, timing: bool = False) -> Aggregate:
    """Run ``trials`` independent trials and aggregate them in trial order."""
    if trials < 0:
        raise ValueError("trials must be >= 0")
    modes = list(modes)
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}")
    jobs = [(template, modes, master_seed, t, options, timing) for t in range(trials)]
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_worker, jobs))
    else:
        chunks = [_worker(j) for j in jobs]
    return aggregate([r for chunk in chunks for r in chunk])


# --- export ----------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _json_num(x):
    return None if isinstance(x, float) and not math.isfinite(x) else x


def summary_dict(agg: Aggregate) -> dict:
    modes = {m: {k: _json_num(v) for k, v in vars(s).items()} for m, s in agg.modes.items()}
    failures = [
        {"trial": r.trial, "mode": r.mode, "error": r.error} for r in agg.trials if r.error is not None
    ]
    return {
        "modes": modes,
        "gain_ratios": {k: _json_num(v) for k, v in sorted(agg.gain_ratios.items())},
        "failures": failures,
    }


def export_results(agg: Aggregate, trial_results, out_path) -> list:
    """Write ``trials.csv``, ``summary.json`` and ``cdf_<metric>_<mode>.csv``."""
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in trial_results:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    (out / "trials.csv").write_text(buf.getvalue())
    written.append(out / "trials.csv")
    (out / "summary.json").write_text(json.dumps(summary_dict(agg), indent=2, sort_keys=True) + "\n")
    written.append(out / "summary.json")
    for (metric, mode), samples in sorted(agg.cdf.items()):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["value", "cdf"])
        n = len(samples)
        for i, v in enumerate(samples):
            w.writerow([repr(float(v)), repr((i + 1) / n)])
        path = out / f"cdf_{metric}_{mode}.csv"
        path.write_text(buf.getvalue())
        written.append(path)
    return written


# --- solver options from a config document ----------------------------------------


def solve_options_from_dict(doc: dict | None) -> SolveOptions | None:
    """Optional ``solver`` section: ``{"outer": {...}, "pa": {...}, "pso": {...}}``."""
    if not doc:
        return None
    if not isinstance(doc, dict):
        raise ParseError("expected an object", "solver")
    try:
        outer = dict(doc.get("outer") or {})
        pa = PaOptions(**(doc.get("pa") or {}))
        pso_doc = dict(doc.get("pso") or {})
        for key in ("inertia", "spread"):
            if key in pso_doc:
                pso_doc[key] = tuple(pso_doc[key])
        opts = SolveOptions(pa=pa, pso_overrides=pso_doc, **outer)
        opts.pso_for(DISTRIBUTED)  # surface bad keys now
        return opts
    except TypeError as exc:
        raise ParseError(str(exc), "solver") from exc
