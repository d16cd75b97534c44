"""Monte Carlo estimation of scenario-space risk proportions.

Scenarios are drawn uniformly from the admissible box (initial gap, initial
speeds, per-step background accelerations, and in multi-lane mode per-slot
gaps and sampled lateral attempts).  Each rollout's minimum TTC is binned
into ordered risk intervals; the dangerous proportion at a threshold is the
cumulative mass of bins at or below it.

Randomness is organized in fixed-size batches whose generators are derived
from (seed, batch_index), so results are independent of how work is split
across processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .models import BehaviorModel, as_generalized
from .scenario import (
    AgentAction,
    AgentKind,
    AgentState,
    Lateral,
    ScenarioBounds,
    ScenarioError,
    SystemState,
    TestingScenario,
    rollout,
)

BATCH_SIZE = 1 << 16

DEFAULT_THRESHOLDS = tuple(0.5 * k for k in range(1, 11))  # 0.5 .. 5.0

# per-step probability that a BV attempts a lane change (multi-lane mode)
BV_LANE_CHANGE_PROB = 0.05


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RiskBinning:
    """Ordered TTC thresholds; bin 0 is the crash bin, the last bin is safe.

    Bin e (1 <= e <= E) collects min-TTC values in (eta_{e-1}, eta_e]; ties
    at a threshold count as dangerous.
    """

    thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS

    def __post_init__(self) -> None:
        t = self.thresholds
        if len(t) < 1:
            raise ConfigError("need at least one risk threshold")
        if any(b <= a for a, b in zip(t, t[1:])) or t[0] <= 0:
            raise ConfigError("thresholds must be positive and strictly increasing")

    @property
    def n_bins(self) -> int:
        return len(self.thresholds) + 2

    def bin_edges(self) -> List[Tuple[float, float]]:
        """(lower, upper] edges per bin; crash bin is [0, 0]."""
        edges = [(0.0, 0.0)]
        lo = 0.0
        for eta in self.thresholds:
            edges.append((lo, eta))
            lo = eta
        edges.append((lo, math.inf))
        return edges

    def bin_index(self, sm: np.ndarray) -> np.ndarray:
        sm = np.asarray(sm, dtype=float)
        idx = 1 + np.searchsorted(self.thresholds, sm, side="left")
        return np.where(sm <= 0.0, 0, idx)


@dataclass
class RiskHistogram:
    counts: np.ndarray
    total_samples: int
    rejected_samples: int
    seed: int
    binning: RiskBinning

    @property
    def accepted(self) -> int:
        return int(self.counts.sum())

    @property
    def proportions(self) -> np.ndarray:
        n = self.accepted
        return self.counts / n if n else np.zeros_like(self.counts, dtype=float)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.proportions)

    def dangerous_proportion(self, eta: float) -> float:
        """Mass of bins whose upper edge is <= eta, plus the crash bin."""
        p = self.proportions
        total = p[0]
        for k, t in enumerate(self.binning.thresholds):
            if t <= eta + 1e-12:
                total += p[k + 1]
        return float(total)

    def wilson_interval(self, eta: float, z: float = 1.959963984540054) -> Tuple[float, float]:
        return wilson_interval(self.dangerous_proportion(eta), self.accepted, z)


def wilson_interval(p: float, n: int, z: float = 1.959963984540054) -> Tuple[float, float]:
    """95% (by default) Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 1_000_000
    seed: int = 0
    mode: str = "clamping"  # or "polytope_consistent"
    parallel_width: int = 1

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.mode not in ("clamping", "polytope_consistent"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.parallel_width < 1:
            raise ConfigError("parallel_width must be >= 1")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def batch_rng(seed: int, batch_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(batch_index,)))


def _n_background(bounds: ScenarioBounds) -> int:
    return 1 if bounds.lane_count == 1 else (3 if bounds.lane_count == 2 else 4)


def sample_scenario(bounds: ScenarioBounds, rng: np.random.Generator) -> TestingScenario:
    """Draw one uniform testing scenario.

    Single-lane: initial gap, both speeds, and T leader accelerations.
    Multi-lane: the AV plus one BV per surrounding slot (same-lane lead/rear
    and adjacent-lane leads), with per-slot gaps, speeds, accelerations and
    sampled lane-change attempts.
    """
    T = bounds.horizon_T
    if bounds.lane_count == 1:
        d0 = rng.uniform(bounds.d_min, bounds.d_max)
        v_f = rng.uniform(bounds.v_min, bounds.v_max)
        v_l = rng.uniform(bounds.v_min, bounds.v_max)
        accels = rng.uniform(bounds.a_min, bounds.a_max, size=T)
        init = SystemState(0, [
            AgentState(0, 0.0, v_f, agent_kind=AgentKind.AV),
            AgentState(0, d0, v_l),
        ])
        return TestingScenario(init, [[AgentAction(a) for a in accels]])

    n_bv = _n_background(bounds)
    av_lane = 1 if bounds.lane_count == 3 else 0
    speeds = rng.uniform(bounds.v_min, bounds.v_max, size=1 + n_bv)
    gaps = rng.uniform(bounds.d_min, bounds.d_max, size=n_bv)
    accels = rng.uniform(bounds.a_min, bounds.a_max, size=(n_bv, T))
    lat_u = rng.uniform(0.0, 1.0, size=(n_bv, T))

    slots = _bv_slots(bounds, av_lane)
    agents = [AgentState(av_lane, 0.0, speeds[0], agent_kind=AgentKind.AV)]
    for k, (lane, sign) in enumerate(slots):
        agents.append(AgentState(lane, sign * gaps[k], speeds[1 + k]))
    bv_actions = []
    for k in range(n_bv):
        seq = []
        for t in range(T):
            lateral = Lateral.KEEP
            if lat_u[k, t] < BV_LANE_CHANGE_PROB / 2:
                lateral = Lateral.CHANGE_LEFT
            elif lat_u[k, t] < BV_LANE_CHANGE_PROB:
                lateral = Lateral.CHANGE_RIGHT
            seq.append(AgentAction(accels[k, t], lateral))
        bv_actions.append(seq)
    return TestingScenario(SystemState(0, agents), bv_actions)


def _bv_slots(bounds: ScenarioBounds, av_lane: int) -> List[Tuple[int, int]]:
    """(lane, gap sign) per background slot around the AV."""
    slots = [(av_lane, +1), (av_lane, -1)]  # same-lane lead and rear
    if av_lane - 1 >= 0:
        slots.append((av_lane - 1, +1))
    if av_lane + 1 < bounds.lane_count:
        slots.append((av_lane + 1, +1))
    return slots


# ---------------------------------------------------------------------------
# Vectorized single-lane kernel (linear CF models)
# ---------------------------------------------------------------------------

def _single_lane_min_sm(
    model: BehaviorModel,
    bounds: ScenarioBounds,
    d0: np.ndarray,
    vf0: np.ndarray,
    vl0: np.ndarray,
    al: np.ndarray,
    mode: str,
) -> Tuple[np.ndarray, np.ndarray]:
    """Minimum TTC per sample and (in polytope-consistent mode) a rejection
    mask; mirrors the scalar rollout on single-lane scenarios."""
    g = as_generalized(model.cf)
    dt = bounds.dt
    l = bounds.vehicle_length_l
    T = al.shape[1]
    d = d0.copy()
    vf = vf0.copy()
    vl = vl0.copy()
    n = d.shape[0]
    min_ttc = np.full(n, np.inf)
    crash = np.zeros(n, dtype=bool)
    reject = np.zeros(n, dtype=bool)
    done = np.zeros(n, dtype=bool)  # early termination (clamping mode only)
    strict = mode == "polytope_consistent"

    def observe() -> None:
        nonlocal crash
        live = ~done
        hit = live & (d <= l)
        crash |= hit
        if not strict:
            done[hit] = True
        closing = live & (vf > vl) & ~crash
        with np.errstate(divide="ignore", invalid="ignore"):
            ttc = np.where(closing, (d - l) / np.where(closing, vf - vl, 1.0), np.inf)
        np.minimum(min_ttc, ttc, out=min_ttc, where=closing)

    observe()
    for t in range(T):
        af = g.k1 * vf + g.k2 * vl + g.k3 * d + g.k4
        a_lead = al[:, t]
        if strict:
            reject |= (af < bounds.a_min) | (af > bounds.a_max)
        else:
            np.clip(af, bounds.a_min, bounds.a_max, out=af)
        vf_new = vf + dt * af
        vl_new = vl + dt * a_lead
        if strict:
            reject |= (vf_new < bounds.v_min) | (vf_new > bounds.v_max)
            reject |= (vl_new < bounds.v_min) | (vl_new > bounds.v_max)
        else:
            np.clip(vf_new, bounds.v_min, bounds.v_max, out=vf_new)
            np.clip(vl_new, bounds.v_min, bounds.v_max, out=vl_new)
            af = (vf_new - vf) / dt
            a_lead = (vl_new - vl) / dt
        d_new = d + dt * vl + 0.5 * dt * dt * a_lead - dt * vf - 0.5 * dt * dt * af
        adv = ~done
        d = np.where(adv, d_new, d)
        vf = np.where(adv, vf_new, vf)
        vl = np.where(adv, vl_new, vl)
        observe()

    min_sm = np.where(crash, 0.0, np.maximum(min_ttc, 0.0))
    return min_sm, reject


def _vectorized_batch_counts(
    model: BehaviorModel,
    bounds: ScenarioBounds,
    binning: RiskBinning,
    mode: str,
    seed: int,
    batch_index: int,
    size: int,
) -> Tuple[np.ndarray, int]:
    rng = batch_rng(seed, batch_index)
    T = bounds.horizon_T
    # one row-major draw per sample (gap, speeds, then leader accelerations)
    # keeps the stream identical to repeated sample_scenario calls
    U = rng.uniform(size=(size, 3 + T))
    d0 = bounds.d_min + (bounds.d_max - bounds.d_min) * U[:, 0]
    vf0 = bounds.v_min + (bounds.v_max - bounds.v_min) * U[:, 1]
    vl0 = bounds.v_min + (bounds.v_max - bounds.v_min) * U[:, 2]
    al = bounds.a_min + (bounds.a_max - bounds.a_min) * U[:, 3:]
    min_sm, reject = _single_lane_min_sm(model, bounds, d0, vf0, vl0, al, mode)
    keep = ~reject
    idx = binning.bin_index(min_sm[keep])
    counts = np.bincount(idx, minlength=binning.n_bins).astype(np.int64)
    return counts, int(reject.sum())


def _general_batch_counts(
    model: BehaviorModel,
    bounds: ScenarioBounds,
    binning: RiskBinning,
    mode: str,
    seed: int,
    batch_index: int,
    size: int,
) -> Tuple[np.ndarray, int]:
    from .scenario import BoundViolation

    rng = batch_rng(seed, batch_index)
    counts = np.zeros(binning.n_bins, dtype=np.int64)
    rejected = 0
    for _ in range(size):
        scenario = sample_scenario(bounds, rng)
        try:
            outcome = rollout(scenario, model, bounds, mode=mode)
        except BoundViolation:
            rejected += 1
            continue
        counts[int(binning.bin_index(np.array(outcome.min_sm)))] += 1
    return counts, rejected


def _batch_plan(n: int) -> List[Tuple[int, int]]:
    plan = []
    idx = 0
    while n > 0:
        size = min(BATCH_SIZE, n)
        plan.append((idx, size))
        idx += 1
        n -= size
    return plan


def mc_estimate(
    av_model: BehaviorModel,
    bounds: ScenarioBounds,
    binning: RiskBinning,
    config: McConfig,
) -> RiskHistogram:
    """Algorithm: sample N scenarios, roll each out, bin the minimum TTC.

    Single-lane linear-CF configurations run through a vectorized kernel;
    multi-lane configurations use the scalar rollout engine, optionally
    fanned out over processes (results are identical for any width because
    batches own their random streams).
    """
    if binning.n_bins < 3:
        raise ConfigError("binning must contain at least one threshold")
    plan = _batch_plan(config.n_samples)
    counts = np.zeros(binning.n_bins, dtype=np.int64)
    rejected = 0
    if bounds.lane_count == 1:
        for batch_index, size in plan:
            c, r = _vectorized_batch_counts(
                av_model, bounds, binning, config.mode, config.seed, batch_index, size
            )
            counts += c
            rejected += r
    elif config.parallel_width == 1 or len(plan) == 1:
        for batch_index, size in plan:
            c, r = _general_batch_counts(
                av_model, bounds, binning, config.mode, config.seed, batch_index, size
            )
            counts += c
            rejected += r
    else:
        with ProcessPoolExecutor(max_workers=config.parallel_width) as pool:
            futures = [
                pool.submit(
                    _general_batch_counts,
                    av_model, bounds, binning, config.mode, config.seed, batch_index, size,
                )
                for batch_index, size in plan
            ]
            for fut in futures:
                c, r = fut.result()
                counts += c
                rejected += r
    return RiskHistogram(
        counts=counts,
        total_samples=config.n_samples,
        rejected_samples=rejected,
        seed=config.seed,
        binning=binning,
    )


def cumulative_risk(histogram: RiskHistogram) -> np.ndarray:
    """Running proportion sum from the crash bin upward; last entry is 1."""
    return histogram.cumulative()


@dataclass
class ModelRanking:
    order: List[str]
    histograms: dict
    dangerous: dict
    intervals: dict
    ties: List[Tuple[str, str]]
    eta: float


def rank_models(
    models: Sequence[BehaviorModel],
    bounds: ScenarioBounds,
    binning: RiskBinning,
    config: McConfig,
    eta: Optional[float] = None,
) -> ModelRanking:
    """Rank models ascending by dangerous proportion at ``eta`` (default:
    the last threshold, i.e. everything that is not in the safe bin).

    Adjacent pairs whose 95% Wilson intervals overlap are flagged as
    statistical ties.
    """
    if len(models) < 2:
        raise ConfigError("ranking needs at least two models")
    if eta is None:
        eta = binning.thresholds[-1]
    names = []
    for i, m in enumerate(models):
        names.append(m.name or f"model_{i}")
    if len(set(names)) != len(names):
        raise ConfigError("model names must be unique for ranking")
    hists = {}
    dangerous = {}
    intervals = {}
    for name, m in zip(names, models):
        h = mc_estimate(m, bounds, binning, config)
        hists[name] = h
        dangerous[name] = h.dangerous_proportion(eta)
        intervals[name] = h.wilson_interval(eta)
    order = sorted(names, key=lambda n: dangerous[n])
    ties = []
    for a, b in zip(order, order[1:]):
        lo_a, hi_a = intervals[a]
        lo_b, hi_b = intervals[b]
        if hi_a >= lo_b and hi_b >= lo_a:
            ties.append((a, b))
    return ModelRanking(order=order, histograms=hists, dangerous=dangerous,
                        intervals=intervals, ties=ties, eta=eta)
