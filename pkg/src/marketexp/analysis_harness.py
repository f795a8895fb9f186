"""Replication runner and statistics over estimator outputs.

A sweep walks scenario points, runs seeded replications of the finite
simulator per design, computes every compatible estimator on each ledger,
and summarizes bias/SE/RMSE with percentile-bootstrap intervals next to the
deterministic mean-field reference value for the same design.

Determinism contract: replication r of a run with master seed s draws from
the Philox stream keyed by (s, spawn_key=(r,)); results are keyed by
replication index, aggregation sorts estimates, and bootstrap streams are
derived from the master seed, so output is a pure function of (spec, seed)
and in particular independent of the thread count.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import presets
from .designs import TsrSchedule, beta_weight, swap_clusters, tsr_schedule
from .estimators import (
    ClusterLR,
    EstimatorId,
    NaiveCR,
    NaiveLR,
    TSRI,
    TSRN,
    est_cluster,
    est_cr,
    est_lr,
    est_tsri,
    est_tsrn,
    gte_true,
)
from .finite_sim import BookingLedger, SimConfig, apportion_listings, simulate
from .market_model import (
    CR,
    Cluster,
    DesignSpec,
    ExpandedMarket,
    Intervention,
    LR,
    MarketConfig,
    TSR,
    expand_for_design,
)
from .mean_field import booking_rates_mf, clip_balance, integrate

DEFAULT_T0 = 5.0
DEFAULT_T1 = 25.0


class TooFewReplications(ValueError):
    pass


class ReplicationError(RuntimeError):
    """A replication failed; carries the index and any completed results."""

    def __init__(self, index: int, message: str,
                 partial: Optional[dict[int, dict]] = None):
        super().__init__(f"replication {index}: {message}")
        self.index = index
        self.partial = partial or {}


# --- scenarios ---------------------------------------------------------------


@dataclass(frozen=True)
class VaryBalance:
    """Homogeneous calibration market across lam/tau levels (tau fixed)."""

    balances: tuple[float, ...] = (0.1, 1.0, 10.0)
    tau: float = 1.0
    label = "balance"


@dataclass(frozen=True)
class VaryAvgUtility:
    lam: float = 1.0
    tau: float = 1.0
    label = "avg_utility"


@dataclass(frozen=True)
class VaryCustomerHet:
    lam: float = 1.0
    tau: float = 1.0
    label = "customer_het"


@dataclass(frozen=True)
class VaryListingHet:
    lam: float = 1.0
    tau: float = 1.0
    label = "listing_het"


@dataclass(frozen=True)
class VaryHTE:
    lam: float = 1.0
    tau: float = 1.0
    label = "hte"


@dataclass(frozen=True)
class ClusterPreferenceRatio:
    ratios: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    x: float = 0.5
    delta: float = 1.3
    lam: float = 1.0
    tau: float = 1.0
    label = "cluster_ratio"


Scenario = Union[VaryBalance, VaryAvgUtility, VaryCustomerHet, VaryListingHet,
                 VaryHTE, ClusterPreferenceRatio]

DesignEntry = Union[DesignSpec, TsrSchedule]


@dataclass(frozen=True)
class SweepSpec:
    scenario: Scenario
    designs: tuple[DesignEntry, ...]
    estimators: tuple[EstimatorId, ...]
    reps: int
    sim: SimConfig
    bootstrap_b: int = 1000
    level: float = 95.0
    rescale_window: bool = True

    def __post_init__(self):
        if self.reps < 2:
            raise ValueError(f"reps must be >= 2, got {self.reps}")
        if self.bootstrap_b < 100:
            raise ValueError(f"bootstrap_b must be >= 100, got {self.bootstrap_b}")
        if not 0.0 < self.level < 100.0:
            raise ValueError(f"level must be in (0, 100), got {self.level}")
        object.__setattr__(self, "designs", tuple(self.designs))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "scenario", self.scenario)


@dataclass(frozen=True)
class StatRow:
    """One estimator summary; ci bounds are the percentile-bootstrap
    interval for the bias (degenerate on deterministic rows)."""

    scenario: str
    point: str
    estimator: str
    source: str
    mean: float
    bias: float
    se: float
    rmse: float
    ci_lo: float
    ci_hi: float
    gte_true: float
    reps: int
    seed: int


@dataclass(frozen=True)
class PointFailure:
    scenario: str
    point: str
    design: str
    message: str


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[StatRow, ...]
    failures: tuple[PointFailure, ...]


# --- plumbing ----------------------------------------------------------------


def effective_window(lam: float, tau: float, t0: float = DEFAULT_T0,
                     t1: float = DEFAULT_T1) -> tuple[float, float]:
    """Rescale the counting window by the slower market clock."""
    if not 0.0 <= t0 < t1:
        raise ValueError(f"need 0 <= t0 < t1, got ({t0}, {t1})")
    scale = min(lam, tau)
    return t0 / scale, t1 / scale


def resolve_design(entry: DesignEntry, balance: float) -> DesignSpec:
    """Materialize a design entry; schedules become TSR shares at this balance."""
    if isinstance(entry, TsrSchedule):
        a_c, a_l = tsr_schedule(clip_balance(balance), entry)
        return TSR(a_c=a_c, a_l=a_l)
    return entry


def compatible_estimators(ests: Sequence[EstimatorId],
                          entry: DesignEntry) -> tuple[EstimatorId, ...]:
    """The subset of estimators whose form matches the design's ledger."""
    if isinstance(entry, CR):
        keep = (NaiveCR,)
    elif isinstance(entry, LR):
        keep = (NaiveLR,)
    elif isinstance(entry, (TSR, TsrSchedule)):
        keep = (TSRN, TSRI)
    elif isinstance(entry, Cluster):
        keep = (ClusterLR,)
    else:
        keep = ()
    return tuple(e for e in ests if isinstance(e, keep))


def _design_label(entry: DesignEntry) -> str:
    return type(entry).__name__


def evaluate_estimator(e: EstimatorId, ledger: BookingLedger,
                       design: DesignSpec, balance: float,
                       treated_mass: float = 0.5,
                       c_exponent: float = 1.0) -> float:
    """Apply one estimator to a ledger using the design's shares."""
    if isinstance(e, NaiveCR):
        return est_cr(ledger, design.a_c)
    if isinstance(e, NaiveLR):
        return est_lr(ledger, design.a_l)
    if isinstance(e, TSRN):
        return est_tsrn(ledger, design.a_c, design.a_l)
    if isinstance(e, TSRI):
        beta = beta_weight(clip_balance(balance), c_exponent)
        return est_tsri(ledger, design.a_c, design.a_l, beta, e.k)
    if isinstance(e, ClusterLR):
        return est_cluster(ledger, treated_mass)
    raise TypeError(f"unknown estimator {e!r}")


def run_replications(cfg: MarketConfig, itv: Optional[Intervention],
                     entry: DesignEntry, sim: SimConfig, reps: int, *,
                     ests: Sequence[EstimatorId],
                     rescale_window: bool = True,
                     master_seed: Optional[int] = None,
                     threads: int = 1) -> list[dict[EstimatorId, float]]:
    """Independent seeded replications; element r holds estimator values
    from replication r's ledger.

    Cluster designs redraw the treated side per replication (the first draw
    of the replication's stream).  Failures raise ReplicationError carrying
    the completed replications.
    """
    master = sim.seed if master_seed is None else master_seed
    balance = clip_balance(cfg.lam / cfg.tau)
    design = resolve_design(entry, balance)
    if rescale_window:
        t0, t1 = effective_window(cfg.lam, cfg.tau, sim.burn_in, sim.horizon)
    else:
        t0, t1 = sim.burn_in, sim.horizon
    c_exp = entry.c_exponent if isinstance(entry, TsrSchedule) else 1.0

    def one(r: int) -> dict[EstimatorId, float]:
        gen = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(entropy=master, spawn_key=(r,))
        ))
        d = design
        z = 0.5
        if isinstance(d, Cluster):
            if gen.random() < 0.5:
                d = swap_clusters(d)
            z = d.treated_mass(cfg)
        m = expand_for_design(cfg, itv, d)
        sc = replace(sim, burn_in=t0, horizon=t1)
        ledger, _ = simulate(m, sc, rng=gen, max_trace_points=4096)
        return {e: evaluate_estimator(e, ledger, d, balance, z, c_exp)
                for e in ests}

    results: dict[int, dict[EstimatorId, float]] = {}
    if threads <= 1:
        for r in range(reps):
            try:
                results[r] = one(r)
            except Exception as exc:
                raise ReplicationError(r, str(exc), results) from exc
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {r: pool.submit(one, r) for r in range(reps)}
            failed: Optional[tuple[int, Exception]] = None
            for r in range(reps):
                try:
                    results[r] = futures[r].result()
                except Exception as exc:
                    if failed is None:
                        failed = (r, exc)
            if failed is not None:
                raise ReplicationError(failed[0], str(failed[1]), results) \
                    from failed[1]
    return [results[r] for r in range(reps)]


def summarize(estimates: Sequence[dict[EstimatorId, float]], gte: float,
              b: int = 1000, level: float = 95.0, *, scenario: str = "",
              point: str = "", seed: int = 0,
              source: str = "sim") -> list[StatRow]:
    """Per-estimator bias/SE/RMSE plus a bootstrap interval for the bias.

    se is the across-replication standard deviation (not divided by
    sqrt(reps)), matching how the replication studies report spread;
    rmse = sqrt(bias^2 + se^2).  Estimates are sorted before any
    computation, so the summary is independent of replication order.
    """
    if len(estimates) < 2:
        raise TooFewReplications(f"need >= 2 replications, got {len(estimates)}")
    n = len(estimates)
    lo_q = (100.0 - level) / 2.0
    rows = []
    for k, e in enumerate(estimates[0]):
        vals = np.sort(np.array([est[e] for est in estimates], dtype=np.float64))
        mean = float(vals.mean())
        bias = mean - gte
        se = float(vals.std(ddof=1))
        gen = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(entropy=seed, spawn_key=(0xB007, k))
        ))
        idx = gen.integers(0, n, size=(b, n))
        boot_bias = vals[idx].mean(axis=1) - gte
        ci_lo, ci_hi = np.percentile(boot_bias, [lo_q, 100.0 - lo_q])
        rows.append(StatRow(
            scenario=scenario, point=point, estimator=e.label, source=source,
            mean=mean, bias=bias, se=se,
            rmse=math.sqrt(bias * bias + se * se),
            ci_lo=float(ci_lo), ci_hi=float(ci_hi),
            gte_true=float(gte), reps=n, seed=int(seed),
        ))
    return rows


def meanfield_rows(cfg: MarketConfig, itv: Optional[Intervention],
                   entry: DesignEntry, ests: Sequence[EstimatorId],
                   gte: float, *, scenario: str = "", point: str = "",
                   seed: int = 0) -> list[StatRow]:
    """Deterministic reference rows: the estimator applied to the
    steady-state ledger of the same design."""
    balance = clip_balance(cfg.lam / cfg.tau)
    design = resolve_design(entry, balance)
    z = design.treated_mass(cfg) if isinstance(design, Cluster) else 0.5
    c_exp = entry.c_exponent if isinstance(entry, TsrSchedule) else 1.0
    ledger = booking_rates_mf(expand_for_design(cfg, itv, design))
    rows = []
    for e in ests:
        val = evaluate_estimator(e, ledger, design, balance, z, c_exp)
        bias = val - gte
        rows.append(StatRow(
            scenario=scenario, point=point, estimator=e.label,
            source="meanfield", mean=val, bias=bias, se=0.0, rmse=abs(bias),
            ci_lo=bias, ci_hi=bias, gte_true=float(gte), reps=0,
            seed=int(seed),
        ))
    return rows


def kurtz_check(m: ExpandedMarket, ns: Sequence[int], seeds: Sequence[int],
                horizon: float) -> dict[int, np.ndarray]:
    """Sup-distance between simulated availability and the deterministic
    path started from the same (apportioned) initial state, per N and seed."""
    out = {}
    for n in ns:
        totals_map = apportion_listings(m, int(n))
        totals = np.array([totals_map[c] for c in m.listing_cells], float)
        s0 = totals / n
        traj = integrate(s0, m, horizon)
        dists = []
        for seed in seeds:
            sc = SimConfig(n_listings=int(n), horizon=float(horizon),
                           burn_in=0.0, seed=int(seed))
            _, trace = simulate(m, sc)
            mf_states = np.column_stack([
                np.interp(trace.times, traj.times, traj.states[:, l])
                for l in range(traj.states.shape[1])
            ])
            dists.append(float(np.max(np.abs(trace.fractions - mf_states))))
        out[int(n)] = np.array(dists)
    return out


def scenario_points(sc: Scenario) -> list[tuple[str, MarketConfig, Intervention]]:
    if isinstance(sc, VaryBalance):
        return [
            (f"{float(b):g}",
             *presets.homogeneous_market(lam=clip_balance(b) * sc.tau, tau=sc.tau))
            for b in sc.balances
        ]
    if isinstance(sc, VaryAvgUtility):
        return presets.utility_points(lam=sc.lam, tau=sc.tau)
    if isinstance(sc, VaryCustomerHet):
        return presets.customer_het_points(lam=sc.lam, tau=sc.tau)
    if isinstance(sc, VaryListingHet):
        return presets.listing_het_points(lam=sc.lam, tau=sc.tau)
    if isinstance(sc, VaryHTE):
        return presets.hte_points(lam=sc.lam, tau=sc.tau)
    if isinstance(sc, ClusterPreferenceRatio):
        pts = presets.cluster_points(sc.ratios, x=sc.x, delta=sc.delta,
                                     lam=sc.lam, tau=sc.tau)
        return [(pid, cfg, itv) for pid, cfg, itv, _ in pts]
    raise TypeError(f"unknown scenario {sc!r}")


def sweep(spec: SweepSpec, *, seed: Optional[int] = None,
          threads: int = 1) -> SweepResult:
    """Scenario points x designs x estimators, sim and mean-field rows.

    Per-point/design failures are recorded and the sweep continues.  Every
    (point, design) pair gets its own master seed derived from the sweep
    seed by position, so partial reruns reproduce the same rows.
    """
    master = spec.sim.seed if seed is None else seed
    label = spec.scenario.label
    rows: list[StatRow] = []
    failures: list[PointFailure] = []
    for pi, (pid, cfg, itv) in enumerate(scenario_points(spec.scenario)):
        try:
            gte = gte_true(cfg, itv)
        except Exception as exc:
            failures.append(PointFailure(label, pid, "-", str(exc)))
            continue
        for di, entry in enumerate(spec.designs):
            ests = compatible_estimators(spec.estimators, entry)
            if not ests:
                continue
            pd_seed = int(np.random.SeedSequence(
                entropy=master, spawn_key=(pi, di)
            ).generate_state(1, np.uint64)[0])
            try:
                estimates = run_replications(
                    cfg, itv, entry, spec.sim, spec.reps, ests=ests,
                    rescale_window=spec.rescale_window,
                    master_seed=pd_seed, threads=threads,
                )
                sim_rows = summarize(estimates, gte, spec.bootstrap_b,
                                     spec.level, scenario=label, point=pid,
                                     seed=pd_seed)
                mf_rows = meanfield_rows(cfg, itv, entry, ests, gte,
                                         scenario=label, point=pid,
                                         seed=pd_seed)
            except Exception as exc:
                failures.append(
                    PointFailure(label, pid, _design_label(entry), str(exc))
                )
                continue
            for sim_row, mf_row in zip(sim_rows, mf_rows):
                rows.append(sim_row)
                rows.append(mf_row)
    return SweepResult(tuple(rows), tuple(failures))


# --- serialization -----------------------------------------------------------

CSV_HEADER = ("scenario", "point", "estimator", "source", "mean", "bias",
              "se", "rmse", "ci_lo", "ci_hi", "gte_true", "reps", "seed")

_FLOAT_FIELDS = {"mean", "bias", "se", "rmse", "ci_lo", "ci_hi", "gte_true"}


def _row_values(row: StatRow) -> list[str]:
    out = []
    for name in CSV_HEADER:
        x = getattr(row, name)
        out.append(repr(float(x)) if name in _FLOAT_FIELDS else str(x))
    return out


def rows_to_csv(rows: Sequence[StatRow]) -> str:
    """UTF-8, \\n-terminated CSV; floats printed as shortest round-trip."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(_row_values(row))
    return buf.getvalue()


def rows_to_json(rows: Sequence[StatRow]) -> str:
    docs = []
    for row in rows:
        doc = {}
        for name in CSV_HEADER:
            x = getattr(row, name)
            doc[name] = float(x) if name in _FLOAT_FIELDS else x
        docs.append(doc)
    return json.dumps({"rows": docs}, indent=2, sort_keys=True) + "\n"
