"""Canned markets and run configurations for the bundled study scenarios.

Market builders return (MarketConfig, Intervention) pairs; the *_points
functions enumerate a scenario axis as (point id, market, intervention)
rows for the sweep runner; ``preset_config`` returns a ready-to-run config
document for the command line.
"""
from __future__ import annotations

import copy
from typing import Optional

from .designs import ClusterScenario, cluster_market
from .market_model import (
    Cluster,
    CustomerType,
    Intervention,
    ListingType,
    MarketConfig,
)

# one-type calibration: booking probability 0.2011 control / 0.2321 treated
# at lam = tau = 1
CAL_V = 0.315
CAL_V_TREATED = 0.3937


def homogeneous_market(v: float = CAL_V, v_treated: float = CAL_V_TREATED, *,
                       lam: float = 1.0, tau: float = 1.0,
                       eps: float = 1.0, alpha: float = 1.0,
                       ) -> tuple[MarketConfig, Intervention]:
    cfg = MarketConfig(
        customers=(CustomerType("c1", 1.0, eps, {"l1": alpha}, {"l1": v}),),
        listings=(ListingType("l1", 1.0),),
        lam=lam,
        tau=tau,
    )
    return cfg, Intervention(v_treated={("c1", "l1"): v_treated})


def two_customer_market(v1: float, v2: float, *, lift: float = 1.25,
                        lam: float = 1.0, tau: float = 1.0,
                        eps: float = 1.0, alpha: float = 1.0,
                        ) -> tuple[MarketConfig, Intervention]:
    """One listing type, two equal-share customer types with utilities v1, v2."""
    cfg = MarketConfig(
        customers=(
            CustomerType("c1", 0.5, eps, {"l1": alpha}, {"l1": v1}),
            CustomerType("c2", 0.5, eps, {"l1": alpha}, {"l1": v2}),
        ),
        listings=(ListingType("l1", 1.0),),
        lam=lam,
        tau=tau,
    )
    itv = Intervention(v_treated={
        ("c1", "l1"): lift * v1,
        ("c2", "l1"): lift * v2,
    })
    return cfg, itv


def two_listing_market(v1: float, v2: float,
                       v1_treated: Optional[float] = None,
                       v2_treated: Optional[float] = None, *,
                       lift: float = 1.25,
                       lam: float = 1.0, tau: float = 1.0,
                       eps: float = 1.0, alpha: float = 1.0,
                       ) -> tuple[MarketConfig, Intervention]:
    """One customer type, two equal-mass listing types with utilities v1, v2.

    Treated utilities default to a uniform multiplicative lift but can be
    pinned individually (heterogeneous treatment effects).
    """
    cfg = MarketConfig(
        customers=(CustomerType(
            "c1", 1.0, eps,
            {"l1": alpha, "l2": alpha},
            {"l1": v1, "l2": v2},
        ),),
        listings=(ListingType("l1", 0.5), ListingType("l2", 0.5)),
        lam=lam,
        tau=tau,
    )
    itv = Intervention(v_treated={
        ("c1", "l1"): lift * v1 if v1_treated is None else v1_treated,
        ("c1", "l2"): lift * v2 if v2_treated is None else v2_treated,
    })
    return cfg, itv


def fixed_k_market(n_listings: int, *, k: int = 50, v: float = 6.0,
                   v_treated: float = 7.5, lam: float = 1.0, tau: float = 1.0,
                   eps: float = 1.0) -> tuple[MarketConfig, Intervention]:
    """One-type market for the fixed-size consideration variant.

    The mean-field analog of sampling exactly k of N listings is a
    consideration probability k/N, so alpha depends on the simulated size.
    """
    return homogeneous_market(v, v_treated, lam=lam, tau=tau, eps=eps,
                              alpha=k / n_listings)


def utility_points(*, lam: float = 1.0, tau: float = 1.0):
    """Average-utility axis: low, medium, high."""
    table = [("low", 0.155, 0.1938), ("medium", CAL_V, CAL_V_TREATED),
             ("high", 0.62, 0.775)]
    return [(pid, *homogeneous_market(v, vt, lam=lam, tau=tau))
            for pid, v, vt in table]


def customer_het_points(*, lam: float = 1.0, tau: float = 1.0):
    """Customer-heterogeneity axis at a fixed 1.25x lift."""
    table = [("hom", CAL_V, CAL_V), ("het_low", 0.17, 0.51),
             ("het_high", 0.12, 0.46)]
    return [(pid, *two_customer_market(v1, v2, lam=lam, tau=tau))
            for pid, v1, v2 in table]


def listing_het_points(*, lam: float = 1.0, tau: float = 1.0):
    """Listing-heterogeneity axis at a fixed 1.25x lift."""
    table = [("hom", CAL_V, CAL_V), ("het_low", 0.25, 0.4),
             ("het_high", 0.1, 0.6)]
    return [(pid, *two_listing_market(v1, v2, lam=lam, tau=tau))
            for pid, v1, v2 in table]


def hte_points(*, lam: float = 1.0, tau: float = 1.0):
    """Treatment-effect-shape axis on the preference pair (0.27, 0.351):
    uniform multiplicative, preference-amplifying, preference-reversing."""
    table = [("mult", 0.3375, 0.4388), ("amp", 0.2727, 0.5265),
             ("rev", 0.432, 0.355)]
    return [(pid, *two_listing_market(0.27, 0.351, vt1, vt2, lam=lam, tau=tau))
            for pid, vt1, vt2 in table]


def cluster_points(ratios, *, x: float = 0.5, delta: float = 1.3,
                   lam: float = 1.0, tau: float = 1.0,
                   ) -> list[tuple[str, MarketConfig, Intervention, Cluster]]:
    """Preference-ratio axis y/x for the two-cluster market."""
    out = []
    for r in ratios:
        cs = ClusterScenario(x=x, y=r * x, delta=delta, lam=lam, tau=tau)
        cfg, itv, design = cluster_market(cs)
        out.append((f"{float(r):g}", cfg, itv, design))
    return out


# --- config documents -------------------------------------------------------

def _market_doc(cfg: MarketConfig) -> dict:
    return {
        "lam": cfg.lam,
        "tau": cfg.tau,
        "customers": [
            {"id": c.id, "phi": c.phi, "epsilon": c.epsilon,
             "alpha": dict(c.alpha), "v": dict(c.v)}
            for c in cfg.customers
        ],
        "listings": [
            {"id": t.id, "rho": t.rho, "nu": t.nu} for t in cfg.listings
        ],
    }


def _intervention_doc(itv: Intervention) -> dict:
    doc = {"v_treated": {f"{c}:{l}": x for (c, l), x in itv.v_treated.items()}}
    if itv.alpha_treated:
        doc["alpha_treated"] = {
            f"{c}:{l}": x for (c, l), x in itv.alpha_treated.items()
        }
    return doc


_SIM_DEFAULTS = {
    "n_listings": 1000,
    "horizon": 25.0,
    "burn_in": 5.0,
    "seed": 20260814,
    "consideration": {"kind": "bernoulli"},
    "initial_state": "all_available",
    "rescale_window": True,
}

_ANALYSIS_DEFAULTS = {"reps": 200, "bootstrap_b": 1000, "level": 95.0}

_SWEEP_ESTIMATORS = ["cr", "lr", "tsrn", "tsri-1", "tsri-2"]

_SWEEP_DESIGNS = [
    {"kind": "cr", "a_c": 0.5},
    {"kind": "lr", "a_l": 0.5},
    {"kind": "tsr_schedule", "a_bar_c": 0.5, "a_bar_l": 0.5, "c_exponent": 1.0},
]


def _single_run_doc(cfg: MarketConfig, itv: Intervention, design: dict) -> dict:
    return {
        "schema_version": 1,
        "market": _market_doc(cfg),
        "intervention": _intervention_doc(itv),
        "design": design,
        "sim": dict(_SIM_DEFAULTS),
        "analysis": dict(_ANALYSIS_DEFAULTS),
    }


def _scenario_sweep_doc(scenario: dict) -> dict:
    return {
        "schema_version": 1,
        "sim": dict(_SIM_DEFAULTS),
        "sweep": {
            "scenario": scenario,
            "designs": copy.deepcopy(_SWEEP_DESIGNS),
            "estimators": list(_SWEEP_ESTIMATORS),
            "reps": _ANALYSIS_DEFAULTS["reps"],
            "bootstrap_b": _ANALYSIS_DEFAULTS["bootstrap_b"],
            "level": _ANALYSIS_DEFAULTS["level"],
        },
    }


def _build_presets() -> dict[str, dict]:
    tsr_design = {"kind": "tsr", "a_c": 0.5, "a_l": 0.5}
    presets: dict[str, dict] = {}

    presets["calibration"] = _single_run_doc(*homogeneous_market(), tsr_design)

    for pid, cfg, itv in utility_points():
        presets[f"utility_{pid}"] = _single_run_doc(cfg, itv, tsr_design)
    for pid, cfg, itv in customer_het_points():
        presets[f"customer_{pid}"] = _single_run_doc(cfg, itv, tsr_design)
    for pid, cfg, itv in listing_het_points():
        presets[f"listing_{pid}"] = _single_run_doc(cfg, itv, tsr_design)
    for pid, cfg, itv in hte_points():
        presets[f"hte_{pid}"] = _single_run_doc(cfg, itv, tsr_design)

    n = _SIM_DEFAULTS["n_listings"]
    doc = _single_run_doc(*fixed_k_market(n), tsr_design)
    doc["sim"]["consideration"] = {"kind": "fixed_k", "k": 50}
    presets["fixed_k"] = doc

    presets["balance_sweep"] = _scenario_sweep_doc(
        {"kind": "vary_balance", "balances": [0.1, 1.0, 10.0]}
    )
    for name, kind in (
        ("utility_sweep", "vary_avg_utility"),
        ("customer_het_sweep", "vary_customer_het"),
        ("listing_het_sweep", "vary_listing_het"),
        ("hte_sweep", "vary_hte"),
    ):
        presets[name] = _scenario_sweep_doc({"kind": kind})

    cluster_doc = _scenario_sweep_doc({
        "kind": "cluster_preference_ratio",
        "ratios": [0.0, 0.25, 0.5, 0.75, 1.0],
        "x": 0.5,
        "delta": 1.3,
    })
    cluster_doc["sweep"]["designs"] = [
        {"kind": "cluster", "assignment": {"l1": 1, "l2": 0}},
        {"kind": "tsr_schedule", "a_bar_c": 0.5, "a_bar_l": 0.5,
         "c_exponent": 1.0},
    ]
    cluster_doc["sweep"]["estimators"] = ["cluster", "tsri-2"]
    presets["cluster_grid"] = cluster_doc
    return presets


_PRESETS = _build_presets()

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset_config(name: str) -> dict:
    """A deep copy of the named preset's config document."""
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return copy.deepcopy(_PRESETS[name])
