"""Command-line entry point.

One JSON config document in (or a named built-in preset), deterministic
CSV/JSON out.  Exit codes: 0 success, 2 config/validation error, 3 solver
failure, 4 replication failure after partial results were written.  When
--out is given, standard output carries no data.

The only environment variable consulted is MARKETEXP_THREADS (default
thread count for the replication pool); output bytes never depend on it.
"""
from __future__ import annotations

import dataclasses
import json
import os
import sys
from typing import Optional, Sequence

import click

from . import presets
from .analysis_harness import (
    ClusterPreferenceRatio,
    DesignEntry,
    ReplicationError,
    Scenario,
    StatRow,
    SweepSpec,
    VaryAvgUtility,
    VaryBalance,
    VaryCustomerHet,
    VaryHTE,
    VaryListingHet,
    scenario_points,
    compatible_estimators,
    meanfield_rows,
    resolve_design,
    rows_to_csv,
    rows_to_json,
    run_replications,
    summarize,
    sweep,
)
from .asymptotics import q_limit_demand, q_limit_supply, supply_state_approx
from .designs import TsrSchedule
from .estimators import EstimatorId, gte_true, parse_estimator
from .finite_sim import AllAvailable, FixedK, MeanFieldGC, PerListingBernoulli, SimConfig
from .market_model import (
    CR,
    Cluster,
    CustomerType,
    GlobalControl,
    GlobalTreatment,
    Intervention,
    LR,
    ListingType,
    MarketConfig,
    MarketValidationError,
    TSR,
    expand_for_design,
    validate_market,
)
from .mean_field import SolverError, booking_rates_mf, clip_balance, steady_state

SCHEMA_VERSION = 1
THREADS_ENV = "MARKETEXP_THREADS"

_SUPPLY_DIAG_BALANCE = 100.0


class ConfigError(ValueError):
    """Anything wrong with the config document; maps to exit code 2."""


# --- config parsing ----------------------------------------------------------


def _check_keys(doc: dict, where: str, allowed: Sequence[str],
                required: Sequence[str] = ()) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object, got {type(doc).__name__}")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    missing = sorted(set(required) - set(doc))
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")


def _number(doc: dict, where: str, key: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise ConfigError(f"{where}: missing key '{key}'")
        return default
    x = doc[key]
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {x!r}")
    return float(x)


def _ident(x, where: str) -> str:
    if not isinstance(x, str) or not x:
        raise ConfigError(f"{where}: ids must be non-empty strings, got {x!r}")
    if ":" in x:
        raise ConfigError(f"{where}: ids may not contain ':', got {x!r}")
    return x


def parse_market(doc: dict) -> MarketConfig:
    _check_keys(doc, "market", ("customers", "listings", "lam", "tau"),
                ("customers", "listings", "lam", "tau"))
    listings = []
    for k, t in enumerate(doc["listings"]):
        where = f"market.listings[{k}]"
        _check_keys(t, where, ("id", "rho", "nu"), ("id", "rho"))
        listings.append(ListingType(
            id=_ident(t["id"], where),
            rho=_number(t, where, "rho"),
            nu=_number(t, where, "nu", 1.0),
        ))
    customers = []
    for k, c in enumerate(doc["customers"]):
        where = f"market.customers[{k}]"
        _check_keys(c, where, ("id", "phi", "epsilon", "alpha", "v"),
                    ("id", "phi", "epsilon", "v"))
        for key in ("alpha", "v"):
            if key in c and not isinstance(c[key], dict):
                raise ConfigError(f"{where}.{key}: expected an object")
        v = {str(l): _number(c["v"], f"{where}.v", str(l)) for l in c["v"]}
        alpha_doc = c.get("alpha", {})
        alpha = {str(l): _number(alpha_doc, f"{where}.alpha", str(l))
                 for l in alpha_doc}
        for l in v:
            alpha.setdefault(l, 1.0)
        customers.append(CustomerType(
            id=_ident(c["id"], where),
            phi=_number(c, where, "phi"),
            epsilon=_number(c, where, "epsilon"),
            alpha=alpha,
            v=v,
        ))
    cfg = MarketConfig(
        customers=tuple(customers),
        listings=tuple(listings),
        lam=_number(doc, "market", "lam"),
        tau=_number(doc, "market", "tau"),
    )
    try:
        return validate_market(cfg)
    except MarketValidationError as exc:
        raise ConfigError(f"market: {exc}") from exc


def _pair_key(key: str, cfg: MarketConfig, where: str) -> tuple[str, str]:
    parts = key.split(":")
    if len(parts) != 2:
        raise ConfigError(f"{where}: keys must look like 'customer:listing', got {key!r}")
    c, l = parts
    if c not in cfg.customer_ids():
        raise ConfigError(f"{where}: unknown customer id {c!r}")
    if l not in cfg.listing_ids():
        raise ConfigError(f"{where}: unknown listing id {l!r}")
    return c, l


def parse_intervention(doc: dict, cfg: MarketConfig) -> Intervention:
    _check_keys(doc, "intervention", ("v_treated", "alpha_treated"), ("v_treated",))
    vt = {
        _pair_key(k, cfg, "intervention.v_treated"):
            _number(doc["v_treated"], "intervention.v_treated", k)
        for k in doc["v_treated"]
    }
    at = {
        _pair_key(k, cfg, "intervention.alpha_treated"):
            _number(doc.get("alpha_treated", {}), "intervention.alpha_treated", k)
        for k in doc.get("alpha_treated", {})
    }
    missing = [
        f"{c}:{l}" for c in cfg.customer_ids() for l in cfg.listing_ids()
        if (c, l) not in vt
    ]
    if missing:
        raise ConfigError(f"intervention.v_treated: missing pairs {missing}")
    return Intervention(v_treated=vt, alpha_treated=at)


def parse_design(doc: dict) -> DesignEntry:
    _check_keys(doc, "design",
                ("kind", "a_c", "a_l", "a_bar_c", "a_bar_l", "c_exponent",
                 "assignment"),
                ("kind",))
    kind = doc["kind"]
    try:
        if kind == "gc":
            _check_keys(doc, "design", ("kind",))
            return GlobalControl()
        if kind == "gt":
            _check_keys(doc, "design", ("kind",))
            return GlobalTreatment()
        if kind == "cr":
            _check_keys(doc, "design", ("kind", "a_c"), ("a_c",))
            return CR(a_c=_number(doc, "design", "a_c"))
        if kind == "lr":
            _check_keys(doc, "design", ("kind", "a_l"), ("a_l",))
            return LR(a_l=_number(doc, "design", "a_l"))
        if kind == "tsr":
            _check_keys(doc, "design", ("kind", "a_c", "a_l"), ("a_c", "a_l"))
            return TSR(a_c=_number(doc, "design", "a_c"),
                       a_l=_number(doc, "design", "a_l"))
        if kind == "tsr_schedule":
            _check_keys(doc, "design",
                        ("kind", "a_bar_c", "a_bar_l", "c_exponent"))
            return TsrSchedule(
                a_bar_c=_number(doc, "design", "a_bar_c", 0.5),
                a_bar_l=_number(doc, "design", "a_bar_l", 0.5),
                c_exponent=_number(doc, "design", "c_exponent", 1.0),
            )
        if kind == "cluster":
            _check_keys(doc, "design", ("kind", "assignment"), ("assignment",))
            asg = doc["assignment"]
            if not isinstance(asg, dict):
                raise ConfigError("design.assignment: expected an object")
            return Cluster(assignment={
                _ident(k, "design.assignment"): int(asg[k]) for k in asg
            })
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"design: {exc}") from exc
    raise ConfigError(f"design.kind: unknown kind {kind!r}")


_SIM_KEYS = ("n_listings", "horizon", "burn_in", "seed", "consideration",
             "initial_state", "rescale_window")


def parse_sim(doc: dict) -> tuple[SimConfig, bool]:
    _check_keys(doc, "sim", _SIM_KEYS)
    cons_doc = doc.get("consideration", {"kind": "bernoulli"})
    _check_keys(cons_doc, "sim.consideration", ("kind", "k"), ("kind",))
    if cons_doc["kind"] == "bernoulli":
        consideration = PerListingBernoulli()
    elif cons_doc["kind"] == "fixed_k":
        _check_keys(cons_doc, "sim.consideration", ("kind", "k"), ("k",))
        consideration = FixedK(k=int(cons_doc["k"]))
    else:
        raise ConfigError(
            f"sim.consideration.kind: unknown kind {cons_doc['kind']!r}")
    init_doc = doc.get("initial_state", "all_available")
    if init_doc == "all_available":
        initial = AllAvailable()
    elif init_doc == "meanfield_gc":
        initial = MeanFieldGC()
    else:
        raise ConfigError(f"sim.initial_state: unknown value {init_doc!r}")
    rescale = doc.get("rescale_window", True)
    if not isinstance(rescale, bool):
        raise ConfigError("sim.rescale_window: expected a boolean")
    try:
        sc = SimConfig(
            n_listings=int(_number(doc, "sim", "n_listings", 1000)),
            horizon=_number(doc, "sim", "horizon", 25.0),
            burn_in=_number(doc, "sim", "burn_in", 5.0),
            seed=int(_number(doc, "sim", "seed", 20260814)),
            consideration=consideration,
            initial_state=initial,
        )
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc
    return sc, rescale


def parse_scenario(doc: dict) -> Scenario:
    _check_keys(doc, "sweep.scenario",
                ("kind", "balances", "ratios", "x", "delta", "lam", "tau"),
                ("kind",))
    kind = doc["kind"]
    lam = _number(doc, "sweep.scenario", "lam", 1.0)
    tau = _number(doc, "sweep.scenario", "tau", 1.0)
    try:
        if kind == "vary_balance":
            _check_keys(doc, "sweep.scenario", ("kind", "balances", "tau"))
            bals = doc.get("balances", [0.1, 1.0, 10.0])
            return VaryBalance(balances=tuple(float(b) for b in bals), tau=tau)
        if kind == "vary_avg_utility":
            _check_keys(doc, "sweep.scenario", ("kind", "lam", "tau"))
            return VaryAvgUtility(lam=lam, tau=tau)
        if kind == "vary_customer_het":
            _check_keys(doc, "sweep.scenario", ("kind", "lam", "tau"))
            return VaryCustomerHet(lam=lam, tau=tau)
        if kind == "vary_listing_het":
            _check_keys(doc, "sweep.scenario", ("kind", "lam", "tau"))
            return VaryListingHet(lam=lam, tau=tau)
        if kind == "vary_hte":
            _check_keys(doc, "sweep.scenario", ("kind", "lam", "tau"))
            return VaryHTE(lam=lam, tau=tau)
        if kind == "cluster_preference_ratio":
            ratios = doc.get("ratios", [0.0, 0.25, 0.5, 0.75, 1.0])
            return ClusterPreferenceRatio(
                ratios=tuple(float(r) for r in ratios),
                x=_number(doc, "sweep.scenario", "x", 0.5),
                delta=_number(doc, "sweep.scenario", "delta", 1.3),
                lam=lam, tau=tau,
            )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"sweep.scenario: {exc}") from exc
    raise ConfigError(f"sweep.scenario.kind: unknown kind {kind!r}")


def _parse_estimators(labels, where: str) -> tuple[EstimatorId, ...]:
    if not isinstance(labels, list) or not labels:
        raise ConfigError(f"{where}: expected a non-empty list of labels")
    out = []
    for lab in labels:
        try:
            out.append(parse_estimator(str(lab)))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return tuple(out)


_TOP_KEYS = ("schema_version", "market", "intervention", "design", "sim",
             "sweep", "analysis")


def validate_config(doc: dict) -> dict:
    _check_keys(doc, "config", _TOP_KEYS, ("schema_version",))
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version: expected {SCHEMA_VERSION}, got {doc['schema_version']!r}")
    return doc


def load_config(path: Optional[str], preset: Optional[str]) -> dict:
    if (path is None) == (preset is None):
        raise ConfigError("exactly one of --config and --preset is required")
    if preset is not None:
        try:
            return validate_config(presets.preset_config(preset))
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from exc
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(doc)


def _analysis_params(doc: dict) -> dict:
    sec = doc.get("analysis", {})
    _check_keys(sec, "analysis",
                ("reps", "bootstrap_b", "level", "estimators"))
    out = {
        "reps": int(_number(sec, "analysis", "reps", 200)),
        "bootstrap_b": int(_number(sec, "analysis", "bootstrap_b", 1000)),
        "level": _number(sec, "analysis", "level", 95.0),
        "estimators": None,
    }
    if "estimators" in sec:
        out["estimators"] = _parse_estimators(sec["estimators"],
                                              "analysis.estimators")
    return out


_ALL_ESTIMATOR_LABELS = ("cr", "lr", "tsrn", "tsri-1", "tsri-2", "cluster")


def _default_estimators(entry: DesignEntry) -> tuple[EstimatorId, ...]:
    every = tuple(parse_estimator(lab) for lab in _ALL_ESTIMATOR_LABELS)
    return compatible_estimators(every, entry)


def _market_sections(doc: dict) -> tuple[MarketConfig, Intervention]:
    if "market" not in doc:
        raise ConfigError("config: missing 'market' section")
    if "intervention" not in doc:
        raise ConfigError("config: missing 'intervention' section")
    cfg = parse_market(doc["market"])
    return cfg, parse_intervention(doc["intervention"], cfg)


def _design_section(doc: dict) -> DesignEntry:
    if "design" not in doc:
        return TSR(a_c=0.5, a_l=0.5)
    return parse_design(doc["design"])


# --- output ------------------------------------------------------------------


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _emit_rows(rows: Sequence[StatRow], out: Optional[str], fmt: str) -> None:
    _emit(rows_to_json(rows) if fmt == "json" else rows_to_csv(rows), out)


def _json_doc(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _cell_key(cell) -> str:
    return f"{cell[0]}:{cell[1]}"


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _resolve_threads(threads: Optional[int]) -> int:
    if threads is not None:
        return max(1, threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


# --- commands ----------------------------------------------------------------


def common_options(f):
    for opt in reversed((
        click.option("--config", "config_path", type=str, default=None,
                     help="Path to a JSON config document."),
        click.option("--preset", type=str, default=None,
                     help=f"Built-in config; one of {', '.join(presets.PRESET_NAMES)}."),
        click.option("--out", type=str, default=None,
                     help="Output file; stdout when omitted."),
        click.option("--seed", type=int, default=None,
                     help="Master seed override (unsigned 64-bit)."),
        click.option("--reps", type=int, default=None,
                     help="Replication count override."),
        click.option("--threads", type=int, default=None,
                     help=f"Replication pool size (default ${THREADS_ENV} or 1)."),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
                     default="csv", help="Tabular output format."),
    )):
        f = opt(f)
    return f


@click.group()
def main() -> None:
    """Marketplace-experiment engines: steady states, finite simulations,
    limit tables, and estimator-bias sweeps."""


def _arm_block(cfg: MarketConfig, itv: Intervention, design, balance: float) -> dict:
    m = expand_for_design(cfg, itv, design)
    st = steady_state(m)
    ledger = booking_rates_mf(m)
    total = sum(ledger.rates.values())
    block = {
        "s": {_cell_key(c): float(st.state.values[k])
              for k, c in enumerate(m.listing_cells)},
        "residual": float(st.residual_norm),
        "iterations": int(st.iterations),
        "q": {f"{i}:{j}": float(x) for (i, j), x in sorted(ledger.rates.items())},
        "total_rate": float(total),
        "booking_fraction": float(total / cfg.lam),
    }
    if balance >= _SUPPLY_DIAG_BALANCE:
        approx = supply_state_approx(m, balance)
        gaps = [
            abs(float(approx.values[k]) - float(st.state.values[k]))
            / max(float(st.state.values[k]), 1e-300)
            for k in range(len(m.listing_cells))
        ]
        block["supply_approx"] = {
            "s": {_cell_key(c): float(approx.values[k])
                  for k, c in enumerate(m.listing_cells)},
            "max_rel_gap": max(gaps) if gaps else 0.0,
        }
    return block


@main.command("steady")
@common_options
def cmd_steady(config_path, preset, out, seed, reps, threads, fmt) -> None:
    """Mean-field steady states and booking rates for both global arms."""
    try:
        doc = load_config(config_path, preset)
        cfg, itv = _market_sections(doc)
    except ConfigError as exc:
        _fail(2, str(exc))
    try:
        balance = clip_balance(cfg.lam / cfg.tau)
        result = {
            "balance": float(balance),
            "gc": _arm_block(cfg, itv, GlobalControl(), balance),
            "gt": _arm_block(cfg, itv, GlobalTreatment(), balance),
        }
        result["gte"] = result["gt"]["total_rate"] - result["gc"]["total_rate"]
        result["gte_over_lam"] = result["gte"] / cfg.lam
        result["gte_over_tau"] = result["gte"] / cfg.tau
    except SolverError as exc:
        _fail(3, str(exc))
    _emit(_json_doc(result), out)
    sys.exit(0)


@main.command("simulate")
@common_options
def cmd_simulate(config_path, preset, out, seed, reps, threads, fmt) -> None:
    """Seeded finite-market replications; bias/SE/RMSE rows next to the
    mean-field reference."""
    try:
        doc = load_config(config_path, preset)
        cfg, itv = _market_sections(doc)
        entry = _design_section(doc)
        sim, rescale = parse_sim(doc.get("sim", {}))
        pars = _analysis_params(doc)
    except ConfigError as exc:
        _fail(2, str(exc))
    if seed is not None:
        sim = dataclasses.replace(sim, seed=seed)
    n_reps = reps if reps is not None else pars["reps"]
    ests = pars["estimators"] or _default_estimators(entry)
    bad = [e.label for e in ests if e not in compatible_estimators(ests, entry)]
    if bad:
        _fail(2, f"analysis.estimators: {bad} do not apply to this design")
    point = doc.get("design", {}).get("kind", "tsr")
    try:
        gte = gte_true(cfg, itv)
        mf = meanfield_rows(cfg, itv, entry, ests, gte, scenario="single",
                            point=point, seed=sim.seed)
    except SolverError as exc:
        _fail(3, str(exc))
    try:
        estimates = run_replications(
            cfg, itv, entry, sim, n_reps, ests=ests, rescale_window=rescale,
            threads=_resolve_threads(threads),
        )
    except ReplicationError as exc:
        rows: list[StatRow] = []
        done = [exc.partial[r] for r in sorted(exc.partial)]
        if len(done) >= 2:
            rows.extend(summarize(done, gte, pars["bootstrap_b"],
                                  pars["level"], scenario="single",
                                  point=point, seed=sim.seed))
        rows.extend(mf)
        _emit_rows(rows, out, fmt)
        _fail(4, str(exc))
    rows = []
    sim_rows = summarize(estimates, gte, pars["bootstrap_b"], pars["level"],
                         scenario="single", point=point, seed=sim.seed)
    for s_row, m_row in zip(sim_rows, mf):
        rows.append(s_row)
        rows.append(m_row)
    _emit_rows(rows, out, fmt)
    sys.exit(0)


@main.command("asymptotics")
@common_options
def cmd_asymptotics(config_path, preset, out, seed, reps, threads, fmt) -> None:
    """Demand- and supply-limit booking tables for the configured design."""
    try:
        doc = load_config(config_path, preset)
        cfg, itv = _market_sections(doc)
        entry = _design_section(doc)
    except ConfigError as exc:
        _fail(2, str(exc))
    try:
        design = resolve_design(entry, clip_balance(cfg.lam / cfg.tau))
        m = expand_for_design(cfg, itv, design)
        demand = q_limit_demand(m)
        supply = q_limit_supply(m)
    except SolverError as exc:
        _fail(3, str(exc))
    result = {
        "design": type(design).__name__,
        "demand": {
            "q_over_lam": {f"{i}:{j}": float(x)
                           for (i, j), x in sorted(demand.q_over_scale.items())},
            "gte_over_lam": float(demand.gte_over_scale),
        },
        "supply": {
            "q_over_tau": {f"{i}:{j}": float(x)
                           for (i, j), x in sorted(supply.q_over_scale.items())},
            "gte_over_tau": float(supply.gte_over_scale),
        },
    }
    _emit(_json_doc(result), out)
    sys.exit(0)


@main.command("sweep")
@common_options
def cmd_sweep(config_path, preset, out, seed, reps, threads, fmt) -> None:
    """Scenario sweep: simulated and mean-field bias rows per point."""
    try:
        doc = load_config(config_path, preset)
        if "sweep" not in doc:
            raise ConfigError("config: missing 'sweep' section")
        sec = doc["sweep"]
        _check_keys(sec, "sweep",
                    ("scenario", "designs", "estimators", "reps",
                     "bootstrap_b", "level"),
                    ("scenario", "designs", "estimators"))
        scenario = parse_scenario(sec["scenario"])
        designs = tuple(parse_design(d) for d in sec["designs"])
        ests = _parse_estimators(sec["estimators"], "sweep.estimators")
        sim, rescale = parse_sim(doc.get("sim", {}))
        if seed is not None:
            sim = dataclasses.replace(sim, seed=seed)
        spec = SweepSpec(
            scenario=scenario,
            designs=designs,
            estimators=ests,
            reps=reps if reps is not None else int(_number(sec, "sweep", "reps", 200)),
            sim=sim,
            bootstrap_b=int(_number(sec, "sweep", "bootstrap_b", 1000)),
            level=_number(sec, "sweep", "level", 95.0),
            rescale_window=rescale,
        )
    except (ConfigError, ValueError) as exc:
        _fail(2, str(exc))
    result = sweep(spec, threads=_resolve_threads(threads))
    _emit_rows(result.rows, out, fmt)
    for f in result.failures:
        click.echo(
            f"error: point {f.point} ({f.scenario}, {f.design}): {f.message}",
            err=True,
        )
    sys.exit(4 if result.failures else 0)


@main.command("cluster-compare")
@common_options
def cmd_cluster_compare(config_path, preset, out, seed, reps, threads, fmt) -> None:
    """Cluster versus two-sided estimator bias over a preference-ratio grid
    (deterministic mean-field rows)."""
    try:
        doc = load_config(config_path, preset)
        sec = doc.get("sweep", {})
        _check_keys(sec, "sweep",
                    ("scenario", "designs", "estimators", "reps",
                     "bootstrap_b", "level"))
        scenario = parse_scenario(sec["scenario"]) if "scenario" in sec \
            else ClusterPreferenceRatio()
        if not isinstance(scenario, ClusterPreferenceRatio):
            raise ConfigError(
                "cluster-compare needs a cluster_preference_ratio scenario")
        if "designs" in sec:
            designs = tuple(parse_design(d) for d in sec["designs"])
        else:
            designs = (Cluster(assignment={"l1": 1, "l2": 0}), TsrSchedule())
        if "estimators" in sec:
            ests = _parse_estimators(sec["estimators"], "sweep.estimators")
        else:
            ests = (parse_estimator("cluster"), parse_estimator("tsri-2"))
    except ConfigError as exc:
        _fail(2, str(exc))
    rows: list[StatRow] = []
    failures = []
    for pid, cfg, itv in scenario_points(scenario):
        try:
            gte = gte_true(cfg, itv)
            for entry in designs:
                keep = compatible_estimators(ests, entry)
                if not keep:
                    continue
                rows.extend(meanfield_rows(
                    cfg, itv, entry, keep, gte,
                    scenario=scenario.label, point=pid, seed=0,
                ))
        except SolverError as exc:
            failures.append((pid, str(exc)))
    _emit_rows(rows, out, fmt)
    for pid, msg in failures:
        click.echo(f"error: point {pid}: {msg}", err=True)
    sys.exit(4 if failures else 0)


if __name__ == "__main__":
    main()
