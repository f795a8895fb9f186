"""Market primitives and the control/treatment expansion.

A market couples customer types (arrival share, outside-option weight,
consideration probabilities, utilities) with listing types (mass share,
occupancy-rate multiplier) plus the aggregate arrival rate ``lam`` and the
replenishment scale ``tau``.

An experiment design splits each side into condition 0 (control) and 1
(treatment).  ``expand_for_design`` builds the expanded market over
(customer, condition) x (listing, condition) cells; treated choice
parameters apply only where a treated customer meets a treated listing.
Every engine in this package runs on the expanded market.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Union

import numpy as np

__all__ = [
    "MarketValidationError",
    "NonPositiveParameter",
    "ShareSumMismatch",
    "StateOutOfBounds",
    "CustomerType",
    "ListingType",
    "MarketConfig",
    "Intervention",
    "GlobalControl",
    "GlobalTreatment",
    "CR",
    "LR",
    "TSR",
    "Cluster",
    "DesignSpec",
    "ExpandedMarket",
    "Classification",
    "validate_market",
    "expand_for_design",
    "choice_probabilities",
    "outside_option_probability",
    "classify_intervention",
]

# Shares are renormalized when they miss 1 by at most this much; beyond it
# the config is rejected.
SHARE_TOL = 1e-9
# Availability states may exceed [0, rho] by at most this much.
STATE_TOL = 1e-9


class MarketValidationError(ValueError):
    """A market, intervention, or design violates a structural invariant."""


class NonPositiveParameter(MarketValidationError):
    """A rate, share, weight, or utility is outside its positive domain."""


class ShareSumMismatch(MarketValidationError):
    """Customer or listing shares do not sum to 1 within tolerance."""


class StateOutOfBounds(ValueError):
    """An availability state leaves [0, rho] beyond tolerance."""


@dataclass(frozen=True)
class CustomerType:
    """One customer type.

    Parameters
    ----------
    id : str
        Opaque label; declaration order fixes vector layouts.
    phi : float
        Arrival share in (0, 1]; shares sum to 1 over the market.
    epsilon : float
        Outside-option weight (> 0), already scaled to the mean-field units.
    alpha : mapping listing id -> float in (0, 1]
        Probability that an available listing of that type enters the
        consideration set.
    v : mapping listing id -> float > 0
        Utility for listings of that type.
    """

    id: str
    phi: float
    epsilon: float
    alpha: Mapping[str, float]
    v: Mapping[str, float]


@dataclass(frozen=True)
class ListingType:
    """One listing type: mass share ``rho`` and occupancy-rate multiplier ``nu``."""

    id: str
    rho: float
    nu: float = 1.0


@dataclass(frozen=True)
class MarketConfig:
    """A full market: type populations plus the two global rates."""

    customers: tuple[CustomerType, ...]
    listings: tuple[ListingType, ...]
    lam: float
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "customers", tuple(self.customers))
        object.__setattr__(self, "listings", tuple(self.listings))

    def listing_ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.listings)

    def customer_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.customers)


@dataclass(frozen=True)
class Intervention:
    """Treated choice parameters.

    ``v_treated`` must cover every (customer id, listing id) pair.
    ``alpha_treated`` may cover any subset; missing pairs inherit the
    control consideration probability (the common case: interventions that
    change utilities only).
    """

    v_treated: Mapping[tuple[str, str], float]
    alpha_treated: Mapping[tuple[str, str], float] = field(default_factory=dict)

    @staticmethod
    def utility_lift(cfg: "MarketConfig", factor: float) -> "Intervention":
        """Multiply every utility by ``factor``, leaving consideration as is."""
        vt = {
            (c.id, t.id): factor * c.v[t.id]
            for c in cfg.customers
            for t in cfg.listings
        }
        return Intervention(v_treated=vt)


# ---------------------------------------------------------------------------
# Designs


@dataclass(frozen=True)
class GlobalControl:
    """Everything in control; expands to a single condition per side."""


@dataclass(frozen=True)
class GlobalTreatment:
    """Everything treated; expands to a single condition per side."""


@dataclass(frozen=True)
class CR:
    """Customer-side randomization: share ``a_c`` of arrivals treated, all
    listings in the treated condition."""

    a_c: float

    def __post_init__(self):
        if not 0.0 < self.a_c < 1.0:
            raise MarketValidationError(f"CR requires 0 < a_c < 1, got {self.a_c}")


@dataclass(frozen=True)
class LR:
    """Listing-side randomization: mass ``a_l`` of listings treated, all
    customers in the treated condition."""

    a_l: float

    def __post_init__(self):
        if not 0.0 < self.a_l < 1.0:
            raise MarketValidationError(f"LR requires 0 < a_l < 1, got {self.a_l}")


@dataclass(frozen=True)
class TSR:
    """Two-sided randomization with customer share ``a_c`` and listing mass
    ``a_l``; the treatment applies only to treated-customer/treated-listing
    encounters."""

    a_c: float
    a_l: float

    def __post_init__(self):
        for name, a in (("a_c", self.a_c), ("a_l", self.a_l)):
            if not 0.0 < a <= 1.0:
                raise MarketValidationError(f"TSR requires 0 < {name} <= 1, got {a}")


@dataclass(frozen=True)
class Cluster:
    """Listing-cluster randomization: every listing type is wholly assigned
    to condition ``assignment[type id]``; customers all treated."""

    assignment: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "assignment", dict(self.assignment))
        for theta, z in self.assignment.items():
            if z not in (0, 1):
                raise MarketValidationError(
                    f"cluster assignment for {theta!r} must be 0 or 1, got {z}"
                )

    def treated_mass(self, cfg: MarketConfig) -> float:
        return sum(t.rho for t in cfg.listings if self.assignment[t.id] == 1)


DesignSpec = Union[GlobalControl, GlobalTreatment, CR, LR, TSR, Cluster]


# ---------------------------------------------------------------------------
# Expanded market

Cell = tuple[str, int]  # (type id, condition)


@dataclass(frozen=True)
class ExpandedMarket:
    """The condition-expanded market all dynamics run on.

    Cell order follows type declaration order, control condition before
    treatment within a type.  Zero-mass cells are kept (mass exactly 0) for
    every randomized design so array shapes do not depend on the draw of
    ``a_c``/``a_l``; only the two degenerate global designs collapse to a
    single condition per side.
    """

    customer_cells: tuple[Cell, ...]
    listing_cells: tuple[Cell, ...]
    phi: np.ndarray      # (C,) arrival share per customer cell
    epsilon: np.ndarray  # (C,)
    alpha: np.ndarray    # (C, L)
    v: np.ndarray        # (C, L)
    rho: np.ndarray      # (L,) mass per listing cell
    nu: np.ndarray       # (L,)
    lam: float
    tau: float
    design: DesignSpec
    base: MarketConfig
    intervention: Optional[Intervention] = None

    def __post_init__(self):
        for name in ("phi", "epsilon", "alpha", "v", "rho", "nu"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_customer_cells(self) -> int:
        return len(self.customer_cells)

    @property
    def n_listing_cells(self) -> int:
        return len(self.listing_cells)

    @property
    def customer_condition(self) -> np.ndarray:
        return np.array([i for _, i in self.customer_cells], dtype=np.int8)

    @property
    def listing_condition(self) -> np.ndarray:
        return np.array([j for _, j in self.listing_cells], dtype=np.int8)

    def customer_index(self, cell: Cell) -> int:
        return self.customer_cells.index(tuple(cell))

    def listing_index(self, cell: Cell) -> int:
        return self.listing_cells.index(tuple(cell))


def validate_market(cfg: MarketConfig) -> MarketConfig:
    """Check invariants and return the config with shares renormalized.

    Raises
    ------
    NonPositiveParameter
        If any of lam, tau, phi, rho, nu, epsilon, v is <= 0 or any alpha
        falls outside (0, 1].
    ShareSumMismatch
        If customer or listing shares miss 1 by more than 1e-9.
    MarketValidationError
        For structural faults: empty type lists, duplicate ids, alpha/v maps
        not keyed by exactly the market's listing types.
    """
    if not cfg.customers or not cfg.listings:
        raise MarketValidationError("market needs at least one type on each side")
    if not cfg.lam > 0:
        raise NonPositiveParameter(f"lam must be > 0, got {cfg.lam}")
    if not cfg.tau > 0:
        raise NonPositiveParameter(f"tau must be > 0, got {cfg.tau}")

    listing_ids = cfg.listing_ids()
    if len(set(listing_ids)) != len(listing_ids):
        raise MarketValidationError("duplicate listing type ids")
    customer_ids = cfg.customer_ids()
    if len(set(customer_ids)) != len(customer_ids):
        raise MarketValidationError("duplicate customer type ids")

    for t in cfg.listings:
        if not t.rho > 0:
            raise NonPositiveParameter(f"rho({t.id}) must be > 0, got {t.rho}")
        if not t.nu > 0:
            raise NonPositiveParameter(f"nu({t.id}) must be > 0, got {t.nu}")

    key_set = set(listing_ids)
    for c in cfg.customers:
        if not c.phi > 0:
            raise NonPositiveParameter(f"phi({c.id}) must be > 0, got {c.phi}")
        if not c.epsilon > 0:
            raise NonPositiveParameter(f"epsilon({c.id}) must be > 0, got {c.epsilon}")
        for name, mapping in (("alpha", c.alpha), ("v", c.v)):
            if set(mapping) != key_set:
                raise MarketValidationError(
                    f"{name} map of customer {c.id!r} must be keyed by exactly "
                    f"the market's listing types"
                )
        for theta, a in c.alpha.items():
            if not 0.0 < a <= 1.0:
                raise NonPositiveParameter(
                    f"alpha({c.id},{theta}) must be in (0, 1], got {a}"
                )
        for theta, u in c.v.items():
            if not u > 0:
                raise NonPositiveParameter(f"v({c.id},{theta}) must be > 0, got {u}")

    phi_sum = sum(c.phi for c in cfg.customers)
    rho_sum = sum(t.rho for t in cfg.listings)
    if abs(phi_sum - 1.0) > SHARE_TOL:
        raise ShareSumMismatch(f"customer shares sum to {phi_sum!r}, expected 1")
    if abs(rho_sum - 1.0) > SHARE_TOL:
        raise ShareSumMismatch(f"listing shares sum to {rho_sum!r}, expected 1")

    customers = tuple(
        CustomerType(c.id, c.phi / phi_sum, c.epsilon, dict(c.alpha), dict(c.v))
        for c in cfg.customers
    )
    listings = tuple(
        ListingType(t.id, t.rho / rho_sum, t.nu) for t in cfg.listings
    )
    return MarketConfig(customers, listings, cfg.lam, cfg.tau)


def _intervention_tables(
    cfg: MarketConfig, itv: Optional[Intervention]
) -> tuple[np.ndarray, np.ndarray]:
    """Control-indexed (C_types, L_types) tables of treated v and alpha."""
    n_g, n_t = len(cfg.customers), len(cfg.listings)
    vt = np.empty((n_g, n_t))
    at = np.empty((n_g, n_t))
    for g, c in enumerate(cfg.customers):
        for t, theta in enumerate(cfg.listings):
            if itv is None:
                vt[g, t] = c.v[theta.id]
                at[g, t] = c.alpha[theta.id]
                continue
            key = (c.id, theta.id)
            if key not in itv.v_treated:
                raise MarketValidationError(f"intervention misses v_treated{key}")
            vt[g, t] = itv.v_treated[key]
            at[g, t] = itv.alpha_treated.get(key, c.alpha[theta.id])
            if not vt[g, t] > 0:
                raise NonPositiveParameter(f"v_treated{key} must be > 0")
            if not 0.0 < at[g, t] <= 1.0:
                raise NonPositiveParameter(f"alpha_treated{key} must be in (0, 1]")
    return vt, at


def expand_for_design(
    cfg: MarketConfig, itv: Optional[Intervention], design: DesignSpec
) -> ExpandedMarket:
    """Expand a validated market into condition cells for one design.

    Customer cell (gamma, 1) gets share ``a_c * phi``; listing cell
    (theta, 1) gets mass ``a_l * rho`` (cluster designs concentrate the whole
    type mass on its assigned condition).  Only the treated-customer /
    treated-listing parameter block carries the intervention.

    ``itv=None`` means the null intervention (treated parameters equal
    control ones); it is always acceptable for ``GlobalControl``.
    """
    cfg = validate_market(cfg)
    vt, at = _intervention_tables(cfg, itv)

    if isinstance(design, GlobalControl):
        cust_conds: tuple[int, ...] = (0,)
        list_conds: tuple[int, ...] = (0,)
        a_c = 0.0
    elif isinstance(design, GlobalTreatment):
        cust_conds = (1,)
        list_conds = (1,)
        a_c = 1.0
    else:
        cust_conds = (0, 1)
        list_conds = (0, 1)
        if isinstance(design, CR):
            a_c = design.a_c
        elif isinstance(design, (LR, Cluster)):
            a_c = 1.0
        elif isinstance(design, TSR):
            a_c = design.a_c
        else:
            raise MarketValidationError(f"unknown design {design!r}")

    def listing_mass(theta: ListingType, j: int) -> float:
        if isinstance(design, GlobalControl) or isinstance(design, GlobalTreatment):
            return theta.rho
        if isinstance(design, Cluster):
            if theta.id not in design.assignment:
                raise MarketValidationError(
                    f"cluster assignment misses listing type {theta.id!r}"
                )
            return theta.rho if design.assignment[theta.id] == j else 0.0
        if isinstance(design, CR):
            a_l = 1.0
        elif isinstance(design, LR):
            a_l = design.a_l
        else:
            a_l = design.a_l
        return theta.rho * (a_l if j == 1 else 1.0 - a_l)

    customer_cells = []
    phi = []
    eps = []
    for c in cfg.customers:
        for i in cust_conds:
            customer_cells.append((c.id, i))
            if isinstance(design, (GlobalControl, GlobalTreatment)):
                phi.append(c.phi)
            else:
                phi.append(c.phi * (a_c if i == 1 else 1.0 - a_c))
            eps.append(c.epsilon)

    listing_cells = []
    rho = []
    nu = []
    for t in cfg.listings:
        for j in list_conds:
            listing_cells.append((t.id, j))
            rho.append(listing_mass(t, j))
            nu.append(t.nu)

    n_c, n_l = len(customer_cells), len(listing_cells)
    alpha = np.empty((n_c, n_l))
    v = np.empty((n_c, n_l))
    for ci, (gamma_id, i) in enumerate(customer_cells):
        g = cfg.customer_ids().index(gamma_id)
        cust = cfg.customers[g]
        for li, (theta_id, j) in enumerate(listing_cells):
            t = cfg.listing_ids().index(theta_id)
            if i == 1 and j == 1:
                v[ci, li] = vt[g, t]
                alpha[ci, li] = at[g, t]
            else:
                v[ci, li] = cust.v[theta_id]
                alpha[ci, li] = cust.alpha[theta_id]

    return ExpandedMarket(
        customer_cells=tuple(customer_cells),
        listing_cells=tuple(listing_cells),
        phi=np.array(phi),
        epsilon=np.array(eps),
        alpha=alpha,
        v=v,
        rho=np.array(rho),
        nu=np.array(nu),
        lam=cfg.lam,
        tau=cfg.tau,
        design=design,
        base=cfg,
        intervention=itv,
    )


def condition_totals(m: ExpandedMarket, contrib: np.ndarray) -> dict[tuple[int, int], float]:
    """Aggregate a (C, L) per-cell matrix into per-(i, j) condition totals."""
    ci = m.customer_condition
    lj = m.listing_condition
    totals = {}
    for i in sorted(set(int(x) for x in ci)):
        block = contrib[ci == i]
        for j in sorted(set(int(x) for x in lj)):
            totals[(i, j)] = float(block[:, lj == j].sum())
    return totals


def _state_values(s, m: ExpandedMarket) -> np.ndarray:
    values = np.asarray(getattr(s, "values", s), dtype=np.float64)
    if values.shape != (m.n_listing_cells,):
        raise StateOutOfBounds(
            f"state has shape {values.shape}, expected ({m.n_listing_cells},)"
        )
    if np.any(values < -STATE_TOL) or np.any(values > m.rho + STATE_TOL):
        raise StateOutOfBounds("state leaves [0, rho] beyond tolerance")
    return np.clip(values, 0.0, m.rho)


def choice_matrix(m: ExpandedMarket, s) -> np.ndarray:
    """(C, L) matrix of cell-to-cell choice probabilities at state ``s``.

    Row c: probability that an arriving customer of cell c books a listing
    of cell l, i.e. alpha*v*s over (epsilon + sum alpha*v*s).  Rows do not
    include the outside option, so they sum to less than 1.
    """
    values = _state_values(s, m)
    w = m.alpha * m.v * values[None, :]
    denom = m.epsilon + w.sum(axis=1)
    return w / denom[:, None]


def choice_probabilities(cell: Cell, s, m: ExpandedMarket) -> dict[Cell, float]:
    """Choice probability map for one customer cell at state ``s``."""
    row = choice_matrix(m, s)[m.customer_index(cell)]
    return {lc: float(p) for lc, p in zip(m.listing_cells, row)}


def outside_option_probability(cell: Cell, s, m: ExpandedMarket) -> float:
    """Probability that an arriving customer of ``cell`` books nothing."""
    values = _state_values(s, m)
    ci = m.customer_index(cell)
    w = m.alpha[ci] * m.v[ci] * values
    return float(m.epsilon[ci] / (m.epsilon[ci] + w.sum()))


class Classification(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    INDETERMINATE = "indeterminate"


def classify_intervention(cfg: MarketConfig, itv: Intervention) -> Classification:
    """Sign of the intervention: positive iff treated alpha*v beats control
    alpha*v for every customer/listing pair, negative iff it loses every
    pair, indeterminate otherwise (ties included)."""
    cfg = validate_market(cfg)
    vt, at = _intervention_tables(cfg, itv)
    control = np.array(
        [[c.alpha[t.id] * c.v[t.id] for t in cfg.listings] for c in cfg.customers]
    )
    treated = at * vt
    if np.all(treated > control):
        return Classification.POSITIVE
    if np.all(treated < control):
        return Classification.NEGATIVE
    return Classification.INDETERMINATE
