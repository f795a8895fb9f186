"""Closed-form booking-rate limits at extreme market balance.

Small lam/tau: listings are essentially always available, so rates are
arrival-driven choice probabilities at full availability (scale lam).
Large lam/tau: every replenished listing is booked almost instantly, so
rates saturate replenishment and split between customer conditions by the
g = alpha*v/epsilon weights (scale tau).  These tables are the ground truth
the dynamic engines and estimators are validated against; the two-listing
forms reproduce the worked small-market example.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .finite_sim import BookingLedger
from .market_model import (
    Cell,
    ExpandedMarket,
    GlobalControl,
    GlobalTreatment,
    choice_matrix,
    condition_totals,
    expand_for_design,
)
from .mean_field import StateVector


class Regime(Enum):
    DEMAND = "demand"
    SUPPLY = "supply"


@dataclass(frozen=True, eq=False)
class LimitTable:
    """Per-condition booking rates divided by the regime's scale.

    ``q_over_scale`` maps (i, j) to Q_ij/lam (demand) or Q_ij/tau (supply);
    ``gte_over_scale`` is the same-scale effect of the market's intervention
    (exactly 0 in the supply regime).
    """

    regime: Regime
    q_over_scale: dict[tuple[int, int], float]
    gte_over_scale: float

    def as_ledger(self) -> BookingLedger:
        """View the table as a ledger so estimators apply directly."""
        return BookingLedger(
            rates=dict(self.q_over_scale),
            counts=None,
            window=None,
            n_listings=None,
            source=f"limit-{self.regime.value}",
        )


@dataclass(frozen=True, eq=False)
class GFactor:
    """Per-(customer cell, listing cell) weight g = alpha*v/epsilon."""

    table: dict[tuple[Cell, Cell], float]
    matrix: np.ndarray


def g_factor(m: ExpandedMarket) -> GFactor:
    matrix = m.alpha * m.v / m.epsilon[:, None]
    table = {
        (cc, lc): float(matrix[ci, li])
        for ci, cc in enumerate(m.customer_cells)
        for li, lc in enumerate(m.listing_cells)
    }
    return GFactor(table=table, matrix=matrix)


def _full_availability_rate(m: ExpandedMarket, ij: tuple[int, int]) -> float:
    return condition_totals(m, m.phi[:, None] * choice_matrix(m, m.rho))[ij]


def q_limit_demand(m: ExpandedMarket) -> LimitTable:
    """Q_ij/lam as lam/tau -> 0: choice probabilities at s = rho."""
    q = condition_totals(m, m.phi[:, None] * choice_matrix(m, m.rho))
    gt = expand_for_design(m.base, m.intervention, GlobalTreatment())
    gc = expand_for_design(m.base, m.intervention, GlobalControl())
    gte = (_full_availability_rate(gt, (1, 1))
           - _full_availability_rate(gc, (0, 0)))
    return LimitTable(Regime.DEMAND, q, gte)


def q_limit_supply(m: ExpandedMarket) -> LimitTable:
    """Q_ij/tau as lam/tau -> inf: replenishment split by g-weights.

    Every row sum over i for fixed j is the cell aggregate rho*nu, i.e.
    bookings saturate replenishment, so the implied effect is 0.
    """
    g = g_factor(m).matrix
    denom = m.phi @ g
    share = (m.phi[:, None] * g) / denom[None, :]
    q = condition_totals(m, share * (m.rho * m.nu)[None, :])
    return LimitTable(Regime.SUPPLY, q, 0.0)


def homogeneous_limits(v: float, v_treated: float, eps: float, rho: float,
                       a_c: float, a_l: float, regime: Regime) -> LimitTable:
    """One-type closed forms for a two-sided randomization with shares
    (a_c, a_l); boundary shares are allowed (they zero out cells)."""
    for name, x in (("v", v), ("v_treated", v_treated), ("eps", eps), ("rho", rho)):
        if not x > 0:
            raise ValueError(f"{name} must be > 0, got {x}")
    for name, x in (("a_c", a_c), ("a_l", a_l)):
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {x}")
    regime = Regime(regime)
    if regime is Regime.DEMAND:
        d_trt = eps + (1.0 - a_l) * rho * v + a_l * rho * v_treated
        d_ctl = eps + rho * v
        q = {
            (1, 1): a_c * a_l * rho * v_treated / d_trt,
            (1, 0): a_c * (1.0 - a_l) * rho * v / d_trt,
            (0, 1): (1.0 - a_c) * a_l * rho * v / d_ctl,
            (0, 0): (1.0 - a_c) * (1.0 - a_l) * rho * v / d_ctl,
        }
        gte = (rho * v_treated / (eps + rho * v_treated)
               - rho * v / (eps + rho * v))
        return LimitTable(regime, q, gte)
    mix = a_c * v_treated + (1.0 - a_c) * v
    q = {
        (1, 1): a_c * v_treated / mix * a_l * rho,
        (0, 1): (1.0 - a_c) * v / mix * a_l * rho,
        (1, 0): a_c * (1.0 - a_l) * rho,
        (0, 0): (1.0 - a_c) * (1.0 - a_l) * rho,
    }
    return LimitTable(regime, q, 0.0)


def two_listing_booking_shares(v: float, v_treated: float, eps: float,
                               a_c: float) -> tuple[float, float]:
    """(zeta, eta) for the two-listing market under customer randomization.

    zeta: probability an arriving customer books the lone available listing;
    eta: fraction of those bookings made by treated customers.
    """
    zeta = a_c * v_treated / (eps + v_treated) + (1.0 - a_c) * v / (eps + v)
    eta = (a_c * v_treated / (eps + v_treated)) / zeta
    return zeta, eta


def two_listing_forms(v: float, v_treated: float, eps: float, lam: float,
                      tau: float, a_c: float) -> tuple[float, float, float]:
    """(gte, cr_estimate, lr_estimate) for the two-listing worked example.

    A lone available listing is booked after mean time (eps+u)/(lam*u) and
    stays booked for 1/tau, so its booking rate is the harmonic form below;
    the customer-side estimate splits that rate by eta and over-attributes
    the shared capacity, while the listing-side estimate is exactly the
    effect here.
    """
    if not 0.0 < a_c < 1.0:
        raise ValueError(f"a_c must be in (0, 1), got {a_c}")

    def rate(u: float) -> float:
        return 1.0 / ((eps + u) / (lam * u) + 1.0 / tau)

    gte = 2.0 * (rate(v_treated) - rate(v))
    _, eta = two_listing_booking_shares(v, v_treated, eps, a_c)
    cr = ((2.0 / a_c)
          / ((eps + v_treated) / (a_c * lam * v_treated) + 1.0 / (eta * tau))
          - (2.0 / (1.0 - a_c))
          / ((eps + v) / ((1.0 - a_c) * lam * v) + 1.0 / ((1.0 - eta) * tau)))
    return gte, cr, gte


def supply_state_approx(m: ExpandedMarket, balance: float) -> StateVector:
    """First-order availability at large balance: s = rho*nu/(balance * phi.g).

    Only meaningful deep in the supply-constrained regime; warns when asked
    below balance 100.
    """
    if not balance > 0:
        raise ValueError(f"balance must be > 0, got {balance}")
    if balance < 100:
        warnings.warn(
            f"supply_state_approx at balance {balance} is outside its regime "
            "(first-order in tau/lam)",
            RuntimeWarning,
            stacklevel=2,
        )
    denom = m.phi @ g_factor(m).matrix
    return StateVector(m.listing_cells, (m.rho * m.nu) / denom / balance)
