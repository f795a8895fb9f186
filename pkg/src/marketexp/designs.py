"""Design-side logic beyond plain randomization shares.

Holds the balance-adaptive two-sided randomization schedule, the
interpolation weight used by the corrected TSR estimators, and the
two-cluster market generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .market_model import (
    Cluster,
    CustomerType,
    Intervention,
    ListingType,
    MarketConfig,
    MarketValidationError,
)

# strictly-zero utilities are rejected by market validation, so separable
# clusters (y=0) use a cross utility this many times the own-cluster one
CROSS_UTILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class TsrSchedule:
    """Interior randomization shares plus the balance exponent.

    The shares move with market balance: customer-side randomization fades
    out and listing-side randomization fades in as balance grows.
    """

    a_bar_c: float = 0.5
    a_bar_l: float = 0.5
    c_exponent: float = 1.0

    def __post_init__(self):
        for name in ("a_bar_c", "a_bar_l"):
            x = getattr(self, name)
            if not 0.0 < x < 1.0:
                raise MarketValidationError(f"{name} must be in (0, 1), got {x}")
        if not self.c_exponent > 0:
            raise MarketValidationError(
                f"c_exponent must be > 0, got {self.c_exponent}"
            )


def beta_weight(balance: float, c: float = 1.0) -> float:
    """Interpolation weight e^(-c*balance): 1 in the demand-constrained
    limit, 0 in the supply-constrained limit."""
    if not balance > 0:
        raise ValueError(f"balance must be > 0, got {balance}")
    if not c > 0:
        raise ValueError(f"c must be > 0, got {c}")
    return math.exp(-c * balance)


def tsr_schedule(balance: float, sched: TsrSchedule = TsrSchedule()) -> tuple[float, float]:
    """Randomization shares (a_c, a_l) at the given lam/tau balance.

    a_c climbs from a_bar_c toward 1 as balance grows; a_l falls from 1
    toward a_bar_l.  Both stay strictly above the bars.
    """
    e = beta_weight(balance, sched.c_exponent)
    a_c = (1.0 - e) + sched.a_bar_c * e
    a_l = sched.a_bar_l * (1.0 - e) + e
    return a_c, a_l


@dataclass(frozen=True)
class ClusterScenario:
    """Two symmetric clusters: own-cluster utility x, cross-cluster y <= x,
    treated utilities scaled by delta."""

    x: float
    y: float
    delta: float
    epsilon: float = 1.0
    alpha: float = 1.0
    lam: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if not self.x > 0:
            raise MarketValidationError(f"x must be > 0, got {self.x}")
        if not 0.0 <= self.y <= self.x:
            raise MarketValidationError(f"need 0 <= y <= x, got y={self.y}, x={self.x}")
        if not self.delta > 1.0:
            raise MarketValidationError(f"delta must be > 1, got {self.delta}")


def cluster_market(cs: ClusterScenario) -> tuple[MarketConfig, Intervention, Cluster]:
    """Build the two-type clustered market, its lift, and a cluster split.

    Customers c1/c2 prefer listings l1/l2 respectively (utility x own, y
    cross); the intervention multiplies every utility by delta.  y=0 is
    floored to a vanishing positive cross utility so the market stays valid;
    the distortion is orders of magnitude below any tolerance used here.
    The returned assignment treats l1; the harness may flip it per
    replication.
    """
    y_eff = max(cs.y, cs.x * CROSS_UTILITY_FLOOR)
    alpha = {"l1": cs.alpha, "l2": cs.alpha}
    customers = (
        CustomerType("c1", 0.5, cs.epsilon, alpha, {"l1": cs.x, "l2": y_eff}),
        CustomerType("c2", 0.5, cs.epsilon, alpha, {"l1": y_eff, "l2": cs.x}),
    )
    listings = (ListingType("l1", 0.5), ListingType("l2", 0.5))
    cfg = MarketConfig(customers, listings, cs.lam, cs.tau)
    itv = Intervention(v_treated={
        (c.id, t.id): cs.delta * c.v[t.id] for c in customers for t in listings
    })
    return cfg, itv, Cluster(assignment={"l1": 1, "l2": 0})


def swap_clusters(design: Cluster) -> Cluster:
    """The same partition with treatment and control exchanged."""
    return Cluster(assignment={k: 1 - j for k, j in design.assignment.items()})
