"""Shared fixtures: frozen oracle values and random market builders.

The ORACLE numbers were computed once by an independent script (closed-form
quadratic roots cross-checked by bisection, plus limit-table algebra) and
are frozen here; tests compare engine output against them rather than
re-deriving anything with engine code.
"""
from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
import pytest

from marketexp.market_model import (
    CustomerType,
    Intervention,
    ListingType,
    MarketConfig,
)

ORACLE = SimpleNamespace(
    # homogeneous calibration market: v=0.315, vt=0.3937, alpha=eps=1, lam=tau=1
    s_gc=0.7989359330750646,
    book_gc=0.2010640669249354,
    s_gt=0.7678668207807176,
    book_gt=0.23213317921928245,
    gte=0.031069112294347057,
    # demand limit (balance -> 0), lifted from full-availability choice algebra
    gte_over_lam=0.042941744095032736,
    q11_over_lam=0.14534647616938015,     # LR(0.5) design, treated cell
    q10_over_lam=0.11629194816701739,     # LR(0.5) design, control cell
    lr_over_lam=0.05810905600472552,      # LR(0.5) estimate / lam
    lr_bias_over_lam=0.015167311909692782,
    # supply limit (balance -> inf)
    cr_over_tau=0.22209679695216591,      # CR(0.5) estimate / tau
    tsr_supply=(0.25, 0.25, 0.22223790038097926, 0.27776209961902076),
    # TSR(0.5, 0.5) demand-limit per-cell table (q00, q10, q01, q11) / lam
    tsr_demand=(0.05988593155893537, 0.058145974083508696,
                0.05988593155893537, 0.07267323808469008),
    # randomization schedule at balance 1, c=1
    beta_at_1=0.36787944117144233,
    a_c_sched_at_1=0.8160602794142788,
    a_l_sched_at_1=0.6839397205857212,
    # two-listing closed forms at v=0.315, lift 1.25, eps=1, lam=tau=1, a_c=0.5
    zeta_half=0.26101459828325785,
    eta_half=0.5411296383204892,
    gte_two_listing=0.0540250739498232,
    cr_two_listing=0.06810665658191978,
)


def homogeneous_cfg(lam: float = 1.0, tau: float = 1.0,
                    v: float = 0.315, vt: float = 0.3937):
    cfg = MarketConfig(
        customers=(CustomerType(id="c1", phi=1.0, epsilon=1.0,
                                alpha={"l1": 1.0}, v={"l1": v}),),
        listings=(ListingType(id="l1", rho=1.0, nu=1.0),),
        lam=lam,
        tau=tau,
    )
    itv = Intervention(v_treated={("c1", "l1"): vt})
    return cfg, itv


def random_market(rng: np.random.Generator, max_types: int = 3,
                  lam: float = 1.0, tau: float = 1.0,
                  lift_lo: float = 1.05, lift_hi: float = 1.5):
    """A bounded random market plus a strictly positive intervention."""
    n_c = int(rng.integers(1, max_types + 1))
    n_l = int(rng.integers(1, max_types + 1))
    phi = rng.dirichlet(np.ones(n_c) * 2.0)
    rho = rng.dirichlet(np.ones(n_l) * 2.0)
    lids = [f"l{j}" for j in range(n_l)]
    listings = tuple(
        ListingType(id=lids[j], rho=float(rho[j]),
                    nu=float(rng.uniform(0.5, 2.0)))
        for j in range(n_l)
    )
    customers = tuple(
        CustomerType(
            id=f"c{i}",
            phi=float(phi[i]),
            epsilon=float(rng.uniform(0.5, 2.0)),
            alpha={l: float(rng.uniform(0.3, 1.0)) for l in lids},
            v={l: float(rng.uniform(0.1, 2.0)) for l in lids},
        )
        for i in range(n_c)
    )
    cfg = MarketConfig(customers=customers, listings=listings, lam=lam, tau=tau)
    itv = Intervention(v_treated={
        (c.id, l): c.v[l] * float(rng.uniform(lift_lo, lift_hi))
        for c in customers for l in lids
    })
    return cfg, itv


@pytest.fixture
def oracle():
    return ORACLE


@pytest.fixture
def calib():
    return homogeneous_cfg()
