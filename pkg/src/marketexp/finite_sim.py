"""Discrete-event simulation of the finite market with N listings.

Listings live in integer cells; three event streams compete: customer
arrivals (Poisson, rate ``lam * N``), and per-cell replenishment clocks
(exponential, rate ``(totals - available) * tau * nu``).  An arrival draws a
customer cell, samples a consideration count per listing cell, and books by
multinomial logit against an outside weight ``epsilon * N``.  Bookings with
arrival time inside the counting window land in a :class:`BookingLedger`;
the availability path is sampled into an :class:`AvailabilityTrace`.

Everything is driven by one ``numpy.random.Generator`` consumed strictly in
event order, so a run is a pure function of (market, config, stream).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _kernels
from .market_model import (
    Cell,
    ExpandedMarket,
    GlobalControl,
    MarketValidationError,
    expand_for_design,
)


class NTooSmall(MarketValidationError):
    """N is below the number of positive-mass listing cells."""


@dataclass(frozen=True)
class PerListingBernoulli:
    """Each available listing enters the consideration set independently
    with its cell's alpha."""


@dataclass(frozen=True)
class FixedK:
    """Exactly k distinct available listings are considered (all, if fewer
    than k are available); alpha is ignored."""

    k: int

    def __post_init__(self):
        if not (isinstance(self.k, int) and self.k >= 1):
            raise MarketValidationError(f"FixedK needs an integer k >= 1, got {self.k}")


ConsiderationRule = Union[PerListingBernoulli, FixedK]


@dataclass(frozen=True)
class AllAvailable:
    """Start with every listing available."""


@dataclass(frozen=True)
class MeanFieldGC:
    """Start from the rounded global-control steady state, s* scaled to
    counts per cell."""


InitialState = Union[AllAvailable, MeanFieldGC]


@dataclass(frozen=True)
class SimConfig:
    n_listings: int
    horizon: float                      # counting window closes here (T1)
    burn_in: float = 0.0                # bookings before this are discarded (T0)
    seed: int = 0
    consideration: ConsiderationRule = field(default_factory=PerListingBernoulli)
    initial_state: InitialState = field(default_factory=AllAvailable)

    def __post_init__(self):
        if not (isinstance(self.n_listings, int) and self.n_listings >= 1):
            raise MarketValidationError(
                f"n_listings must be a positive integer, got {self.n_listings}"
            )
        if not 0.0 <= self.burn_in < self.horizon:
            raise MarketValidationError(
                f"need 0 <= burn_in < horizon, got ({self.burn_in}, {self.horizon})"
            )
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise MarketValidationError(f"seed must be a 64-bit integer, got {self.seed}")


@dataclass(frozen=True, eq=False)
class FiniteState:
    """Integer snapshot: available and total listing counts per cell."""

    available: dict[Cell, int]
    totals: dict[Cell, int]

    def __post_init__(self):
        for cell, total in self.totals.items():
            a = self.available[cell]
            if not 0 <= a <= total:
                raise MarketValidationError(
                    f"cell {cell}: available {a} outside [0, {total}]"
                )


@dataclass(frozen=True, eq=False)
class BookingLedger:
    """Booking rates per (customer condition, listing condition).

    Simulated ledgers carry integer ``counts`` over ``window`` and rates
    ``counts / ((T1 - T0) * N)``, directly comparable to mean-field rates
    (which carry ``counts=None``).  ``sparse_cells`` flags cells with fewer
    than 10 bookings; their rates are kept as-is (possibly 0), not errors.
    """

    rates: dict[tuple[int, int], float]
    counts: Optional[dict[tuple[int, int], int]]
    window: Optional[tuple[float, float]]
    n_listings: Optional[int]
    source: str = "sim"
    sparse_cells: tuple[tuple[int, int], ...] = ()

    def rate(self, i: int, j: int) -> float:
        """Rate for condition pair (i, j); absent cells count as 0."""
        return self.rates.get((i, j), 0.0)


SPARSE_COUNT = 10


@dataclass(frozen=True, eq=False)
class AvailabilityTrace:
    """Sampled path of the normalized availability Y = available / N."""

    cells: tuple[Cell, ...]
    times: np.ndarray
    fractions: np.ndarray       # (len(times), len(cells))
    n_listings: int

    def __post_init__(self):
        for name in ("times", "fractions"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def apportion_listings(m: ExpandedMarket, n: int) -> dict[Cell, int]:
    """Split N listings over cells proportionally to mass.

    Largest-remainder rule: floor(rho * N) per cell, leftovers to the
    largest fractional parts, ties broken in cell declaration order.
    """
    positive = int((m.rho > 0).sum())
    if n < positive:
        raise NTooSmall(f"N={n} below the {positive} positive-mass cells")
    raw = m.rho * n
    base = np.floor(raw)
    leftover = int(round(n - base.sum()))
    order = np.argsort(-(raw - base), kind="stable")
    for k in range(leftover):
        base[order[k]] += 1
    totals = base.astype(np.int64)
    assert totals.sum() == n
    return {cell: int(c) for cell, c in zip(m.listing_cells, totals)}


def _initial_counts(m: ExpandedMarket, totals: np.ndarray,
                    initial: InitialState) -> np.ndarray:
    if isinstance(initial, AllAvailable):
        return totals.copy()
    if isinstance(initial, MeanFieldGC):
        from .mean_field import steady_state

        gc = expand_for_design(m.base, None, GlobalControl())
        ss = steady_state(gc)
        s_by_type = {cell[0]: float(x)
                     for cell, x in zip(gc.listing_cells, ss.state.values)}
        rho_base = {t.id: t.rho for t in m.base.listings}
        n = int(totals.sum())
        out = np.empty(len(totals), dtype=np.int64)
        for l, (theta, _) in enumerate(m.listing_cells):
            target = s_by_type[theta] * (m.rho[l] / rho_base[theta]) * n
            out[l] = min(int(totals[l]), max(0, int(round(target))))
        return out
    raise MarketValidationError(f"unknown initial state {initial!r}")


def mnl_draw(d_counts, v_row, epsilon_n: float, rng: np.random.Generator) -> Optional[int]:
    """One choice draw over consideration counts; None is the outside option.

    Cell weight is count * utility; outside weight is ``epsilon_n``.  Exactly
    one uniform is consumed, with the same scan arithmetic as the compiled
    event loop, so the two stay stream-compatible.
    """
    w = np.asarray(d_counts, dtype=np.float64) * np.asarray(v_row, dtype=np.float64)
    wsum = float(w.sum())
    u = rng.random() * (epsilon_n + wsum)
    if u >= wsum:
        return None
    return min(int(np.searchsorted(np.cumsum(w), u, side="right")),
               len(w) - 1)


def _customer_cdf(phi: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(phi)
    pos = np.nonzero(phi > 0)[0]
    # the last positive cell owns the roundoff tail, never a zero-mass cell
    cdf[pos[-1]:] = np.maximum(cdf[pos[-1]:], 1.0)
    return cdf


def simulate(m: ExpandedMarket, sc: SimConfig, *,
             rng: Optional[np.random.Generator] = None,
             events_csv: Optional[str] = None,
             max_trace_points: int = 100_000,
             ) -> tuple[BookingLedger, AvailabilityTrace]:
    """Run one path over [0, horizon] and count bookings in [burn_in, horizon].

    ``rng`` overrides the generator built from ``sc.seed`` (used by the
    replication harness, which owns per-replication streams).  With
    ``events_csv`` every booking is dumped as ``t,i,j,theta``.
    """
    n = sc.n_listings
    totals_map = apportion_listings(m, n)
    totals = np.array([totals_map[cell] for cell in m.listing_cells], dtype=np.int64)
    avail = _initial_counts(m, totals, sc.initial_state)

    gen = rng if rng is not None else np.random.Generator(
        np.random.Philox(np.random.SeedSequence(sc.seed))
    )
    fixed_k = sc.consideration.k if isinstance(sc.consideration, FixedK) else 0

    lam_n = m.lam * n
    arrivals = lam_n * sc.horizon
    arrivals_cap = arrivals + 10.0 * math.sqrt(max(arrivals, 1.0)) + 64.0
    changes_cap = int(2.0 * arrivals_cap) + n + 16
    stride = max(1, math.ceil(changes_cap / max_trace_points))
    rows = changes_cap // stride + 8
    trace_t = np.zeros(rows)
    trace_y = np.zeros((rows, m.n_listing_cells))
    counts = np.zeros((2, 2), dtype=np.int64)

    record = events_csv is not None
    events = np.zeros((int(arrivals_cap) + 1 if record else 1, 4))

    n_trace, n_events, status = _kernels.sim_loop(
        gen, float(lam_n), _customer_cdf(m.phi),
        m.customer_condition.astype(np.int64), m.epsilon * n,
        m.alpha, m.v, m.listing_condition.astype(np.int64),
        totals, avail, m.nu, float(m.tau),
        float(sc.burn_in), float(sc.horizon), int(fixed_k),
        int(stride), trace_t, trace_y, counts, events, record,
    )
    if status == _kernels.TRACE_OVERFLOW:
        raise RuntimeError(
            f"trace capacity {rows} exceeded; the event count blew past its "
            f"Poisson tail bound ({changes_cap})"
        )
    if status == _kernels.EVENT_OVERFLOW:
        raise RuntimeError(
            f"event-log capacity {events.shape[0]} exceeded its Poisson tail bound"
        )

    times = np.append(trace_t[:n_trace], sc.horizon)
    fracs = np.vstack([trace_y[:n_trace], avail[None, :].astype(np.float64)]) / n
    trace = AvailabilityTrace(m.listing_cells, times, fracs, n)

    conds_i = sorted(set(int(i) for _, i in m.customer_cells))
    conds_j = sorted(set(int(j) for _, j in m.listing_cells))
    count_map = {(i, j): int(counts[i, j]) for i in conds_i for j in conds_j}
    span = (sc.horizon - sc.burn_in) * n
    ledger = BookingLedger(
        rates={ij: c / span for ij, c in count_map.items()},
        counts=count_map,
        window=(sc.burn_in, sc.horizon),
        n_listings=n,
        source="sim",
        sparse_cells=tuple(ij for ij, c in count_map.items() if c < SPARSE_COUNT),
    )

    if record:
        with open(events_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "i", "j", "theta"])
            for k in range(n_events):
                t, i, j, l = events[k]
                w.writerow([repr(float(t)), int(i), int(j),
                            m.listing_cells[int(l)][0]])
    return ledger, trace
