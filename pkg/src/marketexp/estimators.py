"""Treatment-effect estimators over booking ledgers, plus the true effect.

Every estimator is a linear functional of the per-condition booking rates,
so it applies unchanged to simulated, mean-field, and limit-table ledgers.
Missing cells read as rate 0.  Degenerate randomization shares raise
:class:`DegenerateArm` instead of dividing by zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from . import mean_field
from .finite_sim import BookingLedger
from .market_model import (
    GlobalControl,
    GlobalTreatment,
    Intervention,
    MarketConfig,
    expand_for_design,
)


class DegenerateArm(ValueError):
    """A randomization share sits on the boundary, leaving an empty arm."""


@dataclass(frozen=True)
class NaiveCR:
    label = "cr"


@dataclass(frozen=True)
class NaiveLR:
    label = "lr"


@dataclass(frozen=True)
class TSRN:
    label = "tsrn"


@dataclass(frozen=True)
class TSRI:
    """Corrected two-sided estimator with cannibalization weight k."""

    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"k must be > 0, got {self.k}")

    @property
    def label(self) -> str:
        return f"tsri-{self.k:g}"


@dataclass(frozen=True)
class ClusterLR:
    label = "cluster"


EstimatorId = Union[NaiveCR, NaiveLR, TSRN, TSRI, ClusterLR]


@dataclass(frozen=True, eq=False)
class GteReport:
    """True effect next to each estimator's value and exact bias."""

    gte_true: float
    estimates: dict[EstimatorId, float]
    bias: dict[EstimatorId, float]

    @classmethod
    def build(cls, gte_true: float, estimates: dict[EstimatorId, float]) -> "GteReport":
        return cls(
            gte_true=float(gte_true),
            estimates=dict(estimates),
            bias={e: v - gte_true for e, v in estimates.items()},
        )


def gte_true(cfg: MarketConfig, itv: Intervention, *,
             tol: float = mean_field.DEFAULT_TOL) -> float:
    """Steady-state booking rate under global treatment minus global control."""
    gt = mean_field.booking_rates_mf(
        expand_for_design(cfg, itv, GlobalTreatment()), tol=tol)
    gc = mean_field.booking_rates_mf(
        expand_for_design(cfg, itv, GlobalControl()), tol=tol)
    return gt.rate(1, 1) - gc.rate(0, 0)


def _check_interior(name: str, x: float) -> None:
    if not 0.0 < x < 1.0:
        raise DegenerateArm(f"{name} must be strictly inside (0, 1), got {x}")


def est_cr(ledger: BookingLedger, a_c: float) -> float:
    """Customer-side difference: Q11/a_c - Q01/(1-a_c)."""
    _check_interior("a_c", a_c)
    return ledger.rate(1, 1) / a_c - ledger.rate(0, 1) / (1.0 - a_c)


def est_lr(ledger: BookingLedger, a_l: float) -> float:
    """Listing-side difference: Q11/a_l - Q10/(1-a_l)."""
    _check_interior("a_l", a_l)
    return ledger.rate(1, 1) / a_l - ledger.rate(1, 0) / (1.0 - a_l)


def est_tsrn(ledger: BookingLedger, a_c: float, a_l: float) -> float:
    """Two-sided difference: treated-treated rate against everything else."""
    prod = a_c * a_l
    if not 0.0 < prod < 1.0:
        raise DegenerateArm(f"a_c*a_l must be strictly inside (0, 1), got {prod}")
    rest = ledger.rate(0, 1) + ledger.rate(1, 0) + ledger.rate(0, 0)
    return ledger.rate(1, 1) / prod - rest / (1.0 - prod)


def est_tsri(ledger: BookingLedger, a_c: float, a_l: float,
             beta: float, k: float) -> float:
    """Interpolated two-sided estimator with cannibalization correction.

    Mass-normalized rates Qhat_ij = Q_ij / (cell mass product) enter
    beta * [Qhat11 - Qhat01 - k(1-beta)(Qhat00 - Qhat01)]
    + (1-beta) * [Qhat11 - Qhat10 - k*beta*(Qhat00 - Qhat10)].
    """
    _check_interior("a_c", a_c)
    _check_interior("a_l", a_l)
    if not 0.0 <= beta <= 1.0:
        raise DegenerateArm(f"beta must be in [0, 1], got {beta}")
    if not k > 0:
        raise DegenerateArm(f"k must be > 0, got {k}")
    q11 = ledger.rate(1, 1) / (a_c * a_l)
    q01 = ledger.rate(0, 1) / ((1.0 - a_c) * a_l)
    q10 = ledger.rate(1, 0) / (a_c * (1.0 - a_l))
    q00 = ledger.rate(0, 0) / ((1.0 - a_c) * (1.0 - a_l))
    return (beta * (q11 - q01 - k * (1.0 - beta) * (q00 - q01))
            + (1.0 - beta) * (q11 - q10 - k * beta * (q00 - q10)))


def est_cluster(ledger: BookingLedger, z: float) -> float:
    """Cluster-randomized difference with treated cluster mass z."""
    _check_interior("z", z)
    return ledger.rate(1, 1) / z - ledger.rate(1, 0) / (1.0 - z)


def parse_estimator(label: str) -> EstimatorId:
    """Estimator instance for a label: cr, lr, tsrn, tsri-<k>, cluster."""
    plain = {"cr": NaiveCR, "lr": NaiveLR, "tsrn": TSRN, "cluster": ClusterLR}
    if label in plain:
        return plain[label]()
    if label.startswith("tsri-"):
        try:
            return TSRI(k=float(label[5:]))
        except ValueError:
            pass
    raise ValueError(f"unknown estimator label {label!r}")
