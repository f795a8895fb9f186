"""Deterministic large-market dynamics on an expanded market.

The state assigns each listing cell the mass of currently available
listings.  Mass flows in through replenishment of booked listings,
``(rho - s) * tau * nu``, and out through bookings by the arriving customer
stream, ``lam * sum_c phi_c * p_c(l | s)`` with multinomial-logit choice.
``steady_state`` solves the stationary balance in log space with a damped
Newton method (fixed-point fallback); ``integrate`` runs a fixed-step RK4
path; ``booking_rates_mf`` turns either into per-condition booking rates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from . import _kernels
from .finite_sim import BookingLedger
from .market_model import (
    Cell,
    ExpandedMarket,
    StateOutOfBounds,
    _state_values,
    choice_matrix,
    condition_totals,
)

DEFAULT_TOL = 1e-10

# integrator clamp excess beyond this is treated as instability, not noise
CLAMP_TOL = 1e-9

FIXED_POINT_SWEEPS = 10_000

BALANCE_FLOOR = 1e-12
BALANCE_CEIL = 1e12


def clip_balance(balance: float) -> float:
    """Clamp a lam/tau ratio into the numerically guarded range."""
    return float(min(max(balance, BALANCE_FLOOR), BALANCE_CEIL))


class SolverError(RuntimeError):
    """Base for numerical failures in this module."""


class NoConvergence(SolverError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(message)
        self.best_residual = float(best_residual)


class StepSizeUnderflow(SolverError):
    """The fixed integration step cannot keep the path inside [0, rho]."""


@dataclass(frozen=True, eq=False)
class StateVector:
    """Availability mass per listing cell, aligned with ``cells``."""

    cells: tuple[Cell, ...]
    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.shape != (len(self.cells),):
            raise StateOutOfBounds(
                f"state has shape {arr.shape}, expected ({len(self.cells)},)"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def as_dict(self) -> dict[Cell, float]:
        return {cell: float(x) for cell, x in zip(self.cells, self.values)}

    def __getitem__(self, cell: Cell) -> float:
        return float(self.values[self.cells.index(tuple(cell))])

    def __len__(self) -> int:
        return len(self.cells)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Stored RK4 path: ``states[k]`` is the state at ``times[k]``."""

    cells: tuple[Cell, ...]
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        for name in ("times", "states"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def terminal(self) -> StateVector:
        return StateVector(self.cells, self.states[-1])

    def state_at(self, t: float) -> np.ndarray:
        """Linear interpolation between stored steps."""
        t = float(t)
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"t={t} outside stored range "
                             f"[{self.times[0]}, {self.times[-1]}]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        if k >= len(self.times) - 1:
            return self.states[-1].copy()
        t0, t1 = self.times[k], self.times[k + 1]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        return (1.0 - w) * self.states[k] + w * self.states[k + 1]


@dataclass(frozen=True, eq=False)
class SteadyState:
    state: StateVector
    residual_norm: float
    iterations: int


def _coerce_state(s, m: ExpandedMarket) -> np.ndarray:
    if isinstance(s, StateVector):
        if s.cells != m.listing_cells:
            raise StateOutOfBounds("state cells do not match the market's cells")
        return _state_values(s.values, m)
    if isinstance(s, Mapping):
        try:
            arr = np.array([s[cell] for cell in m.listing_cells], dtype=np.float64)
        except KeyError as exc:
            raise StateOutOfBounds(f"state missing cell {exc}") from None
        return _state_values(arr, m)
    return _state_values(s, m)


def ode_rhs(s, m: ExpandedMarket) -> np.ndarray:
    """Instantaneous drift of the availability mass, per listing cell."""
    values = _coerce_state(s, m)
    out = np.empty(m.n_listing_cells)
    _kernels.mf_rhs(values, m.rho, m.nu, m.phi, m.epsilon, m.alpha, m.v,
                    m.lam, m.tau, out)
    return out


def flow_residual(s, m: ExpandedMarket) -> np.ndarray:
    """Per-cell imbalance between replenishment and booking outflow.

    Zero everywhere exactly at a steady state; identical to ``ode_rhs``.
    """
    return ode_rhs(s, m)


def lyapunov_value(s, m: ExpandedMarket) -> float:
    """Scalar potential that strictly decreases along non-stationary paths.

    sum_c lam phi_c log(eps_c + sum_l alpha v s) - sum_l tau nu rho log s
    + sum_l tau nu s.  Its gradient is -flow_residual(s)/s, so minimizers
    and steady states coincide; +inf on the s=0 boundary of active cells.
    """
    values = _coerce_state(s, m)
    act = m.rho > 0.0
    if np.any(values[act] <= 0.0):
        return math.inf
    w = m.alpha * m.v * values[None, :]
    demand_side = m.lam * float(m.phi @ np.log(m.epsilon + w.sum(axis=1)))
    tau_nu = m.tau * m.nu[act]
    supply_side = float(tau_nu @ (m.rho[act] * np.log(values[act])))
    linear = float(tau_nu @ values[act])
    return demand_side - supply_side + linear


def integrate(s0, m: ExpandedMarket, horizon: float, *,
              max_points: int = 20_001) -> Trajectory:
    """Fixed-step RK4 path from ``s0`` (default: everything available).

    The step is min(0.01, 0.1/(tau*max nu), 0.1/lam) so both clocks are
    resolved.  States are clamped to [0, rho]; a clamp excess beyond
    CLAMP_TOL raises StepSizeUnderflow rather than returning a bad path.
    Storage keeps every k-th step so paths stay under ``max_points`` rows.
    """
    horizon = float(horizon)
    if not horizon > 0.0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    values = m.rho.copy() if s0 is None else _coerce_state(s0, m)

    h = 0.01
    if m.nu.size:
        h = min(h, 0.1 / (m.tau * float(m.nu.max())))
    if m.lam > 0.0:
        h = min(h, 0.1 / m.lam)
    n_steps = max(1, math.ceil(horizon / h))
    if n_steps > 500_000_000:
        raise StepSizeUnderflow(
            f"horizon {horizon} needs {n_steps} steps at step {h:.3e}"
        )
    h = horizon / n_steps

    stride = max(1, math.ceil(n_steps / (max_points - 1)))
    rows = n_steps // stride + 2
    times = np.zeros(rows)
    states = np.zeros((rows, m.n_listing_cells))
    excess, last = _kernels.rk4_path(
        values, m.rho, m.nu, m.phi, m.epsilon, m.alpha, m.v,
        m.lam, m.tau, h, n_steps, stride, times, states,
    )
    if excess > CLAMP_TOL:
        raise StepSizeUnderflow(
            f"clamp excess {excess:.3e} exceeds {CLAMP_TOL:.0e}; "
            f"step {h:.3e} too coarse for this market"
        )
    return Trajectory(m.listing_cells, times[:last + 1], states[:last + 1])


def steady_state(m: ExpandedMarket, *, tol: float = DEFAULT_TOL,
                 max_iter: int = 200) -> SteadyState:
    """Solve flow balance to ``max |residual| <= tol``.

    Newton runs on y = log s (keeps s > 0) with backtracking that also keeps
    s <= rho.  If it stalls, a damped fixed-point sweep on
    s = rho - booking/(tau nu) takes over.  Raises NoConvergence with the
    best residual reached if both fail.
    """
    L = m.n_listing_cells
    act = m.rho > 0.0
    full = np.zeros(L)
    if m.lam == 0.0 or not act.any():
        full[act] = m.rho[act]
        res = float(np.max(np.abs(ode_rhs(full, m)))) if L else 0.0
        return SteadyState(StateVector(m.listing_cells, full), res, 0)

    rho_a = m.rho[act]
    tau_nu = m.tau * m.nu[act]
    av = m.alpha[:, act] * m.v[:, act]

    def parts(s):
        w = av * s[None, :]
        denom = m.epsilon + w.sum(axis=1)
        p = w / denom[:, None]
        book = m.lam * (m.phi[:, None] * p)
        r = (rho_a - s) * tau_nu - book.sum(axis=0)
        return r, p, book

    y = np.log(rho_a) - math.log(2.0)
    s = np.exp(y)
    r, p, book = parts(s)
    best_res = float(np.max(np.abs(r)))
    best_s = s.copy()
    n_iter = 0
    converged = best_res <= tol
    while not converged and n_iter < max_iter:
        n_iter += 1
        rn = float(np.max(np.abs(r)))
        bsum = book.sum(axis=0)
        J = book.T @ p
        J[np.diag_indices_from(J)] -= s * tau_nu + bsum
        try:
            d = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        step = 1.0
        accepted = False
        while step >= 1e-12:
            s_try = np.exp(y + step * d)
            if np.all(s_try <= rho_a):
                r_try, p_try, book_try = parts(s_try)
                rt = float(np.max(np.abs(r_try)))
                if rt < rn or rt <= tol:
                    y = y + step * d
                    s, r, p, book = s_try, r_try, p_try, book_try
                    if rt < best_res:
                        best_res, best_s = rt, s.copy()
                    converged = rt <= tol
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break

    if not converged:
        s = best_s.copy()
        floor = rho_a * 1e-18
        for _ in range(FIXED_POINT_SWEEPS):
            r, p, _ = parts(s)
            rn = float(np.max(np.abs(r)))
            if rn < best_res:
                best_res, best_s = rn, s.copy()
            if rn <= tol:
                converged = True
                break
            target = rho_a - (m.lam * (m.phi @ p)) / tau_nu
            s = 0.5 * s + 0.5 * np.clip(target, floor, rho_a)
            n_iter += 1

    if not converged:
        raise NoConvergence(
            f"steady state stalled at residual {best_res:.3e} (tol {tol:.1e})",
            best_res,
        )
    full[act] = best_s
    res = float(np.max(np.abs(ode_rhs(full, m))))
    return SteadyState(StateVector(m.listing_cells, full), res, n_iter)


def booking_rates_mf(m: ExpandedMarket,
                     window: Optional[tuple[float, float]] = None,
                     s0=None, *, tol: float = DEFAULT_TOL,
                     max_points: int = 20_001) -> BookingLedger:
    """Booking rates per (customer condition, listing condition).

    ``window=None`` evaluates the steady state; otherwise the RK4 path from
    ``s0`` (default: everything available) is integrated to ``window[1]``
    and rates are the trapezoid time-average over [window[0], window[1]].
    """
    if window is None:
        ss = steady_state(m, tol=tol)
        contrib = m.lam * (m.phi[:, None] * choice_matrix(m, ss.state.values))
        return BookingLedger(
            rates=condition_totals(m, contrib),
            counts=None,
            window=None,
            n_listings=None,
            source="meanfield",
        )

    t0, t1 = float(window[0]), float(window[1])
    if not (0.0 <= t0 < t1):
        raise ValueError(f"window must satisfy 0 <= t0 < t1, got {window}")
    traj = integrate(s0, m, t1, max_points=max_points)
    w = traj.states[:, None, :] * (m.alpha * m.v)[None, :, :]
    denom = m.epsilon[None, :] + w.sum(axis=2)
    contrib = m.lam * (m.phi[None, :, None] * (w / denom[:, :, None]))

    times = traj.times
    inside = (times > t0) & (times < t1)
    ci = m.customer_condition
    lj = m.listing_condition
    rates = {}
    for i in sorted(set(int(x) for x in ci)):
        block = contrib[:, ci == i, :]
        for j in sorted(set(int(x) for x in lj)):
            series = block[:, :, lj == j].sum(axis=(1, 2))
            ts = np.concatenate(([t0], times[inside], [t1]))
            ys = np.concatenate((
                [np.interp(t0, times, series)],
                series[inside],
                [np.interp(t1, times, series)],
            ))
            rates[(i, j)] = float(np.trapezoid(ys, ts) / (t1 - t0))
    return BookingLedger(
        rates=rates,
        counts=None,
        window=(t0, t1),
        n_listings=None,
        source="meanfield",
    )
