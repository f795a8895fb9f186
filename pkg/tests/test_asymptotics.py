import math
import warnings

import numpy as np
import pytest

from marketexp.asymptotics import (
    GFactor,
    LimitTable,
    Regime,
    g_factor,
    homogeneous_limits,
    q_limit_demand,
    q_limit_supply,
    supply_state_approx,
    two_listing_booking_shares,
    two_listing_forms,
)
from marketexp.estimators import est_cr, est_lr
from marketexp.market_model import CR, LR, TSR, GlobalControl, expand_for_design
from marketexp.mean_field import booking_rates_mf, steady_state
from conftest import ORACLE, homogeneous_cfg, random_market

CELLS = ((0, 0), (1, 0), (0, 1), (1, 1))


def _expand(design, lam=1.0, tau=1.0):
    cfg, itv = homogeneous_cfg(lam=lam, tau=tau)
    return expand_for_design(cfg, itv, design)


class TestDemandLimit:
    def test_tsr_table_matches_oracle(self, oracle):
        tab = q_limit_demand(_expand(TSR(0.5, 0.5)))
        for cell, want in zip(CELLS, oracle.tsr_demand):
            assert tab.q_over_scale[cell] == pytest.approx(want, abs=1e-12)
        assert tab.gte_over_scale == pytest.approx(oracle.gte_over_lam,
                                                   abs=1e-12)
        assert tab.regime is Regime.DEMAND

    def test_lr_cells_and_estimate(self, oracle):
        tab = q_limit_demand(_expand(LR(0.5)))
        led = tab.as_ledger()
        assert led.rate(1, 1) == pytest.approx(oracle.q11_over_lam, abs=1e-12)
        assert led.rate(1, 0) == pytest.approx(oracle.q10_over_lam, abs=1e-12)
        assert est_lr(led, 0.5) == pytest.approx(oracle.lr_over_lam, abs=1e-12)
        bias = est_lr(led, 0.5) - tab.gte_over_scale
        assert bias == pytest.approx(oracle.lr_bias_over_lam, abs=1e-12)

    def test_cr_is_exact_in_demand_limit(self, oracle):
        tab = q_limit_demand(_expand(CR(0.5)))
        assert est_cr(tab.as_ledger(), 0.5) == pytest.approx(
            oracle.gte_over_lam, abs=1e-12)


class TestSupplyLimit:
    def test_tsr_table_matches_oracle(self, oracle):
        tab = q_limit_supply(_expand(TSR(0.5, 0.5)))
        for cell, want in zip(CELLS, oracle.tsr_supply):
            assert tab.q_over_scale[cell] == pytest.approx(want, abs=1e-12)
        assert tab.gte_over_scale == 0.0
        assert tab.regime is Regime.SUPPLY

    def test_rates_saturate_replenishment(self, oracle):
        # all replenished capacity gets booked: cells sum to rho.nu = 1
        tab = q_limit_supply(_expand(TSR(0.5, 0.5)))
        assert sum(tab.q_over_scale.values()) == pytest.approx(1.0, abs=1e-12)

    def test_cr_estimate_matches_oracle(self, oracle):
        tab = q_limit_supply(_expand(CR(0.5)))
        assert est_cr(tab.as_ledger(), 0.5) == pytest.approx(
            oracle.cr_over_tau, abs=1e-12)

    def test_lr_estimate_is_zero(self):
        tab = q_limit_supply(_expand(LR(0.5)))
        assert est_lr(tab.as_ledger(), 0.5) == pytest.approx(0.0, abs=1e-15)


class TestHomogeneousClosedForms:
    @pytest.mark.parametrize("a_c,a_l", [(0.5, 0.5), (0.3, 0.7), (0.9, 0.2)])
    def test_match_expanded_tables(self, a_c, a_l):
        m = _expand(TSR(a_c, a_l))
        dem = homogeneous_limits(0.315, 0.3937, 1.0, 1.0, a_c, a_l,
                                 Regime.DEMAND)
        sup = homogeneous_limits(0.315, 0.3937, 1.0, 1.0, a_c, a_l,
                                 Regime.SUPPLY)
        got_dem = q_limit_demand(m).q_over_scale
        got_sup = q_limit_supply(m).q_over_scale
        for cell in CELLS:
            assert got_dem[cell] == pytest.approx(dem.q_over_scale[cell],
                                                  rel=1e-12, abs=1e-15)
            assert got_sup[cell] == pytest.approx(sup.q_over_scale[cell],
                                                  rel=1e-12, abs=1e-15)

    def test_boundary_shares_zero_out_cells(self):
        tab = homogeneous_limits(0.315, 0.3937, 1.0, 1.0, 1.0, 1.0,
                                 Regime.DEMAND)
        assert tab.q_over_scale[(0, 0)] == 0.0
        assert tab.q_over_scale[(1, 1)] > 0.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            homogeneous_limits(0.0, 0.4, 1.0, 1.0, 0.5, 0.5, Regime.DEMAND)
        with pytest.raises(ValueError):
            homogeneous_limits(0.3, 0.4, 1.0, 1.0, 1.5, 0.5, Regime.DEMAND)


class TestDynamicEnginesAgree:
    """Mean-field rates drift onto the limit tables at extreme balance."""

    @pytest.mark.parametrize("seed", [3, 11, 27])
    def test_random_market_demand_limit(self, seed):
        cfg, itv = random_market(np.random.default_rng(seed),
                                 lam=1e-4, tau=1.0)
        m = expand_for_design(cfg, itv, TSR(0.5, 0.5))
        tab = q_limit_demand(m)
        got = booking_rates_mf(m)
        for cell in CELLS:
            want = tab.q_over_scale[cell] * 1e-4
            assert got.rate(*cell) == pytest.approx(want, rel=1e-3)

    @pytest.mark.parametrize("seed", [3, 11, 27])
    def test_random_market_supply_limit(self, seed):
        cfg, itv = random_market(np.random.default_rng(seed),
                                 lam=1e4, tau=1.0)
        m = expand_for_design(cfg, itv, TSR(0.5, 0.5))
        tab = q_limit_supply(m)
        got = booking_rates_mf(m)
        for cell in CELLS:
            want = tab.q_over_scale[cell]
            assert got.rate(*cell) == pytest.approx(want, rel=1e-2)


class TestTwoListing:
    def test_booking_shares_match_oracle(self, oracle):
        zeta, eta = two_listing_booking_shares(0.315, 0.3937, 1.0, 0.5)
        assert zeta == pytest.approx(oracle.zeta_half, abs=1e-12)
        assert eta == pytest.approx(oracle.eta_half, abs=1e-12)

    def test_forms_match_oracle(self, oracle):
        gte, cr, lr = two_listing_forms(0.315, 0.3937, 1.0, 1.0, 1.0, 0.5)
        assert gte == pytest.approx(oracle.gte_two_listing, abs=1e-12)
        assert cr == pytest.approx(oracle.cr_two_listing, abs=1e-12)
        assert lr == pytest.approx(gte, abs=0.0)

    def test_customer_side_overestimates(self, oracle):
        gte, cr, _ = two_listing_forms(0.315, 0.3937, 1.0, 1.0, 1.0, 0.5)
        assert cr > gte

    def test_share_validation(self):
        with pytest.raises(ValueError):
            two_listing_forms(0.315, 0.3937, 1.0, 1.0, 1.0, 1.0)


class TestSupplyStateApprox:
    def test_matches_steady_state_at_large_balance(self):
        cfg, itv = homogeneous_cfg(lam=1e4, tau=1.0)
        m = expand_for_design(cfg, itv, GlobalControl())
        approx = supply_state_approx(m, 1e4)
        exact = steady_state(m).state
        np.testing.assert_allclose(approx.values, exact.values, rtol=1e-2)

    def test_homogeneous_closed_form(self):
        # one type: s = rho*nu / (balance * v) with alpha = eps = 1
        cfg, itv = homogeneous_cfg()
        m = expand_for_design(cfg, itv, GlobalControl())
        got = supply_state_approx(m, 1e4)
        assert got.values[0] == pytest.approx(1.0 / (1e4 * 0.315), rel=1e-12)

    def test_exact_inverse_balance_scaling(self):
        cfg, itv = random_market(np.random.default_rng(5))
        m = expand_for_design(cfg, itv, TSR(0.5, 0.5))
        lo = supply_state_approx(m, 1e3).values
        hi = supply_state_approx(m, 2e3).values
        np.testing.assert_allclose(2.0 * hi, lo, rtol=1e-14)

    def test_warns_outside_regime(self):
        cfg, itv = homogeneous_cfg()
        m = expand_for_design(cfg, itv, GlobalControl())
        with pytest.warns(RuntimeWarning):
            supply_state_approx(m, 50.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            supply_state_approx(m, 100.0)

    def test_balance_validation(self):
        cfg, itv = homogeneous_cfg()
        m = expand_for_design(cfg, itv, GlobalControl())
        with pytest.raises(ValueError):
            supply_state_approx(m, 0.0)


class TestGFactor:
    def test_matrix_and_table_agree(self):
        cfg, itv = random_market(np.random.default_rng(9))
        m = expand_for_design(cfg, itv, TSR(0.4, 0.6))
        gf = g_factor(m)
        np.testing.assert_allclose(
            gf.matrix, m.alpha * m.v / m.epsilon[:, None], rtol=0, atol=0)
        for (cc, lc), val in gf.table.items():
            ci = m.customer_cells.index(cc)
            li = m.listing_cells.index(lc)
            assert val == gf.matrix[ci, li]


class TestLedgerView:
    def test_as_ledger_round_trip(self):
        tab = q_limit_demand(_expand(TSR(0.5, 0.5)))
        led = tab.as_ledger()
        assert led.source == "limit-demand"
        assert led.counts is None and led.window is None
        for cell in CELLS:
            assert led.rate(*cell) == tab.q_over_scale[cell]
