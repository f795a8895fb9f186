import csv
import dataclasses
import io
import json
import math

import numpy as np
import pytest

from marketexp.analysis_harness import (
    CSV_HEADER,
    ClusterPreferenceRatio,
    ReplicationError,
    StatRow,
    SweepSpec,
    TooFewReplications,
    VaryBalance,
    compatible_estimators,
    effective_window,
    evaluate_estimator,
    kurtz_check,
    meanfield_rows,
    resolve_design,
    rows_to_csv,
    rows_to_json,
    run_replications,
    scenario_points,
    summarize,
    sweep,
)
from marketexp.designs import ClusterScenario, TsrSchedule, cluster_market
from marketexp.estimators import (
    ClusterLR,
    NaiveCR,
    NaiveLR,
    TSRI,
    TSRN,
    est_cr,
    est_tsri,
    gte_true,
)
from marketexp.finite_sim import SimConfig
from marketexp.market_model import (
    CR,
    Cluster,
    GlobalControl,
    Intervention,
    LR,
    TSR,
    expand_for_design,
)
from marketexp.mean_field import booking_rates_mf
from conftest import ORACLE, homogeneous_cfg

SMALL_SIM = SimConfig(n_listings=100, horizon=25.0, burn_in=5.0, seed=11)


class TestEffectiveWindow:
    @pytest.mark.parametrize("lam,tau,want", [
        (1.0, 1.0, (5.0, 25.0)),
        (0.1, 1.0, (50.0, 250.0)),
        (10.0, 1.0, (5.0, 25.0)),
        (10.0, 10.0, (0.5, 2.5)),
    ])
    def test_rescales_by_slower_clock(self, lam, tau, want):
        assert effective_window(lam, tau) == pytest.approx(want)

    def test_custom_window(self):
        assert effective_window(0.5, 1.0, 1.0, 3.0) == pytest.approx((2.0, 6.0))

    def test_validation(self):
        with pytest.raises(ValueError):
            effective_window(1.0, 1.0, -1.0, 5.0)
        with pytest.raises(ValueError):
            effective_window(1.0, 1.0, 5.0, 5.0)


class TestDesignResolution:
    def test_plain_designs_pass_through(self):
        d = CR(0.4)
        assert resolve_design(d, 1.0) is d

    def test_schedule_resolves_at_balance(self, oracle):
        d = resolve_design(TsrSchedule(), 1.0)
        assert isinstance(d, TSR)
        assert d.a_c == pytest.approx(oracle.a_c_sched_at_1, abs=1e-12)
        assert d.a_l == pytest.approx(oracle.a_l_sched_at_1, abs=1e-12)

    def test_compatibility_pairs(self):
        all_ests = (NaiveCR(), NaiveLR(), TSRN(), TSRI(1.0), TSRI(2.0),
                    ClusterLR())
        assert compatible_estimators(all_ests, CR(0.5)) == (NaiveCR(),)
        assert compatible_estimators(all_ests, LR(0.5)) == (NaiveLR(),)
        assert compatible_estimators(all_ests, TSR(0.5, 0.5)) == (
            TSRN(), TSRI(1.0), TSRI(2.0))
        assert compatible_estimators(all_ests, TsrSchedule()) == (
            TSRN(), TSRI(1.0), TSRI(2.0))
        assert compatible_estimators(
            all_ests, Cluster(assignment={"l1": 1, "l2": 0})) == (ClusterLR(),)

    def test_evaluate_dispatch_matches_formulas(self, oracle):
        cfg, itv = homogeneous_cfg()
        design = TSR(0.5, 0.5)
        led = booking_rates_mf(expand_for_design(cfg, itv, design))
        got = evaluate_estimator(TSRI(2.0), led, design, balance=1.0)
        want = est_tsri(led, 0.5, 0.5, oracle.beta_at_1, 2.0)
        assert got == pytest.approx(want, abs=1e-15)


class TestSummarize:
    def test_two_point_sample(self):
        rows = summarize([{NaiveCR(): 0.0}, {NaiveCR(): 2.0}], gte=1.0,
                         b=100, scenario="s", point="p", seed=3)
        (row,) = rows
        assert row.mean == pytest.approx(1.0)
        assert row.bias == pytest.approx(0.0, abs=1e-15)
        assert row.se == pytest.approx(math.sqrt(2.0), abs=1e-15)
        assert row.rmse == pytest.approx(math.sqrt(2.0), abs=1e-15)
        assert (row.scenario, row.point, row.estimator) == ("s", "p", "cr")
        assert row.source == "sim" and row.reps == 2 and row.seed == 3

    def test_constant_sample_collapses(self):
        rows = summarize([{NaiveLR(): 0.7}] * 5, gte=0.5, b=100)
        (row,) = rows
        assert row.se == 0.0
        assert row.bias == pytest.approx(0.2)
        assert row.rmse == pytest.approx(0.2)
        assert row.ci_lo == pytest.approx(0.2)
        assert row.ci_hi == pytest.approx(0.2)

    def test_too_few(self):
        with pytest.raises(TooFewReplications):
            summarize([{NaiveCR(): 1.0}], gte=0.0)

    def test_order_independence(self):
        vals = [0.3, -0.1, 0.9, 0.2, 0.6]
        fwd = summarize([{TSRN(): v} for v in vals], gte=0.25, b=200, seed=9)
        rev = summarize([{TSRN(): v} for v in reversed(vals)], gte=0.25,
                        b=200, seed=9)
        assert fwd == rev

    def test_rmse_identities(self):
        rng = np.random.default_rng(4)
        vals = rng.normal(0.2, 0.5, size=37)
        gte = 0.05
        (row,) = summarize([{NaiveCR(): float(v)} for v in vals], gte=gte,
                           b=100)
        n = len(vals)
        assert row.rmse ** 2 == pytest.approx(row.bias ** 2 + row.se ** 2,
                                              abs=1e-12)
        raw_mse = float(np.mean((vals - gte) ** 2))
        assert raw_mse == pytest.approx(
            row.bias ** 2 + row.se ** 2 * (n - 1) / n, abs=1e-12)

    def test_bootstrap_interval_brackets_bias(self):
        rng = np.random.default_rng(8)
        vals = rng.normal(1.0, 0.3, size=200)
        (row,) = summarize([{NaiveCR(): float(v)} for v in vals], gte=0.9,
                           b=500, seed=1)
        assert row.ci_lo <= row.bias <= row.ci_hi
        assert row.ci_hi - row.ci_lo > 0.0

    def test_multiple_estimators_one_row_each(self):
        ests = [{NaiveCR(): 0.1, TSRN(): 0.4},
                {NaiveCR(): 0.3, TSRN(): 0.2}]
        rows = summarize(ests, gte=0.0, b=100)
        assert [r.estimator for r in rows] == ["cr", "tsrn"]


class TestRunReplications:
    def test_deterministic_and_thread_invariant(self):
        cfg, itv = homogeneous_cfg()
        ests = (TSRN(), TSRI(2.0))
        kw = dict(ests=ests, master_seed=77)
        a = run_replications(cfg, itv, TSR(0.5, 0.5), SMALL_SIM, 6, **kw)
        b = run_replications(cfg, itv, TSR(0.5, 0.5), SMALL_SIM, 6, **kw)
        c = run_replications(cfg, itv, TSR(0.5, 0.5), SMALL_SIM, 6,
                             threads=3, **kw)
        assert a == b == c

    def test_master_seed_changes_draws(self):
        cfg, itv = homogeneous_cfg()
        a = run_replications(cfg, itv, CR(0.5), SMALL_SIM, 3,
                             ests=(NaiveCR(),), master_seed=1)
        b = run_replications(cfg, itv, CR(0.5), SMALL_SIM, 3,
                             ests=(NaiveCR(),), master_seed=2)
        assert a != b

    def test_window_rescaling_tracks_slow_clock(self):
        # same seed, lam = 0.1: rescaled runs use a 10x longer window,
        # so the two modes must count different bookings
        cfg, itv = homogeneous_cfg(lam=0.1)
        on = run_replications(cfg, itv, CR(0.5), SMALL_SIM, 2,
                              ests=(NaiveCR(),), master_seed=5)
        off = run_replications(cfg, itv, CR(0.5), SMALL_SIM, 2,
                               ests=(NaiveCR(),), master_seed=5,
                               rescale_window=False)
        assert on != off

    def test_null_intervention_centers_on_zero(self):
        cfg, _ = homogeneous_cfg()
        null = Intervention(v_treated={("c1", "l1"): 0.315})
        reps = 40
        ests = run_replications(cfg, null, CR(0.5),
                                dataclasses.replace(SMALL_SIM, n_listings=300),
                                reps, ests=(NaiveCR(),), master_seed=13)
        vals = np.array([e[NaiveCR()] for e in ests])
        se_mean = vals.std(ddof=1) / math.sqrt(reps)
        assert abs(vals.mean()) < 4.0 * se_mean

    def test_cluster_design_runs_and_redraws(self):
        cfg, itv, design = cluster_market(
            ClusterScenario(x=0.5, y=0.25, delta=1.3))
        ests = run_replications(cfg, itv, design, SMALL_SIM, 6,
                                ests=(ClusterLR(),), master_seed=21)
        vals = [e[ClusterLR()] for e in ests]
        assert len(set(vals)) > 1
        assert all(math.isfinite(v) for v in vals)

    @pytest.mark.parametrize("threads", [1, 2])
    def test_failure_carries_index_and_partial(self, threads):
        cfg, itv = homogeneous_cfg()
        bad_sim = SimConfig(n_listings=1, horizon=25.0, burn_in=5.0, seed=0)
        with pytest.raises(ReplicationError) as exc:
            run_replications(cfg, itv, TSR(0.5, 0.5), bad_sim, 3,
                             ests=(TSRN(),), threads=threads)
        assert exc.value.index == 0
        assert exc.value.partial == {}


class TestKurtzCheck:
    def test_zero_rates_make_exact_agreement(self):
        cfg, itv = homogeneous_cfg()
        m = expand_for_design(cfg, itv, GlobalControl())
        frozen = dataclasses.replace(m, lam=0.0)
        out = kurtz_check(frozen, ns=[10], seeds=[0, 1], horizon=5.0)
        np.testing.assert_array_equal(out[10], np.zeros(2))

    def test_distance_shrinks_with_population(self):
        cfg, itv = homogeneous_cfg()
        m = expand_for_design(cfg, itv, GlobalControl())
        out = kurtz_check(m, ns=[100, 1600], seeds=range(8), horizon=10.0)
        assert set(out) == {100, 1600}
        assert all(len(v) == 8 for v in out.values())
        assert np.all(out[100] > 0.0)
        assert np.median(out[1600]) < np.median(out[100])


class TestScenarioPoints:
    def test_vary_balance_points(self):
        pts = scenario_points(VaryBalance())
        assert [p[0] for p in pts] == ["0.1", "1", "10"]
        assert [p[1].lam for p in pts] == [0.1, 1.0, 10.0]
        assert all(p[1].tau == 1.0 for p in pts)

    def test_cluster_ratio_points(self):
        pts = scenario_points(ClusterPreferenceRatio())
        assert [p[0] for p in pts] == ["0", "0.25", "0.5", "0.75", "1"]
        for _, cfg, itv in pts:
            assert len(cfg.listings) == 2
            assert len(itv.v_treated) == 4


class TestSweep:
    def make_spec(self, **kw):
        base = dict(
            scenario=VaryBalance(balances=(0.1, 1.0)),
            designs=(CR(0.5), TsrSchedule()),
            estimators=(NaiveCR(), NaiveLR(), TSRN(), TSRI(2.0)),
            reps=3,
            sim=SMALL_SIM,
            bootstrap_b=100,
        )
        base.update(kw)
        return SweepSpec(**base)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            self.make_spec(reps=1)
        with pytest.raises(ValueError):
            self.make_spec(bootstrap_b=50)
        with pytest.raises(ValueError):
            self.make_spec(level=100.0)

    def test_row_structure(self):
        res = sweep(self.make_spec(), seed=42)
        assert res.failures == ()
        # 2 points x (cr under CR; tsrn, tsri-2 under the schedule) x 2 sources
        assert len(res.rows) == 12
        assert {r.scenario for r in res.rows} == {"balance"}
        assert {r.point for r in res.rows} == {"0.1", "1"}
        for sim_row, mf_row in zip(res.rows[::2], res.rows[1::2]):
            assert sim_row.source == "sim" and mf_row.source == "meanfield"
            assert sim_row.estimator == mf_row.estimator
            assert sim_row.point == mf_row.point
            assert sim_row.reps == 3 and mf_row.reps == 0
            assert mf_row.se == 0.0
            assert sim_row.gte_true == mf_row.gte_true

    def test_estimator_labels_per_design(self):
        res = sweep(self.make_spec(), seed=42)
        labels = [r.estimator for r in res.rows if r.point == "1"]
        assert labels == ["cr", "cr", "tsrn", "tsrn", "tsri-2", "tsri-2"]

    def test_deterministic_across_threads(self):
        res1 = sweep(self.make_spec(), seed=7)
        res2 = sweep(self.make_spec(), seed=7)
        res3 = sweep(self.make_spec(), seed=7, threads=2)
        assert res1 == res2 == res3

    def test_seed_changes_rows(self):
        r1 = sweep(self.make_spec(), seed=1).rows
        r2 = sweep(self.make_spec(), seed=2).rows
        assert r1 != r2

    def test_point_design_failures_recorded(self):
        spec = self.make_spec(
            designs=(CR(0.5), Cluster(assignment={"lX": 1, "lY": 0})),
            estimators=(NaiveCR(), ClusterLR()),
        )
        res = sweep(spec, seed=3)
        assert len(res.failures) == 2
        assert all(f.design == "Cluster" for f in res.failures)
        assert all(f.scenario == "balance" for f in res.failures)
        # CR rows survive for both points
        assert len(res.rows) == 4
        assert {r.estimator for r in res.rows} == {"cr"}


class TestMeanfieldRows:
    def test_reference_values(self, oracle):
        cfg, itv = homogeneous_cfg()
        gte = gte_true(cfg, itv)
        (row,) = meanfield_rows(cfg, itv, CR(0.5), (NaiveCR(),), gte,
                                scenario="x", point="p", seed=5)
        led = booking_rates_mf(expand_for_design(cfg, itv, CR(0.5)))
        want = est_cr(led, 0.5)
        assert row.mean == pytest.approx(want, abs=1e-15)
        assert row.bias == pytest.approx(want - gte, abs=1e-15)
        assert row.se == 0.0 and row.reps == 0
        assert row.rmse == pytest.approx(abs(row.bias), abs=1e-15)
        assert row.ci_lo == row.ci_hi == row.bias
        assert row.source == "meanfield"


class TestSerialization:
    def _rows(self):
        return summarize(
            [{NaiveCR(): 0.11, TSRN(): -0.4},
             {NaiveCR(): 0.32, TSRN(): 0.5},
             {NaiveCR(): 0.27, TSRN(): 0.1}],
            gte=1.0 / 3.0, b=100, scenario="balance", point="0.1", seed=12,
        )

    def test_csv_header_and_roundtrip(self):
        rows = self._rows()
        text = rows_to_csv(rows)
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert text.endswith("\n")
        parsed = list(csv.DictReader(io.StringIO(text)))
        assert len(parsed) == len(rows)
        for rec, row in zip(parsed, rows):
            assert float(rec["mean"]) == row.mean
            assert float(rec["gte_true"]) == row.gte_true
            assert int(rec["reps"]) == row.reps
            assert rec["estimator"] == row.estimator

    def test_json_roundtrip(self):
        rows = self._rows()
        text = rows_to_json(rows)
        assert text.endswith("\n")
        doc = json.loads(text)
        assert set(doc) == {"rows"}
        assert len(doc["rows"]) == len(rows)
        for rec, row in zip(doc["rows"], rows):
            assert rec["bias"] == row.bias
            assert rec["point"] == row.point
            assert rec["seed"] == row.seed
