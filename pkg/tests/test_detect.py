import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldpshift.attacks import AttackSpec, attack_oue, make_params, run_attacked_trial
from ldpshift.core import BinSpec, Dataset, RngStream, sample_gaussian_dataset
from ldpshift.detect import (
    ks_two_sample,
    mud_detect,
    mud_support_count,
    mud_threshold,
    reg_inc_beta,
    report_summary,
    synthesize,
    zero_shot_detect,
)
from ldpshift.oracles import (
    GrrParams,
    GrrReports,
    HstParams,
    OlhParams,
    OueParams,
    OueReports,
    collect,
    oue_perturb,
)
from ldpshift.sw import SwParams, sw_perturb


class TestReportSummary:
    def test_oue_uniform_input_gives_flat_summary(self):
        params = OueParams(16, 1.0)
        rng = RngStream(1)
        xs = rng.generator.integers(1, 17, size=100_000)
        summary = report_summary(oue_perturb(xs, params, rng.substream(1)), params)
        assert np.abs(summary.s - 1.0 / 16).max() < 0.005

    def test_oue_attack_summary_is_top_corner(self):
        params = OueParams(8, 1.0)
        summary = report_summary(attack_oue(params, 100), params)
        assert summary.s[-1] == 1.0
        assert summary.s[:-1].sum() == 0.0

    def test_sw_summary_normalized(self):
        params = SwParams(1.0, m_s=64)
        reports = sw_perturb(RngStream(2).generator.random(5000), params, RngStream(3))
        summary = report_summary(reports, params)
        assert summary.s.sum() == pytest.approx(1.0)
        assert summary.s.size == params.n_cells

    def test_order_invariance(self):
        params = GrrParams(8, 1.0)
        vals = RngStream(4).generator.integers(1, 9, size=1000)
        a = report_summary(GrrReports(vals), params)
        b = report_summary(GrrReports(vals[::-1].copy()), params)
        assert np.array_equal(a.s, b.s)


class TestSynthesize:
    def test_zero_samples(self):
        params = GrrParams(8, 1.0)
        reports = GrrReports(RngStream(5).generator.integers(1, 9, size=500))
        assert synthesize(reports, params, 0, RngStream(6)).size == 0

    def test_point_mass_estimate_yields_top_bin(self):
        params = GrrParams(8, 3.0)
        reports = GrrReports(np.full(5000, 8))
        samples = synthesize(reports, params, 200, RngStream(7))
        assert np.all(samples == 8)

    def test_law_of_large_numbers(self):
        params = GrrParams(8, 1.0)
        rng = RngStream(8)
        xs = rng.generator.integers(1, 9, size=100_000)
        from ldpshift.oracles import grr_perturb

        reports = grr_perturb(xs, params, rng.substream(1))
        samples = synthesize(reports, params, 500_000, rng.substream(2))
        from ldpshift.detect import estimate_distribution

        est = estimate_distribution(reports, params)
        freq = np.bincount(samples - 1, minlength=8) / samples.size
        assert np.abs(freq - est.f).max() < 0.01


class TestKsTwoSample:
    def test_identical_samples(self):
        s, p = ks_two_sample([1, 2, 3], [1, 2, 3])
        assert s == 0.0
        assert p == 1.0  # clamped from 2

    def test_disjoint_samples(self):
        s, p = ks_two_sample([1, 2, 3], [4, 5, 6])
        assert s == 1.0
        assert p == pytest.approx(2 * math.exp(-3.0), abs=1e-12)

    def test_equal_sizes_reduce_to_m_formula(self):
        # m = n = 10 with S = 0.5: p = 2 exp(-2 S^2 m^2 / (2m)) = 2 e^-2.5
        a = np.arange(10, dtype=float)
        b = np.arange(10, dtype=float) + 4.999  # shifts 5 of 10 past the max
        s, p = ks_two_sample(a, b)
        assert s == pytest.approx(0.5)
        assert p == pytest.approx(2 * math.exp(-2.5), abs=1e-12)

    def test_symmetry(self):
        rng = RngStream(9).generator
        a, b = rng.random(13), rng.random(7) + 0.2
        assert ks_two_sample(a, b) == ks_two_sample(b, a)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ks_two_sample([], [1.0])

    @given(
        st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=30),
        st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=30),
    )
    @settings(max_examples=200)
    def test_ranges(self, a, b):
        s, p = ks_two_sample(a, b)
        assert 0.0 <= s <= 1.0
        assert 0.0 <= p <= 1.0

    @given(st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=30))
    @settings(deadline=None)
    def test_statistic_vs_scipy(self, a):
        from scipy.stats import ks_2samp

        b = [x * 0.9 + 0.05 for x in a[: max(1, len(a) // 2)]]
        s, _ = ks_two_sample(a, b)
        assert s == pytest.approx(ks_2samp(a, b).statistic, abs=1e-12)


class TestRegIncBeta:
    def test_endpoints(self):
        assert reg_inc_beta(0.0, 2.5, 3.5) == 0.0
        assert reg_inc_beta(1.0, 2.5, 3.5) == 1.0

    def test_uniform_case(self):
        assert reg_inc_beta(0.5, 1.0, 1.0) == pytest.approx(0.5, abs=1e-12)

    def test_binomial_identity(self):
        # I(x; a, b) = sum_{k=a}^{a+b-1} C(a+b-1, k) x^k (1-x)^(a+b-1-k)
        for a, b, x in [(3, 5, 0.3), (10, 20, 0.7), (25, 36, 0.5), (1, 60, 0.01)]:
            n = a + b - 1
            exact = sum(math.comb(n, k) * x**k * (1 - x) ** (n - k) for k in range(a, n + 1))
            assert reg_inc_beta(x, a, b) == pytest.approx(exact, abs=1e-9)

    def test_against_mpmath(self):
        from mpmath import betainc

        for a, b, x in [(0.5, 0.5, 0.3), (7.3, 2.1, 0.8), (100, 50, 0.6), (3, 400, 0.02)]:
            exact = float(betainc(a, b, 0, x, regularized=True))
            assert reg_inc_beta(x, a, b) == pytest.approx(exact, rel=1e-10)

    def test_domain_validation(self):
        with pytest.raises(ValueError):
            reg_inc_beta(-0.1, 1, 1)
        with pytest.raises(ValueError):
            reg_inc_beta(0.5, 0, 1)


class TestMudThreshold:
    def test_oue_closed_form(self):
        assert mud_threshold("oue", 0.6, 10_000) == pytest.approx(5500.0)

    def test_olh_matches_binomial_oracle(self):
        # smallest tau with P[Bin(n, x) >= tau] <= 0.01 by exact summation
        for n in (50, 120, 200):
            for eps in (0.6, 1.0):
                tau = mud_threshold("olh", eps, n)
                g = max(2, int(math.floor(math.exp(eps) + 1)))
                x = math.exp(eps) / (math.exp(eps) + g - 1)
                tails = [
                    sum(math.comb(n, k) * x**k * (1 - x) ** (n - k) for k in range(t, n + 1))
                    for t in range(1, n + 2)
                ]
                expected = next(t for t, tail in zip(range(1, n + 2), tails) if tail <= 0.01)
                assert tau == expected

    def test_hst_equals_olh_at_g2(self):
        # protocol consistency: OLH with g = 2 is HST
        assert mud_threshold("olh", 0.6, 5000, g=2) == mud_threshold("hst", 0.6, 5000)

    def test_tightening_bound_raises_tau(self):
        loose = mud_threshold("hst", 1.0, 5000, bound=0.05)
        tight = mud_threshold("hst", 1.0, 5000, bound=0.001)
        assert tight > loose

    def test_grr_unsupported(self):
        with pytest.raises(ValueError, match="GRR"):
            mud_threshold("grr", 1.0, 100)


class TestMudDetect:
    def test_zero_support_no_alarm(self):
        params = OueParams(8, 1.0)
        reports = OueReports(np.zeros((100, 8), dtype=np.uint8))
        assert mud_detect(reports, params) is False

    def test_grr_rejected(self):
        params = GrrParams(8, 1.0)
        with pytest.raises(ValueError):
            mud_detect(GrrReports(np.array([1, 2])), params)

    def test_attacked_oue_below_threshold_at_moderate_beta(self):
        # fake count + honest support stays far below the tau null
        rng = RngStream(10)
        data = sample_gaussian_dataset(100_000, 0, 10, rng)
        spec = AttackSpec(protocol="oue", beta=0.05)
        _, reports, _ = run_attacked_trial(data, spec, 0.6, rng.substream(1), return_reports=True)
        params = OueParams(32, 0.6)
        assert mud_detect(reports, params) is False
        count = mud_support_count(reports, params)
        assert count < mud_threshold("oue", 0.6, reports.n)


class TestZeroShot:
    def test_deterministic_verdict(self):
        rng = RngStream(11)
        data = sample_gaussian_dataset(20_000, 0, 10, rng)
        params = GrrParams(32, 0.6)
        spec = AttackSpec(protocol="grr", beta=0.05)
        _, reports, _ = run_attacked_trial(data, spec, 0.6, rng.substream(1), return_reports=True)
        a = zero_shot_detect(reports, params, RngStream(99))
        b = zero_shot_detect(reports, params, RngStream(99))
        assert a.p_value == b.p_value
        assert np.array_equal(a.g_det, b.g_det)

    def test_identical_groups_unpolluted(self):
        # if g_det and g_ben coincide as multisets, S is small and p near 1
        s, p = ks_two_sample([0.1, 0.2, 0.3, 0.4], [0.4, 0.3, 0.2, 0.1])
        assert s == 0.0
        assert p == 1.0

    def test_attacked_grr_flags_clean_grr_passes(self):
        rng = RngStream(12)
        data = sample_gaussian_dataset(50_000, 0, 10, rng)
        params = GrrParams(32, 0.6)
        spec = AttackSpec(protocol="grr", beta=0.05)
        _, reports, _ = run_attacked_trial(data, spec, 0.6, rng.substream(1), return_reports=True)
        attacked = zero_shot_detect(reports, params, rng.substream(2))
        clean_spec = AttackSpec(protocol="grr", beta=0.0, strategy="baseline")
        _, reports, _ = run_attacked_trial(data, clean_spec, 0.6, rng.substream(3), return_reports=True)
        clean = zero_shot_detect(reports, params, rng.substream(4))
        assert attacked.p_value < clean.p_value
        assert attacked.polluted
        assert not clean.polluted

    def test_verdict_serializes(self):
        v = zero_shot_detect(
            GrrReports(RngStream(13).generator.integers(1, 9, size=2000)),
            GrrParams(8, 1.0),
            RngStream(14),
        )
        d = v.to_dict()
        assert set(d) == {"g_ben", "g_det", "ks_stat", "p_value", "polluted"}
        assert len(d["g_ben"]) == 10
