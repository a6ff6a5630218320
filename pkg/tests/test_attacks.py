import math

import numpy as np
import pytest

from ldpshift.attacks import (
    AttackSpec,
    attack_grr,
    attack_hst,
    attack_olh_server,
    attack_olh_user,
    attack_oue,
    attack_oue_pad,
    attack_sw,
    baseline_attack,
    crafted_attack,
    make_params,
    n_fake,
    oue_pad_width,
    run_attacked_trial,
)
from ldpshift.core import BinSpec, Dataset, RngStream, empirical_histogram
from ldpshift.hashing import hash_map, hash_u64
from ldpshift.metrics import asg, baseline_skew
from ldpshift.oracles import (
    GrrParams,
    HstParams,
    OlhParams,
    OueParams,
    ServerAssignment,
    hst_vector,
)
from ldpshift.sw import SwParams


def gaussian_data(n=20_000, seed=1):
    from ldpshift.core import sample_gaussian_dataset

    return sample_gaussian_dataset(n, 0, 10, RngStream(seed))


class TestAttackSpec:
    def test_settings_enforced(self):
        with pytest.raises(ValueError):
            AttackSpec(protocol="olh", beta=0.05)  # needs a setting
        with pytest.raises(ValueError):
            AttackSpec(protocol="grr", beta=0.05, setting="server")
        with pytest.raises(ValueError):
            AttackSpec(protocol="sw", beta=0.05)  # needs a range

    def test_n_fake_rounding(self):
        assert n_fake(0.05, 100_000) == 5000
        assert n_fake(0.0, 10) == 0
        assert n_fake(0.25, 10) == 3  # 2.5 rounds half-up


class TestBaseline:
    def test_empty_for_zero(self):
        reports = baseline_attack(GrrParams(8, 1.0), 0, RngStream(1))
        assert reports.n == 0

    def test_high_budget_grr_reports_top(self):
        reports = baseline_attack(GrrParams(8, 30.0), 50, RngStream(1))
        assert np.all(reports.values == 8)

    def test_estimate_matches_input_skew(self):
        # merged with honest reports the estimate tracks (1-b) X + b e_m
        data = Dataset(RngStream(2).generator.random(200_000))
        spec = AttackSpec(protocol="oue", beta=0.05, strategy="baseline")
        rec = run_attacked_trial(data, spec, 1.0, RngStream(3))
        skew = baseline_skew(rec.truth, 0.05)
        assert np.abs(rec.estimate.f - skew.f).max() < 0.01


class TestGrrAttack:
    def test_all_reports_name_top_bin(self):
        reports = attack_grr(GrrParams(8, 1.0), 3)
        assert list(reports.values) == [8, 8, 8]

    def test_top_count_gains_exactly_n_f(self):
        params = GrrParams(8, 1.0)
        fake = attack_grr(params, 17)
        assert (fake.values == 8).sum() == 17


class TestOueAttack:
    def test_single_bit(self):
        reports = attack_oue(OueParams(8, 1.0), 5)
        assert np.all(reports.bits.sum(axis=1) == 1)
        assert np.all(reports.bits[:, 7] == 1)

    def test_pad_width_example(self):
        assert oue_pad_width(OueParams(32, 0.2)) == 13

    def test_pad_popcount(self):
        params = OueParams(32, 0.2)
        reports = attack_oue_pad(params, 40, RngStream(1))
        assert np.all(reports.bits.sum(axis=1) == 14)  # 13 pads + top bit
        assert np.all(reports.bits[:, 31] == 1)

    def test_pad_degenerates_at_high_budget(self):
        params = OueParams(8, 4.0)  # (m-1)/(e^4+1) - 0.5 < 0
        reports = attack_oue_pad(params, 5, RngStream(1))
        assert np.all(reports.bits.sum(axis=1) == 1)


class TestHstAttack:
    def test_user_vector_signature(self):
        params = HstParams(8, 1.0)
        reports = attack_hst(params, "user", 4, RngStream(1))
        assert np.all(reports.signs == 1)
        assert np.all(reports.vectors[:, :-1] == -1)
        assert np.all(reports.vectors[:, -1] == 1)
        # per-report contribution: +c to the top bin, -c to every other
        contrib = reports.signs[:, None] * reports.vectors
        assert np.all(contrib[:, -1] == 1)
        assert np.all(contrib[:, :-1] == -1)

    def test_server_constrained_to_assignment(self):
        params = HstParams(8, 1.0)
        seeds = RngStream(2).generator.integers(0, 2**63, size=500, dtype=np.uint64)
        reports = attack_hst(params, "server", 500, RngStream(3), assignment_seeds=seeds)
        vecs = hst_vector(seeds, 8)
        # the signed value is c * s[m]: contribution to the top bin always +c
        assert np.all(reports.signs == vecs[:, -1])
        contrib_other = (reports.signs[:, None] * vecs[:, :-1]).mean(axis=0)
        assert np.abs(contrib_other).max() < 0.15  # +-c with equal probability

    def test_server_requires_assignment(self):
        with pytest.raises(ValueError):
            attack_hst(HstParams(8, 1.0), "server", 3, RngStream(1))


class TestOlhAttacks:
    def test_user_reports_satisfy_support_condition(self):
        params = OlhParams(32, 1.0)
        reports = attack_olh_user(params, 50, RngStream(1), pool_size=200)
        for seed, val in zip(reports.seeds, reports.values):
            assert hash_map(int(seed), 32, params.g) == val

    def test_user_selection_pressure(self):
        params = OlhParams(32, 1.0)  # g = 3
        chosen = attack_olh_user(params, 100, RngStream(2), pool_size=1000)
        rng = RngStream(3)
        random_seeds = rng.generator.integers(0, 2**63, size=100, dtype=np.uint64)

        def preimage_mean(seeds):
            means = []
            for s in seeds:
                y = hash_map(int(s), 32, params.g)
                pre = [i for i in range(1, 33) if hash_map(int(s), i, params.g) == y]
                means.append(np.mean(pre))
            return np.mean(means)

        assert preimage_mean(chosen.seeds) > preimage_mean(random_seeds) + 2.0

    def test_server_supports_top_and_background(self):
        params = OlhParams(32, 1.0)
        seeds = RngStream(4).generator.integers(0, 2**63, size=2000, dtype=np.uint64)
        reports = attack_olh_server(params, seeds, 2000)
        assert np.all(
            (hash_u64(reports.seeds, np.uint64(32)) % np.uint64(params.g)).astype(int) + 1
            == reports.values
        )
        # each report also supports every colliding bin: ~ (m-1)/g others
        from ldpshift.oracles import olh_support_counts

        counts = olh_support_counts(reports, params)
        others = counts.sum() - counts[-1]
        expected = 2000 * 31 / params.g
        assert abs(others - expected) / expected < 0.05

    def test_server_requires_assignment(self):
        with pytest.raises(ValueError):
            attack_olh_server(OlhParams(8, 1.0), None, 3)


class TestSwAttack:
    @pytest.mark.parametrize("sw_range", ["rightmost-bin", "high-third", "above-one", "full-high"])
    def test_support(self, sw_range):
        params = SwParams(0.6)
        reports = attack_sw(params, sw_range, 1000, RngStream(5))
        assert reports.values.min() >= -params.b
        assert reports.values.max() <= 1 + params.b

    def test_rightmost_lands_in_one_cell(self):
        params = SwParams(0.6)
        reports = attack_sw(params, "rightmost-bin", 1000, RngStream(6))
        from ldpshift.sw import report_cells

        cells = report_cells(reports, params)
        assert len(np.unique(cells)) == 1
        assert cells[0] == params.n_cells - 1

    def test_range_bounds(self):
        params = SwParams(0.6)
        b = params.b
        for sw_range, lo, hi in [
            ("high-third", 1 + 2 * b / 3, 1 + b),
            ("above-one", 1.0, 1 + b),
            ("full-high", 1 - b, 1 + b),
        ]:
            reports = attack_sw(params, sw_range, 500, RngStream(7))
            assert reports.values.min() >= lo - 1e-12
            assert reports.values.max() <= hi + 1e-12


class TestRunAttackedTrial:
    def test_determinism(self):
        data = gaussian_data(5000)
        spec = AttackSpec(protocol="olh", beta=0.05, setting="server")
        a = run_attacked_trial(data, spec, 1.0, RngStream(8), pool_size=50)
        b = run_attacked_trial(data, spec, 1.0, RngStream(8), pool_size=50)
        assert a.asg == b.asg
        assert np.array_equal(a.estimate.f, b.estimate.f)

    def test_beta_zero_marks_sgr_not_applicable(self):
        data = gaussian_data(2000)
        spec = AttackSpec(protocol="grr", beta=0.0)
        rec = run_attacked_trial(data, spec, 1.0, RngStream(9))
        assert rec.sgr is None

    def test_grr_sgr_bounded_by_inverse_beta(self):
        data = Dataset(RngStream(10).generator.random(50_000))
        spec = AttackSpec(protocol="grr", beta=0.05)
        for t in range(5):
            rec = run_attacked_trial(data, spec, 0.2, RngStream(20 + t))
            assert rec.sgr <= 20.0 + 1e-9

    def test_crafted_beats_baseline_for_oue(self):
        data = Dataset(RngStream(11).generator.random(50_000))
        crafted, base = [], []
        for t in range(8):
            spec_c = AttackSpec(protocol="oue", beta=0.05)
            spec_b = AttackSpec(protocol="oue", beta=0.05, strategy="baseline")
            crafted.append(run_attacked_trial(data, spec_c, 0.6, RngStream(30 + t)).asg)
            base.append(run_attacked_trial(data, spec_b, 0.6, RngStream(30 + t)).asg)
        assert np.mean(crafted) > np.mean(base)

    def test_oue_pad_weaker_than_plain_oue(self):
        data = gaussian_data(50_000, seed=12)
        pad, plain = [], []
        for t in range(8):
            pad.append(run_attacked_trial(data, AttackSpec(protocol="oue-pad", beta=0.05), 0.6, RngStream(40 + t)).asg)
            plain.append(run_attacked_trial(data, AttackSpec(protocol="oue", beta=0.05), 0.6, RngStream(40 + t)).asg)
        assert np.mean(pad) < np.mean(plain)

    def test_fake_reports_structurally_valid(self):
        data = gaussian_data(5000, seed=13)
        for proto, setting, rng_seed in [
            ("grr", None, 50),
            ("oue", None, 51),
            ("oue-pad", None, 52),
            ("olh", "user", 53),
            ("olh", "server", 54),
            ("hst", "user", 55),
            ("hst", "server", 56),
            ("sw", None, 57),
        ]:
            spec = AttackSpec(
                protocol=proto,
                beta=0.1,
                setting=setting,
                sw_range="above-one" if proto == "sw" else None,
            )
            rec, reports, _ = run_attacked_trial(
                data, spec, 0.6, RngStream(rng_seed), pool_size=50, return_reports=True
            )
            assert reports.n == data.n
            assert rec.estimate.kind == "consistent"
