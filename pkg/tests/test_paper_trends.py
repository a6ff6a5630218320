"""Directional Monte-Carlo checks on attack behavior: orderings and
monotonicities that hold on average, tested at moderate trial counts with
fixed seeds.  The acceptance suite re-runs the headline versions at full
scale."""

import numpy as np
import pytest

from ldpshift.attacks import AttackSpec, run_attacked_trial
from ldpshift.core import Dataset, RngStream, sample_gaussian_dataset


@pytest.fixture(scope="module")
def flat_data():
    return Dataset(RngStream(101).generator.random(50_000))


@pytest.fixture(scope="module")
def gaussian_data():
    return sample_gaussian_dataset(50_000, 0, 10, RngStream(102))


def mean_asg(data, spec, eps, trials, seed, **kw):
    vals = [
        run_attacked_trial(data, spec, eps, RngStream(seed).substream(t), **kw).asg
        for t in range(trials)
    ]
    return float(np.mean(vals)), float(np.std(vals) / np.sqrt(trials))


CELLS = [
    ("grr", None, None),
    ("oue", None, None),
    ("olh", "user", None),
    ("olh", "server", None),
    ("hst", "user", None),
    ("hst", "server", None),
    ("sw", None, "above-one"),
]


class TestDirection:
    @pytest.mark.parametrize("proto,setting,sw_range", CELLS)
    def test_attacks_shift_right(self, flat_data, proto, setting, sw_range):
        # every crafted attack except SW-rightmost-bin moves mass rightward
        spec = AttackSpec(protocol=proto, beta=0.05, setting=setting, sw_range=sw_range)
        mean, se = mean_asg(flat_data, spec, 0.6, trials=12, seed=200, pool_size=200)
        assert mean > 0


class TestBetaMonotone:
    @pytest.mark.parametrize("proto,setting,sw_range", [
        ("grr", None, None),
        ("oue", None, None),
        ("hst", "user", None),
        ("sw", None, "above-one"),
    ])
    def test_mean_asg_nondecreasing_in_beta(self, gaussian_data, proto, setting, sw_range):
        means, ses = [], []
        for beta in (0.01, 0.025, 0.05, 0.075):
            spec = AttackSpec(protocol=proto, beta=beta, setting=setting, sw_range=sw_range)
            m, s = mean_asg(gaussian_data, spec, 0.6, trials=12, seed=300)
            means.append(m)
            ses.append(s)
        for i in range(len(means) - 1):
            joint = np.hypot(ses[i], ses[i + 1])
            assert means[i + 1] > means[i] - joint


class TestGrrWorstAtSmallBeta:
    def test_grr_sgr_tops_other_cfos(self, flat_data):
        # at eps = 0.2 and beta = 1% the GRR estimate saturates fastest
        def mean_sgr(proto, setting):
            vals = []
            for t in range(15):
                spec = AttackSpec(protocol=proto, beta=0.01, setting=setting)
                rec = run_attacked_trial(flat_data, spec, 0.2, RngStream(400).substream(hash((proto, str(setting), t)) % 2**31), pool_size=200)
                vals.append(rec.sgr)
            return np.mean(vals)

        grr = mean_sgr("grr", None)
        others = [
            mean_sgr("oue", None),
            mean_sgr("olh", "user"),
            mean_sgr("olh", "server"),
            mean_sgr("hst", "user"),
            mean_sgr("hst", "server"),
        ]
        assert grr > max(others)


class TestHstServerHalfSupport:
    def test_server_fakes_support_half_the_bins_on_average(self):
        from ldpshift.attacks import attack_hst
        from ldpshift.oracles import HstParams, hst_positive_support

        params = HstParams(32, 0.6)
        seeds = RngStream(9).generator.integers(0, 2**63, size=4000, dtype=np.uint64)
        reports = attack_hst(params, "server", 4000, RngStream(10), assignment_seeds=seeds)
        pos = hst_positive_support(reports, params)
        assert pos[-1] == 4000  # the top bin always supported
        frac_others = pos[:-1].mean() / 4000
        assert abs(frac_others - 0.5) < 0.03
