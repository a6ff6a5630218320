import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldpshift.core import BinSpec, Histogram
from ldpshift.postprocess import norm_sub


def raw(values):
    return Histogram(BinSpec(len(values)), np.asarray(values, dtype=float), kind="raw")


def sweep_alpha(f):
    """Independent oracle: walk the m+1 linear pieces of
    S(alpha) = sum max(f_i + alpha, 0) and solve the active one exactly."""
    f = np.asarray(f, dtype=float)
    knots = np.sort(-f)  # S is linear between consecutive knots
    candidates = np.concatenate([[knots[0] - 1.0], knots, [knots[-1] + 1.0 + max(0.0, 1.0 - f.sum())]])
    for lo, hi in zip(candidates[:-1], candidates[1:]):
        active = f + hi > 0  # active set is constant on (lo, hi]
        k = active.sum()
        if k == 0:
            continue
        alpha = (1.0 - f[active].sum()) / k
        if lo - 1e-15 <= alpha <= hi + 1e-15:
            return alpha
    raise AssertionError("piecewise sweep failed to locate alpha")


class TestNormSubExamples:
    def test_mixed_signs(self):
        out = norm_sub(raw([0.5, 0.7, -0.2]))
        assert np.allclose(out.f, [0.4, 0.6, 0.0], atol=1e-9)

    def test_already_consistent_fixed_point(self):
        out = norm_sub(raw([0.25, 0.5, 0.25]))
        assert np.allclose(out.f, [0.25, 0.5, 0.25], atol=1e-9)

    def test_heavy_clipping(self):
        out = norm_sub(raw([-1.0, -1.0, 3.0]))
        assert np.allclose(out.f, [0.0, 0.0, 1.0], atol=1e-9)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            norm_sub(Histogram(BinSpec(2), np.array([1.0, np.inf]), kind="raw"))


@st.composite
def raw_vectors(draw):
    m = draw(st.integers(2, 5))
    return draw(
        st.lists(
            st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False),
            min_size=m,
            max_size=m,
        )
    )


class TestNormSubProperties:
    @given(raw_vectors())
    @settings(max_examples=300)
    def test_output_on_simplex(self, f):
        out = norm_sub(raw(f))
        assert np.all(out.f >= 0)
        assert abs(out.f.sum() - 1.0) < 1e-9

    @given(raw_vectors())
    def test_idempotent(self, f):
        once = norm_sub(raw(f))
        twice = norm_sub(Histogram(once.bins, once.f, kind="raw"))
        assert np.allclose(once.f, twice.f, atol=1e-9)

    @given(raw_vectors(), st.floats(-3.0, 3.0, allow_nan=False))
    def test_shift_equivariance(self, f, c):
        base = norm_sub(raw(f))
        shifted = norm_sub(raw(np.asarray(f) + c))
        assert np.allclose(base.f, shifted.f, atol=1e-8)

    @given(raw_vectors())
    @settings(max_examples=300)
    def test_bisection_matches_piecewise_sweep(self, f):
        out = norm_sub(raw(f))
        alpha = sweep_alpha(f)
        expected = np.maximum(np.asarray(f) + alpha, 0.0)
        assert np.allclose(out.f, expected, atol=1e-9)


def test_bisection_vs_sweep_random_histograms():
    # float oracle agreement on 1000 random raw vectors, m <= 5
    rng = np.random.default_rng(0)
    for _ in range(1000):
        m = rng.integers(2, 6)
        f = rng.normal(0.2, 1.0, size=m)
        out = norm_sub(raw(f))
        expected = np.maximum(f + sweep_alpha(f), 0.0)
        assert np.abs(out.f - expected).max() < 1e-9
