import itertools
import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from plantgap.qmc import TransferMatrix, sample_boundaries, sample_subpath, sample_subpath_batch, transfer_matrix
from plantgap.qmc import kernels


def series_expm(lam, h, c, terms=60):
    """exp(-lam G), G = h sz - c sx, by a truncated Taylor series."""
    G = np.array([[h, -c], [-c, -h]]) * -lam
    out, term = np.eye(2), np.eye(2)
    for k in range(1, terms):
        term = term @ G / k
        out = out + term
    return out


def test_identity_at_zero_length():
    assert transfer_matrix(0.0, 0.3, 1.0).array() == pytest.approx(np.eye(2))


def test_free_spin_entries():
    A = transfer_matrix(1.0, 0.0, 1.0)
    assert A.a00 == pytest.approx(1.5431, abs=1e-4) and A.a01 == pytest.approx(1.1752, abs=1e-4)
    assert np.allclose(A.array(), series_expm(1.0, 0.0, 1.0), atol=1e-12, rtol=0)


lam_st = st.floats(0.0, 4.0)
h_st = st.floats(-3.0, 3.0)
c_st = st.floats(0.01, 3.0)


@settings(max_examples=200, deadline=None)
@given(lam_st, h_st, c_st)
def test_closed_form_matches_series(lam, h, c):
    A = transfer_matrix(lam, h, c)
    assert np.allclose(A.array(), series_expm(lam, h, c), rtol=1e-10, atol=1e-12)
    # det = a00 a11 - a01^2 cancels; allow rounding relative to the products
    assert A.det == pytest.approx(1.0, abs=1e-11 * A.a00 * A.a11 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(lam_st, lam_st, h_st, c_st)
def test_semigroup(l1, l2, h, c):
    A = transfer_matrix(l1 + l2, h, c).array()
    B = transfer_matrix(l2, h, c).array() @ transfer_matrix(l1, h, c).array()
    assert np.allclose(A, B, rtol=1e-12, atol=1e-12 * np.abs(A).max())


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 50.0), h_st, c_st)
def test_scaled_kernel_matches_cosh_form(lam, h, c):
    w = math.hypot(h, c)
    a00, a01, a11 = kernels.scaled_transfer(lam, h, c)
    # textbook cosh/sinh form times exp(-lam w); only compare where it is well conditioned
    ch, sh = math.cosh(lam * w) * math.exp(-lam * w), math.sinh(lam * w) * math.exp(-lam * w)
    assert a01 == pytest.approx(c / w * sh, rel=1e-9, abs=1e-300)
    assert a00 == pytest.approx(ch - h / w * sh, rel=1e-6, abs=1e-12)
    assert a11 == pytest.approx(ch + h / w * sh, rel=1e-6, abs=1e-12)


def test_scaled_kernel_no_overflow():
    a00, a01, a11 = kernels.scaled_transfer(300.0, 5.0, 1.0)
    assert all(np.isfinite([a00, a01, a11])) and a11 == pytest.approx(0.5 * (1 + 5 / math.hypot(5, 1)), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(h_st, c_st)
def test_difference_of_squares(h, c):
    w = math.hypot(h, c)
    assert (w + h) * (w - h) == pytest.approx(c * c, rel=1e-9, abs=1e-12)
    assert kernels.flip_rate(h, c, 0) * kernels.flip_rate(h, c, 1) == pytest.approx(c * c, rel=1e-12)


def test_boundary_single_symmetric():
    out = sample_boundaries([transfer_matrix(2.0, 0.0, 1.0)], np.random.default_rng(0), size=100_000)
    assert abs(out[:, 0].mean() - 0.5) < 0.01


def enumerate_boundaries(mats):
    probs = {}
    for bits in itertools.product((0, 1), repeat=len(mats)):
        w = 1.0
        for i, A in enumerate(mats):
            w *= A.array()[bits[(i + 1) % len(mats)], bits[i]]
        probs[bits] = w
    z = sum(probs.values())
    return {k: v / z for k, v in probs.items()}


def test_boundary_q2_tv():
    mats = [transfer_matrix(0.7, 0.4, 1.0), transfer_matrix(1.3, -0.8, 1.0), transfer_matrix(0.4, 1.5, 1.0)]
    exact = enumerate_boundaries(mats)
    draws = sample_boundaries(mats, np.random.default_rng(1), size=1_000_000)
    codes = draws @ np.array([1, 2, 4])
    freq = np.bincount(codes, minlength=8) / len(codes)
    tv = 0.5 * sum(abs(freq[b[0] + 2 * b[1] + 4 * b[2]] - p) for b, p in exact.items())
    assert tv < 0.005


def test_boundary_large_beta_dominant_state():
    h = c = 1.0
    lam = 6 / math.hypot(h, c)
    A = transfer_matrix(lam, h, c)
    v1 = 0.5 * (1 + h / math.hypot(h, c))  # ground-state weight on |1>
    draws = sample_boundaries([A], np.random.default_rng(2), size=200_000)
    p1 = draws[:, 0].mean()
    assert p1 == pytest.approx(A.a11 / (A.a00 + A.a11), abs=4e-3)
    assert p1 / v1 > 0.99


def test_boundary_stable_for_long_chains():
    mats = [transfer_matrix(3.0, (-1) ** k * 2.0, 0.5) for k in range(200)]
    out = sample_boundaries(mats, np.random.default_rng(3))
    assert out.shape == (200,) and set(np.unique(out)) <= {0, 1}


@pytest.mark.parametrize("s_in,s_out", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_subpath_parity_and_range(s_in, s_out):
    rng = np.random.default_rng(4)
    for _ in range(500):
        tau = sample_subpath(1.5, 0.3, 1.2, s_in, s_out, rng)
        assert len(tau) % 2 == (s_in ^ s_out)
        assert np.all(np.diff(tau) > 0) and np.all((tau > 0) & (tau < 1.5))


def test_subpath_zero_flip_probability():
    h, c, lam = 0.5, 1.0, 1.0
    N = 1_000_000
    ws, _, _ = sample_subpath_batch(lam, h, c, 0, 0, np.random.default_rng(5), N)
    p = math.exp(-h * lam) / transfer_matrix(lam, h, c).a00
    emp = np.mean(ws == 0)
    assert abs(emp - p) < 3 * math.sqrt(p * (1 - p) / N)


def test_subpath_single_flip_density():
    h, c, lam = 0.5, 1.0, 1.0
    ws, first, _ = sample_subpath_batch(lam, h, c, 0, 1, np.random.default_rng(6), 400_000)
    tau = first[ws == 1]
    edges = np.linspace(0, lam, 21)
    # g(tau) ~ exp(-h (tau - (lam - tau))) = exp(h lam) exp(-2 h tau)
    cdf = lambda t: 1 - np.exp(-2 * h * t)
    expected = np.diff(cdf(edges)) / cdf(lam) * len(tau)
    observed = np.histogram(tau, bins=edges)[0]
    assert scipy.stats.chisquare(observed, expected).pvalue > 1e-3


@pytest.mark.parametrize("lam,h,c", [(1.0, 0.5, 1.0), (2.0, -1.0, 0.5), (0.5, 2.0, 1.5)])
@pytest.mark.parametrize("s_in,s_out", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_subpath_acceptance_probability(lam, h, c, s_in, s_out):
    """Free-process end-point probability: e^{-lam omega} <s_out|A|s_in>, times rate(s_in)/c when it flips."""
    A = transfer_matrix(lam, h, c).array()
    omega = math.hypot(h, c)
    p = math.exp(-lam * omega) * A[s_out, s_in]
    if s_in != s_out:
        p *= kernels.flip_rate(h, c, s_in) / c
    N = 100_000
    _, _, attempts = sample_subpath_batch(lam, h, c, s_in, s_out, np.random.default_rng(7), N)
    emp = N / attempts
    assert abs(emp - p) < 4 * math.sqrt(p * (1 - p) / attempts) + 1e-12


def test_subpath_zero_coupling():
    assert len(sample_subpath(1.0, 0.4, 0.0, 1, 1, np.random.default_rng(0))) == 0


def test_subpath_retry_cap():
    from plantgap.qmc import SamplerError

    with pytest.raises(SamplerError):
        sample_subpath(50.0, 3.0, 0.05, 1, 0, np.random.default_rng(0), max_attempts=3)


def test_transfer_validation():
    with pytest.raises(ValueError):
        transfer_matrix(-1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        sample_boundaries([TransferMatrix(1.0, 0.2, 0.3, 1.0)], np.random.default_rng(0))
