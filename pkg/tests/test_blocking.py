import numpy as np
import pytest

from plantgap.qmc import blocking


def ar1(phi, n, rng):
    x = np.empty(n)
    x[0] = rng.normal()
    e = rng.normal(size=n) * np.sqrt(1 - phi**2)
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    return x


def test_iid_error():
    x = np.random.default_rng(0).normal(size=2**14)
    r = blocking(x)
    assert r.error == pytest.approx(1 / np.sqrt(len(x)), rel=0.3)
    assert r.errors[0] == pytest.approx(x.std(ddof=1) / np.sqrt(len(x)))


def test_correlated_error_grows():
    phi = 0.9
    x = ar1(phi, 2**16, np.random.default_rng(1))
    r = blocking(x)
    true = np.sqrt((1 + phi) / (1 - phi) / len(x))
    assert r.error == pytest.approx(true, rel=0.35)
    assert r.error > 3 * r.errors[0]


def test_block_rule():
    r = blocking(np.arange(1000.0))
    assert r.n_blocks >= 32 and r.n_blocks < 64
    assert r.block_size * r.n_blocks <= 1000


def test_too_short():
    with pytest.raises(ValueError):
        blocking([1.0])
