import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import six_pattern_instance
from plantgap.hamiltonian import (
    FieldCoefficients,
    all_energies_halves,
    decompose,
    diag_energy,
    field_coefficient,
    problem_energy,
)
from plantgap.sat_instance import Instance, add_penalty, generate_double_plant


def test_problem_energy_examples(hand):
    bare = six_pattern_instance()
    assert problem_energy(bare, (0, 0, 0)) == 0
    assert problem_energy(hand, (0, 0, 0)) == 0.5
    assert problem_energy(bare, (1, 1, 0)) == 1


def test_diag_energy_examples(hand):
    u = FieldCoefficients.uniform(3)
    z = (1, 0, 1)
    assert diag_energy(hand, u, 1.0, z) == problem_energy(hand, z)
    assert diag_energy(hand, u, 0.0, z) == 1.5
    assert diag_energy(hand, u, 0.5, (0, 0, 0)) == pytest.approx(1.0, abs=0)


def test_s_out_of_range():
    with pytest.raises(ValueError):
        decompose(FieldCoefficients.uniform(2), 1.5)


def test_coefficients_positive():
    with pytest.raises(ValueError):
        FieldCoefficients((1.0, 0.0))


def test_field_zero_clauses():
    inst = Instance(4, ())
    u = FieldCoefficients.uniform(4)
    for j in range(1, 5):
        assert field_coefficient(inst, 0.7, u, j, (1, 0, 1, 1)) == 0


def test_field_hand_example(hand):
    assert field_coefficient(hand, 1.0, FieldCoefficients.uniform(3), 1, (0, 0, 0)) == -0.25


def test_energies_are_half_integers():
    inst = add_penalty(generate_double_plant(9, np.random.default_rng(1)), 0)
    e = all_energies_halves(inst)
    assert e.dtype.kind == "i"
    assert e.min() == 0 and np.count_nonzero(e == 0) == 1


@pytest.fixture(scope="module")
def pool():
    out = []
    for seed in range(10):
        inst = generate_double_plant(8, np.random.default_rng(seed))
        out.append(add_penalty(inst, seed % 2))
    return out


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 9), st.integers(0, 255), st.integers(1, 8), st.floats(0, 1), st.integers(0, 2**16))
def test_field_matches_two_sided_difference(pool, k, idx, j, s, cseed):
    inst = pool[k]
    coeffs = FieldCoefficients.randomized(8, np.random.default_rng(cseed))
    z = [(idx >> i) & 1 for i in range(8)]
    z0, z1 = list(z), list(z)
    z0[j - 1], z1[j - 1] = 0, 1
    e0, e1 = diag_energy(inst, coeffs, s, z0), diag_energy(inst, coeffs, s, z1)
    f = field_coefficient(inst, s, coeffs, j, z)
    g = (e0 + e1) / 2
    sigma = 1 if z[j - 1] == 0 else -1
    assert f == pytest.approx((e0 - e1) / 2, abs=1e-12)
    assert diag_energy(inst, coeffs, s, z) == pytest.approx(g + f * sigma, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 9), st.integers(0, 255))
def test_diag_energy_affine_in_s(pool, k, idx):
    inst = pool[k]
    u = FieldCoefficients.uniform(8)
    z = [(idx >> i) & 1 for i in range(8)]
    e = [diag_energy(inst, u, s, z) for s in (0.0, 0.37, 1.0)]
    assert e[1] == pytest.approx(e[0] + 0.37 * (e[2] - e[0]), abs=1e-12)


def test_zero_energy_iff_unpenalized_model(pool):
    for inst in pool:
        bare = Instance(inst.n, inst.clauses, inst.plants)
        for idx in range(256):
            z = [(idx >> i) & 1 for i in range(8)]
            zero = problem_energy(inst, z) == 0
            assert zero == (bare.satisfied_by(z) and not inst.penalty.fires_on(z))
