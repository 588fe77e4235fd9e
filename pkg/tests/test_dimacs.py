from collections import Counter

import numpy as np
import pytest

from plantgap.dimacs import DimacsParseError, from_dimacs, read_instance, to_dimacs, write_instance
from plantgap.sat_instance import add_penalty, generate_double_plant


@pytest.fixture(scope="module")
def inst():
    return add_penalty(generate_double_plant(8, np.random.default_rng(8)), 1)


def test_round_trip(inst, tmp_path):
    p = tmp_path / "a.cnf"
    write_instance(inst, p)
    back = read_instance(p)
    assert Counter(back.clauses) == Counter(inst.clauses)
    assert back.plants == inst.plants and back.penalty == inst.penalty and back.n == inst.n


def test_clause_line(inst):
    text = to_dimacs(inst)
    assert "c penalty 1 2 3 1 1 1 0.5" in text
    assert f"p cnf 8 {inst.m}" in text


def test_header_mismatch():
    with pytest.raises(DimacsParseError):
        from_dimacs("p cnf 3 2\n-1 2 3 0\n")


@pytest.mark.parametrize("body", ["p cnf 3 1\n-1 2 4 0\n", "p cnf 3 1\n1 2 0\n", "1 2 3 0\n"])
def test_malformed(body):
    with pytest.raises(DimacsParseError):
        from_dimacs(body)
