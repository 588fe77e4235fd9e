"""Planted 3SAT instances: generation, certification and the weight-1/2 penalty.

A clause is stored as the single *disallowed* assignment of three bits, so a
bit string violates the clause exactly when it matches the pattern on those
bits. Spin indices are 1-based throughout, matching DIMACS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .dpll import dpll_solve, satisfies

#: disallowed patterns usable when both all-zeros and all-ones must satisfy
ALLOWED_PATTERNS = ((1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1))

PENALTY_WEIGHT = 0.5


class GenerationLimitError(RuntimeError):
    """Clause cap reached before the instance was certified."""


@dataclass(frozen=True)
class Clause:
    bits: tuple[int, int, int]
    pattern: tuple[int, int, int]

    def __post_init__(self):
        if len(set(self.bits)) != 3:
            raise ValueError(f"clause bits must be distinct, got {self.bits}")
        if any(p not in (0, 1) for p in self.pattern):
            raise ValueError(f"pattern must be binary, got {self.pattern}")

    def violated_by(self, z: Sequence[int]) -> bool:
        return all(z[b - 1] == p for b, p in zip(self.bits, self.pattern))

    def to_cnf(self) -> tuple[int, int, int]:
        """The CNF clause falsified exactly by ``pattern``."""
        return tuple(-b if p else b for b, p in zip(self.bits, self.pattern))


@dataclass(frozen=True)
class PenaltyTerm:
    """Weight-1/2 projector onto ``target_pattern`` on three bits."""

    bits: tuple[int, int, int] = (1, 2, 3)
    target_pattern: tuple[int, int, int] = (0, 0, 0)
    weight: float = PENALTY_WEIGHT

    def fires_on(self, z: Sequence[int]) -> bool:
        return all(z[b - 1] == p for b, p in zip(self.bits, self.target_pattern))


@dataclass(frozen=True)
class Instance:
    n: int
    clauses: tuple[Clause, ...]
    plants: tuple[tuple[int, ...], ...] = ()
    penalty: PenaltyTerm | None = None
    certified: bool = field(default=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.clauses)

    def cnf(self) -> list[tuple[int, int, int]]:
        return [c.to_cnf() for c in self.clauses]

    def satisfied_by(self, z: Sequence[int]) -> bool:
        return not any(c.violated_by(z) for c in self.clauses)

    def clause_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(m, 3) zero-based bit indices and (m, 3) disallowed patterns."""
        if not self.clauses:
            return np.zeros((0, 3), dtype=np.int64), np.zeros((0, 3), dtype=np.int8)
        bits = np.array([c.bits for c in self.clauses], dtype=np.int64) - 1
        pats = np.array([c.pattern for c in self.clauses], dtype=np.int8)
        return bits, pats

    def weighted_terms(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Clauses plus the penalty as projector terms with weights in half-units.

        Clauses weigh 2 half-units, the penalty 1, so every diagonal energy is
        an exact integer count of halves.
        """
        bits, pats = self.clause_arrays()
        weights = np.full(len(bits), 2, dtype=np.int64)
        if self.penalty is not None:
            bits = np.vstack([bits, np.array(self.penalty.bits, dtype=np.int64) - 1])
            pats = np.vstack([pats, np.array(self.penalty.target_pattern, dtype=np.int8)])
            weights = np.append(weights, 1)
        return bits, pats, weights


def zeros(n: int) -> tuple[int, ...]:
    return (0,) * n


def ones(n: int) -> tuple[int, ...]:
    return (1,) * n


def default_clause_cap(n: int) -> int:
    return math.ceil(20 * n * math.log(n))


def blocking_clause(z: Sequence[int]) -> tuple[int, ...]:
    """CNF clause excluding exactly the assignment ``z``."""
    return tuple(-(i + 1) if b else (i + 1) for i, b in enumerate(z))


def certify_plants(instance: Instance, max_decisions: int = 1_000_000) -> bool:
    """True iff the plants are the only models of the instance's clauses.

    Raises ``SolverBudgetExceeded`` if DPLL runs out of decisions.
    """
    for z in instance.plants:
        if not instance.satisfied_by(z):
            raise ValueError(f"plant {''.join(map(str, z))} violates the instance")
    cnf = instance.cnf() + [blocking_clause(z) for z in instance.plants]
    return dpll_solve(cnf, instance.n, max_decisions) is None


def certify_exactly_two(instance: Instance, max_decisions: int = 1_000_000) -> bool:
    """True iff all-zeros and all-ones are the only satisfying assignments."""
    if len(instance.plants) != 2:
        raise ValueError("double-plant certification needs exactly two plants")
    return certify_plants(instance, max_decisions)


def _random_triple(n: int, rng: np.random.Generator) -> tuple[int, int, int]:
    return tuple(sorted(int(b) + 1 for b in rng.choice(n, size=3, replace=False)))


def _grow_until_certified(n, plants, draw_clause, rng, cap, max_decisions) -> Instance:
    clauses: list[Clause] = []
    blocks = [blocking_clause(z) for z in plants]
    witness = None
    for _ in range(cap):
        clause = draw_clause()
        clauses.append(clause)
        # a surviving witness is a third model, so the instance is not yet certified
        if witness is not None and not clause.violated_by(witness):
            continue
        cnf = [c.to_cnf() for c in clauses] + blocks
        witness = dpll_solve(cnf, n, max_decisions)
        if witness is None:
            return Instance(n, tuple(clauses), tuple(plants), None, certified=True)
    raise GenerationLimitError(f"no certified instance within {cap} clauses (n={n})")


def generate_double_plant(
    n: int,
    rng: np.random.Generator,
    clause_cap: int | None = None,
    max_decisions: int = 1_000_000,
) -> Instance:
    """Add uniformly random clauses consistent with 00..0 and 11..1 until they are the only models."""
    if n < 3:
        raise ValueError("need n >= 3")
    cap = default_clause_cap(n) if clause_cap is None else clause_cap

    def draw():
        bits = _random_triple(n, rng)
        pattern = ALLOWED_PATTERNS[int(rng.integers(len(ALLOWED_PATTERNS)))]
        return Clause(bits, pattern)

    return _grow_until_certified(n, (zeros(n), ones(n)), draw, rng, cap, max_decisions)


def generate_multi_plant(
    n: int,
    k: int,
    rng: np.random.Generator,
    min_distance: int | None = None,
    clause_cap: int | None = None,
    max_decisions: int = 1_000_000,
) -> Instance:
    """Random instance whose only models are ``k`` mutually distant random strings.

    Plant 0 is all-zeros; the others are uniform strings at pairwise Hamming
    distance at least ``min_distance`` (default ``n // 4``). Each clause picks
    a uniform triple and a uniform pattern among those no plant takes on it.
    """
    if n < 3 or k < 1:
        raise ValueError("need n >= 3 and k >= 1")
    dmin = n // 4 if min_distance is None else min_distance
    plants = [zeros(n)]
    while len(plants) < k:
        z = tuple(int(b) for b in rng.integers(0, 2, size=n))
        if all(sum(a != b for a, b in zip(z, p)) >= dmin for p in plants):
            plants.append(z)
    cap = default_clause_cap(n) if clause_cap is None else clause_cap
    all_patterns = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]

    def draw():
        while True:
            bits = _random_triple(n, rng)
            taken = {tuple(p[b - 1] for b in bits) for p in plants}
            free = [w for w in all_patterns if w not in taken]
            if free:
                return Clause(bits, free[int(rng.integers(len(free)))])

    return _grow_until_certified(n, tuple(plants), draw, rng, cap, max_decisions)


def add_penalty(instance: Instance, target: int, bits: tuple[int, int, int] = (1, 2, 3)) -> Instance:
    """Penalize plant ``target`` (index into ``instance.plants``) by 1/2 on three bits."""
    if not 0 <= target < len(instance.plants):
        raise ValueError(f"no plant with index {target}")
    z = instance.plants[target]
    pattern = tuple(z[b - 1] for b in bits)
    for k, other in enumerate(instance.plants):
        if k != target and tuple(other[b - 1] for b in bits) == pattern:
            raise ValueError("penalty bits do not separate the target from another plant")
    return replace(instance, penalty=PenaltyTerm(tuple(bits), pattern, PENALTY_WEIGHT))


def brute_force_models(instance: Instance) -> list[tuple[int, ...]]:
    """All satisfying assignments by enumeration (test oracle, small n only)."""
    n = instance.n
    idx = np.arange(2**n, dtype=np.int64)
    Z = ((idx[:, None] >> np.arange(n)) & 1).astype(np.int8)
    ok = np.ones(2**n, dtype=bool)
    for c in instance.clauses:
        hit = np.ones(2**n, dtype=bool)
        for b, p in zip(c.bits, c.pattern):
            hit &= Z[:, b - 1] == p
        ok &= ~hit
    return [tuple(int(x) for x in Z[i]) for i in np.flatnonzero(ok)]


def model_check(cnf: Iterable[Sequence[int]], model: Sequence[int]) -> bool:
    return satisfies(list(cnf), model)
