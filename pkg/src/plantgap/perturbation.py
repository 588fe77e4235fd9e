"""Perturbation theory around s = 1 for the two planted states.

Writing H(s) = (1-s) sum c_i/2 + s [H_P - x sum_i c_i sigma_x^i / 2] with
x = (1-s)/s, each planted state's energy has an even expansion in x. The
second-order coefficient of a state z with problem energy E(z) is

    e2(z) = 1/4 sum_i c_i^2 / (E(z) - E(z ^ e_i))

and the crossing is where 1/2 + x^2 (e2_U - e2_L) vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .hamiltonian import FieldCoefficients, energies_halves, problem_energy_halves
from .sat_instance import Instance


class ZeroDenominatorError(ArithmeticError):
    """A neighbour of a planted state is degenerate with it (instance not certified)."""


class CoefficientSearchError(RuntimeError):
    """No coefficient set reached the requested threshold."""


class DegenerateRowError(ValueError):
    pass


LOWER, UPPER = "lower", "upper"


def _flip_neighbours(z: Sequence[int]) -> np.ndarray:
    z = np.asarray(z, dtype=np.int8)
    return z[None, :] ^ np.eye(len(z), dtype=np.int8)


def neighbour_gaps_halves(instance: Instance, z: Sequence[int]) -> np.ndarray:
    """E(z ^ e_i) - E(z) for every i, in half-units."""
    e0 = problem_energy_halves(instance, z)
    gaps = energies_halves(instance, _flip_neighbours(z)) - e0
    if np.any(gaps == 0):
        raise ZeroDenominatorError("a single-flip neighbour is degenerate with the planted state")
    return gaps


def split_plants(instance: Instance) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(z_L, z_U): the unpenalized and the penalized plant."""
    if instance.penalty is None or len(instance.plants) != 2:
        raise ValueError("need a penalized two-plant instance")
    hit = [instance.penalty.fires_on(z) for z in instance.plants]
    if sum(hit) != 1:
        raise ValueError("penalty must fire on exactly one plant")
    up = hit.index(True)
    return instance.plants[1 - up], instance.plants[up]


def _c2(coeffs: FieldCoefficients | None, n: int) -> np.ndarray:
    if coeffs is None:
        return np.ones(n)
    if coeffs.n != n:
        raise ValueError("coefficient count does not match n")
    return coeffs.array() ** 2


def second_order(instance: Instance, z: Sequence[int], coeffs: FieldCoefficients | None = None) -> float:
    gaps = neighbour_gaps_halves(instance, z)
    return float(-0.25 * np.sum(_c2(coeffs, instance.n) * 2.0 / gaps))


def e2(instance: Instance, coeffs: FieldCoefficients | None = None, which: str = LOWER) -> float:
    z_low, z_up = split_plants(instance)
    if which == LOWER:
        return second_order(instance, z_low, coeffs)
    if which == UPPER:
        return second_order(instance, z_up, coeffs)
    raise ValueError(f"which must be {LOWER!r} or {UPPER!r}")


def d_vector(instance: Instance) -> np.ndarray:
    """Per-bit contributions d_i with sum_i c_i^2 d_i = e2_U - e2_L."""
    z_low, z_up = split_plants(instance)
    g_low = neighbour_gaps_halves(instance, z_low)
    g_up = neighbour_gaps_halves(instance, z_up)
    return 0.25 * (2.0 / g_low - 2.0 / g_up)


# fourth order (uniform coefficients only)


def _pair_gaps_halves(instance: Instance, z: Sequence[int]) -> np.ndarray:
    """(n, n) matrix of E(z ^ e_i ^ e_j) - E(z); the diagonal is unused."""
    n = instance.n
    z = np.asarray(z, dtype=np.int8)
    ii, jj = np.triu_indices(n, k=1)
    Z = np.repeat(z[None, :], len(ii), axis=0)
    Z[np.arange(len(ii)), ii] ^= 1
    Z[np.arange(len(ii)), jj] ^= 1
    vals = energies_halves(instance, Z) - problem_energy_halves(instance, z)
    if np.any(vals == 0):
        raise ZeroDenominatorError("a double-flip neighbour is degenerate with the planted state")
    out = np.zeros((n, n), dtype=np.int64)
    out[ii, jj] = vals
    out[jj, ii] = vals
    return out


def clausemates(instance: Instance) -> set[tuple[int, int]]:
    """Ordered zero-based pairs (i, j), i != j, sharing a clause or the penalty."""
    bits, _, _ = instance.weighted_terms()
    pairs = set()
    for b in bits:
        for i in b:
            for j in b:
                if i != j:
                    pairs.add((int(i), int(j)))
    return pairs


def fourth_order_full(instance: Instance, z: Sequence[int]) -> Fraction:
    """e4 from the unrestricted double sums, in exact arithmetic."""
    D1 = [Fraction(int(g), 2) for g in neighbour_gaps_halves(instance, z)]
    D2 = _pair_gaps_halves(instance, z)
    n = instance.n
    total = Fraction(0)
    for i in range(n):
        for j in range(n):
            total += 1 / (D1[i] ** 2 * D1[j])
            if i != j:
                dij = Fraction(int(D2[i, j]), 2)
                total -= 1 / (D1[i] * D1[j] * dij)
                total -= 1 / (D1[i] ** 2 * dij)
    return total / 16


def fourth_order_reduced(instance: Instance, z: Sequence[int]) -> Fraction:
    """e4 keeping only clausemate pairs in the off-diagonal sum, in exact arithmetic."""
    D1 = [Fraction(int(g), 2) for g in neighbour_gaps_halves(instance, z)]
    mates = sorted(clausemates(instance))
    total = sum((1 / d**3 for d in D1), Fraction(0))
    if mates:
        zz = np.asarray(z, dtype=np.int8)
        Z = np.repeat(zz[None, :], len(mates), axis=0)
        for r, (i, j) in enumerate(mates):
            Z[r, i] ^= 1
            Z[r, j] ^= 1
        pair = energies_halves(instance, Z) - problem_energy_halves(instance, z)
        if np.any(pair == 0):
            raise ZeroDenominatorError("a double-flip neighbour is degenerate with the planted state")
        for (i, j), g in zip(mates, pair):
            dij = Fraction(int(g), 2)
            total += (dij - D1[i] - D1[j]) / (D1[i] ** 2 * D1[j] * dij)
    return total / 16


def e4(instance: Instance, which: str = LOWER) -> float:
    """Fourth-order coefficient; both forms are evaluated and must agree exactly."""
    z_low, z_up = split_plants(instance)
    z = {LOWER: z_low, UPPER: z_up}.get(which)
    if z is None:
        raise ValueError(f"which must be {LOWER!r} or {UPPER!r}")
    full = fourth_order_full(instance, z)
    reduced = fourth_order_reduced(instance, z)
    if full != reduced:
        raise ArithmeticError(f"fourth-order forms disagree: {full} vs {reduced}")
    return float(full)


def predict_s_star(delta2: float) -> float | None:
    """Root of 1/2 + x^2 delta2 = 0 with x = (1-s)/s, or None when delta2 >= 0."""
    if not math.isfinite(delta2):
        raise ValueError("delta2 must be finite")
    if delta2 >= 0:
        return None
    x = math.sqrt(-1.0 / (2.0 * delta2))
    return 1.0 / (1.0 + x)


def scaling_factor(n: int, m: int) -> float:
    return n ** (-0.25) * (m / n) ** 0.75


def second_order_energies(e2_low: float, e2_up: float, s: float, csum: float) -> tuple[float, float]:
    """E_L(s), E_U(s) truncated at second order; csum = sum_i c_i."""
    x = (1 - s) / s
    base = (1 - s) * csum / 2
    return base + s * (x * x * e2_low), base + s * (0.5 + x * x * e2_up)


def fourth_order_shift(e4_low: float, e4_up: float, s: float) -> float:
    """Fourth-order contribution to E_U(s) - E_L(s)."""
    x = (1 - s) / s
    return s * x**4 * (e4_up - e4_low)


def select_penalty_target(instance: Instance) -> int:
    """Index of the plant lower near s = 1 (more negative e2); ties go to plant 0."""
    if len(instance.plants) != 2:
        raise ValueError("need a two-plant instance")
    bare = Instance(instance.n, instance.clauses, instance.plants, None)
    e = [second_order(bare, z) for z in bare.plants]
    return 1 if e[1] < e[0] else 0


@dataclass
class PerturbationReport:
    e2_L: float
    e2_U: float
    e4_L: float | None
    e4_U: float | None
    d: np.ndarray
    delta2: float
    s_star: float | None
    weighted: bool = False

    def to_dict(self) -> dict:
        return {
            "e2_L": self.e2_L,
            "e2_U": self.e2_U,
            "e4_L": self.e4_L,
            "e4_U": self.e4_U,
            "d": [float(x) for x in self.d],
            "delta2": self.delta2,
            "s_star": self.s_star,
            "weighted": self.weighted,
        }


def perturbation_report(
    instance: Instance, coeffs: FieldCoefficients | None = None, with_e4: bool = True
) -> PerturbationReport:
    e2_low = e2(instance, coeffs, LOWER)
    e2_up = e2(instance, coeffs, UPPER)
    e4_low = e4_up = None
    if coeffs is None and with_e4:
        e4_low, e4_up = e4(instance, LOWER), e4(instance, UPPER)
    d = d_vector(instance)
    delta2 = e2_up - e2_low
    return PerturbationReport(
        e2_low, e2_up, e4_low, e4_up, d, delta2, predict_s_star(delta2), weighted=coeffs is not None
    )


# randomized beginning Hamiltonian

C2_VALUES = np.array([0.25, 2.25])


def randomized_delta_samples(
    d: Sequence[float], N: int, rng: np.random.Generator, chunk: int = 65536
) -> tuple[np.ndarray, float, float]:
    """N draws of sum_i c_i^2 d_i with c_i uniform on {1/2, 3/2}; returns (samples, mean, variance)."""
    d = np.asarray(d, dtype=float)
    out = np.empty(N)
    for start in range(0, N, chunk):
        k = min(chunk, N - start)
        c2 = C2_VALUES[rng.integers(0, 2, size=(k, len(d)))]
        out[start : start + k] = c2 @ d
    return out, float(out.mean()) if N else 0.0, float(out.var(ddof=1)) if N > 1 else 0.0


def pick_randomized_coeffs(
    d: Sequence[float], threshold: float, rng: np.random.Generator, max_tries: int = 100_000
) -> FieldCoefficients:
    """First random {c_i} whose weighted delta sum_i c_i^2 d_i exceeds ``threshold``."""
    d = np.asarray(d, dtype=float)
    for _ in range(max_tries):
        c = np.where(rng.integers(0, 2, size=len(d)) == 1, 1.5, 0.5)
        if float(c**2 @ d) > threshold:
            return FieldCoefficients(tuple(float(x) for x in c))
    raise CoefficientSearchError(f"no coefficients above {threshold} in {max_tries} tries")


def weighted_delta(d: Sequence[float], coeffs: FieldCoefficients) -> float:
    return float(coeffs.array() ** 2 @ np.asarray(d, dtype=float))


# k planted ground states


def _multi_energy_halves(instance: Instance, Z: np.ndarray, penalized: bool) -> np.ndarray:
    e = energies_halves(instance, Z)
    if penalized:
        # weight-1/2 projectors on bits 1-3 onto every plant except plant 0
        Z = np.atleast_2d(Z)
        base = tuple(instance.plants[0][:3])
        for p in instance.plants[1:]:
            pat = tuple(p[:3])
            if pat != base:
                e = e + np.all(Z[:, :3] == np.array(pat), axis=1).astype(np.int64)
    return e


def multi_plant_d(instance: Instance, r: int, penalized: bool = False) -> np.ndarray:
    """d_{r,i} = 1/4 [-1/H(z_r ^ e_i) + 1/H(z_0 ^ e_i)] for plant r against plant 0.

    By default energies come from the unpenalized clauses; ``penalized`` adds
    a 1/2 projector on bits 1-3 for each plant other than plant 0.
    """
    if not 0 <= r < len(instance.plants):
        raise ValueError(f"no plant with index {r}")
    if instance.penalty is not None:
        instance = Instance(instance.n, instance.clauses, instance.plants, None)

    def denoms(z):
        e0 = _multi_energy_halves(instance, np.asarray(z, dtype=np.int8)[None, :], penalized)[0]
        g = _multi_energy_halves(instance, _flip_neighbours(z), penalized) - e0
        if np.any(g == 0):
            raise ZeroDenominatorError("a single-flip neighbour is degenerate with a plant")
        return g / 2.0

    return 0.25 * (-1.0 / denoms(instance.plants[r]) + 1.0 / denoms(instance.plants[0]))


def multi_plant_d_matrix(instance: Instance, penalized: bool = False) -> np.ndarray:
    """Rows r = 1..k-1 of d_{r,i}."""
    return np.array([multi_plant_d(instance, r, penalized) for r in range(1, len(instance.plants))])


def correlation_matrix(d_matrix: np.ndarray) -> np.ndarray:
    d_matrix = np.atleast_2d(np.asarray(d_matrix, dtype=float))
    norms = np.sqrt(np.sum(d_matrix**2, axis=1))
    if np.any(norms == 0):
        raise DegenerateRowError("a d row has zero norm")
    gram = d_matrix @ d_matrix.T
    corr = gram / np.outer(norms, norms)
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


def empirical_success_prob(
    d_matrix: np.ndarray, N: int, rng: np.random.Generator, chunk: int = 65536
) -> tuple[float, float]:
    """Fraction of random {c_i} with sum_i c_i^2 d_{r,i} > 0 for every row r, with its standard error."""
    d_matrix = np.atleast_2d(np.asarray(d_matrix, dtype=float))
    hits = 0
    for start in range(0, N, chunk):
        k = min(chunk, N - start)
        c2 = C2_VALUES[rng.integers(0, 2, size=(k, d_matrix.shape[1]))]
        hits += int(np.sum(np.all(c2 @ d_matrix.T > 0, axis=1)))
    p = hits / N
    return p, math.sqrt(p * (1 - p) / N)


@dataclass
class MultiPlantReport:
    d_matrix: np.ndarray
    correlations: np.ndarray
    success_prob: float
    success_err: float = field(default=0.0)


def multi_plant_report(
    instance: Instance, N: int, rng: np.random.Generator, penalized: bool = False
) -> MultiPlantReport:
    dm = multi_plant_d_matrix(instance, penalized)
    p, err = empirical_success_prob(dm, N, rng)
    return MultiPlantReport(dm, correlation_matrix(dm), p, err)
