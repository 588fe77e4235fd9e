"""Diagonal energies and transverse-field coefficients of H(s) = (1-s) H_B + s H_P.

The beginning Hamiltonian is ``sum_i c_i (1 - sigma_x^i) / 2``; with all
``c_i = 1`` this is the standard choice. Splitting H(s) = H0 + V gives

    H0 = s H_P + (1-s) sum_i c_i / 2        (diagonal)
    V  = -sum_i gamma_i sigma_x^i,  gamma_i = (1-s) c_i / 2

Problem energies are kept as integer counts of half-units (clause = 2,
penalty = 1) and only converted to floats at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .sat_instance import Instance


@dataclass(frozen=True)
class FieldCoefficients:
    c: tuple[float, ...]

    def __post_init__(self):
        if any(not (ci > 0) for ci in self.c):
            raise ValueError("transverse coefficients must be strictly positive")

    @classmethod
    def uniform(cls, n: int) -> "FieldCoefficients":
        return cls((1.0,) * n)

    @classmethod
    def randomized(cls, n: int, rng: np.random.Generator) -> "FieldCoefficients":
        """Each c_i is 1/2 or 3/2 with equal probability."""
        return cls(tuple(float(x) for x in rng.choice([0.5, 1.5], size=n)))

    @property
    def n(self) -> int:
        return len(self.c)

    def array(self) -> np.ndarray:
        return np.asarray(self.c, dtype=float)


@dataclass(frozen=True)
class Decomposition:
    s: float
    diagonal_offset: float
    gamma: np.ndarray


def decompose(coeffs: FieldCoefficients, s: float) -> Decomposition:
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    c = coeffs.array()
    return Decomposition(s, (1 - s) * c.sum() / 2, (1 - s) * c / 2)


def _as_bits(z: Sequence[int], n: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.int8)
    if z.shape != (n,):
        raise ValueError(f"bit string must have length {n}, got shape {z.shape}")
    return z


def energies_halves(instance: Instance, Z: np.ndarray) -> np.ndarray:
    """Problem energies, in half-units, of each row of a (K, n) 0/1 array."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.int8))
    bits, pats, weights = instance.weighted_terms()
    if len(bits) == 0:
        return np.zeros(len(Z), dtype=np.int64)
    hit = np.all(Z[:, bits] == pats[None, :, :], axis=2)
    return hit.astype(np.int64) @ weights


def problem_energy_halves(instance: Instance, z: Sequence[int]) -> int:
    return int(energies_halves(instance, _as_bits(z, instance.n)[None, :])[0])


def problem_energy(instance: Instance, z: Sequence[int]) -> float:
    """Violated clauses (with multiplicity) plus 1/2 if the penalty fires."""
    return problem_energy_halves(instance, z) / 2


def basis_bits(n: int) -> np.ndarray:
    """(2^n, n) array of basis states; spin i is bit i-1 of the state index."""
    idx = np.arange(2**n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.int8)


def all_energies_halves(instance: Instance) -> np.ndarray:
    """Problem energy of every basis state, indexed as in :func:`basis_bits`."""
    n = instance.n
    bits, pats, weights = instance.weighted_terms()
    idx = np.arange(2**n, dtype=np.int64)
    out = np.zeros(2**n, dtype=np.int64)
    for b, p, w in zip(bits, pats, weights):
        hit = np.ones(2**n, dtype=bool)
        for bk, pk in zip(b, p):
            hit &= ((idx >> bk) & 1) == pk
        out += w * hit
    return out


def diag_energy(instance: Instance, coeffs: FieldCoefficients, s: float, z: Sequence[int]) -> float:
    d = decompose(coeffs, s)
    return s * problem_energy(instance, z) + d.diagonal_offset


@dataclass(frozen=True)
class TermIndex:
    """Flat projector terms plus per-spin incidence lists (CSR layout)."""

    bits: np.ndarray  # (T, 3) zero-based
    pats: np.ndarray  # (T, 3)
    weights: np.ndarray  # (T,) half-units
    inc_ptr: np.ndarray  # (n + 1,)
    inc_idx: np.ndarray  # term ids touching each spin
    pair_ptr: np.ndarray  # (n * n + 1,) row j * n + k: terms containing both j and k
    pair_data: np.ndarray  # (P, 4): third spin l, pattern of k, pattern of l, signed weight for j


@lru_cache(maxsize=64)
def term_index(instance: Instance) -> TermIndex:
    bits, pats, weights = instance.weighted_terms()
    lists: list[list[int]] = [[] for _ in range(instance.n)]
    for t, b in enumerate(bits):
        for spin in set(int(x) for x in b):
            lists[spin].append(t)
    ptr = np.zeros(instance.n + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(l) for l in lists])
    idx = np.array([t for l in lists for t in l], dtype=np.int64)
    n = instance.n
    pairs: list[list[tuple[int, int, int, int]]] = [[] for _ in range(n * n)]
    for t, (b, p) in enumerate(zip(bits, pats)):
        for a in range(3):
            sw = int(weights[t]) if p[a] == 0 else -int(weights[t])
            for c in range(3):
                if c != a:
                    l = 3 - a - c
                    pairs[int(b[a]) * n + int(b[c])].append((int(b[l]), int(p[c]), int(p[l]), sw))
    pptr = np.zeros(n * n + 1, dtype=np.int64)
    pptr[1:] = np.cumsum([len(l) for l in pairs])
    pdata = np.array([e for l in pairs for e in l], dtype=np.int64).reshape(-1, 4)
    return TermIndex(
        np.ascontiguousarray(bits, dtype=np.int64),
        np.ascontiguousarray(pats, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.int64),
        ptr,
        idx,
        pptr,
        pdata,
    )


def local_field_halves(instance: Instance, j: int, z: Sequence[int]) -> int:
    """E(z with bit j = 0) - E(z with bit j = 1) in half-units, using only terms on spin j.

    ``j`` is 1-based; the current value of bit j in ``z`` is ignored.
    """
    ti = term_index(instance)
    z = _as_bits(z, instance.n)
    spin = j - 1
    total = 0
    for t in ti.inc_idx[ti.inc_ptr[spin] : ti.inc_ptr[spin + 1]]:
        match = True
        pat_j = 0
        for b, p in zip(ti.bits[t], ti.pats[t]):
            if b == spin:
                pat_j = p
            elif z[b] != p:
                match = False
                break
        if match:
            total += ti.weights[t] if pat_j == 0 else -ti.weights[t]
    return int(total)


def field_coefficient(
    instance: Instance, s: float, coeffs: FieldCoefficients, j: int, z_other: Sequence[int]
) -> float:
    """Coefficient f_j of sigma_z^j in H0 = g_j + f_j sigma_z^j on the given other bits.

    ``z_other`` is a full length-n string; bit j is ignored. The diagonal
    offset does not depend on bit j, so ``coeffs`` only fixes the convention.
    """
    if not 1 <= j <= instance.n:
        raise ValueError(f"spin index {j} out of range")
    return s * local_field_halves(instance, j, z_other) / 4
