"""Exact lowest two eigenpairs of H(s) for small systems.

The Hamiltonian is never stored densely for n > DENSE_MAX: the transverse
part is applied bit by bit, and ARPACK's implicitly restarted Lanczos
(``scipy.sparse.linalg.eigsh``) extracts the two lowest levels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .hamiltonian import FieldCoefficients, all_energies_halves, decompose
from .sat_instance import Instance

N_CAP = 20
DENSE_MAX = 10
RESIDUAL_TOL = 1e-8


class SpectrumError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectrumResult:
    s: float
    E0: float
    E1: float
    W0: float
    W1: float

    @property
    def gap(self) -> float:
        return self.E1 - self.E0


def _check_n(n: int, cap: int = N_CAP) -> None:
    if n > cap:
        raise SpectrumError(f"n={n} exceeds the exact-diagonalization cap {cap}")


def hamming_weights(n: int) -> np.ndarray:
    idx = np.arange(2**n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).sum(axis=1).astype(float)


def flip_bit(v: np.ndarray, i: int, n: int) -> np.ndarray:
    """Return u with u[z] = v[z ^ (1 << i)]."""
    return v.reshape(2 ** (n - i - 1), 2, 2**i)[:, ::-1, :].reshape(v.shape)


def apply_hamiltonian(
    instance: Instance, coeffs: FieldCoefficients, s: float, v: np.ndarray, diag: np.ndarray | None = None
) -> np.ndarray:
    """w[z] = H0(z) v[z] - sum_i gamma_i v[z ^ e_i]."""
    n = instance.n
    _check_n(n)
    v = np.asarray(v, dtype=float)
    if v.shape != (2**n,):
        raise ValueError(f"state vector must have length {2**n}, got {v.shape}")
    d = decompose(coeffs, s)
    if diag is None:
        diag = s * all_energies_halves(instance) / 2 + d.diagonal_offset
    w = diag * v
    for i, g in enumerate(d.gamma):
        if g != 0.0:
            w -= g * flip_bit(v, i, n)
    return w


def _transverse_matrix(coeffs: FieldCoefficients, n: int) -> sp.csr_matrix:
    """Sparse sum_i (c_i / 2) sigma_x^i."""
    dim = 2**n
    idx = np.arange(dim, dtype=np.int64)
    rows = np.concatenate([idx] * n)
    cols = np.concatenate([idx ^ (1 << i) for i in range(n)])
    vals = np.concatenate([np.full(dim, ci / 2) for ci in coeffs.c])
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


class SpectrumSolver:
    """Reusable operator pieces for scanning many s values of one (instance, coeffs)."""

    def __init__(self, instance: Instance, coeffs: FieldCoefficients | None = None, n_cap: int = N_CAP):
        self.instance = instance
        self.n = instance.n
        _check_n(self.n, n_cap)
        self.coeffs = coeffs or FieldCoefficients.uniform(self.n)
        if self.coeffs.n != self.n:
            raise ValueError("coefficient count does not match n")
        self.energy = all_energies_halves(instance) / 2
        self.weight = hamming_weights(self.n)
        self.csum = float(sum(self.coeffs.c))
        self.X = _transverse_matrix(self.coeffs, self.n)
        u = np.ones(2**self.n)
        w = self.weight - self.n / 2
        # uniform state plus its Hamming-weighted complement; overlaps both
        # complement-even and complement-odd sectors
        self.v0 = u / np.linalg.norm(u) + (w / np.linalg.norm(w) if np.any(w) else 0.0)

    def matrix(self, s: float) -> sp.csr_matrix:
        diag = s * self.energy + (1 - s) * self.csum / 2
        return (sp.diags(diag) - (1 - s) * self.X).tocsr()

    def lowest_two(self, s: float, maxiter: int = 20000) -> SpectrumResult:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"s must lie in [0, 1], got {s}")
        H = self.matrix(s)
        if self.n <= DENSE_MAX:
            vals, vecs = scipy.linalg.eigh(H.toarray(), subset_by_index=[0, 1])
        else:
            try:
                vals, vecs = eigsh(
                    H, k=2, which="SA", v0=self.v0, tol=1e-13, ncv=min(2**self.n, 40), maxiter=maxiter
                )
            except ArpackNoConvergence as exc:
                raise SpectrumError(f"Lanczos did not converge at s={s}") from exc
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
        for k in range(2):
            r = np.linalg.norm(H @ vecs[:, k] - vals[k] * vecs[:, k])
            if r > RESIDUAL_TOL:
                raise SpectrumError(f"residual {r:.2e} above tolerance at s={s}")
        W = (vecs**2).T @ self.weight
        return SpectrumResult(float(s), float(vals[0]), float(vals[1]), float(W[0]), float(W[1]))


def lowest_two(instance: Instance, coeffs: FieldCoefficients | None, s: float) -> SpectrumResult:
    return SpectrumSolver(instance, coeffs).lowest_two(s)


def spectrum_scan(
    instance: Instance, coeffs: FieldCoefficients | None, s_grid: Iterable[float]
) -> list[SpectrumResult]:
    solver = SpectrumSolver(instance, coeffs)
    out = []
    for s in s_grid:
        try:
            out.append(solver.lowest_two(float(s)))
        except SpectrumError as exc:
            raise SpectrumError(f"scan failed at s={s}: {exc}") from exc
    return out


def gap_minimum(
    instance: Instance,
    coeffs: FieldCoefficients | None = None,
    coarse: float = 0.01,
    fine: float = 0.002,
    n_candidates: int = 3,
    s_range: tuple[float, float] = (0.01, 0.99),
    solver: SpectrumSolver | None = None,
) -> SpectrumResult:
    """Location of the smallest gap: coarse scan, then a ``fine`` grid around the best local minima."""
    solver = solver or SpectrumSolver(instance, coeffs)
    lo, hi = s_range
    grid = np.round(np.arange(lo, hi + coarse / 2, coarse), 10)
    rows = [solver.lowest_two(float(s)) for s in grid]
    gaps = np.array([r.gap for r in rows])
    local = [k for k in range(len(gaps)) if (k == 0 or gaps[k] <= gaps[k - 1]) and (k == len(gaps) - 1 or gaps[k] <= gaps[k + 1])]
    local = sorted(local, key=lambda k: gaps[k])[:n_candidates]
    best = min(rows, key=lambda r: r.gap)
    for k in local:
        a, b = max(lo, grid[k] - coarse), min(hi, grid[k] + coarse)
        for s in np.round(np.arange(a, b + fine / 2, fine), 10):
            r = solver.lowest_two(float(s))
            if r.gap < best.gap:
                best = r
    return best


CSV_FIELDS = ("s", "E0", "E1", "gap", "W0", "W1")


def fmt(x: float) -> str:
    return f"{x:.8e}"


def write_spectrum_csv(rows: Sequence[SpectrumResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in rows:
            w.writerow([fmt(r.s), fmt(r.E0), fmt(r.E1), fmt(r.gap), fmt(r.W0), fmt(r.W1)])
