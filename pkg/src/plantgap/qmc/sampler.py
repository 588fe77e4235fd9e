"""Continuous imaginary-time worldline QMC for H(s) with a heat-bath update.

Each update picks one spin, removes its worldline and redraws it from the
exact conditional distribution given all other spins: boundary values at
every flip time of the other spins come from products of 2x2 transfer
matrices, and each interval is filled by an exponential-waiting-time
rejection sampler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..hamiltonian import FieldCoefficients, decompose, term_index
from ..sat_instance import Instance
from . import kernels
from .blocking import blocking


class SamplerError(RuntimeError):
    pass


class InsufficientSamplesError(ValueError):
    pass


def _raise_for(status: int) -> None:
    if status == kernels.ERR_RETRY_CAP:
        raise SamplerError("subpath rejection sampler hit its retry cap")
    if status == kernels.ERR_DEGENERATE:
        raise SamplerError("boundary distribution degenerate (normalizer vanished)")


@dataclass
class WorldlinePath:
    beta: float
    start: np.ndarray
    flips: list[np.ndarray]

    @property
    def n(self) -> int:
        return len(self.start)

    @property
    def m(self) -> int:
        return int(sum(len(f) for f in self.flips))

    def validate(self) -> None:
        if len(self.flips) != self.n:
            raise ValueError("one flip list per spin required")
        for j, f in enumerate(self.flips):
            if len(f) % 2:
                raise ValueError(f"spin {j + 1} has an odd number of flips")
            if len(f) and (f[0] < 0 or f[-1] >= self.beta):
                raise ValueError(f"spin {j + 1} has flips outside [0, beta)")
            if np.any(np.diff(f) <= 0):
                raise ValueError(f"spin {j + 1} flips are not strictly increasing")

    def bits_at(self, t: float) -> np.ndarray:
        z = self.start.copy()
        for j, f in enumerate(self.flips):
            z[j] ^= int(np.searchsorted(f, t, side="right")) & 1
        return z

    def pack(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        counts = np.array([len(f) for f in self.flips], dtype=np.int64)
        cap = max(16, int(2 * counts.max(initial=0)))
        times = np.zeros((self.n, cap))
        for j, f in enumerate(self.flips):
            times[j, : len(f)] = f
        return np.ascontiguousarray(self.start, dtype=np.int8).copy(), times, counts

    @classmethod
    def unpack(cls, beta, start, times, counts) -> "WorldlinePath":
        return cls(float(beta), start.copy(), [times[j, : counts[j]].copy() for j in range(len(start))])


def init_seed_path(z: Sequence[int], beta: float) -> WorldlinePath:
    """Constant path at bit string ``z`` (no flips)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    z = np.asarray(z, dtype=np.int8)
    return WorldlinePath(float(beta), z.copy(), [np.zeros(0) for _ in range(len(z))])


@dataclass(frozen=True)
class Segment:
    start: float
    length: float
    h: float


@dataclass(frozen=True)
class TransferMatrix:
    """Entries of exp(-lambda (h sigma_z - c sigma_x)) in the {|0>, |1>} basis."""

    a00: float
    a01: float
    a10: float
    a11: float

    def array(self) -> np.ndarray:
        return np.array([[self.a00, self.a01], [self.a10, self.a11]])

    @property
    def det(self) -> float:
        return self.a00 * self.a11 - self.a01 * self.a10


def _terms(instance: Instance):
    ti = term_index(instance)
    return ti.inc_ptr, ti.inc_idx, ti.bits, ti.pats, ti.weights, ti.pair_ptr, ti.pair_data


def segments_for_spin(path: WorldlinePath, j: int, instance: Instance, coeffs: FieldCoefficients | None, s: float) -> list[Segment]:
    """Segments of [0, beta] cut at every flip of spins other than ``j`` (1-based), with local fields."""
    if not 1 <= j <= path.n:
        raise ValueError(f"spin index {j} out of range")
    start, times, counts = path.pack()
    bounds, lens, fields = kernels.build_segments(j - 1, start, times, counts, path.beta, s, *_terms(instance))
    return [Segment(float(b), float(l), float(h)) for b, l, h in zip(bounds, lens, fields)]


def transfer_matrix(lam: float, h: float, c: float) -> TransferMatrix:
    if lam < 0 or c < 0:
        raise ValueError("need lambda >= 0 and c >= 0")
    a00, a01, a11 = kernels.scaled_transfer(float(lam), float(h), float(c))
    scale = np.exp(lam * np.hypot(h, c))
    return TransferMatrix(a00 * scale, a01 * scale, a01 * scale, a11 * scale)


def _scaled(matrices: Sequence[TransferMatrix]):
    a = np.array([[m.a00, m.a01, m.a11] for m in matrices], dtype=float)
    for m in matrices:
        if not np.isclose(m.a01, m.a10):
            raise ValueError("transfer matrices must be symmetric")
    a /= a.max(axis=1, keepdims=True)
    return np.ascontiguousarray(a[:, 0]), np.ascontiguousarray(a[:, 1]), np.ascontiguousarray(a[:, 2])


def sample_boundaries(matrices: Sequence[TransferMatrix], rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Boundary bits s_0..s_q drawn jointly with weight prod_i <s_{i+1}|A_i|s_i>, s_{q+1} = s_0."""
    a00, a01, a11 = _scaled(matrices)
    if size is None:
        out = np.empty(len(matrices), dtype=np.int64)
        _raise_for(kernels.sample_boundaries_scaled(a00, a01, a11, rng, out))
        return out
    res, st = kernels.boundary_batch(a00, a01, a11, rng, size)
    _raise_for(st)
    return res


def sample_subpath(
    lam: float, h: float, c: float, s_in: int, s_out: int, rng: np.random.Generator, max_attempts: int = 10**6
) -> np.ndarray:
    """Flip offsets in (0, lam) for one interval with fixed end values."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    buf, w, _, st = kernels.sample_subpath_into(lam, h, c, int(s_in), int(s_out), rng, max_attempts, np.empty(64))
    _raise_for(st)
    return buf[:w].copy()


def sample_subpath_batch(
    lam: float, h: float, c: float, s_in: int, s_out: int, rng: np.random.Generator, size: int, max_attempts: int = 10**6
) -> tuple[np.ndarray, np.ndarray, int]:
    """Flip counts and first flip offsets (nan when none) of ``size`` accepted draws, plus total attempts."""
    ws, first, attempts, st = kernels.subpath_batch(lam, h, c, int(s_in), int(s_out), rng, max_attempts, size)
    _raise_for(st)
    return ws, first, int(attempts)


class Chain:
    """Packed Markov-chain state plus the instance data the kernels need."""

    def __init__(self, path: WorldlinePath, instance: Instance, coeffs: FieldCoefficients | None, s: float, max_attempts: int = 10**6):
        coeffs = coeffs or FieldCoefficients.uniform(instance.n)
        if coeffs.n != instance.n or path.n != instance.n:
            raise ValueError("path, instance and coefficients disagree on n")
        self.instance = instance
        self.coeffs = coeffs
        self.s = float(s)
        self.decomp = decompose(coeffs, s)
        self.gamma = np.ascontiguousarray(self.decomp.gamma, dtype=float)
        self.beta = path.beta
        self.start, self.times, self.counts = path.pack()
        self.terms = _terms(instance)
        self.max_attempts = int(max_attempts)
        self.stats = np.zeros(2, dtype=np.int64)

    def update(self, j: int, rng) -> None:
        self.times, st = kernels.heat_bath_kernel(
            j - 1, self.start, self.times, self.counts, self.beta, self.s, self.gamma[j - 1],
            *self.terms, rng, self.max_attempts, self.stats,
        )
        _raise_for(st)

    def sweep(self, rng) -> None:
        self.times, st = kernels.sweep_kernel(
            self.start, self.times, self.counts, self.beta, self.s, self.gamma,
            *self.terms, rng, self.max_attempts, self.stats,
        )
        _raise_for(st)

    def run(self, n_sweeps: int, thin: int, rng) -> np.ndarray:
        """Sweep ``n_sweeps`` times, returning (E_halves, W, m) rows every ``thin`` sweeps."""
        out = np.empty((n_sweeps // thin, 3))
        self.times, rec, st = kernels.chain_kernel(
            self.start, self.times, self.counts, self.beta, self.s, self.gamma,
            *self.terms, rng, self.max_attempts, n_sweeps, thin, out, self.stats,
        )
        _raise_for(st)
        return out[:rec]

    def path(self) -> WorldlinePath:
        return WorldlinePath.unpack(self.beta, self.start, self.times, self.counts)

    @property
    def acceptance_rate(self) -> float:
        return float(self.stats[0] / self.stats[1]) if self.stats[1] else 1.0


def heat_bath_update(path, j, instance, coeffs, s, rng, max_attempts: int = 10**6) -> WorldlinePath:
    """Resample spin ``j`` (1-based); returns a new path, other spins untouched."""
    if not 1 <= j <= path.n:
        raise ValueError(f"spin index {j} out of range")
    chain = Chain(path, instance, coeffs, s, max_attempts)
    chain.update(j, rng)
    return chain.path()


def sweep(path, instance, coeffs, s, rng, max_attempts: int = 10**6) -> WorldlinePath:
    """n heat-bath updates on uniformly chosen spins."""
    chain = Chain(path, instance, coeffs, s, max_attempts)
    chain.sweep(rng)
    return chain.path()


@dataclass(frozen=True)
class QmcSample:
    diag_integral: float
    transitions: int
    weight_integral: float


def measure(path: WorldlinePath, instance: Instance, coeffs: FieldCoefficients | None, s: float) -> QmcSample:
    coeffs = coeffs or FieldCoefficients.uniform(instance.n)
    start, times, counts = path.pack()
    ti = term_index(instance)
    e_avg, w_avg, m = kernels.measure_kernel(start, times, counts, path.beta, ti.inc_ptr, ti.inc_idx, ti.bits, ti.pats, ti.weights)
    return QmcSample(s * e_avg / 2 + decompose(coeffs, s).diagonal_offset, int(m), float(w_avg))


@dataclass(frozen=True)
class QmcParams:
    beta: float = 150.0
    n_total_sweeps: int = 200_000
    thin: int = 5
    n_equil: int = 2500
    max_attempts: int = 10**6

    def __post_init__(self):
        if not (self.beta > 0 and self.n_total_sweeps > 0 and self.thin >= 1 and self.n_equil >= 0):
            raise ValueError("QMC parameters must be positive (thin >= 1, n_equil >= 0)")


SMALL_PRESET = QmcParams(beta=150.0, n_total_sweeps=200_000, thin=5, n_equil=2500)
LARGE_PRESET = QmcParams(beta=300.0, n_total_sweeps=100_000, thin=5, n_equil=2500)


@dataclass(frozen=True)
class Estimates:
    H_mean: float
    H_err: float
    H0_mean: float
    H0_err: float
    V_mean: float
    V_err: float
    W_mean: float
    W_err: float
    m_mean: float
    acc_rate: float
    samples: int
    n_equil: int = field(default=0)


def estimates_from_series(series: np.ndarray, s: float, beta: float, offset: float, acc_rate: float, n_equil: int) -> Estimates:
    """Blocked estimates from rows of (E_halves, W, m) kept after equilibration."""
    h0 = s * series[:, 0] / 2 + offset
    v = -series[:, 2] / beta
    b_h0, b_v, b_w = blocking(h0), blocking(v), blocking(series[:, 1])
    b_h = blocking(h0 + v)
    return Estimates(
        H_mean=b_h0.mean + b_v.mean,
        H_err=b_h.error,
        H0_mean=b_h0.mean,
        H0_err=b_h0.error,
        V_mean=b_v.mean,
        V_err=b_v.error,
        W_mean=b_w.mean,
        W_err=b_w.error,
        m_mean=float(series[:, 2].mean()),
        acc_rate=acc_rate,
        samples=len(series),
        n_equil=n_equil,
    )


def run_point(
    instance: Instance,
    coeffs: FieldCoefficients | None,
    s: float,
    seed: Sequence[int],
    params: QmcParams,
    rng: np.random.Generator,
) -> Estimates:
    """One seeded chain at fixed s: sample every ``thin`` sweeps, drop the first ``n_equil`` samples."""
    n_samples = params.n_total_sweeps // params.thin
    if n_samples - params.n_equil < 2:
        raise InsufficientSamplesError(
            f"{params.n_total_sweeps} sweeps / thin {params.thin} leaves no samples after {params.n_equil} equilibration samples"
        )
    coeffs = coeffs or FieldCoefficients.uniform(instance.n)
    chain = Chain(init_seed_path(seed, params.beta), instance, coeffs, s, params.max_attempts)
    series = chain.run(params.n_total_sweeps, params.thin, rng)
    kept = series[params.n_equil :]
    return estimates_from_series(kept, s, params.beta, chain.decomp.diagonal_offset, chain.acceptance_rate, params.n_equil)
