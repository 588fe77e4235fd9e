import numpy as np
import pytest
import scipy.linalg

from plantgap.hamiltonian import FieldCoefficients
from plantgap.sat_instance import ALLOWED_PATTERNS, Clause, Instance, add_penalty, ones, zeros
from plantgap.spectrum import SpectrumSolver, hamming_weights


def six_pattern_instance(penalize: int | None = None) -> Instance:
    """All six allowed patterns on bits (1,2,3): only 000 and 111 satisfy."""
    inst = Instance(3, tuple(Clause((1, 2, 3), p) for p in ALLOWED_PATTERNS), (zeros(3), ones(3)))
    return inst if penalize is None else add_penalty(inst, penalize)


@pytest.fixture
def hand():
    return six_pattern_instance(penalize=0)


def thermal(instance: Instance, coeffs: FieldCoefficients | None, s: float, beta: float) -> dict:
    """Exact Tr[A e^{-beta H}] / Z for H, H0, V and W by dense diagonalization."""
    H = SpectrumSolver(instance, coeffs, n_cap=12).matrix(s).toarray()
    vals, vecs = scipy.linalg.eigh(H)
    w = np.exp(-beta * (vals - vals[0]))
    rho = (vecs * (w / w.sum())) @ vecs.T
    H0 = np.diag(np.diag(H))
    return {
        "H": float(np.trace(rho @ H)),
        "H0": float(np.trace(rho @ H0)),
        "V": float(np.trace(rho @ (H - H0))),
        "W": float(np.diag(rho) @ hamming_weights(instance.n)),
    }


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
