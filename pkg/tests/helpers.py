from __future__ import annotations

import numpy as np

from choistitch.linalg import interleave_in_out
from choistitch.pauli import choi_to_process, pauli_strings, pauli_weight


def unitary_choi(u: np.ndarray) -> np.ndarray:
    """Choi state of X -> u X u^dagger in doubled-site order."""
    d = u.shape[0]
    n = round(np.log2(d))
    v = np.kron(np.eye(d), u) @ (np.eye(d).reshape(-1) / np.sqrt(d))
    return interleave_in_out(np.outer(v, v.conj()), n)


def dephasing_choi(gamma: float) -> np.ndarray:
    z = np.diag([1.0, -1.0])
    return (1 - gamma) * unitary_choi(np.eye(2)) + gamma * unitary_choi(z)


def brute_force_g(choi: np.ndarray) -> np.ndarray:
    """G_k by enumerating every Pauli string of the process matrix diagonal."""
    chi = choi_to_process(choi)
    n = round(np.log(choi.shape[0]) / np.log(4))
    w = np.array([pauli_weight(s) for s in pauli_strings(n)])
    diag = np.diag(chi).real
    return np.array([diag[w <= k].sum() for k in range(n + 1)])


def random_mpo_dense(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random unit-trace Hermitian PSD matrix on n doubled sites."""
    d = 4**n
    g = rng.normal(size=(d, 3)) + 1j * rng.normal(size=(d, 3))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


# acceptance verdicts, printed by the terminal-summary hook in conftest
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def verdict(criterion: int, ok: bool, detail: str) -> None:
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""
    ACCEPTANCE[criterion] = (bool(ok), detail)
    assert ok, f"criterion {criterion}: {detail}"
