"""Pauli strings, Pauli-basis expansions and the Choi <-> process-matrix basis change.

Letters are ordered I < X < Y < Z and multi-letter strings are enumerated in
mixed-radix order with the first letter most significant. A doubled site is
ordered (in, out), sites ascending.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import BELL

LETTERS = "IXYZ"

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_PAULI_STACK = np.stack([PAULI[c] for c in LETTERS])


def _check_string(s: str) -> str:
    if not isinstance(s, str) or any(c not in LETTERS for c in s):
        raise ValueError(f"not a Pauli string: {s!r}")
    return s


def pauli_matrix(s: str) -> np.ndarray:
    """Dense matrix of the Pauli string ``s`` (first letter is the most significant factor)."""
    _check_string(s)
    out = np.ones((1, 1), dtype=complex)
    for c in s:
        out = np.kron(out, PAULI[c])
    return out


def pauli_weight(s: str) -> int:
    return sum(c != "I" for c in _check_string(s))


def pauli_strings(length: int) -> list[str]:
    """All strings of ``length`` letters in canonical (mixed-radix) order."""
    return ["".join(p) for p in itertools.product(LETTERS, repeat=length)]


def string_index(s: str) -> int:
    idx = 0
    for c in _check_string(s):
        idx = 4 * idx + LETTERS.index(c)
    return idx


@lru_cache(maxsize=None)
def _weights(length: int) -> np.ndarray:
    w = np.zeros(1, dtype=int)
    for _ in range(length):
        w = (w[:, None] + np.array([0, 1, 1, 1])[None, :]).reshape(-1)
    return w


def weights(length: int) -> np.ndarray:
    """Pauli weight of every string of ``length`` letters, in canonical order."""
    return _weights(length).copy()


# -- process matrix ---------------------------------------------------------

# Columns are |alpha> = (P_alpha,in (x) I_out)|Phi> for alpha = I, X, Y, Z.
SITE_BASIS = np.stack([np.kron(PAULI[c], np.eye(2)) @ BELL for c in LETTERS], axis=1)


@lru_cache(maxsize=8)
def _process_basis(n_sites: int) -> np.ndarray:
    b = np.ones((1, 1), dtype=complex)
    for _ in range(n_sites):
        b = np.kron(b, SITE_BASIS)
    b.setflags(write=False)
    return b


def _n_sites_of(dim: int) -> int:
    n = round(np.log(dim) / np.log(4)) if dim > 1 else 0
    if 4**n != dim or n < 1:
        raise ValueError(f"dimension {dim} is not a power of 4")
    return n


def choi_to_process(choi: np.ndarray) -> np.ndarray:
    """Process matrix chi_ab = <a|J|b> of a Choi state on doubled sites."""
    choi = np.asarray(choi)
    if choi.ndim != 2 or choi.shape[0] != choi.shape[1]:
        raise ValueError(f"Choi matrix must be square, got {choi.shape}")
    b = _process_basis(_n_sites_of(choi.shape[0]))
    return b.conj().T @ choi @ b


def process_to_choi(chi: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    chi = np.asarray(chi)
    if chi.ndim != 2 or chi.shape[0] != chi.shape[1]:
        raise ValueError(f"process matrix must be square, got {chi.shape}")
    if np.abs(chi - chi.conj().T).max() > atol:
        raise ValueError("process matrix is not Hermitian")
    b = _process_basis(_n_sites_of(chi.shape[0]))
    return b @ chi @ b.conj().T


# -- Pauli expansion ---------------------------------------------------------

@dataclass(frozen=True)
class PauliCoefficients:
    """Real coefficients c_a of A = sum_a c_a P_a, stored in canonical string order."""

    values: np.ndarray
    num_qubits: int

    def __post_init__(self):
        if self.values.shape != (4**self.num_qubits,):
            raise ValueError(
                f"expected {4**self.num_qubits} coefficients, got {self.values.shape}"
            )

    def __getitem__(self, s: str) -> float:
        if len(s) != self.num_qubits:
            raise KeyError(s)
        return float(self.values[string_index(s)])

    def __len__(self) -> int:
        return self.values.size

    def to_dict(self, atol: float = 0.0) -> dict[str, float]:
        return {
            s: float(v)
            for s, v in zip(pauli_strings(self.num_qubits), self.values)
            if abs(v) > atol
        }

    @classmethod
    def from_dict(cls, coeffs: dict[str, float]) -> PauliCoefficients:
        lengths = {len(s) for s in coeffs}
        if len(lengths) != 1:
            raise ValueError(f"inconsistent string lengths: {sorted(lengths)}")
        q = lengths.pop()
        values = np.zeros(4**q)
        for s, v in coeffs.items():
            values[string_index(s)] = v
        return cls(values, q)


def _num_qubits_of(dim: int) -> int:
    q = dim.bit_length() - 1
    if 2**q != dim:
        raise ValueError(f"dimension {dim} is not a power of 2")
    return q


# to_coeff[mu, r, c] = sigma_mu[c, r] / 2 so that c_mu = sum_rc to_coeff * A[r, c]
_TO_COEFF = _PAULI_STACK.transpose(0, 2, 1).reshape(4, 4) / 2.0
_FROM_COEFF = _PAULI_STACK.reshape(4, 4).T  # [(r, c), mu]


def _pair_axes(a: np.ndarray, q: int) -> np.ndarray:
    # (r1..rq, c1..cq) -> (r1 c1, r2 c2, ...)
    t = a.reshape((2,) * (2 * q))
    axes = [ax for j in range(q) for ax in (j, q + j)]
    return t.transpose(axes).reshape((4,) * q)


def _unpair_axes(t: np.ndarray, q: int) -> np.ndarray:
    t = t.reshape((2,) * (2 * q))
    axes = [2 * j for j in range(q)] + [2 * j + 1 for j in range(q)]
    return t.transpose(axes).reshape(2**q, 2**q)


def pauli_expand(a: np.ndarray) -> PauliCoefficients:
    """Coefficients c_a = Tr[P_a A] / 2^q of a Hermitian operator on q qubits."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"operator must be square, got {a.shape}")
    q = _num_qubits_of(a.shape[0])
    t = _pair_axes(a.astype(complex), q)
    for ax in range(q):
        t = np.moveaxis(np.tensordot(_TO_COEFF, t, axes=([1], [ax])), 0, ax)
    return PauliCoefficients(np.ascontiguousarray(t.real.reshape(-1)), q)


def pauli_assemble(coeffs: PauliCoefficients | dict[str, float]) -> np.ndarray:
    if isinstance(coeffs, dict):
        coeffs = PauliCoefficients.from_dict(coeffs)
    q = coeffs.num_qubits
    t = coeffs.values.astype(complex).reshape((4,) * q)
    for ax in range(q):
        t = np.moveaxis(np.tensordot(_FROM_COEFF, t, axes=([1], [ax])), 0, ax)
    return _unpair_axes(t, q)


# -- JSON helpers ------------------------------------------------------------

def process_to_json(chi: np.ndarray) -> dict[str, dict[str, list[float]]]:
    """Nested {row string: {column string: [re, im]}} form of a process matrix."""
    labels = pauli_strings(_n_sites_of(chi.shape[0]))
    return {
        a: {b: [float(chi[i, j].real), float(chi[i, j].imag)] for j, b in enumerate(labels)}
        for i, a in enumerate(labels)
    }


def process_from_json(data: dict[str, dict[str, list[float]]]) -> np.ndarray:
    labels = sorted(data, key=string_index)
    n = len(labels[0])
    chi = np.zeros((4**n, 4**n), dtype=complex)
    for a, row in data.items():
        for b, (re, im) in row.items():
            chi[string_index(a), string_index(b)] = re + 1j * im
    return chi


def coefficients_to_json(c: PauliCoefficients) -> dict[str, list[float]]:
    return {s: [float(v), 0.0] for s, v in zip(pauli_strings(c.num_qubits), c.values)}


def coefficients_from_json(data: dict[str, list[float]]) -> PauliCoefficients:
    return PauliCoefficients.from_dict({s: v[0] for s, v in data.items()})


# -- measurement eigenstates -------------------------------------------------

BASES = "XYZ"

# EIGENSTATES[basis, sign_index] with sign_index 0 -> +1, 1 -> -1
EIGENSTATES = np.array(
    [
        [[1, 1], [1, -1]],
        [[1, 1j], [1, -1j]],
        [[np.sqrt(2), 0], [0, np.sqrt(2)]],
    ],
    dtype=complex,
) / np.sqrt(2.0)


def eigenstate(basis: str, sign: int) -> np.ndarray:
    """Eigenvector of Pauli ``basis`` with eigenvalue ``sign``."""
    if basis not in BASES or sign not in (1, -1):
        raise ValueError(f"invalid basis/sign: {basis!r}, {sign!r}")
    return EIGENSTATES[BASES.index(basis), 0 if sign == 1 else 1].copy()
