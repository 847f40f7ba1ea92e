"""Distances, entropies, conditional mutual information and channel-level figures of merit."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .linalg import hermitize, partial_trace, trace_norm
from .mpo import MAX_DENSE_SITES, MpoChoi, TruncationPolicy, overlap, purity, window_marginal

EIG_FLOOR = 1e-14
DIAGONAL_TOL = 1e-10


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return 0.5 * trace_norm(hermitize(a - b))


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy in bits; eigenvalues below 1e-14 count as zero."""
    vals = np.linalg.eigvalsh(hermitize(rho))
    vals = vals[vals > EIG_FLOOR]
    return float(-(vals * np.log2(vals)).sum())


def subsystem_entropy(rho: np.ndarray, dims: Sequence[int], sites: Sequence[int]) -> float:
    if len(sites) == 0:
        return 0.0
    return von_neumann_entropy(partial_trace(rho, dims, sites))


@dataclass(frozen=True)
class Tripartition:
    a: tuple[int, ...]
    b: tuple[int, ...]
    c: tuple[int, ...]

    def __post_init__(self):
        a, b, c = (tuple(sorted(x)) for x in (self.a, self.b, self.c))
        if not a or not c:
            raise ValueError("A and C must be non-empty")
        if len(set(a) | set(b) | set(c)) != len(a) + len(b) + len(c):
            raise ValueError("subsystems overlap")
        if max(a) >= min(b + c) or (b and max(b) >= min(c)):
            raise ValueError("subsystems must be ordered A < B < C")
        for name, x in zip("abc", (a, b, c)):
            object.__setattr__(self, name, x)


def _dims_of(rho: np.ndarray, local_dim: int) -> list[int]:
    n = round(np.log(rho.shape[0]) / np.log(local_dim))
    if local_dim**n != rho.shape[0]:
        raise ValueError(f"dimension {rho.shape[0]} is not a power of {local_dim}")
    return [local_dim] * n


def cmi(rho: np.ndarray, part: Tripartition, local_dim: int = 4) -> float:
    """I(A:C|B) = S(AB) + S(BC) - S(B) - S(ABC) in bits; unlisted sites are traced out."""
    dims = _dims_of(rho, local_dim)
    if max(part.c) >= len(dims):
        raise ValueError("tripartition exceeds the number of sites")
    a, b, c = part.a, part.b, part.c
    s = lambda x: subsystem_entropy(rho, dims, x)  # noqa: E731
    return s(a + b) + s(b + c) - s(b) - s(a + b + c)


def markov_entropy(rho: np.ndarray, w: int, local_dim: int = 4) -> float:
    """Sum over i of S(i-w | B_i) plus S(B_n), with B_i the w sites ending at i."""
    dims = _dims_of(rho, local_dim)
    n = len(dims)
    if n <= w or w < 1:
        raise ValueError(f"need n > w >= 1, got n={n}, w={w}")
    total = 0.0
    for i in range(w, n):  # 0-based: conditioning site i - w, buffer i-w+1 .. i
        blk = list(range(i - w + 1, i + 1))
        total += subsystem_entropy(rho, dims, [i - w] + blk) - subsystem_entropy(rho, dims, blk)
    return total + subsystem_entropy(rho, dims, list(range(n - w, n)))


@dataclass(frozen=True)
class EntropyReport:
    entropy: float
    markov_entropy: float
    cmi_terms: tuple[float, ...]
    residual: float


def entropy_report(rho: np.ndarray, w: int, local_dim: int = 4) -> EntropyReport:
    """Markov entropy with the CMI decomposition; ``residual`` is S^M - S - sum of CMIs."""
    dims = _dims_of(rho, local_dim)
    n = len(dims)
    s = von_neumann_entropy(rho)
    sm = markov_entropy(rho, w, local_dim)
    terms = tuple(
        cmi(rho, Tripartition((i - w,), tuple(range(i - w + 1, i + 1)), tuple(range(i + 1, n))), local_dim)
        for i in range(w, n - 1)
    )
    return EntropyReport(s, sm, terms, sm - s - sum(terms))


def fuchs_vdg_bounds(fidelity: float) -> tuple[float, float]:
    """Lower and upper trace-distance bounds 1 - sqrt(F) and sqrt(1 - F)."""
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError(f"fidelity must lie in [0, 1], got {fidelity}")
    return 1.0 - np.sqrt(fidelity), float(np.sqrt(1.0 - fidelity))


def fidelity_to_unitary(estimate: MpoChoi, ideal) -> float:
    """Tr[J_estimate J_ideal] for a unitary ideal (a CircuitSpec with gamma = 0, or a pure MPO)."""
    from .simulate import CircuitSpec, circuit_choi

    if isinstance(ideal, CircuitSpec):
        if not ideal.is_unitary:
            raise ValueError("ideal circuit must be unitary (gamma = 0)")
        ideal = circuit_choi(ideal, TruncationPolicy(relative_threshold=1e-12))
    elif abs(purity(ideal) - 1.0) > 1e-8:
        raise ValueError("ideal Choi state is not pure")
    return overlap(estimate, ideal)


def mpo_frobenius_distance(a: MpoChoi, b: MpoChoi) -> float:
    return float(np.sqrt(max(overlap(a, a) + overlap(b, b) - 2 * overlap(a, b), 0.0)))


def _diagonal_part(chi: np.ndarray, project: bool) -> np.ndarray:
    off = chi - np.diag(np.diag(chi))
    if np.abs(off).sum() > DIAGONAL_TOL and not project:
        raise ValueError("process matrix is not diagonal; pass project=True to drop off-diagonals")
    return np.diag(chi).real


def pauli_diamond_bound(chi: np.ndarray, chi_hat: np.ndarray, project: bool = False) -> float:
    """Sum of |chi_aa - chi_hat_aa|, an upper bound on the diamond distance of Pauli channels."""
    if chi.shape != chi_hat.shape:
        raise ValueError(f"shape mismatch: {chi.shape} vs {chi_hat.shape}")
    return float(np.abs(_diagonal_part(chi, project) - _diagonal_part(chi_hat, project)).sum())


def cmi_values(m: MpoChoi, b: int) -> list[float]:
    """CMI of A = {p}, B = {p+1..p+b}, C = {p+b+1} for every position p."""
    k = b + 2
    if k > MAX_DENSE_SITES:
        raise ValueError(f"window of {k} sites exceeds the dense limit {MAX_DENSE_SITES}")
    part = Tripartition((0,), tuple(range(1, b + 1)), (b + 1,))
    return [cmi(window_marginal(m, range(p, p + k)), part) for p in range(m.n_sites - k + 1)]


@dataclass(frozen=True)
class CmiScanRow:
    buffer: int
    max_cmi: float
    position: int
    values: tuple[float, ...]


def cmi_decay_scan(m: MpoChoi, max_b: int) -> list[CmiScanRow]:
    rows = []
    for b in range(1, max_b + 1):
        vals = cmi_values(m, b)
        if not vals:
            break
        p = int(np.argmax(vals))
        rows.append(CmiScanRow(b, float(vals[p]), p, tuple(vals)))
    return rows


def g_k_error(exact: Sequence[float], recon: Sequence[float]) -> np.ndarray:
    """Per-weight absolute difference |G_k^E - G_k^R|."""
    return np.abs(np.asarray(exact) - np.asarray(recon))
