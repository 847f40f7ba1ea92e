"""Process classical shadows and the Gaussian coefficient-noise model for window estimates."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .linalg import hermitize, trace_norm
from .mpo import _site_major_to_matrix
from .pauli import BASES, EIGENSTATES, pauli_assemble, pauli_expand, PauliCoefficients
from .simulate import ShotRecords

_CHUNK_ENTRIES = 1 << 22


def tau(basis: str, sign: int) -> np.ndarray:
    """3 |basis, sign><basis, sign| - I."""
    if basis not in BASES or sign not in (1, -1):
        raise ValueError(f"invalid basis/sign: {basis!r}, {sign!r}")
    v = EIGENSTATES[BASES.index(basis), 0 if sign == 1 else 1]
    return 3 * np.outer(v, v.conj()) - np.eye(2)


# _LOCAL[cin * 6 + cout] is the 4x4 single-site estimator tau_in^T (x) tau_out,
# with c = 2 * basis + sign_index
_TAUS = np.stack([tau(b, s) for b in BASES for s in (1, -1)])
_LOCAL = np.einsum("iab,ocd->ioacbd", _TAUS.transpose(0, 2, 1), _TAUS).reshape(36, 4, 4)
_LOCAL_VEC = _LOCAL.reshape(36, 16)


def _codes(records: ShotRecords, window: Sequence[int]) -> np.ndarray:
    w = list(window)
    if not w or min(w) < 0 or max(w) >= records.n_sites:
        raise ValueError(f"window {w} out of range for {records.n_sites} sites")
    cin = 2 * records.in_basis[:, w] + (records.in_sign[:, w] < 0)
    cout = 2 * records.out_basis[:, w] + (records.out_sign[:, w] < 0)
    return (6 * cin + cout).astype(np.int64)


def single_shot_estimator(record: ShotRecords, window: Sequence[int]) -> np.ndarray:
    """Tensor product over the window of tau_in^T (x) tau_out for one shot."""
    codes = _codes(record, window)
    if codes.shape[0] != 1:
        raise ValueError("expected a single shot")
    out = np.ones((1, 1), dtype=complex)
    for c in codes[0]:
        out = np.kron(out, _LOCAL[c])
    return out


def _mean_estimator(codes: np.ndarray) -> np.ndarray:
    k = codes.shape[1]
    uniq, counts = np.unique(codes, axis=0, return_counts=True)
    chunk = max(1, _CHUNK_ENTRIES // 16**k)
    total = np.zeros(16**k, dtype=complex)
    for s in range(0, uniq.shape[0], chunk):
        u = uniq[s : s + chunk]
        v = _LOCAL_VEC[u[:, 0]] * counts[s : s + chunk, None]
        for j in range(1, k):
            v = (v[:, :, None] * _LOCAL_VEC[u[:, j]][:, None, :]).reshape(v.shape[0], -1)
        total += v.sum(axis=0)
    return _site_major_to_matrix(total / codes.shape[0], k)


def project_physical(a: np.ndarray) -> np.ndarray:
    """Hermitize, clip negative eigenvalues, renormalise to unit trace."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    vals, vecs = np.linalg.eigh(hermitize(a))
    vals = np.clip(vals, 0.0, None)
    tot = vals.sum()
    if tot <= 1e-300:
        raise ValueError("degenerate estimate: no positive eigenvalues")
    return (vecs * (vals / tot)) @ vecs.conj().T


@dataclass(frozen=True)
class WindowEstimate:
    window: tuple[int, ...]
    raw_mean: np.ndarray
    projected: np.ndarray
    shots: int


def estimate_window(records: ShotRecords, window: Sequence[int]) -> WindowEstimate:
    if records.shots < 1:
        raise ValueError("no shot records")
    raw = _mean_estimator(_codes(records, window))
    return WindowEstimate(tuple(window), raw, project_physical(raw), records.shots)


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian noise on every Pauli coefficient of a window."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def perturb_coefficients(
    choi: np.ndarray, noise: NoiseModel, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Add N(0, sigma^2) to each Pauli coefficient, reassemble and project to a state."""
    rng = np.random.default_rng(noise.seed) if rng is None else rng
    c = pauli_expand(choi)
    noisy = PauliCoefficients(c.values + rng.normal(0.0, noise.sigma, size=c.values.shape), c.num_qubits)
    return project_physical(pauli_assemble(noisy))


def window_error(estimate: WindowEstimate | np.ndarray, truth: np.ndarray) -> float:
    """Half trace norm between an estimate (projected if a WindowEstimate) and the truth."""
    est = estimate.projected if isinstance(estimate, WindowEstimate) else np.asarray(estimate)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    return 0.5 * trace_norm(est - truth)
