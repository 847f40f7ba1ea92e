"""Small dense linear-algebra helpers shared across modules."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

# Bell pair |Phi> = (|00> + |11>)/sqrt(2) on one doubled site, ordering (in, out).
BELL = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / np.sqrt(2.0)
BELL_STATE = np.outer(BELL, BELL.conj())


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduce ``rho`` on subsystems of size ``dims`` to the subsystems in ``keep``.

    The kept subsystems stay in ascending order regardless of the order given.
    """
    dims = list(dims)
    n = len(dims)
    keep = sorted(set(keep))
    if any(k < 0 or k >= n for k in keep):
        raise ValueError(f"subsystem index out of range: {keep} for {n} subsystems")
    total = int(np.prod(dims))
    if rho.shape != (total, total):
        raise ValueError(f"matrix shape {rho.shape} does not match dims {dims}")
    drop = [k for k in range(n) if k not in keep]
    t = rho.reshape(dims + dims)
    # trace out from the highest index so earlier axis numbers stay valid
    for count, k in enumerate(sorted(drop, reverse=True)):
        m = n - count
        t = np.trace(t, axis1=k, axis2=k + m)
    d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(d_keep, d_keep)


def permute_subsystems(a: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors of a square operator: new factor j is old factor ``perm[j]``."""
    dims = list(dims)
    n = len(dims)
    t = a.reshape(dims + dims)
    axes = list(perm) + [p + n for p in perm]
    d = int(np.prod(dims))
    return t.transpose(axes).reshape(d, d)


def interleave_in_out(a: np.ndarray, n: int, d: int = 2) -> np.ndarray:
    """Map an operator ordered (in_1..in_n, out_1..out_n) to (in_1, out_1, ..., in_n, out_n)."""
    perm = []
    for j in range(n):
        perm += [j, n + j]
    return permute_subsystems(a, [d] * (2 * n), perm)


def eigh_psd(a: np.ndarray) -> np.ndarray:
    """Frobenius-nearest PSD matrix to the Hermitian part of ``a``."""
    vals, vecs = np.linalg.eigh(hermitize(a))
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals) @ vecs.conj().T


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(hermitize(a))
    vals = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * vals) @ vecs.conj().T


def trace_norm(a: np.ndarray) -> float:
    if np.allclose(a, a.conj().T, atol=1e-12):
        return float(np.abs(np.linalg.eigvalsh(hermitize(a))).sum())
    return float(np.linalg.svd(a, compute_uv=False).sum())


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Hilbert-Schmidt random state (Ginibre construction)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_choi(n_sites: int, rng: np.random.Generator, kraus_rank: int = 2) -> np.ndarray:
    """Choi state of a random CPTP map on ``n_sites`` qubits, doubled-site ordering."""
    d = 2**n_sites
    g = rng.normal(size=(kraus_rank * d, d)) + 1j * rng.normal(size=(kraus_rank * d, d))
    q, _ = np.linalg.qr(g)
    kraus = q.reshape(kraus_rank, d, d)
    phi = np.eye(d).reshape(d * d) / np.sqrt(d)
    choi = np.zeros((d * d, d * d), dtype=complex)
    for k in kraus:
        v = np.kron(np.eye(d), k) @ phi
        choi += np.outer(v, v.conj())
    return interleave_in_out(choi, n_sites)


def is_valid_state(rho: np.ndarray, atol: float = 1e-10) -> bool:
    if not np.allclose(rho, rho.conj().T, atol=atol):
        return False
    if abs(np.trace(rho) - 1.0) > atol:
        return False
    return bool(np.linalg.eigvalsh(hermitize(rho)).min() >= -atol)


def is_cptp_choi(choi: np.ndarray, n_sites: int, atol: float = 1e-10) -> bool:
    """Check the Choi-state invariants, including Tr_out J = I/d^n."""
    if not is_valid_state(choi, atol):
        return False
    red = partial_trace(choi, [2] * (2 * n_sites), keep=range(0, 2 * n_sites, 2))
    return bool(np.abs(red - np.eye(2**n_sites) / 2**n_sites).max() <= atol)
