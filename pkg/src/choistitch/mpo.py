"""Matrix-product-operator Choi states on the doubled chain.

Each site tensor has indices (left bond, row, column, right bond) with
physical dimension 4 per doubled site. Internally a site is also viewed as a
16-dimensional vector index p = 4 * row + column, which turns the MPO into an
MPS over operator space; local superoperators act on that index.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .linalg import BELL_STATE
from .pauli import SITE_BASIS

PHYS = 4
VEC = PHYS * PHYS
MAX_DENSE_SITES = 5


@dataclass(frozen=True)
class TruncationPolicy:
    """Relative singular-value cutoff plus an optional hard bond cap."""

    relative_threshold: float = 1e-7
    max_bond: int | None = None

    def __post_init__(self):
        if not 0.0 < self.relative_threshold < 1.0:
            raise ValueError("relative_threshold must lie in (0, 1)")
        if self.max_bond is not None and self.max_bond < 1:
            raise ValueError("max_bond must be positive")

    def keep(self, s: np.ndarray) -> int:
        if s.size == 0 or s[0] <= 0.0:
            return 1
        r = int(np.count_nonzero(s >= self.relative_threshold * s[0]))
        if self.max_bond is not None:
            r = min(r, self.max_bond)
        return max(r, 1)


EXACT = TruncationPolicy(relative_threshold=1e-14)


@dataclass(frozen=True)
class MpoChoi:
    tensors: tuple[np.ndarray, ...]

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=complex) for t in self.tensors)
        if not ts:
            raise ValueError("an MPO needs at least one site")
        for j, t in enumerate(ts):
            if t.ndim != 4 or t.shape[1:3] != (PHYS, PHYS):
                raise ValueError(f"site {j}: bad tensor shape {t.shape}")
            if j > 0 and ts[j - 1].shape[3] != t.shape[0]:
                raise ValueError(f"bond mismatch between sites {j - 1} and {j}")
        if ts[0].shape[0] != 1 or ts[-1].shape[3] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for t in ts:
            t.setflags(write=False)
        object.__setattr__(self, "tensors", ts)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[3] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def vectors(self) -> list[np.ndarray]:
        """Site tensors reshaped to (left, 16, right)."""
        return [t.reshape(t.shape[0], VEC, t.shape[3]) for t in self.tensors]

    @classmethod
    def from_vectors(cls, vs: Sequence[np.ndarray]) -> MpoChoi:
        return cls(tuple(v.reshape(v.shape[0], PHYS, PHYS, v.shape[2]) for v in vs))


@dataclass(frozen=True)
class LocalSuperop:
    """Linear map on the operator space of ``k`` contiguous doubled sites.

    ``matrix`` is (16^k, 16^k) in site-major vectorisation, i.e. the index
    order (r1, c1, r2, c2, ...), matching the MPO's vector view.
    """

    matrix: np.ndarray
    start: int

    @property
    def k(self) -> int:
        k = round(np.log(self.matrix.shape[0]) / np.log(VEC))
        return k

    def __post_init__(self):
        m = self.matrix
        k = self.k
        if m.shape != (VEC**k, VEC**k) or not 1 <= k <= 3:
            raise ValueError(f"superop must act on 1-3 doubled sites, got shape {m.shape}")
        if self.start < 0:
            raise ValueError("support out of range")

    @property
    def support(self) -> range:
        return range(self.start, self.start + self.k)

    @classmethod
    def conjugation(cls, u: np.ndarray, start: int) -> LocalSuperop:
        """X -> u X u^dagger with ``u`` acting on k doubled sites."""
        k = round(np.log(u.shape[0]) / np.log(PHYS))
        return cls(row_to_site_major(np.kron(u, u.conj()), k, k), start)

    @classmethod
    def from_row_major(cls, s: np.ndarray, start: int) -> LocalSuperop:
        k = round(np.log(s.shape[0]) / np.log(VEC))
        return cls(row_to_site_major(s, k, k), start)


def row_to_site_major(s: np.ndarray, k_out: int, k_in: int) -> np.ndarray:
    """Reorder a superop from row-major vec, (r1..rk, c1..ck), to site-major vec."""
    t = s.reshape((PHYS,) * (2 * k_out) + (PHYS,) * (2 * k_in))
    out_axes = [ax for j in range(k_out) for ax in (j, k_out + j)]
    in_axes = [2 * k_out + ax for j in range(k_in) for ax in (j, k_in + j)]
    return t.transpose(out_axes + in_axes).reshape(VEC**k_out, VEC**k_in)


def _site_major_to_matrix(v: np.ndarray, k: int) -> np.ndarray:
    t = v.reshape((PHYS,) * (2 * k))
    axes = [2 * j for j in range(k)] + [2 * j + 1 for j in range(k)]
    return t.transpose(axes).reshape(PHYS**k, PHYS**k)


def _matrix_to_site_major(a: np.ndarray, k: int) -> np.ndarray:
    t = a.reshape((PHYS,) * (2 * k))
    axes = [ax for j in range(k) for ax in (j, k + j)]
    return t.transpose(axes).reshape(VEC**k)


# -- construction -------------------------------------------------------------

def bell_product_mpo(n: int) -> MpoChoi:
    """Choi state of the identity channel, a product of Bell pairs."""
    if n < 1:
        raise ValueError("need at least one site")
    site = BELL_STATE.reshape(1, PHYS, PHYS, 1)
    return MpoChoi(tuple(site.copy() for _ in range(n)))


def _split(theta: np.ndarray, k: int, policy: TruncationPolicy) -> list[np.ndarray]:
    """Split (Dl, 16^k, Dr) into k left-canonical site vectors by successive SVDs."""
    dl, _, dr = theta.shape
    out = []
    rest = theta.reshape(dl, VEC ** (k - 1) * VEC * dr) if k > 1 else theta
    left = dl
    for j in range(k - 1):
        mat = rest.reshape(left * VEC, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        r = policy.keep(s)
        out.append(u[:, :r].reshape(left, VEC, r))
        rest = s[:r, None] * vh[:r]
        left = r
    out.append(rest.reshape(left, VEC, dr))
    return out


def mpo_from_dense(choi: np.ndarray, policy: TruncationPolicy = EXACT) -> MpoChoi:
    choi = np.asarray(choi, dtype=complex)
    n = round(np.log(choi.shape[0]) / np.log(PHYS))
    if choi.shape != (PHYS**n, PHYS**n):
        raise ValueError(f"not a doubled-site operator: shape {choi.shape}")
    theta = _matrix_to_site_major(choi, n).reshape(1, VEC**n, 1)
    return MpoChoi.from_vectors(_split(theta, n, policy))


def _merge(vs: Sequence[np.ndarray]) -> np.ndarray:
    theta = vs[0]
    for v in vs[1:]:
        theta = np.tensordot(theta, v, axes=([-1], [0]))
    dl, dr = theta.shape[0], theta.shape[-1]
    return theta.reshape(dl, -1, dr)


def dense_from_mpo(m: MpoChoi) -> np.ndarray:
    n = m.n_sites
    if n > MAX_DENSE_SITES:
        raise ValueError(f"{n} sites is too large for a dense matrix (max {MAX_DENSE_SITES})")
    theta = _merge(m.vectors())
    return _site_major_to_matrix(theta.reshape(-1), n)


# -- contractions ------------------------------------------------------------

def _site_traces(m: MpoChoi) -> list[np.ndarray]:
    return [np.trace(t, axis1=1, axis2=2) for t in m.tensors]


def trace(m: MpoChoi) -> complex:
    e = np.ones(1, dtype=complex)
    for tr in _site_traces(m):
        e = e @ tr
    return complex(e[0])


def _trace_envs(m: MpoChoi) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """left[j]: trace of sites < j; right[j]: trace of sites >= j."""
    trs = _site_traces(m)
    n = len(trs)
    left = [np.ones(1, dtype=complex)]
    for tr in trs:
        left.append(left[-1] @ tr)
    right = [np.ones(1, dtype=complex)] * (n + 1)
    right = list(right)
    for j in range(n - 1, -1, -1):
        right[j] = trs[j] @ right[j + 1]
    return left, right


def _check_window(m: MpoChoi, window: Sequence[int]) -> list[int]:
    w = sorted(window)
    if not w or w != list(range(w[0], w[0] + len(w))):
        raise ValueError(f"window must be contiguous, got {list(window)}")
    if w[0] < 0 or w[-1] >= m.n_sites:
        raise ValueError(f"window {w} out of range for {m.n_sites} sites")
    if len(w) > MAX_DENSE_SITES:
        raise ValueError(f"window of {len(w)} sites is too large (max {MAX_DENSE_SITES})")
    return w


def window_marginal(m: MpoChoi, window: Sequence[int]) -> np.ndarray:
    """Dense reduced Choi state on a contiguous window (in and out traced outside)."""
    w = _check_window(m, window)
    left, right = _trace_envs(m)
    vs = m.vectors()
    theta = np.tensordot(left[w[0]], vs[w[0]], axes=([0], [0]))
    for j in w[1:]:
        theta = np.tensordot(theta, vs[j], axes=([-1], [0]))
    theta = np.tensordot(theta, right[w[-1] + 1], axes=([-1], [0]))
    return _site_major_to_matrix(theta.reshape(-1), len(w))


def overlap(a: MpoChoi, b: MpoChoi) -> float:
    """Tr[J_a J_b]."""
    if a.n_sites != b.n_sites:
        raise ValueError("MPOs have different numbers of sites")
    e = np.ones((1, 1), dtype=complex)
    for ta, tb in zip(a.tensors, b.tensors):
        e = np.einsum("ab,arcx,bcry->xy", e, ta, tb, optimize=True)
    return float(e[0, 0].real)


def purity(m: MpoChoi) -> float:
    return overlap(m, m)


def weight_resolved_diagonals(m: MpoChoi, k_max: int) -> np.ndarray:
    """G_k = sum of chi_aa over Pauli strings of weight <= k, for k = 0..k_max.

    Carries a weight-counter register of size k_max + 2 along the chain; the
    last bucket collects all strings heavier than k_max.
    """
    n = m.n_sites
    if not 0 <= k_max <= n:
        raise ValueError(f"k_max must lie in [0, {n}]")
    buckets = k_max + 2
    e = np.zeros((buckets, 1), dtype=complex)
    e[0, 0] = 1.0
    for t in m.tensors:
        # d[a, l, r] = <alpha_a| W |alpha_a>
        d = np.einsum("pa,lpqr,qa->alr", SITE_BASIS.conj(), t, SITE_BASIS, optimize=True)
        heavy = d[1] + d[2] + d[3]
        new = np.einsum("wl,lr->wr", e, d[0])
        shifted = np.einsum("wl,lr->wr", e, heavy)
        new[1:] += shifted[:-1]
        new[-1] += shifted[-1]
        e = new
    return np.cumsum(e[: k_max + 1, 0].real)


# -- compression and local maps ----------------------------------------------

def left_canonicalize(vs: list[np.ndarray]) -> list[np.ndarray]:
    vs = list(vs)
    for j in range(len(vs) - 1):
        dl, p, dr = vs[j].shape
        q, r = np.linalg.qr(vs[j].reshape(dl * p, dr))
        vs[j] = q.reshape(dl, p, q.shape[1])
        vs[j + 1] = np.tensordot(r, vs[j + 1], axes=([1], [0]))
    return vs


def compress(m: MpoChoi, policy: TruncationPolicy) -> MpoChoi:
    """Left-canonical QR sweep, then a right-to-left truncating SVD sweep."""
    vs = left_canonicalize(m.vectors())
    for j in range(len(vs) - 1, 0, -1):
        dl, p, dr = vs[j].shape
        u, s, vh = np.linalg.svd(vs[j].reshape(dl, p * dr), full_matrices=False)
        r = policy.keep(s)
        vs[j] = vh[:r].reshape(r, p, dr)
        vs[j - 1] = np.tensordot(vs[j - 1], u[:, :r] * s[:r], axes=([2], [0]))
    return MpoChoi.from_vectors(vs)


def apply_superop(m: MpoChoi, op: LocalSuperop, policy: TruncationPolicy) -> MpoChoi:
    sup = list(op.support)
    if sup[-1] >= m.n_sites:
        raise ValueError(f"support {sup} out of range for {m.n_sites} sites")
    vs = m.vectors()
    theta = _merge(vs[sup[0] : sup[-1] + 1])
    theta = np.einsum("pq,lqr->lpr", op.matrix, theta, optimize=True)
    vs[sup[0] : sup[-1] + 1] = _split(theta, op.k, policy)
    return MpoChoi.from_vectors(vs)


def extend_right(m: MpoChoi, superop: np.ndarray, w: int, policy: TruncationPolicy) -> MpoChoi:
    """Apply a site-major map from the last ``w`` sites onto ``w + 1`` new sites."""
    if not 1 <= w <= m.n_sites:
        raise ValueError(f"map width {w} invalid for {m.n_sites} sites")
    if superop.shape != (VEC ** (w + 1), VEC**w):
        raise ValueError(f"map shape {superop.shape} does not match width {w}")
    vs = m.vectors()
    theta = _merge(vs[-w:])
    theta = np.einsum("pq,lqr->lpr", superop, theta, optimize=True)
    return MpoChoi.from_vectors(vs[:-w] + _split(theta, w + 1, policy))


def reversed_mpo(m: MpoChoi) -> MpoChoi:
    return MpoChoi(tuple(t.transpose(3, 1, 2, 0) for t in reversed(m.tensors)))


def product_mpo(factors: Sequence[MpoChoi]) -> MpoChoi:
    """Tensor product of MPOs on consecutive blocks of sites."""
    return MpoChoi(tuple(t for f in factors for t in f.tensors))
