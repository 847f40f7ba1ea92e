"""Ground-truth channels: dense oracles, Lindblad TEBD, noisy circuits and Born sampling."""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .linalg import interleave_in_out, permute_subsystems
from .mpo import (
    LocalSuperop,
    MpoChoi,
    TruncationPolicy,
    apply_superop,
    bell_product_mpo,
    compress,
    row_to_site_major,
    trace,
)
from .pauli import BASES, EIGENSTATES, PAULI

MAX_ORACLE_SITES = 4
I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class LindbladSpec:
    """Heisenberg chain with a uniform Z field and Z dephasing on every site."""

    n: int
    gamma_z: float = 1.0
    field: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.gamma_z < 0:
            raise ValueError("gamma_z must be non-negative")


@dataclass(frozen=True)
class EvolutionParams:
    t_final: float
    dt: float = 1e-3

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be non-negative")
        if 0 < self.t_final < self.dt:
            raise ValueError("dt must not exceed t_final")

    @property
    def steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True)
class CircuitSpec:
    """Noisy single gate layer: dephasing after coherent noise after an iSWAP layer.

    The base layer acts on bonds (0,1), (2,3), ...; the coherent-noise layer
    acts on those bonds and then on (1,2), (3,4), ... with strength
    epsilon = r * gamma and per-bond coefficients drawn from ``seed``.
    """

    n: int
    gamma: float = 0.0
    r: float = 1.0
    seed: int = 0
    base_angle: float = np.pi / 4
    alphas: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.r < 0:
            raise ValueError("r must be non-negative")
        rng = np.random.default_rng(self.seed)
        a = rng.uniform(0.0, 1.0, size=(max(self.n - 1, 0), 3))
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)

    @property
    def epsilon(self) -> float:
        return self.r * self.gamma

    def ideal(self) -> CircuitSpec:
        return CircuitSpec(self.n, 0.0, self.r, self.seed, self.base_angle)

    @property
    def is_unitary(self) -> bool:
        return self.gamma == 0.0


# -- local generators -------------------------------------------------------

def _two_qubit(a: str, b: str) -> np.ndarray:
    return np.kron(PAULI[a], PAULI[b])


def exchange_hamiltonian() -> np.ndarray:
    return 0.5 * (_two_qubit("X", "X") + _two_qubit("Y", "Y") + _two_qubit("Z", "Z"))


def base_gate(angle: float = np.pi / 4) -> np.ndarray:
    return expm(1j * angle * (_two_qubit("X", "X") + _two_qubit("Y", "Y")))


def noise_gate(epsilon: float, alpha: Sequence[float]) -> np.ndarray:
    g = alpha[0] * _two_qubit("X", "X") + alpha[1] * _two_qubit("Y", "Y") + alpha[2] * _two_qubit("Z", "Z")
    return expm(1j * epsilon * g)


def liouvillian(h: np.ndarray, jumps: Sequence[np.ndarray] = ()) -> np.ndarray:
    """Generator of the master equation in row-major vectorisation."""
    d = h.shape[0]
    eye = np.eye(d)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for l in jumps:
        ll = l.conj().T @ l
        gen += np.kron(l, l.conj()) - 0.5 * np.kron(ll, eye) - 0.5 * np.kron(eye, ll.T)
    return gen


def dephasing_superop(gamma: float) -> np.ndarray:
    """Row-major superop of rho -> (1-gamma) rho + gamma Z rho Z on one qubit."""
    z = PAULI["Z"]
    return (1 - gamma) * np.eye(4) + gamma * np.kron(z, z.conj())


def _on_out(op: np.ndarray, k: int) -> np.ndarray:
    """Embed an operator on k out-qubits into k doubled sites as I_in (x) op."""
    full = np.kron(np.eye(2**k), op)
    perm = [p for j in range(k) for p in (j, k + j)]
    return permute_subsystems(full, [2] * (2 * k), perm)


def _superop_on_out(s: np.ndarray) -> np.ndarray:
    """Lift a row-major one-qubit superop to a doubled site (identity on in)."""
    # doubled-site operator index (i, o); map acts on o only
    t = s.reshape(2, 2, 2, 2)  # (o_r, o_c, o_r', o_c')
    full = np.einsum("ab,cd,xyzw->axcybzdw", I2, I2, t)
    return full.reshape(16, 16)


# -- dense oracle ------------------------------------------------------------

def _choi_from_superop(s: np.ndarray, n: int) -> np.ndarray:
    d = 2**n
    # J[(i, a), (j, b)] = Lambda(|i><j|)[a, b] / d
    j = s.reshape(d, d, d, d).transpose(2, 0, 3, 1).reshape(d * d, d * d) / d
    return interleave_in_out(j, n)


def _embed(op: np.ndarray, first: int, n: int) -> np.ndarray:
    k = round(np.log2(op.shape[0]))
    return np.kron(np.kron(np.eye(2**first), op), np.eye(2 ** (n - first - k)))


def _embed_superop(s1: np.ndarray, site: int, n: int) -> np.ndarray:
    """Row-major superop of a one-qubit map acting on ``site`` of n qubits."""
    d = 2**n
    t = s1.reshape(2, 2, 2, 2)
    eye = np.eye(2)
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    ro, co, ri, ci = (letters[k * n : (k + 1) * n] for k in range(4))
    ops, terms = [], []
    for q in range(n):
        if q == site:
            terms.append(ro[q] + co[q] + ri[q] + ci[q])
            ops.append(t)
        else:
            terms += [ro[q] + ri[q], co[q] + ci[q]]
            ops += [eye, eye]
    out = np.einsum(",".join(terms) + "->" + ro + co + ri + ci, *ops)
    return out.reshape(d * d, d * d)


def lindblad_generator_dense(spec: LindbladSpec) -> np.ndarray:
    n = spec.n
    h = sum(spec.field * _embed(PAULI["Z"], i, n) for i in range(n))
    h = h + sum(_embed(exchange_hamiltonian(), i, n) for i in range(n - 1))
    jumps = [np.sqrt(spec.gamma_z) * _embed(PAULI["Z"], i, n) for i in range(n)]
    return liouvillian(np.asarray(h, dtype=complex), jumps)


def circuit_superop_dense(spec: CircuitSpec) -> np.ndarray:
    n = spec.n
    u = np.eye(2**n, dtype=complex)
    g = base_gate(spec.base_angle)
    for i in range(0, n - 1, 2):
        u = _embed(g, i, n) @ u
    for start in (0, 1):
        for i in range(start, n - 1, 2):
            u = _embed(noise_gate(spec.epsilon, spec.alphas[i]), i, n) @ u
    s = np.kron(u, u.conj())
    for i in range(n):
        s = _embed_superop(dephasing_superop(spec.gamma), i, n) @ s
    return s


def dense_channel_oracle(spec: LindbladSpec | CircuitSpec, params: EvolutionParams | None = None) -> np.ndarray:
    """Exact Choi state by building and exponentiating (or composing) the full superop."""
    if spec.n > MAX_ORACLE_SITES:
        raise ValueError(f"dense oracle limited to {MAX_ORACLE_SITES} sites, got {spec.n}")
    if isinstance(spec, LindbladSpec):
        if params is None:
            raise ValueError("Lindblad oracle needs evolution params")
        s = expm(params.t_final * lindblad_generator_dense(spec))
    else:
        s = circuit_superop_dense(spec)
    return _choi_from_superop(s, spec.n)


# -- MPO evolution -----------------------------------------------------------

def lindblad_step_superops(spec: LindbladSpec, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Site-major propagators (one-site, two-site) for one Trotter step of length dt."""
    z = _on_out(PAULI["Z"], 1)
    one = expm(dt * liouvillian(spec.field * z, [np.sqrt(spec.gamma_z) * z]))
    two = expm(dt * liouvillian(_on_out(exchange_hamiltonian(), 2)))
    return one, row_to_site_major(two, 2, 2)


def lindblad_trajectory(
    spec: LindbladSpec,
    times: Sequence[float],
    dt: float = 1e-3,
    policy: TruncationPolicy = TruncationPolicy(),
) -> Iterator[tuple[float, MpoChoi]]:
    """Yield (t, Choi MPO) at each requested time, evolving with first-order Trotter steps."""
    one, two = lindblad_step_superops(spec, dt)
    m = bell_product_mpo(spec.n)
    done = 0
    for t in sorted(times):
        target = int(round(t / dt))
        while done < target:
            for i in range(spec.n):
                m = apply_superop(m, LocalSuperop(one, i), policy)
            for start in (0, 1):
                for i in range(start, spec.n - 1, 2):
                    m = apply_superop(m, LocalSuperop(two, i), policy)
            m = compress(m, policy)
            done += 1
        yield t, m


def lindblad_choi_evolve(
    spec: LindbladSpec, params: EvolutionParams, policy: TruncationPolicy = TruncationPolicy()
) -> MpoChoi:
    _, m = next(lindblad_trajectory(spec, [params.steps * params.dt], params.dt, policy))
    return m


def circuit_choi(spec: CircuitSpec, policy: TruncationPolicy = TruncationPolicy()) -> MpoChoi:
    m = bell_product_mpo(spec.n)
    g = _on_out(base_gate(spec.base_angle), 2)
    for i in range(0, spec.n - 1, 2):
        m = apply_superop(m, LocalSuperop.conjugation(g, i), policy)
    if spec.epsilon > 0:
        for start in (0, 1):
            for i in range(start, spec.n - 1, 2):
                u = _on_out(noise_gate(spec.epsilon, spec.alphas[i]), 2)
                m = apply_superop(m, LocalSuperop.conjugation(u, i), policy)
    if spec.gamma > 0:
        deph = _superop_on_out(dephasing_superop(spec.gamma))
        for i in range(spec.n):
            m = apply_superop(m, LocalSuperop(deph, i), policy)
    return compress(m, policy)


# -- Born sampling -----------------------------------------------------------

@dataclass(frozen=True)
class ShotRecords:
    """Columnar store of shots. Bases index into "XYZ"; signs are +1/-1."""

    in_basis: np.ndarray
    in_sign: np.ndarray
    out_basis: np.ndarray
    out_sign: np.ndarray

    def __post_init__(self):
        shapes = {a.shape for a in (self.in_basis, self.in_sign, self.out_basis, self.out_sign)}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise ValueError("record arrays must share a (shots, sites) shape")

    @property
    def shots(self) -> int:
        return self.in_basis.shape[0]

    @property
    def n_sites(self) -> int:
        return self.in_basis.shape[1]

    def __len__(self) -> int:
        return self.shots

    def __getitem__(self, idx) -> ShotRecords:
        if isinstance(idx, int):
            idx = slice(idx, idx + 1)
        return ShotRecords(self.in_basis[idx], self.in_sign[idx], self.out_basis[idx], self.out_sign[idx])

    def to_dicts(self) -> Iterator[dict]:
        for s in range(self.shots):
            yield {
                "in": [[BASES[b], int(v)] for b, v in zip(self.in_basis[s], self.in_sign[s])],
                "out": [[BASES[b], int(v)] for b, v in zip(self.out_basis[s], self.out_sign[s])],
            }

    @classmethod
    def from_dicts(cls, rows: Sequence[dict]) -> ShotRecords:
        if not rows:
            raise ValueError("no shot records")
        try:
            ib = np.array([[BASES.index(b) for b, _ in r["in"]] for r in rows], dtype=np.int8)
            isg = np.array([[s for _, s in r["in"]] for r in rows], dtype=np.int8)
            ob = np.array([[BASES.index(b) for b, _ in r["out"]] for r in rows], dtype=np.int8)
            osg = np.array([[s for _, s in r["out"]] for r in rows], dtype=np.int8)
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"malformed shot record: {exc}") from exc
        if not (np.isin(isg, (-1, 1)).all() and np.isin(osg, (-1, 1)).all()):
            raise ValueError("signs must be +1 or -1")
        return cls(ib, isg, ob, osg)

    @staticmethod
    def concatenate(parts: Sequence[ShotRecords]) -> ShotRecords:
        return ShotRecords(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                             ("in_basis", "in_sign", "out_basis", "out_sign")))


def _projector(basis: int, sign_idx: int) -> np.ndarray:
    v = EIGENSTATES[basis, sign_idx]
    return np.outer(v, v.conj())


def _site_effects(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Transfer matrices for every local configuration of one site.

    Returns ``marg[cin]`` with the output summed out and ``full[cin, cout]``
    where cin = 2 * in_basis + in_sign_idx and cout likewise for the output.
    Each carries the factor 2 that makes the Born probabilities normalised.
    """
    proj = np.stack([_projector(b, s) for b in range(3) for s in range(2)])  # (6, 2, 2)
    eff_in = proj.transpose(0, 2, 1)  # rho_in^T
    # effect E = 2 * (rho_in^T (x) Pi_out) on (in, out); Tr[W E] = sum W[r, c] E[c, r]
    e = 2 * np.einsum("iab,ocd->ioacbd", eff_in, proj).reshape(6, 6, 4, 4)
    full = np.einsum("lrcR,iocr->iolR", t, e, optimize=True)
    e_marg = 2 * np.einsum("iab,cd->iacbd", eff_in, I2).reshape(6, 4, 4)
    marg = np.einsum("lrcR,icr->ilR", t, e_marg, optimize=True)
    return marg, full


def _sample_block(m: MpoChoi, effects, shots: int, rng: np.random.Generator) -> ShotRecords:
    n = m.n_sites
    in_basis = rng.integers(0, 3, size=(shots, n)).astype(np.int8)
    in_sidx = rng.integers(0, 2, size=(shots, n)).astype(np.int8)
    out_basis = rng.integers(0, 3, size=(shots, n)).astype(np.int8)
    cin = 2 * in_basis + in_sidx

    right = [None] * (n + 1)
    right[n] = np.ones((shots, 1), dtype=complex)
    for j in range(n - 1, -1, -1):
        marg = effects[j][0]
        r = np.empty((shots, marg.shape[1]), dtype=complex)
        for c in range(6):
            idx = np.nonzero(cin[:, j] == c)[0]
            r[idx] = right[j + 1][idx] @ marg[c].T
        scale = np.abs(r).max(axis=1, keepdims=True)
        right[j] = r / np.where(scale > 0, scale, 1.0)

    out_sidx = np.zeros((shots, n), dtype=np.int8)
    left = np.ones((shots, 1), dtype=complex)
    u = rng.random(size=(shots, n))
    for j in range(n):
        full = effects[j][1]
        new_left = np.empty((shots, full.shape[3]), dtype=complex)
        for c in range(6):
            for b in range(3):
                idx = np.nonzero((cin[:, j] == c) & (out_basis[:, j] == b))[0]
                if idx.size == 0:
                    continue
                lp = left[idx] @ full[c, 2 * b]
                lm = left[idx] @ full[c, 2 * b + 1]
                pp = np.clip(np.einsum("sr,sr->s", lp, right[j + 1][idx]).real, 0.0, None)
                pm = np.clip(np.einsum("sr,sr->s", lm, right[j + 1][idx]).real, 0.0, None)
                tot = pp + pm
                tot = np.where(tot > 0, tot, 1.0)
                minus = u[idx, j] >= pp / tot
                out_sidx[idx, j] = minus
                chosen = np.where(minus[:, None], lm, lp)
                scale = np.abs(chosen).max(axis=1, keepdims=True)
                new_left[idx] = chosen / np.where(scale > 0, scale, 1.0)
        left = new_left
    sign = lambda s: (1 - 2 * s).astype(np.int8)  # noqa: E731
    return ShotRecords(in_basis, sign(in_sidx), out_basis, sign(out_sidx))


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def sample_records(
    m: MpoChoi, shots: int, seed: int = 0, block_size: int = 4096, workers: int = 1
) -> ShotRecords:
    """Draw shots with uniform random Pauli preparations and measurements.

    Outcomes follow the Born rule of the Choi MPO via sequential conditional
    sampling. Shots are split into fixed blocks, each with its own counter-based
    stream keyed on (seed, block), so the result is independent of ``workers``.
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    tr = trace(m)
    if abs(tr - 1.0) > 1e-4:
        raise ValueError(f"MPO is not normalised (trace {tr:.6g})")
    effects = [_site_effects(t) for t in m.tensors]
    sizes = [min(block_size, shots - s) for s in range(0, shots, block_size)]

    def run(b: int) -> ShotRecords:
        return _sample_block(m, effects, sizes[b], block_rng(seed, b))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    return ShotRecords.concatenate(parts)


def born_probability(choi: np.ndarray, in_states: Sequence[np.ndarray], out_states: Sequence[np.ndarray]) -> float:
    """Dense Born probability d^n <psi_in* (x) psi_out| J |psi_in* (x) psi_out>."""
    v = np.ones(1, dtype=complex)
    for a, b in zip(in_states, out_states):
        v = np.kron(v, np.kron(a.conj(), b))
    return float((2 ** len(in_states)) * (v.conj() @ choi @ v).real)
