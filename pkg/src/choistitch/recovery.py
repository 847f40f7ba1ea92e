"""Recovery maps B -> BC: Petz, rotated Petz and the convex least-squares fit.

A recovery map is stored by its Choi matrix X[(b, o), (b', o')] = R(|b><b'|)[o, o'],
input index first. Trace preservation reads Tr_out X = I_in.

For the fit, the predicted window (I_A (x) R)[rho_AB] is linear in X. After the
realignment Rho[(a, a'), (b, b')] = rho_AB[(a, b), (a', b')] it becomes the
matrix product Rho @ Xr with Xr[(b, b'), (o, o')] = X[(b, o), (b', o')], which
makes every ADMM step a small dense linear-algebra operation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .linalg import eigh_psd, hermitize, partial_trace, trace_norm
from .mpo import MpoChoi, TruncationPolicy, extend_right, row_to_site_major

SITE_DIM = 4


@dataclass(frozen=True)
class RecoveryMap:
    choi: np.ndarray
    input_dim: int
    output_dim: int

    def __post_init__(self):
        d = self.input_dim * self.output_dim
        if self.choi.shape != (d, d):
            raise ValueError(f"Choi shape {self.choi.shape} does not match dims {self.input_dim}->{self.output_dim}")

    @property
    def width(self) -> int:
        return round(np.log(self.input_dim) / np.log(SITE_DIM))

    def tp_deviation(self) -> float:
        red = partial_trace(self.choi, [self.input_dim, self.output_dim], keep=[0])
        return float(np.abs(red - np.eye(self.input_dim)).max())

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(hermitize(self.choi)).min())

    def is_cptp(self, psd_tol: float = 1e-8, tp_tol: float = 1e-6) -> bool:
        return self.min_eigenvalue() >= -psd_tol and self.tp_deviation() <= tp_tol

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Apply to a state on (extra systems) (x) B; the map acts on the trailing factor."""
        xr = _realign(self.choi, self.input_dim, self.output_dim)
        d_a = rho.shape[0] // self.input_dim
        rr = _realign(rho, d_a, self.input_dim)
        return _unrealign(rr @ xr, d_a, self.output_dim)


@dataclass(frozen=True)
class SolverParams:
    tolerance: float = 1e-4
    max_iterations: int = 2500
    penalty: float = 1.0
    objective: str = "frobenius"
    relaxation: float = 1.5
    shortcut: bool = True
    adaptive_penalty: bool = True

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")
        if self.objective not in ("frobenius", "trace_norm"):
            raise ValueError(f"unknown objective {self.objective!r}")


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    converged: bool
    method: str = "admm"

    def __post_init__(self):
        for name, kind in (("iterations", int), ("primal_residual", float), ("dual_residual", float),
                           ("objective", float), ("converged", bool)):
            object.__setattr__(self, name, kind(getattr(self, name)))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# -- reshaping helpers --------------------------------------------------------

def _realign(a: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """a[(i, j), (i', j')] -> r[(i, i'), (j, j')]."""
    return a.reshape(d1, d2, d1, d2).transpose(0, 2, 1, 3).reshape(d1 * d1, d2 * d2)


def _unrealign(r: np.ndarray, d1: int, d2: int) -> np.ndarray:
    return r.reshape(d1, d1, d2, d2).transpose(0, 2, 1, 3).reshape(d1 * d2, d1 * d2)


# -- projections ---------------------------------------------------------------

def project_psd(m: np.ndarray) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (eigenvalues clipped at zero)."""
    return eigh_psd(m)


def project_tp(m: np.ndarray, input_dim: int, output_dim: int) -> np.ndarray:
    """Frobenius-nearest point with Tr_out = I_in."""
    red = partial_trace(m, [input_dim, output_dim], keep=[0])
    return m - np.kron(red - np.eye(input_dim), np.eye(output_dim) / output_dim)


def _fix_tp(z: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    """Congruence that makes a PSD Choi matrix exactly trace preserving."""
    red = hermitize(partial_trace(z, [d_in, d_out], keep=[0]))
    vals, vecs = np.linalg.eigh(red)
    if vals.min() <= 1e-12 * max(vals.max(), 1e-300):
        return project_tp(z, d_in, d_out)
    s = np.kron((vecs / np.sqrt(vals)) @ vecs.conj().T, np.eye(d_out))
    return hermitize(s @ z @ s)


# -- Petz-type maps --------------------------------------------------------------

def _check_marginals(rho_bc: np.ndarray, rho_b: np.ndarray) -> tuple[int, int]:
    d_b = rho_b.shape[0]
    d_c = rho_bc.shape[0] // d_b
    if d_b * d_c != rho_bc.shape[0] or d_c < 1:
        raise ValueError(f"inconsistent dims {rho_bc.shape} and {rho_b.shape}")
    if np.abs(partial_trace(rho_bc, [d_b, d_c], keep=[0]) - rho_b).max() > 1e-8:
        raise ValueError("rho_b is not the marginal of rho_bc")
    return d_b, d_c


def _choi_from_conjugations(ks: list[tuple[float, np.ndarray]], d_b: int, d_c: int) -> np.ndarray:
    """Choi of X -> sum_k w_k K_k (X (x) I_C) K_k^dagger."""
    d_o = d_b * d_c
    out = np.zeros((d_b, d_o, d_b, d_o), dtype=complex)
    for w, k in ks:
        k3 = k.reshape(d_o, d_b, d_c)
        out += w * np.einsum("obc,pdc->bodp", k3, k3.conj(), optimize=True)
    return hermitize(out.reshape(d_b * d_o, d_b * d_o))


def _powers(rho: np.ndarray, cutoff: float = 1e-10):
    vals, vecs = np.linalg.eigh(hermitize(rho))
    keep = vals > cutoff * vals.max()
    return vals[keep], vecs[:, keep], vecs[:, ~keep]


def _petz_kraus(rho_bc, rho_b, ts):
    d_b, d_c = rho_b.shape[0], rho_bc.shape[0] // rho_b.shape[0]
    vb, ub, kb = _powers(rho_b)
    vbc, ubc, _ = _powers(rho_bc)
    eye_c = np.eye(d_c)
    ks = []
    for t in ts:
        left = (ubc * vbc ** (0.5 - 1j * t)) @ ubc.conj().T
        mid = (ub * vb ** (-0.5 + 1j * t)) @ ub.conj().T
        ks.append(left @ np.kron(mid, eye_c))
    ker = kb @ kb.conj().T
    return ks, np.kron(ker, eye_c) / np.sqrt(d_c)


def petz_map(rho_bc: np.ndarray, rho_b: np.ndarray) -> RecoveryMap:
    """R(X) = rho_BC^1/2 (rho_B^-1/2 X rho_B^-1/2 (x) I_C) rho_BC^1/2.

    Inputs supported on the kernel of rho_B are mapped to X (x) I_C / d_C.
    """
    d_b, d_c = _check_marginals(rho_bc, rho_b)
    (k,), ker = _petz_kraus(rho_bc, rho_b, [0.0])
    return RecoveryMap(_choi_from_conjugations([(1.0, k), (1.0, ker)], d_b, d_c), d_b, d_b * d_c)


def rotated_petz_map(rho_bc: np.ndarray, rho_b: np.ndarray, quadrature_nodes: int = 65,
                     tail: float = 1e-8) -> RecoveryMap:
    """Petz map averaged over rotations rho^{it} with density pi/2 / (cosh(pi t) + 1).

    With u = tanh(pi t / 2) the density becomes du / 2 on (-1, 1); the range is
    cut where the remaining mass drops below ``tail`` and integrated by
    Gauss-Legendre quadrature.
    """
    if quadrature_nodes < 3:
        raise ValueError("need at least 3 quadrature nodes")
    d_b, d_c = _check_marginals(rho_bc, rho_b)
    u_max = 1.0 - tail
    x, w = np.polynomial.legendre.leggauss(quadrature_nodes)
    u = u_max * x
    w = w / w.sum()
    ts = (2.0 / np.pi) * np.arctanh(u)
    ks, ker = _petz_kraus(rho_bc, rho_b, ts)
    terms = list(zip(w, ks)) + [(1.0, ker)]
    return RecoveryMap(_choi_from_conjugations(terms, d_b, d_c), d_b, d_b * d_c)


def append_state_map(rho_c: np.ndarray, d_b: int) -> RecoveryMap:
    """X -> X (x) rho_C."""
    d_c = rho_c.shape[0]
    # X[(b, (e, g)), (b', (f, h))] = delta_be delta_b'f rho_c[g, h]
    x4 = np.einsum("be,df,gh->begdfh", np.eye(d_b), np.eye(d_b), rho_c)
    d_o = d_b * d_c
    return RecoveryMap(x4.reshape(d_b * d_o, d_b * d_o), d_b, d_o)


# -- convex fit ------------------------------------------------------------------

class _Problem:
    """Realigned least-squares data for the fit."""

    def __init__(self, base: np.ndarray, target: np.ndarray, d_b: int, d_c: int):
        self.d_b, self.d_c = d_b, d_c
        self.d_o = d_b * d_c
        self.d_a = base.shape[0] // d_b
        if self.d_a * d_b != base.shape[0] or target.shape[0] != self.d_a * self.d_o:
            raise ValueError(f"inconsistent dims: base {base.shape}, target {target.shape}")
        rho = _realign(base, self.d_a, d_b)
        tgt = _realign(target, self.d_a, self.d_o)
        self.scale = max(np.linalg.norm(rho, 2), 1e-300)
        self.rho = rho / self.scale
        self.tgt = tgt / self.scale
        self.target = target
        self.e = np.eye(self.d_o).reshape(-1, 1)
        self.g = np.eye(d_b).reshape(-1, 1)
        self.ee = float(self.d_o)
        gram = self.rho.conj().T @ self.rho
        self.mu, self.q = np.linalg.eigh(hermitize(gram))
        # geometric mean of the extreme curvatures, the usual ADMM choice for quadratics
        mu = np.clip(self.mu, 1e-12 * max(self.mu.max(), 1e-300), None)
        self.penalty_scale = float(np.sqrt(mu.min() * mu.max()))
        self.rho_t_tgt = self.rho.conj().T @ self.tgt

    def to_choi(self, xr: np.ndarray) -> np.ndarray:
        return _unrealign(xr, self.d_b, self.d_o)

    def to_xr(self, choi: np.ndarray) -> np.ndarray:
        return _realign(choi, self.d_b, self.d_o)

    def predicted(self, xr: np.ndarray) -> np.ndarray:
        return _unrealign(self.rho @ xr * self.scale, self.d_a, self.d_o)

    def frobenius(self, xr: np.ndarray) -> float:
        return float(np.linalg.norm(self.rho @ xr - self.tgt) * self.scale)

    def trace_residual(self, xr: np.ndarray) -> float:
        return trace_norm(hermitize(self.predicted(xr) - self.target))

    def solve_x(self, f: np.ndarray, shift: float) -> np.ndarray:
        """argmin of the quadratic with Hessian Rho^dag Rho + shift under X e = g."""
        inv = (self.q / (self.mu + shift)) @ self.q.conj().T
        lam = (f @ self.e - ((self.q * (self.mu + shift)) @ self.q.conj().T) @ self.g) / self.ee
        return inv @ (f - lam @ self.e.conj().T)

    def least_squares(self) -> np.ndarray:
        """Minimum-norm solution of the TP-constrained least-squares problem."""
        base = self.g @ self.e.conj().T / self.ee
        resid = self.tgt - self.rho @ base
        proj = np.eye(self.e.shape[0]) - self.e @ self.e.conj().T / self.ee
        return base + np.linalg.pinv(self.rho, rcond=1e-12) @ resid @ proj


def _random_cptp_choi(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d_in * d_out, d_in * d_out)) + 1j * rng.normal(size=(d_in * d_out, d_in * d_out))
    return _fix_tp(g @ g.conj().T, d_in, d_out)


def _is_psd(choi: np.ndarray, tol: float = 1e-12) -> bool:
    vals = np.linalg.eigvalsh(hermitize(choi))
    return vals.min() >= -tol * max(vals.max(), 1.0)


def fit_recovery(
    predicted_base: np.ndarray,
    target: np.ndarray,
    params: SolverParams = SolverParams(),
    init: np.random.Generator | np.ndarray | None = None,
) -> tuple[RecoveryMap, SolverReport]:
    """Fit a CPTP map B -> BC so that (I_A (x) R)[predicted_base] matches ``target``.

    ``predicted_base`` lives on A (x) B with |A| = |B| = w doubled sites and
    ``target`` on A (x) B (x) C with one extra site. If the TP-constrained
    least-squares solution (or, failing that, the Petz map built from the
    target) is already positive and optimal it is returned with zero ADMM
    iterations. Otherwise ADMM alternates the PSD cone with the TP-constrained
    quadratic.

    ``init`` may be a random generator (random CPTP start) or an explicit Choi
    matrix; by default the solver starts from the least-squares point.
    """
    predicted_base = np.asarray(predicted_base, dtype=complex)
    target = np.asarray(target, dtype=complex)
    k_base = round(np.log(predicted_base.shape[0]) / np.log(SITE_DIM))
    if k_base < 1 or SITE_DIM**k_base != predicted_base.shape[0]:
        raise ValueError(f"base shape {predicted_base.shape} is not on doubled sites")
    if target.shape[0] != predicted_base.shape[0] * SITE_DIM:
        raise ValueError(f"target shape {target.shape} must add one site to base {predicted_base.shape}")
    w = (k_base + 1) // 2
    d_b = SITE_DIM**w
    pr = _Problem(predicted_base, target, d_b, SITE_DIM)

    def done(choi, report):
        return RecoveryMap(choi, d_b, pr.d_o), report

    x_ls = pr.least_squares()
    ls_obj = pr.frobenius(x_ls)
    if params.shortcut and params.objective == "frobenius" and init is None:
        choi = hermitize(pr.to_choi(x_ls))
        if _is_psd(choi):
            choi = _fix_tp(project_psd(choi), d_b, pr.d_o)
            return done(choi, SolverReport(0, 0.0, 0.0, pr.frobenius(pr.to_xr(choi)), True, "least-squares"))
        # exact data from a Markov chain: the Petz map attains the least-squares floor
        rho_bc = partial_trace(target, [pr.d_a, d_b, SITE_DIM], keep=[1, 2])
        try:
            cand = petz_map(rho_bc, partial_trace(rho_bc, [d_b, SITE_DIM], keep=[0])).choi
            obj = pr.frobenius(pr.to_xr(cand))
            if obj <= ls_obj + 1e-10 * max(1.0, np.linalg.norm(target)):
                return done(cand, SolverReport(0, 0.0, 0.0, obj, True, "petz"))
        except ValueError:
            pass

    if isinstance(init, np.random.Generator):
        z = _random_cptp_choi(d_b, pr.d_o, init)
    elif init is not None:
        z = np.asarray(init, dtype=complex)
    else:
        z = project_psd(pr.to_choi(x_ls))
    if params.objective == "trace_norm":
        return done(*_admm_trace_norm(pr, z, params))
    return done(*_admm_frobenius(pr, z, params))


def _admm_frobenius(pr: _Problem, z: np.ndarray, params: SolverParams):
    rho_pen = params.penalty * pr.penalty_scale
    alpha = params.relaxation
    zr = pr.to_xr(z)
    u = np.zeros_like(zr)
    r_n = s_n = np.inf
    it = 0
    for it in range(1, params.max_iterations + 1):
        x = pr.solve_x(pr.rho_t_tgt + rho_pen * (zr - u), rho_pen)
        x_hat = alpha * x + (1 - alpha) * zr
        z_old = zr
        zr = pr.to_xr(project_psd(pr.to_choi(x_hat + u)))
        u = u + x_hat - zr
        r = np.linalg.norm(x - zr)
        dz = np.linalg.norm(zr - z_old)
        s = rho_pen * dz
        r_n = r / (1.0 + max(np.linalg.norm(x), np.linalg.norm(zr)))
        s_n = dz / (1.0 + np.linalg.norm(zr))
        if max(r_n, s_n) <= params.tolerance:
            break
        if not params.adaptive_penalty:
            continue
        if r > 10 * s:
            rho_pen *= 2.0
            u /= 2.0
        elif s > 10 * r:
            rho_pen /= 2.0
            u *= 2.0
    choi = _fix_tp(project_psd(pr.to_choi(zr)), pr.d_b, pr.d_o)
    converged = max(r_n, s_n) <= params.tolerance
    obj = pr.frobenius(pr.to_xr(choi))
    method = "admm"
    # candidates: the face ADMM settled on, and the whole cone interior (plain least squares)
    candidates = [_polish(pr, choi)] if choi.shape[0] <= POLISH_MAX_DIM else []
    ls = hermitize(pr.to_choi(pr.least_squares()))
    candidates.append(_fix_tp(project_psd(ls), pr.d_b, pr.d_o) if _is_psd(ls) else None)
    for cand in candidates:
        if cand is None:
            continue
        c_obj = pr.frobenius(pr.to_xr(cand))
        if c_obj <= obj:
            choi, obj, method = cand, c_obj, "admm-polished"
    return choi, SolverReport(it, float(r_n), float(s_n), obj, converged, method)


POLISH_MAX_DIM = 256


def _polish(pr: _Problem, choi: np.ndarray, max_iter: int = 500, rtol: float = 1e-12) -> np.ndarray | None:
    """Exact TP-constrained least squares on the face spanned by the support of ``choi``.

    ADMM identifies the active PSD constraints long before its iterate is
    accurate; once the support is fixed the remaining problem is an
    equality-constrained quadratic, solved here by projected conjugate
    gradients. Returns None when the polished point leaves the PSD cone.
    """
    vals, vecs = np.linalg.eigh(hermitize(choi))
    v = vecs[:, vals > 1e-9 * max(vals.max(), 1e-300)]
    d_b, d_o = pr.d_b, pr.d_o

    def lift(w):
        return v @ w @ v.conj().T

    def normal(w):
        return v.conj().T @ pr.to_choi(pr.rho.conj().T @ (pr.rho @ pr.to_xr(lift(w)))) @ v

    def constraint(w):
        return partial_trace(lift(w), [d_b, d_o], keep=[0])

    def constraint_adj(y):
        return v.conj().T @ np.kron(y, np.eye(d_o)) @ v

    basis = np.eye(d_b * d_b).reshape(-1, d_b, d_b)
    gram = np.stack([constraint(constraint_adj(y)).ravel() for y in basis], axis=1)
    gram_inv = np.linalg.pinv(gram, rcond=1e-12)

    def proj(w):
        return w - constraint_adj((gram_inv @ constraint(w).ravel()).reshape(d_b, d_b))

    w0 = v.conj().T @ choi @ v
    rhs = proj(v.conj().T @ pr.to_choi(pr.rho.conj().T @ pr.tgt) @ v - normal(w0))
    d = np.zeros_like(w0)
    res = rhs.copy()
    p = res.copy()
    rr = np.vdot(res, res).real
    stop = rtol * max(rr, 1e-300)
    for _ in range(max_iter):
        if rr <= stop:
            break
        ap = proj(normal(p))
        pap = np.vdot(p, ap).real
        if pap <= 0:
            break
        a = rr / pap
        d = d + a * p
        res = res - a * ap
        rr_new = np.vdot(res, res).real
        p = res + (rr_new / rr) * p
        rr = rr_new
    w = hermitize(w0 + d)
    wv = np.linalg.eigvalsh(w)
    if wv.min() < -1e-12 * max(wv.max(), 1.0):
        return None
    return _fix_tp(project_psd(lift(w)), d_b, d_o)



def _prox_trace_norm(m: np.ndarray, thresh: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(hermitize(m))
    vals = np.sign(vals) * np.clip(np.abs(vals) - thresh, 0.0, None)
    return (vecs * vals) @ vecs.conj().T


def _admm_trace_norm(pr: _Problem, z: np.ndarray, params: SolverParams):
    """Minimise the trace norm of the window residual with an extra split Y = Rho X - T."""
    rho_pen = params.penalty
    zr = pr.to_xr(z)
    u = np.zeros_like(zr)
    y = pr.rho @ zr - pr.tgt
    u1 = np.zeros_like(y)
    r_n = s_n = np.inf
    it = 0
    for it in range(1, params.max_iterations + 1):
        f = pr.rho.conj().T @ (pr.tgt + y - u1) + (zr - u)
        x = pr.solve_x(f, 1.0)
        z_old, y_old = zr, y
        zr = pr.to_xr(project_psd(pr.to_choi(x + u)))
        v = pr.rho @ x - pr.tgt
        y = _realign(
            _prox_trace_norm(_unrealign(v + u1, pr.d_a, pr.d_o), 1.0 / rho_pen), pr.d_a, pr.d_o
        )
        u = u + x - zr
        u1 = u1 + v - y
        r = np.sqrt(np.linalg.norm(x - zr) ** 2 + np.linalg.norm(v - y) ** 2)
        dz = np.sqrt(np.linalg.norm(zr - z_old) ** 2 + np.linalg.norm(y - y_old) ** 2)
        r_n = r / (1.0 + max(np.linalg.norm(x), np.linalg.norm(zr)))
        s_n = dz / (1.0 + np.linalg.norm(zr))
        if max(r_n, s_n) <= params.tolerance:
            break
    choi = _fix_tp(project_psd(pr.to_choi(zr)), pr.d_b, pr.d_o)
    converged = max(r_n, s_n) <= params.tolerance
    return choi, SolverReport(it, float(r_n), float(s_n), pr.trace_residual(pr.to_xr(choi)), converged, "admm-trace")


def residual_matrix(rmap: RecoveryMap, predicted_base: np.ndarray, target: np.ndarray) -> np.ndarray:
    return rmap.apply(predicted_base) - target


# -- application to the MPO -----------------------------------------------------

def recovery_superop(rmap: RecoveryMap) -> np.ndarray:
    """Site-major superop of the map, from w sites to w + 1 sites."""
    d_b, d_o = rmap.input_dim, rmap.output_dim
    s = rmap.choi.reshape(d_b, d_o, d_b, d_o).transpose(1, 3, 0, 2).reshape(d_o * d_o, d_b * d_b)
    w = rmap.width
    return row_to_site_major(s, w + 1, w)


def apply_recovery(k: MpoChoi, rmap: RecoveryMap, site: int | None, policy: TruncationPolicy) -> MpoChoi:
    """Apply the map to the last ``w`` sites of ``k`` (ending at ``site``), appending one site."""
    w = rmap.width
    if site is None:
        site = k.n_sites - 1
    if site != k.n_sites - 1 or site - w + 1 < 0:
        raise ValueError(f"map must act on the last {w} sites ending at {site}; MPO has {k.n_sites} sites")
    return extend_right(k, recovery_superop(rmap), w, policy)
