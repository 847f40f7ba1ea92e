"""Sequential stitching of window estimates into a global Choi MPO, plus planning formulas.

Sites are 0-based. Window ``i`` covers sites i-2w .. i, so windows exist for
i = 2w .. n-1. Step i extends the current estimate on sites 0..i by one site
using a map fitted from the last 2w sites of the estimate to window i+1.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import trace_distance
from .linalg import partial_trace, permute_subsystems
from .mpo import (
    MAX_DENSE_SITES,
    MpoChoi,
    TruncationPolicy,
    compress,
    mpo_from_dense,
    reversed_mpo,
    trace,
    window_marginal,
)
from .recovery import RecoveryMap, SolverParams, SolverReport, apply_recovery, fit_recovery, petz_map
from .shadows import NoiseModel, WindowEstimate, estimate_window, perturb_coefficients, window_error
from .simulate import ShotRecords

log = logging.getLogger(__name__)

SOURCES = ("exact-marginals", "shadow-estimates", "noisy-marginals")


@dataclass(frozen=True)
class ReconstructionConfig:
    n: int
    w: int = 1
    policy: TruncationPolicy = TruncationPolicy()
    solver: SolverParams = SolverParams()
    source: str = "exact-marginals"
    direction: str = "left"

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("w must be at least 1")
        if self.n < 2 * self.w + 1:
            raise ValueError(f"n = {self.n} is smaller than a window of {2 * self.w + 1} sites")
        if 2 * self.w > MAX_DENSE_SITES:
            raise ValueError(f"w = {self.w} needs dense marginals beyond {MAX_DENSE_SITES} sites")
        if self.source not in SOURCES:
            raise ValueError(f"unknown window source {self.source!r}")
        if self.direction not in ("left", "right"):
            raise ValueError("direction must be 'left' or 'right'")


@dataclass(frozen=True)
class StepRecord:
    i: int
    report: SolverReport
    residual: float  # half trace norm between the stitched window and its target
    bond_dim: int
    flagged: bool = False


@dataclass
class ReconstructionResult:
    estimate: MpoChoi
    steps: list[StepRecord]
    window_errors: dict[int, float] = field(default_factory=dict)
    trace_drift: float = 0.0

    @property
    def flagged(self) -> bool:
        return any(s.flagged for s in self.steps)


def window_keys(n: int, w: int) -> range:
    return range(2 * w, n)


def window_sites(i: int, w: int) -> range:
    return range(i - 2 * w, i + 1)


def _dense(est) -> np.ndarray:
    return est.projected if isinstance(est, WindowEstimate) else np.asarray(est, dtype=complex)


def _fit_step(base, target, solver: SolverParams) -> tuple[RecoveryMap, SolverReport, bool]:
    rmap, rep = fit_recovery(base, target, solver)
    if rep.converged:
        return rmap, rep, False
    log.warning("fit did not converge (%d iterations); retrying with 4x budget", rep.iterations)
    rmap, rep = fit_recovery(base, target, replace(solver, max_iterations=4 * solver.max_iterations))
    if rep.converged:
        return rmap, rep, False
    log.warning("fit failed again; falling back to the Petz map of the target")
    d_a = base.shape[0] // rmap.input_dim
    rho_bc = partial_trace(target, [d_a, rmap.input_dim, 4], keep=[1, 2])
    rho_b = partial_trace(rho_bc, [rmap.input_dim, 4], keep=[0])
    pm = petz_map(rho_bc, rho_b)
    return pm, replace(rep, method="petz-fallback"), True


def _reverse_window(a: np.ndarray) -> np.ndarray:
    k = round(np.log(a.shape[0]) / np.log(4))
    return permute_subsystems(a, [4] * k, list(range(k - 1, -1, -1)))


def reconstruct(estimates: Mapping[int, np.ndarray | WindowEstimate], config: ReconstructionConfig) -> ReconstructionResult:
    """Stitch window estimates left to right (or mirrored, for diagnostics)."""
    n, w = config.n, config.w
    missing = [i for i in window_keys(n, w) if i not in estimates]
    if missing:
        raise ValueError(f"missing window estimates for i = {missing}")
    wins = {i: _dense(estimates[i]) for i in window_keys(n, w)}
    if config.direction == "right":
        # window i on sites i-2w..i becomes window n-1-(i-2w) of the mirrored chain
        wins = {n - 1 - (i - 2 * w): _reverse_window(a) for i, a in wins.items()}
    result = _stitch(wins, config)
    if config.direction == "right":
        result.estimate = reversed_mpo(result.estimate)
    return result


def _stitch(wins: dict[int, np.ndarray], config: ReconstructionConfig) -> ReconstructionResult:
    n, w = config.n, config.w
    k = mpo_from_dense(wins[2 * w], config.policy)
    steps = []
    for i in range(2 * w, n - 1):
        base = window_marginal(k, range(i - 2 * w + 1, i + 1))
        target = wins[i + 1]
        rmap, rep, flagged = _fit_step(base, target, config.solver)
        k = compress(apply_recovery(k, rmap, i, config.policy), config.policy)
        resid = trace_distance(window_marginal(k, window_sites(i + 1, w)), target)
        steps.append(StepRecord(i, rep, resid, k.max_bond, flagged))
        log.debug("step %d: %s residual %.3e bond %d", i, rep.method, resid, k.max_bond)
    tr = trace(k)
    drift = abs(tr - 1.0)
    t0 = k.tensors[0] / tr
    k = MpoChoi((t0,) + k.tensors[1:])
    return ReconstructionResult(k, steps, trace_drift=float(drift))


# -- window sources -----------------------------------------------------------

def exact_windows(m: MpoChoi, w: int) -> dict[int, np.ndarray]:
    return {i: window_marginal(m, window_sites(i, w)) for i in window_keys(m.n_sites, w)}


def noisy_windows(m: MpoChoi, w: int, sigma: float, seed: int = 0) -> tuple[dict[int, np.ndarray], dict[int, float]]:
    """Exact marginals with Gaussian Pauli-coefficient noise; also returns eta_i per window."""
    out, etas = {}, {}
    for i, truth in exact_windows(m, w).items():
        rng = np.random.default_rng([seed, i])
        est = perturb_coefficients(truth, NoiseModel(sigma, seed), rng)
        out[i] = est
        etas[i] = window_error(est, truth)
    return out, etas


def shadow_windows(records: ShotRecords, w: int) -> dict[int, WindowEstimate]:
    return {i: estimate_window(records, window_sites(i, w)) for i in window_keys(records.n_sites, w)}


# -- planning formulas ---------------------------------------------------------

@dataclass(frozen=True)
class CmiBudget:
    """Decay constants (a, xi), target accuracy, failure probability and proof constants."""

    a: float
    xi: float
    epsilon: float
    delta: float
    b: float = 1.0
    C: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0

    def __post_init__(self):
        for name in ("a", "xi", "b", "C", "c1", "c2", "c3"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise ValueError("epsilon and delta must lie in (0, 1)")


def width_requirement(budget: CmiBudget, n: int) -> int:
    """Smallest integer w >= max(1, 4 xi ln[x ln x]) with x = b n / epsilon."""
    x = budget.b * n / budget.epsilon
    if x <= math.e:
        raise ValueError(f"b n / epsilon = {x:.4g} must exceed e")
    return max(1, math.ceil(4 * budget.xi * math.log(x * math.log(x))))


def window_accuracy_requirement(budget: CmiBudget, w: int) -> float:
    return budget.a / 2 * math.exp(-w / (2 * budget.xi))


def shadow_sample_bound(k: int, eta: float, delta: float, n: int, C: float = 1.0) -> int:
    """M = ceil(C 144^k / eta^2 ln[(24 n)^{2k} / delta]) for windows of k sites."""
    log_term = 2 * k * math.log(24 * n) - math.log(delta)
    return math.ceil(C * 144.0**k / eta**2 * log_term)


def sample_complexity(budget: CmiBudget, n: int, w: int | None = None) -> int:
    w = width_requirement(budget, n) if w is None else w
    eta = window_accuracy_requirement(budget, w)
    return shadow_sample_bound(2 * w + 1, eta, budget.delta, n, budget.C)
