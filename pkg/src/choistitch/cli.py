"""Command-line entry point: pipeline verbs and the demo experiments.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (flagged
steps or a degenerate estimate), 4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .diagnostics import (
    cmi_decay_scan,
    fidelity_to_unitary,
    fuchs_vdg_bounds,
    mpo_frobenius_distance,
    trace_distance,
)
from .io import (
    FormatError,
    load_mpo,
    read_records,
    save_mpo,
    window_estimates_from_json,
    window_estimates_to_json,
    write_csv,
    write_json,
    write_records,
)
from .mpo import MAX_DENSE_SITES, MpoChoi, bell_product_mpo, dense_from_mpo, overlap, purity, trace, weight_resolved_diagonals, window_marginal
from .reconstruct import (
    ReconstructionConfig,
    ReconstructionResult,
    exact_windows,
    noisy_windows,
    reconstruct,
    shadow_windows,
    window_keys,
    window_sites,
)
from .shadows import estimate_window, window_error
from .simulate import CircuitSpec, EvolutionParams, circuit_choi, lindblad_choi_evolve, lindblad_trajectory, sample_records

log = logging.getLogger("choistitch")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
K_MAX = 2  # weights entering the global Delta_R summary


class NumericalFailure(RuntimeError):
    pass


# -- shared pipeline pieces ------------------------------------------------------

def _check(cfg: ExperimentConfig) -> None:
    """Build every spec once so invalid combinations surface as configuration errors."""
    try:
        if cfg.kind == "lindblad":
            cfg.lindblad_spec()
            EvolutionParams(cfg.t_final, cfg.dt)
        elif cfg.kind == "circuit":
            cfg.circuit_spec()
        if cfg.experiment in ("reconstruct", "lindblad-demo", "circuit-demo"):
            ReconstructionConfig(cfg.n, cfg.w, cfg.policy, cfg.solver, cfg.source, cfg.direction)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_truth(cfg: ExperimentConfig, n: int | None = None) -> MpoChoi:
    cfg = cfg if n is None else replace(cfg, n=n)
    if cfg.kind == "identity":
        return bell_product_mpo(cfg.n)
    if cfg.kind == "circuit":
        return circuit_choi(cfg.circuit_spec(), cfg.policy)
    return lindblad_choi_evolve(cfg.lindblad_spec(), EvolutionParams(cfg.t_final, cfg.dt), cfg.policy)


def _recon_config(cfg: ExperimentConfig, n: int) -> ReconstructionConfig:
    return ReconstructionConfig(n, cfg.w, cfg.policy, cfg.solver, cfg.source, cfg.direction)


def _windows_from_truth(cfg: ExperimentConfig, truth: MpoChoi) -> tuple[dict, dict[int, float]]:
    """Window estimates from the configured source and their errors eta_i."""
    if cfg.source == "exact-marginals":
        return exact_windows(truth, cfg.w), {i: 0.0 for i in window_keys(truth.n_sites, cfg.w)}
    if cfg.source == "noisy-marginals":
        return noisy_windows(truth, cfg.w, cfg.sigma, cfg.seed)
    records = sample_records(truth, cfg.shots, cfg.seed, workers=cfg.threads)
    wins = shadow_windows(records, cfg.w)
    return wins, {i: window_error(e, window_marginal(truth, e.window)) for i, e in wins.items()}


def _step_rows(res: ReconstructionResult, etas: dict[int, float]):
    # step i fits against window i + 1
    return [
        (s.i, s.residual, s.report.iterations, s.bond_dim, etas.get(s.i + 1, float("nan")), s.report.method, s.flagged)
        for s in res.steps
    ]


STEP_COLUMNS = ("i", "residual", "iterations", "bond_dim", "eta_i", "method", "flagged")


def _summary(cfg: ExperimentConfig, est: MpoChoi, truth: MpoChoi | None, res: ReconstructionResult) -> dict:
    n = est.n_sites
    k_max = min(n, K_MAX + 1)
    out = {
        "version": __version__,
        "config": cfg.resolved,
        "n": n,
        "w": cfg.w,
        "source": cfg.source,
        "flagged_steps": [s.i for s in res.steps if s.flagged],
        "trace_drift": res.trace_drift,
        "purity_reconstructed": purity(est),
        "G_k_reconstructed": weight_resolved_diagonals(est, k_max).tolist(),
        "bond_dims": list(est.bond_dims),
    }
    if cfg.kind == "circuit":
        ideal = cfg.circuit_spec().ideal()
        out["fidelity_to_ideal_reconstructed"] = fidelity_to_unitary(est, ideal)
    if truth is not None:
        p_truth = purity(truth)
        out["purity_exact"] = p_truth
        out["G_k_exact"] = weight_resolved_diagonals(truth, k_max).tolist()
        out["frobenius_distance"] = mpo_frobenius_distance(est, truth)
        if n <= MAX_DENSE_SITES:
            out["trace_distance"] = trace_distance(dense_from_mpo(est), dense_from_mpo(truth))
        elif abs(p_truth - 1.0) < 1e-9:
            # pure truth: 1/2||rho - psi||_1 <= sqrt(1 - <psi|rho|psi>)
            f = min(max(overlap(est, truth), 0.0), 1.0)
            out["trace_distance_upper_bound"] = fuchs_vdg_bounds(f)[1]
            out["fidelity_to_truth"] = f
        if cfg.kind == "circuit":
            out["fidelity_to_ideal_exact"] = fidelity_to_unitary(truth, cfg.circuit_spec().ideal())
    return out


def _run_pipeline(cfg: ExperimentConfig, wins, etas, truth: MpoChoi | None, out: Path) -> int:
    n = truth.n_sites if truth is not None else max(wins) + 1
    res = reconstruct(wins, _recon_config(cfg, n))
    save_mpo(out / "estimate.mpo", res.estimate)
    write_csv(out / "steps.csv", STEP_COLUMNS, _step_rows(res, etas), cfg.resolved, __version__)
    write_json(out / "summary.json", _summary(cfg, res.estimate, truth, res))
    if res.flagged:
        raise NumericalFailure(f"flagged steps: {[s.i for s in res.steps if s.flagged]}")
    return EXIT_OK


def _pool_map(cfg: ExperimentConfig, fn, items):
    items = list(items)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -- verbs ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    m = build_truth(cfg)
    save_mpo(cfg.out / "truth.mpo", m)
    write_json(
        cfg.out / "truth.json",
        {"version": __version__, "config": cfg.resolved, "n": m.n_sites, "bond_dims": list(m.bond_dims),
         "trace": trace(m).real, "purity": purity(m)},
    )
    return EXIT_OK


def _truth_path(cfg: ExperimentConfig, args) -> Path:
    return Path(args.truth) if getattr(args, "truth", None) else cfg.out / "truth.mpo"


def cmd_sample(cfg: ExperimentConfig, args) -> int:
    m = load_mpo(_truth_path(cfg, args))
    write_records(cfg.out / "records.jsonl", sample_records(m, cfg.shots, cfg.seed, workers=cfg.threads))
    return EXIT_OK


def cmd_estimate(cfg: ExperimentConfig, args) -> int:
    records = read_records(Path(args.records) if args.records else cfg.out / "records.jsonl")
    truth = load_mpo(args.truth) if args.truth else None
    keys = window_keys(records.n_sites, cfg.w)
    ests = dict(zip(keys, _pool_map(cfg, lambda i: estimate_window(records, window_sites(i, cfg.w)), keys)))
    rows = []
    for i, e in ests.items():
        eta = window_error(e, window_marginal(truth, e.window)) if truth is not None else float("nan")
        rows.append((i, e.shots, eta))
    write_json(cfg.out / "windows.json", {"version": __version__, "config": cfg.resolved, "w": cfg.w,
                                          "windows": window_estimates_to_json(ests)})
    write_csv(cfg.out / "windows.csv", ("i", "M", "eta_i"), rows, cfg.resolved, __version__)
    return EXIT_OK


def cmd_reconstruct(cfg: ExperimentConfig, args) -> int:
    if args.windows:
        import json

        with open(args.windows) as fh:
            data = json.load(fh)
        if data.get("w", cfg.w) != cfg.w:
            raise ConfigError(f"window file was built with w={data['w']}, config has w={cfg.w}")
        wins = window_estimates_from_json(data.get("windows", {}))
        if not wins:
            raise FormatError(f"{args.windows}: no windows")
        truth = load_mpo(args.truth) if args.truth else None
        etas = ({i: window_error(e, window_marginal(truth, e.window)) for i, e in wins.items()}
                if truth is not None else {})
        cfg = replace(cfg, n=max(wins) + 1, source="shadow-estimates")
        return _run_pipeline(cfg, wins, etas, truth, cfg.out)
    truth = load_mpo(_truth_path(cfg, args))
    cfg = replace(cfg, n=truth.n_sites)
    _check(cfg)
    wins, etas = _windows_from_truth(cfg, truth)
    return _run_pipeline(cfg, wins, etas, truth, cfg.out)


def cmd_diagnose(cfg: ExperimentConfig, args) -> int:
    m = load_mpo(args.input if args.input else cfg.out / "estimate.mpo")
    truth = load_mpo(args.truth) if args.truth else None
    rows = [("trace", "", trace(m).real), ("purity", "", purity(m))]
    for k, g in enumerate(weight_resolved_diagonals(m, m.n_sites)):
        rows.append(("G_k", f"k={k}", g))
    for r in cmi_decay_scan(m, min(cfg.max_b, MAX_DENSE_SITES - 2)):
        rows.append(("max_cmi", f"b={r.buffer}", r.max_cmi))
        rows.extend(("cmi", f"b={r.buffer};p={p}", v) for p, v in enumerate(r.values))
    if truth is not None:
        if truth.n_sites != m.n_sites:
            raise FormatError("truth and estimate have different lengths")
        rows.append(("frobenius_distance", "", mpo_frobenius_distance(m, truth)))
        rows.append(("overlap", "", overlap(m, truth)))
        if m.n_sites <= MAX_DENSE_SITES:
            rows.append(("trace_distance", "", trace_distance(dense_from_mpo(m), dense_from_mpo(truth))))
    write_csv(cfg.out / "diagnostics.csv", ("observable", "parameters", "value"), rows, cfg.resolved, __version__)
    return EXIT_OK


# -- demos -----------------------------------------------------------------------------

def demo_lindblad(cfg: ExperimentConfig) -> int:
    spec = cfg.lindblad_spec()
    rcfg = _recon_config(replace(cfg, source="exact-marginals"), cfg.n)
    times = sorted(set(cfg.times) | set(cfg.sweep_times))
    truths = dict(lindblad_trajectory(spec, times, cfg.dt, cfg.policy))
    k_all = cfg.n

    def exact_point(t):
        res = reconstruct(exact_windows(truths[t], cfg.w), rcfg)
        return t, res

    rows, flagged = [], 0
    for t, res in _pool_map(cfg, exact_point, sorted(cfg.times)):
        ge = weight_resolved_diagonals(truths[t], k_all)
        gr = weight_resolved_diagonals(res.estimate, k_all)
        flagged += res.flagged
        rows.extend((t, 0.0, 0, k, ge[k], gr[k], abs(ge[k] - gr[k]), 0.0) for k in range(k_all + 1))

    ncfg = replace(rcfg, source="noisy-marginals")
    points = [(t, s, seed) for t in cfg.sweep_times for s in cfg.sigma_grid for seed in range(cfg.seeds)]

    def noisy_point(p):
        t, sigma, seed = p
        wins, etas = noisy_windows(truths[t], cfg.w, sigma, cfg.seed + seed)
        return p, reconstruct(wins, ncfg), max(etas.values())

    sweep = []
    for (t, sigma, seed), res, eta in _pool_map(cfg, noisy_point, points):
        ge = weight_resolved_diagonals(truths[t], k_all)
        gr = weight_resolved_diagonals(res.estimate, k_all)
        flagged += res.flagged
        rows.extend((t, sigma, seed, k, ge[k], gr[k], abs(ge[k] - gr[k]), eta) for k in range(k_all + 1))
        sweep.append((t, sigma, seed, float(np.abs(ge - gr)[: K_MAX + 1].max()), eta))

    rows.sort(key=lambda r: (r[1] > 0, r[0], r[1], r[2], r[3]))
    write_csv(cfg.out / "lindblad_gk.csv",
              ("t", "sigma", "seed", "k", "G_k_exact", "G_k_reconstructed", "Delta_R", "eta_max"),
              rows, cfg.resolved, __version__)
    summary = []
    for t in cfg.sweep_times:
        for s in cfg.sigma_grid:
            d = np.array([x[3] for x in sweep if x[0] == t and x[1] == s])
            e = np.array([x[4] for x in sweep if x[0] == t and x[1] == s])
            q1, med, q3 = np.percentile(d, [25, 50, 75])
            summary.append((t, s, len(d), med, q1, q3, float(np.median(e))))
    write_csv(cfg.out / "lindblad_sweep.csv",
              ("t", "sigma", "seeds", "median_Delta_R", "q1_Delta_R", "q3_Delta_R", "median_eta_max"),
              summary, cfg.resolved, __version__)
    plotting.plot_g_k([(r[0], r[3], r[4], r[5]) for r in rows if r[1] == 0 and r[3] <= K_MAX + 1],
                      cfg.out / "lindblad_gk.png")
    if summary:
        t0 = cfg.sweep_times[0]
        sel = [s for s in summary if s[0] == t0]
        plotting.plot_sigma_sweep([s[1] for s in sel], [s[3] for s in sel], [s[4] for s in sel],
                                  [s[5] for s in sel], cfg.out / "lindblad_sweep.png")
    if flagged:
        raise NumericalFailure(f"{flagged} reconstructions had flagged steps")
    return EXIT_OK


def circuit_point(cfg: ExperimentConfig, gamma: float, r: float, ideal: MpoChoi | None = None):
    """One grid point: (F_exact, F_reconstructed, P_exact, P_reconstructed, flagged)."""
    spec = CircuitSpec(cfg.n, gamma, r, cfg.alpha_seed)
    ideal = circuit_choi(spec.ideal(), cfg.policy) if ideal is None else ideal
    truth = circuit_choi(spec, cfg.policy)
    res = reconstruct(exact_windows(truth, cfg.w), _recon_config(replace(cfg, source="exact-marginals"), cfg.n))
    return (overlap(truth, ideal), overlap(res.estimate, ideal), purity(truth), purity(res.estimate), res.flagged)


def demo_circuit(cfg: ExperimentConfig) -> int:
    ideal = circuit_choi(CircuitSpec(cfg.n, 0.0, 1.0, cfg.alpha_seed), cfg.policy)
    grid = [(g, r) for g in cfg.gamma_grid for r in cfg.r_grid]
    results = _pool_map(cfg, lambda p: circuit_point(cfg, p[0], p[1], ideal), grid)
    rows = [(g, r, *v[:4], abs(v[0] - v[1]), v[4]) for (g, r), v in zip(grid, results)]
    rows.sort(key=lambda x: (x[0], x[1]))
    write_csv(cfg.out / "circuit.csv",
              ("gamma", "r", "F_exact", "F_reconstructed", "P_exact", "P_reconstructed", "abs_F_error", "flagged"),
              rows, cfg.resolved, __version__)
    plotting.plot_circuit([r[:6] for r in rows], cfg.out / "circuit.png")
    if any(r[-1] for r in rows):
        raise NumericalFailure("some circuit reconstructions had flagged steps")
    return EXIT_OK


def demo_shadow_bench(cfg: ExperimentConfig) -> int:
    n = max(cfg.window_sizes)
    truth = build_truth(cfg, n=n)
    marg = {k: window_marginal(truth, range(k)) for k in cfg.window_sizes}
    m_max = max(cfg.m_grid)

    def one_seed(seed):
        rec = sample_records(truth, m_max, cfg.seed + seed)
        return [(m, k, seed, window_error(estimate_window(rec[:m], range(k)), marg[k]))
                for m in cfg.m_grid for k in cfg.window_sizes]

    raw = sorted(x for part in _pool_map(cfg, one_seed, range(cfg.shadow_seeds)) for x in part)
    write_csv(cfg.out / "shadow_bench_raw.csv", ("M", "k", "seed", "eta"), raw, cfg.resolved, __version__)
    rows = []
    for m in sorted(cfg.m_grid):
        for k in sorted(cfg.window_sizes):
            e = [x[3] for x in raw if x[0] == m and x[1] == k]
            q1, med, q3 = np.percentile(e, [25, 50, 75])
            rows.append((m, k, med, q1, q3))
    write_csv(cfg.out / "shadow_bench.csv", ("M", "k", "median_eta", "q1_eta", "q3_eta"), rows,
              cfg.resolved, __version__)
    plotting.plot_shadow_bench(rows, cfg.out / "shadow_bench.png")
    return EXIT_OK


def demo_cmi_scan(cfg: ExperimentConfig) -> int:
    m = build_truth(cfg)
    max_b = min(cfg.max_b, MAX_DENSE_SITES - 2, m.n_sites - 2)
    scan = cmi_decay_scan(m, max_b)
    rows = [(r.buffer, p, v) for r in scan for p, v in enumerate(r.values)]
    write_csv(cfg.out / "cmi_scan.csv", ("buffer", "position", "cmi"), rows, cfg.resolved, __version__)
    write_csv(cfg.out / "cmi_scan_max.csv", ("buffer", "max_cmi", "position"),
              [(r.buffer, r.max_cmi, r.position) for r in scan], cfg.resolved, __version__)
    plotting.plot_cmi_scan(rows, cfg.out / "cmi_scan.png")
    return EXIT_OK


def demo_reconstruct(cfg: ExperimentConfig) -> int:
    truth = build_truth(cfg)
    save_mpo(cfg.out / "truth.mpo", truth)
    wins, etas = _windows_from_truth(cfg, truth)
    return _run_pipeline(cfg, wins, etas, truth, cfg.out)


DEMOS = {
    "lindblad-demo": demo_lindblad,
    "circuit-demo": demo_circuit,
    "shadow-bench": demo_shadow_bench,
    "cmi-scan": demo_cmi_scan,
    "reconstruct": demo_reconstruct,
}


# -- argument handling ---------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="override [experiment] seed")
    common.add_argument("--out", help="output directory (overrides [experiment] out)")
    common.add_argument("--threads", type=int, help="worker threads for sweeps and sampling")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="choistitch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("simulate", parents=[common], help="build the truth MPO of the configured model")
    s = sub.add_parser("sample", parents=[common], help="draw randomized-measurement shots")
    s.add_argument("--truth", help="truth MPO (default OUT/truth.mpo)")
    s = sub.add_parser("estimate", parents=[common], help="shadow estimates of every window")
    s.add_argument("--records", help="shot records (default OUT/records.jsonl)")
    s.add_argument("--truth", help="truth MPO, for per-window errors")
    s = sub.add_parser("reconstruct", parents=[common], help="stitch windows into a global MPO")
    s.add_argument("--windows", help="window-estimate JSON from 'estimate'")
    s.add_argument("--truth", help="truth MPO (default OUT/truth.mpo)")
    s = sub.add_parser("diagnose", parents=[common], help="diagnostics table for an MPO")
    s.add_argument("--input", help="MPO to diagnose (default OUT/estimate.mpo)")
    s.add_argument("--truth", help="reference MPO")
    s = sub.add_parser("demo", parents=[common], help="run a demo experiment")
    s.add_argument("name", choices=EXPERIMENTS)
    return p


VERBS = {
    "simulate": cmd_simulate,
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "reconstruct": cmd_reconstruct,
    "diagnose": cmd_diagnose,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"experiment": {"seed": args.seed, "out": args.out, "threads": args.threads}}
    if args.verb == "demo":
        overrides["experiment"]["name"] = args.name
    try:
        cfg = load_config(args.config, overrides)
        _check(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        if args.verb == "demo":
            return DEMOS[args.name](cfg)
        return VERBS[args.verb](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
