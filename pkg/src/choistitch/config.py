"""INI experiment configuration with all solver and simulation defaults filled in."""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mpo import TruncationPolicy
from .recovery import SolverParams

EXPERIMENTS = ("lindblad-demo", "circuit-demo", "shadow-bench", "cmi-scan", "reconstruct")


class ConfigError(ValueError):
    pass


def _grid(lo: float, hi: float, k: int) -> str:
    return ", ".join(format(v, ".6g") for v in np.logspace(np.log10(lo), np.log10(hi), k))


DEFAULTS: dict[str, dict[str, str]] = {
    "experiment": {"name": "reconstruct", "seed": "0", "out": "out", "threads": "1"},
    "model": {"kind": "lindblad", "n": "8", "w": "1"},
    "lindblad": {
        "gamma_z": "1.0",
        "field": "1.0",
        "dt": "1e-3",
        "t_final": "0.01",
        "times": "0, 0.01, 0.02, 0.03, 0.04, 0.05",
        "sweep_times": "0.01",
    },
    "circuit": {
        "gamma": "0.005",
        "r": "1",
        "alpha_seed": "0",
        "gamma_grid": "0, 0.0025, 0.005, 0.0075, 0.01",
        "r_grid": "1, 2, 4, 8",
    },
    "truncation": {"eps_rel": "1e-7", "max_bond": "none"},
    "solver": {
        "scs_tol": "1e-4",
        "max_iter": "2500",
        "penalty": "1.0",
        "objective": "frobenius",
    },
    "reconstruct": {
        "source": "exact-marginals",
        "direction": "left",
        "sigma": "1e-3",
        "sigma_grid": _grid(1.78e-4, 1.78e-2, 10),
        "seeds": "3",
    },
    "shadows": {
        "shots": "100000",
        "m_grid": "1000, 10000, 100000",
        "window_sizes": "1, 2",
        "seeds": "20",
        "max_b": "3",
    },
}


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(";", ",").split(",") if x.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(float(x)) for x in s.replace(";", ",").split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    out: Path
    threads: int
    kind: str
    n: int
    w: int
    gamma_z: float
    field: float
    dt: float
    t_final: float
    times: tuple[float, ...]
    sweep_times: tuple[float, ...]
    gamma: float
    r: float
    alpha_seed: int
    gamma_grid: tuple[float, ...]
    r_grid: tuple[float, ...]
    policy: TruncationPolicy
    solver: SolverParams
    source: str
    direction: str
    sigma: float
    sigma_grid: tuple[float, ...]
    seeds: int
    shots: int
    m_grid: tuple[int, ...]
    window_sizes: tuple[int, ...]
    shadow_seeds: int
    max_b: int
    resolved: dict

    def lindblad_spec(self):
        from .simulate import LindbladSpec

        return LindbladSpec(self.n, self.gamma_z, self.field)

    def circuit_spec(self, gamma: float | None = None, r: float | None = None):
        from .simulate import CircuitSpec

        return CircuitSpec(self.n, self.gamma if gamma is None else gamma, self.r if r is None else r, self.alpha_seed)


def load_config(path: str | Path | None = None, overrides: dict[str, dict[str, str]] | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    unknown = set(cp.sections()) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for sec, kv in (overrides or {}).items():
        for k, v in kv.items():
            if v is not None:
                cp.set(sec, k, str(v))
    for sec in cp.sections():
        extra = set(cp[sec]) - set(DEFAULTS[sec])
        if extra:
            raise ConfigError(f"unknown keys in [{sec}]: {sorted(extra)}")
    resolved = {s: dict(cp[s]) for s in cp.sections()}
    try:
        e, m, lb, c = cp["experiment"], cp["model"], cp["lindblad"], cp["circuit"]
        tr, so, rc, sh = cp["truncation"], cp["solver"], cp["reconstruct"], cp["shadows"]
        max_bond = tr["max_bond"].strip().lower()
        cfg = ExperimentConfig(
            experiment=e["name"],
            seed=e.getint("seed"),
            out=Path(e["out"]),
            threads=e.getint("threads"),
            kind=m["kind"],
            n=m.getint("n"),
            w=m.getint("w"),
            gamma_z=lb.getfloat("gamma_z"),
            field=lb.getfloat("field"),
            dt=lb.getfloat("dt"),
            t_final=lb.getfloat("t_final"),
            times=_floats(lb["times"]),
            sweep_times=_floats(lb["sweep_times"]),
            gamma=c.getfloat("gamma"),
            r=c.getfloat("r"),
            alpha_seed=c.getint("alpha_seed"),
            gamma_grid=_floats(c["gamma_grid"]),
            r_grid=_floats(c["r_grid"]),
            policy=TruncationPolicy(
                tr.getfloat("eps_rel"), None if max_bond in ("", "none", "0") else int(max_bond)
            ),
            solver=SolverParams(
                tolerance=so.getfloat("scs_tol"),
                max_iterations=so.getint("max_iter"),
                penalty=so.getfloat("penalty"),
                objective=so["objective"],
            ),
            source=rc["source"],
            direction=rc["direction"],
            sigma=rc.getfloat("sigma"),
            sigma_grid=_floats(rc["sigma_grid"]),
            seeds=rc.getint("seeds"),
            shots=sh.getint("shots"),
            m_grid=_ints(sh["m_grid"]),
            window_sizes=_ints(sh["window_sizes"]),
            shadow_seeds=sh.getint("seeds"),
            max_b=sh.getint("max_b"),
            resolved=resolved,
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; expected one of {EXPERIMENTS}")
    if cfg.kind not in ("lindblad", "circuit", "identity"):
        raise ConfigError(f"unknown model kind {cfg.kind!r}")
    if cfg.n < 1 or cfg.w < 1 or cfg.threads < 1 or cfg.seeds < 1 or cfg.shots < 1:
        raise ConfigError("n, w, threads, seeds and shots must be positive")
    if cfg.dt <= 0 or cfg.t_final < 0:
        raise ConfigError("dt must be positive and t_final non-negative")
    if not all(0 <= g <= 1 for g in cfg.gamma_grid + (cfg.gamma,)):
        raise ConfigError("gamma values must lie in [0, 1]")
    if cfg.source not in ("exact-marginals", "shadow-estimates", "noisy-marginals"):
        raise ConfigError(f"unknown window source {cfg.source!r}")
    if cfg.direction not in ("left", "right"):
        raise ConfigError("direction must be left or right")
    return cfg
