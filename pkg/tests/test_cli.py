from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from choistitch.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from choistitch.io import load_mpo, read_csv


def ini(tmp_path: Path, text: str, name: str = "exp.ini") -> str:
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(tmp_path: Path, *argv: str, config: str | None = None, out: str = "out") -> int:
    args = list(argv) + ["--out", str(tmp_path / out)]
    if config is not None:
        args += ["--config", config]
    return main(args)


def table(path: Path) -> list[dict[str, str]]:
    cols, rows = read_csv(path)
    return [dict(zip(cols, r)) for r in rows]


def test_module_entry_point_prints_version():
    proc = subprocess.run([sys.executable, "-m", "choistitch.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()


def test_bad_config_exits_2(tmp_path, capsys):
    assert run(tmp_path, "simulate", config=ini(tmp_path, "[model]\ncolour = red\n")) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert run(tmp_path, "simulate", config=ini(tmp_path, "[model]\nn = 2\nw = 1\n")) == EXIT_CONFIG


def test_missing_and_corrupt_files_exit_4(tmp_path):
    assert run(tmp_path, "simulate", config=str(tmp_path / "absent.ini")) == EXIT_IO
    assert run(tmp_path, "sample") == EXIT_IO
    bad = tmp_path / "bad.mpo"
    bad.write_bytes(b"MPOC\x00")
    assert run(tmp_path, "diagnose", "--input", str(bad)) == EXIT_IO


def test_flagged_reconstruction_exits_3(tmp_path):
    cfg = ini(tmp_path, "[model]\nkind = circuit\nn = 5\n[circuit]\ngamma = 0.01\nr = 8\n"
                        "[reconstruct]\nsource = noisy-marginals\nsigma = 1e-2\n[solver]\nmax_iter = 1\n")
    assert run(tmp_path, "demo", "reconstruct", config=cfg) == EXIT_NUMERIC
    steps = table(tmp_path / "out" / "steps.csv")
    assert any(s["flagged"] == "true" and s["method"] == "petz-fallback" for s in steps)


def test_identity_reconstruct_demo(tmp_path):
    cfg = ini(tmp_path, "[model]\nkind = identity\nn = 10\n")
    assert run(tmp_path, "demo", "reconstruct", config=cfg) == EXIT_OK
    out = tmp_path / "out"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["trace_distance_upper_bound"] <= 1e-6
    assert summary["flagged_steps"] == [] and summary["n"] == 10
    assert load_mpo(out / "estimate.mpo").n_sites == 10
    steps = table(out / "steps.csv")
    assert [int(s["i"]) for s in steps] == list(range(2, 9))
    assert set(steps[0]) == {"i", "residual", "iterations", "bond_dim", "eta_i", "method", "flagged"}


def test_pipeline_verbs(tmp_path):
    cfg = ini(tmp_path, "[model]\nkind = circuit\nn = 4\n[circuit]\ngamma = 0.005\n[shadows]\nshots = 3000\n")
    for verb in ("simulate", "sample", "estimate"):
        assert run(tmp_path, verb, config=cfg) == EXIT_OK, verb
    out = tmp_path / "out"
    truth = str(out / "truth.mpo")
    assert run(tmp_path, "estimate", "--truth", truth, config=cfg) == EXIT_OK
    etas = [float(r["eta_i"]) for r in table(out / "windows.csv")]
    assert len(etas) == 2 and all(0 < e <= 1 for e in etas)
    assert run(tmp_path, "reconstruct", "--windows", str(out / "windows.json"), "--truth", truth, config=cfg) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["source"] == "shadow-estimates" and 0 <= summary["trace_distance"] <= 1
    assert run(tmp_path, "diagnose", "--truth", truth, config=cfg) == EXIT_OK
    obs = {r["observable"] for r in table(out / "diagnostics.csv")}
    assert {"trace", "purity", "G_k", "max_cmi", "trace_distance", "overlap"} <= obs


LINDBLAD = """
[model]
n = 4
[lindblad]
times = 0, 0.01
sweep_times = 0.01
[reconstruct]
sigma_grid = 1e-3, 1e-2
seeds = 2
"""


def test_lindblad_demo_outputs(tmp_path):
    assert run(tmp_path, "demo", "lindblad-demo", config=ini(tmp_path, LINDBLAD)) == EXIT_OK
    out = tmp_path / "out"
    rows = table(out / "lindblad_gk.csv")
    for r in rows:
        if float(r["t"]) == 0.0 and r["sigma"] == "0":
            assert abs(float(r["G_k_exact"]) - 1) < 1e-12 and abs(float(r["G_k_reconstructed"]) - 1) < 1e-8
            assert float(r["Delta_R"]) <= 1e-8
    sweep = table(out / "lindblad_sweep.csv")
    assert [float(r["sigma"]) for r in sweep] == [1e-3, 1e-2]
    for name in ("lindblad_gk.png", "lindblad_sweep.png"):
        assert (out / name).read_bytes()[:4] == b"\x89PNG"


def test_circuit_demo_outputs(tmp_path):
    cfg = ini(tmp_path, "[model]\nkind = circuit\nn = 6\n[circuit]\ngamma_grid = 0, 0.01\nr_grid = 1, 2\n")
    assert run(tmp_path, "demo", "circuit-demo", config=cfg) == EXIT_OK
    rows = table(tmp_path / "out" / "circuit.csv")
    assert len(rows) == 4
    for r in rows:
        if float(r["gamma"]) == 0.0:
            for col in ("F_exact", "F_reconstructed", "P_exact", "P_reconstructed"):
                assert abs(float(r[col]) - 1) < 1e-6
    assert (tmp_path / "out" / "circuit.png").exists()


def test_shadow_bench_and_cmi_scan_outputs(tmp_path):
    cfg = ini(tmp_path, "[model]\nkind = identity\nn = 5\n[shadows]\nm_grid = 100, 1000\nseeds = 3\n")
    assert run(tmp_path, "demo", "shadow-bench", config=cfg) == EXIT_OK
    bench = table(tmp_path / "out" / "shadow_bench.csv")
    assert [(r["M"], r["k"]) for r in bench] == [("100", "1"), ("100", "2"), ("1000", "1"), ("1000", "2")]
    assert all(0 < float(r["median_eta"]) <= 1 for r in bench)
    assert run(tmp_path, "demo", "cmi-scan", config=cfg) == EXIT_OK
    scan = table(tmp_path / "out" / "cmi_scan_max.csv")
    assert [r["buffer"] for r in scan] == ["1", "2", "3"]
    assert all(abs(float(r["max_cmi"])) < 1e-10 for r in scan)


def test_outputs_are_deterministic(tmp_path):
    cfg = ini(tmp_path, LINDBLAD + "[shadows]\nm_grid = 100, 300\nseeds = 2\n")
    names = ("lindblad_gk.csv", "lindblad_sweep.csv", "shadow_bench_raw.csv")
    blobs = []
    for threads in ("1", "2"):
        assert run(tmp_path, "demo", "lindblad-demo", "--threads", threads, config=cfg) == EXIT_OK
        assert run(tmp_path, "demo", "shadow-bench", "--threads", threads, config=cfg) == EXIT_OK
        blobs.append([(tmp_path / "out" / n).read_bytes() for n in names])
    # the embedded config records the thread count, everything below it must match byte for byte
    strip = lambda b: b.split(b"\n", 1)[1]  # noqa: E731
    assert [strip(b) for b in blobs[0]] == [strip(b) for b in blobs[1]]
    assert run(tmp_path, "demo", "lindblad-demo", "--threads", "2", config=cfg) == EXIT_OK
    assert (tmp_path / "out" / names[0]).read_bytes() == blobs[1][0]


@pytest.mark.parametrize("verb", ["simulate", "sample", "estimate", "reconstruct", "diagnose", "demo"])
def test_every_verb_has_help(verb, capsys):
    with pytest.raises(SystemExit) as exc:
        main([verb, "--help"])
    assert exc.value.code == 0
    assert "--config" in capsys.readouterr().out
