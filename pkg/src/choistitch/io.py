"""File formats: binary tensor container, shot-record JSON lines, CSV tables and JSON summaries.

Binary container layout::

    b"MPOC" | uint32 little-endian header length | UTF-8 JSON header | tensor data

Tensor data are the tensors listed in the header, concatenated in row-major
order as little-endian complex128 (interleaved 64-bit real and imaginary parts).
"""

from __future__ import annotations

import csv
import json
import struct
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

import numpy as np

from .mpo import MpoChoi
from .pauli import coefficients_from_json, coefficients_to_json, pauli_assemble, pauli_expand
from .shadows import WindowEstimate
from .simulate import ShotRecords

MAGIC = b"MPOC"
DTYPE = "<c16"


class FormatError(ValueError):
    """A file exists but does not have the expected layout."""


def _write_container(path: Path, header: dict, tensors: Sequence[np.ndarray]) -> None:
    header = dict(header, shapes=[list(t.shape) for t in tensors], dtype=DTYPE)
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for t in tensors:
            fh.write(np.ascontiguousarray(t, dtype=DTYPE).tobytes())


def _read_container(path: Path) -> tuple[dict, list[np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC or len(data) < 8:
        raise FormatError(f"{path}: not a tensor container")
    (hlen,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad header: {exc}") from exc
    offset = 8 + hlen
    tensors = []
    for shape in header.get("shapes", []):
        count = int(np.prod(shape))
        nbytes = 16 * count
        if offset + nbytes > len(data):
            raise FormatError(f"{path}: truncated tensor data")
        tensors.append(np.frombuffer(data, dtype=DTYPE, count=count, offset=offset).reshape(shape).astype(complex))
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return header, tensors


def save_mpo(path: str | Path, m: MpoChoi) -> None:
    header = {"kind": "mpo", "n": m.n_sites, "bond_dims": m.bond_dims, "physical_dims": [4, 4]}
    _write_container(Path(path), header, m.tensors)


def load_mpo(path: str | Path) -> MpoChoi:
    header, tensors = _read_container(Path(path))
    if header.get("kind") != "mpo" or len(tensors) != header.get("n"):
        raise FormatError(f"{path}: not an MPO container")
    try:
        return MpoChoi(tuple(tensors))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_dense(path: str | Path, a: np.ndarray, **meta) -> None:
    _write_container(Path(path), {"kind": "dense", **meta}, [a])


def load_dense(path: str | Path) -> tuple[np.ndarray, dict]:
    header, tensors = _read_container(Path(path))
    if header.get("kind") != "dense" or len(tensors) != 1:
        raise FormatError(f"{path}: not a dense container")
    return tensors[0], header


# -- shot records -----------------------------------------------------------------

def write_records(path: str | Path, records: ShotRecords) -> None:
    with open(path, "w") as fh:
        for row in records.to_dicts():
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def read_records(path: str | Path) -> ShotRecords:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    try:
        return ShotRecords.from_dicts(rows)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# -- window estimates ----------------------------------------------------------------

def window_estimates_to_json(estimates: Mapping[int, WindowEstimate]) -> dict:
    return {
        str(i): {
            "window": list(e.window),
            "shots": e.shots,
            "raw_mean": coefficients_to_json(pauli_expand(e.raw_mean)),
            "projected": coefficients_to_json(pauli_expand(e.projected)),
        }
        for i, e in sorted(estimates.items())
    }


def window_estimates_from_json(data: Mapping) -> dict[int, WindowEstimate]:
    out = {}
    try:
        for key, e in data.items():
            raw = pauli_assemble(coefficients_from_json(e["raw_mean"]))
            proj = pauli_assemble(coefficients_from_json(e["projected"]))
            out[int(key)] = WindowEstimate(tuple(e["window"]), raw, proj, int(e["shots"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad window-estimate file: {exc}") from exc
    return out


# -- tables and summaries ---------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


def write_csv(
    path: str | Path,
    columns: Sequence[str],
    rows: Iterable[Sequence],
    config: Mapping | None = None,
    version: str | None = None,
) -> None:
    """CSV with ``# config:`` and ``# version:`` comment lines ahead of the header."""
    with open(path, "w", newline="") as fh:
        if config is not None:
            fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        if version is not None:
            fh.write(f"# version: {version}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_json(path: str | Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
