"""On-disk formats: matrices, graphs, masks, trajectories, scans and fits.

All writers embed the provenance triple (config hash, seed, code version)
and avoid timestamps, so re-running a command with identical inputs yields
byte-identical files.
"""

from __future__ import annotations

import configparser
import fcntl
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .ensembles import ScalingFits, WeightModel
from .graph_analysis import AdjacencyGraph
from .spin_model import SparseHermitian

MATRIX_MAGIC = b"SPFMAT01"
MATRIX_VERSION = 1
_ENTRY = struct.Struct("<QQdd")
_HEADER = struct.Struct("<8sIQQd")


def config_hash(config: dict) -> str:
    """Stable short hash of an effective configuration mapping."""
    canon = json.dumps({str(k): str(v) for k, v in config.items()}, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def provenance(config: dict, seed) -> dict:
    return {"config_hash": config_hash(config), "seed": str(seed),
            "version": __version__}


def write_matrix(path, H: SparseHermitian, meta: dict | None = None) -> None:
    """Binary upper-triangle dump plus a structured-text sidecar.

    Layout: magic, u32 format version, u64 dimension, u64 entry count,
    f64 norm hint (NaN when absent), then little-endian
    (u64 row, u64 col, f64 re, f64 im) triples, row <= col.
    """
    path = Path(path)
    hint = float("nan") if H.norm_hint is None else float(H.norm_hint)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, H.dim,
                              H.nnz_stored, hint))
        block = np.empty(H.nnz_stored,
                         dtype=[("r", "<u8"), ("c", "<u8"),
                                ("re", "<f8"), ("im", "<f8")])
        block["r"], block["c"] = H.rows, H.cols
        block["re"], block["im"] = H.vals.real, H.vals.imag
        fh.write(block.tobytes())
    if meta is not None:
        write_metadata(path.with_suffix(path.suffix + ".meta"), meta)


def read_matrix(path) -> SparseHermitian:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValidationError(f"{path}: truncated matrix file")
    magic, version, dim, count, hint = _HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}")
    if version != MATRIX_VERSION:
        raise ValidationError(f"{path}: unsupported format version {version}")
    expect = _HEADER.size + count * _ENTRY.size
    if len(raw) != expect:
        raise ValidationError(f"{path}: expected {expect} bytes, found {len(raw)}")
    block = np.frombuffer(raw, offset=_HEADER.size,
                          dtype=[("r", "<u8"), ("c", "<u8"),
                                 ("re", "<f8"), ("im", "<f8")])
    vals = block["re"] + 1j * block["im"]
    return SparseHermitian.from_upper(
        int(dim), block["r"].astype(np.int64), block["c"].astype(np.int64),
        vals, norm_hint=None if np.isnan(hint) else float(hint))


def write_metadata(path, meta: dict) -> None:
    """Sidecar key = value metadata (INI sections)."""
    parser = configparser.ConfigParser()
    for section, entries in meta.items():
        parser[section] = {k: str(v) for k, v in entries.items()}
    with open(path, "w") as fh:
        parser.write(fh)


def read_metadata(path) -> dict:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ValidationError(f"cannot read metadata file {path}")
    return {section: dict(parser[section]) for section in parser.sections()}


def write_edge_list(path, g: AdjacencyGraph, meta: dict) -> None:
    """One '# {json}' header line, then 1-based 'j k' pairs with j < k."""
    u, v = g.edge_arrays()
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        for a, b in zip(u + 1, v + 1):
            fh.write(f"{a} {b}\n")


def read_edge_list(path) -> tuple[dict, np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValidationError(f"{path}: missing metadata header")
    meta = json.loads(lines[0][1:].strip())
    pairs = [line.split() for line in lines[1:] if line.strip()]
    u = np.array([int(a) - 1 for a, _ in pairs], dtype=np.int64)
    v = np.array([int(b) - 1 for _, b in pairs], dtype=np.int64)
    return meta, u, v


def write_mask_pbm(path, g: AdjacencyGraph, meta: dict | None = None) -> None:
    """Plain PBM (P1) bitmap of the adjacency mask, diagonal included."""
    N = g.dim
    with open(path, "w") as fh:
        fh.write("P1\n")
        if meta is not None:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(f"{N} {N}\n")
        row = np.zeros(N, dtype=np.int8)
        for j in range(N):
            row[:] = 0
            row[g.neighbors(j)] = 1
            if g.diag[j]:
                row[j] = 1
            fh.write(" ".join("1" if x else "0" for x in row) + "\n")


def write_trajectory_csv(path, series, prov: dict) -> None:
    """Columns t, exp_O, exp_O2, norm with a provenance comment header."""
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(prov, sort_keys=True) + "\n")
        fh.write("t,exp_O,exp_O2,norm\n")
        for t, a, b, c in zip(series.times, series.exp_O, series.exp_O2,
                              series.norms):
            fh.write(f"{float(t)!r},{float(a)!r},{float(b)!r},{float(c)!r}\n")


def write_records_jsonl(path, records: list[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_records_jsonl(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines()
            if line.strip()]


def write_scan_csv(path, rows: list[dict], columns: list[str],
                   prov: dict) -> None:
    """Generic CSV writer; missing values become empty fields."""
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(prov, sort_keys=True) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = []
            for col in columns:
                val = row.get(col)
                if val is None:
                    cells.append("")
                elif isinstance(val, float):
                    cells.append(repr(float(val)))
                else:
                    cells.append(str(val))
            fh.write(",".join(cells) + "\n")


def read_scan_csv(path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValidationError(f"{path}: missing provenance header")
    prov = json.loads(lines[0][1:].strip())
    header = lines[1].split(",")
    rows = []
    for line in lines[2:]:
        if not line.strip():
            continue
        rows.append({k: (v if v != "" else None)
                     for k, v in zip(header, line.split(","))})
    return prov, rows


def _fits_section(fits: ScalingFits, weights: WeightModel) -> dict:
    return {
        "sizes": " ".join(str(L) for L in fits.sizes),
        "norm_c0": repr(fits.norm_coeffs[0]),
        "norm_c1": repr(fits.norm_coeffs[1]),
        "delta_a": repr(fits.delta_coeffs[0]),
        "delta_b": repr(fits.delta_coeffs[1]),
        "norm_means": " ".join(repr(x) for x in fits.norm_means),
        "norm_residuals": " ".join(repr(x) for x in fits.norm_residuals),
        "delta_means": " ".join(repr(x) for x in fits.delta_means),
        "delta_residuals": " ".join(repr(x) for x in fits.delta_residuals),
        "sigma_diag_c0": repr(weights.diag_coeffs[0]),
        "sigma_diag_c1": repr(weights.diag_coeffs[1]),
        "sigma_off": repr(weights.sigma_off),
        "complex_off": str(weights.complex_off),
    }


def write_fit_cache(path, entries: dict, prov: dict) -> None:
    """Fit cache keyed by locality: entries maps (n, d) -> (fits, weights).

    Written under an exclusive advisory lock so concurrent samplers do not
    interleave partial caches.
    """
    parser = configparser.ConfigParser()
    parser["provenance"] = {k: str(v) for k, v in prov.items()}
    for (n, d), (fits, weights) in sorted(entries.items()):
        parser[f"n={n} d={d}"] = _fits_section(fits, weights)
    path = Path(path)
    with open(path, "w") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            parser.write(fh)
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def read_fit_cache(path) -> dict:
    """Inverse of write_fit_cache: {(n, d): (ScalingFits, WeightModel)}."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ValidationError(f"cannot read fit cache {path}")
    out = {}
    for section in parser.sections():
        if section == "provenance":
            continue
        n, d = (int(part.split("=")[1]) for part in section.split())
        sec = parser[section]
        sizes = tuple(int(x) for x in sec["sizes"].split())
        fits = ScalingFits(
            sizes,
            (float(sec["norm_c0"]), float(sec["norm_c1"])),
            (float(sec["delta_a"]), float(sec["delta_b"])),
            tuple(float(x) for x in sec["norm_means"].split()),
            (),
            tuple(float(x) for x in sec["delta_means"].split()),
            (),
            tuple(float(x) for x in sec["norm_residuals"].split()),
            tuple(float(x) for x in sec["delta_residuals"].split()),
        )
        weights = WeightModel(
            (float(sec["sigma_diag_c0"]), float(sec["sigma_diag_c1"])),
            float(sec["sigma_off"]),
            sec.getboolean("complex_off"),
        )
        out[(n, d)] = (fits, weights)
    return out
