"""Run artifacts: binary field dumps, CSV tables, manifests.

Field dump format (little-endian throughout):
    magic   4 bytes  b"EBE1"
    header  uint32 r, uint32 N_sigma, uint32 N_y, float64 L, float64 eps,
            uint32 n_punctures, then per puncture:
            float64 y, float64 Re z, float64 Im z, uint32 len(k),
            int32 k[...]
    data    complex entries as (float64 re, float64 im) pairs in node
            order (iy, ix1, ix2, i, j) row-major; excised nodes are
            written as NaN pairs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .grid import Domain, Puncture, TorusGrid, build_domain

MAGIC = b"EBE1"


def dump_field(path, domain: Domain, fld: np.ndarray):
    fld = np.asarray(fld, dtype=complex)
    if fld.ndim == 3:
        fld = fld[..., None, None]
    r = fld.shape[-1]
    g = domain.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", r, g.N_sigma, g.N_y))
        fh.write(struct.pack("<dd", g.L, domain.epsilon))
        fh.write(struct.pack("<I", len(domain.punctures)))
        for p in domain.punctures:
            fh.write(struct.pack("<ddd", p.y, p.z.real, p.z.imag))
            fh.write(struct.pack("<I", len(p.k)))
            fh.write(struct.pack(f"<{len(p.k)}i", *p.k))
        data = np.where(domain.excised[..., None, None],
                        complex(np.nan, np.nan), fld)
        out = np.empty(data.shape + (2,), dtype="<f8")
        out[..., 0] = data.real
        out[..., 1] = data.imag
        fh.write(out.tobytes())


def load_field(path):
    """Returns (domain, field)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError("not an EBE1 field dump")
        r, n_sigma, n_y = struct.unpack("<III", fh.read(12))
        L, eps = struct.unpack("<dd", fh.read(16))
        (n_p,) = struct.unpack("<I", fh.read(4))
        punctures = []
        for _ in range(n_p):
            y, zr, zi = struct.unpack("<ddd", fh.read(24))
            (lk,) = struct.unpack("<I", fh.read(4))
            k = struct.unpack(f"<{lk}i", fh.read(4 * lk))
            punctures.append(Puncture(y, complex(zr, zi), k))
        grid = TorusGrid(N_sigma=n_sigma, N_y=n_y, L=L)
        domain = build_domain(grid, punctures, eps)
        raw = np.frombuffer(fh.read(), dtype="<f8")
        fld = raw[0::2] + 1j * raw[1::2]
        fld = fld.reshape(n_y, n_sigma, n_sigma, r, r)
        fld = np.where(domain.excised[..., None, None], 0.0, fld)
    return domain, fld


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "res_tracefree", "res_full", "s_sup", "dt"])
        for row in history:
            w.writerow([f"{v:.16e}" for v in row])


def write_scattering_csv(path, extraction_rows):
    """rows: dicts with puncture, ring radii / singular values / slopes /
    winding as produced by scatter.extract_type diagnostics."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["puncture", "segment", "ring_radius",
                    "log_sv", "slopes", "winding"])
        for row in extraction_rows:
            diags = row["diags"]
            for rad, lsv in zip(diags["ring_radii"], diags["ring_log_sv"]):
                w.writerow([row["puncture"], row["segment"],
                            f"{rad:.16e}",
                            ";".join(f"{v:.16e}" for v in lsv),
                            ";".join(f"{v:.16e}" for v in diags["slopes"]),
                            diags["winding"]])


def write_morrey_csv(path, radii, g_values, exponent):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "g", "fitted_exponent"])
        for rad, gv in zip(radii, g_values):
            w.writerow([f"{rad:.16e}", f"{gv:.16e}", f"{exponent:.16e}"])


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run_dir, config_echo, extra=None):
    """manifest.json: config echo, package versions, artifact hashes."""
    run_dir = Path(run_dir)
    arts = {}
    for p in sorted(run_dir.iterdir()):
        if p.name == "manifest.json" or p.is_dir():
            continue
        arts[p.name] = file_sha256(p)
    manifest = {
        "config": config_echo,
        "versions": {"ebelab": "0.1.0", "numpy": np.__version__},
        "artifacts": arts,
    }
    if extra:
        manifest.update(extra)
    with open(run_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest
