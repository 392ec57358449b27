"""On-disk artifact formats.

Trajectory checkpoint (.traj):
    bytes 0..7   magic b"EPSTRAJ1"
    uint32       version (1)
    uint64       node count n
    uint64       number of stored states K1 (= K+1)
    float64[K1*n] row-major states
Sidecar text manifest (.traj.manifest): key = value lines.

Cell solution export (.cell): text header terminated by a line "---",
then float64[n] nodal values.

Multi-sheeted checkpoint (.msf):
    bytes 0..7   magic b"MSFIELD1"
    uint32       version, uint32 sheet count
    per sheet:   uint32 name length, name bytes (utf-8),
                 uint64 rows, uint64 cols, float64[rows*cols]
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import MalformedCSV, ThickJunctionError

TRAJ_MAGIC = b"EPSTRAJ1"
MSF_MAGIC = b"MSFIELD1"


def write_trajectory(path, values: np.ndarray, manifest: dict):
    values = np.ascontiguousarray(values, dtype=np.float64)
    k1, n = values.shape
    with open(path, "wb") as f:
        f.write(TRAJ_MAGIC)
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<QQ", n, k1))
        f.write(values.tobytes())
    with open(str(path) + ".manifest", "w") as f:
        for key in sorted(manifest):
            f.write(f"{key} = {manifest[key]}\n")


def read_trajectory(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(8) != TRAJ_MAGIC:
            raise ThickJunctionError(f"{path} is not a trajectory checkpoint")
        (version,) = struct.unpack("<I", f.read(4))
        if version != 1:
            raise ThickJunctionError(f"unsupported trajectory version {version}")
        n, k1 = struct.unpack("<QQ", f.read(16))
        data = np.frombuffer(f.read(8 * n * k1), dtype=np.float64)
    return data.reshape(k1, n).copy()


def write_cell_solution(path, sol):
    """Text header (kind, strips, L, dxi, normalization, exits) + field."""
    spec = sol.spec
    header = {
        "problem": sol.problem,
        "kind": spec.kind,
        "top": list(spec.top),
        "bots": [list(b) for b in spec.bots],
        "L": spec.L,
        "dxi": spec.dxi,
        "normalization": sol.normalization,
        "exits": {k: {"slope": ff.slope, "const": ff.const,
                      "xi1_coeff": ff.xi1_coeff, "center": ff.center,
                      "decay_rate": ff.decay_rate,
                      "fit_residual": ff.fit_residual}
                  for k, ff in sol.exits.items()},
        "n_nodes": int(sol.u.shape[0]),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True, indent=1).encode())
        f.write(b"\n---\n")
        f.write(np.ascontiguousarray(sol.u, dtype=np.float64).tobytes())


def write_multisheet(path, field):
    """Binary per-sheet blocks for a MultiSheetedField."""
    entries = [("+", field.body)] + \
        [(f"{k[0]}_{k[1]}", field.sheets[k]) for k in sorted(field.sheets)]
    with open(path, "wb") as f:
        f.write(MSF_MAGIC)
        f.write(struct.pack("<II", 1, len(entries)))
        for name, arr in entries:
            nb = name.encode()
            a = np.ascontiguousarray(arr, dtype=np.float64)
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
            f.write(a.tobytes())
    with open(str(path) + ".manifest", "w") as f:
        f.write("format = MSFIELD1\n")
        for name, arr in entries:
            f.write(f"sheet {name} shape = {arr.shape[0]} x {arr.shape[1]}\n")


def read_multisheet(path) -> dict:
    out = {}
    with open(path, "rb") as f:
        if f.read(8) != MSF_MAGIC:
            raise ThickJunctionError(f"{path} is not a multi-sheet checkpoint")
        version, count = struct.unpack("<II", f.read(8))
        for _ in range(count):
            (ln,) = struct.unpack("<I", f.read(4))
            name = f.read(ln).decode()
            rows, cols = struct.unpack("<QQ", f.read(16))
            data = np.frombuffer(f.read(8 * rows * cols), dtype=np.float64)
            out[name] = data.reshape(rows, cols).copy()
    return out


SWEEP_HEADER = ("eps,N,max_L2,L2H1,corollary_L2_body,corollary_L2_rods,"
                "bound_eps_term,bound_alpha_term,bound_beta_term,bound_g_term")


def format_row(row: dict) -> str:
    cols = SWEEP_HEADER.split(",")
    vals = []
    for c in cols:
        v = row[c]
        if c == "N":
            vals.append(str(int(v)))
        else:
            vals.append("%.17g" % float(v))
    return ",".join(vals)


def write_sweep_csv(path, rows: list[dict]):
    text = SWEEP_HEADER + "\n" + "\n".join(format_row(r) for r in rows) + "\n"
    with open(path, "wb") as f:
        f.write(text.encode())


def read_sweep_csv(path) -> list[dict]:
    with open(path, "rb") as f:
        text = f.read().decode()
    lines = [ln for ln in text.strip().split("\n") if ln]
    if not lines or lines[0] != SWEEP_HEADER:
        raise MalformedCSV(f"{path}: missing or wrong header")
    if len(lines) < 2:
        raise MalformedCSV(f"{path}: no data rows")
    cols = SWEEP_HEADER.split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise MalformedCSV(f"{path}: row has {len(parts)} columns")
        row = {c: (int(p) if c == "N" else float(p))
               for c, p in zip(cols, parts)}
        rows.append(row)
    return rows


def write_traces_csv(path, x1: np.ndarray, traces: dict):
    """CSV export of interface traces for external inspection."""
    keys = sorted(traces)
    with open(path, "w", newline="") as f:
        f.write("x1," + ",".join(keys) + "\n")
        for i in range(len(x1)):
            f.write("%.17g" % x1[i])
            for k in keys:
                f.write(",%.17g" % traces[k][i])
            f.write("\n")
