"""Plain-text problem files: INI sections with strictly validated keys.

Unknown sections or keys are errors; missing keys fall back to documented
defaults.  `load_config` returns a plain nested dict; `build_*` helpers
turn it into the concrete objects the solvers need.
"""

from __future__ import annotations

import configparser
import io

from .errors import ConfigError
from .geometry import GeometryParams, MeshResolution
from .homogenized import HomResolution
from .model import (Nonlinearity, ProblemData, affine, default_problem,
                    michaelis_menten, saturating, tanh_blend)

_GEOMETRY = {"a": 1.0, "N": 8, "l1": 0.3, "l2": 0.3, "l3": 0.3,
             "h0": 0.5, "h11": 0.2, "h12": 0.2,
             "h21": 0.08, "h22": 0.08, "h23": 0.08, "h24": 0.08, "d0": 0.3}
_EXPONENTS = {"alpha": (2.0, 2.0, 2.0), "beta": (2.0, 2.0, 2.0)}
_TIME = {"T": 0.05, "steps_base": 8, "N_base": 8}
_SOURCES = {"f0_amplitude": 40.0, "g_amplitude": 1.0, "g_mode": "matched"}
_RESOLUTION = {"cells_across": 2, "fine_cells_per_eps": 8.0,
               "fine_band_eps": 4.0, "coarse_spacing_eps": 5.0,
               "grade_ratio": 1.35, "hom_nx": 256,
               "cell_L": 10.0, "cell_across": 8}
_CORRECTOR = {"tau0_frac": 0.4, "tol_eta": 1e-10}
_SOLVER = {"newton_tol": 1e-10, "newton_max_iter": 25, "hom_backend": "schur"}
_SWEEP = {"N_values": (8, 16, 32, 64), "rho": 0.1, "workers": 1, "seed": 1234}
_OUTPUT = {"dir": "out", "write_checkpoints": False}
_NONLIN_KEYS = {"family", "lam", "sigma", "mu", "c", "c1", "c2"}

_SECTIONS = {
    "geometry": set(_GEOMETRY), "exponents": set(_EXPONENTS),
    "time": set(_TIME), "sources": set(_SOURCES),
    "resolution": set(_RESOLUTION), "corrector": set(_CORRECTOR),
    "solver": set(_SOLVER), "sweep": set(_SWEEP), "output": set(_OUTPUT),
}
_NONLIN_SECTIONS = {"nonlinearity.k", "nonlinearity.k0", "nonlinearity.k1",
                    "nonlinearity.k2", "nonlinearity.kappa0",
                    "nonlinearity.kappa1", "nonlinearity.kappa2"}


def _parse_value(default, raw: str):
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = raw.replace(",", " ").split()
        if isinstance(default[0], int):
            return tuple(int(p) for p in parts)
        return tuple(float(p) for p in parts)
    return raw


def load_config(path_or_text) -> dict:
    """Parse and validate a problem file; returns nested dict with defaults
    applied.  Unknown sections or keys raise ConfigError."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    if "\n" in str(path_or_text) or "=" in str(path_or_text):
        cp.read_string(str(path_or_text))
    else:
        with open(path_or_text) as f:
            cp.read_file(f)

    cfg = {name: dict(defaults) for name, defaults in (
        ("geometry", _GEOMETRY), ("exponents", _EXPONENTS), ("time", _TIME),
        ("sources", _SOURCES), ("resolution", _RESOLUTION),
        ("corrector", _CORRECTOR), ("solver", _SOLVER), ("sweep", _SWEEP),
        ("output", _OUTPUT))}
    cfg["nonlinearities"] = {}

    for section in cp.sections():
        if section in _SECTIONS:
            known = _SECTIONS[section]
            for key, raw in cp.items(section):
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                cfg[section][key] = _parse_value(cfg[section][key], raw)
        elif section in _NONLIN_SECTIONS:
            entry = {}
            for key, raw in cp.items(section):
                if key not in _NONLIN_KEYS:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                entry[key] = raw if key == "family" else float(raw)
            cfg["nonlinearities"][section.split(".", 1)[1]] = entry
        else:
            raise ConfigError(f"unknown section [{section}]")
    return cfg


def config_text(cfg: dict) -> str:
    """Canonical text rendering (used for hashing and manifests)."""
    buf = io.StringIO()
    for section in ("geometry", "exponents", "time", "sources", "resolution",
                    "corrector", "solver", "sweep", "output"):
        buf.write(f"[{section}]\n")
        for key in sorted(cfg[section]):
            val = cfg[section][key]
            if isinstance(val, tuple):
                val = " ".join(str(v) for v in val)
            buf.write(f"{key} = {val}\n")
    for name in sorted(cfg["nonlinearities"]):
        buf.write(f"[nonlinearity.{name}]\n")
        for key in sorted(cfg["nonlinearities"][name]):
            buf.write(f"{key} = {cfg['nonlinearities'][name][key]}\n")
    return buf.getvalue()


def build_geometry(cfg: dict, N: int | None = None) -> GeometryParams:
    g = dict(cfg["geometry"])
    if N is not None:
        g["N"] = N
    g["N"] = int(g["N"])
    return GeometryParams(**g)


def _build_nonlinearity(entry: dict) -> Nonlinearity:
    family = entry.get("family", "tanh_blend")
    kw = {k: entry[k] for k in ("c1", "c2") if k in entry}
    if family == "affine":
        return affine(entry.get("lam", 1.0), entry.get("c", 0.0), **kw)
    if family == "tanh_blend":
        return tanh_blend(entry.get("lam", 0.5), entry.get("sigma", 1.0), **kw)
    if family == "saturating":
        return saturating(entry.get("lam", 0.4), entry.get("mu", 1.0),
                          entry.get("sigma", 1.0), **kw)
    if family == "michaelis_menten":
        if "c1" not in entry or "c2" not in entry:
            raise ConfigError("michaelis_menten requires explicit c1 and c2")
        return michaelis_menten(entry.get("lam", 1.0), entry.get("mu", 1.0),
                                entry["c1"], entry["c2"])
    raise ConfigError(f"unknown nonlinearity family {family!r}")


def build_problem(cfg: dict, params: GeometryParams) -> ProblemData:
    data = default_problem(
        params, T=cfg["time"]["T"],
        alpha=cfg["exponents"]["alpha"], beta=cfg["exponents"]["beta"],
        f0_amplitude=cfg["sources"]["f0_amplitude"],
        g_amplitude=cfg["sources"]["g_amplitude"],
        g_mode=cfg["sources"]["g_mode"])
    named = cfg["nonlinearities"]
    if named:
        k = _build_nonlinearity(named["k"]) if "k" in named else data.k
        k_levels = tuple(
            _build_nonlinearity(named[f"k{i}"]) if f"k{i}" in named
            else data.k_levels[i] for i in range(3))
        kappa = tuple(
            _build_nonlinearity(named[f"kappa{i}"]) if f"kappa{i}" in named
            else data.kappa[i] for i in range(3))
        data.k = k
        data.k_levels = k_levels
        data.kappa = kappa
    return data


def build_mesh_resolution(cfg: dict) -> MeshResolution:
    r = cfg["resolution"]
    return MeshResolution(cells_across=int(r["cells_across"]),
                          fine_cells_per_eps=r["fine_cells_per_eps"],
                          fine_band_eps=r["fine_band_eps"],
                          coarse_spacing_eps=r["coarse_spacing_eps"],
                          grade_ratio=r["grade_ratio"])


def build_hom_resolution(cfg: dict, params: GeometryParams) -> HomResolution:
    from .homogenized import default_resolution
    return default_resolution(params, nx=int(cfg["resolution"]["hom_nx"]))


def time_steps(cfg: dict, N: int) -> int:
    t = cfg["time"]
    ratio = N / int(t["N_base"])
    return max(1, int(round(int(t["steps_base"]) * ratio * ratio)))
