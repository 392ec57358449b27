"""Problem data: nonlinearities with certified derivative bounds, sources,
exponents, and manufactured-solution generators.

Every nonlinearity comes from a small registry of families, each shipping a
closed-form derivative and a closed-form derivative range over an interval,
so certificates are exact (dense sampling is kept as a cross-check).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolation, ConfigError
from .geometry import GeometryParams

FAMILIES = ("affine", "tanh_blend", "saturating", "michaelis_menten")


@dataclass(frozen=True)
class Nonlinearity:
    """One registry nonlinearity with declared derivative bounds 0 < c1 <= c2."""

    family: str
    c1: float
    c2: float
    lam: float = 0.0
    c: float = 0.0
    mu: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown nonlinearity family {self.family!r}")
        if not (0.0 < self.c1 <= self.c2):
            raise ConfigError(
                f"declared bounds must satisfy 0 < c1 <= c2, got ({self.c1}, {self.c2})")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "affine":
            return self.lam * s + self.c
        if self.family == "tanh_blend":
            return self.sigma * s + self.lam * np.tanh(s)
        if self.family == "saturating":
            return self.sigma * s + self.lam * s / (1.0 + self.mu * s * s)
        return self.lam * s / (1.0 + self.mu * s)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "affine":
            return np.full_like(s, self.lam)
        if self.family == "tanh_blend":
            t = np.tanh(s)
            return self.sigma + self.lam * (1.0 - t * t)
        if self.family == "saturating":
            y = self.mu * s * s
            return self.sigma + self.lam * (1.0 - y) / (1.0 + y) ** 2
        return self.lam / (1.0 + self.mu * s) ** 2

    @property
    def at_zero(self) -> float:
        return float(self(0.0))

    @property
    def is_affine(self) -> bool:
        return self.family == "affine"

    def deriv_range(self, lo: float, hi: float):
        """Exact (inf, sup, arg_inf, arg_sup) of the derivative on [lo, hi]."""
        if hi < lo:
            raise ConfigError("empty certification interval")
        if self.family == "affine":
            return self.lam, self.lam, lo, hi
        if self.family == "michaelis_menten":
            if lo <= -1.0 / self.mu:
                raise ConfigError(
                    "michaelis_menten derivative is unbounded below s = -1/mu; "
                    "certify on an interval with lo > -1/mu")
            # derivative is strictly decreasing
            return (float(self.deriv(hi)), float(self.deriv(lo)), hi, lo)
        # families whose derivative depends on |s| only
        cands = [lo, hi]
        if lo < 0.0 < hi:
            cands.append(0.0)
        if self.family == "saturating" and self.mu > 0:
            sstar = math.sqrt(3.0 / self.mu)
            for s in (-sstar, sstar):
                if lo < s < hi:
                    cands.append(s)
        vals = [float(self.deriv(s)) for s in cands]
        i_min = int(np.argmin(vals))
        i_max = int(np.argmax(vals))
        return vals[i_min], vals[i_max], cands[i_min], cands[i_max]


def affine(lam: float, c: float = 0.0, c1: float | None = None,
           c2: float | None = None) -> Nonlinearity:
    return Nonlinearity("affine", c1 if c1 is not None else lam,
                        c2 if c2 is not None else lam, lam=lam, c=c)


def tanh_blend(lam: float, sigma: float, c1: float | None = None,
               c2: float | None = None) -> Nonlinearity:
    return Nonlinearity("tanh_blend", c1 if c1 is not None else sigma,
                        c2 if c2 is not None else sigma + lam,
                        lam=lam, sigma=sigma)


def saturating(lam: float, mu: float, sigma: float, c1: float | None = None,
               c2: float | None = None) -> Nonlinearity:
    if c1 is None:
        c1 = sigma - lam / 8.0
    if c2 is None:
        c2 = sigma + lam
    return Nonlinearity("saturating", c1, c2, lam=lam, mu=mu, sigma=sigma)


def michaelis_menten(lam: float, mu: float, c1: float, c2: float) -> Nonlinearity:
    return Nonlinearity("michaelis_menten", c1, c2, lam=lam, mu=mu)


@dataclass(frozen=True)
class Certificate:
    """Result of checking declared derivative bounds on [lo, hi]."""
    lo: float
    hi: float
    deriv_min: float
    deriv_max: float
    sampled_min: float
    sampled_max: float
    declared_c1: float
    declared_c2: float
    ok: bool


def certify_bounds(f: Nonlinearity, S: float, lo: float | None = None,
                   hi: float | None = None, samples: int = 4001) -> Certificate:
    """Certify c1 <= f' <= c2 on [lo, hi] (default [-S, S]).

    The closed-form family range is the authority; dense sampling
    cross-checks it.  Raises BoundViolation with a witness point when the
    declared bounds fail.
    """
    if S <= 0:
        raise ConfigError("certification half-width S must be positive")
    lo = -S if lo is None else lo
    hi = S if hi is None else hi
    dmin, dmax, arg_min, arg_max = f.deriv_range(lo, hi)
    grid = np.linspace(lo, hi, samples)
    dg = f.deriv(grid)
    smin, smax = float(dg.min()), float(dg.max())
    tol = 1e-12 * max(1.0, abs(dmax))
    ok = (dmin >= f.c1 - tol) and (dmax <= f.c2 + tol)
    cert = Certificate(lo, hi, dmin, dmax, smin, smax, f.c1, f.c2, ok)
    if not ok:
        if dmin < f.c1 - tol:
            raise BoundViolation(
                f"min f' = {dmin} at s = {arg_min} violates declared c1 = {f.c1}",
                witness=arg_min)
        raise BoundViolation(
            f"max f' = {dmax} at s = {arg_max} violates declared c2 = {f.c2}",
            witness=arg_max)
    return cert


# ---------------------------------------------------------------------------
# problem data
# ---------------------------------------------------------------------------

def _zero_source(x1, x2, t):
    return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)


@dataclass
class ProblemData:
    """All data of one junction problem.

    ``g0`` holds the per-level limit boundary data (one callable per level,
    signature (x1, x2, t)); the actual boundary data of the periodic
    problem is g0 in 'matched' mode or g0 + eps*g_pert in 'perturbed' mode.
    ``volume_rod`` / ``sheet_source`` are extra volume sources used only by
    manufactured cases (zero by default).
    """

    k: Nonlinearity
    k_levels: tuple[Nonlinearity, Nonlinearity, Nonlinearity]
    kappa: tuple[Nonlinearity, Nonlinearity, Nonlinearity]
    alpha: tuple[float, float, float]
    beta: tuple[float, float, float]
    T: float
    f0: callable = _zero_source
    g0: tuple = (_zero_source, _zero_source, _zero_source)
    g_mode: str = "matched"
    g_pert: tuple = (_zero_source, _zero_source, _zero_source)
    g_eps_override: tuple | None = None   # callables (x1, x2, t, eps), MMS only
    volume_rod: tuple = (None, None, None)
    sheet_source: dict = field(default_factory=dict)
    cert_S: float = 10.0
    certificates: dict = field(default_factory=dict)

    def __post_init__(self):
        for i in range(3):
            if self.alpha[i] < 1.0 or self.beta[i] < 1.0:
                raise ConfigError("exponents alpha_i and beta_i must be >= 1")
        if self.T <= 0:
            raise ConfigError("horizon T must be positive")
        if self.g_mode not in ("matched", "perturbed"):
            raise ConfigError(f"unknown g mode {self.g_mode!r}")

    def g_eps(self, level: int, x1, x2, t, eps: float):
        if self.g_eps_override is not None:
            return self.g_eps_override[level](x1, x2, t, eps)
        base = self.g0[level](x1, x2, t)
        if self.g_mode == "perturbed":
            base = base + eps * self.g_pert[level](x1, x2, t)
        return base

    @property
    def c1_min(self) -> float:
        fams = (self.k,) + self.k_levels + self.kappa
        return min(f.c1 for f in fams)

    @property
    def c2_max(self) -> float:
        fams = (self.k,) + self.k_levels + self.kappa
        return max(f.c2 for f in fams)

    def certify(self, S: float | None = None) -> dict:
        """Certify every nonlinearity on [-S, S]; stores and returns the certs."""
        S = self.cert_S if S is None else S
        names = {"k": self.k, "k0": self.k_levels[0], "k1": self.k_levels[1],
                 "k2": self.k_levels[2], "kappa0": self.kappa[0],
                 "kappa1": self.kappa[1], "kappa2": self.kappa[2]}
        certs = {name: certify_bounds(f, S) for name, f in names.items()}
        self.certificates.update(certs)
        return certs


def bump(u):
    """Standard mollifier profile: exp(1 - 1/(1-u^2)) inside |u|<1, else 0."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


def default_nonlinearities():
    k = tanh_blend(lam=0.5, sigma=1.0)
    k_levels = (tanh_blend(lam=0.4, sigma=1.0),
                tanh_blend(lam=0.3, sigma=1.0),
                saturating(lam=0.4, mu=1.0, sigma=1.0))
    kappa = (tanh_blend(lam=0.5, sigma=0.8),
             tanh_blend(lam=0.3, sigma=0.8),
             tanh_blend(lam=0.2, sigma=0.8))
    return k, k_levels, kappa


def default_problem(params: GeometryParams, T: float = 0.05,
                    alpha=(2.0, 2.0, 2.0), beta=(2.0, 2.0, 2.0),
                    f0_amplitude: float = 40.0, g_amplitude: float = 1.0,
                    g_mode: str = "matched") -> ProblemData:
    """The shipped default case: bump source in the body, smooth bump
    boundary data per level vanishing (with all derivatives) at the
    interface ordinates."""
    a, d0 = params.a, params.d0
    q = params.depths
    ramp_tau = T / 6.0

    def ramp(t):
        return 1.0 - np.exp(-np.asarray(t, dtype=float) / ramp_tau)

    def f0(x1, x2, t):
        return (f0_amplitude
                * bump((np.asarray(x1) - 0.5 * a) / (0.35 * a))
                * bump((np.asarray(x2) - 0.5 * d0) / (0.35 * d0))
                * ramp(t))

    def make_g(i):
        mid = 0.5 * (q[i] + q[i + 1])
        halfwidth = 0.35 * (q[i] - q[i + 1])

        def g(x1, x2, t, _mid=mid, _hw=halfwidth):
            return (g_amplitude * np.sin(np.pi * np.asarray(x1) / a)
                    * bump((np.asarray(x2) - _mid) / _hw) * ramp(t))
        return g

    def make_pert(i):
        mid = 0.5 * (q[i] + q[i + 1])
        halfwidth = 0.3 * (q[i] - q[i + 1])

        def w(x1, x2, t, _mid=mid, _hw=halfwidth):
            return (np.cos(np.pi * np.asarray(x1) / a)
                    * bump((np.asarray(x2) - _mid) / _hw) * ramp(t))
        return w

    k, k_levels, kappa = default_nonlinearities()
    return ProblemData(k=k, k_levels=k_levels, kappa=kappa,
                       alpha=tuple(alpha), beta=tuple(beta), T=T,
                       f0=f0, g0=tuple(make_g(i) for i in range(3)),
                       g_mode=g_mode,
                       g_pert=tuple(make_pert(i) for i in range(3)))


def make_zero_case(T: float = 0.05) -> ProblemData:
    """All sources zero; nonlinearities vanish at zero, so both problems
    have the identically-zero solution."""
    k, k_levels, kappa = default_nonlinearities()
    return ProblemData(k=k, k_levels=k_levels, kappa=kappa,
                       alpha=(2.0, 2.0, 2.0), beta=(2.0, 2.0, 2.0), T=T)


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

@dataclass
class ManufacturedCase:
    kind: str
    data: ProblemData
    params: GeometryParams
    exact: callable                 # (x1, x2, t) -> exact field (eps kind)
    exact_sheets: dict | None = None  # sheet key -> callable (hom kind)
    omega: float = 0.0


def _eps_profile(params: GeometryParams, amplitude: float):
    """C^1 piecewise-cosine depth profile with zero slope at every
    interface ordinate and at the outer boundaries."""
    d0 = params.d0
    l1, l2, l3 = params.rod_lengths
    q = params.depths

    def p(x2):
        x2 = np.asarray(x2, dtype=float)
        out = np.empty(x2.shape)
        m_body = x2 >= 0.0
        m0 = (x2 < 0.0) & (x2 >= q[1])
        m1 = (x2 < q[1]) & (x2 >= q[2])
        m2 = x2 < q[2]
        out[m_body] = np.cos(np.pi * x2[m_body] / d0)
        out[m0] = np.cos(np.pi * x2[m0] / l1)
        out[m1] = -np.cos(np.pi * (x2[m1] - q[1]) / l2)
        out[m2] = np.cos(np.pi * (x2[m2] - q[2]) / l3)
        return amplitude * out

    def omega_sq(x2):
        x2 = np.asarray(x2, dtype=float)
        out = np.empty(x2.shape)
        out[x2 >= 0.0] = (np.pi / d0) ** 2
        out[(x2 < 0.0) & (x2 >= q[1])] = (np.pi / l1) ** 2
        out[(x2 < q[1]) & (x2 >= q[2])] = (np.pi / l2) ** 2
        out[x2 < q[2]] = (np.pi / l3) ** 2
        return out

    return p, omega_sq


def make_manufactured_eps(params: GeometryParams, T: float = 0.05,
                          alpha=(2.0, 2.0, 2.0), beta=(2.0, 2.0, 2.0),
                          amplitude: float = 0.75,
                          stationary: bool = False) -> ManufacturedCase:
    """Exact solution u(x2, t) = sin(omega t) * p(x2), independent of x1.

    The vertical walls then carry no normal flux, so the Robin data becomes
    g_eps = eps^(alpha-beta) * kappa(u); volume sources absorb the rest.
    With ``stationary`` the time factor is frozen at 1 (elliptic oracle).
    """
    k, k_levels, kappa = default_nonlinearities()
    p, omega_sq = _eps_profile(params, amplitude)
    omega = 0.0 if stationary else 0.5 * np.pi / T

    def s(t):
        if stationary:
            return np.ones(np.shape(np.asarray(t, dtype=float)))
        return np.sin(omega * np.asarray(t, dtype=float))

    def ds(t):
        if stationary:
            return np.zeros(np.shape(np.asarray(t, dtype=float)))
        return omega * np.cos(omega * np.asarray(t, dtype=float))

    def exact(x1, x2, t):
        return s(t) * p(x2) * np.ones(np.broadcast(np.asarray(x1),
                                                   np.asarray(x2)).shape)

    def source_for(fam):
        def f(x1, x2, t, _fam=fam):
            u = s(t) * p(x2)
            out = ds(t) * p(x2) + omega_sq(x2) * u + _fam(u)
            return out * np.ones(np.broadcast(np.asarray(x1),
                                              np.asarray(x2)).shape)
        return f

    # Robin data: d_nu u = 0 on walls, so eps^beta g = eps^alpha kappa(u).
    def make_g(i):
        def g(x1, x2, t, eps, _i=i):
            scale = eps ** (alpha[_i] - beta[_i])
            return scale * kappa[_i](s(t) * p(x2))
        return g

    data = ProblemData(k=k, k_levels=k_levels, kappa=kappa,
                       alpha=tuple(alpha), beta=tuple(beta), T=T,
                       f0=source_for(k),
                       g_eps_override=tuple(make_g(i) for i in range(3)),
                       volume_rod=tuple(source_for(k_levels[i]) for i in range(3)))
    return ManufacturedCase(kind="eps", data=data, params=params,
                            exact=exact, omega=omega)


def _hermite(x_lo, x_hi, v_lo, s_lo, v_hi, s_hi):
    """Cubic Hermite interpolant on [x_lo, x_hi] plus its second derivative."""
    h = x_hi - x_lo
    c0, c1 = v_lo, s_lo
    c2 = (3.0 * (v_hi - v_lo) / h - 2.0 * s_lo - s_hi) / h
    c3 = (2.0 * (v_lo - v_hi) / h + s_lo + s_hi) / (h * h)

    def val(x2):
        z = np.asarray(x2, dtype=float) - x_lo
        return c0 + z * (c1 + z * (c2 + z * c3))

    def dval(x2):
        z = np.asarray(x2, dtype=float) - x_lo
        return c1 + z * (2.0 * c2 + 3.0 * z * c3)

    def d2val(x2):
        z = np.asarray(x2, dtype=float) - x_lo
        return 2.0 * c2 + 6.0 * z * c3

    return val, dval, d2val


def make_manufactured_hom(params: GeometryParams, T: float = 0.05,
                          amplitude: float = 0.8,
                          stationary: bool = False) -> ManufacturedCase:
    """Multi-sheeted exact fields satisfying trace continuity and every
    Kirchhoff flux balance identically (cubic Hermite depth profiles with
    matched values and flux-split slopes)."""
    p = params
    q = p.depths
    k, k_levels, kappa = default_nonlinearities()
    omega = 0.0 if stationary else 0.5 * np.pi / T

    def s(t):
        if stationary:
            return np.ones(np.shape(np.asarray(t, dtype=float)))
        return np.sin(omega * np.asarray(t, dtype=float))

    def ds(t):
        if stationary:
            return np.zeros(np.shape(np.asarray(t, dtype=float)))
        return omega * np.cos(omega * np.asarray(t, dtype=float))

    def X(x1):
        return np.cos(np.pi * np.asarray(x1, dtype=float) / p.a)

    def d2X(x1):
        return -(np.pi / p.a) ** 2 * np.cos(np.pi * np.asarray(x1) / p.a)

    # depth profiles: value/slope continuity and exact flux splits
    S0_top = 1.2              # slope of v0 at x2 = 0
    S0_bot, V0_bot = -0.9, 0.6
    split1 = (0.7, 0.3)       # flux fractions into the two level-1 sheets
    V1 = {1: 0.8, 2: 0.4}     # level-1 bottom values
    T1 = {1: -0.5, 2: 0.6}    # level-1 bottom slopes
    split2 = {1: (0.6, 0.4), 2: (0.45, 0.55)}
    V2base = {1: 0.55, 2: 0.9, 3: 0.2, 4: 0.35}

    prof = {}
    prof["+"] = _hermite(0.0, p.d0, 1.0, p.h0 * S0_top, 0.7, 0.0)
    prof[(0, 0)] = _hermite(q[1], 0.0, V0_bot, S0_bot, 1.0, S0_top)
    s1 = {m: split1[m - 1] * p.h0 * S0_bot / p.h(1, m) for m in (1, 2)}
    for m in (1, 2):
        prof[(1, m)] = _hermite(q[2], q[1], V1[m], T1[m], V0_bot, s1[m])
    for pm in (1, 2):
        for idx, m in enumerate((1, 2) if pm == 1 else (3, 4)):
            frac = split2[pm][idx]
            slope_top = frac * p.h(1, pm) * T1[pm] / p.h(2, m)
            prof[(2, m)] = _hermite(q[3], q[2], V2base[m], 0.0, V1[pm], slope_top)

    def sheet_exact(key):
        val = prof[key][0]

        def f(x1, x2, t, _val=val):
            return amplitude * s(t) * X(x1) * _val(x2)
        return f

    exact_sheets = {key: sheet_exact(key) for key in prof}

    def f0(x1, x2, t):
        val, _, d2 = prof["+"]
        u = amplitude * s(t) * X(x1) * val(x2)
        lap = amplitude * s(t) * (d2X(x1) * val(x2) + X(x1) * d2(x2))
        return amplitude * ds(t) * X(x1) * val(x2) - lap + k(u)

    def make_sheet_source(key, level):
        val, _, d2 = prof[key]
        h = p.h(level, key[1]) if level > 0 else p.h0

        def r(x1, x2, t, _val=val, _d2=d2, _h=h, _lev=level):
            u = amplitude * s(t) * X(x1) * _val(x2)
            core = (amplitude * ds(t) * X(x1) * _val(x2)
                    - amplitude * s(t) * X(x1) * _d2(x2)
                    + k_levels[_lev](u))
            return _h * core
        return r

    sheet_source = {}
    sheet_source[(0, 0)] = make_sheet_source((0, 0), 0)
    for m in (1, 2):
        sheet_source[(1, m)] = make_sheet_source((1, m), 1)
    for m in (1, 2, 3, 4):
        sheet_source[(2, m)] = make_sheet_source((2, m), 2)

    data = ProblemData(k=k, k_levels=k_levels, kappa=kappa,
                       alpha=(2.0, 2.0, 2.0), beta=(2.0, 2.0, 2.0), T=T,
                       f0=f0, sheet_source=sheet_source)
    return ManufacturedCase(kind="homogenized", data=data, params=params,
                            exact=exact_sheets["+"],
                            exact_sheets=exact_sheets, omega=omega)
