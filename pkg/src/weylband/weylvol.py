"""Admissible torus sets, band volumes and the Bohr-Sommerfeld lattice.

Phase-space volume reduction
----------------------------
For the symbol p = sigma^2 + theta*^2 / f(s)^2, change fiber variables at
fixed s from (sigma, theta*) to (E, a) with theta* = a sqrt(E) and
sigma = +-sqrt(E) sqrt(1 - a^2/f^2).  The Jacobian is
1 / (2 sqrt(1 - a^2/f^2)), there are two sigma branches and the theta fiber
has length 2 pi, so

    vol{E2 <= p <= E4, a in A} = 2 pi (E4 - E2) int_A J(1, a) da,

with J(1, a) = int f / sqrt(f^2 - a^2) ds.  For A = (-f_max, f_max) this is
pi (E4 - E2) Area(M).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .classical import (
    DEFAULT_CONFIG,
    ClassicalConfig,
    action_iota,
    diophantine_class,
    equatorial_J1,
    equatorial_average,
    q_infinity,
    rotation_number,
    torus_average,
    weight_J,
)
from .errors import LevelHitsSingularLeaf, RootBracketFailure, TangentCrossing
from .profile import ObservableSpec, SurfaceProfile, area
from .quadrature import tanh_sinh


@dataclass(frozen=True)
class BandSpec:
    """Counting rectangle (E2, E4) + i eps (F3, F1)."""

    E2: float
    E4: float
    F3: float
    F1: float
    eps: float
    h: float
    alpha: float | None = None  # eps = h**alpha, kept for reporting

    def __post_init__(self):
        if not (self.E2 < self.E4):
            raise ValueError(f"need E2 < E4, got {self.E2}, {self.E4}")
        if not (self.F3 < self.F1):
            raise ValueError(f"need F3 < F1, got {self.F3}, {self.F1}")
        if self.h <= 0.0 or self.eps < 0.0:
            raise ValueError("need h > 0 and eps >= 0")

    @classmethod
    def from_exponent(cls, E2, E4, F3, F1, h, alpha):
        return cls(E2, E4, F3, F1, h**alpha if alpha else 0.0, h, alpha)


# --- admissible set ---------------------------------------------------------


@dataclass(frozen=True)
class Crossing:
    a: float
    level: float
    slope: float
    dioph_kind: str


@dataclass
class AdmissibleSet:
    intervals: list[tuple[float, float]]
    crossings: list[Crossing] = field(default_factory=list)
    containment_checked: bool = False

    @property
    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def contains(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        inside = np.zeros(a.shape, dtype=bool)
        for lo, hi in self.intervals:
            inside |= (a >= lo) & (a <= hi)
        return inside

    @classmethod
    def full(cls, profile: SurfaceProfile) -> "AdmissibleSet":
        return cls([(-profile.f_max, profile.f_max)], [], True)

    @classmethod
    def empty(cls) -> "AdmissibleSet":
        return cls([], [], True)


def _limit_average_fn(profile, obs, cfg):
    """a -> (lo, hi) of Q_infinity, continuous up to the equatorial leaves."""
    q_eq = equatorial_average(profile, obs)

    def endpoints(a):
        if abs(a) >= profile.f_max - cfg.degenerate_tol:
            return q_eq, q_eq
        if not obs.depends_on_theta:
            v = torus_average(profile, obs, a, cfg.quad_tol)
            return v, v
        iv = q_infinity(profile, obs, a, cfg)
        return iv.lo, iv.hi

    return endpoints


def _derivative(fn: Callable[[float], float], a: float, lo: float, hi: float, step: float = 1e-5) -> float:
    left, right = max(a - step, lo), min(a + step, hi)
    return (fn(right) - fn(left)) / (right - left)


def admissible_set(
    profile: SurfaceProfile,
    obs: ObservableSpec,
    F3: float,
    F1: float,
    grid_n: int = 401,
    transversality_tol: float = 1e-3,
    cfg: ClassicalConfig = DEFAULT_CONFIG,
    level_tol: float = 1e-9,
) -> AdmissibleSet:
    """Closure of {a : Q_infinity(Lambda_a) in [F3, F1]}.

    Boundary tori are located by bracketing root-finding on sign changes of
    the endpoint functions minus F_j.  Raises :class:`TangentCrossing` when a
    level is met with slope below ``transversality_tol`` (including tangential
    touching without a sign change) and :class:`LevelHitsSingularLeaf` when a
    level lies in the limit set of the equatorial or meridian leaf, or inside
    a genuine interval of a rational torus.
    """
    if not F3 < F1:
        raise ValueError("need F3 < F1")
    fm = profile.f_max
    a_grid = np.linspace(-fm, fm, grid_n)
    endpoints = _limit_average_fn(profile, obs, cfg)
    lo_hi = np.array([endpoints(float(a)) for a in a_grid])
    lo_vals, hi_vals = lo_hi[:, 0], lo_hi[:, 1]

    def lo_fn(a):
        return endpoints(a)[0]

    def hi_fn(a):
        return endpoints(a)[1]

    crossings: list[Crossing] = []
    for level, fn, vals in ((F3, lo_fn, lo_vals), (F1, hi_fn, hi_vals)):
        diff = vals - level
        # tangential touching: discrete extremum of fn near the level without a sign change
        for i in range(1, grid_n - 1):
            window = diff[i - 1 : i + 2]
            if np.all(window > 0) or np.all(window < 0):
                is_min = diff[i] <= diff[i - 1] and diff[i] <= diff[i + 1]
                is_max = diff[i] >= diff[i - 1] and diff[i] >= diff[i + 1]
                if not (is_min or is_max):
                    continue
                sign = 1.0 if is_min else -1.0
                res = minimize_scalar(
                    lambda a: sign * (fn(a) - level),
                    bounds=(a_grid[i - 1], a_grid[i + 1]),
                    method="bounded",
                    options={"xatol": 1e-10},
                )
                if abs(fn(res.x) - level) <= max(level_tol, 1e-6 * abs(diff[i])):
                    raise TangentCrossing(
                        f"transversality violated at a = {res.x:.6g}: level {level:g} "
                        f"touches the torus averages without crossing",
                        a=float(res.x),
                        level=level,
                    )
        for i in range(grid_n - 1):
            d0, d1 = diff[i], diff[i + 1]
            if d0 == 0.0 or d0 * d1 < 0.0:
                a_j = a_grid[i] if d0 == 0.0 else brentq(lambda a: fn(a) - level, a_grid[i], a_grid[i + 1], xtol=1e-13)
                if abs(abs(a_j) - fm) <= cfg.degenerate_tol:
                    continue  # handled by the singular-leaf check below
                slope = _derivative(fn, a_j, -fm, fm)
                if abs(slope) < transversality_tol:
                    raise TangentCrossing(
                        f"transversality violated at a = {a_j:.6g}: d<q>/da = {slope:.3g} "
                        f"at level {level:g}",
                        a=float(a_j),
                        level=level,
                    )
                kind = "meridian" if a_j == 0.0 else diophantine_class(
                    rotation_number(profile, a_j, cfg.quad_tol), cfg.C0, cfg.N0, cfg.Q_max, cfg.rational_tol
                ).kind
                crossings.append(Crossing(float(a_j), level, float(slope), kind))

    # singular leaves: equator (|a| = f_max) and meridian (a = 0)
    q_eq = lo_vals[0]
    q_mer = endpoints(0.0)
    for level in (F3, F1):
        if abs(level - q_eq) <= level_tol:
            raise LevelHitsSingularLeaf(
                f"level {level:g} equals the equatorial average {q_eq:g}", leaf="equator", level=level
            )
        if q_mer[0] - level_tol <= level <= q_mer[1] + level_tol:
            raise LevelHitsSingularLeaf(
                f"level {level:g} lies in the limit set of the meridian torus", leaf="meridian", level=level
            )
        if obs.depends_on_theta:
            inside = (lo_vals + level_tol < level) & (level < hi_vals - level_tol)
            if np.any(inside):
                a_bad = float(a_grid[np.argmax(inside)])
                raise LevelHitsSingularLeaf(
                    f"level {level:g} lies inside the limit interval of the rational torus a = {a_bad:.6g}",
                    leaf="rational",
                    level=level,
                )

    # assemble intervals from grid membership, snapping ends to crossings
    member = (lo_vals >= F3) & (hi_vals <= F1)
    cross_a = sorted(c.a for c in crossings)
    intervals: list[tuple[float, float]] = []
    i = 0
    while i < grid_n:
        if not member[i]:
            i += 1
            continue
        j = i
        while j + 1 < grid_n and member[j + 1]:
            j += 1
        left = -fm if i == 0 else _snap(cross_a, a_grid[i - 1], a_grid[i])
        right = fm if j == grid_n - 1 else _snap(cross_a, a_grid[j], a_grid[j + 1])
        intervals.append((float(left), float(right)))
        i = j + 1
    return AdmissibleSet(intervals, crossings, containment_checked=True)


def _snap(cross_a: Sequence[float], lo: float, hi: float) -> float:
    for a in cross_a:
        if lo <= a <= hi:
            return a
    return 0.5 * (lo + hi)


# --- volumes ----------------------------------------------------------------


def J1_extended(profile: SurfaceProfile, a: float, quad_tol: float = 1e-12) -> float:
    """J(1, a) continued to the equatorial leaves by its limit value."""
    if profile.f_max - abs(a) < 1e-10:
        return equatorial_J1(profile)
    return weight_J(profile, 1.0, a, quad_tol)


def band_volume(profile: SurfaceProfile, A: AdmissibleSet, E2: float, E4: float, quad_tol: float = 1e-10) -> float:
    """Liouville volume of {E2 <= p <= E4, a in A}: 2 pi (E4 - E2) int_A J(1, a) da."""
    total = 0.0
    inner_tol = min(1e-12, quad_tol)
    for lo, hi in A.intervals:
        val, _ = tanh_sinh(
            lambda a, dl, dr: np.array([J1_extended(profile, float(x), inner_tol) for x in a]),
            lo,
            hi,
            quad_tol,
        )
        total += val
    return 2.0 * math.pi * (E4 - E2) * total


def weyl_count_prediction(volume: float, h: float) -> float:
    if h <= 0.0:
        raise ValueError("h must be positive")
    return volume / (2.0 * math.pi * h) ** 2


def strip_volume(profile: SurfaceProfile, E1: float, E2: float) -> float:
    """vol p^-1([E1, E2]) = pi (E2 - E1) Area(M)."""
    return math.pi * (E2 - E1) * area(profile)


def strip_prediction(profile: SurfaceProfile, E1: float, E2: float, h: float) -> float:
    return weyl_count_prediction(strip_volume(profile, E1, E2), h)


@dataclass
class WeylPrediction:
    volume: float
    n_pred: float
    strip_volume: float
    n_strip_pred: float


def weyl_prediction(profile: SurfaceProfile, A: AdmissibleSet, E2: float, E4: float, h: float) -> WeylPrediction:
    vol = band_volume(profile, A, E2, E4)
    svol = strip_volume(profile, E2, E4)
    return WeylPrediction(vol, weyl_count_prediction(vol, h), svol, weyl_count_prediction(svol, h))


def band_volume_isoenergetic(
    profile: SurfaceProfile,
    obs: ObservableSpec,
    F3_of_E: Callable[[float], float],
    F1_of_E: Callable[[float], float],
    E2: float,
    E4: float,
    n_sub: int = 16,
    **admissible_kw,
) -> float:
    """Band volume with energy-dependent levels, summed over energy subintervals.

    Torus averages of theta-independent observables do not depend on the
    energy once tori are labelled by a = theta*/sqrt(E), so each subinterval
    reuses the admissible set at its midpoint energy.
    """
    if obs.depends_on_theta:
        raise ValueError("energy-dependent levels are only supported for theta-independent observables")
    edges = np.linspace(E2, E4, n_sub + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        A = admissible_set(profile, obs, F3_of_E(mid), F1_of_E(mid), **admissible_kw)
        total += band_volume(profile, A, lo, hi)
    return total


# --- Bohr-Sommerfeld lattice ------------------------------------------------


@dataclass
class BSLattice:
    k: np.ndarray
    m: np.ndarray
    z: np.ndarray
    a: np.ndarray
    h: float
    eps: float
    excluded: int = 0
    maslov_k0: tuple[int, int] = (2, 0)

    def __len__(self):
        return len(self.z)


def bohr_sommerfeld_spectrum(
    profile: SurfaceProfile,
    obs: ObservableSpec,
    h: float,
    eps: float,
    window: tuple[float, float],
    a_margin: float = 0.02,
    quad_tol: float = 1e-13,
) -> BSLattice:
    """Quasi-eigenvalues from sqrt(E) iota(hm/sqrt(E)) = h (k + 1/2), a sqrt(E) = h m.

    The libration cycle carries Maslov index 2 (two turning points), the
    rotation cycle 0.  Each root in E is decorated with the torus average:
    z = E + i eps <q>(Lambda_a).
    """
    E_lo, E_hi = window
    if not 0.0 < E_lo < E_hi:
        raise ValueError("window must satisfy 0 < E_lo < E_hi")
    fm = profile.f_max
    a_cap = (1.0 - a_margin) * fm
    m_max = int(math.floor(math.sqrt(E_hi) * fm / h))
    ks, ms, zs, as_ = [], [], [], []
    excluded = 0
    avg_cache: dict[float, float] = {}

    for m in range(0, m_max + 1):
        def action(E, m=m):
            a = h * m / math.sqrt(E)
            if abs(a) >= fm:
                return 0.0
            return math.sqrt(E) * action_iota(profile, a, quad_tol)

        # the left side is increasing in E; search energies where |a| < f_max
        E_start = max(E_lo, (h * m / fm) ** 2 * (1.0 + 1e-12))
        if E_start >= E_hi:
            continue
        I_lo, I_hi = action(E_start), action(E_hi)
        k_first = max(0, math.ceil(I_lo / h - 0.5))
        k_last = math.floor(I_hi / h - 0.5)
        for k in range(k_first, k_last + 1):
            target = h * (k + 0.5)
            try:
                E = brentq(lambda E: action(E) - target, E_start, E_hi, xtol=1e-15, rtol=8.9e-16)
            except ValueError as exc:
                raise RootBracketFailure(f"no root for k={k}, m={m} in [{E_start}, {E_hi}]") from exc
            a = h * m / math.sqrt(E)
            if abs(a) > a_cap:
                excluded += 2 if m else 1
                continue
            if a not in avg_cache:
                avg_cache[a] = torus_average(profile, obs, a, 1e-12)
            for mm in ((m, -m) if m else (0,)):
                ks.append(k)
                ms.append(mm)
                zs.append(E + 1j * eps * avg_cache[a])
                as_.append(math.copysign(a, mm) if mm else 0.0)

    order = np.lexsort((np.array(ks), np.array(ms))) if ks else np.array([], dtype=int)
    return BSLattice(
        k=np.array(ks, dtype=int)[order],
        m=np.array(ms, dtype=int)[order],
        z=np.array(zs, dtype=complex)[order],
        a=np.array(as_, dtype=float)[order],
        h=h,
        eps=eps,
        excluded=excluded,
    )


def in_rectangle(z: np.ndarray, band: BandSpec) -> np.ndarray:
    """Strict membership in (E2, E4) + i eps (F3, F1)."""
    z = np.asarray(z, dtype=complex)
    if band.eps == 0.0:
        im = np.zeros(z.shape)
    else:
        im = z.imag / band.eps
    return (z.real > band.E2) & (z.real < band.E4) & (im > band.F3) & (im < band.F1)


def near_boundary(z: np.ndarray, band: BandSpec, tol: float = 1e-8) -> int:
    """Number of points within ``tol`` of the rectangle's boundary."""
    z = np.asarray(z, dtype=complex)
    im = z.imag / band.eps if band.eps else np.zeros(z.shape)
    re = z.real
    near_re = (np.minimum(abs(re - band.E2), abs(re - band.E4)) <= tol) & (im >= band.F3 - tol) & (im <= band.F1 + tol)
    near_im = (np.minimum(abs(im - band.F3), abs(im - band.F1)) <= tol) & (re >= band.E2 - tol) & (re <= band.E4 + tol)
    return int(np.count_nonzero(near_re | near_im))


def count_lattice(lattice: BSLattice, band: BandSpec) -> int:
    return int(np.count_nonzero(in_rectangle(lattice.z, band)))
