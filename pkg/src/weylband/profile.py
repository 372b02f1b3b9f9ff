"""Surface-of-revolution profiles and the observable catalog.

A surface is described by the radius f(s) of the parallel at meridian
arclength s in [0, L].  Only f enters the principal symbol
sigma^2 + theta*^2 / f(s)^2, so g is never materialized; ``g_prime`` is kept
for plotting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ParamOutOfRange, UnknownFamily, UnknownObservable
from .quadrature import tanh_sinh

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SurfaceProfile:
    L: float
    f: ArrayFn
    f_prime: ArrayFn
    f_double_prime: ArrayFn
    s0: float
    f_max: float
    family_tag: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def g_prime(self, s):
        return np.sqrt(np.clip(1.0 - self.f_prime(s) ** 2, 0.0, None))

    def symbol(self, s, sigma, theta_star):
        """Principal symbol sigma^2 + theta*^2 / f(s)^2."""
        return sigma**2 + theta_star**2 / self.f(s) ** 2


# --- catalog families -------------------------------------------------------


def _sphere() -> SurfaceProfile:
    return SurfaceProfile(
        L=math.pi,
        f=np.sin,
        f_prime=np.cos,
        f_double_prime=lambda s: -np.sin(s),
        s0=0.5 * math.pi,
        f_max=1.0,
        family_tag="sphere",
        params={},
    )


def _perturbed_sphere(c: float) -> SurfaceProfile:
    # f' = cos s (1 + 3c sin^2 s); the slope bound f'^2 <= 1 fails for c > 1/6
    # and the maximum at pi/2 degenerates for c <= -1/3.
    if not (-1.0 / 3.0 < c <= 1.0 / 6.0):
        raise ParamOutOfRange(f"perturbed_sphere needs -1/3 < c <= 1/6, got c={c}")

    def f(s):
        sn = np.sin(s)
        return sn + c * sn**3

    def fp(s):
        return np.cos(s) * (1.0 + 3.0 * c * np.sin(s) ** 2)

    def fpp(s):
        sn = np.sin(s)
        return -sn + 3.0 * c * sn * (2.0 - 3.0 * sn**2)

    return SurfaceProfile(
        L=math.pi,
        f=f,
        f_prime=fp,
        f_double_prime=fpp,
        s0=0.5 * math.pi,
        f_max=1.0 + c,
        family_tag="perturbed_sphere",
        params={"c": float(c)},
    )


FAMILIES = ("sphere", "perturbed_sphere")


def make_profile(family_tag: str, params: Mapping[str, Any] | None = None) -> SurfaceProfile:
    params = dict(params or {})
    if family_tag == "sphere":
        if params:
            raise ParamOutOfRange(f"sphere takes no parameters, got {sorted(params)}")
        return _sphere()
    if family_tag == "perturbed_sphere":
        extra = set(params) - {"c"}
        if extra:
            raise ParamOutOfRange(f"unknown perturbed_sphere parameters {sorted(extra)}")
        return _perturbed_sphere(float(params.get("c", 0.0)))
    raise UnknownFamily(f"unknown surface family {family_tag!r}; known: {', '.join(FAMILIES)}")


# --- validation -------------------------------------------------------------


@dataclass
class ValidationReport:
    checks: dict[str, bool]
    details: dict[str, str]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, passed in self.checks.items() if not passed]


def validate_profile(profile: SurfaceProfile, grid_n: int = 256, tol: float = 1e-9) -> ValidationReport:
    """Check the simple-surface invariants on a grid of ``grid_n`` points."""
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    L = profile.L
    s = np.linspace(0.0, L, grid_n + 1)
    interior = s[1:-1]
    f_int = profile.f(interior)
    fp = profile.f_prime(s)

    checks: dict[str, bool] = {}
    details: dict[str, str] = {}

    end_vals = (float(profile.f(np.array([0.0]))[0]), float(profile.f(np.array([L]))[0]))
    checks["vanishes_at_poles"] = max(abs(end_vals[0]), abs(end_vals[1])) <= tol
    details["vanishes_at_poles"] = f"f(0)={end_vals[0]:.3e}, f(L)={end_vals[1]:.3e}"

    checks["positive_interior"] = bool(np.all(f_int > 0.0))
    details["positive_interior"] = f"min f on interior grid = {f_int.min():.3e}"

    d0, dL = float(fp[0]), float(fp[-1])
    checks["pole_regularity"] = abs(d0 - 1.0) <= tol and abs(dL + 1.0) <= tol
    details["pole_regularity"] = f"f'(0)={d0:.12g}, f'(L)={dL:.12g}"

    # exactly one sign change of f' on the grid, bracketing s0, with f''(s0) < 0
    signs = np.sign(fp[1:-1])
    signs = signs[signs != 0]
    n_changes = int(np.count_nonzero(np.diff(signs)))
    fpp0 = float(profile.f_double_prime(np.array([profile.s0]))[0])
    fp0 = float(profile.f_prime(np.array([profile.s0]))[0])
    fmax_ok = abs(float(profile.f(np.array([profile.s0]))[0]) - profile.f_max) <= tol
    checks["simple_maximum"] = n_changes == 1 and fpp0 < 0.0 and abs(fp0) <= tol and fmax_ok
    details["simple_maximum"] = (
        f"{n_changes} sign change(s) of f'; f'(s0)={fp0:.3e}, f''(s0)={fpp0:.6g}, "
        f"f(s0) matches f_max: {fmax_ok}"
    )

    slope = float(np.max(fp**2))
    checks["slope_bound"] = slope <= 1.0 + tol
    details["slope_bound"] = f"max f'^2 = {slope:.15g}"
    return ValidationReport(checks, details)


def area(profile: SurfaceProfile, quad_tol: float = 1e-12) -> float:
    """Riemannian area 2 pi int_0^L f ds."""
    if profile.L <= 0.0:
        return 0.0
    value, _ = tanh_sinh(lambda s, dl, dr: profile.f(s), 0.0, profile.L, quad_tol)
    return 2.0 * math.pi * value


# --- observables ------------------------------------------------------------

S_ONLY_KINDS = ("cos2s", "cos_s", "bump", "constant")
OBSERVABLE_KINDS = S_ONLY_KINDS + ("theta_coupled",)


@dataclass(frozen=True)
class ObservableSpec:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OBSERVABLE_KINDS:
            raise UnknownObservable(
                f"unknown observable {self.kind!r}; known: {', '.join(OBSERVABLE_KINDS)}"
            )
        if self.kind == "theta_coupled":
            for key in ("q0", "q1"):
                sub = self.params.get(key, "cos2s" if key == "q0" else "cos_s")
                if sub not in S_ONLY_KINDS:
                    raise UnknownObservable(f"theta_coupled {key} must be an s-only kind, got {sub!r}")

    @property
    def depends_on_theta(self) -> bool:
        return self.kind == "theta_coupled" and float(self.params.get("eta", 0.0)) != 0.0

    def s_part(self, s):
        """The theta-independent part of q (all of q for s-only kinds)."""
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.kind == "cos2s":
            return np.cos(s) ** 2
        if self.kind == "cos_s":
            return np.cos(s)
        if self.kind == "bump":
            beta = float(p.get("beta", 1.0))
            s1 = float(p.get("s1", 0.5 * math.pi))
            return np.exp(-beta * (s - s1) ** 2)
        if self.kind == "constant":
            return np.full_like(s, float(p.get("value", 1.0)))
        return ObservableSpec(p.get("q0", "cos2s"), p.get("q0_params", {})).s_part(s)

    def theta_part(self, s):
        """Amplitude q1(s) multiplying cos(theta); zero for s-only kinds."""
        s = np.asarray(s, dtype=float)
        if self.kind != "theta_coupled":
            return np.zeros_like(s)
        eta = float(self.params.get("eta", 0.0))
        q1 = ObservableSpec(self.params.get("q1", "cos_s"), self.params.get("q1_params", {}))
        return eta * q1.s_part(s)

    def __call__(self, s, theta=0.0):
        s = np.asarray(s, dtype=float)
        if self.kind != "theta_coupled":
            return self.s_part(s) + 0.0 * np.asarray(theta)
        return self.s_part(s) + self.theta_part(s) * np.cos(theta)

    def __hash__(self):
        return hash((self.kind, tuple(sorted((k, repr(v)) for k, v in self.params.items()))))


def eval_observable(obs: ObservableSpec, s, theta=0.0):
    return obs(s, theta)
