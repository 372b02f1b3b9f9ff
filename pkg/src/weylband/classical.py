"""Classical invariants of the geodesic flow on a simple surface of revolution.

Tori at energy p = 1 are labelled by the normalized angular momentum
a = theta* / sqrt(E).  For 0 < |a| < f_max the s-motion librates between the
parallels f(s_-) = f(s_+) = |a|; a = 0 is the meridian torus and |a| = f_max
the equatorial (singular) leaf.

Every integral over [s_-, s_+] carries an inverse-square-root singularity
at the endpoints, handled by :func:`weylband.quadrature.tanh_sinh` with
cancellation-free evaluation of f(s)^2 - a^2 near the turning points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import DegenerateTorus, StepFailure, UndecidedRationality
from .profile import ObservableSpec, SurfaceProfile
from .quadrature import tanh_sinh

# f(s) - f(s_e) is computed as int_{s_e}^{s} f' by Gauss-Legendre rather than
# by direct subtraction, which cancels for near-equatorial tori.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class ClassicalConfig:
    quad_tol: float = 1e-12
    ode_tol: float = 1e-11
    rational_tol: float = 1e-9
    C0: float = 10.0
    N0: float = 3.0
    Q_max: int = 10**5
    theta_grid: int = 64
    refine_factor: int = 4
    refine_tol: float = 1e-6
    max_refinements: int = 4
    orbit_samples: int = 512
    degenerate_tol: float = 1e-12


DEFAULT_CONFIG = ClassicalConfig()


# --- turning points and torus integrals -------------------------------------


@dataclass(frozen=True)
class TurningPoints:
    s_minus: float
    s_plus: float


def turning_points(profile: SurfaceProfile, a: float, tol: float = 1e-12) -> TurningPoints:
    level = abs(a)
    if profile.f_max - level < tol:
        raise DegenerateTorus(f"|a|={level!r} is within {tol:g} of f_max={profile.f_max!r}")
    if level <= 0.0:
        raise DegenerateTorus("a = 0 is the meridian torus; it has no turning parallels")

    def g(s):
        if s <= 0.0 or s >= profile.L:
            return -level  # f vanishes at the poles
        return float(profile.f(np.array([s]))[0]) - level

    kw = dict(xtol=1e-16, rtol=8.9e-16, maxiter=200)
    s_minus = brentq(g, 0.0, profile.s0, **kw)
    s_plus = brentq(g, profile.s0, profile.L, **kw)
    return TurningPoints(s_minus, s_plus)


def _torus_quad(profile: SurfaceProfile, a: float, kernel, quad_tol: float) -> float:
    """Integrate ``kernel(s, f, root)`` over [s_-, s_+], root = sqrt(f^2 - a^2)."""
    tp = turning_points(profile, a)
    lo, hi = tp.s_minus, tp.s_plus
    f_lo = float(profile.f(np.array([lo]))[0])
    f_hi = float(profile.f(np.array([hi]))[0])

    def integrand(s, dl, dr):
        near_lo = dl <= dr
        base = np.where(near_lo, f_lo, f_hi)
        start = np.where(near_lo, lo, hi)
        delta = np.where(near_lo, dl, -dr)
        slopes = profile.f_prime(start[:, None] + delta[:, None] * _GL_NODES[None, :])
        gap = np.maximum(delta * (slopes @ _GL_WEIGHTS), 0.0)
        f = base + gap
        root = np.sqrt(gap * (gap + 2.0 * base))
        return kernel(s, f, root)

    value, _ = tanh_sinh(integrand, lo, hi, quad_tol)
    return value


def _as_psi(psi) -> Callable[[np.ndarray], np.ndarray]:
    if callable(psi):
        return psi
    const = float(psi)
    return lambda s: np.full_like(np.asarray(s, dtype=float), const)


def weight_J(profile: SurfaceProfile, psi, a: float, quad_tol: float = 1e-12) -> float:
    """J(psi, a) = int psi(s) f / sqrt(f^2 - a^2) ds over the libration interval.

    ``psi`` is a callable of s or a constant.  For a = 0 the integral runs
    over the whole meridian.
    """
    psi = _as_psi(psi)
    if a == 0.0:
        value, _ = tanh_sinh(lambda s, dl, dr: psi(s), 0.0, profile.L, quad_tol)
        return value
    return _torus_quad(profile, a, lambda s, f, root: psi(s) * f / root, quad_tol)


def libration_period(profile: SurfaceProfile, a: float, quad_tol: float = 1e-12) -> float:
    """Time for one full s-oscillation at energy 1; equals J(1, a)."""
    return weight_J(profile, 1.0, a, quad_tol)


def equatorial_J1(profile: SurfaceProfile) -> float:
    """Limit of J(1, a) as |a| -> f_max (harmonic oscillation about the equator)."""
    kappa = -float(profile.f_double_prime(np.array([profile.s0]))[0])
    return math.pi * math.sqrt(profile.f_max / kappa)


def rotation_number(profile: SurfaceProfile, a: float, quad_tol: float = 1e-12) -> float:
    """omega(a) = (a / pi) int f^-2 (1 - a^2/f^2)^(-1/2) ds; odd in a."""
    if a == 0.0:
        raise ValueError("the rotation number is not defined on the meridian leaf a = 0")
    value = _torus_quad(profile, a, lambda s, f, root: 1.0 / (f * root), quad_tol)
    return a * value / math.pi


def action_iota(profile: SurfaceProfile, a: float, quad_tol: float = 1e-12) -> float:
    """Libration action iota(a) = (1/pi) int sqrt(1 - a^2/f^2) ds."""
    if a == 0.0:
        return profile.L / math.pi
    if profile.f_max - abs(a) < DEFAULT_CONFIG.degenerate_tol:
        return 0.0
    return _torus_quad(profile, a, lambda s, f, root: root / f, quad_tol) / math.pi


def torus_average(profile: SurfaceProfile, obs: ObservableSpec, a: float, quad_tol: float = 1e-12) -> float:
    """Average of q over the torus Lambda_a in the action-angle measure.

    theta enters only through q1(s) cos(theta), whose theta-average is zero,
    so the double integral reduces to the s-only part.
    """
    if obs.kind == "theta_coupled":
        return _theta_torus_average(profile, obs, a, quad_tol)
    return weight_J(profile, obs.s_part, a, quad_tol) / weight_J(profile, 1.0, a, quad_tol)


def _theta_torus_average(profile, obs, a, quad_tol, n_theta: int = 64) -> float:
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta

    def psi(s):
        return np.mean(obs(s[:, None], theta[None, :]), axis=1)

    return weight_J(profile, psi, a, quad_tol) / weight_J(profile, 1.0, a, quad_tol)


# --- Hamiltonian flow -------------------------------------------------------


@dataclass(frozen=True)
class FlowState:
    s: float
    theta: float
    sigma: float
    theta_star: float

    def energy(self, profile: SurfaceProfile) -> float:
        return float(profile.symbol(np.array([self.s]), self.sigma, self.theta_star)[0])

    @classmethod
    def on_torus(cls, profile: SurfaceProfile, a: float, theta: float = 0.0, energy: float = 1.0) -> "FlowState":
        """State at the inner turning parallel of Lambda_a (sigma = 0)."""
        tp = turning_points(profile, a)
        return cls(tp.s_minus, theta, 0.0, a * math.sqrt(energy))


@dataclass
class Trajectory:
    profile: SurfaceProfile
    state0: FlowState
    T: float
    sol: object
    turning_times: np.ndarray
    has_integral: bool

    def __call__(self, t):
        """Columns (s, theta, sigma, theta*[, int_0^t q]) at times t."""
        return self.sol(t)

    def energy(self, t) -> np.ndarray:
        y = self.sol(np.atleast_1d(t))
        return self.profile.symbol(y[0], y[2], y[3])

    def running_average(self, t) -> np.ndarray:
        if not self.has_integral:
            raise ValueError("trajectory was integrated without an observable")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.sol(t)[4] / t


def flow_integrate(
    profile: SurfaceProfile,
    state0: FlowState,
    T: float,
    ode_tol: float = 1e-11,
    obs: ObservableSpec | None = None,
) -> Trajectory:
    """Integrate Hamilton's equations for sigma^2 + theta*^2 / f(s)^2.

    s' = 2 sigma, sigma' = 2 theta*^2 f'/f^3, theta' = 2 theta*/f^2, theta*' = 0.
    With ``obs`` given, int_0^t q(s, theta) dt is carried as a fifth component.
    Uses the DOP853 embedded pair with dense output; sign changes of sigma
    (turning points) are recorded as events.
    """
    if state0.energy(profile) <= 0.0:
        raise ValueError("initial state must have positive energy")
    if state0.theta_star == 0.0:
        raise ValueError("meridian orbits (theta* = 0) pass through the poles; use torus_average")
    f, fp = profile.f, profile.f_prime

    def rhs(t, y):
        s, theta, sigma, ts = y[0], y[1], y[2], y[3]
        fs = f(s)
        out = [2.0 * sigma, 2.0 * ts / fs**2, 2.0 * ts**2 * fp(s) / fs**3, 0.0 * s]
        if obs is not None:
            out.append(obs(s, theta))
        return np.array(out)

    def sigma_zero(t, y):
        return y[2]

    y0 = [state0.s, state0.theta, state0.sigma, state0.theta_star]
    if obs is not None:
        y0.append(0.0)
    res = solve_ivp(
        rhs,
        (0.0, T),
        y0,
        method="DOP853",
        rtol=ode_tol,
        atol=ode_tol,
        dense_output=True,
        events=sigma_zero,
    )
    if res.status < 0:
        raise StepFailure(res.message)
    return Trajectory(profile, state0, T, res.sol, np.asarray(res.t_events[0]), obs is not None)


def flow_average(
    profile: SurfaceProfile,
    obs: ObservableSpec,
    state0: FlowState,
    T: float,
    ode_tol: float = 1e-11,
) -> float:
    """(1/T) int_0^T q(flow_t(state0)) dt."""
    traj = flow_integrate(profile, state0, T, ode_tol, obs)
    return float(traj.running_average(T)[0])


# --- Diophantine classification --------------------------------------------


@dataclass(frozen=True)
class DiophantineClass:
    kind: str  # "rational" | "numerically_diophantine" | "undecided"
    p: int | None = None
    q: int | None = None
    C0: float = DEFAULT_CONFIG.C0
    N0: float = DEFAULT_CONFIG.N0
    Q_max: int = DEFAULT_CONFIG.Q_max
    rational_tol: float = DEFAULT_CONFIG.rational_tol


def convergents(x: float, q_max: int):
    """Continued-fraction convergents p/q of the exact binary value of x, q <= q_max."""
    frac = Fraction(x)
    p_prev, q_prev, p, q = 0, 1, 1, 0
    while True:
        a_k = frac.numerator // frac.denominator
        p_prev, q_prev, p, q = p, q, a_k * p + p_prev, a_k * q + q_prev
        if q > q_max:
            return
        yield p, q
        rest = frac - a_k
        if rest == 0:
            return
        frac = 1 / rest


def diophantine_class(
    omega: float,
    C0: float = DEFAULT_CONFIG.C0,
    N0: float = DEFAULT_CONFIG.N0,
    Q_max: int = DEFAULT_CONFIG.Q_max,
    rational_tol: float = DEFAULT_CONFIG.rational_tol,
) -> DiophantineClass:
    """Classify omega by its convergents with denominator at most Q_max.

    rational(p, q) if some convergent is within rational_tol *and* closer
    than the Diophantine bound 1 / (C0 q^N0) (every irrational has
    convergents inside any fixed tolerance once q is large enough);
    otherwise numerically Diophantine if every convergent satisfies
    |omega - p/q| >= 1 / (C0 q^N0), else undecided.
    """
    if not math.isfinite(omega):
        raise ValueError("omega must be finite")
    kw = dict(C0=C0, N0=N0, Q_max=Q_max, rational_tol=rational_tol)
    violated = False
    for p, q in convergents(omega, Q_max):
        dist = abs(omega - p / q)
        bound = 1.0 / (C0 * float(q) ** N0)
        if dist < rational_tol and dist < bound:
            g = math.gcd(p, q)
            return DiophantineClass("rational", p // g, q // g, **kw)
        if dist < bound:
            violated = True
    return DiophantineClass("undecided" if violated else "numerically_diophantine", **kw)


# --- limit sets of time averages -------------------------------------------


@dataclass(frozen=True)
class QInterval:
    lo: float
    hi: float
    singular: bool = False

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def __iter__(self):
        return iter((self.lo, self.hi))

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= value <= self.hi + tol


def equatorial_average(profile: SurfaceProfile, obs: ObservableSpec, n_theta: int = 256) -> float:
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    return float(np.mean(obs(np.full(n_theta, profile.s0), theta)))


def _refined_extremes(averages: Callable[[np.ndarray], np.ndarray], cfg: ClassicalConfig) -> tuple[float, float]:
    n = cfg.theta_grid
    lo = hi = None
    for _ in range(cfg.max_refinements + 1):
        theta0 = 2.0 * math.pi * np.arange(n) / n
        vals = averages(theta0)
        new_lo, new_hi = float(vals.min()), float(vals.max())
        if lo is not None and max(abs(new_lo - lo), abs(new_hi - hi)) < cfg.refine_tol:
            return new_lo, new_hi
        lo, hi = new_lo, new_hi
        n *= cfg.refine_factor
    raise UndecidedRationality(
        f"closed-orbit averages did not stabilize to {cfg.refine_tol:g} "
        f"after {cfg.max_refinements} refinements"
    )


def closed_orbit_sampler(profile: SurfaceProfile, a: float, q: int, cfg: ClassicalConfig = DEFAULT_CONFIG):
    """Sample (s(t), theta(t) - theta(0)) uniformly over q libration periods.

    On a torus with rotation number p/q every orbit closes after q librations,
    and orbits differ only by the starting angle, so one integration serves
    all of them.
    """
    period = q * libration_period(profile, a, cfg.quad_tol)
    traj = flow_integrate(profile, FlowState.on_torus(profile, a), period, cfg.ode_tol)
    n_t = cfg.orbit_samples * q
    t = period * np.arange(n_t) / n_t
    y = traj(t)
    return y[0], y[1]


def q_infinity(
    profile: SurfaceProfile,
    obs: ObservableSpec,
    a: float,
    cfg: ClassicalConfig = DEFAULT_CONFIG,
) -> QInterval:
    """Interval of accumulation values of long-time averages of q on Lambda_a."""
    if abs(a) >= profile.f_max - cfg.degenerate_tol:
        value = equatorial_average(profile, obs)
        return QInterval(value, value, singular=True)
    if not obs.depends_on_theta:
        value = torus_average(profile, obs, a, cfg.quad_tol)
        return QInterval(value, value)
    if a == 0.0:
        # every meridian closes through both poles, visiting theta0 and theta0 + pi
        nodes, weights = np.polynomial.legendre.leggauss(200)
        s = 0.5 * profile.L * (nodes + 1.0)
        w = 0.5 * weights / 2.0

        def meridian(theta0):
            th = theta0[:, None]
            return (obs(s[None, :], th) + obs(s[None, :], th + math.pi)) @ w

        lo, hi = _refined_extremes(meridian, cfg)
        return QInterval(lo, hi)
    omega = rotation_number(profile, a, cfg.quad_tol)
    dioph = diophantine_class(omega, cfg.C0, cfg.N0, cfg.Q_max, cfg.rational_tol)
    if dioph.kind != "rational":
        value = torus_average(profile, obs, a, cfg.quad_tol)
        return QInterval(value, value)
    s_t, dtheta_t = closed_orbit_sampler(profile, a, dioph.q, cfg)

    def orbit(theta0):
        return np.mean(obs(s_t[None, :], theta0[:, None] + dtheta_t[None, :]), axis=1)

    lo, hi = _refined_extremes(orbit, cfg)
    return QInterval(lo, hi)


# --- per-torus record -------------------------------------------------------


@dataclass(frozen=True)
class ClassicalInvariants:
    a: float
    omega: float
    iota: float
    J1: float
    q_avg: float
    q_inf: QInterval
    dioph: DiophantineClass
    turning: TurningPoints | None = field(default=None)


def classical_invariants(
    profile: SurfaceProfile,
    obs: ObservableSpec,
    a: float,
    cfg: ClassicalConfig = DEFAULT_CONFIG,
) -> ClassicalInvariants:
    if a == 0.0 or abs(a) >= profile.f_max:
        raise DegenerateTorus("classical_invariants needs 0 < |a| < f_max")
    omega = rotation_number(profile, a, cfg.quad_tol)
    return ClassicalInvariants(
        a=a,
        omega=omega,
        iota=action_iota(profile, a, cfg.quad_tol),
        J1=weight_J(profile, 1.0, a, cfg.quad_tol),
        q_avg=torus_average(profile, obs, a, cfg.quad_tol),
        q_inf=q_infinity(profile, obs, a, cfg),
        dioph=diophantine_class(omega, cfg.C0, cfg.N0, cfg.Q_max, cfg.rational_tol),
        turning=turning_points(profile, a),
    )


def classical_table(
    profile: SurfaceProfile,
    obs: ObservableSpec,
    a_values: Sequence[float],
    cfg: ClassicalConfig = DEFAULT_CONFIG,
) -> list[ClassicalInvariants]:
    return [classical_invariants(profile, obs, float(a), cfg) for a in a_values]


def default_a_grid(profile: SurfaceProfile, n: int = 64) -> np.ndarray:
    """Symmetric grid on (-f_max, f_max) avoiding 0 and the equator."""
    half = (np.arange(n // 2) + 0.5) / (n // 2) * profile.f_max
    return np.concatenate([-half[::-1], half])
