"""Mode-by-mode discretization of P_eps = -h^2 Laplacian + i eps q(s).

On the mode e^{i m theta} the operator reduces to

    -h^2 [(1/f)(f v')' - m^2 v / f^2] + i eps q(s) v,   s in (0, L).

It is discretized in weighted divergence form on the cell-centred grid
s_i = (i + 1/2) ds.  Fluxes through the poles vanish because f(0) = f(L) = 0,
so no boundary condition is imposed.  The matrix is similar, through
diag(sqrt(f_i ds)), to a complex symmetric tridiagonal matrix whose real
part is symmetric; that form is what the eigensolvers see.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._tridiag import csym_tridiag_eigvals
from .classical import torus_average
from .errors import ConvergenceFailure, NonSeparableObservable
from .profile import ObservableSpec, SurfaceProfile
from .weylvol import BandSpec, admissible_set, band_volume, in_rectangle, near_boundary

log = logging.getLogger(__name__)

UNIT_ROUNDOFF = np.finfo(float).eps / 2


def worker_count() -> int:
    """Worker cap from WEYLBAND_THREADS (defaults to the CPU count)."""
    env = os.environ.get("WEYLBAND_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer WEYLBAND_THREADS=%r", env)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class EigensolveConfig:
    backward_error_multiple: float = 100.0
    max_iterations: int = 60
    deflation_tol: float = np.finfo(float).eps
    method: str = "auto"  # "auto", "ql" or "lapack"
    residual_samples: int = 8
    dense_max_n: int = 1200

    def backward_error_bound(self, n: int) -> float:
        return self.backward_error_multiple * UNIT_ROUNDOFF * n


@dataclass
class ModeOperator:
    m: int
    n: int
    ds: float
    h: float
    eps: float
    s: np.ndarray
    diag: np.ndarray  # complex
    lower: np.ndarray  # A[i+1, i]
    upper: np.ndarray  # A[i, i+1]
    weight: np.ndarray  # f_i ds

    def symmetrized(self) -> tuple[np.ndarray, np.ndarray]:
        """(diag, off) of W^{1/2} A W^{-1/2}, W = diag(weight)."""
        return self.diag, -np.sqrt(self.lower * self.upper)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.upper * v[1:]
        out[1:] += self.lower * v[:-1]
        return out

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)


def discretize_mode(
    profile: SurfaceProfile,
    obs: ObservableSpec | None,
    h: float,
    eps: float,
    m: int,
    n: int,
) -> ModeOperator:
    if n < 128:
        raise ValueError("grid size n must be at least 128")
    if obs is not None and obs.depends_on_theta:
        raise NonSeparableObservable(f"observable {obs.kind!r} depends on theta; modes do not separate")
    ds = profile.L / n
    s = (np.arange(n) + 0.5) * ds
    f = profile.f(s)
    f_half = profile.f(np.arange(1, n) * ds)  # f at interior cell faces
    flux = np.concatenate([[0.0], f_half, [0.0]])
    c = h * h / (f * ds * ds)
    diag = c * (flux[:-1] + flux[1:]) + (h * m) ** 2 / f**2
    diag = diag.astype(complex)
    if obs is not None and eps != 0.0:
        diag = diag + 1j * eps * obs.s_part(s)
    upper = -c[:-1] * f_half
    lower = -c[1:] * f_half
    return ModeOperator(m, n, ds, h, eps, s, diag, lower, upper, f * ds)


def _banded_solve(diag, off, z, rhs):
    ab = np.zeros((3, len(diag)), dtype=complex)
    ab[0, 1:] = off
    ab[1] = diag - z
    ab[2, :-1] = off
    return sla.solve_banded((1, 1), ab, rhs)


def eigen_residuals(diag: np.ndarray, off: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Relative residuals ||(A - zI) v|| / (||A||_1 ||v||) with v from inverse iteration."""
    n = len(diag)
    norm = np.max(np.abs(diag) + np.concatenate([np.abs(off), [0]]) + np.concatenate([[0], np.abs(off)]))
    rng = np.random.default_rng(0)
    out = []
    for zi in np.atleast_1d(z):
        v = rng.standard_normal(n) + 0j
        shift = zi + 4 * UNIT_ROUNDOFF * norm
        for _ in range(3):
            v = _banded_solve(diag, off, shift, v)
            v /= np.linalg.norm(v)
        r = (diag - zi) * v
        r[:-1] += off * v[1:]
        r[1:] += off * v[:-1]
        out.append(np.linalg.norm(r) / norm)
    return np.array(out)


def eigenvalues_mode(op: ModeOperator, cfg: EigensolveConfig = EigensolveConfig()) -> np.ndarray:
    """All n eigenvalues, sorted by real part."""
    diag, off = op.symmetrized()
    method = cfg.method
    if method == "lapack":
        vals = sla.eigvals(op.dense())
    elif np.all(diag.imag == 0.0):
        vals = sla.eigvalsh_tridiagonal(diag.real, off).astype(complex)
    else:
        vals, status = csym_tridiag_eigvals(diag, off.astype(complex), cfg.deflation_tol, cfg.max_iterations)
        if status != 0:
            if method == "ql":
                raise ConvergenceFailure(f"QL iteration cap reached for mode m={op.m}")
            log.warning("QL did not converge for m=%d; falling back to dense eigensolver", op.m)
            vals = sla.eigvals(op.dense())
        elif cfg.residual_samples:
            idx = np.linspace(0, op.n - 1, cfg.residual_samples).astype(int)
            sample = np.sort_complex(vals)[idx]
            worst = eigen_residuals(diag, off, sample).max()
            if worst > cfg.backward_error_bound(op.n):
                if method == "ql":
                    raise ConvergenceFailure(f"backward error {worst:.2e} too large for m={op.m}")
                log.warning("QL residual %.2e for m=%d; falling back to dense eigensolver", worst, op.m)
                vals = sla.eigvals(op.dense())
    return vals[np.lexsort((vals.imag, vals.real))]


@dataclass
class Spectrum:
    m: np.ndarray
    idx: np.ndarray
    z: np.ndarray
    h: float
    eps: float
    grid_n: int
    skipped_modes: tuple[int, ...] = ()

    def __len__(self):
        return len(self.z)

    @property
    def entries(self):
        return [(int(m), int(i), complex(z), self.grid_n) for m, i, z in zip(self.m, self.idx, self.z)]


def mode_cap(profile: SurfaceProfile, E_hi: float, h: float, m_buffer: int = 2) -> int:
    return int(math.ceil(math.sqrt(max(E_hi, 0.0)) * profile.f_max / h)) + m_buffer


def assemble_spectrum(
    profile: SurfaceProfile,
    obs: ObservableSpec | None,
    h: float,
    eps: float,
    window: tuple[float, float],
    n: int = 2048,
    cfg: EigensolveConfig = EigensolveConfig(),
    m_buffer: int = 2,
    guard: float | None = None,
) -> Spectrum:
    """Eigenvalues with Re z in the window (plus a guard of 4h), all modes |m| <= M.

    The mode operators for m and -m coincide, so each m > 0 is solved once
    and recorded twice.
    """
    E_lo, E_hi = window
    guard = 4.0 * h if guard is None else guard
    M = mode_cap(profile, E_hi, h, m_buffer)
    f_cells = profile.f((np.arange(n) + 0.5) * profile.L / n)

    def solve(m):
        if np.all((h * m / f_cells) ** 2 > 1e8 * E_hi):
            return m, None
        vals = eigenvalues_mode(discretize_mode(profile, obs, h, eps, m, n), cfg)
        keep = (vals.real >= E_lo - guard) & (vals.real <= E_hi + guard)
        return m, (np.nonzero(keep)[0], vals[keep])

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(solve, range(M + 1)))

    ms, idxs, zs, skipped = [], [], [], []
    for m, res in results:
        if res is None:
            skipped.append(m)
            continue
        idx, vals = res
        for mm in ((-m, m) if m else (0,)):
            ms.append(np.full(len(vals), mm))
            idxs.append(idx)
            zs.append(vals)
    if not zs:
        return Spectrum(np.array([], int), np.array([], int), np.array([], complex), h, eps, n, tuple(skipped))
    m_arr = np.concatenate(ms)
    z_arr = np.concatenate(zs)
    idx_arr = np.concatenate(idxs)
    order = np.lexsort((z_arr.real, m_arr))
    return Spectrum(m_arr[order], idx_arr[order], z_arr[order], h, eps, n, tuple(skipped))


def count_in_rectangle(spectrum: Spectrum, band: BandSpec) -> int:
    return int(np.count_nonzero(in_rectangle(spectrum.z, band)))


def boundary_proximate(spectrum: Spectrum, band: BandSpec, tol: float = 1e-8) -> int:
    return near_boundary(spectrum.z, band, tol)


def count_strip(z: np.ndarray, E1: float, E2: float) -> int:
    """#{E1 <= Re z <= E2}."""
    re = np.asarray(z).real
    return int(np.count_nonzero((re >= E1) & (re <= E2)))


@dataclass
class ImagResiduals:
    median: float
    p90: float
    count: int
    residuals: np.ndarray


def imag_correspondence(
    spectrum: Spectrum,
    profile: SurfaceProfile,
    obs: ObservableSpec,
    a_fraction: float = 0.9,
    quad_tol: float = 1e-10,
) -> ImagResiduals:
    """|Im z / eps - <q>(Lambda_a)| with a = |hm| / sqrt(Re z), for |a| <= a_fraction f_max."""
    if spectrum.eps <= 0.0:
        raise ValueError("imag_correspondence needs eps > 0")
    re = spectrum.z.real
    ok = re > 0
    a = np.zeros_like(re)
    a[ok] = np.abs(spectrum.h * spectrum.m[ok]) / np.sqrt(re[ok])
    sel = ok & (a <= a_fraction * profile.f_max)
    cache: dict[float, float] = {}
    res = []
    for ai, zi in zip(a[sel], spectrum.z[sel]):
        key = float(ai)
        if key not in cache:
            cache[key] = torus_average(profile, obs, key, quad_tol)
        res.append(abs(zi.imag / spectrum.eps - cache[key]))
    res = np.array(res)
    if res.size == 0:
        return ImagResiduals(math.nan, math.nan, 0, res)
    return ImagResiduals(float(np.median(res)), float(np.percentile(res, 90)), int(res.size), res)


# --- damped wave equation ---------------------------------------------------


def _linearization(op: ModeOperator, damping_vals: np.ndarray):
    """Companion matrix K with K [v; tau v] = tau [v; tau v].

    tau^2 v = L v + 2 i tau a v, L the symmetrized mode Laplacian.
    """
    diag, off = op.symmetrized()
    n = op.n
    L = sp.diags([off, diag.real, off], [-1, 0, 1], format="csr")
    eye = sp.identity(n, format="csr")
    zero = sp.csr_matrix((n, n))
    D = sp.diags(2j * damping_vals, 0, format="csr")
    return sp.bmat([[zero, eye], [L, D]], format="csc"), diag.real, off


def damped_wave_modes(
    profile: SurfaceProfile,
    damping: ObservableSpec,
    m: int,
    n: int,
    freq_window: tuple[float, float],
    cfg: EigensolveConfig = EigensolveConfig(),
) -> np.ndarray:
    """Eigenfrequencies tau of (-Laplacian + 2 i a tau - tau^2) u = 0 on mode m.

    Returns those with Re tau in ``freq_window``, sorted by real part.
    Small problems are solved densely; larger ones by shift-invert Arnoldi
    centred in the window, enlarging the number of requested eigenvalues
    until the returned set provably covers the window.  For Re tau != 0 the
    Rayleigh quotient argument confines Im tau to [min a, max a].
    """
    if damping.depends_on_theta:
        raise NonSeparableObservable("damping must depend on s only")
    op = discretize_mode(profile, None, 1.0, 0.0, m, n)
    a_vals = damping.s_part(op.s)
    if np.any(a_vals < 0.0):
        raise ValueError("damping must be nonnegative")
    lo, hi = freq_window
    K, L_diag, L_off = _linearization(op, a_vals)
    if 2 * n <= cfg.dense_max_n:
        taus = sla.eigvals(K.toarray())
    else:
        a_min, a_max = float(a_vals.min()), float(a_vals.max())
        sigma = complex(0.5 * (lo + hi), 0.5 * (a_min + a_max))
        corners = [complex(x, y) for x in (lo, hi) for y in (a_min, a_max)]
        radius = max(abs(c - sigma) for c in corners) + 1e-6
        lam = sla.eigvalsh_tridiagonal(L_diag, L_off)
        # undamped frequencies near the window bound the count from above
        roots = np.sqrt(np.maximum(lam, 0.0))
        guess = int(np.count_nonzero(np.abs(roots - sigma.real) <= radius + a_max + 1.0))
        if guess == 0:
            return np.array([], dtype=complex)
        k = min(guess + 8, 2 * n - 2)
        while True:
            taus = spla.eigs(K, k=k, sigma=sigma, which="LM", return_eigenvectors=False, maxiter=max(1000, 10 * k))
            if np.max(np.abs(taus - sigma)) > radius or k >= 2 * n - 2:
                break
            k = min(2 * k, 2 * n - 2)
    sel = (taus.real >= lo) & (taus.real <= hi)
    taus = taus[sel]
    return taus[np.lexsort((taus.imag, taus.real))]


@dataclass
class DampedWaveSpectrum:
    m: np.ndarray
    idx: np.ndarray
    tau: np.ndarray
    grid_n: int


def damped_wave_spectrum(
    profile: SurfaceProfile,
    damping: ObservableSpec,
    freq_window: tuple[float, float],
    n: int = 1024,
    cfg: EigensolveConfig = EigensolveConfig(),
    m_buffer: int = 2,
) -> DampedWaveSpectrum:
    """Eigenfrequencies over all modes that can reach the window (|m| <= f_max max|Re tau|)."""
    reach = max(abs(freq_window[0]), abs(freq_window[1]))
    M = int(math.ceil(reach * profile.f_max)) + m_buffer

    def solve(m):
        return damped_wave_modes(profile, damping, m, n, freq_window, cfg)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        per_mode = list(pool.map(solve, range(M + 1)))
    ms, idxs, taus = [], [], []
    for m, t in enumerate(per_mode):
        for mm in ((-m, m) if m else (0,)):
            ms.append(np.full(len(t), mm))
            idxs.append(np.arange(len(t)))
            taus.append(t)
    m_arr, idx_arr, tau_arr = np.concatenate(ms), np.concatenate(idxs), np.concatenate(taus)
    order = np.lexsort((tau_arr.real, m_arr))
    return DampedWaveSpectrum(m_arr[order], idx_arr[order], tau_arr[order], n)


def count_eigenfrequencies(taus: np.ndarray, box: tuple[float, float, float, float]) -> int:
    """#{tau : re_lo < Re tau < re_hi, im_lo < Im tau < im_hi}."""
    re_lo, re_hi, im_lo, im_hi = box
    taus = np.asarray(taus)
    inside = (taus.real > re_lo) & (taus.real < re_hi) & (taus.imag > im_lo) & (taus.imag < im_hi)
    return int(np.count_nonzero(inside))


def damped_wave_prediction(
    profile: SurfaceProfile,
    damping: ObservableSpec,
    box: tuple[float, float, float, float],
    **admissible_kw,
) -> float:
    """(2 pi)^-2 vol{re_lo^2 <= |xi|^2 <= re_hi^2, limit averages of a in [im_lo, im_hi]}.

    Limit averages are homogeneous of degree 0 in xi, so the admissible torus
    set at unit energy applies at every energy.
    """
    re_lo, re_hi, im_lo, im_hi = box
    A = admissible_set(profile, damping, im_lo, im_hi, **admissible_kw)
    return band_volume(profile, A, re_lo**2, re_hi**2) / (2.0 * math.pi) ** 2
