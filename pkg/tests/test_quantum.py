import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from weylband._tridiag import csym_tridiag_eigvals
from weylband.errors import ConvergenceFailure, NonSeparableObservable
from weylband.profile import ObservableSpec
from weylband.quantum import (
    EigensolveConfig,
    assemble_spectrum,
    count_eigenfrequencies,
    count_in_rectangle,
    count_strip,
    damped_wave_modes,
    discretize_mode,
    eigen_residuals,
    eigenvalues_mode,
    imag_correspondence,
    worker_count,
)
from weylband.weylvol import BandSpec


def sphere_mode_errors(sphere, h, n, m, lmax_energy=1.5):
    vals = eigenvalues_mode(discretize_mode(sphere, None, h, 0.0, m, n)).real
    ell = m + np.arange(len(vals))
    exact = h * h * ell * (ell + 1)
    keep = vals <= lmax_energy
    return vals[keep], exact[keep]


def test_constant_mode(sphere):
    vals = eigenvalues_mode(discretize_mode(sphere, None, 0.1, 0.0, 0, 1024))
    assert abs(vals[0]) < 1e-10


def test_sphere_m5_l10(sphere):
    vals = eigenvalues_mode(discretize_mode(sphere, None, 0.1, 0.0, 5, 1024)).real
    nearest = vals[np.argmin(np.abs(vals - 1.10))]
    assert nearest == pytest.approx(1.10, rel=1e-3)


def test_second_order_convergence(sphere):
    errs = []
    for n in (512, 1024):
        v, e = sphere_mode_errors(sphere, 0.1, n, 3)
        errs.append(np.max(np.abs(v - e) / e))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_preconditions(sphere):
    with pytest.raises(ValueError):
        discretize_mode(sphere, None, 0.1, 0.0, 0, 64)
    with pytest.raises(NonSeparableObservable):
        discretize_mode(sphere, ObservableSpec("theta_coupled", {"eta": 0.1}), 0.1, 0.1, 0, 256)


def test_fluxes_vanish_at_poles(sphere):
    op = discretize_mode(sphere, None, 0.1, 0.0, 0, 256)
    # row sums of the m = 0 operator vanish: constants are in the kernel
    assert np.allclose(op.matvec(np.ones(op.n)), 0.0, atol=1e-10)
    assert np.all(op.weight > 0)
    d, off = op.symmetrized()
    dense = op.dense()
    w = np.sqrt(op.weight)
    assert np.allclose((w[:, None] * dense / w[None, :]), np.diag(d) + np.diag(off, 1) + np.diag(off, -1))


@given(n=st.integers(2, 60), seed=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_ql_matches_lapack(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(n) * 10 + 1j * rng.standard_normal(n)
    e = rng.standard_normal(n - 1) + 0j
    vals, status = csym_tridiag_eigvals(d, e, np.finfo(float).eps, 60)
    assert status == 0
    ref = sla.eigvals(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))
    # match each computed value to its nearest reference value
    dist = np.abs(vals[:, None] - ref[None, :]).min(axis=1)
    assert np.max(dist) <= 1e-8 * max(1.0, np.abs(ref).max())


def test_backward_error_small(sphere, cos2s):
    op = discretize_mode(sphere, cos2s, 0.05, 0.2, 4, 512)
    vals = eigenvalues_mode(op)
    d, off = op.symmetrized()
    res = eigen_residuals(d, off, vals[::64])
    assert np.all(res <= EigensolveConfig().backward_error_bound(op.n))


def test_iteration_cap(sphere, cos2s):
    op = discretize_mode(sphere, cos2s, 0.05, 0.2, 4, 256)
    with pytest.raises(ConvergenceFailure):
        eigenvalues_mode(op, EigensolveConfig(max_iterations=0, method="ql"))
    # the automatic path falls back to the dense solver instead
    vals = eigenvalues_mode(op, EigensolveConfig(max_iterations=0))
    assert len(vals) == 256


def test_lapack_path_agrees(sphere, cos2s):
    op = discretize_mode(sphere, cos2s, 0.05, 0.2, 2, 256)
    a = eigenvalues_mode(op)
    b = eigenvalues_mode(op, EigensolveConfig(method="lapack"))
    assert np.allclose(a, b, rtol=0, atol=1e-9 * np.abs(b).max())


def test_unperturbed_reality_and_mirror(sphere):
    spec = assemble_spectrum(sphere, None, 0.05, 0.0, (0.9, 1.1), n=512)
    assert np.max(np.abs(spec.z.imag)) <= 1e-10 * (1 + np.abs(spec.z).max())
    for m in range(1, 5):
        assert np.array_equal(spec.z[spec.m == m], spec.z[spec.m == -m])


def test_strip_count_sphere(sphere):
    spec = assemble_spectrum(sphere, None, 0.02, 0.0, (0.9, 1.1), n=1024)
    assert count_strip(spec.z, 0.9, 1.1) == sum(2 * l + 1 for l in range(47, 52))


def test_window_below_spectrum_is_empty(sphere):
    spec = assemble_spectrum(sphere, None, 0.1, 0.0, (-1.0, -0.5), n=256)
    assert len(spec) == 0


def test_imaginary_parts_first_order(sphere, cos2s):
    h = 0.05
    eps = 0.02
    spec = assemble_spectrum(sphere, cos2s, h, eps, (0.5, 1.5), n=512)
    im = spec.z.imag
    assert np.all(im >= -eps * h) and np.all(im <= eps * (1.0 + h))


def test_real_parts_stable_under_eps(perturbed, cos2s):
    for h in (0.05, 0.025):
        eps = h
        for m in (0, 7):
            a = eigenvalues_mode(discretize_mode(perturbed, cos2s, h, eps, m, 1024))
            b = eigenvalues_mode(discretize_mode(perturbed, cos2s, h, 0.0, m, 1024))
            sel = (b.real > 0.5) & (b.real < 1.5)
            assert np.max(np.abs(a.real[sel] - b.real[sel])) <= eps**2 + eps * h


def test_covering_band_equals_strip(sphere, cos2s):
    h = 0.04
    eps = math.sqrt(h)
    spec = assemble_spectrum(sphere, cos2s, h, eps, (0.9, 1.1), n=512)
    band = BandSpec(0.9, 1.1, -1.0, 2.0, eps, h)
    assert count_in_rectangle(spec, band) == count_strip(spec.z, 0.9, 1.1)


def test_eps_scaling(perturbed, cos2s):
    h = 0.03
    counts = []
    for eps in (0.05, 0.1):
        spec = assemble_spectrum(perturbed, cos2s, h, eps, (0.9, 1.1), n=512)
        counts.append(count_in_rectangle(spec, BandSpec(0.9, 1.1, 0.2, 0.4, eps, h)))
    assert abs(counts[0] - counts[1]) <= 0.1 * max(counts)


def test_imag_correspondence_requires_eps(sphere, cos2s):
    spec = assemble_spectrum(sphere, None, 0.1, 0.0, (0.9, 1.1), n=256)
    with pytest.raises(ValueError):
        imag_correspondence(spec, sphere, cos2s)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("WEYLBAND_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("WEYLBAND_THREADS", "zero")
    assert worker_count() >= 1


# --- damped wave ------------------------------------------------------------


def mode_eigs(profile, m, n):
    return np.sort(eigenvalues_mode(discretize_mode(profile, None, 1.0, 0.0, m, n)).real)


def test_undamped_frequencies_real(sphere):
    taus = damped_wave_modes(sphere, ObservableSpec("constant", {"value": 0.0}), 2, 256, (1.0, 15.0))
    lam = mode_eigs(sphere, 2, 256)
    expect = np.sqrt(lam[(np.sqrt(lam) >= 1) & (np.sqrt(lam) <= 15)])
    assert np.allclose(taus.imag, 0.0, atol=1e-8)
    assert np.allclose(np.sort(taus.real), expect, atol=1e-8)
    assert count_eigenfrequencies(taus, (1.0, 15.0, 0.1, 0.5)) == 0


@pytest.mark.parametrize("n", [256, 800])
def test_constant_damping_closed_form(sphere, n):
    a0 = 0.3
    taus = damped_wave_modes(sphere, ObservableSpec("constant", {"value": a0}), 3, n, (20.0, 30.0))
    lam = mode_eigs(sphere, 3, n)
    expect = np.sqrt(lam - a0**2) + 1j * a0
    expect = expect[(expect.real >= 20) & (expect.real <= 30)]
    assert len(taus) == len(expect)
    assert np.max(np.abs(np.sort_complex(taus) - np.sort_complex(expect))) <= 1e-8


def test_reflection_symmetry(sphere, cos2s):
    pos = damped_wave_modes(sphere, cos2s, 4, 256, (5.0, 12.0))
    neg = damped_wave_modes(sphere, cos2s, 4, 256, (-12.0, -5.0))
    assert np.allclose(np.sort_complex(-np.conj(pos)), np.sort_complex(neg), atol=1e-9)


def test_damping_confinement(sphere, cos2s):
    taus = damped_wave_modes(sphere, cos2s, 1, 800, (10.0, 30.0))
    assert np.all(taus.imag >= -1e-9) and np.all(taus.imag <= 1.0 + 1e-9)


def test_damping_must_be_nonnegative(sphere):
    with pytest.raises(ValueError):
        damped_wave_modes(sphere, ObservableSpec("cos_s"), 0, 256, (1.0, 5.0))
