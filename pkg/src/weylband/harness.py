"""End-to-end experiments: quantum, Bohr-Sommerfeld and volume counts side by side."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .classical import ClassicalConfig, ClassicalInvariants
from .errors import DomainError, IOFailure, ParamOutOfRange
from .profile import ObservableSpec, SurfaceProfile, make_profile, validate_profile
from .quantum import (
    DampedWaveSpectrum,
    EigensolveConfig,
    Spectrum,
    assemble_spectrum,
    boundary_proximate,
    count_eigenfrequencies,
    count_in_rectangle,
    count_strip,
    damped_wave_prediction,
    damped_wave_spectrum,
    imag_correspondence,
)
from .weylvol import (
    AdmissibleSet,
    BandSpec,
    BSLattice,
    admissible_set,
    band_volume,
    bohr_sommerfeld_spectrum,
    count_lattice,
    weyl_prediction,
)

log = logging.getLogger(__name__)


@dataclass
class ScenarioConfig:
    surface: str = "sphere"
    surface_params: dict = field(default_factory=dict)
    observable: str = "cos2s"
    observable_params: dict = field(default_factory=dict)
    E2: float = 0.9
    E4: float = 1.1
    F3: float = 0.2
    F1: float = 0.4
    eps_exponent: float | None = 0.5
    eps: float | None = None  # fixed eps, used when eps_exponent is None
    h_list: tuple = (0.02,)
    grid_n: int = 2048
    quad_tol: float = 1e-12
    ode_tol: float = 1e-11
    backward_error_multiple: float = 100.0
    max_iterations: int = 60
    deflation_tol: float = float(np.finfo(float).eps)
    lattice_margin: float = 0.05
    a_margin: float = 0.02
    seed: int = 0
    mc_samples: int = 0
    output_dir: str = "weylband-out"
    damping: str = "cos2s"
    damping_params: dict = field(default_factory=dict)
    dw_box: tuple = (45.0, 55.0, 0.2, 0.4)
    dw_grid_n: int = 1024

    def __post_init__(self):
        self.h_list = tuple(float(h) for h in self.h_list)
        self.dw_box = tuple(float(x) for x in self.dw_box)

    def validate(self) -> None:
        if not self.h_list:
            raise ParamOutOfRange("h_list is empty")
        if any(h <= 0.0 for h in self.h_list):
            raise ParamOutOfRange("all h must be positive")
        if any(b >= a for a, b in zip(self.h_list, self.h_list[1:])):
            raise ParamOutOfRange(f"h_list must be strictly decreasing, got {list(self.h_list)}")
        for name in ("quad_tol", "ode_tol", "backward_error_multiple", "deflation_tol"):
            if not getattr(self, name) > 0.0:
                raise ParamOutOfRange(f"{name} must be positive")
        if self.grid_n < 128 or self.dw_grid_n < 128:
            raise ParamOutOfRange("grid sizes must be at least 128")
        if not self.E2 < self.E4:
            raise ParamOutOfRange(f"need E2 < E4, got {self.E2}, {self.E4}")
        if not self.F3 < self.F1:
            raise ParamOutOfRange(f"need F3 < F1, got {self.F3}, {self.F1}")
        if self.eps_exponent is None and (self.eps is None or self.eps < 0.0):
            raise ParamOutOfRange("give either eps_exponent or a nonnegative eps")
        if self.E2 - self.lattice_margin <= 0.0:
            raise ParamOutOfRange("lattice window must stay above E = 0")
        lo, hi, flo, fhi = self.dw_box
        if not (0.0 <= lo < hi and flo < fhi):
            raise ParamOutOfRange(f"bad damped-wave box {self.dw_box}")

    def eps_for(self, h: float) -> float:
        if self.eps_exponent is not None:
            return h**self.eps_exponent
        return float(self.eps)

    def band(self, h: float) -> BandSpec:
        return BandSpec(self.E2, self.E4, self.F3, self.F1, self.eps_for(h), h, self.eps_exponent)

    def profile(self) -> SurfaceProfile:
        return make_profile(self.surface, self.surface_params)

    def observable_spec(self) -> ObservableSpec:
        return ObservableSpec(self.observable, dict(self.observable_params))

    def damping_spec(self) -> ObservableSpec:
        return ObservableSpec(self.damping, dict(self.damping_params))

    def eig_config(self) -> EigensolveConfig:
        return EigensolveConfig(
            backward_error_multiple=self.backward_error_multiple,
            max_iterations=self.max_iterations,
            deflation_tol=self.deflation_tol,
        )

    def classical_config(self) -> ClassicalConfig:
        return ClassicalConfig(quad_tol=self.quad_tol, ode_tol=self.ode_tol)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


@dataclass
class WeylRow:
    h: float
    eps: float
    n_quantum: int | None
    n_lattice: int | None
    n_pred: float
    n_strip_quantum: int | None
    n_strip_pred: float
    rel_err_quantum_vs_pred: float | None
    rel_err_lattice_vs_pred: float | None
    rel_err_strip: float | None
    boundary_proximate_count: int | None
    excluded_equatorial_count: int | None
    imag_median: float | None
    imag_p90: float | None
    runtimes: dict = field(default_factory=dict)

    def as_json(self) -> dict:
        d = asdict(self)
        d.pop("runtimes")
        return d


def rel_err(a, b) -> float | None:
    if a is None:
        return None
    return abs(a - b) / max(b, 1.0)


@dataclass
class WeylReport:
    config: ScenarioConfig
    rows: list[WeylRow] = field(default_factory=list)
    admissible: AdmissibleSet | None = None
    volume: float | None = None
    strip_volume: float | None = None
    error: str | None = None
    montecarlo: dict | None = None
    # heavy artifacts of the finest h, kept for emit_outputs
    spectrum: Spectrum | None = None
    lattice: BSLattice | None = None

    def as_json(self) -> dict:
        out = {
            "config": self.config.to_dict(),
            "volume": self.volume,
            "strip_volume": self.strip_volume,
            "rows": [r.as_json() for r in self.rows],
        }
        if self.admissible is not None:
            out["admissible_set"] = admissible_json(self.admissible)
        if self.montecarlo is not None:
            out["montecarlo"] = self.montecarlo
        if self.error is not None:
            out["error"] = self.error
        return out


def admissible_json(A: AdmissibleSet) -> dict:
    return {
        "intervals": [list(iv) for iv in A.intervals],
        "measure": A.measure,
        "crossings": [asdict(c) for c in A.crossings],
        "containment_checked": A.containment_checked,
    }


def _row(cfg: ScenarioConfig, profile, obs, A, h: float) -> tuple[WeylRow, Spectrum | None, BSLattice | None]:
    band = cfg.band(h)
    times: dict[str, float] = {}
    t = time.perf_counter()
    pred = weyl_prediction(profile, A, cfg.E2, cfg.E4, h)
    times["prediction"] = time.perf_counter() - t

    spectrum = lattice = None
    n_q = n_l = n_sq = bnd = excl = None
    med = p90 = None
    if not obs.depends_on_theta:
        t = time.perf_counter()
        spectrum = assemble_spectrum(profile, obs, h, band.eps, (cfg.E2, cfg.E4), cfg.grid_n, cfg.eig_config())
        n_q = count_in_rectangle(spectrum, band)
        bnd = boundary_proximate(spectrum, band)
        times["quantum"] = time.perf_counter() - t
        if band.eps > 0.0:
            ic = imag_correspondence(spectrum, profile, obs)
            med, p90 = ic.median, ic.p90

        t = time.perf_counter()
        if band.eps > 0.0:
            real_spec = assemble_spectrum(profile, None, h, 0.0, (cfg.E2, cfg.E4), cfg.grid_n, cfg.eig_config())
        else:
            real_spec = spectrum
        n_sq = count_strip(real_spec.z, cfg.E2, cfg.E4)
        times["strip"] = time.perf_counter() - t

        t = time.perf_counter()
        window = (cfg.E2 - cfg.lattice_margin, cfg.E4 + cfg.lattice_margin)
        lattice = bohr_sommerfeld_spectrum(profile, obs, h, band.eps, window, cfg.a_margin)
        n_l = count_lattice(lattice, band)
        excl = lattice.excluded
        times["lattice"] = time.perf_counter() - t
    else:
        log.info("observable depends on theta; only the volume prediction is computed")

    row = WeylRow(
        h=h,
        eps=band.eps,
        n_quantum=n_q,
        n_lattice=n_l,
        n_pred=pred.n_pred,
        n_strip_quantum=n_sq,
        n_strip_pred=pred.n_strip_pred,
        rel_err_quantum_vs_pred=rel_err(n_q, pred.n_pred),
        rel_err_lattice_vs_pred=rel_err(n_l, pred.n_pred),
        rel_err_strip=rel_err(n_sq, pred.n_strip_pred),
        boundary_proximate_count=bnd,
        excluded_equatorial_count=excl,
        imag_median=med,
        imag_p90=p90,
        runtimes=times,
    )
    return row, spectrum, lattice


def run_scenario(cfg: ScenarioConfig) -> WeylReport:
    """Counts for every h in ``cfg.h_list``.

    Domain errors propagate with the partial report attached as
    ``exc.partial_report``.
    """
    cfg.validate()
    report = WeylReport(cfg)
    profile = cfg.profile()
    check = validate_profile(profile)
    if not check.ok:
        raise ParamOutOfRange(f"profile fails checks: {', '.join(check.failures())}")
    obs = cfg.observable_spec()
    try:
        report.admissible = admissible_set(profile, obs, cfg.F3, cfg.F1, cfg=cfg.classical_config())
        report.volume = band_volume(profile, report.admissible, cfg.E2, cfg.E4)
        for h in cfg.h_list:
            log.info("h = %g", h)
            row, spectrum, lattice = _row(cfg, profile, obs, report.admissible, h)
            report.rows.append(row)
            report.spectrum, report.lattice = spectrum, lattice
            report.strip_volume = (2.0 * math.pi * h) ** 2 * row.n_strip_pred
    except DomainError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        exc.partial_report = report
        raise
    return report


@dataclass
class SweepSummary:
    h: list[float]
    slope_quantum: float
    slope_strip: float
    slope_lattice: float
    monotone_quantum: bool

    def as_json(self) -> dict:
        return asdict(self)


def loglog_slope(h, err) -> float:
    """Least-squares slope of log err against log h over the positive entries."""
    pairs = [(math.log(x), math.log(y)) for x, y in zip(h, err) if y is not None and y > 0.0]
    if len(pairs) < 2:
        return math.nan
    x, y = np.array(pairs).T
    return float(np.polyfit(x, y, 1)[0])


def summarize_sweep(report: WeylReport, jitter: int = 2) -> SweepSummary:
    rows = report.rows
    h = [r.h for r in rows]
    rq = [r.rel_err_quantum_vs_pred for r in rows]
    monotone = True
    for prev, cur in zip(rows, rows[1:]):
        if prev.rel_err_quantum_vs_pred is None or cur.rel_err_quantum_vs_pred is None:
            continue
        slack = jitter / max(cur.n_pred, 1.0)
        if cur.rel_err_quantum_vs_pred > prev.rel_err_quantum_vs_pred + slack:
            monotone = False
    return SweepSummary(
        h=h,
        slope_quantum=loglog_slope(h, rq),
        slope_strip=loglog_slope(h, [r.rel_err_strip for r in rows]),
        slope_lattice=loglog_slope(h, [r.rel_err_lattice_vs_pred for r in rows]),
        monotone_quantum=monotone,
    )


def sweep_h(cfg: ScenarioConfig) -> tuple[WeylReport, SweepSummary]:
    if len(cfg.h_list) < 3:
        raise ParamOutOfRange("sweep needs at least three values of h")
    report = run_scenario(cfg)
    return report, summarize_sweep(report)


@dataclass
class DampedWaveResult:
    box: tuple
    count: int
    mirror_count: int
    prediction: float
    im_range: tuple[float, float]
    spectrum: DampedWaveSpectrum

    def as_json(self) -> dict:
        return {
            "box": list(self.box),
            "count": self.count,
            "mirror_count": self.mirror_count,
            "prediction": self.prediction,
            "rel_err": rel_err(self.count, self.prediction),
            "im_min": self.im_range[0],
            "im_max": self.im_range[1],
        }


def run_dampedwave(cfg: ScenarioConfig) -> DampedWaveResult:
    """Box count of damped-wave eigenfrequencies against the volume prediction.

    The mirror count is taken from -conj(tau): the spectrum of a real-coefficient
    problem is symmetric about the imaginary axis, and the solver is only run
    on the positive half.
    """
    cfg.validate()
    profile = cfg.profile()
    damping = cfg.damping_spec()
    lo, hi, flo, fhi = cfg.dw_box
    guard = max(1.0, 0.05 * (hi - lo))
    spec = damped_wave_spectrum(profile, damping, (max(lo - guard, 0.0), hi + guard), cfg.dw_grid_n, cfg.eig_config())
    count = count_eigenfrequencies(spec.tau, cfg.dw_box)
    mirror = count_eigenfrequencies(-np.conj(spec.tau), (-hi, -lo, flo, fhi))
    pred = damped_wave_prediction(profile, damping, cfg.dw_box, cfg=cfg.classical_config())
    im = spec.tau.imag
    im_range = (float(im.min()), float(im.max())) if im.size else (math.nan, math.nan)
    return DampedWaveResult(cfg.dw_box, count, mirror, pred, im_range, spec)


def montecarlo_volume_check(
    profile: SurfaceProfile,
    A: AdmissibleSet,
    E2: float,
    E4: float,
    samples: int = 10**6,
    seed: int = 0,
    batch: int = 200_000,
) -> tuple[float, float]:
    """Rejection-sampling estimate of vol{E2 <= p <= E4, a in A} and its standard error.

    Samples (s, sigma, theta*) uniformly in [0, L] x [-sqrt(E4), sqrt(E4)] x
    [-f_max sqrt(E4), f_max sqrt(E4)]; the theta direction contributes 2 pi.
    """
    if samples < 10**5:
        raise ValueError("need at least 1e5 samples")
    rng = np.random.default_rng(seed)
    r = math.sqrt(E4)
    box = 2.0 * math.pi * profile.L * (2.0 * r) * (2.0 * r * profile.f_max)
    hits = 0
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        s = rng.uniform(0.0, profile.L, k)
        sigma = rng.uniform(-r, r, k)
        tstar = rng.uniform(-r * profile.f_max, r * profile.f_max, k)
        f = profile.f(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = sigma**2 + tstar**2 / f**2
            a = tstar / np.sqrt(p)
        ok = (f > 0.0) & (p >= E2) & (p <= E4)
        ok[ok] &= A.contains(a[ok])
        hits += int(np.count_nonzero(ok))
        done += k
    frac = hits / samples
    return box * frac, box * math.sqrt(frac * (1.0 - frac) / samples)


# --- output -----------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def spectrum_svg(
    band: BandSpec | None,
    z: np.ndarray,
    lattice_z: np.ndarray | None = None,
    width: int = 1000,
    height: int = 700,
) -> str:
    """Scatter of (Re z, Im z / eps) with the counting rectangle dashed.

    Quantum eigenvalues are filled blue dots, lattice points open red circles.
    """
    eps = band.eps if band is not None and band.eps > 0 else 1.0
    pts = np.asarray(z, dtype=complex)
    lat = np.asarray(lattice_z if lattice_z is not None else [], dtype=complex)
    xs = np.concatenate([pts.real, lat.real])
    ys = np.concatenate([pts.imag, lat.imag]) / eps
    if band is not None:
        xs = np.concatenate([xs, [band.E2, band.E4]])
        ys = np.concatenate([ys, [band.F3, band.F1]])
    if xs.size == 0:
        xs, ys = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    pad_x = 0.05 * (x1 - x0 or 1.0)
    pad_y = 0.05 * (y1 - y0 or 1.0)
    x0, x1, y0, y1 = x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y
    left, right, top, bottom = 80, 20, 20, 60

    def X(x):
        return left + (x - x0) / (x1 - x0) * (width - left - right)

    def Y(y):
        return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
    ]
    for t in np.linspace(x0, x1, 6):
        out.append(f'<text x="{X(t):.2f}" y="{height - bottom + 18}" font-size="12" text-anchor="middle">{t:.4g}</text>')
    for t in np.linspace(y0, y1, 6):
        out.append(f'<text x="{left - 6}" y="{Y(t) + 4:.2f}" font-size="12" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{(left + width - right) / 2}" y="{height - 15}" font-size="14" text-anchor="middle">Re z</text>')
    out.append(
        f'<text x="20" y="{(top + height - bottom) / 2}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 20 {(top + height - bottom) / 2})">Im z / eps</text>'
    )
    if band is not None:
        out.append(
            f'<rect x="{X(band.E2):.2f}" y="{Y(band.F1):.2f}" width="{X(band.E4) - X(band.E2):.2f}" '
            f'height="{Y(band.F3) - Y(band.F1):.2f}" fill="none" stroke="black" stroke-dasharray="6,4"/>'
        )
    for w in pts:
        out.append(f'<circle cx="{X(w.real):.2f}" cy="{Y(w.imag / eps):.2f}" r="2" fill="#1f4e9c"/>')
    for w in lat:
        out.append(f'<circle cx="{X(w.real):.2f}" cy="{Y(w.imag / eps):.2f}" r="3.5" fill="none" stroke="#c0392b"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_outputs(
    report: WeylReport | None,
    output_dir: str | Path,
    summary: SweepSummary | None = None,
    classical: list[ClassicalInvariants] | None = None,
    dampedwave: DampedWaveResult | None = None,
    config_echo: str | None = None,
) -> list[Path]:
    """Write CSV tables, report.json, prediction.json and spectrum.svg.

    Wall-clock runtimes go to timings.json so that the other files are
    reproducible byte for byte.
    """
    out = Path(output_dir)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if config_echo is not None:
            (out / "effective_config.toml").write_text(config_echo)
            written.append(out / "effective_config.toml")
        if classical is not None:
            p = out / "classical.csv"
            _write_csv(
                p,
                ["a", "omega", "iota", "J1", "q_avg", "qinf_lo", "qinf_hi", "singular", "dioph_kind", "p", "q"],
                [
                    (c.a, c.omega, c.iota, c.J1, c.q_avg, c.q_inf.lo, c.q_inf.hi, int(c.q_inf.singular), c.dioph.kind, c.dioph.p, c.dioph.q)
                    for c in classical
                ],
            )
            written.append(p)
        if dampedwave is not None:
            p = out / "dampedwave.csv"
            s = dampedwave.spectrum
            _write_csv(p, ["m", "idx", "re_tau", "im_tau"], zip(s.m, s.idx, s.tau.real, s.tau.imag))
            written.append(p)
            _write_json(out / "dampedwave.json", dampedwave.as_json())
            written.append(out / "dampedwave.json")
        if report is not None:
            cfg = report.config
            body = report.as_json()
            if summary is not None:
                body["sweep"] = summary.as_json()
            _write_json(out / "report.json", body)
            written.append(out / "report.json")
            _write_json(out / "timings.json", [{"h": r.h, **r.runtimes} for r in report.rows])
            written.append(out / "timings.json")
            if report.rows:
                last = report.rows[-1]
                pred = {
                    "volume": report.volume,
                    "n_pred": last.n_pred,
                    "strip_volume": report.strip_volume,
                    "n_strip_pred": last.n_strip_pred,
                    "h": last.h,
                    "eps": last.eps,
                }
                if report.admissible is not None:
                    pred["admissible_set"] = admissible_json(report.admissible)
                _write_json(out / "prediction.json", pred)
                written.append(out / "prediction.json")
            band = cfg.band(report.rows[-1].h) if report.rows else None
            spec = report.spectrum
            if spec is not None:
                p = out / "spectrum.csv"
                eps = spec.eps if spec.eps > 0 else math.nan
                _write_csv(
                    p,
                    ["m", "idx", "re_z", "im_z", "im_over_eps", "grid_n"],
                    ((m, i, z.real, z.imag, z.imag / eps, spec.grid_n) for m, i, z in zip(spec.m, spec.idx, spec.z)),
                )
                written.append(p)
            lat = report.lattice
            if lat is not None:
                p = out / "lattice.csv"
                eps = lat.eps if lat.eps > 0 else math.nan
                _write_csv(p, ["k", "m", "re_z", "im_z_over_eps", "a"], zip(lat.k, lat.m, lat.z.real, lat.z.imag / eps, lat.a))
                written.append(p)
            svg = spectrum_svg(
                band,
                spec.z if spec is not None else np.array([], complex),
                lat.z if lat is not None else None,
            )
            (out / "spectrum.svg").write_text(svg)
            written.append(out / "spectrum.svg")
    except OSError as exc:
        raise IOFailure(f"cannot write outputs to {out}: {exc}") from exc
    return written
