import json
import math

import numpy as np
import pytest

from weylband.errors import IOFailure, ParamOutOfRange, TangentCrossing
from weylband.harness import (
    ScenarioConfig,
    WeylReport,
    emit_outputs,
    loglog_slope,
    montecarlo_volume_check,
    rel_err,
    run_scenario,
    spectrum_svg,
    summarize_sweep,
    sweep_h,
)
from weylband.weylvol import AdmissibleSet, BandSpec, admissible_set

SMALL = dict(h_list=(0.1, 0.08), grid_n=256)


def test_config_validation():
    with pytest.raises(ParamOutOfRange):
        ScenarioConfig(h_list=(0.02, 0.04)).validate()
    with pytest.raises(ParamOutOfRange):
        ScenarioConfig(quad_tol=0.0).validate()
    with pytest.raises(ParamOutOfRange):
        ScenarioConfig(grid_n=64).validate()
    with pytest.raises(ParamOutOfRange):
        ScenarioConfig(eps_exponent=None, eps=None).validate()
    ScenarioConfig().validate()


def test_run_scenario_rows():
    rep = run_scenario(ScenarioConfig(**SMALL))
    assert [r.h for r in rep.rows] == [0.1, 0.08]
    for r in rep.rows:
        assert r.eps == pytest.approx(math.sqrt(r.h))
        assert r.rel_err_quantum_vs_pred == pytest.approx(abs(r.n_quantum - r.n_pred) / max(r.n_pred, 1))
        assert r.rel_err_lattice_vs_pred == pytest.approx(abs(r.n_lattice - r.n_pred) / max(r.n_pred, 1))
        assert r.n_strip_pred == pytest.approx(0.2 * math.pi * 4 * math.pi / (2 * math.pi * r.h) ** 2)
    assert rep.spectrum is not None and rep.spectrum.h == 0.08


def test_empty_band_counts_zero():
    rep = run_scenario(ScenarioConfig(F3=0.6, F1=0.9, **SMALL))
    for r in rep.rows:
        assert r.n_quantum == 0 and r.n_lattice == 0 and r.n_pred == 0.0


def test_theta_observable_prediction_only():
    cfg = ScenarioConfig(
        surface="perturbed_sphere",
        surface_params={"c": 0.15},
        observable="theta_coupled",
        observable_params={"eta": 0.02, "q1": "cos_s"},
        F3=0.25,
        F1=0.35,
        **SMALL,
    )
    rep = run_scenario(cfg)
    assert rep.rows[0].n_quantum is None and rep.rows[0].n_pred > 0


def test_partial_report_on_error():
    with pytest.raises(TangentCrossing) as info:
        run_scenario(ScenarioConfig(F1=0.5, **SMALL))
    partial = info.value.partial_report
    assert partial.rows == [] and "TangentCrossing" in partial.error


def test_sweep_precondition():
    with pytest.raises(ParamOutOfRange):
        sweep_h(ScenarioConfig(**SMALL))


def test_loglog_slope():
    h = [0.08, 0.04, 0.02]
    assert loglog_slope(h, [0.8, 0.4, 0.2]) == pytest.approx(1.0)
    assert loglog_slope(h, [0.0, 0.0, 0.1]) != loglog_slope(h, [0.8, 0.4, 0.2])
    assert math.isnan(loglog_slope(h, [0.0, 0.0, 0.0]))
    assert rel_err(None, 3.0) is None and rel_err(0, 0.5) == 0.5


def test_montecarlo_agrees(sphere, cos2s):
    A = admissible_set(sphere, cos2s, 0.2, 0.4)
    est, err = montecarlo_volume_check(sphere, A, 0.9, 1.1, 200_000, seed=3)
    assert abs(est - 2.584913140353) <= 3 * err
    assert montecarlo_volume_check(sphere, AdmissibleSet.empty(), 0.9, 1.1, 100_000) == (0.0, 0.0)
    with pytest.raises(ValueError):
        montecarlo_volume_check(sphere, A, 0.9, 1.1, 10)


def test_emit_outputs_deterministic(tmp_path):
    cfg = ScenarioConfig(**SMALL)
    rep = run_scenario(cfg)
    emit_outputs(rep, tmp_path / "a")
    emit_outputs(run_scenario(cfg), tmp_path / "b")
    for name in ("report.json", "prediction.json", "spectrum.csv", "lattice.csv", "spectrum.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    body = json.loads((tmp_path / "a" / "report.json").read_text())
    assert set(body) >= {"config", "rows", "volume", "admissible_set"}
    # n_quantum equals the number of spectrum.csv rows inside the rectangle
    data = np.loadtxt(tmp_path / "a" / "spectrum.csv", delimiter=",", skiprows=1)
    band = cfg.band(0.08)
    inside = (data[:, 2] > band.E2) & (data[:, 2] < band.E4) & (data[:, 4] > band.F3) & (data[:, 4] < band.F1)
    assert int(inside.sum()) == rep.rows[-1].n_quantum


def test_svg(tmp_path):
    band = BandSpec(0.9, 1.1, 0.2, 0.4, 0.1, 0.02)
    svg = spectrum_svg(band, np.array([1.0 + 0.03j]), np.array([1.0 + 0.031j]))
    assert 'width="1000" height="700"' in svg and "stroke-dasharray" in svg
    assert svg.count("<circle") == 2
    empty = spectrum_svg(None, np.array([], complex))
    assert empty.startswith("<svg") and "<circle" not in empty


def test_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IOFailure):
        emit_outputs(WeylReport(ScenarioConfig()), blocker / "sub")


def test_summary_monotonicity():
    rep = run_scenario(ScenarioConfig(h_list=(0.1, 0.09, 0.08), grid_n=256))
    s = summarize_sweep(rep)
    assert s.h == [0.1, 0.09, 0.08]
    assert isinstance(s.monotone_quantum, bool)
