"""
Тесты конфигурации прогона, начальных данных, шагов RK4 и полного прогона
"""
import copy

import numpy as np
import pytest
from pytest import approx

from diagnostics import kasner_residual
from errors import ConfigError, ConstraintSolveError, GridError, StateError
from evolution import (CheckpointWriter, EnergyMonitor, RunConfig, choose_dt,
                       closed_form_deviation, cone_uniqueness, config_hash,
                       hierarchy_consistency, make_initial_data, rk4, run, step)
from fuchsian import build_hierarchy
from kasner import background_rescaled
from snapshots import read_state
from symmetrizer import build

BASE_CONFIG = {
    "kasner": {"q": [0.5, 0.3, 0.2]},
    "gauge": {"k_order": 1},
    "grid": {"dims": [16, 1, 1], "L": 1.0},
    "cone": {"enabled": False, "t0": 1.0},
    "data": {"amplitude": 1e-3, "modes": [1], "seed": 0},
    "evolution": {"t_final": 0.5, "c_cfl": 0.5, "c_log": 0.05, "output_every": 5,
                  "with_weyl": False},
}
LOCAL_CONE = {"enabled": True, "rho0": 0.6, "rho1": 0.05}


def _config(**sections):
    cfg = copy.deepcopy(BASE_CONFIG)
    for name, values in sections.items():
        cfg.setdefault(name, {}).update(values)
    return cfg


def _background(rc, t=None):
    return background_rescaled(rc.kd, rc.gp.eps1, rc.gp.eps2, rc.t0 if t is None else t,
                               rc.grid.shape)


class TestRunConfig:
    def test_from_config(self):
        rc = RunConfig.from_config(_config())
        assert rc.kd.n == 4
        assert rc.grid.dims == (16, 1, 1)
        assert rc.cd is None
        assert rc.t_end == 0.5
        assert rc.config_hash == config_hash(_config())

    def test_hash_is_order_independent(self):
        cfg = _config()
        reordered = dict(reversed(list(cfg.items())))
        assert config_hash(cfg) == config_hash(reordered)

    def test_collects_all_violations(self):
        cfg = _config(evolution={"t_final": 2.0, "c_cfl": 1.5}, data={"amplitude": -1.0})
        with pytest.raises(ConfigError) as exc:
            RunConfig.from_config(cfg)
        assert len(exc.value.violations) >= 3

    def test_bad_kasner(self):
        with pytest.raises(ConfigError):
            RunConfig.from_config(_config(kasner={"q": [0.5, 0.5, 0.5]}))

    def test_cone_built_with_gauge_exponent(self):
        rc = RunConfig.from_config(_config(cone={"enabled": True, "rho0": 0.6, "rho1": 0.05}))
        assert rc.cd.eps == rc.gp.eps2
        assert rc.cd.t1 == rc.t_end


class TestInitialData:
    def test_constraints_satisfied(self):
        rc = RunConfig.from_config(_config())
        data = make_initial_data(rc)
        assert max(data.residuals.values()) <= 1e-8
        assert np.all(data.w.alpha > 0.0)
        data.frame.validate()

    def test_zero_amplitude_is_background(self):
        rc = RunConfig.from_config(_config(data={"amplitude": 0.0}))
        data = make_initial_data(rc)
        assert closed_form_deviation(data.w, rc) < 1e-12

    def test_seed_reproducible(self):
        rc = RunConfig.from_config(_config())
        first = make_initial_data(rc).w.pack()
        second = make_initial_data(rc).w.pack()
        assert np.array_equal(first, second)

    def test_large_amplitude_rejected(self):
        rc = RunConfig.from_config(_config(data={"amplitude": 5.0}))
        with pytest.raises(ConstraintSolveError):
            make_initial_data(rc)

    def test_localized_data_within_truncation_allowance(self):
        rc = RunConfig.from_config(_config(cone=LOCAL_CONE, data={"localize": True,
                                                                  "outer_amplitude": 1e-3}))
        data = make_initial_data(rc)
        assert 0.0 < data.truncation <= rc.truncation_tol
        assert data.residuals["M"] <= 1e-8
        assert data.residuals["H"] <= 1e-8
        scale = max(rc.t0 ** (1.0 + rc.gp.eps1), rc.t0 ** (1.0 + rc.gp.eps2))
        allowance = 1e-8 + 2.0 * scale * np.abs(data.frame.alphatilde).max() \
            * max(1.0, np.abs(data.frame.etilde).max()) * data.truncation
        assert data.residuals["D"] <= allowance
        assert data.residuals["A"] <= allowance

    def test_unresolved_data_rejected(self):
        rc = RunConfig.from_config(_config(cone=LOCAL_CONE, data={"localize": True,
                                                                  "truncation_tol": 1e-14}))
        with pytest.raises(ConstraintSolveError) as exc:
            make_initial_data(rc)
        assert "truncation" in exc.value.residuals


class TestStepping:
    def test_rk4_backward(self):
        y = rk4(lambda t, y: 2.0 * y / t, 1.0, np.array([1.0]), 0.1)
        assert y[0] == approx(0.81, rel=1e-5)

    def test_dt_limits(self):
        rc = RunConfig.from_config(_config())
        w = _background(rc)
        dt = choose_dt(w, rc)
        assert 0.0 < dt <= rc.c_log * w.t
        late = _background(rc, 0.501)
        assert choose_dt(late, rc) == approx(0.001)

    def test_step_rejects_bad_dt(self):
        rc = RunConfig.from_config(_config())
        w = _background(rc)
        with pytest.raises(StateError):
            step(w, w.t, rc)
        with pytest.raises(StateError):
            step(w, -0.1, rc)

    def test_background_stays_on_closed_form(self):
        rc = RunConfig.from_config(_config())
        w = _background(rc)
        for _ in range(5):
            w, distance = step(w, choose_dt(w, rc), rc)
            assert distance < 1e-12
        assert closed_form_deviation(w, rc) < 1e-7

    def test_energy_monitor_starts_at_one(self):
        rc = RunConfig.from_config(_config())
        monitor = EnergyMonitor(rc.grid, 1)
        assert monitor.update(_background(rc)) == approx(1.0)


class TestRun:
    def test_background_run(self, tmp_path):
        rc = RunConfig.from_config(_config())
        result = run(rc, tmp_path, initial=_background(rc))
        assert result.final.t == approx(rc.t_end)
        assert result.background_deviation < 1e-6
        assert result.steps > 0
        assert max(max(rec.constraints.values()) for rec in result.ts.records) < 1e-10
        final, header = read_state(tmp_path / "snapshots" / "final.h5")
        assert header["meta"]["config_hash"] == rc.config_hash
        assert final.pack() == approx(result.final.pack())

    def test_perturbed_run_keeps_constraints(self):
        rc = RunConfig.from_config(_config())
        result = run(rc)
        assert result.initial_residuals["M"] <= 1e-8
        worst = max(max(rec.constraints.values()) for rec in result.ts.records)
        assert worst < 1e-6
        assert result.energy_ratio_max < 10.0

    def test_checkpoint_writer(self, tmp_path):
        rc = RunConfig.from_config(_config())
        writer = CheckpointWriter(tmp_path, rc)
        w = _background(rc)
        path = writer.write(w, "checkpoint_000001")
        writer.join()
        restored, _ = read_state(path)
        assert restored.t == w.t

    def test_hierarchy_tracks_base_level(self):
        rc = RunConfig.from_config(_config())
        sym = build(4, rc.kd, rc.gp)
        defect = hierarchy_consistency(rc, _background(rc), sym, steps=3)
        assert defect < 1e-10

    def test_hierarchy_tracks_perturbed_data(self):
        rc = RunConfig.from_config(_config())
        sym = build(4, rc.kd, rc.gp)
        w = make_initial_data(rc).w
        assert np.abs(build_hierarchy(w, rc.gp, rc.grid, sym).level((1, 0, 0))).max() > 1e-4
        defect = hierarchy_consistency(rc, w, sym, steps=3)
        assert defect < 1e-6

    def test_perturbed_run_extracts_asymptotics(self):
        rc = RunConfig.from_config(_config(evolution={"t_final": 1e-3}))
        result = run(rc)
        data = result.asymptotics
        assert data is not None
        assert data.zeta_fit > 0.0
        assert np.all(np.isfinite(data.kasner_residual))
        assert np.abs(data.Hhat).max() < 1e-2
        assert np.all(data.alphahat > 0.0)
        first, last = result.late_states[0], result.late_states[-1]
        assert first.t > 5.0 * last.t
        early = np.abs(kasner_residual(first.H, first.Sigma, rc.kd)).max()
        final = np.abs(kasner_residual(last.H, last.Sigma, rc.kd)).max()
        assert final < early

    def test_cone_uniqueness_needs_cone(self):
        rc = RunConfig.from_config(_config())
        with pytest.raises(GridError):
            cone_uniqueness(rc)

    def test_cone_uniqueness_identical_data(self):
        rc = RunConfig.from_config(_config(cone=LOCAL_CONE, evolution={"t_final": 0.8}))
        report = cone_uniqueness(rc, outer_amplitude=0.0, tolerance=1e-6)
        assert len(report.times) >= 2
        assert report.max_discrepancy == 0.0
        assert report.passed

    def test_cone_uniqueness_at_configured_tolerance(self):
        rc = RunConfig.from_config(_config(cone=LOCAL_CONE, evolution={"t_final": 0.8}))
        report = cone_uniqueness(rc, outer_amplitude=1e-3, tolerance=1e-6)
        assert report.tolerance == 1e-6
        assert report.discrepancies[0] == 0.0
        assert all(np.isfinite(report.discrepancies))
        assert report.max_discrepancy < 1e-2
        assert report.passed == (report.max_discrepancy <= 1e-6)
