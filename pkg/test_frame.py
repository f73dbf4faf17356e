"""
Тесты тетрадной формулировки: фон Казнера, связи, связность и кривизна
"""
import numpy as np
import pytest
from pytest import approx

from errors import StateError
from frame import (FrameState, antisym_outer, curvature, frame_constraints, frame_rhs,
                   ricci_on_shell, stf)
from kasner import background_frame, kasner_from_q


def _smooth_state(grid, rng, t=0.7):
    """Неоднородное гладкое состояние вдоль x¹"""
    x = grid.mesh()[0]
    d = grid.n_spatial
    wave = lambda: np.sin(np.pi * x + rng.uniform(0, 2 * np.pi))
    etilde = np.zeros((d, d) + grid.shape)
    for a in range(d):
        for b in range(d):
            etilde[a, b] = (1.0 if a == b else 0.0) + 0.05 * rng.standard_normal() * wave()
    C = np.zeros((d, d, d) + grid.shape)
    for idx in np.ndindex(d, d, d):
        C[idx] = 0.1 * rng.standard_normal() * wave()
    sigma = np.zeros((d, d) + grid.shape)
    for idx in np.ndindex(d, d):
        sigma[idx] = 0.2 * rng.standard_normal() + 0.05 * wave()
    U = np.stack([0.1 * wave() for _ in range(d)])
    return FrameState(t=t, etilde=etilde, alphatilde=1.0 + 0.1 * wave(),
                      Ctilde=antisym_outer(C), Utilde=U, Htilde=0.3 + 0.05 * wave(),
                      Sigmatilde=stf(sigma))


class TestFrameState:
    def test_projection_reports_distance(self, line_grid, rng):
        s = _smooth_state(line_grid, rng)
        s.Sigmatilde = s.Sigmatilde + 1e-3
        projected, distance = s.project()
        assert distance > 0.0
        projected.validate()

    def test_validate_rejects_symmetric_c(self, line_grid, rng):
        s = _smooth_state(line_grid, rng)
        s.Ctilde = s.Ctilde + 1.0
        with pytest.raises(StateError):
            s.validate()

    def test_nonpositive_lapse(self, line_grid, rng):
        s = _smooth_state(line_grid, rng)
        s.alphatilde = -s.alphatilde
        with pytest.raises(StateError):
            frame_rhs(s, line_grid)

    def test_copy_is_deep(self, line_grid, rng):
        s = _smooth_state(line_grid, rng)
        c = s.copy()
        c.Htilde[...] = 0.0
        assert np.any(s.Htilde != 0.0)


class TestKasnerSolution:
    @pytest.mark.parametrize("t", [1.0, 0.1, 1e-3])
    def test_rhs_matches_time_derivative(self, kd_aniso, line_grid, t):
        s = background_frame(kd_aniso, t, line_grid.shape)
        rates = frame_rhs(s, line_grid)
        power_h = -kd_aniso.r0 / 2.0 - 1.0
        assert rates.Htilde == approx(power_h * s.Htilde / t, rel=1e-10)
        assert rates.Sigmatilde == approx(power_h * s.Sigmatilde / t, rel=1e-10, abs=1e-14 / t ** 2)
        assert rates.alphatilde == approx(kd_aniso.r0 / (2.0 * t) * s.alphatilde, rel=1e-10)
        expected_e = -0.5 * kd_aniso.r.reshape(3, 1, 1, 1, 1) * s.etilde / t
        assert rates.etilde == approx(expected_e, rel=1e-10, abs=1e-14)
        assert np.abs(rates.Ctilde).max() < 1e-12

    def test_constraints_vanish(self, kd_aniso, line_grid):
        s = background_frame(kd_aniso, 0.3, line_grid.shape)
        residuals = frame_constraints(s, line_grid)
        scale = np.abs(s.Htilde).max() ** 2
        assert residuals.max_norm() <= 1e-12 * max(scale, 1.0)

    @pytest.mark.parametrize("q", [(0.5, 0.3, 0.2), (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)])
    def test_ricci_matches_field_equations(self, q, line_grid):
        kd = kasner_from_q(4, q)
        s = background_frame(kd, 0.2, line_grid.shape)
        cc = curvature(s, line_grid)
        on_shell = ricci_on_shell(s)
        assert cc.ricci[0, 0] == approx(on_shell[0, 0], rel=1e-9, abs=1e-12)
        assert stf(cc.ricci[1:, 1:]) == approx(stf(on_shell[1:, 1:]), rel=1e-9, abs=1e-9)
        assert np.abs(cc.ricci[0, 1:]).max() < 1e-12


def _bianchi_two(grid, lam, t=0.5):
    """Однородное состояние типа Бьянки II: структурные константы C̃ дают [ẽ_2, ẽ_3] = λẽ_1, Ũ = 0"""
    ones = np.ones(grid.shape)
    frame = np.array([[1.2, 0.1, 0.0], [0.0, 0.9, 0.0], [0.0, 0.05, 0.8]])
    sigma = np.array([[0.2, 0.05, 0.0], [0.05, -0.1, 0.03], [0.0, 0.03, -0.1]])
    C = np.zeros((3, 3, 3))
    C[1, 0, 2], C[2, 0, 1] = lam, -lam
    return FrameState(t=t, etilde=frame[..., None, None, None] * ones,
                      alphatilde=0.7 * ones, Ctilde=C[..., None, None, None] * ones,
                      Utilde=np.zeros((3,) + grid.shape), Htilde=0.3 * ones,
                      Sigmatilde=sigma[..., None, None, None] * ones)


class TestBianchiII:
    """Однородные данные: правые части сводятся к системе ОДУ"""

    def test_rhs_matches_ode(self, line_grid):
        lam = 0.4
        s = _bianchi_two(line_grid, lam)
        rates = frame_rhs(s, line_grid)
        t, alpha, H = s.t, 0.7, 0.3
        sigma = s.Sigmatilde[..., 0, 0, 0]
        C = s.Ctilde[..., 0, 0, 0]
        K = H * np.eye(3) + sigma

        # Райчаудхури без ускорения: кривизна среза не входит
        expected_h = H / t - alpha * H ** 2 - alpha * np.sum(sigma ** 2) / 3.0
        # бесследовая часть Риччи группы Бьянки II
        ricci_stf = lam ** 2 * np.diag([2.0, -1.0, -1.0]) / 3.0
        expected_sigma = -sigma / t - alpha * (3.0 * H * sigma + ricci_stf)
        expected_e = -alpha * K @ s.etilde[..., 0, 0, 0]
        expected_c = np.zeros((3, 3, 3))
        for a, m, b in np.ndindex(3, 3, 3):
            for k in range(3):
                expected_c[a, m, b] += alpha * (-K[a, k] * C[k, m, b] - K[b, k] * C[a, m, k]
                                                + C[a, k, b] * K[k, m])

        assert rates.Htilde == approx(expected_h * np.ones(line_grid.shape), rel=1e-12)
        assert rates.Sigmatilde[..., 3, 0, 0] == approx(expected_sigma, abs=1e-12)
        assert rates.etilde[..., 5, 0, 0] == approx(expected_e, abs=1e-12)
        assert rates.Ctilde[..., 0, 0, 0] == approx(expected_c, abs=1e-12)
        assert rates.alphatilde == approx(3.0 * H * alpha ** 2 * np.ones(line_grid.shape))
        assert np.abs(rates.Utilde).max() < 1e-12

    def test_curvature_enters_only_shear(self, line_grid):
        flat = frame_rhs(_bianchi_two(line_grid, 0.0), line_grid)
        curved = frame_rhs(_bianchi_two(line_grid, 0.4), line_grid)
        assert curved.Htilde == approx(flat.Htilde, rel=1e-12)
        jump = (curved.Sigmatilde - flat.Sigmatilde)[..., 0, 0, 0]
        assert jump == approx(-0.7 * 0.16 * np.diag([2.0, -1.0, -1.0]) / 3.0, abs=1e-12)


class TestInhomogeneous:
    def test_rhs_shapes_and_symmetry(self, line_grid, rng):
        s = _smooth_state(line_grid, rng)
        rates = frame_rhs(s, line_grid)
        assert rates.etilde.shape == s.etilde.shape
        sym = rates.Sigmatilde - np.swapaxes(rates.Sigmatilde, 0, 1)
        assert np.abs(sym).max() < 1e-12
        assert np.abs(np.einsum("aa...->...", rates.Sigmatilde)).max() < 1e-12
        assert np.abs(rates.Ctilde + np.swapaxes(rates.Ctilde, 0, 2)).max() < 1e-12

    def test_constraint_norms_named(self, line_grid, rng):
        residuals = frame_constraints(_smooth_state(line_grid, rng), line_grid)
        norms = residuals.norms()
        assert set(norms) == {"A", "B", "C", "D", "M", "H"}
        assert all(value >= 0.0 for value in norms.values())
