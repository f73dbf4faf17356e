"""
Тесты перемасштабированных переменных, их правых частей, связей и иерархии
"""
import numpy as np
import pytest
from pytest import approx

from discretization import derivative_multi
from errors import GaugeError, StateError
from frame import FrameState, antisym_outer, frame_rhs, stf
from fuchsian import (GaugeParams, RescaledState, build_hierarchy, hamiltonian_constraint,
                      hierarchy_levels, hierarchy_rhs, rescale, rescaled_constraints, rhs_base,
                      rhs_modified, unrescale)
from kasner import background_frame, background_rescaled
from symmetrizer import build


def _homogeneous_lapse_state(grid, rng, t=0.6):
    """Гладкое состояние с α̃ = const и Ũ = 0: связь 𝔇 выполнена тождественно"""
    x = grid.mesh()[0]
    d = grid.n_spatial
    wave = lambda: np.cos(np.pi * x + rng.uniform(0, 2 * np.pi))
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
    return FrameState(t=t, etilde=etilde, alphatilde=np.full(grid.shape, 1.3),
                      Ctilde=antisym_outer(C), Utilde=np.zeros((d,) + grid.shape),
                      Htilde=0.4 + 0.05 * wave(), Sigmatilde=stf(sigma))


class TestGaugeParams:
    def test_default_is_valid(self, kd_aniso, gauge):
        gauge.validate(kd_aniso)
        assert 0.0 < gauge.eps2 < 1.0
        assert gauge.eps2 + gauge.nu < 1.0

    def test_from_config_collects_violations(self, kd_aniso):
        with pytest.raises(GaugeError) as exc:
            GaugeParams.from_config(kd_aniso, {"eps1": -1.0, "eps2": 1.5, "k_order": -1})
        assert len(exc.value.violations) >= 3

    def test_dict_roundtrip(self, gauge):
        assert GaugeParams.from_dict(gauge.to_dict()) == gauge

    def test_kappas(self, kd_aniso, gauge):
        k0, k1, k2 = gauge.kappas(kd_aniso)
        assert k0 == approx(1.0 + kd_aniso.r0 / 2.0)
        assert k2 - k1 == approx(gauge.eps2 - gauge.eps1)


class TestRescaling:
    def test_background_maps_to_zero_fields(self, kd_aniso, gauge, line_grid):
        t = 0.25
        w = rescale(background_frame(kd_aniso, t, line_grid.shape), gauge, kd_aniso)
        expected = background_rescaled(kd_aniso, gauge.eps1, gauge.eps2, t, line_grid.shape)
        assert w.pack() == approx(expected.pack(), abs=1e-13)

    def test_inverse(self, line_grid, rng, kd_aniso, gauge):
        fs = _homogeneous_lapse_state(line_grid, rng)
        back = unrescale(rescale(fs, gauge, kd_aniso), gauge, kd_aniso)
        assert back.Sigmatilde == approx(fs.Sigmatilde, abs=1e-13)
        assert back.etilde == approx(fs.etilde, abs=1e-13)

    def test_rejects_nonpositive_time(self, kd_aniso, gauge, line_grid):
        w = background_rescaled(kd_aniso, gauge.eps1, gauge.eps2, 0.5, line_grid.shape)
        w.t = 0.0
        with pytest.raises(StateError):
            rhs_base(w, line_grid, gauge, kd_aniso)

    def test_packed_roundtrip(self, kd_aniso, gauge, line_grid):
        w = background_rescaled(kd_aniso, gauge.eps1, gauge.eps2, 0.5, line_grid.shape)
        restored = RescaledState.from_packed(w.t, w.pack(), 4)
        assert np.array_equal(restored.e, w.e)


class TestRescaledSystem:
    @pytest.mark.parametrize("t", [1.0, 0.05])
    def test_background_rates(self, kd_aniso, gauge, line_grid, t):
        w = background_rescaled(kd_aniso, gauge.eps1, gauge.eps2, t, line_grid.shape)
        rates = rhs_modified(w, line_grid, gauge, kd_aniso)
        powers = (gauge.eps2 + kd_aniso.r0 / 2.0 - kd_aniso.r / 2.0).reshape(3, 1, 1, 1, 1)
        assert rates.e == approx(powers * w.e / t, rel=1e-10, abs=1e-12)
        assert rates.alpha == approx((gauge.eps1 + kd_aniso.r0 / 2.0) * w.alpha / t, rel=1e-10)
        for name in ("C", "U", "H", "Sigma"):
            assert np.abs(getattr(rates, name)).max() < 1e-10 / t

    def test_background_constraints(self, kd_aniso, gauge, line_grid):
        w = background_rescaled(kd_aniso, gauge.eps1, gauge.eps2, 0.1, line_grid.shape)
        assert rescaled_constraints(w, line_grid, gauge, kd_aniso).max_norm() < 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_commutes_with_frame_system(self, seed, kd_aniso, gauge, line_grid):
        rng = np.random.default_rng(seed)
        fs = _homogeneous_lapse_state(line_grid, rng)
        t = fs.t
        w = rescale(fs, gauge, kd_aniso)
        rates = rhs_base(w, line_grid, gauge, kd_aniso)
        frame_rates = frame_rhs(fs, line_grid)

        alpha = fs.alphatilde
        factor = alpha + t * frame_rates.alphatilde

        def chain(tilde, d_tilde):
            return factor * tilde + t * alpha * d_tilde

        assert rates.C == approx(chain(fs.Ctilde, frame_rates.Ctilde), abs=1e-9)
        assert rates.U == approx(chain(fs.Utilde, frame_rates.Utilde), abs=1e-9)
        assert rates.Sigma == approx(chain(fs.Sigmatilde, frame_rates.Sigmatilde), abs=1e-9)
        h_expected = chain(fs.Htilde, frame_rates.Htilde) \
            - hamiltonian_constraint(w, line_grid, gauge, kd_aniso) / (3.0 * t)
        assert rates.H == approx(h_expected, abs=1e-9)
        e_expected = gauge.eps2 * w.e / t + t ** gauge.eps2 * (
            frame_rates.alphatilde * fs.etilde + alpha * frame_rates.etilde)
        assert rates.e == approx(e_expected, abs=1e-9)

    def test_modified_adds_momentum_terms(self, kd_aniso, line_grid, rng):
        gp = GaugeParams.default(kd_aniso, gamma=2.0)
        w = rescale(_homogeneous_lapse_state(line_grid, rng), gp, kd_aniso)
        base = rhs_base(w, line_grid, gp, kd_aniso)
        modified = rhs_modified(w, line_grid, gp, kd_aniso)
        M = rescaled_constraints(w, line_grid, gp, kd_aniso).M
        assert modified.U - base.U == approx(gp.gamma / w.t * M, abs=1e-12)
        assert np.array_equal(modified.C, base.C)


class TestHierarchy:
    def test_levels_follow_active_axes(self, line_grid, cube_grid):
        assert hierarchy_levels(line_grid, 2) == [(0, 0, 0), (1, 0, 0), (2, 0, 0)]
        assert len(hierarchy_levels(cube_grid, 1)) == 4

    def test_requires_positive_order(self, kd_aniso, line_grid):
        gp = GaugeParams.default(kd_aniso, k_order=0)
        sym = build(4, kd_aniso, gp)
        w = background_rescaled(kd_aniso, gp.eps1, gp.eps2, 0.5, line_grid.shape)
        with pytest.raises(GaugeError):
            build_hierarchy(w, gp, line_grid, sym)

    def test_base_level_is_state(self, kd_aniso, gauge, line_grid):
        sym = build(4, kd_aniso, gauge)
        w = background_rescaled(kd_aniso, gauge.eps1, gauge.eps2, 0.5, line_grid.shape)
        hs = build_hierarchy(w, gauge, line_grid, sym)
        assert hs.data.shape == (2, 50) + line_grid.shape
        assert np.array_equal(hs.base().pack(), w.pack())
        assert np.abs(hs.level((1, 0, 0))).max() < 1e-12

    def test_top_level_evolves_own_data(self, kd_aniso, gauge, line_grid, rng):
        sym = build(4, kd_aniso, gauge)
        w = background_rescaled(kd_aniso, gauge.eps1, gauge.eps2, 0.5, line_grid.shape)
        hs = build_hierarchy(w, gauge, line_grid, sym)
        reference = hierarchy_rhs(hs, line_grid, gauge, kd_aniso, sym)

        delta = rng.standard_normal(50)
        data = hs.data.copy()
        top = hs.levels.index((1, 0, 0))
        data[top] = data[top] + delta[:, None, None, None]
        moved = hierarchy_rhs(hs.with_data(hs.t, data), line_grid, gauge, kd_aniso, sym)

        change = (moved.data[top] - reference.data[top])[:, 3, 0, 0]
        expected = np.linalg.solve(sym.B0, sym.Bs @ delta) / hs.t
        assert change == approx(expected, rel=1e-9, abs=1e-12)
        assert np.abs(expected - gauge.nu * delta / hs.t).max() > 1e-3
        assert np.array_equal(moved.data[0], reference.data[0])

    def test_top_level_follows_perturbed_base(self, kd_aniso, gauge, line_grid, rng):
        sym = build(4, kd_aniso, gauge)
        w = rescale(_homogeneous_lapse_state(line_grid, rng), gauge, kd_aniso)
        hs = build_hierarchy(w, gauge, line_grid, sym)
        rates = hierarchy_rhs(hs, line_grid, gauge, kd_aniso, sym)
        assert np.abs(hs.level((1, 0, 0))).max() > 1e-3

        # d/dt V⁻¹t^ν∂W по цепному правилу из правых частей уровня 0
        base_rates = rhs_modified(w, line_grid, gauge, kd_aniso).pack()
        first = derivative_multi(w.pack(), (1, 0, 0), line_grid)
        direct = np.einsum("ij,j...->i...", sym.Vinv,
                           gauge.nu / hs.t * hs.t ** gauge.nu * first
                           + hs.t ** gauge.nu * derivative_multi(base_rates, (1, 0, 0), line_grid))
        scale = np.abs(direct).max()
        assert np.abs(rates.level((1, 0, 0)) - direct).max() <= 1e-9 * scale
