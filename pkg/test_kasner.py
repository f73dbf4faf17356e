"""
Тесты фонов Казнера: показатели, субкритичность, условия калибровки
"""
import numpy as np
import pytest
from pytest import approx

from errors import GaugeError, KasnerError, StateError
from kasner import (background_frame, background_rescaled, check_exponent_conditions,
                    check_subcritical, kasner_from_q, p_max, q_from_r, sample_subcritical)


class TestKasnerFromQ:
    def test_anisotropic_exponents(self, kd_aniso):
        assert kd_aniso.r0 == approx(0.110856, abs=2e-4)
        assert kd_aniso.r == approx([0.555428, -0.066743, -0.377829], abs=2e-4)

    def test_relations_hold(self, kd_aniso):
        for name, value in kd_aniso.residuals().items():
            assert value < 1e-12, name

    def test_flrw_is_isotropic(self, kd_flrw):
        assert kd_flrw.r0 == 0.0
        assert kd_flrw.is_flrw()
        assert kd_flrw.P == approx(p_max(4))

    def test_sum_not_one(self):
        with pytest.raises(KasnerError) as exc:
            kasner_from_q(4, [0.5, 0.3, 0.3])
        assert exc.value.relation == "sum q = 1"

    def test_vacuum_rejected(self):
        # Σq² = 1 даёт P = 0
        with pytest.raises(KasnerError):
            kasner_from_q(4, [1.0, 0.0, 0.0])

    def test_low_dimension(self):
        with pytest.raises(KasnerError):
            kasner_from_q(3, [0.5, 0.5])

    def test_wrong_count(self):
        with pytest.raises(KasnerError):
            kasner_from_q(5, [0.5, 0.3, 0.2])

    def test_q_from_r_inverts(self, kd_aniso):
        assert q_from_r(4, kd_aniso.r0, kd_aniso.r) == approx(kd_aniso.q, abs=1e-12)

    def test_dict_roundtrip_checks_consistency(self, kd_aniso):
        data = kd_aniso.to_dict()
        assert kd_aniso.__class__.from_dict(data).r0 == approx(kd_aniso.r0)
        data["r0"] = data["r0"] + 0.1
        with pytest.raises(KasnerError):
            kd_aniso.__class__.from_dict(data)


class TestSubcritical:
    def test_anisotropic_margin(self, kd_aniso):
        ok, margin = check_subcritical(kd_aniso)
        assert ok
        assert margin == approx(1.244342, abs=2e-4)

    def test_flrw_margin(self, kd_flrw):
        assert check_subcritical(kd_flrw) == (True, approx(2.0))

    def test_violating_background(self):
        kd = kasner_from_q(4, [0.7, 0.4, -0.1])
        ok, margin = check_subcritical(kd)
        assert not ok
        assert margin == approx(-0.840, abs=5e-3)

    @pytest.mark.parametrize("n", [4, 5, 7, 11])
    def test_sampled_backgrounds(self, n, rng):
        kd = sample_subcritical(n, rng)
        assert check_subcritical(kd)[0]
        assert kd.q.sum() == approx(1.0, abs=1e-12)


class TestExponentConditions:
    def test_default_choice_is_admissible(self, kd_aniso, gauge):
        assert check_exponent_conditions(kd_aniso, gauge.eps1, gauge.eps2, gauge.nu) == []

    def test_all_violations_reported(self, kd_aniso):
        violations = check_exponent_conditions(kd_aniso, -1.0, 0.0, 1.5)
        assert len(violations) >= 4
        assert any("eps1" in v for v in violations)
        assert any("eps2 + nu" in v for v in violations)

    def test_rescaled_background_rejects_bad_gauge(self, kd_aniso):
        with pytest.raises(GaugeError):
            background_rescaled(kd_aniso, -1.0, 0.5, 1.0)


class TestBackgrounds:
    def test_rescaled_fields_vanish(self, kd_aniso, gauge):
        w = background_rescaled(kd_aniso, gauge.eps1, gauge.eps2, 0.5, (4, 1, 1))
        assert w.e.shape == (3, 3, 4, 1, 1)
        assert np.all(w.H == 0.0) and np.all(w.Sigma == 0.0)
        assert w.alpha[0, 0, 0] == approx(0.5 ** (gauge.eps1 + kd_aniso.r0 / 2.0))

    def test_frame_background_traceless_shear(self, kd_aniso):
        s = background_frame(kd_aniso, 0.3)
        assert np.trace(s.Sigmatilde) == approx(0.0, abs=1e-14)
        s.validate()

    def test_nonpositive_time(self, kd_aniso):
        with pytest.raises(StateError):
            background_frame(kd_aniso, 0.0)
