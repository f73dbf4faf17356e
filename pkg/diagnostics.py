"""
Физическая диагностика: инварианты кривизны, вторые фундаментальные формы,
компоненты Вейля, асимптотические данные и степенные аппроксимации
"""
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from discretization import (ConeDomain, TorusGrid, ball_mask, rho_of_t, sobolev_norm,
                            spacelike_monitors, top_mode_fraction)
from errors import EvolutionAbort, StateError
from frame import curvature, eye_field
from fuchsian import GaugeParams, RescaledState, rescaled_constraints, unrescale
from kasner import KasnerData

if TYPE_CHECKING:
    from symmetrizer import SymmetrizerSet

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 8


@dataclass
class DiagnosticsRecord:
    """Значения диагностики в один момент выхода"""
    t: float
    constraints: Dict[str, float]
    w_norm: float
    p_norm: float
    scalar_min: float
    scalar_max: float
    ricci_sq_min: float
    ricci_sq_max: float
    mean_curv_min: float
    mean_curv_max: float
    weyl_min: float
    weyl_max: float
    top_mode: float = 0.0
    projection: float = 0.0
    monitors: Optional[Dict] = None

    def to_row(self) -> Dict[str, float]:
        """Плоская строка для CSV"""
        row = {"t": self.t, "w_norm": self.w_norm, "p_norm": self.p_norm}
        for name, value in self.constraints.items():
            row[f"constraint_{name}"] = value
        for name in ("scalar", "ricci_sq", "mean_curv", "weyl"):
            row[f"{name}_min"] = getattr(self, f"{name}_min")
            row[f"{name}_max"] = getattr(self, f"{name}_max")
        row["top_mode"] = self.top_mode
        row["projection"] = self.projection
        if self.monitors:
            row["monitor_sup_e"] = self.monitors["sup_e"]
            row["monitor_passed"] = float(self.monitors["passed"])
        return row


@dataclass
class AsymptoticData:
    """Предельные поля у сингулярности и остаток тождества Казнера"""
    Hhat: np.ndarray
    Sigmahat: np.ndarray
    alphahat: np.ndarray
    kf: np.ndarray
    kasner_residual: np.ndarray
    zeta_fit: float
    branch_defect: float = 0.0
    alpha_fit_rms: float = 0.0

    def summary(self, mask: Optional[np.ndarray] = None) -> Dict[str, float]:
        def region(values):
            return values if mask is None else values[..., mask]

        trace = np.einsum("aa...->...", self.kf)
        return {
            "zeta": self.zeta_fit,
            "Hhat_max_abs": float(np.abs(region(self.Hhat)).max()),
            "Sigmahat_max_abs": float(np.abs(region(self.Sigmahat)).max()),
            "alphahat_min": float(region(self.alphahat).min()),
            "alphahat_max": float(region(self.alphahat).max()),
            "kf_trace_min": float(region(trace).min()),
            "kasner_residual_max": float(np.abs(region(self.kasner_residual)).max()),
            "branch_defect": self.branch_defect,
            "alpha_fit_rms": self.alpha_fit_rms,
        }


@dataclass
class PowerLawFit:
    exponent: float
    prefactor: float
    r2: float
    stderr: float


def _check_alpha(w: RescaledState) -> None:
    if w.t <= 0.0:
        raise StateError(f"t = {w.t} ≤ 0")
    if np.any(w.alpha <= 0.0):
        raise StateError("α ≤ 0 в части точек")


def curvature_invariants(w: RescaledState, gp: GaugeParams, kd: KasnerData) -> Tuple[np.ndarray, np.ndarray]:
    """Физические R̄ и R̄_ab R̄^ab"""
    _check_alpha(w)
    n, t = kd.n, w.t
    scalar = -(n - 1) / ((n - 2) * w.alpha ** 2 * t ** ((2 * n - 2) / (n - 2) - 2 * gp.eps1))
    ricci_sq = (n - 1) ** 2 / ((n - 2) ** 2 * w.alpha ** 4
                               * t ** ((4 * n - 4) / (n - 2) - 4 * gp.eps1))
    return scalar, ricci_sq


def conf_second_fundamental(w: RescaledState, kd: KasnerData) -> np.ndarray:
    """2tα̃K̃_AB = r_AB + 2ℋδ_AB + 2Σ_AB"""
    ndim = w.H.ndim
    r = np.diag(kd.r).reshape((kd.d, kd.d) + (1,) * ndim)
    return r + 2.0 * w.H[None, None] * eye_field(kd.d, ndim) + 2.0 * w.Sigma


def physical_second_fundamental(w: RescaledState, gp: GaugeParams, kd: KasnerData) -> np.ndarray:
    """K̄_AB физической метрики относительно репера ẽ_A"""
    _check_alpha(w)
    n = kd.n
    ndim = w.H.ndim
    k_conf = conf_second_fundamental(w, kd) + 2.0 / (n - 2) * eye_field(kd.d, ndim)
    return k_conf / (2.0 * w.alpha * w.t ** ((n - 3) / (n - 2) - gp.eps1))


def mean_curvature(w: RescaledState, gp: GaugeParams, kd: KasnerData) -> np.ndarray:
    """K̄_A^A = ((n−1)/(n−2) + r0/2 + (n−1)ℋ)/(α t^{(n−1)/(n−2)−eps1})"""
    _check_alpha(w)
    n = kd.n
    return ((n - 1) / (n - 2) + kd.r0 / 2.0 + (n - 1) * w.H) \
        / (w.alpha * w.t ** ((n - 1) / (n - 2) - gp.eps1))


def weyl_background(kd: KasnerData) -> np.ndarray:
    """Предел t²α̃²C̃_A0B0 на фоне Казнера"""
    n = kd.n
    r = np.diag(kd.r)
    return ((n - 3) / (2.0 * (n - 2)) * r + kd.r0 / (2.0 * (n - 2)) * np.eye(kd.d)
            + kd.r0 / 4.0 * r - 0.25 * r @ r)


def weyl_explicit(w: RescaledState, kd: KasnerData) -> np.ndarray:
    """Явная часть t²α̃²C̃_A0B0 без членов с C и производными C"""
    n, d = kd.n, kd.d
    ndim = w.H.ndim
    eye = eye_field(d, ndim)
    r = np.diag(kd.r).reshape((d, d) + (1,) * ndim)
    H, S = w.H[None, None], w.Sigma
    r0 = kd.r0
    sigma_sq = np.einsum("ab...,ab...->...", S, S)[None, None]
    r_sigma = np.einsum("a,aa...->...", kd.r, S)[None, None]
    sr = 0.5 * (np.einsum("ca...,cb...->ab...", S, r) + np.einsum("cb...,ca...->ab...", S, r))
    base = weyl_background(kd).reshape((d, d) + (1,) * ndim)
    return (base
            + (n - 3) / (n - 2) * S + (n - 3) * H * S
            + ((n - 3) / 2.0 * r - (n - 3) * r0 / (2.0 * (n - 1)) * eye) * H
            + (n - 3) * r0 / (2.0 * (n - 1)) * S
            + sigma_sq * eye / (n - 1) + r_sigma * eye / (n - 1)
            - np.einsum("ac...,bc...->ab...", S, S) - sr
            + r0 / (n - 1) * S)


def weyl_component(w: RescaledState, grid: TorusGrid, gp: GaugeParams,
                   kd: KasnerData) -> Tuple[np.ndarray, np.ndarray]:
    """t²α̃²C̃_A0B0 по тензору Римана и физический инвариант C̄_A0B0 C̄^A0B0"""
    _check_alpha(w)
    n = kd.n
    fs = unrescale(w, gp, kd)
    cc = curvature(fs, grid)
    eye = eye_field(kd.d, w.H.ndim)
    weyl = (cc.riemann[1:, 0, 1:, 0]
            - (cc.ricci[0, 0][None, None] * eye - cc.ricci[1:, 1:]) / (n - 2)
            - cc.scalar[None, None] * eye / ((n - 1) * (n - 2)))
    scaled = (w.t * fs.alphatilde) ** 2 * weyl
    invariant = np.einsum("ab...,ab...->...", scaled, scaled) \
        / (w.alpha ** 4 * w.t ** (4.0 + 4.0 / (n - 2) - 4.0 * gp.eps1))
    return scaled, invariant


def projected_part(w: RescaledState) -> np.ndarray:
    """ℙW: компоненты e, α, C, U составного вектора"""
    packed = w.pack()
    keep = packed.shape[0] - 1 - w.d * w.d
    return packed[:keep]


def collect(w: RescaledState, grid: TorusGrid, gp: GaugeParams, kd: KasnerData,
            cd: Optional[ConeDomain] = None, sym: Optional["SymmetrizerSet"] = None,
            projection: float = 0.0, with_weyl: bool = True) -> DiagnosticsRecord:
    """Полный набор диагностики для состояния w"""
    radius = rho_of_t(cd, w.t) if cd is not None else None
    mask = ball_mask(grid, radius)
    k = max(1, min(gp.k_order, grid.max_derivative_order))
    packed = w.pack()
    constraints = rescaled_constraints(w, grid, gp, kd).norms(mask)
    scalar, ricci_sq = curvature_invariants(w, gp, kd)
    mean = mean_curvature(w, gp, kd)
    if with_weyl:
        _, weyl = weyl_component(w, grid, gp, kd)
    else:
        weyl = np.zeros(grid.shape)
    monitors = None
    if cd is not None:
        monitors = spacelike_monitors(w, cd, gp, grid, sym=sym).to_dict()
    return DiagnosticsRecord(
        t=w.t,
        constraints=constraints,
        w_norm=sobolev_norm(packed, grid, k, radius),
        p_norm=sobolev_norm(projected_part(w), grid, k - 1, radius),
        scalar_min=float(scalar[mask].min()), scalar_max=float(scalar[mask].max()),
        ricci_sq_min=float(ricci_sq[mask].min()), ricci_sq_max=float(ricci_sq[mask].max()),
        mean_curv_min=float(mean[mask].min()), mean_curv_max=float(mean[mask].max()),
        weyl_min=float(weyl[mask].min()), weyl_max=float(weyl[mask].max()),
        top_mode=top_mode_fraction(packed, grid),
        projection=projection,
        monitors=monitors,
    )


def fit_power_law(t: Sequence[float], v: Sequence[float], min_decades: float = 1.0) -> PowerLawFit:
    """Наклон ln v от ln t методом наименьших квадратов

    Raises:
        ValueError: неположительные значения, мало точек или узкий диапазон t
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.size < MIN_FIT_SAMPLES:
        raise ValueError(f"Нужно не меньше {MIN_FIT_SAMPLES} точек, получено {t.size}")
    if np.any(t <= 0.0) or np.any(v <= 0.0):
        raise ValueError("Значения t и v должны быть положительны")
    span = np.log10(t.max() / t.min())
    if span < min_decades - 1e-12:
        raise ValueError(f"Диапазон t {span:.2f} декад меньше {min_decades}")
    result = stats.linregress(np.log(t), np.log(v))
    r2 = float(result.rvalue ** 2) if np.isfinite(result.rvalue) else 1.0
    return PowerLawFit(exponent=float(result.slope), prefactor=float(np.exp(result.intercept)),
                       r2=r2, stderr=float(result.stderr))


def last_decade(t: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Отсчёты за последнюю декаду по t (t убывает к концу)

    Если ни один отсчёт не попал ровно на 10·t_min, добавляется ближайший
    более ранний, чтобы диапазон покрывал полную декаду.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    edge = 10.0 * t.min()
    keep = t <= edge * (1.0 + 1e-12)
    if t[keep].max() < edge * (1.0 - 1e-12) and not keep.all():
        keep |= t == t[~keep].min()
    return t[keep], v[keep]


def kasner_matrix(H: np.ndarray, Sigma: np.ndarray, kd: KasnerData) -> np.ndarray:
    """𝒦 = diag(r) + 2Hδ + 2Σ"""
    d, ndim = kd.d, H.ndim
    r = np.diag(kd.r).reshape((d, d) + (1,) * ndim)
    return r + 2.0 * H[None, None] * eye_field(d, ndim) + 2.0 * Sigma


def kasner_residual(H: np.ndarray, Sigma: np.ndarray, kd: KasnerData) -> np.ndarray:
    """(tr 𝒦)² − tr(𝒦²) + 4 tr 𝒦; на решении равен учетверённой алгебраической части ℌ"""
    kf = kasner_matrix(H, Sigma, kd)
    trace = np.einsum("aa...->...", kf)
    square = np.einsum("ab...,ba...->...", kf, kf)
    return trace ** 2 - square + 4.0 * trace


def _offset_model(t, limit, amplitude, zeta):
    return limit + amplitude * t ** zeta


def extract_asymptotics(ts, states: List[RescaledState], gp: GaugeParams, kd: KasnerData,
                        alpha_samples: int = 10) -> AsymptoticData:
    """Оценка Ĥ, Σ̂, α̂ и показателя затухания ζ по поздним состояниям

    Args:
        ts: Временной ряд с записями DiagnosticsRecord
        states: Поздние состояния, по убыванию t (не меньше двух)
        gp: Калибровка
        kd: Фон
        alpha_samples: Число точек для проверки аппроксимации α
    """
    if len(states) < 2:
        raise ValueError("Нужно не меньше двух поздних состояний")
    times = np.array([rec.t for rec in ts.records])
    p_norms = np.array([rec.p_norm for rec in ts.records])
    t_fit, p_fit = last_decade(times, p_norms)
    if np.any(p_fit <= 0.0):
        zeta = np.inf
    else:
        zeta = fit_power_law(t_fit, p_fit).exponent
    if not zeta > 0.0:
        raise EvolutionAbort(f"ℙ-нормы не убывают (ζ = {zeta:.3g}), извлечение асимптотик отклонено",
                             t=float(times.min()))
    zeta = float(min(zeta, 10.0))

    early, late = states[-2], states[-1]
    weight = late.t ** zeta / (early.t ** zeta - late.t ** zeta)
    Hhat = late.H - (early.H - late.H) * weight
    Sigmahat = late.Sigma - (early.Sigma - late.Sigma) * weight
    Sigmahat = 0.5 * (Sigmahat + np.swapaxes(Sigmahat, 0, 1))
    Sigmahat = Sigmahat - np.einsum("aa...->...", Sigmahat)[None, None] * eye_field(kd.d, Hhat.ndim) / kd.d

    exponent = gp.eps1 + kd.r0 / 2.0 + (kd.n - 1) * Hhat
    t_arr = np.array([s.t for s in states])
    residual = np.stack([np.log(s.alpha) - exponent * np.log(s.t) for s in states])
    # ln α − (eps1 + r0/2 + (n−1)Ĥ) ln t = ln α̂ + b t^ζ
    design = np.stack([np.ones_like(t_arr), t_arr ** zeta], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, residual.reshape(len(states), -1), rcond=None)
    alphahat = np.exp(coeffs[0]).reshape(Hhat.shape)

    rms = 0.0
    flat = residual.reshape(len(states), -1)
    if len(states) >= 3:
        rng = np.random.default_rng(0)
        picks = rng.choice(flat.shape[1], size=min(alpha_samples, flat.shape[1]), replace=False)
        errors = []
        for idx in picks:
            try:
                popt, _ = optimize.curve_fit(_offset_model, t_arr, flat[:, idx],
                                             p0=(flat[-1, idx], 0.0, zeta), maxfev=5000)
                fitted = _offset_model(t_arr, *popt)
            except (RuntimeError, optimize.OptimizeWarning) as e:
                logger.warning(f"Аппроксимация α в точке {idx} не сошлась: {e}")
                fitted = design @ coeffs[:, idx]
            errors.append(np.sqrt(np.mean((np.exp(flat[:, idx] - fitted) - 1.0) ** 2)))
        rms = float(np.max(errors))

    kf = kasner_matrix(Hhat, Sigmahat, kd)
    trace = np.einsum("aa...->...", kf)
    residual_kf = kasner_residual(Hhat, Sigmahat, kd)
    branch = float(np.abs(trace - (-2.0 + np.sqrt(4.0 + np.einsum("ab...,ab...->...", kf, kf)))).max())
    logger.info(f"Асимптотики: ζ={zeta:.4f}, max|остаток Казнера|={np.abs(residual_kf).max():.3e}")
    return AsymptoticData(Hhat=Hhat, Sigmahat=Sigmahat, alphahat=alphahat, kf=kf,
                          kasner_residual=residual_kf, zeta_fit=zeta,
                          branch_defect=branch, alpha_fit_rms=rms)
