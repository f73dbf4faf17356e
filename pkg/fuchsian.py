"""
Перемасштабированные (фуксовы) переменные: отображения из тетрадных
переменных и обратно, системы с добавленными связями, перемасштабированные
связи и иерархия производных
"""
import logging
from dataclasses import asdict, dataclass, fields, replace
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from discretization import (TorusGrid, derivative_multi, frame_derivative,
                            multi_indices_upto, top_mode_fraction)
from errors import GaugeError, StateError
from frame import (ConstraintResiduals, FrameDerivatives, FrameState, antisym_outer,
                   evolution_kernel, eye_field, stf)
from kasner import KasnerData, check_exponent_conditions
from symmetrizer import FieldIndexMap, solve_params

if TYPE_CHECKING:
    from symmetrizer import SymmetrizerSet

logger = logging.getLogger(__name__)

EPS2_CAP = 0.89


@dataclass
class GaugeParams:
    """Показатели перемасштабирования, порядок иерархии и параметры симметризатора"""
    eps1: float
    eps2: float
    nu: float
    k_order: int = 1
    mu: float = 0.0
    gamma: float = 2.0
    a: float = 3.0
    b: float = 2.0
    c: float = 3.0
    d: float = 1.5
    p: float = 0.5
    q: float = 0.0
    s: float = 0.5
    u: float = -1.0 / 6.0
    h: float = 1.0
    l: float = 1.0 / 3.0

    @classmethod
    def default(cls, kd: KasnerData, eps1: Optional[float] = None, eps2: Optional[float] = None,
                nu: Optional[float] = None, k_order: int = 1, mu: float = 0.0,
                gamma: float = 2.0) -> "GaugeParams":
        """Калибровка по умолчанию для фона kd; явно заданные значения сохраняются"""
        n = kd.n
        if eps1 is None:
            eps1 = max(0.0, -kd.r0 / 2.0) + 0.1
        if eps2 is None:
            spread = max(max(0.0, (r_a - kd.r0) / 2.0) for r_a in kd.r)
            eps2 = min(spread + 0.1, EPS2_CAP)
        if nu is None:
            nu = (1.0 - eps2) / 2.0
        a, b, c, d = n - 1.0, 2.0, n - 1.0, 1.5
        h, l = 1.0, 1.0 / (n - 1)
        params = solve_params(n, mu, gamma, b, c, d, h=h, l=l)
        return cls(eps1=float(eps1), eps2=float(eps2), nu=float(nu), k_order=int(k_order),
                   mu=mu, gamma=gamma, a=params.a, b=b, c=c, d=d, p=params.p, q=params.q,
                   s=params.s, u=params.u, h=h, l=l)

    @classmethod
    def from_config(cls, kd: KasnerData, cfg: Dict) -> "GaugeParams":
        gp = cls.default(kd, eps1=cfg.get("eps1"), eps2=cfg.get("eps2"), nu=cfg.get("nu"),
                         k_order=int(cfg.get("k_order", 1)), mu=float(cfg.get("mu", 0.0)),
                         gamma=float(cfg.get("gamma", 2.0)))
        gp.validate(kd)
        return gp

    def validate(self, kd: KasnerData) -> None:
        violations = check_exponent_conditions(kd, self.eps1, self.eps2, self.nu)
        if self.k_order < 0:
            violations.append(f"k_order = {self.k_order} < 0")
        if violations:
            raise GaugeError(violations)

    def kappas(self, kd: KasnerData) -> Tuple[float, float, float]:
        """(κ0, κ1, κ2) = (1 + r0/2, eps1 + r0/2, eps2 + r0/2)"""
        return 1.0 + kd.r0 / 2.0, self.eps1 + kd.r0 / 2.0, self.eps2 + kd.r0 / 2.0

    def to_dict(self) -> Dict:
        return {k: float(v) if k != "k_order" else int(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Dict) -> "GaugeParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass
class RescaledState:
    """Поля W = (e, α, C, U, ℋ, Σ) в момент t; компоненты впереди, сетка в конце"""
    t: float
    e: np.ndarray
    alpha: np.ndarray
    C: np.ndarray
    U: np.ndarray
    H: np.ndarray
    Sigma: np.ndarray

    @property
    def d(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.d + 1

    @property
    def grid_shape(self) -> Tuple[int, ...]:
        return self.H.shape

    def parts(self) -> Dict[str, np.ndarray]:
        return {"e": self.e, "alpha": self.alpha, "C": self.C, "U": self.U,
                "H": self.H, "Sigma": self.Sigma}

    def pack(self) -> np.ndarray:
        return FieldIndexMap(self.n).pack(self.parts(), self.grid_shape)

    @classmethod
    def from_packed(cls, t: float, vector: np.ndarray, n: int) -> "RescaledState":
        parts = FieldIndexMap(n).unpack(vector)
        return cls(t=t, **{name: np.array(value) for name, value in parts.items()})

    def copy(self) -> "RescaledState":
        return replace(self, **{name: np.array(value, copy=True)
                                for name, value in self.parts().items()})

    def check_positive(self) -> None:
        if self.t <= 0.0:
            raise StateError(f"t = {self.t} ≤ 0")
        if np.any(~np.isfinite(self.alpha)) or np.any(self.alpha <= 0.0):
            raise StateError("α ≤ 0 или не конечна в части точек")

    def project(self) -> Tuple["RescaledState", float]:
        sigma = stf(self.Sigma)
        c = antisym_outer(self.C)
        distance = max(float(np.abs(sigma - self.Sigma).max(initial=0.0)),
                       float(np.abs(c - self.C).max(initial=0.0)))
        return replace(self, Sigma=sigma, C=c), distance


def _shifts(kd: KasnerData, ndim_grid: int) -> Tuple[float, np.ndarray]:
    n = kd.n
    c_h = kd.r0 / (2.0 * (n - 1))
    s = np.diag(kd.r / 2.0 - c_h)
    return c_h, s.reshape(s.shape + (1,) * ndim_grid)


def rescale(s: FrameState, gp: GaugeParams, kd: KasnerData) -> RescaledState:
    """Переход от тетрадных полей к перемасштабированным"""
    s.check_positive()
    t = s.t
    scale = t * s.alphatilde
    c_h, shift = _shifts(kd, s.Htilde.ndim)
    return RescaledState(
        t=t,
        e=t ** gp.eps2 * s.alphatilde[None, None] * s.etilde,
        alpha=t ** gp.eps1 * s.alphatilde,
        C=scale * s.Ctilde,
        U=scale[None] * s.Utilde,
        H=scale * s.Htilde - c_h,
        Sigma=scale[None, None] * s.Sigmatilde - shift,
    )


def unrescale(w: RescaledState, gp: GaugeParams, kd: KasnerData) -> FrameState:
    w.check_positive()
    t = w.t
    alphatilde = t ** (-gp.eps1) * w.alpha
    scale = t * alphatilde
    c_h, shift = _shifts(kd, w.H.ndim)
    return FrameState(
        t=t,
        etilde=t ** (-gp.eps2) * w.e / alphatilde[None, None],
        alphatilde=alphatilde,
        Ctilde=w.C / scale,
        Utilde=w.U / scale[None],
        Htilde=(w.H + c_h) / scale,
        Sigmatilde=(w.Sigma + shift) / scale[None, None],
    )


def _rescaled_derivative(w: RescaledState, field_: np.ndarray, grid: TorusGrid,
                         gp: GaugeParams) -> np.ndarray:
    """t^{1−eps2} e_D(X)"""
    return w.t ** (1.0 - gp.eps2) * frame_derivative(w.e, field_, grid)


def momentum_constraint(w: RescaledState, grid: TorusGrid, gp: GaugeParams,
                        kd: KasnerData) -> np.ndarray:
    n = w.n
    r = kd.r
    kappa0 = 1.0 + kd.r0 / 2.0
    d_sigma = _rescaled_derivative(w, w.Sigma, grid, gp)
    d_h = _rescaled_derivative(w, w.H, grid, gp)
    shape = (-1,) + (1,) * w.H.ndim
    trC = np.einsum("abb...->a...", w.C)
    return (np.einsum("bab...->a...", d_sigma) - (n - 2) * d_h
            + (kappa0 - r.reshape(shape) / 2.0) * w.U
            + 0.5 * np.einsum("b,abb...->a...", r, w.C)
            - 0.5 * r.reshape(shape) * trC
            - np.einsum("ab...,b...->a...", w.Sigma, w.U)
            + (n - 2) * w.H[None] * w.U
            + np.einsum("abc...,bc...->a...", w.C, w.Sigma)
            - np.einsum("b...,ab...->a...", trC, w.Sigma))


def hamiltonian_constraint(w: RescaledState, grid: TorusGrid, gp: GaugeParams,
                           kd: KasnerData) -> np.ndarray:
    n = w.n
    trC = np.einsum("abb...->a...", w.C)
    d_trc = _rescaled_derivative(w, trC, grid, gp)
    H, C = w.H, w.C
    return (2.0 * np.einsum("aa...->...", d_trc)
            + (n - 1) * (n - 2) * H ** 2 + (n - 2) * kd.r0 * H + 2.0 * (n - 1) * H
            - np.einsum("a,aa...->...", kd.r, w.Sigma)
            - np.einsum("ab...,ab...->...", w.Sigma, w.Sigma)
            - 2.0 * np.einsum("a...,a...->...", w.U, trC)
            - np.einsum("a...,a...->...", trC, trC)
            - 0.25 * np.einsum("abc...,abc...->...", C,
                               C + np.swapaxes(C, 0, 1) + np.swapaxes(C, 1, 2)))


def rescaled_constraints(w: RescaledState, grid: TorusGrid, gp: GaugeParams,
                         kd: KasnerData) -> ConstraintResiduals:
    """Невязки 𝔄f, 𝔅f, ℭf, 𝔇f, 𝔐f, ℌf в перемасштабированных переменных"""
    e, U, C = w.e, w.U, w.C
    d_e = _rescaled_derivative(w, e, grid, gp)
    d_u = _rescaled_derivative(w, U, grid, gp)
    d_c = _rescaled_derivative(w, C, grid, gp)
    d_alpha = _rescaled_derivative(w, w.alpha, grid, gp)

    resid_a = (d_e - np.swapaxes(d_e, 0, 1)
               - (np.einsum("a...,bw...->abw...", U, e) - np.einsum("b...,aw...->abw...", U, e))
               - np.einsum("acb...,cw...->abw...", C, e))
    resid_b = (d_u - np.swapaxes(d_u, 0, 1)
               - (np.einsum("a...,b...->ab...", U, U) - np.einsum("b...,a...->ab...", U, U))
               - np.einsum("acb...,c...->ab...", C, U))
    resid_c = (np.einsum("cadb...->abcd...", d_c) + np.einsum("abdc...->abcd...", d_c)
               + np.einsum("bcda...->abcd...", d_c)
               + np.einsum("aeb...,cde...->abcd...", C, C)
               + np.einsum("bec...,ade...->abcd...", C, C)
               + np.einsum("cea...,bde...->abcd...", C, C))
    resid_d = w.alpha[None] * U - d_alpha
    return ConstraintResiduals(A=resid_a, B=resid_b, C=resid_c, D=resid_d,
                               M=momentum_constraint(w, grid, gp, kd),
                               H=hamiltonian_constraint(w, grid, gp, kd))


def rhs_base(w: RescaledState, grid: TorusGrid, gp: GaugeParams, kd: KasnerData) -> RescaledState:
    """Правые части перемасштабированной системы

    Нелинейные члены получаются точным преобразованием тетрадной системы:
    производные ẽ_D(α̃) заменяются на α̃Ũ_D, к уравнению для ℋ добавлено
    −ℌf/((n−1)t).
    """
    w.check_positive()
    t, n = w.t, w.n
    fs = unrescale(w, gp, kd)
    c_h, shift = _shifts(kd, w.H.ndim)
    alphatilde = fs.alphatilde
    inv = t ** (-gp.eps2) / (t * alphatilde ** 2)

    def tilde_derivative(full, tilde):
        dfull = frame_derivative(w.e, full, grid)
        extra = tilde.ndim - w.H.ndim
        u = fs.Utilde.reshape((fs.d,) + (1,) * extra + fs.grid_shape)
        return inv * dfull - tilde[None] * u

    dv = FrameDerivatives(
        H=tilde_derivative(w.H + c_h, fs.Htilde),
        Sigma=tilde_derivative(w.Sigma + shift, fs.Sigmatilde),
        C=tilde_derivative(w.C, fs.Ctilde),
        U=tilde_derivative(w.U, fs.Utilde),
    )
    rates = evolution_kernel(fs, dv)

    d_alphatilde = rates.alphatilde
    factor = alphatilde + t * d_alphatilde

    def chain(tilde, d_tilde):
        return factor * tilde + t * alphatilde * d_tilde

    de = (gp.eps2 * w.e / t
          + t ** gp.eps2 * (d_alphatilde[None, None] * fs.etilde + alphatilde[None, None] * rates.etilde))
    dalpha = gp.eps1 * w.alpha / t + t ** gp.eps1 * d_alphatilde
    dH = chain(fs.Htilde, rates.Htilde) - hamiltonian_constraint(w, grid, gp, kd) / ((n - 1) * t)
    return RescaledState(
        t=t, e=de, alpha=dalpha,
        C=chain(fs.Ctilde, rates.Ctilde),
        U=chain(fs.Utilde, rates.Utilde),
        H=dH,
        Sigma=chain(fs.Sigmatilde, rates.Sigmatilde),
    )


def rhs_modified(w: RescaledState, grid: TorusGrid, gp: GaugeParams,
                 kd: KasnerData) -> RescaledState:
    """rhs_base с добавками (μ/t)𝔐f_[A δ_C]B в C и (γ/t)𝔐f_A в U"""
    rates = rhs_base(w, grid, gp, kd)
    if gp.mu == 0.0 and gp.gamma == 0.0:
        return rates
    M = momentum_constraint(w, grid, gp, kd)
    t = w.t
    if gp.mu != 0.0:
        x = np.einsum("a...,bm->amb...", M, np.eye(w.d))
        rates.C = rates.C + gp.mu / t * antisym_outer(x)
    rates.U = rates.U + gp.gamma / t * M
    return rates


@dataclass
class HierarchyState:
    """Уровни W_b = t^{|b|ν}∂^b W для |b| ≤ k; верхние уровни умножены на V⁻¹

    data[j] соответствует мультииндексу levels[j], форма (L, N, *grid).
    """
    t: float
    levels: List[Tuple[int, ...]]
    data: np.ndarray
    n: int
    k_order: int

    def level(self, b: Tuple[int, ...]) -> np.ndarray:
        return self.data[self.levels.index(tuple(b))]

    def base(self) -> RescaledState:
        return RescaledState.from_packed(self.t, self.data[0], self.n)

    def with_data(self, t: float, data: np.ndarray) -> "HierarchyState":
        return replace(self, t=t, data=data)


def hierarchy_levels(grid: TorusGrid, k_order: int) -> List[Tuple[int, ...]]:
    """Мультииндексы |b| ≤ k по активным осям сетки"""
    active = set(grid.active_axes)
    return [b for b in multi_indices_upto(grid.n_spatial, k_order)
            if all(count == 0 or axis in active for axis, count in enumerate(b))]


def _apply(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    return np.einsum("ij,j...->i...", matrix, vector)


def build_hierarchy(w: RescaledState, gp: GaugeParams, grid: TorusGrid,
                    sym: "SymmetrizerSet") -> HierarchyState:
    """Построение иерархии производных по уровню 0"""
    k = gp.k_order
    if k < 1:
        raise GaugeError([f"Иерархии нужен k_order ≥ 1, получено {k}"])
    if k > grid.max_derivative_order:
        logger.warning(f"k_order={k} превышает допустимый для сетки порядок "
                       f"{grid.max_derivative_order}, старшие уровни близки к шуму")
    base = w.pack()
    levels = hierarchy_levels(grid, k)
    data = np.empty((len(levels),) + base.shape)
    for j, b in enumerate(levels):
        order = sum(b)
        value = w.t ** (order * gp.nu) * derivative_multi(base, b, grid)
        if order == k:
            value = _apply(sym.Vinv, value)
        data[j] = value
    top = [j for j, b in enumerate(levels) if sum(b) == k]
    noise = max(top_mode_fraction(data[j], grid) for j in top)
    if noise > 1e-2:
        logger.warning(f"Доля верхних мод на уровне |b|={k}: {noise:.2e}")
    return HierarchyState(t=w.t, levels=levels, data=data, n=w.n, k_order=k)


def _transport(matrices: np.ndarray, e: np.ndarray, field_: np.ndarray,
               grid: TorusGrid) -> np.ndarray:
    """Σ_D M_D e_D^Λ ∂_Λ(field)"""
    grad = np.stack([derivative_multi(field_, _unit(grid.n_spatial, lam), grid)
                     for lam in range(grid.n_spatial)])
    total = np.zeros_like(field_)
    for D, matrix in enumerate(matrices):
        total += _apply(matrix, np.einsum("l...,li...->i...", e[D], grad))
    return total


def hierarchy_remainder(w: RescaledState, b: Tuple[int, ...], grid: TorusGrid, gp: GaugeParams,
                        kd: KasnerData, sym: "SymmetrizerSet",
                        rates: Optional[np.ndarray] = None) -> np.ndarray:
    """Остаток R_b верхнего уровня, вычисленный только по уровню 0

    R_b = t^{|b|ν}(∂^b N(W) + ∂^b(PW) − P∂^bW), где PW = −t^{−eps2}e_D^Λ A^D ∂_ΛW
    главная часть, а N(W) = F(W) − PW − 𝒜W/t содержит нелинейные члены.
    """
    t = w.t
    W = w.pack()
    if rates is None:
        rates = rhs_modified(w, grid, gp, kd).pack()
    principal = -t ** (-gp.eps2) * _transport(sym.A, w.e, W, grid)
    nonlinear = rates - principal - _apply(sym.Acal, W) / t
    commutator = derivative_multi(principal, b, grid) \
        + t ** (-gp.eps2) * _transport(sym.A, w.e, derivative_multi(W, b, grid), grid)
    return t ** (sum(b) * gp.nu) * (derivative_multi(nonlinear, b, grid) + commutator)


def hierarchy_rhs(hs: HierarchyState, grid: TorusGrid, gp: GaugeParams, kd: KasnerData,
                  sym: "SymmetrizerSet") -> HierarchyState:
    """Производные по t всех уровней иерархии

    Нижние уровни: |b|ν/t·W_b + t^{|b|ν}∂^b F, где F из rhs_modified, как в step.
    Верхний уровень W̃ эволюционирует в симметризованной форме
    B⁰∂_tW̃ = −t^{−eps2}e_D^Λ B^D ∂_ΛW̃ + ℬ_sW̃/t + 𝒮R, остаток R берётся из уровня 0 (hierarchy_remainder).
    """
    t, k, nu = hs.t, hs.k_order, gp.nu
    w = hs.base()
    base_rates = rhs_modified(w, grid, gp, kd).pack()
    B0_inv = scipy.linalg.inv(sym.B0)
    out = np.empty_like(hs.data)
    for j, b in enumerate(hs.levels):
        order = sum(b)
        if order < k:
            out[j] = order * nu / t * hs.data[j] \
                + t ** (order * nu) * derivative_multi(base_rates, b, grid)
            continue
        w_tilde = hs.data[j]
        R = hierarchy_remainder(w, b, grid, gp, kd, sym, rates=base_rates)
        total = (-t ** (-gp.eps2) * _transport(sym.BD, w.e, w_tilde, grid)
                 + _apply(sym.Bs, w_tilde) / t + _apply(sym.Scal, R))
        out[j] = _apply(B0_inv, total)
    return hs.with_data(t, out)


def _unit(n_spatial: int, axis: int) -> Tuple[int, ...]:
    b = [0] * n_spatial
    b[axis] = 1
    return tuple(b)
