"""
Тетрадные переменные: эволюционные уравнения, связи и кривизна
по коэффициентам связности
"""
import logging
from dataclasses import dataclass, fields, replace
from typing import Dict, Optional, Tuple

import numpy as np

from discretization import TorusGrid, frame_derivative
from errors import StateError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12


def eye_field(d: int, ndim_grid: int) -> np.ndarray:
    return np.eye(d).reshape((d, d) + (1,) * ndim_grid)


def stf(tensor: np.ndarray) -> np.ndarray:
    """Симметричная бесследовая часть по первым двум индексам"""
    d = tensor.shape[0]
    sym = 0.5 * (tensor + np.swapaxes(tensor, 0, 1))
    trace = np.einsum("aa...->...", sym)
    return sym - trace[None, None] * eye_field(d, tensor.ndim - 2) / d


def antisym_outer(tensor: np.ndarray) -> np.ndarray:
    """X_[A|M|B] по внешним индексам"""
    return 0.5 * (tensor - np.swapaxes(tensor, 0, 2))


@dataclass
class FrameState:
    """Тетрадные поля (ẽ, α̃, C̃, Ũ, H̃, Σ̃) на сетке в момент t

    Компоненты идут первыми осями, точки сетки последними.
    C̃[A, M, B] = C̃_A^M_B, антисимметричен по A, B.
    """
    t: float
    etilde: np.ndarray
    alphatilde: np.ndarray
    Ctilde: np.ndarray
    Utilde: np.ndarray
    Htilde: np.ndarray
    Sigmatilde: np.ndarray

    @property
    def d(self) -> int:
        return self.Utilde.shape[0]

    @property
    def n(self) -> int:
        return self.d + 1

    @property
    def grid_shape(self) -> Tuple[int, ...]:
        return self.Htilde.shape

    def copy(self) -> "FrameState":
        return replace(self, **{f.name: np.array(getattr(self, f.name), copy=True)
                                for f in fields(self) if f.name != "t"})

    def check_positive(self) -> None:
        if self.t <= 0.0:
            raise StateError(f"t = {self.t} ≤ 0")
        if np.any(~np.isfinite(self.alphatilde)) or np.any(self.alphatilde <= 0.0):
            raise StateError("α̃ ≤ 0 или не конечна в части точек")

    def validate(self) -> None:
        """Полная проверка инвариантов состояния"""
        self.check_positive()
        scale = max(1.0, float(np.abs(self.Sigmatilde).max(initial=0.0)))
        asym = np.abs(self.Sigmatilde - np.swapaxes(self.Sigmatilde, 0, 1)).max(initial=0.0)
        trace = np.abs(np.einsum("aa...->...", self.Sigmatilde)).max(initial=0.0)
        if asym > SYMMETRY_TOL * scale or trace > SYMMETRY_TOL * scale:
            raise StateError(f"Σ̃ не симметрична/не бесследова: {asym:.2e}, {trace:.2e}")
        c_scale = max(1.0, float(np.abs(self.Ctilde).max(initial=0.0)))
        c_sym = np.abs(self.Ctilde + np.swapaxes(self.Ctilde, 0, 2)).max(initial=0.0)
        if c_sym > SYMMETRY_TOL * c_scale:
            raise StateError(f"C̃ не антисимметричен по внешним индексам: {c_sym:.2e}")
        det = np.linalg.det(np.moveaxis(self.etilde, (0, 1), (-2, -1)))
        if np.any(det <= 0.0):
            raise StateError("det(ẽ) ≤ 0 в части точек")

    def project(self) -> Tuple["FrameState", float]:
        """Проекция Σ̃ на симметричные бесследовые, C̃ на антисимметричные тензоры"""
        sigma = stf(self.Sigmatilde)
        c = antisym_outer(self.Ctilde)
        distance = max(float(np.abs(sigma - self.Sigmatilde).max(initial=0.0)),
                       float(np.abs(c - self.Ctilde).max(initial=0.0)))
        return replace(self, Sigmatilde=sigma, Ctilde=c), distance


@dataclass
class FrameDerivatives:
    """Производные ẽ_D(X) полей связности; первая ось D"""
    H: np.ndarray
    Sigma: np.ndarray
    C: np.ndarray
    U: np.ndarray


@dataclass
class ConnectionCurvature:
    omega: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray


@dataclass
class ConstraintResiduals:
    """Невязки связей 𝔄, 𝔅, ℭ, 𝔇, 𝔐, ℌ"""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    M: np.ndarray
    H: np.ndarray

    NAMES = ("A", "B", "C", "D", "M", "H")

    def norms(self, mask: Optional[np.ndarray] = None) -> Dict[str, float]:
        """Максимум модуля каждой невязки (по маске, если задана)"""
        result = {}
        for name in self.NAMES:
            values = np.abs(getattr(self, name))
            if mask is not None:
                values = values[..., mask]
            result[name] = float(values.max(initial=0.0))
        return result

    def max_norm(self, mask: Optional[np.ndarray] = None) -> float:
        return max(self.norms(mask).values())


def direct_derivatives(s: FrameState, grid: TorusGrid) -> FrameDerivatives:
    e = s.etilde
    return FrameDerivatives(
        H=frame_derivative(e, s.Htilde, grid),
        Sigma=frame_derivative(e, s.Sigmatilde, grid),
        C=frame_derivative(e, s.Ctilde, grid),
        U=frame_derivative(e, s.Utilde, grid),
    )


def connection(U: np.ndarray, H: np.ndarray, Sigma: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Коэффициенты связности ω_abc ортонормированного репера"""
    d = U.shape[0]
    n = d + 1
    grid_shape = H.shape
    omega = np.zeros((n, n, n) + grid_shape)
    K = H[None, None] * eye_field(d, len(grid_shape)) + Sigma
    omega[0, 1:, 0] = U
    omega[0, 0, 1:] = -U
    omega[1:, 0, 1:] = -K
    omega[1:, 1:, 0] = K
    omega[1:, 1:, 1:] = 0.5 * (np.swapaxes(C, 0, 1) - np.swapaxes(C, 0, 2) - np.swapaxes(C, 1, 2))
    return omega


def riemann(omega: np.ndarray, domega: np.ndarray) -> np.ndarray:
    """R_abcd по связности; domega[a, b, c, d] = e_a(ω_bcd)"""
    n = omega.shape[0]
    eta = np.ones(n)
    eta[0] = -1.0
    R = domega - np.swapaxes(domega, 0, 1)
    R = R + np.einsum("bfc...,afd...,f->abcd...", omega, omega, eta)
    R = R + np.einsum("bfa...,fcd...,f->abcd...", omega, omega, eta)
    R = R - np.einsum("afc...,bfd...,f->abcd...", omega, omega, eta)
    R = R - np.einsum("afb...,fcd...,f->abcd...", omega, omega, eta)
    return R


def ricci(R: np.ndarray) -> np.ndarray:
    n = R.shape[0]
    eta = np.ones(n)
    eta[0] = -1.0
    return np.einsum("abcb...,b->ac...", R, eta)


def _spatial_domega(dv: FrameDerivatives, n: int) -> np.ndarray:
    d = n - 1
    grid_shape = dv.H.shape[1:]
    domega = np.zeros((n, n, n, n) + grid_shape)
    for D in range(d):
        domega[D + 1] = connection(dv.U[D], dv.H[D], dv.Sigma[D], dv.C[D])
    return domega


def evolution_kernel(s: FrameState, dv: FrameDerivatives) -> FrameState:
    """Правые части тетрадной системы при заданных производных вдоль репера

    Уравнения для H̃ и Σ̃ получаются из тензора Римана: компоненты Риччи
    R̃_00 и R̃_⟨AB⟩ приравниваются к их значениям на решениях,
    −(n−1)H̃/(α̃t) и −Σ̃/(α̃t).
    """
    t, n, d = s.t, s.n, s.d
    alpha, H, Sigma, C, U, e = (s.alphatilde, s.Htilde, s.Sigmatilde, s.Ctilde,
                                s.Utilde, s.etilde)
    eye = np.eye(d)
    K = H[None, None] * eye_field(d, H.ndim) + Sigma

    de = -alpha[None, None] * np.einsum("ab...,bw...->aw...", K, e)
    dalpha = (n - 1) * H * alpha ** 2
    dU = ((n - 1) * alpha[None] * dv.H + (n - 2) * (alpha * H)[None] * U
          - alpha[None] * np.einsum("ab...,b...->a...", Sigma, U))

    def anti(x):
        return x - np.swapaxes(x, 0, 2)

    x1 = np.einsum("a...,bm->amb...", dv.H, eye)
    x2 = np.swapaxes(dv.Sigma, 1, 2)
    x3 = np.einsum("a...,bm->amb...", U, eye)
    x4 = np.einsum("a...,bm...->amb...", U, Sigma)
    x5 = np.einsum("ad...,bmd...->amb...", Sigma, C)
    dC = (-alpha * (anti(x1) + anti(x2) + anti(x4))
          - alpha * H * anti(x3)
          - alpha * H * C
          + alpha * anti(x5)
          + alpha * np.einsum("adb...,dm...->amb...", C, Sigma))

    omega = connection(U, H, Sigma, C)
    ric = ricci(riemann(omega, _spatial_domega(dv, n)))
    dH = H / t + alpha * ric[0, 0] / (n - 1)
    dSigma = -Sigma / t - alpha[None, None] * stf(ric[1:, 1:])

    return FrameState(t=t, etilde=de, alphatilde=dalpha, Ctilde=dC, Utilde=dU,
                      Htilde=dH, Sigmatilde=dSigma)


def frame_rhs(s: FrameState, grid: TorusGrid) -> FrameState:
    """Производные по t всех тетрадных полей"""
    s.check_positive()
    return evolution_kernel(s, direct_derivatives(s, grid))


def frame_constraints(s: FrameState, grid: TorusGrid) -> ConstraintResiduals:
    """Невязки всех связей тетрадной формулировки"""
    s.check_positive()
    t, n = s.t, s.n
    alpha, H, Sigma, C, U, e = (s.alphatilde, s.Htilde, s.Sigmatilde, s.Ctilde,
                                s.Utilde, s.etilde)
    dv = direct_derivatives(s, grid)
    de = frame_derivative(e, e, grid)
    dalpha = frame_derivative(e, alpha, grid)
    trC = np.einsum("abb...->a...", C)

    resid_a = de - np.swapaxes(de, 0, 1) - np.einsum("acb...,cw...->abw...", C, e)
    resid_b = dv.U - np.swapaxes(dv.U, 0, 1) - np.einsum("acb...,c...->ab...", C, U)
    resid_c = (np.einsum("cadb...->abcd...", dv.C) + np.einsum("abdc...->abcd...", dv.C)
               + np.einsum("bcda...->abcd...", dv.C)
               + np.einsum("aeb...,cde...->abcd...", C, C)
               + np.einsum("bec...,ade...->abcd...", C, C)
               + np.einsum("cea...,bde...->abcd...", C, C))
    resid_d = dalpha - alpha[None] * U
    resid_m = (np.einsum("bab...->a...", dv.Sigma) - (n - 2) * dv.H
               + np.einsum("abc...,bc...->a...", C, Sigma)
               - np.einsum("b...,ab...->a...", trC, Sigma)
               + U / (alpha * t)[None])
    div_trc = np.einsum("aabb...->...", dv.C)
    resid_h = (2.0 * div_trc + (n - 1) * (n - 2) * H ** 2
               - np.einsum("ab...,ab...->...", Sigma, Sigma)
               - np.einsum("a...,a...->...", trC, trC)
               - 0.25 * np.einsum("abc...,abc...->...", C,
                                  C + np.swapaxes(C, 0, 1) + np.swapaxes(C, 1, 2))
               + 2.0 * (n - 1) * H / (alpha * t))
    return ConstraintResiduals(A=resid_a, B=resid_b, C=resid_c, D=resid_d, M=resid_m, H=resid_h)


def curvature(s: FrameState, grid: TorusGrid) -> ConnectionCurvature:
    """Связность, тензоры Римана и Риччи, скалярная кривизна"""
    rates = frame_rhs(s, grid)
    dv = direct_derivatives(s, grid)
    omega = connection(s.Utilde, s.Htilde, s.Sigmatilde, s.Ctilde)
    domega = _spatial_domega(dv, s.n)
    # ẽ_0 = (1/α̃)∂_t, производные берутся из правых частей
    domega[0] = connection(rates.Utilde, rates.Htilde, rates.Sigmatilde, rates.Ctilde) / s.alphatilde
    R = riemann(omega, domega)
    ric = ricci(R)
    eta = np.ones(s.n)
    eta[0] = -1.0
    scalar = np.einsum("aa...,a->...", ric, eta)
    return ConnectionCurvature(omega=omega, riemann=R, ricci=ric, scalar=scalar)


def ricci_on_shell(s: FrameState) -> np.ndarray:
    """Компоненты R̃_ab, которые дают уравнения поля: (1/t)∇̃_a∇̃_b t"""
    n, d = s.n, s.d
    scale = 1.0 / (s.alphatilde * s.t)
    result = np.zeros((n, n) + s.grid_shape)
    result[0, 0] = -(n - 1) * s.Htilde * scale
    result[0, 1:] = -s.Utilde * scale
    result[1:, 0] = -s.Utilde * scale
    result[1:, 1:] = -(s.Htilde[None, None] * eye_field(d, s.Htilde.ndim) + s.Sigmatilde) * scale
    return result
