"""
Фоны Казнера со скалярным полем: показатели, соотношения, субкритичность,
точные фоновые состояния в тетрадных и перемасштабированных переменных
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import GaugeError, KasnerError, StateError

logger = logging.getLogger(__name__)

RELATION_TOL = 1e-12


def constant_field(values, shape: Tuple[int, ...]) -> np.ndarray:
    """Размножение компонент по точкам сетки (компоненты впереди, сетка в конце)"""
    values = np.asarray(values, dtype=float)
    expanded = values.reshape(values.shape + (1,) * len(shape))
    return np.broadcast_to(expanded, values.shape + tuple(shape)).copy()


@dataclass(frozen=True)
class KasnerData:
    """Данные фона Казнера со скалярным полем

    Args:
        n: Размерность пространства-времени (n ≥ 4)
        q: Показатели Казнера q_Λ (n−1 штук)
        P: Параметр амплитуды скалярного поля
        r0: Конформный показатель времени
        r: Конформные показатели Казнера r_Λ
    """
    n: int
    q: np.ndarray
    P: float
    r0: float
    r: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        """Число пространственных измерений"""
        return self.n - 1

    @property
    def r_matrix(self) -> np.ndarray:
        return np.diag(self.r)

    def residuals(self) -> Dict[str, float]:
        """Невязки соотношений Казнера в обеих формах"""
        return {
            "sum_q": float(abs(self.q.sum() - 1.0)),
            "sum_q2": float(abs((self.q ** 2).sum() - (1.0 - 2.0 * self.P ** 2))),
            "sum_r": float(abs(self.r.sum() - self.r0)),
            "sum_r2": float(abs((self.r ** 2).sum() - ((self.r0 + 2.0) ** 2 - 4.0))),
        }

    def is_flrw(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.r) < tol))

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "q": [float(v) for v in self.q],
            "P": float(self.P),
            "r0": float(self.r0),
            "r": [float(v) for v in self.r],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "KasnerData":
        """Восстановление из JSON; показатели пересчитываются из q и сверяются"""
        kd = kasner_from_q(int(data["n"]), data["q"])
        for key in ("P", "r0"):
            if key in data and abs(float(data[key]) - getattr(kd, key)) > 1e-10:
                raise KasnerError(f"Поле {key} не согласовано с q", key,
                                  abs(float(data[key]) - getattr(kd, key)))
        return kd


def _scale(n: int) -> float:
    return float(np.sqrt(2.0 * (n - 1) / (n - 2)))


def p_max(n: int) -> float:
    """Верхняя граница параметра P"""
    return float(np.sqrt((n - 2) / (2.0 * (n - 1))))


def kasner_from_q(n: int, q) -> KasnerData:
    """Построение данных Казнера по показателям q

    Args:
        n: Размерность пространства-времени
        q: Показатели Казнера

    Returns:
        KasnerData с вычисленными P, r0, r
    """
    q = np.asarray(q, dtype=float)
    if n < 4:
        raise KasnerError(f"Размерность n={n} меньше 4")
    if q.shape != (n - 1,):
        raise KasnerError(f"Ожидалось {n - 1} показателей, получено {q.size}",
                          "dimension", float(abs(q.size - (n - 1))))

    sum_q = q.sum()
    if abs(sum_q - 1.0) > RELATION_TOL:
        raise KasnerError("Сумма показателей не равна 1", "sum q = 1", float(abs(sum_q - 1.0)))

    p2 = (1.0 - (q ** 2).sum()) / 2.0
    if p2 <= 0.0:
        raise KasnerError("P² = (1 − Σq²)/2 не положителен", "P > 0", float(p2))
    P = float(np.sqrt(p2))
    if P > p_max(n) + RELATION_TOL:
        raise KasnerError("P вне допустимого диапазона", "P ≤ √((n−2)/(2(n−1)))",
                          P - p_max(n))

    scale = _scale(n)
    r0 = scale / P - 2.0 * (n - 1) / (n - 2)
    r = scale * q / P - 2.0 / (n - 2)
    # изотропный случай даёт r0 порядка −1e−16
    if abs(r0) < RELATION_TOL:
        r0 = 0.0
    r = np.where(np.abs(r) < RELATION_TOL, 0.0, r)

    kd = KasnerData(n=n, q=q.copy(), P=P, r0=float(r0), r=r)
    res = kd.residuals()
    if res["sum_r"] > RELATION_TOL or res["sum_r2"] > 10 * RELATION_TOL * max(1.0, (r0 + 2.0) ** 2):
        raise KasnerError("Нарушены соотношения для конформных показателей",
                          "sum r", max(res["sum_r"], res["sum_r2"]))
    if np.any(r >= r0 + 2.0):
        raise KasnerError("Нарушено r_Λ < r0 + 2", "r < r0 + 2", float(np.max(r - r0 - 2.0)))
    logger.debug(f"Фон Казнера n={n}: P={P:.6f}, r0={r0:.6f}")
    return kd


def q_from_r(n: int, r0: float, r) -> np.ndarray:
    """Обращение формулы для конформных показателей"""
    r = np.asarray(r, dtype=float)
    P = _scale(n) / (r0 + 2.0 * (n - 1) / (n - 2))
    return (r + 2.0 / (n - 2)) * P / _scale(n)


def check_subcritical(k: KasnerData, allow_coincident: bool = False) -> Tuple[bool, float]:
    """Проверка субкритического условия перебором троек индексов

    Args:
        k: Данные Казнера
        allow_coincident: Разрешить Γ ∈ {Ω, Λ}

    Returns:
        (выполнено ли условие, запас (r0 + 2) − max)
    """
    d = k.d
    worst = -np.inf
    for omega, lam in itertools.combinations(range(d), 2):
        for gamma in range(d):
            if not allow_coincident and gamma in (omega, lam):
                continue
            worst = max(worst, k.r[omega] + k.r[lam] - k.r[gamma])
    if worst == -np.inf:
        worst = 0.0
    margin = float(k.r0 + 2.0 - worst)
    return margin > 0.0, margin


def sample_subcritical(n: int, rng: np.random.Generator, spread: float = 0.3,
                       max_tries: int = 10000) -> KasnerData:
    """Случайный субкритический фон (отбор с отклонением)"""
    for _ in range(max_tries):
        x = rng.uniform(-spread, 1.0, n - 1)
        total = x.sum()
        if total <= 1e-3:
            continue
        q = x / total
        q[-1] = 1.0 - q[:-1].sum()
        try:
            kd = kasner_from_q(n, q)
        except KasnerError:
            continue
        if check_subcritical(kd)[0]:
            return kd
    raise KasnerError(f"Не найден субкритический фон за {max_tries} попыток")


def check_exponent_conditions(k: KasnerData, eps1: float, eps2: float,
                              nu: Optional[float] = None) -> List[str]:
    """Список нарушенных условий на показатели перемасштабирования"""
    violations = []
    if eps1 + k.r0 / 2.0 <= 0.0:
        violations.append(f"eps1 + r0/2 = {eps1 + k.r0 / 2.0:.6g} ≤ 0")
    if not 0.0 < eps2 < 1.0:
        violations.append(f"eps2 = {eps2:.6g} вне (0, 1)")
    for a, r_a in enumerate(k.r):
        value = eps2 + k.r0 / 2.0 - r_a / 2.0
        if value <= 0.0:
            violations.append(f"eps2 + r0/2 − r_{a + 1}/2 = {value:.6g} ≤ 0 (r_{a + 1} = {r_a:.6g})")
    if nu is not None:
        if nu <= 0.0:
            violations.append(f"nu = {nu:.6g} ≤ 0")
        if eps2 + nu >= 1.0:
            violations.append(f"eps2 + nu = {eps2 + nu:.6g} ≥ 1")
    return violations


def background_rescaled(k: KasnerData, eps1: float, eps2: float, t: float,
                        shape: Tuple[int, ...] = ()):
    """Фон Казнера в перемасштабированных переменных

    Returns:
        RescaledState: α = t^{eps1+r0/2}, e = t^{eps2+r0/2−r_A/2}δ, остальные поля 0
    """
    from fuchsian import RescaledState

    if t <= 0.0:
        raise StateError(f"t = {t} ≤ 0")
    violations = check_exponent_conditions(k, eps1, eps2)
    if violations:
        raise GaugeError(violations)

    d = k.d
    e_diag = t ** (eps2 + k.r0 / 2.0 - k.r / 2.0)
    return RescaledState(
        t=t,
        e=constant_field(np.diag(e_diag), shape),
        alpha=constant_field(t ** (eps1 + k.r0 / 2.0), shape),
        C=np.zeros((d, d, d) + tuple(shape)),
        U=np.zeros((d,) + tuple(shape)),
        H=np.zeros(tuple(shape)),
        Sigma=np.zeros((d, d) + tuple(shape)),
    )


def background_frame(k: KasnerData, t: float, shape: Tuple[int, ...] = ()):
    """Точное тетрадное решение Казнера со скалярным полем"""
    from frame import FrameState

    if t <= 0.0:
        raise StateError(f"t = {t} ≤ 0")
    n, d = k.n, k.d
    c_h = k.r0 / (2.0 * (n - 1))
    s_diag = k.r / 2.0 - c_h
    decay = t ** (-k.r0 / 2.0 - 1.0)
    return FrameState(
        t=t,
        etilde=constant_field(np.diag(t ** (-k.r / 2.0)), shape),
        alphatilde=constant_field(t ** (k.r0 / 2.0), shape),
        Ctilde=np.zeros((d, d, d) + tuple(shape)),
        Utilde=np.zeros((d,) + tuple(shape)),
        Htilde=constant_field(c_h * decay, shape),
        Sigmatilde=constant_field(np.diag(s_diag) * decay, shape),
    )
