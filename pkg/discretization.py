"""
Периодические сетки на торе, спектральные и конечно-разностные производные,
усечённые конусы, маски, нормали к границе, мониторы пространственноподобности,
продолжение начальных данных и дискретные нормы Соболева
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from errors import GridError

logger = logging.getLogger(__name__)

# Коэффициенты центральных разностей: смещение -> вес
FD_STENCILS: Dict[int, Dict[int, float]] = {
    2: {1: 1.0 / 2.0},
    4: {1: 2.0 / 3.0, 2: -1.0 / 12.0},
    6: {1: 3.0 / 4.0, 2: -3.0 / 20.0, 3: 1.0 / 60.0},
    8: {1: 4.0 / 5.0, 2: -1.0 / 5.0, 3: 4.0 / 105.0, 4: -1.0 / 280.0},
}

MIN_ACTIVE_POINTS = 8


@dataclass(frozen=True)
class TorusGrid:
    """Равномерная сетка на торе [−L, L)^{n−1}

    Ось с одной точкой считается неактивной: поля от неё не зависят
    (режим с редукцией по симметрии).
    """
    n_spatial: int
    L: float
    dims: Tuple[int, ...]
    deriv_method: str = "spectral"
    fd_order: int = 4

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        if len(self.dims) != self.n_spatial:
            raise GridError(f"Число осей {len(self.dims)} ≠ n−1 = {self.n_spatial}")
        if self.L <= 0:
            raise GridError(f"Полупериод L = {self.L} ≤ 0")
        for axis, size in enumerate(self.dims):
            if size != 1 and size < MIN_ACTIVE_POINTS:
                raise GridError(f"Ось {axis}: {size} точек, нужно ≥ {MIN_ACTIVE_POINTS} или 1")
        if self.deriv_method not in ("spectral", "fd"):
            raise GridError(f"Неизвестный метод производных: {self.deriv_method}")
        if self.deriv_method == "fd" and self.fd_order not in FD_STENCILS:
            raise GridError(f"Порядок разностей {self.fd_order} не поддерживается")

    @classmethod
    def from_config(cls, n: int, cfg: Dict) -> "TorusGrid":
        dims = list(cfg.get("dims", [16] * (n - 1)))
        if cfg.get("symmetry_reduced"):
            dims = [dims[0]] + [1] * (n - 2)
        if len(dims) != n - 1:
            # короткий список дополняется последним значением
            dims = (dims + [dims[-1]] * (n - 1))[: n - 1]
        return cls(
            n_spatial=n - 1,
            L=float(cfg.get("L", 1.0)),
            dims=tuple(dims),
            deriv_method=cfg.get("deriv_method", "spectral"),
            fd_order=int(cfg.get("fd_order", 4)),
        )

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.dims

    @property
    def active_axes(self) -> List[int]:
        return [axis for axis, size in enumerate(self.dims) if size > 1]

    @property
    def symmetry_reduced(self) -> bool:
        return len(self.active_axes) < self.n_spatial

    @property
    def dx(self) -> Tuple[float, ...]:
        return tuple(2.0 * self.L / size for size in self.dims)

    @property
    def min_spacing(self) -> float:
        active = [self.dx[axis] for axis in self.active_axes]
        return min(active) if active else 2.0 * self.L

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @property
    def max_derivative_order(self) -> int:
        active = [self.dims[axis] for axis in self.active_axes]
        return min(active) // 4 if active else 64

    def coords(self, axis: int) -> np.ndarray:
        size = self.dims[axis]
        if size == 1:
            return np.zeros(1)
        return -self.L + 2.0 * self.L * np.arange(size) / size

    def mesh(self) -> np.ndarray:
        """Координаты всех точек, форма (n−1, *dims)"""
        return np.stack(np.meshgrid(*[self.coords(a) for a in range(self.n_spatial)],
                                    indexing="ij"))

    def radius(self) -> np.ndarray:
        return np.sqrt((self.mesh() ** 2).sum(axis=0))

    def wavenumbers(self, axis: int) -> np.ndarray:
        size = self.dims[axis]
        return 2.0 * np.pi * np.fft.fftfreq(size, d=self.dx[axis])

    def describe(self) -> Dict:
        return {
            "n_spatial": self.n_spatial,
            "L": self.L,
            "dims": list(self.dims),
            "deriv_method": self.deriv_method,
            "fd_order": self.fd_order,
            "symmetry_reduced": self.symmetry_reduced,
        }


def _grid_axis(field_: np.ndarray, axis: int, grid: TorusGrid) -> int:
    if not 0 <= axis < grid.n_spatial:
        raise GridError(f"Ось {axis} вне диапазона 0..{grid.n_spatial - 1}")
    if field_.shape[field_.ndim - grid.n_spatial:] != grid.shape:
        raise GridError(f"Форма поля {field_.shape} не согласована с сеткой {grid.shape}")
    return field_.ndim - grid.n_spatial + axis


def spatial_derivative(field_: np.ndarray, axis: int, grid: TorusGrid, order: int = 1) -> np.ndarray:
    """Периодическая производная по оси (сетка занимает последние оси массива)

    Args:
        field_: Поле с компонентами впереди
        axis: Пространственная ось
        grid: Сетка
        order: Порядок производной

    Returns:
        Производная той же формы
    """
    ax = _grid_axis(field_, axis, grid)
    if order == 0:
        return np.array(field_, dtype=float, copy=True)
    if grid.dims[axis] == 1:
        return np.zeros_like(field_, dtype=float)

    if grid.deriv_method == "spectral":
        size = grid.dims[axis]
        k = grid.wavenumbers(axis)
        if order % 2 == 1 and size % 2 == 0:
            # мода Найквиста не имеет вещественной нечётной производной
            k = k.copy()
            k[size // 2] = 0.0
        multiplier = (1j * k) ** order
        shape = [1] * field_.ndim
        shape[ax] = size
        spectrum = np.fft.fft(field_, axis=ax) * multiplier.reshape(shape)
        return np.real(np.fft.ifft(spectrum, axis=ax))

    result = np.asarray(field_, dtype=float)
    h = grid.dx[axis]
    for _ in range(order):
        derivative = np.zeros_like(result)
        for offset, weight in FD_STENCILS[grid.fd_order].items():
            derivative += weight * (np.roll(result, -offset, axis=ax) - np.roll(result, offset, axis=ax))
        result = derivative / h
    return result


def gradient(field_: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Все частные производные, форма (n−1, *field.shape)"""
    return np.stack([spatial_derivative(field_, axis, grid) for axis in range(grid.n_spatial)])


def multi_indices(n_spatial: int, order: int) -> List[Tuple[int, ...]]:
    """Мультииндексы b с |b| = order в лексикографическом порядке"""
    result = []
    for combo in itertools.combinations_with_replacement(range(n_spatial), order):
        b = [0] * n_spatial
        for axis in combo:
            b[axis] += 1
        result.append(tuple(b))
    return sorted(set(result), reverse=True)


def multi_indices_upto(n_spatial: int, order: int) -> List[Tuple[int, ...]]:
    return [b for k in range(order + 1) for b in multi_indices(n_spatial, k)]


def derivative_multi(field_: np.ndarray, b: Sequence[int], grid: TorusGrid) -> np.ndarray:
    """Смешанная производная ∂^b"""
    result = np.asarray(field_, dtype=float)
    for axis, count in enumerate(b):
        if count:
            result = spatial_derivative(result, axis, grid, order=count)
    return result


def frame_derivative(e: np.ndarray, field_: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Производная вдоль репера e_A = e_A^Ω ∂_Ω, форма (n−1, *field.shape)"""
    d = grid.n_spatial
    grad = gradient(field_, grid)
    comp_shape = field_.shape[: field_.ndim - d]
    flat = grad.reshape((d, -1) + grid.shape)
    result = np.einsum("aw...,wc...->ac...", e, flat)
    return result.reshape((e.shape[0],) + comp_shape + grid.shape)


def top_mode_fraction(field_: np.ndarray, grid: TorusGrid) -> float:
    """Доля спектральной энергии в верхней трети волновых чисел"""
    axes = [field_.ndim - grid.n_spatial + a for a in grid.active_axes]
    if not axes:
        return 0.0
    power = np.abs(np.fft.fftn(field_, axes=axes)) ** 2
    high = np.zeros(grid.shape, dtype=bool)
    for axis in grid.active_axes:
        freq = np.abs(np.fft.fftfreq(grid.dims[axis]) * grid.dims[axis])
        shape = [1] * grid.n_spatial
        shape[axis] = grid.dims[axis]
        high = high | (freq.reshape(shape) > grid.dims[axis] / 3.0)
    total = power.sum()
    if total == 0.0:
        return 0.0
    return float(power[..., high].sum() / total)


def ball_mask(grid: TorusGrid, radius: Optional[float]) -> np.ndarray:
    if radius is None:
        return np.ones(grid.shape, dtype=bool)
    return grid.radius() <= radius


def sobolev_norm(field_: np.ndarray, grid: TorusGrid, k: int, radius: Optional[float] = None) -> float:
    """Дискретная норма H^k (сумма по ячейкам), с маской шара при radius"""
    if k < 0 or k > grid.max_derivative_order:
        raise GridError(f"k = {k} превышает возможности сетки (≤ {grid.max_derivative_order})")
    mask = ball_mask(grid, radius)
    total = 0.0
    for b in multi_indices_upto(grid.n_spatial, k):
        values = derivative_multi(field_, b, grid)
        total += float((values ** 2 * mask).sum())
    return float(np.sqrt(total * grid.cell_volume))


def smooth_cutoff(r: np.ndarray, r_in: float, r_out: float) -> np.ndarray:
    """Гладкая срезка: 1 при r ≤ r_in, 0 при r ≥ r_out"""
    s = np.clip((np.asarray(r, dtype=float) - r_in) / (r_out - r_in), 0.0, 1.0)

    def psi(x):
        out = np.zeros_like(x)
        positive = x > 0
        out[positive] = np.exp(-1.0 / x[positive])
        return out

    inner, outer = psi(1.0 - s), psi(s)
    return inner / (inner + outer)


def extend_initial_data(field_: np.ndarray, grid: TorusGrid, rho0: float,
                        background=0.0) -> np.ndarray:
    """Продолжение данных с шара B_{rho0} на весь тор через гладкую срезку"""
    if not 0.0 < rho0 < grid.L:
        raise GridError(f"Шар радиуса {rho0} не помещается в тор с L = {grid.L}")
    phi = smooth_cutoff(grid.radius(), rho0, 0.5 * (rho0 + grid.L))
    background = np.asarray(background, dtype=float)
    return background + phi * (field_ - background)


def extension_constant(field_: np.ndarray, grid: TorusGrid, rho0: float, k: int,
                       background=0.0) -> float:
    """Эмпирическая константа C(k) в оценке ‖E(u)‖ ≤ C‖u‖"""
    background = np.broadcast_to(np.asarray(background, dtype=float), field_.shape)
    extended = extend_initial_data(field_, grid, rho0, background) - background
    inside = sobolev_norm(field_ - background, grid, k, radius=rho0)
    if inside == 0.0:
        return 0.0
    ratio = sobolev_norm(extended, grid, k) / inside
    logger.info(f"Константа продолжения C({k}) = {ratio:.4g} на сетке {grid.dims}")
    return ratio


@dataclass(frozen=True)
class ConeDomain:
    """Усечённый конус ρ(t) = rho1(t^{1−eps} − t0^{1−eps})/(1−eps) + rho0"""
    t0: float
    t1: float
    rho0: float
    rho1: float
    eps: float
    L: Optional[float] = None

    def __post_init__(self):
        violations = self.violations()
        if violations:
            raise GridError("; ".join(violations))

    def violations(self) -> List[str]:
        problems = []
        if not 0.0 <= self.t1 < self.t0:
            problems.append(f"нужно 0 ≤ t1 < t0, получено t1={self.t1}, t0={self.t0}")
        if not 0.0 < self.eps < 1.0:
            problems.append(f"eps = {self.eps} вне (0, 1)")
        if self.rho0 <= 0.0:
            problems.append(f"rho0 = {self.rho0} ≤ 0")
        if self.L is not None and self.rho0 >= self.L:
            problems.append(f"rho0 = {self.rho0} ≥ L = {self.L}")
        if self.rho1 <= 0.0:
            problems.append(f"rho1 = {self.rho1} ≤ 0")
        elif 0.0 < self.eps < 1.0:
            reach = self.rho0 - self.rho1 * self.t0 ** (1.0 - self.eps) / (1.0 - self.eps)
            if reach <= 0.0:
                problems.append(f"rho0 − rho1·t0^(1−eps)/(1−eps) = {reach:.4g} ≤ 0")
        return problems


def rho_of_t(cd: ConeDomain, t: float) -> float:
    """Радиус сечения конуса в момент t"""
    if t < cd.t1 or t > cd.t0 * (1.0 + 1e-14):
        raise GridError(f"t = {t} вне [{cd.t1}, {cd.t0}]")
    power = 1.0 - cd.eps
    return cd.rho1 * (t ** power - cd.t0 ** power) / power + cd.rho0


def boundary_normal(cd: ConeDomain, t: float, x) -> np.ndarray:
    """Внешняя конормаль n_μ к боковой границе конуса"""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise GridError("Нормаль не определена в x = 0")
    return np.concatenate([[-cd.rho1 * t ** (-cd.eps)], x / norm])


@dataclass
class MonitorReport:
    """Результаты мониторов пространственноподобности границы"""
    t: float
    sup_e: float
    sup_e_bound: float
    pb_value: float
    pb_bound: float
    quad_max: Optional[float] = None
    eig_max: Optional[float] = None
    points_checked: int = 0
    notes: List[str] = field(default_factory=list)

    @property
    def sup_e_ok(self) -> bool:
        return self.sup_e <= self.sup_e_bound

    @property
    def pb_ok(self) -> bool:
        return self.pb_value < self.pb_bound

    @property
    def quad_ok(self) -> Optional[bool]:
        if self.quad_max is None:
            return None
        return self.quad_max <= 1e-12

    @property
    def passed(self) -> bool:
        return self.sup_e_ok and self.pb_ok and self.quad_ok is not False

    def to_dict(self) -> Dict:
        return {
            "t": self.t, "sup_e": self.sup_e, "sup_e_bound": self.sup_e_bound,
            "sup_e_ok": self.sup_e_ok, "pb_value": self.pb_value, "pb_bound": self.pb_bound,
            "pb_ok": self.pb_ok, "quad_max": self.quad_max, "eig_max": self.eig_max,
            "quad_ok": self.quad_ok, "points_checked": self.points_checked, "passed": self.passed,
        }


def _band_points(grid: TorusGrid, radius: float) -> np.ndarray:
    r = grid.radius()
    width = 1.5 * grid.min_spacing
    band = (np.abs(r - radius) <= width) & (r > 0.0)
    if not band.any():
        # грубая сетка: ближайшая к границе оболочка
        offset = np.abs(r - radius)
        offset[r == 0.0] = np.inf
        band = offset <= offset.min() + 1e-14
    return np.argwhere(band)


def spacelike_monitors(w, cd: ConeDomain, gp, grid: TorusGrid, sym=None,
                       rng: Optional[np.random.Generator] = None, samples: int = 10000,
                       max_points: int = 8) -> MonitorReport:
    """Мониторы: sup|e| ≤ ρ1/(6n³) у границы, sup t^{eps2}α̃|ẽ| по шару B_{ρ(t)} и знак квадратичной формы потока

    Args:
        w: RescaledState или FrameState
        cd: Конус
        gp: Калибровочные параметры (нужен eps2)
        grid: Сетка
        sym: Набор симметризаторов (B⁰, B^D); без него квадратичная форма не проверяется
        rng: Генератор случайных векторов
        samples: Число случайных векторов на точку
        max_points: Сколько точек полосы проверять по квадратичной форме
    """
    t = w.t
    if hasattr(w, "etilde"):
        e = t ** gp.eps2 * w.alphatilde[None, None] * w.etilde
    else:
        e = w.e
    n = grid.n_spatial + 1
    radius = rho_of_t(cd, t)
    points = _band_points(grid, radius)
    e_points = np.stack([e[(slice(None), slice(None)) + tuple(p)] for p in points])
    norms = np.sqrt((e_points ** 2).sum(axis=(1, 2)))
    # t^{eps2}|α̃||ẽ| поточечно равно |e|; условие на всём срезе B_{ρ(t)}
    pointwise = np.sqrt((e ** 2).sum(axis=(0, 1)))
    inside = pointwise[ball_mask(grid, radius)]

    report = MonitorReport(
        t=t,
        sup_e=float(norms.max()),
        sup_e_bound=cd.rho1 / (6.0 * n ** 3),
        pb_value=float(inside.max(initial=0.0)),
        pb_bound=cd.rho1 / (n - 1) ** 0.25,
        points_checked=len(points),
    )
    if sym is None:
        return report

    rng = rng or np.random.default_rng(0)
    coords = grid.mesh()
    weights = []
    for p, e_p in zip(points, e_points):
        x = coords[(slice(None),) + tuple(p)]
        weights.append(e_p @ (x / np.linalg.norm(x)))
    weights = np.array(weights)
    order = np.argsort(-np.abs(weights).max(axis=1))[:max_points]

    scale = t ** (-gp.eps2)
    quad_max = -np.inf
    eig_max = -np.inf
    vectors = rng.standard_normal((sym.B0.shape[0], samples))
    for idx in order:
        flux = -cd.rho1 * sym.B0 + np.einsum("d,dij->ij", weights[idx], sym.BD)
        flux = scale * flux
        values = np.einsum("ik,ij,jk->k", vectors, flux, vectors) / (vectors ** 2).sum(axis=0)
        quad_max = max(quad_max, float(values.max()))
        eig_max = max(eig_max, float(scipy.linalg.eigvalsh(0.5 * (flux + flux.T)).max()))
    report.quad_max = quad_max
    report.eig_max = eig_max
    return report
