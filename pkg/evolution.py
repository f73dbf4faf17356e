"""
Интегрирование к сингулярности t → 0: начальные данные, шаг RK4 назад по времени,
прогон с записью диагностики, контрольные точки и монитор энергии
"""
import csv
import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from diagnostics import AsymptoticData, DiagnosticsRecord, collect, extract_asymptotics, projected_part
from discretization import (ConeDomain, TorusGrid, ball_mask, rho_of_t, smooth_cutoff,
                            sobolev_norm, spacelike_monitors, spatial_derivative)
from errors import (ConfigError, ConstraintSolveError, EvolutionAbort, GaugeError, GridError,
                    KasnerError, StateError)
from frame import FrameState
from fuchsian import (GaugeParams, RescaledState, build_hierarchy,
                      hierarchy_rhs, rescale, rescaled_constraints, rhs_modified)
from kasner import KasnerData, background_rescaled, check_subcritical, kasner_from_q

logger = logging.getLogger(__name__)

DEFAULT_CONSTRAINT_TOL = 1e-8
DEFAULT_TRUNCATION_TOL = 1e-6


def config_hash(cfg: Dict) -> str:
    """sha256 канонического JSON конфигурации"""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class RunConfig:
    """Параметры прогона, собранные из конфигурации"""
    kd: KasnerData
    gp: GaugeParams
    grid: TorusGrid
    t0: float
    t_end: float
    cd: Optional[ConeDomain] = None
    c_cfl: float = 0.5
    c_log: float = 0.05
    amplitude: float = 1e-3
    modes: Tuple[int, ...] = (1,)
    seed: int = 0
    localize: bool = False
    outer_amplitude: float = 0.0
    constraint_tol: float = DEFAULT_CONSTRAINT_TOL
    truncation_tol: float = DEFAULT_TRUNCATION_TOL
    output_every: int = 10
    checkpoint_every: int = 0
    hierarchy: bool = False
    with_weyl: bool = True
    config_hash: str = ""

    @classmethod
    def from_config(cls, cfg: Dict) -> "RunConfig":
        """Сборка и проверка; все нарушения собираются в один ConfigError"""
        violations: List[str] = []
        kas = cfg.get("kasner", {})
        q = kas.get("q", [1.0 / 3.0] * 3)
        n = int(kas.get("n", len(q) + 1))
        try:
            kd = kasner_from_q(n, q)
        except KasnerError as e:
            raise ConfigError([f"kasner: {e}"])
        ok, margin = check_subcritical(kd)
        if not ok:
            violations.append(f"kasner: фон не субкритический (запас {margin:.4g})")

        gp = None
        try:
            gp = GaugeParams.from_config(kd, cfg.get("gauge", {}))
        except GaugeError as e:
            violations.extend(f"gauge: {v}" for v in e.violations)

        grid = None
        try:
            grid = TorusGrid.from_config(n, cfg.get("grid", {}))
        except GridError as e:
            violations.append(f"grid: {e}")

        evo = cfg.get("evolution", {})
        cone = cfg.get("cone", {})
        data = cfg.get("data", {})
        t0 = float(cone.get("t0", evo.get("t0", 1.0)))
        t_end = float(evo.get("t_final", 1e-3 * t0))
        c_cfl = float(evo.get("c_cfl", 0.5))
        c_log = float(evo.get("c_log", 0.05))
        if not 0.0 < t_end < t0:
            violations.append(f"evolution: нужно 0 < t_final < t0, получено {t_end}, {t0}")
        for name, value in (("c_cfl", c_cfl), ("c_log", c_log)):
            if not 0.0 < value < 1.0:
                violations.append(f"evolution: {name} = {value} вне (0, 1)")
        amplitude = float(data.get("amplitude", 1e-3))
        if amplitude < 0.0:
            violations.append(f"data: amplitude = {amplitude} < 0")

        cd = None
        if cone.get("enabled", True) and gp is not None and grid is not None:
            try:
                cd = ConeDomain(t0=t0, t1=t_end, rho0=float(cone.get("rho0", 0.6)),
                                rho1=float(cone.get("rho1", 0.05)), eps=gp.eps2, L=grid.L)
            except GridError as e:
                violations.append(f"cone: {e}")
        if data.get("localize") and cd is None:
            violations.append("data: localize требует настроенного конуса")
        if violations:
            raise ConfigError(violations)

        return cls(
            kd=kd, gp=gp, grid=grid, t0=t0, t_end=t_end, cd=cd, c_cfl=c_cfl, c_log=c_log,
            amplitude=amplitude,
            modes=tuple(int(m) for m in data.get("modes", [1])),
            seed=int(data.get("seed", 0)),
            localize=bool(data.get("localize", False)),
            outer_amplitude=float(data.get("outer_amplitude", 0.0)),
            constraint_tol=float(data.get("constraint_tol", DEFAULT_CONSTRAINT_TOL)),
            truncation_tol=float(data.get("truncation_tol", DEFAULT_TRUNCATION_TOL)),
            output_every=int(evo.get("output_every", 10)),
            checkpoint_every=int(evo.get("checkpoint_every", 0)),
            hierarchy=bool(evo.get("hierarchy", False)),
            with_weyl=bool(evo.get("with_weyl", True)),
            config_hash=config_hash(cfg),
        )


@dataclass
class InitialData:
    w: RescaledState
    frame: FrameState
    residuals: Dict[str, float]
    truncation: float = 0.0


def _profile(grid: TorusGrid, modes, rng: np.random.Generator) -> np.ndarray:
    """Сумма мод sin(πm x¹/L + φ_m), зависит только от x¹"""
    x = grid.mesh()[0]
    phases = rng.uniform(0.0, 2.0 * np.pi, len(modes))
    total = np.zeros(grid.shape)
    for m, phase in zip(modes, phases):
        total += np.sin(np.pi * m * x / grid.L + phase)
    return total / max(len(modes), 1)


def make_initial_data(rc: RunConfig) -> InitialData:
    """Плоско-симметричные данные, точно удовлетворяющие связям

    Свободные данные: ẽ_1^1(x¹) и бесследовое возмущение диагонали Σ̃.
    Из импульсной связи β = 1/α̃ = t(Σ̃_11 − (n−2)H̃ − G), гамильтонова
    связь даёт квадратное уравнение на H̃, Ũ_1 = ẽ_1(α̃)/α̃.
    """
    kd, grid, t = rc.kd, rc.grid, rc.t0
    n, d = kd.n, kd.d
    rng = np.random.default_rng(rc.seed)
    decay = t ** (-kd.r0 / 2.0 - 1.0)
    c_h = kd.r0 / (2.0 * (n - 1))

    g1 = rc.amplitude * _profile(grid, rc.modes, rng)
    g2 = rc.amplitude * _profile(grid, rc.modes, rng)
    if rc.localize:
        x1 = np.abs(grid.mesh()[0])
        phi = smooth_cutoff(x1, rc.cd.rho0, 0.5 * (rc.cd.rho0 + grid.L))
        outer = _profile(grid, rc.modes, rng)
        g1 = phi * g1 + (1.0 - phi) * rc.outer_amplitude * outer
        g2 = phi * g2

    etilde = np.zeros((d, d) + grid.shape)
    for a in range(d):
        etilde[a, a] = t ** (-kd.r[a] / 2.0)
    etilde[0, 0] = etilde[0, 0] * (1.0 + g1)

    shape_vec = np.zeros(d)
    if d >= 3:
        shape_vec[1], shape_vec[2] = 1.0, -1.0
    else:
        shape_vec[0], shape_vec[1] = 1.0, -1.0
    sigma = np.zeros((d, d) + grid.shape)
    for a in range(d):
        sigma[a, a] = (kd.r[a] / 2.0 - c_h) * decay + g2 * decay * shape_vec[a]

    G = (kd.r[0] / 2.0 - kd.r0 / 2.0 - 1.0) * decay
    sigma_sq = np.einsum("ab...,ab...->...", sigma, sigma)
    s11 = sigma[0, 0]
    qa = (n - 1) * (n - 2)
    qb = -2.0 * (n - 1) * (s11 - G)
    disc = qb ** 2 - 4.0 * qa * sigma_sq
    if np.any(disc < 0.0):
        raise ConstraintSolveError("Отрицательный дискриминант гамильтоновой связи",
                                   {"disc_min": float(disc.min())})
    roots = np.stack([(-qb + np.sqrt(disc)) / (2.0 * qa), (-qb - np.sqrt(disc)) / (2.0 * qa)])
    h_bg = c_h * decay
    Htilde = np.where(np.abs(roots[0] - h_bg) <= np.abs(roots[1] - h_bg), roots[0], roots[1])

    beta = t * (s11 - (n - 2) * Htilde - G)
    if np.any(beta <= 0.0):
        raise ConstraintSolveError("β = 1/α̃ ≤ 0: амплитуда вне области разрешимости",
                                   {"beta_min": float(beta.min())})
    alphatilde = 1.0 / beta
    Utilde = np.zeros((d,) + grid.shape)
    Utilde[0] = -alphatilde * etilde[0, 0] * spatial_derivative(beta, 0, grid)

    fs = FrameState(t=t, etilde=etilde, alphatilde=alphatilde, Ctilde=np.zeros((d, d, d) + grid.shape),
                    Utilde=Utilde, Htilde=Htilde, Sigmatilde=sigma)
    w = rescale(fs, rc.gp, kd)
    residuals = rescaled_constraints(w, grid, rc.gp, kd).norms()

    # 𝔇 и 𝔄 содержат ẽ_1^1(∂α̃ + α̃²∂β): ноль для точных производных,
    # на сетке остаётся ошибка усечения дискретной производной от 1/β
    defect = etilde[0, 0] * (spatial_derivative(alphatilde, 0, grid)
                             + alphatilde ** 2 * spatial_derivative(beta, 0, grid))
    truncation = float(np.abs(defect).max(initial=0.0))
    if truncation > rc.truncation_tol:
        raise ConstraintSolveError(f"Ошибка усечения {truncation:.3e} > {rc.truncation_tol:.1e}: "
                                   f"данные не разрешены сеткой", {"truncation": truncation})
    scale = (max(t ** (1.0 + rc.gp.eps1), t ** (1.0 + rc.gp.eps2)) * float(np.abs(alphatilde).max())
             * max(1.0, float(np.abs(etilde).max())))
    limits = {name: rc.constraint_tol for name in residuals}
    for name in ("A", "D"):
        limits[name] += 2.0 * scale * truncation
    failed = {name: value for name, value in residuals.items() if value > limits[name]}
    if failed:
        name = max(failed, key=failed.get)
        raise ConstraintSolveError(f"Невязка {name} = {failed[name]:.3e} > {limits[name]:.1e}", residuals)
    if max(residuals["A"], residuals["D"]) > rc.constraint_tol:
        logger.warning(f"Невязки 𝔄, 𝔇 в пределах расширенного допуска {limits['D']:.2e}, "
                       f"ошибка усечения {truncation:.2e}")
    worst = max(residuals.values())
    logger.info(f"Начальные данные: амплитуда {rc.amplitude:.2e}, max невязка связей {worst:.3e}")
    return InitialData(w=w, frame=fs, residuals=residuals, truncation=truncation)


def rk4(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray,
        dt: float) -> np.ndarray:
    """Классический шаг RK4 от t к t − dt"""
    k1 = f(t, y)
    k2 = f(t - 0.5 * dt, y - 0.5 * dt * k1)
    k3 = f(t - 0.5 * dt, y - 0.5 * dt * k2)
    k4 = f(t - dt, y - dt * k3)
    return y - dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def packed_rhs(rc: RunConfig, rhs=rhs_modified) -> Callable[[float, np.ndarray], np.ndarray]:
    n = rc.kd.n

    def f(t: float, y: np.ndarray) -> np.ndarray:
        return rhs(RescaledState.from_packed(t, y, n), rc.grid, rc.gp, rc.kd).pack()

    return f


def choose_dt(w: RescaledState, rc: RunConfig) -> float:
    """dt = min(c_cfl·t^{eps2}Δx/‖e‖_∞, c_log·t), без выхода за t_end"""
    t = w.t
    e_norm = float(np.sqrt((w.e ** 2).sum(axis=(0, 1))).max())
    dt = rc.c_log * t
    if e_norm > 0.0:
        dt = min(dt, rc.c_cfl * t ** rc.gp.eps2 * rc.grid.min_spacing / e_norm)
    return min(dt, t - rc.t_end)


def step(w: RescaledState, dt: float, rc: RunConfig) -> Tuple[RescaledState, float]:
    """Один шаг RK4 назад по t с проекцией Σ и C

    Returns:
        (новое состояние, расстояние проекции)
    """
    if not 0.0 < dt < w.t:
        raise StateError(f"Шаг dt = {dt} должен лежать в (0, t = {w.t})")
    y = rk4(packed_rhs(rc), w.t, w.pack(), dt)
    if not np.all(np.isfinite(y)):
        raise StateError(f"Нечисловые значения после шага в t = {w.t - dt:.6e}")
    new, distance = RescaledState.from_packed(w.t - dt, y, rc.kd.n).project()
    new.check_positive()
    if distance > 1e-8:
        logger.warning(f"Большое расстояние проекции {distance:.3e} при t = {new.t:.6e}")
    else:
        logger.debug(f"Расстояние проекции {distance:.3e}")
    return new, distance


@dataclass
class TimeSeries:
    """Записи диагностики по моментам выхода"""
    records: List[DiagnosticsRecord] = field(default_factory=list)

    def append(self, record: DiagnosticsRecord) -> None:
        self.records.append(record)

    def column(self, name: str) -> np.ndarray:
        return np.array([rec.to_row()[name] for rec in self.records])

    def to_csv(self, path: Path) -> Path:
        rows = [rec.to_row() for rec in self.records]
        columns: List[str] = []
        for row in rows:
            columns.extend(key for key in row if key not in columns)
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=columns)
            writer.writeheader()
            for row in rows:
                writer.writerow({key: repr(float(value)) for key, value in row.items()})
        return path

    @classmethod
    def from_csv(cls, path: Path) -> "TimeSeries":
        """Чтение ряда, записанного to_csv (без данных мониторов)"""
        series = cls()
        with open(path, "r", newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                values = {key: float(value) for key, value in row.items() if value != ""}
                constraints = {key[len("constraint_"):]: value for key, value in values.items()
                               if key.startswith("constraint_")}
                series.append(DiagnosticsRecord(
                    t=values["t"], constraints=constraints,
                    w_norm=values["w_norm"], p_norm=values["p_norm"],
                    scalar_min=values["scalar_min"], scalar_max=values["scalar_max"],
                    ricci_sq_min=values["ricci_sq_min"], ricci_sq_max=values["ricci_sq_max"],
                    mean_curv_min=values["mean_curv_min"], mean_curv_max=values["mean_curv_max"],
                    weyl_min=values["weyl_min"], weyl_max=values["weyl_max"],
                    top_mode=values.get("top_mode", 0.0),
                    projection=values.get("projection", 0.0),
                ))
        return series


class EnergyMonitor:
    """‖W(t)‖²_{H^k} + ∫_t^{t0} s⁻¹‖ℙW(s)‖²_{H^k} ds (интеграл по трапециям)"""

    def __init__(self, grid: TorusGrid, k: int, cd: Optional[ConeDomain] = None):
        self.grid = grid
        self.k = k
        self.cd = cd
        self.integral = 0.0
        self.initial: Optional[float] = None
        self._last: Optional[Tuple[float, float]] = None
        self.ratio_max = 0.0

    def update(self, w: RescaledState) -> float:
        radius = rho_of_t(self.cd, w.t) if self.cd is not None else None
        energy = sobolev_norm(w.pack(), self.grid, self.k, radius) ** 2
        density = sobolev_norm(projected_part(w), self.grid, self.k, radius) ** 2 / w.t
        if self._last is not None:
            t_prev, density_prev = self._last
            self.integral += 0.5 * (t_prev - w.t) * (density + density_prev)
        self._last = (w.t, density)
        value = energy + self.integral
        if self.initial is None:
            self.initial = value
        ratio = value / self.initial if self.initial > 0.0 else 0.0
        self.ratio_max = max(self.ratio_max, ratio)
        return ratio


class CheckpointWriter:
    """Запись контрольных точек в фоновом потоке; перед новой записью ждём предыдущую"""

    def __init__(self, directory: Path, rc: RunConfig):
        self.directory = Path(directory)
        self.rc = rc
        self._thread: Optional[threading.Thread] = None
        self._error: Optional[BaseException] = None
        self.last_path: Optional[Path] = None

    def write(self, w: RescaledState, name: str) -> Path:
        self.join()
        from snapshots import write_state

        path = self.directory / f"{name}.h5"
        state = w.copy()
        meta = {"config_hash": self.rc.config_hash, "gauge": self.rc.gp.to_dict(),
                "kasner": self.rc.kd.to_dict()}

        def target():
            try:
                write_state(path, state, self.rc.grid.L, meta)
            except Exception as e:
                self._error = e

        self._thread = threading.Thread(target=target, daemon=True)
        self._thread.start()
        self.last_path = path
        return path

    def join(self) -> None:
        if self._thread is not None:
            self._thread.join()
            self._thread = None
        if self._error is not None:
            error, self._error = self._error, None
            logger.error(f"Ошибка записи контрольной точки: {error}")
            raise EvolutionAbort(f"Контрольная точка не записана: {error}")


@dataclass
class RunResult:
    ts: TimeSeries
    final: RescaledState
    asymptotics: Optional[AsymptoticData]
    energy_ratio_max: float
    initial_residuals: Dict[str, float]
    background_deviation: float
    steps: int
    late_states: List[RescaledState] = field(default_factory=list)
    hierarchy_defect: Optional[float] = None


def closed_form_deviation(w: RescaledState, rc: RunConfig) -> float:
    """Относительное отклонение от точного фона Казнера в момент w.t"""
    bg = background_rescaled(rc.kd, rc.gp.eps1, rc.gp.eps2, w.t, rc.grid.shape).pack()
    scale = max(float(np.abs(bg).max()), 1e-300)
    return float(np.abs(w.pack() - bg).max() / scale)


def hierarchy_consistency(rc: RunConfig, w: RescaledState, sym, steps: int = 4) -> float:
    """Сравнение эволюции иерархии с перестроением по эволюции уровня 0"""
    hs = build_hierarchy(w, rc.gp, rc.grid, sym)

    def f(t, y):
        return hierarchy_rhs(hs.with_data(t, y), rc.grid, rc.gp, rc.kd, sym).data

    data = hs.data
    current = w
    t = w.t
    for _ in range(steps):
        dt = choose_dt(current, rc)
        data = rk4(f, t, data, dt)
        current, _ = step(current, dt, rc)
        t -= dt
    rebuilt = build_hierarchy(current, rc.gp, rc.grid, sym).data
    defect = float(np.abs(rebuilt - data).max() / max(np.abs(rebuilt).max(), 1e-300))
    logger.info(f"Согласованность иерархии за {steps} шагов: {defect:.3e}")
    return defect


def _build_symmetrizer(rc: RunConfig):
    from symmetrizer import build

    return build(rc.kd.n, rc.kd, rc.gp)


def run(rc: RunConfig, out_dir: Optional[Path] = None,
        initial: Optional[RescaledState] = None) -> RunResult:
    """Интегрирование от t0 до t_end с записью диагностики

    Args:
        rc: Параметры прогона
        out_dir: Каталог прогона (контрольные точки, снимки); None: без записи
        initial: Готовые начальные данные вместо make_initial_data
    """
    if initial is None:
        data = make_initial_data(rc)
        w, residuals = data.w, data.residuals
    else:
        w = initial
        residuals = rescaled_constraints(w, rc.grid, rc.gp, rc.kd).norms()

    sym = None
    if rc.cd is not None or rc.hierarchy:
        sym = _build_symmetrizer(rc)
    hierarchy_defect = None
    if rc.hierarchy:
        hierarchy_defect = hierarchy_consistency(rc, w, sym)

    k = max(1, min(rc.gp.k_order, rc.grid.max_derivative_order))
    energy = EnergyMonitor(rc.grid, k, rc.cd)
    writer = CheckpointWriter(Path(out_dir) / "snapshots", rc) if out_dir else None
    ts = TimeSeries()
    late: List[RescaledState] = []

    def record(state: RescaledState, projection: float) -> None:
        rec = collect(state, rc.grid, rc.gp, rc.kd, rc.cd, sym, projection, rc.with_weyl)
        ts.append(rec)
        ratio = energy.update(state)
        logger.info(f"t={state.t:.4e}: ‖W‖={rec.w_norm:.4e}, ‖ℙW‖={rec.p_norm:.4e}, "
                    f"связи≤{max(rec.constraints.values()):.2e}, энергия/E0={ratio:.4f}")
        if state.t <= 10.0 * rc.t_end * (1.0 + 1e-12):
            late.append(state.copy())

    logger.info(f"Старт эволюции: t0={rc.t0}, t_end={rc.t_end}, сетка {rc.grid.dims}")
    record(w, 0.0)
    steps = 0
    projection = 0.0
    while w.t > rc.t_end * (1.0 + 1e-12):
        dt = choose_dt(w, rc)
        try:
            new, distance = step(w, dt, rc)
        except StateError as e:
            checkpoint = None
            if writer is not None:
                checkpoint = str(writer.write(w, f"abort_{steps:06d}"))
                writer.join()
            logger.error(f"Эволюция остановлена при t={w.t:.6e}: {e}")
            raise EvolutionAbort(str(e), t=w.t, checkpoint=checkpoint) from e
        w = new
        steps += 1
        projection = max(projection, distance)
        done = w.t <= rc.t_end * (1.0 + 1e-12)
        if steps % max(rc.output_every, 1) == 0 or done:
            record(w, projection)
            projection = 0.0
        if writer is not None and rc.checkpoint_every > 0 and steps % rc.checkpoint_every == 0:
            writer.write(w, f"checkpoint_{steps:06d}")

    if writer is not None:
        writer.write(w, "final")
        writer.join()

    asymptotics = None
    if len(late) >= 2:
        try:
            asymptotics = extract_asymptotics(ts, late, rc.gp, rc.kd)
        except (EvolutionAbort, ValueError) as e:
            logger.warning(f"Асимптотики не извлечены: {e}")
    logger.info(f"Эволюция завершена: {steps} шагов, t={w.t:.4e}")
    return RunResult(ts=ts, final=w, asymptotics=asymptotics, energy_ratio_max=energy.ratio_max,
                     initial_residuals=residuals, background_deviation=closed_form_deviation(w, rc),
                     steps=steps, late_states=late, hierarchy_defect=hierarchy_defect)


@dataclass
class ConeReport:
    """Сравнение двух прогонов, совпадающих внутри B_{rho0}"""
    times: List[float]
    discrepancies: List[float]
    monitors_passed: bool
    tolerance: float

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancies) if self.discrepancies else 0.0

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.tolerance

    def to_dict(self) -> Dict:
        return {"max_discrepancy": self.max_discrepancy, "tolerance": self.tolerance,
                "passed": self.passed, "monitors_passed": self.monitors_passed,
                "times": self.times, "discrepancies": self.discrepancies}


def cone_uniqueness(rc: RunConfig, outer_amplitude: float = 1e-3,
                    tolerance: float = 1e-6) -> ConeReport:
    """Две задачи с данными, различными только вне B_{rho0}, шаг в шаг"""
    if rc.cd is None:
        raise GridError("Для проверки единственности нужен конус")
    rc_a = replace(rc, localize=True, outer_amplitude=0.0)
    rc_b = replace(rc, localize=True, outer_amplitude=outer_amplitude)
    wa = make_initial_data(rc_a).w
    wb = make_initial_data(rc_b).w
    sym = _build_symmetrizer(rc)
    times, discrepancies = [], []
    monitors_ok = True
    steps = 0
    while True:
        mask = ball_mask(rc.grid, rho_of_t(rc.cd, wa.t))
        diff = np.abs(wa.pack() - wb.pack())[:, mask]
        times.append(wa.t)
        discrepancies.append(float(diff.max(initial=0.0)))
        report = spacelike_monitors(wa, rc.cd, rc.gp, rc.grid, sym=sym)
        monitors_ok = monitors_ok and report.passed
        if wa.t <= rc.t_end * (1.0 + 1e-12):
            break
        for _ in range(max(rc.output_every, 1)):
            dt = min(choose_dt(wa, rc_a), choose_dt(wb, rc_b))
            wa, _ = step(wa, dt, rc_a)
            wb, _ = step(wb, dt, rc_b)
            steps += 1
            if wa.t <= rc.t_end * (1.0 + 1e-12):
                break
    result = ConeReport(times=times, discrepancies=discrepancies, monitors_passed=monitors_ok,
                        tolerance=tolerance)
    log = logger.info if result.passed else logger.warning
    log(f"Единственность в конусе: max расхождение {result.max_discrepancy:.3e} за {steps} шагов")
    return result
