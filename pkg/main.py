#!/usr/bin/env python3
"""
Командная строка: проверки фона и симметризаторов, построение данных,
эволюция к сингулярности, диагностика и извлечение асимптотик
"""
import argparse
import copy
import json
import logging
import os
import sys
import threading
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

# Путь к конфигурации
CONFIG_PATH = Path(__file__).parent / 'config.json'

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

COMMANDS = ("check-kasner", "verify-symmetrizer", "appendix-check", "make-data",
            "evolve", "diagnose", "extract", "cone-uniqueness")

DEFAULT_CONFIG: Dict = {
    "kasner": {"q": [0.5, 0.3, 0.2]},
    "gauge": {"eps1": None, "eps2": None, "nu": None, "k_order": 1, "mu": 0.0, "gamma": 2.0},
    "grid": {"dims": [16, 16, 16], "L": 1.0, "deriv_method": "spectral", "fd_order": 4},
    "cone": {"enabled": True, "rho0": 0.6, "rho1": 0.05, "t0": 1.0, "tolerance": 1e-6,
             "outer_amplitude": 1e-3},
    "data": {"amplitude": 1e-3, "modes": [1], "seed": 0},
    "evolution": {"t_final": 0.01, "c_cfl": 0.5, "c_log": 0.05, "output_every": 10,
                  "checkpoint_every": 0, "hierarchy": False},
    "assertions": {"max_constraint": 1e-6, "energy_ratio": 10.0},
    "symmetrizer": {"dims": [4, 5, 6, 7, 8, 9, 10, 11], "mc_samples": 100},
    "output": {"dir": "runs"},
}


class ConfigManager:
    """Менеджер конфигурации"""

    def __init__(self, config_path: Path = CONFIG_PATH):
        self.config_path = Path(config_path)
        self._lock = threading.Lock()
        self._config: Optional[Dict] = None

    def load(self) -> Dict:
        """Загрузка конфигурации"""
        with self._lock:
            try:
                with open(self.config_path, 'r', encoding='utf-8') as f:
                    self._config = _merge(DEFAULT_CONFIG, json.load(f))
                return self._config
            except FileNotFoundError:
                logger.warning(f"Конфигурационный файл не найден: {self.config_path}")
            except json.JSONDecodeError as e:
                logger.error(f"Ошибка парсинга конфигурации: {e}")
            self._config = copy.deepcopy(DEFAULT_CONFIG)
            return self._config

    def save(self, config: Dict, path: Optional[Path] = None):
        """Сохранение конфигурации"""
        target = Path(path) if path else self.config_path
        with self._lock:
            try:
                with open(target, 'w', encoding='utf-8') as f:
                    json.dump(config, f, ensure_ascii=False, indent=2)
                if path is None:
                    self._config = config
                logger.info(f"Конфигурация сохранена: {target}")
            except OSError as e:
                logger.error(f"Ошибка сохранения конфигурации: {e}")

    def get(self) -> Dict:
        """Получение текущей конфигурации"""
        if self._config is None:
            return self.load()
        return self._config

    def update(self, updates: Dict):
        """Обновление конфигурации"""
        config = self.get()
        config.update(updates)
        self._config = config

    def apply_overrides(self, pairs: List[str]) -> Dict:
        """Переопределения вида секция.ключ=значение (значение разбирается как JSON)"""
        config = self.get()
        for pair in pairs:
            if '=' not in pair:
                raise ValueError(f"Ожидалось key=value: {pair}")
            key, raw = pair.split('=', 1)
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            node = config
            parts = key.strip().split('.')
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value
            logger.debug(f"Переопределено {key} = {value!r}")
        return config


def _merge(base: Dict, override: Dict) -> Dict:
    result = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = _merge(result[key], value)
        else:
            result[key] = value
    return result


def setup_logging(run_dir: Path, level: int = logging.INFO):
    """Настройка логирования в файл прогона и консоль"""
    run_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(run_dir / 'bigbang.log', encoding='utf-8'),
            logging.StreamHandler()
        ],
        force=True,
    )


def set_threads(threads: Optional[int]):
    """Число потоков численных библиотек; должно быть задано до импорта numpy"""
    if not threads:
        return
    for name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[name] = str(threads)


def write_json(path: Path, data: Dict):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, ensure_ascii=False, indent=2, default=_json_default)


def _json_default(value):
    if hasattr(value, 'tolist'):
        return value.tolist()
    if hasattr(value, 'item'):
        return value.item()
    raise TypeError(f"Не сериализуется: {type(value).__name__}")


# Команды


def cmd_check_kasner(config: Dict, args, run_dir: Path) -> int:
    from kasner import check_exponent_conditions, check_subcritical, kasner_from_q
    from fuchsian import GaugeParams

    q = config["kasner"]["q"]
    kd = kasner_from_q(int(config["kasner"].get("n", len(q) + 1)), q)
    ok, margin = check_subcritical(kd)
    gp = GaugeParams.default(kd, eps1=config["gauge"].get("eps1"), eps2=config["gauge"].get("eps2"),
                             nu=config["gauge"].get("nu"))
    report = {
        **kd.to_dict(),
        "subcritical": ok,
        "margin": margin,
        "relations": kd.residuals(),
        "gauge": gp.to_dict(),
        "gauge_violations": check_exponent_conditions(kd, gp.eps1, gp.eps2, gp.nu),
    }
    write_json(run_dir / 'report.json', report)
    logger.info(f"Фон n={kd.n}: субкритический={ok}, запас={margin:.6f}")
    return EXIT_OK if ok and not report["gauge_violations"] else EXIT_ASSERTION


def _kasner_for(n: int, config: Dict):
    from kasner import kasner_from_q

    q = config["kasner"]["q"]
    if len(q) == n - 1:
        return kasner_from_q(n, q)
    return kasner_from_q(n, [1.0 / (n - 1)] * (n - 1))


def cmd_verify_symmetrizer(config: Dict, args, run_dir: Path) -> int:
    import numpy as np
    from fuchsian import GaugeParams
    from symmetrizer import build, export_matrix_market, mc_pd_check, min_k, verify

    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    samples = int(config["symmetrizer"].get("mc_samples", 100))
    reports = {}
    passed = True
    for n in config["symmetrizer"]["dims"]:
        kd = _kasner_for(int(n), config)
        gp = GaugeParams.default(kd, k_order=int(config["gauge"].get("k_order", 1)),
                                 mu=float(config["gauge"].get("mu", 0.0)),
                                 gamma=float(config["gauge"].get("gamma", 2.0)))
        sym = build(int(n), kd, gp)
        k = min_k(sym, gp.nu)
        if k > gp.k_order:
            logger.info(f"n={n}: k_order поднят с {gp.k_order} до {k}")
            gp.k_order = k
            sym = build(int(n), kd, gp)
        report = verify(sym).to_dict()
        report["min_k"] = k
        # достаточное условие проверяется только при b ≥ 0
        mc_failures = 0
        for _ in range(samples):
            a, b = rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0)
            res = mc_pd_check(int(n), a, b)
            if res.sufficient and not res.actually_pd:
                mc_failures += 1
        report["mc_pd_failures"] = mc_failures
        reports[str(n)] = report
        passed = passed and report["passed"] and mc_failures == 0
        if args.export:
            target = run_dir / f"n{n}"
            target.mkdir(parents=True, exist_ok=True)
            for name in ("B0", "Bs", "V", "Scal", "Bc"):
                export_matrix_market(getattr(sym, name), target / f"{name}.mtx", f"{name}, n={n}")
    write_json(run_dir / 'report.json', reports)
    return EXIT_OK if passed else EXIT_ASSERTION


def cmd_appendix_check(config: Dict, args, run_dir: Path) -> int:
    from symmetrizer import appendix_identities

    results = {str(n): appendix_identities(int(n), seed=args.seed or 0)
               for n in config["symmetrizer"]["dims"]}
    write_json(run_dir / 'report.json', results)
    passed = all(all(checks.values()) for checks in results.values())
    logger.info(f"Матричные тождества: {'все выполнены' if passed else 'есть нарушения'}")
    return EXIT_OK if passed else EXIT_ASSERTION


def cmd_make_data(config: Dict, args, run_dir: Path) -> int:
    from evolution import RunConfig, make_initial_data
    from snapshots import write_state

    rc = RunConfig.from_config(config)
    data = make_initial_data(rc)
    write_state(run_dir / 'snapshots' / 'initial.h5', data.w, rc.grid.L,
                {"config_hash": rc.config_hash})
    write_json(run_dir / 'report.json', {"residuals": data.residuals, "config_hash": rc.config_hash})
    return EXIT_OK


def cmd_evolve(config: Dict, args, run_dir: Path) -> int:
    from evolution import RunConfig, run

    rc = RunConfig.from_config(config)
    result = run(rc, run_dir)
    result.ts.to_csv(run_dir / 'timeseries.csv')
    limits = config.get("assertions", {})
    max_constraint = max(max(rec.constraints.values()) for rec in result.ts.records)
    checks = {
        "constraints": max_constraint <= float(limits.get("max_constraint", 1e-6)),
        "energy": result.energy_ratio_max <= float(limits.get("energy_ratio", 10.0)),
    }
    report = {
        "config_hash": rc.config_hash,
        "steps": result.steps,
        "t_final": result.final.t,
        "initial_residuals": result.initial_residuals,
        "max_constraint": max_constraint,
        "energy_ratio_max": result.energy_ratio_max,
        "background_deviation": result.background_deviation,
        "hierarchy_defect": result.hierarchy_defect,
        "asymptotics": result.asymptotics.summary() if result.asymptotics else None,
        "checks": checks,
    }
    write_json(run_dir / 'report.json', report)
    return EXIT_OK if all(checks.values()) else EXIT_ASSERTION


def cmd_diagnose(config: Dict, args, run_dir: Path) -> int:
    from diagnostics import collect
    from evolution import RunConfig
    from snapshots import read_state

    if not args.snapshot:
        raise ValueError("Для diagnose нужен --snapshot")
    rc = RunConfig.from_config(config)
    w, header = read_state(Path(args.snapshot[0]))
    record = collect(w, rc.grid, rc.gp, rc.kd, rc.cd)
    write_json(run_dir / 'report.json', {"header": header, "record": record.to_row(),
                                         "monitors": record.monitors})
    passed = record.monitors is None or record.monitors["passed"]
    return EXIT_OK if passed else EXIT_ASSERTION


def cmd_extract(config: Dict, args, run_dir: Path) -> int:
    import numpy as np
    from diagnostics import extract_asymptotics
    from evolution import RunConfig, TimeSeries
    from snapshots import read_state

    if not args.timeseries or not args.snapshot or len(args.snapshot) < 2:
        raise ValueError("Для extract нужны --timeseries и не меньше двух --snapshot")
    rc = RunConfig.from_config(config)
    ts = TimeSeries.from_csv(Path(args.timeseries))
    states = sorted((read_state(Path(p))[0] for p in args.snapshot), key=lambda s: -s.t)
    data = extract_asymptotics(ts, states, rc.gp, rc.kd)
    np.savez(run_dir / 'asymptotics.npz', Hhat=data.Hhat, Sigmahat=data.Sigmahat,
             alphahat=data.alphahat, kf=data.kf, kasner_residual=data.kasner_residual)
    write_json(run_dir / 'report.json', data.summary())
    return EXIT_OK if data.branch_defect <= 1e-8 else EXIT_ASSERTION


def cmd_cone_uniqueness(config: Dict, args, run_dir: Path) -> int:
    from evolution import RunConfig, cone_uniqueness

    rc = RunConfig.from_config(config)
    cone = config.get("cone", {})
    report = cone_uniqueness(rc, outer_amplitude=float(cone.get("outer_amplitude", 1e-3)),
                             tolerance=float(cone.get("tolerance", 1e-6)))
    write_json(run_dir / 'report.json', report.to_dict())
    return EXIT_OK if report.passed else EXIT_ASSERTION


HANDLERS = {
    "check-kasner": cmd_check_kasner,
    "verify-symmetrizer": cmd_verify_symmetrizer,
    "appendix-check": cmd_appendix_check,
    "make-data": cmd_make_data,
    "evolve": cmd_evolve,
    "diagnose": cmd_diagnose,
    "extract": cmd_extract,
    "cone-uniqueness": cmd_cone_uniqueness,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Эволюция поля Эйнштейна–скаляр к сингулярности")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, default=None, help="JSON-файл конфигурации")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="Переопределение, например grid.dims=[24,24,24]")
    parser.add_argument("--out", type=Path, default=None, help="Корневой каталог прогонов")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--snapshot", action="append", default=[], help="Файл снимка .h5")
    parser.add_argument("--timeseries", default=None, help="timeseries.csv прогона")
    parser.add_argument("--export", action="store_true", help="Выгрузить матрицы в Matrix Market")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    set_threads(args.threads or int(os.environ.get("BIGBANG_THREADS", "0") or 0))

    config_path = args.config or Path(os.environ.get("BIGBANG_CONFIG", CONFIG_PATH))
    manager = ConfigManager(config_path)
    try:
        config = manager.apply_overrides(args.overrides)
    except ValueError as e:
        print(f"Ошибка конфигурации: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        config.setdefault("data", {})["seed"] = args.seed

    from evolution import config_hash

    digest = config_hash(config)
    out_root = args.out or Path(os.environ.get("BIGBANG_OUT", config["output"].get("dir", "runs")))
    stamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    run_dir = Path(out_root) / f"{args.command}_{stamp}_{digest[:8]}"
    setup_logging(run_dir, logging.DEBUG if args.verbose else logging.INFO)
    manager.save({**config, "config_hash": digest}, run_dir / 'config.json')
    logger.info(f"Команда {args.command}, каталог прогона {run_dir}")

    from errors import ConfigError, GaugeError, GridError, KasnerError, RelativityError

    try:
        code = HANDLERS[args.command](config, args, run_dir)
    except ConfigError as e:
        for violation in e.violations:
            logger.error(f"Конфигурация: {violation}")
        return EXIT_CONFIG
    except (KasnerError, GaugeError, GridError) as e:
        logger.error(f"Конфигурация: {e}")
        return EXIT_CONFIG
    except RelativityError as e:
        # StateError тоже ValueError, но это авария прогона
        logger.error(f"Аварийная остановка: {e}")
        return EXIT_RUNTIME
    except ValueError as e:
        logger.error(f"Конфигурация: {e}")
        return EXIT_CONFIG
    logger.info(f"Команда {args.command} завершена с кодом {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
