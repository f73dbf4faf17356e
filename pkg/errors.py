"""
Иерархия исключений для модулей эволюции у сингулярности
"""
from typing import List, Optional


class RelativityError(Exception):
    """Базовое исключение пакета"""


class KasnerError(RelativityError, ValueError):
    """Недопустимые показатели Казнера

    Args:
        message: Описание нарушения
        relation: Название нарушенного соотношения
        residual: Невязка соотношения
    """

    def __init__(self, message: str, relation: str = "", residual: Optional[float] = None):
        self.relation = relation
        self.residual = residual
        if residual is not None:
            message = f"{message} [{relation}: невязка {residual:.3e}]"
        super().__init__(message)


class GaugeError(RelativityError, ValueError):
    """Нарушены условия на показатели перемасштабирования"""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class GridError(RelativityError, ValueError):
    """Сетка или область не подходят для операции"""


class StateError(RelativityError, ValueError):
    """Недопустимое состояние полей (t ≤ 0, α ≤ 0, NaN)"""


class ConstraintSolveError(RelativityError):
    """Не удалось построить данные, удовлетворяющие связям"""

    def __init__(self, message: str, residuals: Optional[dict] = None):
        self.residuals = residuals or {}
        super().__init__(message)


class EvolutionAbort(RelativityError):
    """Аварийная остановка эволюции"""

    def __init__(self, message: str, t: Optional[float] = None, checkpoint: Optional[str] = None):
        self.t = t
        self.checkpoint = checkpoint
        super().__init__(message)


class ConfigError(RelativityError):
    """Ошибки валидации конфигурации (все нарушения сразу)"""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))
