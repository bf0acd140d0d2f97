from typing import Optional


class SplitPlotError(Exception):
    """Базовая ошибка библиотеки"""
    exit_code: int = 1


class DomainError(SplitPlotError, ValueError):
    """Нарушено предусловие или ограничение дизайна"""
    exit_code = 2


class EnumerationLimitError(DomainError):

    def __init__(self, count: int, guard: int):
        self.count = count
        self.guard = guard
        super().__init__(
            f"Enumeration refused: design has {count} assignments, guard is {guard}"
        )


class BMatrixExistenceError(DomainError):

    def __init__(self, sizes, detail: Optional[str] = None):
        self.sizes = tuple(sizes)
        largest = max(self.sizes)
        rest = sum(self.sizes) - largest
        message = (
            f"No PSD correction matrix exists for sizes {self.sizes}: "
            f"largest whole-plot size {largest} >= sum of the others {rest}"
        )
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class ConstructionError(SplitPlotError):
    """Построенная матрица не прошла проверку: ошибка в построении, а не во входных данных"""
    exit_code = 1
