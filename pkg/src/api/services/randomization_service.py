import logging
import math
from itertools import combinations, product
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.config import settings
from core.exceptions import DomainError, EnumerationLimitError
from api.services.design_service import DesignService
from models.assignment_model import Assignment, ObservedDataset
from models.design_model import SplitPlotDesign
from models.outcome_table_model import PotentialOutcomeTable

logger = logging.getLogger(__name__)

SEED_LIMIT = 2 ** 64


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """
    PCG64 с независимым подпотоком на каждый stream.

    The stream index becomes the SeedSequence spawn key, so (seed, stream)
    pairs give statistically independent generators.
    """
    if not 0 <= seed < SEED_LIMIT:
        raise DomainError(f"Seed must be an unsigned 64-bit integer, got {seed}")
    if stream < 0:
        raise DomainError(f"Stream index must be nonnegative, got {stream}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(stream,))))


def multinomial(counts: Sequence[int]) -> int:
    total, result = 0, 1
    for count in counts:
        total += count
        result *= math.comb(total, count)
    return result


def _labelings(counts: Sequence[int]) -> Iterator[Tuple[int, ...]]:
    """Все различные разбиения позиций 0..n-1 на группы заданных размеров"""
    n = sum(counts)
    current = [0] * n

    def assign(label: int, free: List[int]) -> Iterator[Tuple[int, ...]]:
        if label == len(counts):
            yield tuple(current)
            return
        for chosen in combinations(free, counts[label]):
            for position in chosen:
                current[position] = label
            taken = set(chosen)
            yield from assign(label + 1, [p for p in free if p not in taken])

    yield from assign(0, list(range(n)))


class RandomizationService:
    """Двухступенчатая рандомизация: розыгрыш, перебор и наблюдение"""

    def __init__(self, design_service: Optional[DesignService] = None, guard: Optional[int] = None):
        self.design_service = design_service or DesignService()
        self.guard = guard if guard is not None else settings.numeric_settings.enumeration_guard

    def _require_valid(self, design: SplitPlotDesign) -> None:
        violations = self.design_service.validate_design(design)
        if violations:
            raise DomainError(f"Invalid design: {'; '.join(violations)}")

    @staticmethod
    def _split(rng: np.random.Generator, counts: np.ndarray) -> Tuple[int, ...]:
        # Фишер–Йейтс + нарезка на группы нужных размеров
        labels = np.repeat(np.arange(len(counts)), counts)
        order = rng.permutation(len(labels))
        result = np.empty(len(labels), dtype=int)
        result[order] = labels
        return tuple(result.tolist())

    def _draw(self, design: SplitPlotDesign, rng: np.random.Generator) -> Assignment:
        plot_z1 = self._split(rng, design.r1_array)
        subplot_z2 = tuple(self._split(rng, design.r2_array[w]) for w in range(design.n_plots))
        return Assignment.model_construct(design=design, plot_z1=plot_z1, subplot_z2=subplot_z2)

    def draw_assignment(self, design: SplitPlotDesign, rng_seed: int, stream: int = 0) -> Assignment:
        self._require_valid(design)
        return self._draw(design, make_rng(rng_seed, stream))

    def draw_many(self, design: SplitPlotDesign, rng_seed: int, count: int, stream: int = 0) -> Iterator[Assignment]:
        """Поток назначений из одного генератора (для частотных проверок)"""
        self._require_valid(design)
        rng = make_rng(rng_seed, stream)
        for _ in range(count):
            yield self._draw(design, rng)

    def assignment_count(self, design: SplitPlotDesign) -> int:
        count = multinomial(design.r1_array.tolist())
        for w in range(design.n_plots):
            count *= multinomial(design.r2_array[w].tolist())
        return count

    def enumerate_assignments(
            self,
            design: SplitPlotDesign,
            guard: Optional[int] = None
    ) -> Iterator[Tuple[Assignment, float]]:
        """Каждое назначение ровно один раз, с вероятностью 1 / (число назначений)"""
        self._require_valid(design)
        limit = guard if guard is not None else self.guard
        count = self.assignment_count(design)
        if count > limit:
            logger.warning(f"Enumeration of {count} assignments refused (guard {limit})")
            raise EnumerationLimitError(count, limit)

        probability = 1.0 / count
        logger.debug(f"Enumerating {count} assignments")
        stage1 = _labelings(design.r1_array.tolist())
        stage2 = [list(_labelings(design.r2_array[w].tolist())) for w in range(design.n_plots)]
        for plot_z1 in stage1:
            for subplot_z2 in product(*stage2):
                assignment = Assignment.model_construct(design=design, plot_z1=plot_z1, subplot_z2=subplot_z2)
                yield assignment, probability

    def observe(
            self,
            table: PotentialOutcomeTable,
            assignment: Assignment,
            validate: bool = True
    ) -> ObservedDataset:
        design = table.design
        if assignment.design is not design and assignment.design != design:
            raise DomainError("Assignment was drawn for a different design")
        if len(assignment.plot_z1) != design.n_plots:
            raise DomainError("Assignment does not cover every whole plot")

        unit_z1 = np.empty(design.n_units, dtype=int)
        unit_z2 = np.empty(design.n_units, dtype=int)
        for w in range(design.n_plots):
            units = table.plot_units(w)
            labels = assignment.subplot_z2[w]
            if len(labels) != len(units):
                raise DomainError(f"Assignment labels {len(labels)} sub-plots in whole plot {w}, table has {len(units)}")
            unit_z1[units] = assignment.plot_z1[w]
            unit_z2[units] = labels

        y_obs = table.y[np.arange(design.n_units), unit_z1, unit_z2]
        fields = dict(
            design=design,
            unit_whole_plot=table.unit_whole_plot,
            unit_z1=tuple(unit_z1.tolist()),
            unit_z2=tuple(unit_z2.tolist()),
            y_obs=y_obs,
        )
        if not validate:
            frozen = np.array(y_obs, dtype=float)
            frozen.setflags(write=False)
            fields["y_obs"] = frozen
            return ObservedDataset.model_construct(**fields)
        try:
            return ObservedDataset(**fields)
        except ValueError as e:
            raise DomainError(f"Assignment inconsistent with the design: {e}")


def get_randomization_service() -> RandomizationService:
    return RandomizationService()
