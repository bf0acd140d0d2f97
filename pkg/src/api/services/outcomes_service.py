import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from core.config import settings
from core.exceptions import DomainError
from models.bmatrix_model import BMatrix
from models.design_model import ContrastSpec, Level, SplitPlotDesign, Treatment
from models.outcome_table_model import PotentialOutcomeTable

logger = logging.getLogger(__name__)

MatrixLike = Union[BMatrix, np.ndarray, Sequence[Sequence[float]]]


class OutcomesService:
    """
    Алгебра потенциальных исходов: скорректированные исходы U_i = (M_w / M̄) Y_i,
    средние, компоненты S_bt и S_in,w, контрасты и смещения Δ, Δ̃.

    Sums go through numpy reductions (pairwise summation).
    """

    def __init__(self, additivity_tolerance: Optional[float] = None):
        self.additivity_tolerance = (
            additivity_tolerance if additivity_tolerance is not None
            else settings.numeric_settings.additivity_tolerance
        )

    # ------------------------------------------------------------------ means

    def size_ratios(self, table: PotentialOutcomeTable) -> np.ndarray:
        """M_w / M̄ для каждой единицы"""
        design = table.design
        return design.sizes_array[table.plot_index] / design.m_bar

    def adjusted_outcomes(self, table: PotentialOutcomeTable) -> np.ndarray:
        return table.y * self.size_ratios(table)[:, None, None]

    def adjusted_outcome(self, table: PotentialOutcomeTable, i: int, z1: Level, z2: Level) -> float:
        design = table.design
        y = table.value(i, z1, z2)
        return design.whole_plot_sizes[table.unit_whole_plot[i]] / design.m_bar * y

    def population_means(self, table: PotentialOutcomeTable) -> np.ndarray:
        return table.y.mean(axis=0)

    def population_mean(self, table: PotentialOutcomeTable, z1: Level, z2: Level) -> float:
        structure = table.design.structure
        return float(table.y[:, structure.z1_index(z1), structure.z2_index(z2)].mean())

    def whole_plot_means(self, table: PotentialOutcomeTable) -> np.ndarray:
        """Ȳ_w(z1z2), форма (W, |Z1|, |Z2|)"""
        return np.stack([table.y[table.plot_units(w)].mean(axis=0) for w in range(table.design.n_plots)])

    def whole_plot_mean(self, table: PotentialOutcomeTable, w: int, z1: Level, z2: Level) -> float:
        self._check_plot(table.design, w)
        structure = table.design.structure
        units = table.plot_units(w)
        return float(table.y[units, structure.z1_index(z1), structure.z2_index(z2)].mean())

    # -------------------------------------------------------------- contrasts

    def unit_contrasts(self, table: PotentialOutcomeTable, contrast: ContrastSpec) -> np.ndarray:
        """τ_i для каждой единицы"""
        g = contrast.as_array(table.design.structure)
        return np.einsum('iab,ab->i', table.y, g)

    def finite_population_contrast(self, table: PotentialOutcomeTable, contrast: ContrastSpec) -> float:
        g = contrast.as_array(table.design.structure)
        return float(np.sum(g * self.population_means(table)))

    def whole_plot_contrasts(self, table: PotentialOutcomeTable, contrast: ContrastSpec) -> np.ndarray:
        g = contrast.as_array(table.design.structure)
        return np.einsum('wab,ab->w', self.whole_plot_means(table), g)

    # ---------------------------------------------------- variance components

    def s_between_matrix(self, table: PotentialOutcomeTable) -> np.ndarray:
        """S_bt по всем парам комбинаций, индекс k = a * |Z2| + b"""
        design = table.design
        if design.n_plots < 2:
            raise DomainError("S_bt needs at least two whole plots")
        u_bar_w = self.whole_plot_means(table) * (design.sizes_array / design.m_bar)[:, None, None]
        centered = u_bar_w.reshape(design.n_plots, -1)
        centered = centered - centered.mean(axis=0)
        return design.m_bar / (design.n_plots - 1) * (centered.T @ centered)

    def s_within_matrices(self, table: PotentialOutcomeTable) -> np.ndarray:
        """S_in,w по всем парам комбинаций, форма (W, K, K)"""
        design = table.design
        adjusted = self.adjusted_outcomes(table)
        result = []
        for w in range(design.n_plots):
            size = design.whole_plot_sizes[w]
            if size < 2:
                raise DomainError(f"S_in for whole plot {w} needs at least two units, got {size}")
            block = adjusted[table.plot_units(w)].reshape(size, -1)
            block = block - block.mean(axis=0)
            result.append(block.T @ block / (size - 1))
        return np.stack(result)

    def s_between(self, table: PotentialOutcomeTable, first: Treatment, second: Treatment) -> float:
        k, k_star = self._flat_index(table.design, first), self._flat_index(table.design, second)
        return float(self.s_between_matrix(table)[k, k_star])

    def s_within(self, table: PotentialOutcomeTable, w: int, first: Treatment, second: Treatment) -> float:
        design = table.design
        self._check_plot(design, w)
        size = design.whole_plot_sizes[w]
        if size < 2:
            raise DomainError(f"S_in for whole plot {w} needs at least two units, got {size}")
        k, k_star = self._flat_index(design, first), self._flat_index(design, second)
        units = table.plot_units(w)
        adjusted = self.adjusted_outcomes(table)[units].reshape(size, -1)
        left = adjusted[:, k] - adjusted[:, k].mean()
        right = adjusted[:, k_star] - adjusted[:, k_star].mean()
        return float(np.sum(left * right) / (size - 1))

    # ------------------------------------------------------------------ biases

    def delta(self, table: PotentialOutcomeTable, contrast: ContrastSpec) -> float:
        design = table.design
        n_plots = design.n_plots
        tau_w = self.whole_plot_contrasts(table, contrast)
        tau = self.finite_population_contrast(table, contrast)
        weighted = design.sizes_array / design.m_bar * tau_w
        return float(np.sum((weighted - tau) ** 2) / (n_plots * (n_plots - 1)))

    def delta_expanded(self, table: PotentialOutcomeTable, contrast: ContrastSpec) -> float:
        """Δ через диагональные и перекрёстные произведения τ̄_w τ̄_w*"""
        design = table.design
        sizes = design.sizes_array
        tau_w = self.whole_plot_contrasts(table, contrast)
        weighted = sizes * tau_w
        diagonal = np.sum(weighted ** 2)
        cross = np.sum(weighted) ** 2 - diagonal
        return float((diagonal - cross / (design.n_plots - 1)) / design.n_units ** 2)

    def delta_additive_formula(self, design: SplitPlotDesign, tau_bar: float) -> float:
        """Δ при равных τ̄_w = τ̄"""
        sizes = design.sizes_array
        n_plots = design.n_plots
        spread = np.sum((sizes - design.m_bar) ** 2)
        return float(tau_bar ** 2 * spread / (n_plots * (n_plots - 1) * design.m_bar ** 2))

    def delta_tilde(self, table: PotentialOutcomeTable, contrast: ContrastSpec, b: MatrixLike) -> float:
        design = table.design
        matrix = as_square_matrix(b)
        if matrix.shape != (design.n_plots, design.n_plots):
            raise DomainError(
                f"Correction matrix is {matrix.shape[0]}x{matrix.shape[1]}, design has {design.n_plots} whole plots"
            )
        tau_w = self.whole_plot_contrasts(table, contrast)
        return float(tau_w @ matrix @ tau_w / design.n_units ** 2)

    # ---------------------------------------------------------------- variance

    def theoretical_variance(self, table: PotentialOutcomeTable, contrast: ContrastSpec) -> float:
        """Точная дисперсия τ̂̄ при двухступенчатой рандомизации"""
        design = table.design
        g, r1, r2 = self._contrast_and_replication(table, contrast)
        n_plots, k2 = design.n_plots, design.structure.k2
        sizes = design.sizes_array

        s_bt = self._blocks(self.s_between_matrix(table), design)
        s_in = np.stack([self._blocks(m, design) for m in self.s_within_matrices(table)])

        first = 0.0
        second = 0.0
        for a in range(design.structure.k1):
            if r1[a] == 0:
                continue
            g_a = g[a]
            within_cross = np.sum(s_in[:, a, :, a, :] / (n_plots * sizes)[:, None, None], axis=0)
            between = s_bt[a, :, a, :] / design.m_bar - within_cross
            first += float(g_a @ between @ g_a) / r1[a]
            own = np.array([
                np.sum(s_in[:, a, b, a, b] / r2[:, b]) if g_a[b] != 0 else 0.0
                for b in range(k2)
            ])
            second += float(np.sum(g_a ** 2 * own)) / (n_plots * r1[a])
        return first + second - self.delta(table, contrast)

    def observed_mean_covariance(self, table: PotentialOutcomeTable) -> np.ndarray:
        """Ковариационная матрица наблюдаемых средних Ū^obs(z1z2) по всем парам комбинаций"""
        design = table.design
        structure = design.structure
        k1, k2 = structure.k1, structure.k2
        r1 = design.r1_array.astype(float)
        r2 = design.r2_array.astype(float)
        if np.any(r1 <= 0) or np.any(r2 <= 0):
            raise DomainError("Covariance needs positive replication for every level combination")
        n_plots, sizes = design.n_plots, design.sizes_array

        s_bt = self._blocks(self.s_between_matrix(table), design)
        s_in = np.stack([self._blocks(m, design) for m in self.s_within_matrices(table)])

        cov = -s_bt / design.n_units
        for a in range(k1):
            within_cross = np.sum(s_in[:, a, :, a, :] / (n_plots * sizes)[:, None, None], axis=0)
            cov[a, :, a, :] += (s_bt[a, :, a, :] / design.m_bar - within_cross) / r1[a]
            for b in range(k2):
                cov[a, b, a, b] += np.sum(s_in[:, a, b, a, b] / r2[:, b]) / (n_plots * r1[a])
        return cov.reshape(k1 * k2, k1 * k2)

    def s_hat_expectation(self, table: PotentialOutcomeTable) -> np.ndarray:
        """
        E[Ŝ(z1; z2, z2*)], форма (|Z1|, |Z2|, |Z2|).

        Between-plot covariance S_bt / M̄ plus the average within-plot
        covariance of the sub-plot sample means.
        """
        design = table.design
        k1, k2 = design.structure.k1, design.structure.k2
        r2 = design.r2_array.astype(float)
        if np.any(r2 <= 0):
            raise DomainError("Every sub-plot level must be replicated in every whole plot")
        n_plots, sizes = design.n_plots, design.sizes_array

        s_bt = self._blocks(self.s_between_matrix(table), design)
        s_in = np.stack([self._blocks(m, design) for m in self.s_within_matrices(table)])

        result = np.empty((k1, k2, k2))
        for a in range(k1):
            within_cross = np.sum(s_in[:, a, :, a, :] / sizes[:, None, None], axis=0) / n_plots
            result[a] = s_bt[a, :, a, :] / design.m_bar - within_cross
            own = np.array([np.sum(s_in[:, a, b, a, b] / r2[:, b]) for b in range(k2)]) / n_plots
            result[a] += np.diag(own)
        return result

    # -------------------------------------------------------------- additivity

    def check_between_wp_additivity(self, table: PotentialOutcomeTable) -> bool:
        """Разности Ȳ_w(z) - Ȳ_w(z*) одинаковы для всех делянок"""
        means = self.whole_plot_means(table).reshape(table.design.n_plots, -1)
        differences = means - means[:, :1]
        return bool(np.all(np.abs(differences - differences[0]) <= self.additivity_tolerance))

    def check_strict_additivity(self, table: PotentialOutcomeTable) -> bool:
        """Разности Y_i(z) - Y_i(z*) одинаковы для всех единиц"""
        flat = table.y.reshape(table.design.n_units, -1)
        differences = flat - flat[:, :1]
        return bool(np.all(np.abs(differences - differences[0]) <= self.additivity_tolerance))

    def make_between_wp_additive(
            self,
            design: SplitPlotDesign,
            base_row: np.ndarray,
            wp_shifts: Sequence[float],
            deviations: Optional[np.ndarray] = None
    ) -> PotentialOutcomeTable:
        """
        Таблица с Ȳ_w(z1z2) = base(z1z2) + shift_w.

        deviations (N, |Z1|, |Z2|) adds within-plot variation; it is centred
        within every whole plot so the plot means stay exactly on target.
        """
        base = np.asarray(base_row, dtype=float).reshape(design.structure.k1, design.structure.k2)
        shifts = np.asarray(wp_shifts, dtype=float)
        if shifts.shape != (design.n_plots,):
            raise DomainError(f"Expected {design.n_plots} whole-plot shifts, got {shifts.shape}")
        plot_of_unit = np.asarray(design.canonical_unit_plot())
        y = base[None, :, :] + shifts[plot_of_unit][:, None, None]
        if deviations is not None:
            noise = np.asarray(deviations, dtype=float).reshape(y.shape)
            for w in range(design.n_plots):
                units = np.asarray(design.plot_units(w))
                y[units] += noise[units] - noise[units].mean(axis=0)
        return PotentialOutcomeTable(design=design, unit_whole_plot=tuple(plot_of_unit.tolist()), y=y)

    def make_strictly_additive(
            self,
            design: SplitPlotDesign,
            effects: np.ndarray,
            baseline: Sequence[float]
    ) -> PotentialOutcomeTable:
        """Y_i(z1z2) = baseline_i + effect(z1z2)"""
        effect = np.asarray(effects, dtype=float).reshape(design.structure.k1, design.structure.k2)
        base = np.asarray(baseline, dtype=float)
        if base.shape != (design.n_units,):
            raise DomainError(f"Expected {design.n_units} unit baselines, got {base.shape}")
        y = base[:, None, None] + effect[None, :, :]
        return PotentialOutcomeTable(design=design, unit_whole_plot=design.canonical_unit_plot(), y=y)

    # ----------------------------------------------------------------- helpers

    @staticmethod
    def _check_plot(design: SplitPlotDesign, w: int) -> None:
        if not 0 <= w < design.n_plots:
            raise DomainError(f"Unknown whole plot {w}")

    @staticmethod
    def _flat_index(design: SplitPlotDesign, treatment: Treatment) -> int:
        z1, z2 = treatment
        structure = design.structure
        return structure.z1_index(z1) * structure.k2 + structure.z2_index(z2)

    @staticmethod
    def _blocks(matrix: np.ndarray, design: SplitPlotDesign) -> np.ndarray:
        k1, k2 = design.structure.k1, design.structure.k2
        return matrix.reshape(k1, k2, k1, k2)

    @staticmethod
    def _contrast_and_replication(
            table: PotentialOutcomeTable,
            contrast: ContrastSpec
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        design = table.design
        g = contrast.as_array(design.structure)
        r1 = design.r1_array.astype(float)
        r2 = design.r2_array.astype(float)
        for a in range(design.structure.k1):
            if np.any(g[a] != 0) and r1[a] <= 0:
                raise DomainError(
                    f"Whole-plot level {design.structure.z1_levels[a]} carries contrast weight but r1 = 0"
                )
            for b in range(design.structure.k2):
                if g[a, b] != 0 and np.any(r2[:, b] <= 0):
                    raise DomainError(
                        f"Sub-plot level {design.structure.z2_levels[b]} carries contrast weight "
                        f"but is not replicated in every whole plot"
                    )
        return g, r1, r2


def as_square_matrix(b: MatrixLike) -> np.ndarray:
    matrix = b.matrix if isinstance(b, BMatrix) else np.asarray(b, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DomainError(f"Correction matrix must be square, got shape {matrix.shape}")
    return matrix


def get_outcomes_service() -> OutcomesService:
    return OutcomesService()
