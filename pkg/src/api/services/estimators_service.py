import logging
from typing import Optional

import numpy as np

from core.exceptions import DomainError
from api.dto.estimate_dto import EstimateReport
from api.services.outcomes_service import MatrixLike, as_square_matrix
from models.assignment_model import ObservedDataset
from models.bmatrix_model import BMatrix
from models.design_model import ContrastSpec, Level, serialize_level, serialize_treatment

logger = logging.getLogger(__name__)


class EstimatorsService:
    """
    Оценки по наблюдаемым данным: τ̂̄, Ŝ, V̂, G_w^obs, H_ww*, Ṽ.

    Works only with ObservedDataset and design metadata, never with the
    full table of potential outcomes.
    """

    # ---------------------------------------------------------- observed means

    def plot_means(self, data: ObservedDataset) -> np.ndarray:
        """Ȳ_w^obs(z_{1w} z2), форма (W, |Z2|); NaN там, где r2_w(z2) = 0"""
        design = data.design
        plots = np.asarray(data.unit_whole_plot)
        z2 = np.asarray(data.unit_z2)
        totals = np.zeros((design.n_plots, design.structure.k2))
        counts = np.zeros((design.n_plots, design.structure.k2))
        np.add.at(totals, (plots, z2), data.y_obs)
        np.add.at(counts, (plots, z2), 1.0)
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(counts > 0, totals / np.where(counts > 0, counts, 1.0), np.nan)

    def adjusted_plot_means(self, data: ObservedDataset) -> np.ndarray:
        """Ū_w^obs = (M_w / M̄) Ȳ_w^obs"""
        design = data.design
        return self.plot_means(data) * (design.sizes_array / design.m_bar)[:, None]

    def ybar_w_obs(self, data: ObservedDataset, w: int, z2: Level) -> float:
        design = data.design
        if not 0 <= w < design.n_plots:
            raise DomainError(f"Unknown whole plot {w}")
        b = design.structure.z2_index(z2)
        value = self.plot_means(data)[w, b]
        if np.isnan(value):
            raise DomainError(f"No unit of whole plot {w} received sub-plot level {serialize_level(z2)}")
        return float(value)

    def _plots_of(self, data: ObservedDataset, a: int) -> np.ndarray:
        plots = np.flatnonzero(data.plot_z1 == a)
        if plots.size == 0:
            z1 = data.design.structure.z1_levels[a]
            raise DomainError(f"Whole-plot level {serialize_level(z1)} was not assigned to any whole plot")
        return plots

    def ybar_obs(self, data: ObservedDataset, z1: Level, z2: Level) -> float:
        """Ȳ^obs(z1z2) = W / (N r1(z1)) Σ_{w ∈ T1(z1)} M_w Ȳ_w^obs(z1z2)"""
        design = data.design
        a = design.structure.z1_index(z1)
        b = design.structure.z2_index(z2)
        plots = self._plots_of(data, a)
        means = self.plot_means(data)[plots, b]
        if np.any(np.isnan(means)):
            raise DomainError(f"Treatment {serialize_treatment(z1, z2)} is not observed in every assigned whole plot")
        weights = design.sizes_array[plots]
        return float(design.n_plots / (design.n_units * design.r1_array[a]) * np.sum(weights * means))

    def ubar_obs(self, data: ObservedDataset, z1: Level, z2: Level) -> float:
        """Простое среднее скорректированных средних по T1(z1)"""
        design = data.design
        a = design.structure.z1_index(z1)
        b = design.structure.z2_index(z2)
        plots = self._plots_of(data, a)
        return float(np.mean(self.adjusted_plot_means(data)[plots, b]))

    def observed_means(self, data: ObservedDataset) -> np.ndarray:
        """Ȳ^obs(z1z2) для всех наблюдаемых комбинаций; NaN для ненаблюдаемых"""
        design = data.design
        structure = design.structure
        result = np.full((structure.k1, structure.k2), np.nan)
        adjusted = self.adjusted_plot_means(data)
        for a in range(structure.k1):
            plots = np.flatnonzero(data.plot_z1 == a)
            if plots.size == 0:
                continue
            result[a] = np.sum(adjusted[plots], axis=0) / design.r1_array[a]
        return result

    # ------------------------------------------------------------ point estimate

    def point_estimate(self, data: ObservedDataset, contrast: ContrastSpec) -> float:
        """τ̂̄ = Σ g(z1z2) Ȳ^obs(z1z2)"""
        structure = data.design.structure
        g = contrast.as_array(structure)
        means = self.observed_means(data)
        weighted = g != 0
        if np.any(np.isnan(means[weighted])):
            a, b = np.argwhere(weighted & np.isnan(means))[0]
            raise DomainError(
                f"Treatment {serialize_treatment(structure.z1_levels[a], structure.z2_levels[b])} "
                f"has nonzero contrast weight but is not observable"
            )
        return float(np.sum(g[weighted] * means[weighted]))

    # ------------------------------------------------------ variance estimation

    def _adjusted_block(self, data: ObservedDataset, a: int) -> np.ndarray:
        design = data.design
        if design.r1_array[a] < 2:
            raise DomainError(
                f"Variance not estimable at whole-plot level: r1({serialize_level(design.structure.z1_levels[a])}) "
                f"= {design.r1_array[a]} < 2"
            )
        return self.adjusted_plot_means(data)[self._plots_of(data, a)]

    def s_hat(self, data: ObservedDataset, z1: Level, z2: Level, z2_star: Level) -> float:
        """Выборочная ковариация по делянкам T1(z1), делитель r1(z1) - 1"""
        structure = data.design.structure
        a = structure.z1_index(z1)
        b, b_star = structure.z2_index(z2), structure.z2_index(z2_star)
        block = self._adjusted_block(data, a)
        left, right = block[:, b], block[:, b_star]
        if np.any(np.isnan(left)) or np.any(np.isnan(right)):
            raise DomainError("Sub-plot level not observed in every whole plot of the level")
        return float(np.sum((left - left.mean()) * (right - right.mean())) / (len(left) - 1))

    def s_hat_matrices(self, data: ObservedDataset) -> np.ndarray:
        """Ŝ по всем парам (z2, z2*) для каждого z1; NaN, где r1(z1) < 2"""
        design = data.design
        k1, k2 = design.structure.k1, design.structure.k2
        adjusted = self.adjusted_plot_means(data)
        result = np.full((k1, k2, k2), np.nan)
        for a in range(k1):
            plots = np.flatnonzero(data.plot_z1 == a)
            if plots.size < 2:
                continue
            block = adjusted[plots] - adjusted[plots].mean(axis=0)
            result[a] = block.T @ block / (plots.size - 1)
        return result

    def v_hat(self, data: ObservedDataset, contrast: ContrastSpec) -> float:
        structure = data.design.structure
        g = contrast.as_array(structure)
        total = 0.0
        for a in range(structure.k1):
            columns = np.flatnonzero(g[a] != 0)
            if columns.size == 0:
                continue
            block = self._adjusted_block(data, a)[:, columns]
            if np.any(np.isnan(block)):
                raise DomainError("Sub-plot level with nonzero contrast weight is not observed in every whole plot")
            centered = block - block.mean(axis=0)
            s_matrix = centered.T @ centered / (block.shape[0] - 1)
            g_a = g[a, columns]
            total += float(g_a @ s_matrix @ g_a) / data.design.r1_array[a]
        return total

    # ------------------------------------------------- cross-plot products

    def g_obs_vector(self, data: ObservedDataset, contrast: ContrastSpec) -> np.ndarray:
        """G_w^obs для всех делянок"""
        g = contrast.as_array(data.design.structure)
        means = self.plot_means(data)
        rows = g[data.plot_z1]
        used = rows != 0
        if np.any(np.isnan(means[used])):
            raise DomainError("A weighted sub-plot level is not observed in some whole plot")
        return np.sum(np.where(used, rows * np.nan_to_num(means), 0.0), axis=1)

    def g_w_obs(self, data: ObservedDataset, contrast: ContrastSpec, w: int) -> float:
        if not 0 <= w < data.design.n_plots:
            raise DomainError(f"Unknown whole plot {w}")
        return float(self.g_obs_vector(data, contrast)[w])

    def h_matrix(self, data: ObservedDataset, contrast: ContrastSpec) -> np.ndarray:
        """H_ww* для всех пар w != w*; диагональ нулевая"""
        design = data.design
        n_plots = design.n_plots
        g_obs = self.g_obs_vector(data, contrast)
        r1 = design.r1_array[data.plot_z1].astype(float)
        same = (data.plot_z1[:, None] == data.plot_z1[None, :]).astype(float)
        denominator = r1[:, None] * (r1[None, :] - same)
        h = np.zeros((n_plots, n_plots))
        off = ~np.eye(n_plots, dtype=bool)
        h[off] = (n_plots * (n_plots - 1) * np.outer(g_obs, g_obs))[off] / denominator[off]
        return h

    def h_ww(self, data: ObservedDataset, contrast: ContrastSpec, w: int, w_star: int) -> float:
        n_plots = data.design.n_plots
        if w == w_star:
            raise DomainError("H is defined only for distinct whole plots")
        if not (0 <= w < n_plots and 0 <= w_star < n_plots):
            raise DomainError(f"Unknown whole plot pair ({w}, {w_star})")
        return float(self.h_matrix(data, contrast)[w, w_star])

    def v_tilde(self, data: ObservedDataset, contrast: ContrastSpec, b: MatrixLike) -> float:
        """Ṽ = V̂ + N^-2 Σ_{w != w*} [b_ww* + M_w M_w* / (W - 1)] H_ww*"""
        design = data.design
        matrix = as_square_matrix(b)
        n_plots = design.n_plots
        if matrix.shape != (n_plots, n_plots):
            raise DomainError(f"Correction matrix is {matrix.shape[0]}x{matrix.shape[1]}, design has {n_plots} whole plots")
        sizes = design.sizes_array
        diagonal = sizes ** 2
        if np.any(np.abs(np.diag(matrix) - diagonal) > 1e-9 * diagonal.max()):
            raise DomainError(
                f"Correction matrix diagonal {np.diag(matrix).tolist()} must equal squared "
                f"whole-plot sizes {diagonal.tolist()}"
            )
        coefficients = matrix + np.outer(sizes, sizes) / (n_plots - 1)
        np.fill_diagonal(coefficients, 0.0)
        correction = float(np.sum(coefficients * self.h_matrix(data, contrast))) / design.n_units ** 2
        return self.v_hat(data, contrast) + correction

    # ------------------------------------------------------------------ report

    def estimate(
            self,
            data: ObservedDataset,
            contrast: ContrastSpec,
            b: Optional[BMatrix] = None,
            clamp: bool = False
    ) -> EstimateReport:
        structure = data.design.structure
        tau_hat = self.point_estimate(data, contrast)
        v_hat = self.v_hat(data, contrast)

        v_tilde = None
        v_tilde_clamped = None
        if b is not None:
            v_tilde = self.v_tilde(data, contrast, b)
            if v_tilde < 0:
                logger.warning(f"Corrected variance estimate is negative ({v_tilde!r}); reported unclamped")
            if clamp:
                v_tilde_clamped = max(v_tilde, 0.0)

        means = self.observed_means(data)
        diagnostics = {
            serialize_treatment(z1, z2): float(means[a, b_])
            for a, z1 in enumerate(structure.z1_levels)
            for b_, z2 in enumerate(structure.z2_levels)
            if not np.isnan(means[a, b_])
        }
        logger.info(f"Estimate: tau_hat={tau_hat!r}, v_hat={v_hat!r}, v_tilde={v_tilde!r}")
        return EstimateReport(
            tau_hat=tau_hat,
            v_hat=v_hat,
            v_tilde=v_tilde,
            v_tilde_clamped=v_tilde_clamped,
            b_used=b.matrix.tolist() if b is not None else None,
            b_provenance=b.provenance.kind if b is not None else None,
            diagnostics=diagnostics,
        )


def get_estimators_service() -> EstimatorsService:
    return EstimatorsService()
