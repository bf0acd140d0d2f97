import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from core.config import settings
from core.exceptions import DomainError
from api.dto.simulation_dto import (
    BoxplotSummary,
    PresetDocument,
    ReplicateRecord,
    SimulationConfigDocument,
    SimulationSettings,
    StudyResult,
)
from api.services.bmatrix_service import BMatrixService
from api.services.outcomes_service import OutcomesService
from api.services.randomization_service import make_rng
from models.bmatrix_model import BMatrix
from models.design_model import ContrastSpec, SplitPlotDesign
from models.outcome_table_model import PotentialOutcomeTable
from models.population_model import PopulationSpec

logger = logging.getLogger(__name__)

_BASE_THETA = (10.0, 5.0, 9.0, 8.0)
_MIXED_THETA = ((10.0, 5.0, 9.0, 8.0), (5.0, 9.0, 10.0, 8.0), (10.0, 9.0, 8.0, 5.0), (10.0, 5.0, 8.0, 9.0))
_SIGMA2 = (2.5, 2.0, 2.0, 3.0)

# Средние θ_w по (00, 01, 10, 11), дисперсии и корреляции для четырёх округов
PRESETS: Dict[str, PopulationSpec] = {
    "I": PopulationSpec(theta=(_BASE_THETA,) * 4, sigma2=(2.0,) * 4, rho=(1.0,) * 4),
    "II": PopulationSpec(
        theta=((10.0, 5.0, 9.0, 8.0), (9.0, 7.0, 4.0, 6.0), (11.0, 8.0, 7.0, 8.0), (8.0, 7.0, 6.0, 9.0)),
        sigma2=_SIGMA2,
        rho=(0.5,) * 4,
        enforce_wp_means=1.0,
    ),
    "III": PopulationSpec(theta=_MIXED_THETA, sigma2=_SIGMA2, rho=(1.0,) * 4),
    "IV": PopulationSpec(theta=_MIXED_THETA, sigma2=_SIGMA2, rho=(0.5,) * 4),
    "V": PopulationSpec(theta=_MIXED_THETA, sigma2=_SIGMA2, rho=(0.2, 0.4, 0.6, 0.8)),
    "VI": PopulationSpec(theta=_MIXED_THETA, sigma2=_SIGMA2, rho=(0.0,) * 4),
    "VII": PopulationSpec(theta=_MIXED_THETA, sigma2=_SIGMA2, rho=(-0.3,) * 4),
    "VIII": PopulationSpec(theta=_MIXED_THETA, sigma2=_SIGMA2, rho=(-0.3, 0.3, -0.3, 0.3)),
}

PRESET_NAMES = tuple(PRESETS)


class SimulationService:
    """Моделирование смещений Δ (для V̂) и Δ̃ (для Ṽ) по популяциям"""

    def __init__(
            self,
            outcomes_service: Optional[OutcomesService] = None,
            bmatrix_service: Optional[BMatrixService] = None,
            progress: Optional[bool] = None
    ):
        self.outcomes = outcomes_service or OutcomesService()
        self.bmatrix = bmatrix_service or BMatrixService()
        self.progress = progress if progress is not None else settings.simulation_defaults.progress
        self.ratio_floor = settings.simulation_defaults.ratio_floor

    # ---------------------------------------------------------------- presets

    def preset(self, name: str) -> Tuple[SplitPlotDesign, ContrastSpec, PopulationSpec]:
        key = name.strip().upper()
        if key not in PRESETS:
            raise DomainError(f"Unknown population preset '{name}', expected one of {', '.join(PRESET_NAMES)}")
        return SplitPlotDesign.school(), ContrastSpec.interaction(), PRESETS[key]

    def preset_settings(self, name: str, **overrides) -> SimulationSettings:
        design, contrast, population = self.preset(name)
        return SimulationSettings(
            name=name.strip().upper(),
            design=design,
            contrast=contrast,
            population=population,
            **overrides
        )

    def settings_from_config(self, config: SimulationConfigDocument, **overrides) -> SimulationSettings:
        """Настройки из файла конфигурации; явные параметры командной строки имеют приоритет"""
        fields = {
            key: value for key, value in dict(
                replicates=config.replicates,
                seed=config.seed,
                b_source=config.b_source,
                b_entries=config.b_entries,
                workers=config.workers,
            ).items() if value is not None
        }
        fields.update({key: value for key, value in overrides.items() if value is not None})

        if config.preset is not None:
            design, contrast, population = self.preset(config.preset)
            name = config.name or config.preset.strip().upper()
        else:
            design, contrast, population = SplitPlotDesign.school(), ContrastSpec.interaction(), config.population
            name = config.name or "custom"
        if config.design is not None:
            design = config.design.to_domain()
        if config.contrast is not None:
            contrast = config.contrast.to_domain()
        return SimulationSettings(name=name, design=design, contrast=contrast, population=population, **fields)

    @staticmethod
    def preset_documents() -> List[PresetDocument]:
        return [
            PresetDocument(
                name=name,
                theta=[list(row) for row in spec.theta],
                sigma2=list(spec.sigma2),
                rho=list(spec.rho),
                enforce_wp_means=spec.enforce_wp_means,
            )
            for name, spec in PRESETS.items()
        ]

    # ------------------------------------------------------------ populations

    def sample_population(
            self,
            spec: PopulationSpec,
            design: SplitPlotDesign,
            seed: int,
            replicate: int
    ) -> PotentialOutcomeTable:
        """Y_i = θ_w + L_w ε_i; при ρ_w = 1 один общий нормальный множитель на единицу"""
        structure = design.structure
        k = structure.k1 * structure.k2
        if spec.n_plots != design.n_plots:
            raise DomainError(f"Population describes {spec.n_plots} whole plots, design has {design.n_plots}")
        if spec.n_treatments != k:
            raise DomainError(f"Population has {spec.n_treatments} treatments per unit, design has {k}")

        rng = make_rng(seed, replicate)
        blocks = []
        for w, size in enumerate(design.whole_plot_sizes):
            theta = np.asarray(spec.theta[w], dtype=float)
            if spec.rho[w] == 1.0:
                shared = rng.standard_normal(size)
                block = theta[None, :] + np.sqrt(spec.sigma2[w]) * shared[:, None]
            else:
                try:
                    factor = np.linalg.cholesky(spec.covariance(w))
                except np.linalg.LinAlgError:
                    raise DomainError(f"Covariance of whole plot {w} is not positive definite")
                block = theta[None, :] + rng.standard_normal((size, k)) @ factor.T
            blocks.append(block)

        y = np.concatenate(blocks).reshape(design.n_units, structure.k1, structure.k2)
        return PotentialOutcomeTable(design=design, unit_whole_plot=design.canonical_unit_plot(), y=y)

    def enforce_wp_means(
            self,
            table: PotentialOutcomeTable,
            contrast: ContrastSpec,
            target: float
    ) -> PotentialOutcomeTable:
        """Сдвиг Y_i для последней комбинации уровней так, что τ̄_w = target в каждой делянке"""
        design = table.design
        g = contrast.as_array(design.structure)
        channel = g[-1, -1]
        if channel == 0:
            raise DomainError("Contrast has zero weight on the last treatment combination; cannot enforce means")
        shifts = (target - self.outcomes.whole_plot_contrasts(table, contrast)) / channel
        y = np.array(table.y)
        y[:, -1, -1] += shifts[table.plot_index]
        return PotentialOutcomeTable(design=design, unit_whole_plot=table.unit_whole_plot, y=y)

    # ------------------------------------------------------------------ study

    def correction_matrix(self, study: SimulationSettings) -> BMatrix:
        if study.b_source == "explicit":
            return self.bmatrix.explicit(study.b_entries)
        sizes = study.design.whole_plot_sizes
        b, psd = self.bmatrix.build(sizes, study.b_source)
        if psd is False:
            logger.warning(f"Naive B for sizes {sizes} is not PSD; Δ̃ may be negative")
        return b

    def _replicate(self, study: SimulationSettings, b: BMatrix, replicate: int) -> ReplicateRecord:
        table = self.sample_population(study.population, study.design, study.seed, replicate)
        if study.population.enforce_wp_means is not None:
            table = self.enforce_wp_means(table, study.contrast, study.population.enforce_wp_means)

        delta = self.outcomes.delta(table, study.contrast)
        delta_tilde = self.outcomes.delta_tilde(table, study.contrast, b)
        tau_w = self.outcomes.whole_plot_contrasts(table, study.contrast)
        unit_tau = self.outcomes.unit_contrasts(table, study.contrast)
        within = max(float(np.ptp(unit_tau[table.plot_units(w)])) for w in range(study.design.n_plots))
        return ReplicateRecord(
            replicate=replicate,
            delta=delta,
            delta_tilde=delta_tilde,
            ratio=delta_tilde / delta if delta >= self.ratio_floor else None,
            tau_bar=self.outcomes.finite_population_contrast(table, study.contrast),
            wp_contrast_spread=float(np.ptp(tau_w)),
            within_plot_spread=within,
        )

    @staticmethod
    def five_numbers(population: str, estimator: str, values: np.ndarray) -> BoxplotSummary:
        q = np.percentile(values, [0, 25, 50, 75, 100], method="linear")
        return BoxplotSummary(
            population=population,
            estimator=estimator,
            min=float(q[0]),
            q1=float(q[1]),
            median=float(q[2]),
            q3=float(q[3]),
            max=float(q[4]),
            count=int(values.size),
        )

    def run_bias_study(self, study: SimulationSettings) -> StudyResult:
        b = self.correction_matrix(study)
        indices = range(study.replicates)
        progress = dict(total=study.replicates, desc=f"population {study.name}", disable=not self.progress)

        if study.workers > 1:
            with ThreadPoolExecutor(max_workers=study.workers) as pool:
                records = list(tqdm(pool.map(lambda r: self._replicate(study, b, r), indices), **progress))
        else:
            records = [self._replicate(study, b, r) for r in tqdm(indices, **progress)]

        deltas = np.array([r.delta for r in records])
        deltas_tilde = np.array([r.delta_tilde for r in records])
        ratios = np.array([r.ratio for r in records if r.ratio is not None])
        if np.any(deltas < -1e-12) or (b.provenance.kind != "naive_extension" and np.any(deltas_tilde < -1e-12)):
            logger.warning(f"Population {study.name}: negative bias encountered")

        boxplots = [
            self.five_numbers(study.name, "v_hat", deltas),
            self.five_numbers(study.name, "v_tilde", deltas_tilde),
        ]
        median_ratio = None
        if ratios.size:
            boxplots.append(self.five_numbers(study.name, "ratio", ratios))
            median_ratio = float(np.median(ratios))

        logger.info(
            f"Population {study.name}: {study.replicates} replicates, median bias ratio {median_ratio!r}"
        )
        return StudyResult(
            population=study.name,
            seed=study.seed,
            replicates=study.replicates,
            b_source=study.b_source,
            b_entries=b.matrix.tolist(),
            lambda_max=b.lambda_max,
            records=records,
            boxplots=boxplots,
            median_ratio=median_ratio,
            missing_ratios=len(records) - int(ratios.size),
        )


def get_simulation_service() -> SimulationService:
    return SimulationService()
