import logging
import math
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from core.config import settings
from core.exceptions import DomainError
from api.dto.oracle_dto import CheckReport, FixtureReport, OracleReport
from api.services.bmatrix_service import BMatrixService
from api.services.estimators_service import EstimatorsService
from api.services.outcomes_service import OutcomesService
from api.services.randomization_service import RandomizationService, make_rng
from models.assignment_model import ObservedDataset
from models.bmatrix_model import BMatrix
from models.design_model import ContrastSpec, FactorialStructure, SplitPlotDesign
from models.oracle_model import OracleFixture
from models.outcome_table_model import PotentialOutcomeTable

logger = logging.getLogger(__name__)

Statistic = Union[str, Callable[[ObservedDataset], float]]

FIXTURE_KINDS = ("integer", "additive", "strict", "constant")


class EnumerationSummary(NamedTuple):
    """Статистики по каждому назначению одного перебора"""
    probabilities: np.ndarray
    tau_hat: np.ndarray
    v_hat: np.ndarray
    v_tilde: Optional[np.ndarray]
    h: np.ndarray
    s_hat: np.ndarray
    means: np.ndarray
    identity_gap: np.ndarray


def _fsum_expectation(probabilities: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Σ p · value по первой оси с math.fsum: результат не зависит от порядка"""
    n = probabilities.shape[0]
    flat = (probabilities[:, None] * values.reshape(n, -1)).T
    return np.array([math.fsum(column) for column in flat]).reshape(values.shape[1:])


class OracleService:
    """Точная проверка тождеств для ожиданий полным перебором назначений"""

    def __init__(
            self,
            randomization_service: Optional[RandomizationService] = None,
            outcomes_service: Optional[OutcomesService] = None,
            estimators_service: Optional[EstimatorsService] = None,
            bmatrix_service: Optional[BMatrixService] = None,
            tolerance: Optional[float] = None,
            abs_floor: Optional[float] = None
    ):
        numeric = settings.numeric_settings
        self.randomization = randomization_service or RandomizationService()
        self.outcomes = outcomes_service or OutcomesService()
        self.estimators = estimators_service or EstimatorsService()
        self.bmatrix = bmatrix_service or BMatrixService()
        self.tolerance = tolerance if tolerance is not None else numeric.enumeration_tolerance
        self.abs_floor = abs_floor if abs_floor is not None else numeric.enumeration_abs_floor
        self._b_cache: Dict[Tuple[int, ...], BMatrix] = {}

    # -------------------------------------------------------------- fixtures

    @staticmethod
    def oracle_design(name: str) -> SplitPlotDesign:
        structure = FactorialStructure.two_by_two()
        one_each = {(0,): 1, (1,): 1}
        if name.upper() == "A":
            return SplitPlotDesign(
                structure=structure,
                whole_plot_sizes=(2, 2, 2, 2),
                r1={(0,): 2, (1,): 2},
                r2=(one_each,) * 4,
            )
        if name.upper() == "B":
            return SplitPlotDesign(
                structure=structure,
                whole_plot_sizes=(2, 2, 3, 3),
                r1={(0,): 2, (1,): 2},
                r2=(one_each, one_each, {(0,): 1, (1,): 2}, {(0,): 1, (1,): 2}),
            )
        raise DomainError(f"Unknown oracle design '{name}', expected A or B")

    def minimax_for(self, design: SplitPlotDesign) -> BMatrix:
        key = tuple(design.whole_plot_sizes)
        if key not in self._b_cache:
            self._b_cache[key] = self.bmatrix.minimax_b(key)
        return self._b_cache[key]

    def random_fixture(
            self,
            design: SplitPlotDesign,
            seed: int,
            index: int,
            kind: str = "integer",
            with_b: bool = True
    ) -> OracleFixture:
        """
        Случайная целочисленная таблица и контраст для перебора.

        kind: integer (entries 0..9), additive (between-whole-plot additive),
        strict (strictly additive) or constant.
        """
        if kind not in FIXTURE_KINDS:
            raise DomainError(f"Unknown fixture kind '{kind}', expected one of {FIXTURE_KINDS}")
        rng = make_rng(seed, index)
        structure = design.structure
        k1, k2, n = structure.k1, structure.k2, design.n_units
        unit_plot = design.canonical_unit_plot()

        if kind == "integer":
            table = PotentialOutcomeTable(
                design=design,
                unit_whole_plot=unit_plot,
                y=rng.integers(0, 10, size=(n, k1, k2)).astype(float),
            )
        elif kind == "additive":
            table = self.outcomes.make_between_wp_additive(
                design,
                base_row=rng.integers(0, 10, size=k1 * k2),
                wp_shifts=rng.integers(0, 10, size=design.n_plots),
                deviations=rng.integers(0, 10, size=(n, k1, k2)),
            )
        elif kind == "strict":
            table = self.outcomes.make_strictly_additive(
                design,
                effects=rng.integers(0, 10, size=k1 * k2),
                baseline=rng.integers(0, 10, size=n),
            )
        else:
            table = PotentialOutcomeTable.constant(design, float(rng.integers(0, 10)))

        weights = rng.integers(-3, 4, size=k1 * k2)
        weights[-1] = -weights[:-1].sum()
        if not weights.any():
            contrast = ContrastSpec.interaction()
        else:
            treatments = structure.treatments()
            contrast = ContrastSpec(g={t: float(v) for t, v in zip(treatments, weights) if v != 0})

        b = self.minimax_for(design) if with_b and design.n_plots >= 3 else None
        return OracleFixture(table=table, contrast=contrast, b_matrix=b, label=f"{kind}-{seed}-{index}")

    # ------------------------------------------------------------ enumeration

    def _assignments(self, fixture: OracleFixture) -> Iterable[Tuple[ObservedDataset, float]]:
        for assignment, probability in self.randomization.enumerate_assignments(fixture.design):
            yield self.randomization.observe(fixture.table, assignment, validate=False), probability

    def _named_statistic(self, fixture: OracleFixture, name: str) -> Callable[[ObservedDataset], float]:
        contrast = fixture.contrast
        if name == "one":
            return lambda data: 1.0
        if name == "tau_hat":
            return lambda data: self.estimators.point_estimate(data, contrast)
        if name == "v_hat":
            return lambda data: self.estimators.v_hat(data, contrast)
        if name == "v_tilde":
            if fixture.b_matrix is None:
                raise DomainError("Fixture has no correction matrix for v_tilde")
            return lambda data: self.estimators.v_tilde(data, contrast, fixture.b_matrix)
        raise DomainError(f"Unknown statistic '{name}'")

    def exact_expectation(self, fixture: OracleFixture, statistic: Statistic) -> float:
        function = self._named_statistic(fixture, statistic) if isinstance(statistic, str) else statistic
        terms = [probability * float(function(data)) for data, probability in self._assignments(fixture)]
        return math.fsum(terms)

    def exact_variance(self, fixture: OracleFixture) -> float:
        summary = self.enumerate_statistics(fixture)
        return self._variance(summary)

    @staticmethod
    def _variance(summary: EnumerationSummary) -> float:
        p = summary.probabilities
        mean = math.fsum(p * summary.tau_hat)
        return math.fsum(p * (summary.tau_hat - mean) ** 2)

    def enumerate_statistics(self, fixture: OracleFixture) -> EnumerationSummary:
        """Один проход по всем назначениям со всеми нужными статистиками"""
        design = fixture.design
        structure = design.structure
        contrast = fixture.contrast
        rows = {key: [] for key in EnumerationSummary._fields}

        for data, probability in self._assignments(fixture):
            rows["probabilities"].append(probability)
            rows["tau_hat"].append(self.estimators.point_estimate(data, contrast))
            rows["v_hat"].append(self.estimators.v_hat(data, contrast))
            if fixture.b_matrix is not None:
                rows["v_tilde"].append(self.estimators.v_tilde(data, contrast, fixture.b_matrix))
            rows["h"].append(self.estimators.h_matrix(data, contrast))
            rows["s_hat"].append(self.estimators.s_hat_matrices(data))
            rows["means"].append(self.estimators.observed_means(data))
            rows["identity_gap"].append(max(
                abs(self.estimators.ybar_obs(data, z1, z2) - self.estimators.ubar_obs(data, z1, z2))
                for z1, z2 in structure.treatments()
            ))

        return EnumerationSummary(
            probabilities=np.array(rows["probabilities"]),
            tau_hat=np.array(rows["tau_hat"]),
            v_hat=np.array(rows["v_hat"]),
            v_tilde=np.array(rows["v_tilde"]) if fixture.b_matrix is not None else None,
            h=np.stack(rows["h"]),
            s_hat=np.stack(rows["s_hat"]),
            means=np.stack(rows["means"]),
            identity_gap=np.array(rows["identity_gap"]),
        )

    # ----------------------------------------------------------------- checks

    def _compare(self, name: str, enumerated, formula, detail: Optional[str] = None) -> CheckReport:
        enumerated = np.atleast_1d(np.asarray(enumerated, dtype=float))
        formula = np.atleast_1d(np.asarray(formula, dtype=float))
        errors = np.abs(enumerated - formula)
        tolerances = np.maximum(self.tolerance * np.maximum(np.abs(enumerated), np.abs(formula)), self.abs_floor)
        worst = int(np.argmax(errors / tolerances))
        return CheckReport(
            name=name,
            enumerated=float(enumerated.flat[worst]),
            formula=float(formula.flat[worst]),
            abs_error=float(errors.flat[worst]),
            tolerance=float(tolerances.flat[worst]),
            passed=bool(np.all(errors <= tolerances)),
            detail=detail,
        )

    def _summary(self, fixture: OracleFixture, summary: Optional[EnumerationSummary]) -> EnumerationSummary:
        return summary if summary is not None else self.enumerate_statistics(fixture)

    def check_point_estimate(self, fixture: OracleFixture, summary: Optional[EnumerationSummary] = None) -> CheckReport:
        summary = self._summary(fixture, summary)
        expectation = math.fsum(summary.probabilities * summary.tau_hat)
        tau = self.outcomes.finite_population_contrast(fixture.table, fixture.contrast)
        return self._compare("point_estimate", expectation, tau)

    def check_variance_formula(self, fixture: OracleFixture, summary: Optional[EnumerationSummary] = None) -> CheckReport:
        summary = self._summary(fixture, summary)
        return self._compare(
            "variance_formula",
            self._variance(summary),
            self.outcomes.theoretical_variance(fixture.table, fixture.contrast),
        )

    def check_v_hat_bias(self, fixture: OracleFixture, summary: Optional[EnumerationSummary] = None) -> CheckReport:
        summary = self._summary(fixture, summary)
        delta = self.outcomes.delta(fixture.table, fixture.contrast)
        return self._compare(
            "v_hat_bias",
            math.fsum(summary.probabilities * summary.v_hat),
            self._variance(summary) + delta,
            detail=f"delta={delta!r}",
        )

    def check_v_tilde_bias(self, fixture: OracleFixture, summary: Optional[EnumerationSummary] = None) -> CheckReport:
        if fixture.b_matrix is None:
            raise DomainError("Fixture has no correction matrix")
        verification = self.bmatrix.verify_c1_c2_c3(fixture.b_matrix, fixture.design.whole_plot_sizes)
        if not verification.passed:
            raise DomainError("Correction matrix fails the (c1)-(c3) conditions")
        summary = self._summary(fixture, summary)
        delta_tilde = self.outcomes.delta_tilde(fixture.table, fixture.contrast, fixture.b_matrix)
        return self._compare(
            "v_tilde_bias",
            math.fsum(summary.probabilities * summary.v_tilde),
            self._variance(summary) + delta_tilde,
            detail=f"delta_tilde={delta_tilde!r}",
        )

    def check_cross_product(
            self,
            fixture: OracleFixture,
            w: int,
            w_star: int,
            summary: Optional[EnumerationSummary] = None
    ) -> CheckReport:
        if w == w_star:
            raise DomainError("Cross products are defined only for distinct whole plots")
        summary = self._summary(fixture, summary)
        tau_w = self.outcomes.whole_plot_contrasts(fixture.table, fixture.contrast)
        return self._compare(
            f"cross_product[{w},{w_star}]",
            math.fsum(summary.probabilities * summary.h[:, w, w_star]),
            tau_w[w] * tau_w[w_star],
        )

    def check_cross_products(self, fixture: OracleFixture, summary: Optional[EnumerationSummary] = None) -> CheckReport:
        """Все пары w != w* сразу; в отчёте худшая пара"""
        summary = self._summary(fixture, summary)
        tau_w = self.outcomes.whole_plot_contrasts(fixture.table, fixture.contrast)
        expected = _fsum_expectation(summary.probabilities, summary.h)
        off = ~np.eye(fixture.design.n_plots, dtype=bool)
        return self._compare("cross_products", expected[off], np.outer(tau_w, tau_w)[off])

    def check_observed_mean_identity(
            self,
            fixture: OracleFixture,
            summary: Optional[EnumerationSummary] = None
    ) -> CheckReport:
        summary = self._summary(fixture, summary)
        return self._compare(
            "observed_mean_identity",
            float(summary.identity_gap.max()),
            0.0,
            detail="max over assignments and treatments",
        )

    def check_s_hat_expectation(self, fixture: OracleFixture, summary: Optional[EnumerationSummary] = None) -> CheckReport:
        summary = self._summary(fixture, summary)
        estimable = fixture.design.r1_array >= 2
        expected = _fsum_expectation(summary.probabilities, np.nan_to_num(summary.s_hat))
        formula = self.outcomes.s_hat_expectation(fixture.table)
        return self._compare("s_hat_expectation", expected[estimable], formula[estimable])

    def check_mean_covariance(self, fixture: OracleFixture, summary: Optional[EnumerationSummary] = None) -> CheckReport:
        summary = self._summary(fixture, summary)
        n = summary.probabilities.shape[0]
        means = summary.means.reshape(n, -1)
        centre = _fsum_expectation(summary.probabilities, means)
        centered = means - centre
        products = np.einsum('ni,nj->nij', centered, centered)
        return self._compare(
            "mean_covariance",
            _fsum_expectation(summary.probabilities, products),
            self.outcomes.observed_mean_covariance(fixture.table),
        )

    def check_fixture(self, fixture: OracleFixture, kind: str = "custom") -> FixtureReport:
        summary = self.enumerate_statistics(fixture)
        checks = [
            self.check_point_estimate(fixture, summary),
            self.check_variance_formula(fixture, summary),
            self.check_v_hat_bias(fixture, summary),
        ]
        if fixture.b_matrix is not None:
            checks.append(self.check_v_tilde_bias(fixture, summary))
        checks += [
            self.check_cross_products(fixture, summary),
            self.check_observed_mean_identity(fixture, summary),
            self.check_s_hat_expectation(fixture, summary),
            self.check_mean_covariance(fixture, summary),
        ]
        failed = [check.name for check in checks if not check.passed]
        if failed:
            logger.warning(f"Fixture {fixture.label} failed checks: {failed}")
        return FixtureReport(label=fixture.label, kind=kind, checks=checks)

    def run_suite(
            self,
            design: Union[str, SplitPlotDesign],
            seed: Optional[int] = None,
            fixtures: int = 20,
            kinds: Sequence[str] = ("integer",)
    ) -> OracleReport:
        if fixtures < 1:
            raise DomainError(f"At least one fixture is required, got {fixtures}")
        label = design if isinstance(design, str) else "custom"
        resolved = self.oracle_design(design) if isinstance(design, str) else design
        seed = seed if seed is not None else settings.app_settings.default_seed

        reports: List[FixtureReport] = []
        index = 0
        for kind in kinds:
            for _ in range(fixtures):
                fixture = self.random_fixture(resolved, seed, index, kind)
                reports.append(self.check_fixture(fixture, kind))
                index += 1

        failed = sum(1 for report in reports for check in report.checks if not check.passed)
        logger.info(f"Oracle suite on design {label}: {len(reports)} fixtures, {failed} failed checks")
        return OracleReport(
            design=label,
            seed=seed,
            assignment_count=self.randomization.assignment_count(resolved),
            fixtures=reports,
            failed_checks=failed,
            passed=failed == 0,
        )


def get_oracle_service() -> OracleService:
    return OracleService()
