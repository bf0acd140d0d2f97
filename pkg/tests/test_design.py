import pytest
from pydantic import ValidationError

from core.exceptions import DomainError
from api.dto.design_dto import ContrastDocument, DesignDocument
from models.design_model import (
    ContrastSpec,
    FactorialStructure,
    SplitPlotDesign,
    parse_level,
    parse_treatment,
    serialize_level,
)


def _design(sizes, r1, r2) -> SplitPlotDesign:
    return SplitPlotDesign(
        structure=FactorialStructure.two_by_two(),
        whole_plot_sizes=tuple(sizes),
        r1=r1,
        r2=tuple(r2),
    )


class TestSchoolDesign:

    def test_counts(self, school_design):
        assert school_design.n_plots == 4
        assert school_design.n_units == 40
        assert school_design.m_bar == 10.0

    def test_is_valid_and_unbalanced(self, school_design, design_service):
        assert design_service.validate_design(school_design) == []
        assert not design_service.is_balanced(school_design)
        assert design_service.mean_whole_plot_size(school_design) == 10.0

    def test_canonical_units_are_contiguous(self, school_design):
        plots = school_design.canonical_unit_plot()
        assert plots[:8] == (0,) * 8
        assert plots[-12:] == (3,) * 12
        assert list(school_design.plot_units(2)) == list(range(16, 28))


class TestValidation:

    def test_balanced_design(self, design_a, design_service):
        assert design_service.validate_design(design_a) == []
        assert design_service.is_balanced(design_a)

    def test_replication_sum(self, design_service):
        one = {(0,): 1, (1,): 1}
        design = _design((2, 2, 2), {(0,): 2, (1,): 2}, [one] * 3)
        violations = design_service.validate_design(design)
        assert any("whole-plot replication sum" in v for v in violations)

    def test_single_unit_plot(self, design_service):
        one = {(0,): 1, (1,): 1}
        design = _design((1, 2, 2, 2), {(0,): 2, (1,): 2}, [{(0,): 1}, one, one, one])
        violations = design_service.validate_design(design)
        assert any("whole-plot size" in v for v in violations)
        assert any("r2_0(1)" in v for v in violations)

    def test_subplot_sum(self, design_service):
        one = {(0,): 1, (1,): 1}
        design = _design((2, 2, 3, 2), {(0,): 2, (1,): 2}, [one] * 4)
        violations = design_service.validate_design(design)
        assert violations == ["sub-plot replication sum: whole plot 2 sums to 2 != M_2=3"]


class TestContrast:

    def test_interaction_coefficients(self, interaction):
        assert interaction.coefficient((0,), (0,)) == 0.25
        assert interaction.coefficient((1,), (0,)) == -0.25
        assert interaction.coefficient((2,), (0,)) == 0.0

    def test_must_sum_to_zero(self):
        with pytest.raises(ValidationError):
            ContrastSpec(g={((0,), (0,)): 1.0, ((1,), (1,)): 0.5})

    def test_not_all_zero(self):
        with pytest.raises(ValidationError):
            ContrastSpec(g={((0,), (0,)): 0.0})


class TestLevels:

    def test_parse_and_serialize(self):
        assert parse_level("0-1") == (0, 1)
        assert serialize_level((2, 0)) == "2-0"
        assert parse_treatment("1|0-1") == ((1,), (0, 1))

    @pytest.mark.parametrize("text", ["a", "0|", "1-x"])
    def test_malformed(self, text):
        with pytest.raises(DomainError):
            parse_treatment(text) if "|" in text else parse_level(text)


class TestDocuments:

    def test_design_document_round_trip(self, school_design):
        document = DesignDocument.from_domain(school_design)
        assert document.r1 == {"0": 2, "1": 2}
        assert document.to_domain() == school_design

    def test_contrast_document(self, interaction):
        document = ContrastDocument.from_domain(interaction, FactorialStructure.two_by_two())
        assert document.g == {"0|0": 0.25, "0|1": -0.25, "1|0": -0.25, "1|1": 0.25}
        assert document.to_domain() == interaction
