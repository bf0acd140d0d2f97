from typing import Optional

import click

from api.controllers.output import emit
from api.dto.design_dto import ValidationDocument
from api.repositories.design_repository import get_design_repository
from api.services.bmatrix_service import get_bmatrix_service
from api.services.design_service import get_design_service


@click.command("validate", help="Проверка ограничений дизайна и существования B")
@click.option("--design", "design_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def validate(ctx: click.Context, design_path: str, out: Optional[str]) -> None:
    """Код выхода 2, если дизайн нарушает ограничения"""
    design = get_design_repository().load_design(design_path)
    service = get_design_service()
    violations = service.validate_design(design)

    sizes = design.whole_plot_sizes
    b_exists = None
    if len(sizes) >= 3 and min(sizes) >= 1:
        b_exists = get_bmatrix_service().exists_b(sizes)

    emit(ValidationDocument(
        valid=not violations,
        balanced=service.is_balanced(design),
        n_plots=design.n_plots,
        n_units=design.n_units,
        mean_whole_plot_size=service.mean_whole_plot_size(design),
        violations=violations,
        b_exists=b_exists,
    ), out)
    if violations:
        ctx.exit(2)
