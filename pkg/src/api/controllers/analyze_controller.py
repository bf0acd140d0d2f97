import logging
from typing import Optional

import click

from core.exceptions import DomainError
from api.controllers.output import emit
from api.repositories.design_repository import get_design_repository
from api.services.bmatrix_service import B_MODES, get_bmatrix_service
from api.services.estimators_service import get_estimators_service
from models.design_model import ContrastSpec

logger = logging.getLogger(__name__)

_EXISTING_FILE = click.Path(exists=True, dir_okay=False)


@click.command(
    "analyze",
    help="Оценка контраста τ̂̄ и дисперсий V̂, Ṽ по наблюдённым данным одного назначения"
)
@click.option("--design", "design_path", type=_EXISTING_FILE, required=True, help="JSON дизайна")
@click.option("--data", "data_path", type=_EXISTING_FILE, required=True,
              help="CSV наблюдений: unit, whole_plot, z1, z2, y")
@click.option("--contrast", "contrast_path", type=_EXISTING_FILE, default=None,
              help="JSON контраста {'g': {'z1|z2': коэффициент}}; по умолчанию взаимодействие 2x2")
@click.option("--b", "b_path", type=_EXISTING_FILE, default=None, help="JSON с матрицей B в поле entries")
@click.option("--b-mode", type=click.Choice(B_MODES), default=None, help="Построить B вместо чтения из файла")
@click.option("--clamp", is_flag=True, help="Дополнительно вывести max(Ṽ, 0)")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Файл отчёта; иначе stdout")
def analyze(
        design_path: str,
        data_path: str,
        contrast_path: Optional[str],
        b_path: Optional[str],
        b_mode: Optional[str],
        clamp: bool,
        out: Optional[str]
) -> None:
    """
    Читает дизайн, данные и контраст, при необходимости строит или читает B.
    Без B отчёт содержит только τ̂̄ и V̂.
    """
    if b_path is not None and b_mode is not None:
        raise click.UsageError("--b and --b-mode are mutually exclusive")

    repository = get_design_repository()
    bmatrix_service = get_bmatrix_service()

    design = repository.load_design(design_path)
    data = repository.load_observed(data_path, design)
    contrast = repository.load_contrast(contrast_path) if contrast_path else ContrastSpec.interaction()

    b = None
    if b_path is not None:
        b = bmatrix_service.explicit(repository.load_b_matrix(b_path))
    elif b_mode is not None:
        b, psd = bmatrix_service.build(design.whole_plot_sizes, b_mode)
        if psd is False:
            logger.warning("Naive B is not PSD; Ṽ is not guaranteed to be conservative")
    if b is not None and b.size != design.n_plots:
        raise DomainError(f"B is {b.size}x{b.size} but the design has {design.n_plots} whole plots")

    report = get_estimators_service().estimate(data, contrast, b=b, clamp=clamp)
    emit(report, out)
