import logging
from typing import List, Optional

import click

from api.controllers.output import INT_LIST, emit
from api.repositories.design_repository import get_design_repository
from api.services.bmatrix_service import B_MODES, get_bmatrix_service

logger = logging.getLogger(__name__)


@click.command("construct-b", help="Построение корректирующей матрицы B по размерам делянок")
@click.option("--sizes", type=INT_LIST, default=None, help="Размеры делянок через запятую, например 8,8,12,12")
@click.option("--design", "design_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Взять размеры из JSON дизайна")
@click.option("--mode", type=click.Choice(B_MODES + ("steps",)), default="minimax", show_default=True)
@click.option("--x", "x", type=INT_LIST, default=None,
              help="Знаковый вектор длины W-1 (порядок возрастания размеров), только для --mode steps")
@click.option("--a1", type=float, default=None, help="Только для --mode steps")
@click.option("--a2", type=float, default=None, help="Только для --mode steps")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Файл вывода; иначе stdout")
def construct_b(
        sizes: Optional[List[int]],
        design_path: Optional[str],
        mode: str,
        x: Optional[List[int]],
        a1: Optional[float],
        a2: Optional[float],
        out: Optional[str]
) -> None:
    if (sizes is None) == (design_path is None):
        raise click.UsageError("Give exactly one of --sizes and --design")
    if design_path is not None:
        sizes = list(get_design_repository().load_design(design_path).whole_plot_sizes)

    service = get_bmatrix_service()
    if mode == "steps":
        if x is None or a1 is None or a2 is None:
            raise click.UsageError("--mode steps needs --x, --a1 and --a2")
        b, psd = service.construct_steps(sizes, x, a1, a2), None
    else:
        if x is not None or a1 is not None or a2 is not None:
            raise click.UsageError("--x, --a1 and --a2 apply only to --mode steps")
        b, psd = service.build(sizes, mode)

    document = service.document(b, sizes, mode, psd)
    if not document.passed:
        logger.warning(f"B built with mode {mode} does not satisfy all checks for sizes {sizes}")
    emit(document, out)
