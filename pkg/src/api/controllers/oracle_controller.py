import logging
from pathlib import Path
from typing import Optional, Tuple

import click

from api.controllers.output import emit
from api.repositories.design_repository import get_design_repository
from api.services.oracle_service import FIXTURE_KINDS, get_oracle_service

logger = logging.getLogger(__name__)


@click.command("oracle", help="Проверка формул полным перебором назначений на малом дизайне")
@click.option("--design", "design", default="B", show_default=True,
              help="A (2,2,2,2), B (2,2,3,3) или путь к JSON дизайна")
@click.option("--seed", type=click.IntRange(min=0, max=2 ** 64 - 1), default=None)
@click.option("--fixtures", type=click.IntRange(min=1), default=20, show_default=True,
              help="Число случайных таблиц на каждый вид")
@click.option("--kinds", type=click.Choice(FIXTURE_KINDS), multiple=True, default=("integer",),
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def oracle(
        ctx: click.Context,
        design: str,
        seed: Optional[int],
        fixtures: int,
        kinds: Tuple[str, ...],
        out: Optional[str]
) -> None:
    service = get_oracle_service()
    if design.upper() in ("A", "B"):
        target = design.upper()
    elif Path(design).is_file():
        target = get_design_repository().load_design(design)
    else:
        raise click.BadParameter(f"expected A, B or an existing design file, got {design!r}", param_hint="--design")

    report = service.run_suite(target, seed=seed, fixtures=fixtures, kinds=kinds)
    emit(report, out)
    if not report.passed:
        logger.error(f"Oracle suite failed {report.failed_checks} checks")
        ctx.exit(1)
