import logging
import sys
from typing import List, Optional

import click
from pydantic import ValidationError

from core.config import settings
from core.exceptions import DomainError
from api.controllers.analyze_controller import analyze
from api.controllers.bmatrix_controller import construct_b
from api.controllers.design_controller import validate
from api.controllers.oracle_controller import oracle
from api.controllers.simulation_controller import presets, simulate

logging.basicConfig(
    level=logging.DEBUG if settings.app_settings.debug else settings.app_settings.log_level,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


class SplitPlotGroup(click.Group):
    """Ошибки предметной области -> код 2, всё остальное -> код 1"""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.exceptions.Abort, click.ClickException):
            raise
        except (DomainError, ValidationError) as e:
            logger.error(f"Invalid input: {e}")
            click.echo(f"Error: {e}", err=True)
            ctx.exit(2)
        except Exception as e:
            logger.exception(f"Internal error: {e}")
            click.echo(f"Internal error: {e}", err=True)
            ctx.exit(1)


@click.group(cls=SplitPlotGroup, help=settings.app_settings.app_name)
@click.version_option("1.0.0", prog_name="splitplot")
def cli() -> None:
    pass


cli.add_command(analyze)
cli.add_command(construct_b)
cli.add_command(simulate)
cli.add_command(presets)
cli.add_command(oracle)
cli.add_command(validate)


def run(argv: Optional[List[str]] = None) -> int:
    try:
        result = cli.main(args=argv, prog_name="splitplot", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
