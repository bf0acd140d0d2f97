import logging
from pathlib import Path
from typing import Optional

import click

from core.config import settings
from api.dto.simulation_dto import SimulationSettings, StudyResult
from api.controllers.output import emit
from api.repositories.design_repository import get_design_repository
from api.repositories.results_repository import ResultsRepository
from api.services.simulation_service import PRESET_NAMES, SimulationService, get_simulation_service

logger = logging.getLogger(__name__)


def _write_study(result: StudyResult, out_dir: Path) -> None:
    repository = ResultsRepository(out_dir)
    repository.write_json("summary.json", result)
    repository.write_replicates(result.records)
    repository.write_boxplots(result.boxplots)


@click.command("simulate", help="Смещения Δ и Δ̃ по случайным популяциям; CSV и JSON для графиков")
@click.option("--preset", type=click.Choice(PRESET_NAMES, case_sensitive=False), default=None,
              help="Популяция из таблицы настроек")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON с preset или собственной популяцией")
@click.option("--all", "run_all", is_flag=True, help="Все популяции I..VIII в один каталог")
@click.option("--replicates", type=click.IntRange(min=1), default=None)
@click.option("--seed", type=click.IntRange(min=0, max=2 ** 64 - 1), default=None)
@click.option("--workers", type=click.IntRange(min=1), default=None)
@click.option("--b-source", type=click.Choice(["minimax", "naive", "balanced"]), default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Каталог результатов (по умолчанию SPLITPLOT_OUT_DIR)")
@click.option("--progress/--no-progress", default=None, help="Индикатор tqdm")
def simulate(
        preset: Optional[str],
        config_path: Optional[str],
        run_all: bool,
        replicates: Optional[int],
        seed: Optional[int],
        workers: Optional[int],
        b_source: Optional[str],
        out_dir: Optional[str],
        progress: Optional[bool]
) -> None:
    """
    Один прогон пишет summary.json, replicates.csv и boxplot.csv в --out.
    С --all каждая популяция получает свой подкаталог, а boxplot.csv общий.
    """
    if sum([preset is not None, config_path is not None, run_all]) != 1:
        raise click.UsageError("Give exactly one of --preset, --config and --all")

    service = get_simulation_service() if progress is None else SimulationService(progress=progress)
    overrides = {
        key: value for key, value in dict(
            replicates=replicates, seed=seed, workers=workers, b_source=b_source
        ).items() if value is not None
    }
    target = Path(out_dir if out_dir is not None else settings.app_settings.out_dir)

    if run_all:
        studies = [service.preset_settings(name, **overrides) for name in PRESET_NAMES]
    elif preset is not None:
        studies = [service.preset_settings(preset, **overrides)]
    else:
        config = get_design_repository().load_simulation_config(config_path)
        studies = [service.settings_from_config(config, **overrides)]

    results = [_run(service, study) for study in studies]

    if run_all:
        for result in results:
            _write_study(result, target / result.population)
        ResultsRepository(target).write_boxplots([box for result in results for box in result.boxplots])
    else:
        _write_study(results[0], target)

    emit({result.population: result.median_ratio for result in results})


def _run(service: SimulationService, study: SimulationSettings) -> StudyResult:
    logger.info(f"Running population {study.name}: {study.replicates} replicates, seed {study.seed}")
    return service.run_bias_study(study)


@click.command("presets", help="Таблица настроек популяций I..VIII в JSON")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def presets(out: Optional[str]) -> None:
    emit(SimulationService.preset_documents(), out)
