import logging
from pathlib import Path
from typing import Any, List, Optional, Union

import click
from pydantic import BaseModel

from api.repositories.design_repository import canonical_json

logger = logging.getLogger(__name__)


class IntListParam(click.ParamType):
    """Список целых через запятую: 8,8,12,12 или 1,1,-1"""
    name = "int-list"

    def convert(self, value: Any, param: Optional[click.Parameter], ctx: Optional[click.Context]) -> List[int]:
        if isinstance(value, (list, tuple)):
            return [int(v) for v in value]
        try:
            return [int(part) for part in str(value).split(",") if part.strip()]
        except ValueError:
            self.fail(f"expected comma-separated integers, got {value!r}", param, ctx)


INT_LIST = IntListParam()


def emit(payload: Union[BaseModel, list, dict], out: Optional[str] = None) -> None:
    """JSON в файл --out или в stdout"""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    elif isinstance(payload, list):
        payload = [item.model_dump(mode="json") if isinstance(item, BaseModel) else item for item in payload]
    text = canonical_json(payload)
    if out is None:
        click.echo(text, nl=False)
        return
    target = Path(out)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {target}")
