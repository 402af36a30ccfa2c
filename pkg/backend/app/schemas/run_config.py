from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, Field, PositiveFloat, PositiveInt, model_validator

from app.core.config import settings
from app.core.exceptions import ConfigParseError
from app.models.enums import Command


class RunConfig(BaseModel):
    """One CLI invocation; command-line values override the problem file"""

    problem_path: Path
    command: Command = Command.SOLVE
    out_dir: Path = Field(default_factory=lambda: Path(settings.OUTPUT_DIR))
    seed: int = settings.SEED
    grid: Optional[List[PositiveInt]] = None
    dt: Optional[PositiveFloat] = None
    tol: Optional[PositiveFloat] = None
    max_iters: Optional[PositiveInt] = None
    trials: Optional[PositiveInt] = None
    horizon: Optional[PositiveFloat] = None

    @model_validator(mode="after")
    def _check_paths(self):
        if not self.problem_path.is_file():
            raise ConfigParseError(str(self.problem_path), "problem file does not exist")
        return self
