import copy
import sys
from pathlib import Path

import pytest

BACKEND = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(BACKEND))

from app.schemas.problem_file import ProblemFile  # noqa: E402
from app.services.problem_loader import build_problem, load_problem  # noqa: E402

CONFIGS = BACKEND / "configs"
BUNDLED = sorted(path.stem for path in CONFIGS.glob("*.toml"))

UNIT_GAME = {
    "name": "unit_game",
    "omegaX": {"lo": [0.0], "hi": [1.0]},
    "omegaY": {"lo": [0.0], "hi": [1.0]},
    "controls": {"A": [[-1.0], [0.0], [1.0]], "B": [[-1.0], [0.0], [1.0]]},
    "dynamics": {"kind": "eikonal", "lipschitz": 0.0, "bound": 1.0},
    "costs": {
        "discount": 1.0,
        "running": {"kind": "constant", "value": 1.0},
        "exitX": {"kind": "constant", "value": 0.0},
        "exitY": {"kind": "constant", "value": 0.0},
        "exitXY": {"kind": "constant", "value": 0.0},
    },
}


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def game_spec(**sections) -> ProblemFile:
    """The unit 1D x 1D eikonal game with some sections overridden"""
    return ProblemFile.model_validate(_merge(UNIT_GAME, sections))


def make_game(**sections):
    return build_problem(game_spec(**sections))


def constant(value: float) -> dict:
    return {"kind": "constant", "value": value}


def poly(*terms) -> dict:
    return {"kind": "polynomial", "terms": [{"coef": c, "powers": powers} for c, powers in terms]}


@pytest.fixture
def bundled():
    def _load(name: str):
        return load_problem(CONFIGS / f"{name}.toml")
    return _load


@pytest.fixture
def configs_dir() -> Path:
    return CONFIGS
